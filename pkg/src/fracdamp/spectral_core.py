"""Periodic grids, Fourier multipliers and the energy-space norms.

A :class:`TorusGrid` of side ``box_len`` stands in for R^d.  Fields are
sampled at ``x_j = -box_len/2 + j*h`` and transformed with the unitary DFT,
so that ``sum |values|^2 h^d == sum |spectrum|^2 h^d``.  All spectral arrays
use numpy's FFT ordering; :attr:`TorusGrid.freqs` gives the sorted lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np

from .errors import ConfigurationError, NumericDomainError

# closed-inclusive membership needs a little room for roundoff in |xi|
_MEMBERSHIP_RTOL = 1e-12


def _is_power_of_two(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TorusGrid:
    d: int
    n: int
    box_len: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigurationError(f"dimension must be 1 or 2, got {self.d}", "grid.d")
        if not isinstance(self.n, (int, np.integer)) or self.n < 8 or not _is_power_of_two(int(self.n)):
            raise ConfigurationError(f"n must be a power of two >= 8, got {self.n}", "grid.n")
        if not (self.box_len > 0 and math.isfinite(self.box_len)):
            raise ConfigurationError(f"box_len must be positive, got {self.box_len}", "grid.box_len")

    @property
    def spacing(self) -> float:
        return self.box_len / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @cached_property
    def coords(self) -> np.ndarray:
        """Per-axis sample positions, starting at ``-box_len/2``."""
        return -0.5 * self.box_len + self.spacing * np.arange(self.n)

    @cached_property
    def freqs(self) -> np.ndarray:
        """Sorted per-axis frequencies ``2*pi*k/box_len`` for k = -n/2 .. n/2-1."""
        k = np.arange(-self.n // 2, self.n // 2)
        return 2.0 * np.pi * k / self.box_len

    @cached_property
    def fft_freqs(self) -> np.ndarray:
        """Per-axis frequencies in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)

    @property
    def max_abs_freq(self) -> float:
        return math.pi * self.n / self.box_len

    @cached_property
    def xi_sq(self) -> np.ndarray:
        """|xi|^2 on the full lattice (FFT order, grid shape)."""
        k = self.fft_freqs
        if self.d == 1:
            out = k**2
        else:
            out = k[:, None] ** 2 + k[None, :] ** 2
        out.setflags(write=False)
        return out

    @cached_property
    def xi_abs(self) -> np.ndarray:
        out = np.sqrt(self.xi_sq)
        out.setflags(write=False)
        return out

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True at every lattice point carrying an unpaired Nyquist index."""
        idx = np.zeros(self.n, dtype=bool)
        idx[self.n // 2] = True
        if self.d == 1:
            return idx
        return idx[:, None] | idx[None, :]

    def mesh(self):
        """Coordinate arrays broadcast to the grid shape."""
        if self.d == 1:
            return (self.coords,)
        return tuple(np.meshgrid(self.coords, self.coords, indexing="ij"))

    def describe(self) -> dict:
        return {"d": self.d, "n": int(self.n), "box_len": float(self.box_len)}


def make_grid(d: int, n: int, box_len: float) -> TorusGrid:
    return TorusGrid(int(d), int(n), float(box_len))


def fft(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    return np.fft.fftn(values, axes=tuple(range(grid.d)), norm="ortho")


def ifft(grid: TorusGrid, spectrum: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(spectrum, axes=tuple(range(grid.d)), norm="ortho")


def _frozen(a):
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex samples on a grid with a lazily computed unitary spectrum."""

    grid: TorusGrid
    values: np.ndarray
    _spectrum: Union[np.ndarray, None] = field(default=None, repr=False)

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != self.grid.shape:
            raise ConfigurationError(
                f"field shape {values.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values)
        if self._spectrum is not None:
            object.__setattr__(self, "_spectrum", _frozen(self._spectrum))

    @classmethod
    def from_spectrum(cls, grid: TorusGrid, spectrum: np.ndarray) -> "SpectralField":
        return cls(grid, ifft(grid, spectrum), spectrum)

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "SpectralField":
        z = np.zeros(grid.shape, dtype=complex)
        return cls(grid, z, z)

    @classmethod
    def plane_wave(cls, grid: TorusGrid, index) -> "SpectralField":
        """The lattice mode ``exp(i xi.x)`` for an integer wave index (per axis)."""
        index = np.atleast_1d(index)
        phase = 0.0
        for k, x in zip(index, grid.mesh()):
            phase = phase + 2.0 * np.pi * k / grid.box_len * x
        return cls(grid, np.exp(1j * phase))

    @property
    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            object.__setattr__(self, "_spectrum", _frozen(fft(self.grid, self.values)))
        return self._spectrum

    def __add__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.values)

    def pointwise(self, weights) -> "SpectralField":
        """Multiply samples by a real or complex array (e.g. a damping coefficient)."""
        return SpectralField(self.grid, self.values * weights)


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ConfigurationError("fields live on different grids")


def frac_symbol_value(xi, s: float, role: str = "full") -> float:
    """(|xi|^2 + 1)^(s/2) for ``role='full'``, (|xi|^2 + 1)^(s/4) for ``'half'``."""
    xi_sq = float(np.sum(np.square(np.atleast_1d(np.asarray(xi, dtype=float)))))
    return (xi_sq + 1.0) ** (_role_exponent(s, role))


def _role_exponent(s, role):
    if role == "full":
        return s / 2.0
    if role == "half":
        return s / 4.0
    raise ConfigurationError(f"unknown symbol role {role!r}")


def symbol(grid: TorusGrid, s: float, role: str = "full") -> np.ndarray:
    """Symbol values on the lattice, FFT order."""
    return (grid.xi_sq + 1.0) ** _role_exponent(s, role)


Multiplier = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


def _multiplier_array(grid, m):
    arr = m(grid.xi_abs) if callable(m) else m
    arr = np.broadcast_to(np.asarray(arr), grid.shape)
    if not np.all(np.isfinite(arr)):
        raise NumericDomainError("multiplier is not finite on the lattice")
    return arr


def apply_multiplier(f: SpectralField, m: Multiplier) -> SpectralField:
    """Return F^-1 m F f.

    ``m`` is either an array of lattice values (FFT order) or a callable
    evaluated on the array of |xi|.
    """
    spec = f.spectrum * _multiplier_array(f.grid, m)
    return SpectralField.from_spectrum(f.grid, spec)


def annulus_mask(grid: TorusGrid, lam: float, s: float) -> np.ndarray:
    """Lattice membership in {xi : |(|xi|^2+1)^(1/2) - lam^(1/s)| <= 1}."""
    if lam < 0 or s < 1:
        raise ConfigurationError("annulus needs lam >= 0 and s >= 1")
    mu = np.sqrt(grid.xi_sq + 1.0)
    centre = lam ** (1.0 / s)
    return np.abs(mu - centre) <= 1.0 + _MEMBERSHIP_RTOL * max(1.0, centre)


def ball_mask(grid: TorusGrid, radius: float) -> np.ndarray:
    if radius < 0:
        raise ConfigurationError("ball radius must be >= 0")
    return grid.xi_abs <= radius * (1.0 + _MEMBERSHIP_RTOL) + 1e-300


def project_annulus(f: SpectralField, lam: float, s: float) -> SpectralField:
    return apply_multiplier(f, annulus_mask(f.grid, lam, s).astype(float))


def project_ball(f: SpectralField, radius: float) -> SpectralField:
    return apply_multiplier(f, ball_mask(f.grid, radius).astype(float))


def inner(f: SpectralField, g: SpectralField) -> complex:
    """L^2 inner product, linear in the first argument."""
    _check_same_grid(f, g)
    return complex(np.vdot(g.values, f.values)) * f.grid.cell_volume


def l2_norm(f: SpectralField) -> float:
    return float(np.linalg.norm(f.values.ravel())) * math.sqrt(f.grid.cell_volume)


def l2_norm_on(f: SpectralField, mask: np.ndarray) -> float:
    """L^2 norm restricted to the sample set ``mask``."""
    return float(np.linalg.norm(f.values[mask])) * math.sqrt(f.grid.cell_volume)


def hs_norm(f: SpectralField, s: float) -> float:
    """H^{s/2} norm, defined as the L^2 norm of (-Delta+1)^{s/4} f."""
    weighted = f.spectrum * symbol(f.grid, s, "half")
    return float(np.linalg.norm(weighted.ravel())) * math.sqrt(f.grid.cell_volume)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Energy-space pair (u1, u2) in H^{s/2} x L^2."""

    u1: SpectralField
    u2: SpectralField
    s: float

    def __post_init__(self):
        if self.u1.grid != self.u2.grid:
            raise ConfigurationError("state components live on different grids")

    @property
    def grid(self) -> TorusGrid:
        return self.u1.grid

    def __add__(self, other):
        return StateVector(self.u1 + other.u1, self.u2 + other.u2, self.s)

    def __sub__(self, other):
        return StateVector(self.u1 - other.u1, self.u2 - other.u2, self.s)

    def __mul__(self, scalar):
        return StateVector(self.u1 * scalar, self.u2 * scalar, self.s)

    __rmul__ = __mul__


def energy_norm(U: StateVector, s: float | None = None) -> float:
    s = U.s if s is None else s
    if s < 2:
        raise ConfigurationError("energy norm requires s >= 2")
    return math.hypot(hs_norm(U.u1, s), l2_norm(U.u2))


def energy_inner(U: StateVector, V: StateVector, s: float | None = None) -> complex:
    """Energy inner product <U, V> = <Lambda u1, Lambda v1> + <u2, v2>."""
    s = U.s if s is None else s
    half = symbol(U.grid, s, "half")
    first = np.vdot(V.u1.spectrum * half, U.u1.spectrum * half)
    return complex(first) * U.grid.cell_volume + inner(U.u2, V.u2)


def random_field(grid: TorusGrid, rng: np.random.Generator, band: float | None = None) -> SpectralField:
    """Complex white noise in frequency space, normalised to unit L^2 norm.

    With ``band`` set, only frequencies with |xi| <= band are populated.
    """
    spec = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    if band is not None:
        spec = spec * ball_mask(grid, band)
    f = SpectralField.from_spectrum(grid, spec)
    norm = l2_norm(f)
    if norm == 0:
        raise ConfigurationError("band contains no lattice frequencies")
    return f * (1.0 / norm)


def fft_block(grid: TorusGrid, V: np.ndarray) -> np.ndarray:
    """Unitary DFT of each column of an ``(N, k)`` array of flattened fields."""
    k = V.shape[1]
    F = np.fft.fftn(V.T.reshape((k,) + grid.shape), axes=tuple(range(1, grid.d + 1)), norm="ortho")
    return F.reshape(k, -1).T


def ifft_block(grid: TorusGrid, V: np.ndarray) -> np.ndarray:
    k = V.shape[1]
    F = np.fft.ifftn(V.T.reshape((k,) + grid.shape), axes=tuple(range(1, grid.d + 1)), norm="ortho")
    return F.reshape(k, -1).T
