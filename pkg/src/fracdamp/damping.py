"""Damping coefficients and the geometric tests on them.

Three properties of a coefficient gamma decide which decay regime applies:
its essential infimum, the thickness of a level set {gamma >= eps}, and (in
one dimension) the geometric control condition.  All scans are done over
lattice-aligned windows with periodic wrap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .spectral_core import TorusGrid

FAMILIES = ("uniform", "stripes", "bumps", "compact-support", "custom")

# tolerance for "x falls on a stripe/support edge" decisions
_EDGE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DampingProfile:
    grid: TorusGrid
    gamma: np.ndarray
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        gamma = np.array(self.gamma, dtype=float)
        if gamma.shape != self.grid.shape:
            raise ConfigurationError(f"gamma shape {gamma.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(gamma)):
            raise ConfigurationError("gamma must be finite")
        if np.any(gamma < 0):
            raise ConfigurationError("gamma must be nonnegative")
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown damping family {self.family!r}", "damping.family")
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)

    @property
    def sup_norm(self) -> float:
        return float(self.gamma.max())

    def __add__(self, other: "DampingProfile") -> "DampingProfile":
        if other.grid != self.grid:
            raise ConfigurationError("cannot add profiles on different grids")
        return DampingProfile(self.grid, self.gamma + other.gamma, "custom",
                              {"sum": [self.describe(), other.describe()]})

    def level_set(self, eps: float) -> np.ndarray:
        """Boolean mask of {gamma >= eps}."""
        return self.gamma >= eps

    def shifted(self, steps) -> "DampingProfile":
        """Circular shift by whole grid cells (per axis)."""
        steps = np.atleast_1d(steps)
        return DampingProfile(self.grid, np.roll(self.gamma, tuple(steps), axis=tuple(range(len(steps)))),
                              self.family, dict(self.params))

    def describe(self) -> dict:
        return {"family": self.family, **self.params}


def _require(cond, message, key):
    if not cond:
        raise ConfigurationError(message, f"damping.{key}")


def _num(params, key, default=None):
    if key not in params:
        if default is None:
            raise ConfigurationError(f"missing damping parameter {key!r}", f"damping.{key}")
        return default
    try:
        return float(params[key])
    except (TypeError, ValueError):
        raise ConfigurationError(f"damping parameter {key!r} must be a number", f"damping.{key}") from None


def _periodic_offset(x, centre, box_len):
    """Minimal-image displacement on the circle of length box_len."""
    return (x - centre + 0.5 * box_len) % box_len - 0.5 * box_len


def make_damping(grid: TorusGrid, family: str, **params) -> DampingProfile:
    """Build a profile from one of the generator families.

    ``uniform``: level.  ``stripes``: period, duty, height, optional axis and
    offset.  ``compact-support``: width, height, optional center.  ``bumps``:
    centers, width, heights (periodic Gaussians).  ``custom``: values.
    """
    family = family.replace("_", "-")
    mesh = grid.mesh()
    if family == "uniform":
        level = _num(params, "level")
        _require(level >= 0, "uniform level must be >= 0", "level")
        gamma = np.full(grid.shape, level)
        params = {"level": level}
    elif family == "stripes":
        period = _num(params, "period")
        duty = _num(params, "duty")
        height = _num(params, "height", 1.0)
        offset = _num(params, "offset", 0.0)
        axis = int(params.get("axis", 0))
        _require(period > 0, "stripe period must be > 0", "period")
        _require(0 < duty < 1, "stripe duty must lie in (0, 1)", "duty")
        _require(height >= 0, "stripe height must be >= 0", "height")
        _require(0 <= axis < grid.d, "stripe axis out of range", "axis")
        rel = (mesh[axis] - mesh[axis].flat[0] - offset) / period
        phase = rel - np.floor(rel + _EDGE_TOL)
        gamma = np.where(phase < duty - _EDGE_TOL, height, 0.0)
        params = {"period": period, "duty": duty, "height": height, "offset": offset, "axis": axis}
    elif family == "compact-support":
        width = _num(params, "width")
        height = _num(params, "height", 1.0)
        centre = params.get("center", [0.0] * grid.d)
        centre = list(np.broadcast_to(np.asarray(centre, dtype=float), (grid.d,)))
        _require(0 < width <= grid.box_len, "support width must lie in (0, box_len]", "width")
        _require(height >= 0, "support height must be >= 0", "height")
        inside = np.ones(grid.shape, dtype=bool)
        for x, c in zip(mesh, centre):
            inside &= np.abs(_periodic_offset(x, c, grid.box_len)) <= 0.5 * width + _EDGE_TOL
        gamma = np.where(inside, height, 0.0)
        params = {"width": width, "height": height, "center": [float(c) for c in centre]}
    elif family == "bumps":
        centres = np.atleast_2d(np.asarray(params.get("centers", [[0.0] * grid.d]), dtype=float))
        if grid.d == 1 and centres.shape[0] == 1 and centres.shape[1] > 1:
            centres = centres.T
        _require(centres.shape[1] == grid.d, "bump centers must have d coordinates", "centers")
        half = 0.5 * grid.box_len
        _require(np.all(np.abs(centres) <= half), "bump centers must lie inside the torus", "centers")
        width = _num(params, "width", 1.0)
        _require(width > 0, "bump width must be > 0", "width")
        heights = np.broadcast_to(np.asarray(params.get("heights", 1.0), dtype=float), (len(centres),))
        _require(np.all(heights >= 0), "bump heights must be >= 0", "heights")
        gamma = np.zeros(grid.shape)
        for c, a in zip(centres, heights):
            r2 = sum(_periodic_offset(x, ci, grid.box_len) ** 2 for x, ci in zip(mesh, c))
            gamma += a * np.exp(-0.5 * r2 / width**2)
        params = {"centers": centres.tolist(), "width": width, "heights": heights.tolist()}
    elif family == "custom":
        if "values" not in params:
            raise ConfigurationError("custom profile needs values", "damping.values")
        gamma = np.asarray(params["values"], dtype=float).reshape(grid.shape)
        params = {}
    else:
        raise ConfigurationError(f"unknown damping family {family!r}", "damping.family")
    return DampingProfile(grid, gamma, family, params)


def ess_inf(profile: DampingProfile) -> float:
    return float(profile.gamma.min())


def window_sums(arr: np.ndarray, m: int) -> np.ndarray:
    """Periodic sums over all m-cell (per axis) lattice-aligned windows.

    Entry ``j`` is the sum over the window starting at ``j``.
    """
    out = arr
    for axis in range(arr.ndim):
        n = out.shape[axis]
        ext = np.concatenate([out, np.take(out, np.arange(m), axis=axis)], axis=axis)
        cs = np.cumsum(ext, axis=axis)
        zero = np.zeros_like(np.take(cs, [0], axis=axis))
        cs = np.concatenate([zero, cs], axis=axis)
        out = np.take(cs, np.arange(m, m + n), axis=axis) - np.take(cs, np.arange(n), axis=axis)
    return out


def _window_cells(grid, length, key):
    if not length > 0:
        raise ConfigurationError("window length must be > 0", key)
    if length > grid.box_len * (1 + 1e-12):
        raise ConfigurationError(f"window length {length} exceeds the torus side {grid.box_len}", key)
    return max(1, min(grid.n, int(round(length / grid.spacing))))


@dataclass(frozen=True)
class ThickCertificate:
    """Outcome of a thickness scan of {gamma >= eps} at cube side ``cube_len``.

    ``density`` is the minimum fraction of the cube covered by the level set
    over all lattice-aligned placements.  Shifting a cube off the lattice can
    lose at most one boundary cell per face, recorded as ``boundary_slack``;
    ``density - boundary_slack`` lower-bounds the continuum infimum.
    """

    eps: float
    cube_len: float
    window_cells: int
    density: float
    boundary_slack: float
    threshold: float
    worst_placement: tuple

    @property
    def thick(self) -> bool:
        return self.density > 0 and self.density >= self.threshold

    def to_dict(self) -> dict:
        return {"eps": self.eps, "cube_len": self.cube_len, "window_cells": self.window_cells,
                "density": self.density, "boundary_slack": self.boundary_slack,
                "threshold": self.threshold, "thick": self.thick,
                "worst_placement": list(self.worst_placement)}


def thickness(profile: DampingProfile, eps: float, cube_len: float) -> ThickCertificate:
    if not eps > 0:
        raise ConfigurationError("eps must be > 0", "thickness.eps")
    grid = profile.grid
    m = _window_cells(grid, cube_len, "thickness.cube_len")
    counts = window_sums(profile.level_set(eps).astype(np.int64), m)
    worst = np.unravel_index(int(np.argmin(counts)), counts.shape)
    density = float(counts[worst]) / m**grid.d
    return ThickCertificate(
        eps=float(eps), cube_len=float(cube_len), window_cells=m, density=density,
        boundary_slack=min(1.0, 2.0 * grid.d / m), threshold=1.0 / grid.n,
        worst_placement=tuple(int(i) for i in worst))


def gcc_1d(profile: DampingProfile, window_len: float) -> float:
    """Minimum over lattice translates of the integral of gamma over a window."""
    grid = profile.grid
    if grid.d != 1:
        raise ConfigurationError("the geometric control scan is one-dimensional only", "grid.d")
    m = _window_cells(grid, window_len, "gcc.window_len")
    return float(window_sums(profile.gamma, m).min()) * grid.spacing


def save_profile_csv(profile: DampingProfile, path) -> None:
    grid = profile.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if grid.d == 1:
            w.writerow(["x", "gamma"])
            for x, g in zip(grid.coords, profile.gamma):
                w.writerow([repr(float(x)), repr(float(g))])
        else:
            w.writerow(["x", "y", "gamma"])
            for i, x in enumerate(grid.coords):
                for j, y in enumerate(grid.coords):
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(profile.gamma[i, j]))])


def load_profile_csv(path) -> DampingProfile:
    """Read a profile written by :func:`save_profile_csv`; the grid is rebuilt from the coordinates."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float)
    if header == ["x", "gamma"]:
        x, gamma = data[:, 0], data[:, 1]
        n = len(x)
        h = x[1] - x[0]
        grid = TorusGrid(1, n, float(round(n * h, 12)))
        return DampingProfile(grid, gamma, "custom", {"source": path.name})
    if header == ["x", "y", "gamma"]:
        n = int(round(math.sqrt(len(data))))
        h = data[n, 0] - data[0, 0]
        grid = TorusGrid(2, n, float(round(n * h, 12)))
        return DampingProfile(grid, data[:, 2].reshape(n, n), "custom", {"source": path.name})
    raise ConfigurationError(f"unrecognised profile CSV header {header}")
