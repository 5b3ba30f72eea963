"""Discrete versions of the band-limited uncertainty estimates.

Two quantities are measured on a torus grid:

* the sharp restriction constant ``C(Omega, R) = sup ||f|| / ||f||_Omega``
  over fields with spectrum in the ball ``|xi| <= R``;
* the smallest eigenvalue of
  ``Q_lam = ((-Delta+1)^{s/2} - lam)^2 + chi_Omega``, whose decay in ``lam``
  is bounded below by an exponential envelope when Omega is thick.

Both are computed matrix-free with FFTs as the only dense operation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .eigsolve import FLOOR_FACTOR, smallest_eigenpair
from .errors import ConfigurationError
from .spectral_core import (
    SpectralField,
    TorusGrid,
    annulus_mask,
    ball_mask,
    fft_block,
    ifft_block,
    l2_norm,
    l2_norm_on,
    project_annulus,
    symbol,
)

_EPS = np.finfo(float).eps


def offband_gap(lam: float, s: float, grid: TorusGrid) -> float:
    """min over lattice xi outside the annulus of |(|xi|^2+1)^{s/2} - lam|.

    Returns ``inf`` when every lattice frequency lies inside the annulus.
    """
    if lam < 0 or s < 1:
        raise ConfigurationError("offband_gap needs lam >= 0 and s >= 1")
    outside = ~annulus_mask(grid, lam, s)
    if not outside.any():
        return math.inf
    return float(np.abs(symbol(grid, s)[outside] - lam).min())


def _check_mask(grid, omega):
    omega = np.asarray(omega, dtype=bool)
    if omega.shape != grid.shape:
        raise ConfigurationError(f"mask shape {omega.shape} does not match grid {grid.shape}")
    return omega


@dataclass
class SpectralConstant:
    radius: float
    constant: float
    mu_min: float
    iterations: int
    residual: float
    band_dim: int


def spectral_constant(grid: TorusGrid, omega, radius: float, tol: float = 1e-10,
                      seed: int = 0) -> SpectralConstant:
    """Sharp constant of ``||f|| <= C ||f||_Omega`` on the band ``|xi| <= radius``.

    Works in band coordinates: the operator ``P_R chi_Omega P_R`` restricted
    to range(P_R) is symmetric with spectrum in [0, 1], and ``C = mu_min^{-1/2}``.
    If ``mu_min`` is at roundoff level (the band holds more modes than Omega
    can see), the constant is reported as ``inf``.
    """
    omega = _check_mask(grid, omega)
    if not omega.any():
        raise ConfigurationError("Omega has zero measure")
    band = np.flatnonzero(ball_mask(grid, radius).ravel())
    nb = band.size
    mask_flat = omega.ravel()
    if mask_flat.all():
        return SpectralConstant(radius, 1.0, 1.0, 0, 0.0, nb)

    def matvec(C):
        full = np.zeros((grid.size, C.shape[1]), dtype=complex)
        full[band] = C
        u = ifft_block(grid, full)
        u[~mask_flat] = 0.0
        return fft_block(grid, u)[band]

    if nb == 1:
        mu = float(np.real(matvec(np.ones((1, 1), dtype=complex))[0, 0]))
        res, iters = 0.0, 1
    else:
        out = smallest_eigenpair(matvec, nb, shift=1.0, tol=tol, seed=seed, norm_estimate=1.0)
        mu, res, iters = out.value, out.residual, out.iterations
    floor = FLOOR_FACTOR * _EPS
    constant = math.inf if mu <= floor else max(1.0, mu ** -0.5)
    return SpectralConstant(float(radius), constant, max(mu, 0.0), iters, res, nb)


@dataclass
class SpectralConstantCurve:
    radii: np.ndarray
    constants: np.ndarray
    results: list
    slope: float
    intercept: float
    rms_residual: float
    max_residual: float

    @property
    def relative_residual(self) -> float:
        """RMS residual of the log C line as a fraction of the log C range."""
        span = float(np.ptp(np.log(self.constants)))
        return self.rms_residual / span if span > 0 else math.inf


def spectral_constant_curve(grid, omega, radii, tol=1e-10, seed=0) -> SpectralConstantCurve:
    results = [spectral_constant(grid, omega, R, tol=tol, seed=seed) for R in radii]
    radii = np.asarray(radii, dtype=float)
    consts = np.array([r.constant for r in results])
    if np.all(np.isfinite(consts)) and len(radii) >= 2:
        logc = np.log(consts)
        slope, intercept = np.polyfit(radii, logc, 1)
        resid = logc - (intercept + slope * radii)
        rms, mx = float(np.sqrt(np.mean(resid**2))), float(np.abs(resid).max())
    else:
        slope = intercept = rms = mx = math.nan
    return SpectralConstantCurve(radii, consts, results, float(slope), float(intercept), rms, mx)


def quadform_operator(grid: TorusGrid, s: float, omega, lam: float):
    """(matvec, preconditioner, spectrum upper bound) for Q_lam on flattened fields."""
    omega = _check_mask(grid, omega).ravel()
    diag = ((symbol(grid, s) - lam) ** 2).ravel()[:, None]
    inv = 1.0 / (diag + 1.0)

    def matvec(V):
        out = ifft_block(grid, diag * fft_block(grid, V))
        out[omega] += V[omega]
        return out

    def precond(R):
        return ifft_block(grid, inv * fft_block(grid, R))

    upper = float(diag.max()) + (1.0 if omega.any() else 0.0)
    return matvec, precond, upper


@dataclass
class QuadFormResult:
    lam: float
    mu_min: float
    residual: float
    iterations: int
    tol_used: float
    vector: np.ndarray = field(repr=False, default=None)


def quadform_min_eig(grid: TorusGrid, s: float, omega, lam: float, tol: float = 1e-8,
                     seed: int = 0) -> QuadFormResult:
    """Smallest eigenvalue of ``((-Delta+1)^{s/2} - lam)^2 + chi_Omega``.

    The residual is certified at ``max(tol, 64 eps ||Q||)``; below that
    floor double precision cannot resolve the high-frequency part of Q.
    """
    if s < 1 or lam < 0:
        raise ConfigurationError("quadform_min_eig needs s >= 1 and lam >= 0")
    matvec, precond, upper = quadform_operator(grid, s, omega, lam)
    out = smallest_eigenpair(matvec, grid.size, shift=upper, tol=tol, precond=precond, seed=seed)
    return QuadFormResult(float(lam), out.value, out.residual, out.iterations, out.tol_used, out.vector)


@dataclass
class Envelope:
    """Exponential minorant ``c * exp(-C |lam|)`` of sampled positive data."""

    c: float
    C: float
    slope: float
    intercept: float
    max_gap: float
    floor: bool

    def __call__(self, lam):
        return self.c * np.exp(-self.C * np.abs(np.asarray(lam, dtype=float)))

    def to_dict(self) -> dict:
        return {"c": self.c, "C": self.C, "slope": self.slope, "intercept": self.intercept,
                "max_gap": self.max_gap, "floor": self.floor}


def envelope_fit(lams, mus) -> Envelope:
    """Log-linear least squares, then shifted down until it minorises every sample.

    Samples are fitted against ``|lam|``.  A nonnegative slope means no decay is
    visible; the envelope is then the constant floor ``min(mu)`` with ``C = 0``.
    ``max_gap`` is the largest log-distance of a sample above the envelope.
    """
    x = np.abs(np.asarray(lams, dtype=float))
    mus = np.asarray(mus, dtype=float)
    if x.size < 8:
        raise ConfigurationError("envelope fit needs at least 8 samples")
    if np.any(~(mus > 0)):
        raise ConfigurationError("envelope fit needs positive samples")
    y = np.log(mus)
    slope, intercept = np.polyfit(x, y, 1)
    if slope <= 0:
        shift = float(np.max(intercept + slope * x - y))
        intercept -= max(shift, 0.0)
        C, floor = -slope, False
    else:
        slope, intercept, C, floor = 0.0, float(y.min()), 0.0, True
    gap = float(np.max(y - (intercept + slope * x)))
    return Envelope(float(math.exp(intercept)), float(C), float(slope), float(intercept), gap, floor)


@dataclass
class QuadFormCurve:
    s: float
    lambdas: np.ndarray
    mu_min: np.ndarray
    residuals: np.ndarray
    envelope: Envelope


def quadform_sweep(grid, s, omega, lambdas, tol=1e-8, seed=0, executor=None) -> QuadFormCurve:
    """Evaluate ``quadform_min_eig`` on a lambda sweep and fit the envelope."""
    def job(lam):
        return quadform_min_eig(grid, s, omega, lam, tol=tol, seed=seed)

    results = list(executor.map(job, lambdas)) if executor else [job(l) for l in lambdas]
    mus = np.array([r.mu_min for r in results])
    res = np.array([r.residual for r in results])
    return QuadFormCurve(float(s), np.asarray(lambdas, dtype=float), mus, res, envelope_fit(lambdas, mus))


def resolvent_chain_terms(f: SpectralField, lam: float, s: float, omega, constant_sq: float) -> dict:
    """Terms of the orthogonal-splitting bound for a single field.

    With ``K = constant_sq`` a valid restriction constant (squared) on a ball
    containing the annulus, the bound reads
    ``||f||^2 <= 2K ||f||_Omega^2 + (2K + 1) ||(I - P_lam) f||^2``.
    """
    omega = _check_mask(f.grid, omega)
    off = f - project_annulus(f, lam, s)
    lhs = l2_norm(f) ** 2
    rhs = 2 * constant_sq * l2_norm_on(f, omega) ** 2 + (2 * constant_sq + 1) * l2_norm(off) ** 2
    return {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs}
