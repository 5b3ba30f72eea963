"""The damped first-order system and its resolvent along the imaginary axis.

With ``Lambda = (-Delta+1)^{s/4}`` the generator acts on energy-space states as

    A_gamma (u1, u2) = (u2, -Lambda^2 u1 - gamma u2).

In the variables ``w1 = Lambda u1 - i u2``, ``w2 = Lambda u1 + i u2`` the free
part is diagonal, ``A_0 = diag(i Lambda, -i Lambda)``, and

    ||w1||^2 + ||w2||^2 = 2 ||U||^2_energy.

Note on exponents: written out, the norm identity for ``A_0 - i lam`` involves
``(lam - Lambda) w1`` and ``(lam + Lambda) w2`` with the s/4 power; reading
that power as s/2 breaks the identity.  The identity also carries a factor
1/2 because of the parallelogram normalisation above (see
:func:`free_norm_identity_terms`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .damping import DampingProfile, ThickCertificate
from .eigsolve import smallest_eigenpair
from .errors import ConfigurationError, NumericDomainError
from .spectral_core import (
    SpectralField,
    StateVector,
    TorusGrid,
    energy_norm,
    fft_block,
    ifft_block,
    l2_norm,
    l2_norm_on,
    symbol,
)
from .uncertainty import Envelope

NYQUIST_TOL = 1e-10


def gamma_array(gamma, grid: TorusGrid) -> np.ndarray:
    """Accept a profile, an array, a scalar, or None (no damping)."""
    if gamma is None:
        return np.zeros(grid.shape)
    if isinstance(gamma, DampingProfile):
        if gamma.grid != grid:
            raise ConfigurationError("damping profile lives on a different grid")
        return gamma.gamma
    arr = np.broadcast_to(np.asarray(gamma, dtype=float), grid.shape)
    return arr


def nyquist_fraction(U: StateVector) -> float:
    """Share of the energy carried by the unpaired Nyquist modes."""
    grid = U.grid
    half = symbol(grid, U.s, "half")
    e1 = np.abs(U.u1.spectrum * half) ** 2
    e2 = np.abs(U.u2.spectrum) ** 2
    total = e1.sum() + e2.sum()
    if total == 0:
        return 0.0
    return float((e1[grid.nyquist_mask].sum() + e2[grid.nyquist_mask].sum()) / total)


def check_nyquist(U: StateVector, tol: float = NYQUIST_TOL) -> None:
    frac = nyquist_fraction(U)
    if frac > tol:
        raise ConfigurationError(f"state carries {frac:.2e} of its energy in the Nyquist mode (limit {tol:g})")


def apply_A(U: StateVector, gamma=None) -> StateVector:
    """(u1, u2) -> (u2, -(-Delta+1)^{s/2} u1 - gamma u2)."""
    if U.s < 2:
        raise ConfigurationError("the damped system needs s >= 2")
    g = gamma_array(gamma, U.grid)
    full = symbol(U.grid, U.s, "full")
    v2 = SpectralField.from_spectrum(U.grid, -full * U.u1.spectrum) - U.u2.pointwise(g)
    return StateVector(U.u2, v2, U.s)


@dataclass(frozen=True, eq=False)
class WPair:
    w1: SpectralField
    w2: SpectralField


def w_transform(U: StateVector, s: float | None = None) -> WPair:
    s = U.s if s is None else s
    lu1 = U.u1.spectrum * symbol(U.grid, s, "half")
    u2 = U.u2.spectrum
    return WPair(SpectralField.from_spectrum(U.grid, lu1 - 1j * u2),
                 SpectralField.from_spectrum(U.grid, lu1 + 1j * u2))


def w_inverse(W: WPair, s: float) -> StateVector:
    grid = W.w1.grid
    a, b = W.w1.spectrum, W.w2.spectrum
    u1 = 0.5 * (a + b) / symbol(grid, s, "half")
    u2 = 0.5j * (a - b)
    return StateVector(SpectralField.from_spectrum(grid, u1), SpectralField.from_spectrum(grid, u2), s)


def free_norm_identity_terms(U: StateVector, lam: float) -> tuple:
    """Both sides of ||(A_0 - i lam)U||^2 = (||(lam - Lambda) w1||^2 + ||(lam + Lambda) w2||^2) / 2."""
    AU = apply_A(U) - U * (1j * lam)
    W = w_transform(U)
    half = symbol(U.grid, U.s, "half")
    h = math.sqrt(U.grid.cell_volume)
    t1 = np.linalg.norm(((lam - half) * W.w1.spectrum).ravel()) * h
    t2 = np.linalg.norm(((lam + half) * W.w2.spectrum).ravel()) * h
    return energy_norm(AU) ** 2, 0.5 * (t1**2 + t2**2)


def free_resolvent_norm_exact(lam: float, s: float, grid: TorusGrid) -> float:
    """||(A_0 - i lam)^{-1}|| = 1 / min over lattice xi and signs of |lam -+ Lambda(xi)|."""
    half = symbol(grid, s, "half")
    dist = np.minimum(np.abs(lam - half), np.abs(lam + half))
    j = int(np.argmin(dist))
    dmin = float(dist.flat[j])
    if dmin <= 1e-13 * max(1.0, abs(lam)):
        idx = np.unravel_index(j, grid.shape)
        raise NumericDomainError(f"lambda={lam} hits the free spectrum at lattice mode {idx}")
    return 1.0 / dmin


def resolvent_normal_operator(grid: TorusGrid, s: float, gamma, lam: float):
    """(matvec, preconditioner, spectrum bound) for B*B with B = A_gamma - i lam.

    B acts on stacked normalised w-coordinates (length 2N); that map is an
    isometry from the energy space, so singular values of B are energy-norm ones.
    """
    g = gamma_array(gamma, grid).ravel()[:, None]
    half = symbol(grid, s, "half").ravel()[:, None]
    d1 = 1j * (half - lam)
    d2 = -1j * (half + lam)
    N = grid.size

    def apply(V, adjoint):
        a, b = V[:N], V[N:]
        fa, fb = fft_block(grid, a), fft_block(grid, b)
        if adjoint:
            ra, rb = ifft_block(grid, np.conj(d1) * fa), ifft_block(grid, np.conj(d2) * fb)
        else:
            ra, rb = ifft_block(grid, d1 * fa), ifft_block(grid, d2 * fb)
        damp = 0.5 * g * (a - b)
        return np.vstack([ra - damp, rb + damp])

    def matvec(V):
        return apply(apply(V, False), True)

    sup = float(g.max()) if g.size else 0.0
    tau = 0.25 * sup**2 + 0.25
    p1 = 1.0 / ((half - lam) ** 2 + tau)
    p2 = 1.0 / ((half + lam) ** 2 + tau)

    def precond(R):
        a, b = R[:N], R[N:]
        return np.vstack([ifft_block(grid, p1 * fft_block(grid, a)),
                          ifft_block(grid, p2 * fft_block(grid, b))])

    bound = (float(half.max()) + abs(lam) + sup) ** 2
    return matvec, precond, bound, apply


@dataclass
class ResolventPoint:
    lam: float
    sigma_min: float
    residual: float
    iterations: int
    tol_used: float


def resolvent_sigma_min(gamma, lam: float, s: float, tol: float = 1e-8, grid: TorusGrid | None = None,
                        seed: int = 0) -> ResolventPoint:
    """Smallest energy-norm singular value of ``A_gamma - i lam``.

    ``gamma`` may be a profile (which fixes the grid) or None/scalar with
    ``grid`` given.  Raises :class:`NumericDomainError` when the pencil is
    numerically singular.
    """
    if tol <= 0:
        raise ConfigurationError("tol must be > 0")
    if isinstance(gamma, DampingProfile):
        grid = gamma.grid
    if grid is None:
        raise ConfigurationError("a grid is needed when gamma is not a profile")
    matvec, precond, bound, _ = resolvent_normal_operator(grid, s, gamma, lam)
    out = smallest_eigenpair(matvec, 2 * grid.size, shift=bound, tol=tol, precond=precond, seed=seed)
    if out.value <= out.tol_used:
        raise NumericDomainError(
            f"A_gamma - i*{lam} is numerically singular (sigma_min^2 = {out.value:.2e})")
    sigma = math.sqrt(out.value)
    if sigma < 1e-13:
        raise NumericDomainError(f"A_gamma - i*{lam} is singular")
    return ResolventPoint(float(lam), sigma, out.residual, out.iterations, out.tol_used)


def default_lambda_sweep(lo: float = -20.0, hi: float = 20.0, num: int = 81) -> np.ndarray:
    return np.linspace(lo, hi, num)


@dataclass
class ResolventSweep:
    lambdas: np.ndarray
    sigma_min: np.ndarray
    residuals: np.ndarray
    envelope: Envelope
    predicted: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def symmetry_defect(self) -> float:
        """Largest relative mismatch sigma(lam) vs sigma(-lam) over mirrored sample pairs."""
        worst = 0.0
        lookup = {round(l, 12): s for l, s in zip(self.lambdas, self.sigma_min)}
        for l, s in zip(self.lambdas, self.sigma_min):
            m = lookup.get(round(-l, 12))
            if m is not None:
                worst = max(worst, abs(s - m) / max(s, m))
        return worst


def resolvent_sweep(gamma: DampingProfile, lambdas, s: float, tol: float = 1e-8, refine: int = 0,
                    seed: int = 0, executor=None) -> ResolventSweep:
    """sigma_min over a lambda sweep, with optional bisection refinement near dips.

    Each refinement level adds midpoints on both sides of every interior local
    minimum.  The envelope is fitted to sigma_min^2 against |lam|.
    """
    from .uncertainty import envelope_fit

    def run(ls):
        job = lambda l: resolvent_sigma_min(gamma, float(l), s, tol=tol, seed=seed)
        return list(executor.map(job, ls)) if executor else [job(l) for l in ls]

    lams = np.asarray(lambdas, dtype=float)
    pts = run(lams)
    for _ in range(refine):
        lams = np.array([p.lam for p in pts])
        sig = np.array([p.sigma_min for p in pts])
        new = []
        for i in range(1, len(lams) - 1):
            if sig[i] <= sig[i - 1] and sig[i] <= sig[i + 1]:
                new += [0.5 * (lams[i - 1] + lams[i]), 0.5 * (lams[i] + lams[i + 1])]
        new = sorted(set(np.round(new, 12)) - set(np.round(lams, 12)))
        if not new:
            break
        pts = sorted(pts + run(new), key=lambda p: p.lam)
    lams = np.array([p.lam for p in pts])
    sig = np.array([p.sigma_min for p in pts])
    res = np.array([p.residual for p in pts])
    return ResolventSweep(lams, sig, res, envelope_fit(lams, sig**2),
                          meta={"s": s, "grid": gamma.grid.describe(), "damping": gamma.describe(), "tol": tol})


@dataclass
class ChainReport:
    lam: float
    terms: list
    slacks: list
    flagged: list
    constants: dict

    @property
    def holds(self) -> bool:
        return not any(self.flagged)

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "terms": self.terms, "slacks": self.slacks,
                "flagged": self.flagged, "constants": self.constants}


def check_resolvent2_chain(U: StateVector, lam: float, omega, envelope: Envelope, s: float | None = None,
                           tol: float = 1e-10) -> ChainReport:
    """Evaluate the five members of the inequality chain for ``A_0``.

    ``envelope`` is the measured minorant ``c exp(-C lam)`` of the quadratic
    form at order s/2.  For lam >= 0 the near-resonant branch is w1; for
    lam < 0 the roles of w1 and w2 are swapped.  With ``e = c exp(-C|lam|)``:

    T0 = 2 e ||U||^2
    T1 = ||(Lambda - |lam|) a||^2 + ||a||_Omega^2 + e ||b||^2
    T2 = ||(Lambda - |lam|) a||^2 + 2 ||a - b||_Omega^2 + (2 + c) ||b||^2
    T3 = ||(Lambda - |lam|) a||^2 + (2 + c) ||(Lambda + |lam|) b||^2 + 8 ||u2||_Omega^2
    T4 = 2 (2 + c) ||(A_0 - i lam) U||^2 + 8 ||u2||_Omega^2

    Each step should be nondecreasing; steps that drop by more than ``tol``
    (relative to T4) are flagged.
    """
    s = U.s if s is None else s
    check_nyquist(U)
    omega = np.asarray(omega, dtype=bool)
    grid = U.grid
    h = math.sqrt(grid.cell_volume)
    c = envelope.c
    e = float(envelope(lam))
    W = w_transform(U, s)
    a, b = (W.w1, W.w2) if lam >= 0 else (W.w2, W.w1)
    half = symbol(grid, s, "half")
    near = (np.linalg.norm(((half - abs(lam)) * a.spectrum).ravel()) * h) ** 2
    far = (np.linalg.norm(((half + abs(lam)) * b.spectrum).ravel()) * h) ** 2
    U2 = StateVector(U.u1, U.u2, s)
    AU = apply_A(U2) - U2 * (1j * lam)
    u2_om = l2_norm_on(U.u2, omega) ** 2
    T = [
        2 * e * energy_norm(U2) ** 2,
        near + l2_norm_on(a, omega) ** 2 + e * l2_norm(b) ** 2,
        near + 2 * l2_norm_on(a - b, omega) ** 2 + (2 + c) * l2_norm(b) ** 2,
        near + (2 + c) * far + 8 * u2_om,
        2 * (2 + c) * energy_norm(AU) ** 2 + 8 * u2_om,
    ]
    scale = max(abs(T[-1]), 1e-300)
    slacks = [T[k + 1] - T[k] for k in range(4)]
    flagged = [sl < -tol * scale for sl in slacks]
    return ChainReport(float(lam), T, slacks, flagged, {"c": c, "C": envelope.C, "e": e})


@dataclass
class AbsorptionEstimate:
    """Predicted lower bound for sigma_min(A_gamma - i lam)^2.

    ``c``/``C`` give the pure exponential form ``c exp(-C|lam|)`` implied by the
    prediction; ``predicted`` holds the (tighter) pointwise values.
    """

    c: float
    C: float
    c_free: float
    D: float
    sup_norm: float
    lambdas: np.ndarray
    predicted: np.ndarray
    minorizes: bool | None = None
    worst_ratio: float | None = None

    def to_dict(self) -> dict:
        return {"c": self.c, "C": self.C, "c_free": self.c_free, "D": self.D, "sup_norm": self.sup_norm,
                "minorizes": self.minorizes, "worst_ratio": self.worst_ratio}


def absorb_damping_estimate(gamma: DampingProfile, eps: float, lambdas, envelope: Envelope,
                            certificate: ThickCertificate | None, sweep_sigma=None) -> AbsorptionEstimate:
    """Carry the free-operator bound over to ``A_gamma``.

    From the chain, ``c0 e ||U||^2 <= ||(A_0 - i lam)U||^2 + ||u2||_Omega^2``
    with ``c0 = c / max(2 + c, 4)``.  Splitting off the damping term
    (``D = 2 + eps^-2``) and absorbing ``D ||gamma u2||^2`` through the
    dissipation identity with ``delta = c0 e / 2`` gives

        sigma_min^2 >= (c0 e)^2 / (4 (c0 e + D^2 ||gamma||_inf^2)).

    If ``sweep_sigma`` (measured sigma_min at ``lambdas``) is given, the
    prediction is checked to minorise sigma_min^2.
    """
    if certificate is None:
        raise ConfigurationError("a thickness certificate for {gamma >= eps} is required")
    if not certificate.thick:
        raise ConfigurationError("the level set {gamma >= eps} is not certified thick")
    if not math.isclose(certificate.eps, eps):
        raise ConfigurationError(f"certificate is for eps={certificate.eps}, not {eps}")
    lams = np.asarray(lambdas, dtype=float)
    c0 = envelope.c / max(2.0 + envelope.c, 4.0)
    D = 2.0 + eps**-2
    sup = gamma.sup_norm
    e = c0 * np.exp(-envelope.C * np.abs(lams))
    pred = e**2 / (4.0 * (e + D**2 * sup**2))
    out = AbsorptionEstimate(c=c0**2 / (4.0 * (c0 + D**2 * sup**2)), C=2.0 * envelope.C, c_free=c0, D=D,
                             sup_norm=sup, lambdas=lams, predicted=pred)
    if sweep_sigma is not None:
        meas = np.asarray(sweep_sigma, dtype=float) ** 2
        out.minorizes = bool(np.all(pred <= meas))
        out.worst_ratio = float(np.max(pred / meas))
    return out
