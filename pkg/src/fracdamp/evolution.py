"""Time integration of U' = A_gamma U and classification of the energy decay.

The integrator is Strang splitting with both sub-flows solved exactly: the
damping flow ``u2 -> exp(-gamma dt) u2`` and the free flow, which is a pair
of unitary multipliers ``exp(+-i dt Lambda)`` in the w-variables.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericDomainError
from .operators import check_nyquist, gamma_array, w_inverse, w_transform, WPair
from .spectral_core import SpectralField, StateVector, TorusGrid, fft, ifft, symbol

MODELS = ("exponential", "polynomial", "logarithmic")
AMBIGUITY_MARGIN = 1.05


def default_dt(grid: TorusGrid, s: float) -> float:
    """0.2 / max half-symbol: the fastest oscillation gets >= 30 samples per period."""
    return 0.2 / float(symbol(grid, s, "half").max())


def _free_flow(grid, half, u1_hat, u2, dt):
    u2_hat = fft(grid, u2)
    lu1 = half * u1_hat
    rot = np.exp(1j * dt * half)
    w1 = (lu1 - 1j * u2_hat) * rot
    w2 = (lu1 + 1j * u2_hat) * np.conj(rot)
    return 0.5 * (w1 + w2) / half, ifft(grid, 0.5j * (w1 - w2))


def step_strang(U: StateVector, gamma, dt: float, s: float | None = None) -> StateVector:
    """One B(dt/2) A(dt) B(dt/2) step."""
    if dt <= 0:
        raise ConfigurationError("dt must be > 0")
    s = U.s if s is None else s
    if s < 2:
        raise ConfigurationError("the damped system needs s >= 2")
    grid = U.grid
    decay = np.exp(-0.5 * dt * gamma_array(gamma, grid))
    u1_hat, u2 = _free_flow(grid, symbol(grid, s, "half"), U.u1.spectrum, U.u2.values * decay, dt)
    return StateVector(SpectralField.from_spectrum(grid, u1_hat), SpectralField(grid, u2 * decay), s)


def energy(U: StateVector) -> float:
    """E = 1/2 ||U||^2_energy."""
    half = symbol(U.grid, U.s, "half")
    return 0.5 * U.grid.cell_volume * float(
        np.sum(np.abs(half * U.u1.spectrum) ** 2) + np.sum(np.abs(U.u2.values) ** 2))


@dataclass
class EnergyTrace:
    times: np.ndarray
    energies: np.ndarray
    meta: dict = field(default_factory=dict)
    final_state: StateVector | None = field(default=None, repr=False)

    def to_csv(self, path) -> None:
        write_trace_csv(path, self.times, self.energies)


def write_trace_csv(path, times, energies) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "energy"])
        for t, e in zip(times, energies):
            w.writerow([repr(float(t)), repr(float(e))])


def read_trace_csv(path) -> EnergyTrace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["t", "energy"]:
        raise ConfigurationError(f"trace CSV must have header t,energy; got {rows[0]}")
    data = np.array(rows[1:], dtype=float).reshape(-1, 2)
    return EnergyTrace(data[:, 0], data[:, 1], {"source": str(path)})


def simulate(U0: StateVector, gamma, s: float, T: float, dt: float | None = None,
             dt_out: float | None = None, monotone_tol: float = 1e-12) -> EnergyTrace:
    """Integrate to time T, sampling the energy every ``dt_out``.

    ``dt`` is rounded down so that a whole number of steps fits in each
    output interval.
    """
    if T <= 0:
        raise ConfigurationError("T must be > 0")
    grid = U0.grid
    dt = default_dt(grid, s) if dt is None else dt
    dt_out = dt if dt_out is None else dt_out
    if dt <= 0 or dt > dt_out * (1 + 1e-12):
        raise ConfigurationError("need 0 < dt <= dt_out")
    U0 = StateVector(U0.u1, U0.u2, s)
    check_nyquist(U0)
    per_out = max(1, math.ceil(dt_out / dt - 1e-9))
    dt = dt_out / per_out
    n_out = math.ceil(T / dt_out - 1e-9)
    g = gamma_array(gamma, grid)
    half = symbol(grid, s, "half")
    half_decay = np.exp(-0.5 * dt * g)
    full_decay = half_decay**2

    u1_hat = np.array(U0.u1.spectrum)
    u2 = np.array(U0.u2.values)
    times = dt_out * np.arange(n_out + 1)
    energies = np.empty(n_out + 1)
    energies[0] = energy(U0)
    if not energies[0] > 0:
        raise ConfigurationError("initial energy must be positive")
    step = 0
    for i in range(1, n_out + 1):
        u2 = u2 * half_decay
        for j in range(per_out):
            u1_hat, u2 = _free_flow(grid, half, u1_hat, u2, dt)
            u2 = u2 * (full_decay if j < per_out - 1 else half_decay)
        step += per_out
        e = 0.5 * grid.cell_volume * float(np.sum(np.abs(half * u1_hat) ** 2) + np.sum(np.abs(u2) ** 2))
        if not math.isfinite(e):
            raise NumericDomainError(f"non-finite state at step {step}")
        if e > energies[i - 1] + monotone_tol * energies[0]:
            raise NumericDomainError(f"energy increased at step {step}: {energies[i - 1]!r} -> {e!r}")
        energies[i] = e
    final = StateVector(SpectralField.from_spectrum(grid, u1_hat), SpectralField(grid, u2), s)
    meta = {"grid": grid.describe(), "s": s, "dt": dt, "dt_out": dt_out, "steps_per_output": per_out,
            "T": float(times[-1])}
    if hasattr(gamma, "describe"):
        meta["damping"] = gamma.describe()
    return EnergyTrace(times, energies, meta, final)


def smooth_data(U0: StateVector, s: float, k: int) -> StateVector:
    """Apply (I - A_0)^{-k}: multipliers (1 -+ i Lambda)^{-k} on the w-branches."""
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ConfigurationError("smoothing order k must be an integer >= 1")
    grid = U0.grid
    half = symbol(grid, s, "half")
    W = w_transform(StateVector(U0.u1, U0.u2, s), s)
    w1 = SpectralField.from_spectrum(grid, W.w1.spectrum * (1 - 1j * half) ** (-k))
    w2 = SpectralField.from_spectrum(grid, W.w2.spectrum * (1 + 1j * half) ** (-k))
    return w_inverse(WPair(w1, w2), s)


def broadband_data(grid: TorusGrid, s: float, rng: np.random.Generator, width: float | None = None) -> StateVector:
    """Real random data with a Gaussian spectral envelope of the given width.

    Both components carry comparable energy at every frequency.  The default
    width is a sixth of the largest lattice frequency, which keeps the
    Nyquist energy far below 1e-10.
    """
    width = grid.max_abs_freq / 6 if width is None else width
    env = np.exp(-0.5 * grid.xi_sq / width**2)
    half = symbol(grid, s, "half")

    def draw():
        spec = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * env
        return np.real(ifft(grid, spec))

    u1 = SpectralField(grid, draw())
    u1 = SpectralField.from_spectrum(grid, u1.spectrum / half)
    u1 = SpectralField(grid, np.real(u1.values))
    U = StateVector(u1, SpectralField(grid, draw()), s)
    check_nyquist(U)
    return U


def wave_packet(grid: TorusGrid, s: float, center, width: float, carrier) -> StateVector:
    """Gaussian packet on the w2 branch, travelling along the carrier wave vector."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.d,))
    carrier = np.broadcast_to(np.asarray(carrier, dtype=float), (grid.d,))
    r2 = 0.0
    phase = 0.0
    for x, c, k in zip(grid.mesh(), center, carrier):
        dx = (x - c + 0.5 * grid.box_len) % grid.box_len - 0.5 * grid.box_len
        r2 = r2 + dx**2
        phase = phase + k * dx
    w2 = SpectralField(grid, np.exp(-0.5 * r2 / width**2 + 1j * phase))
    U = w_inverse(WPair(SpectralField.zeros(grid), w2), s)
    check_nyquist(U)
    return U


@dataclass
class DecayReport:
    model: str
    rate: float
    fit_window: tuple
    rms_residual: float
    margin: float
    amplitude: float
    candidates: dict
    meta: dict = field(default_factory=dict)

    @property
    def ambiguous(self) -> bool:
        return self.margin < AMBIGUITY_MARGIN

    @property
    def decaying(self) -> bool:
        return self.rate > 0

    def to_dict(self) -> dict:
        return {"model": self.model, "rate": self.rate, "window": list(self.fit_window),
                "residual": self.rms_residual, "margin": self.margin, "ambiguous": self.ambiguous,
                "amplitude": self.amplitude, "candidates": self.candidates, **self.meta}


def _transform(model, t):
    if model == "exponential":
        return t
    if model == "polynomial":
        return np.log(t)
    return np.log(np.log(math.e + t))


def fit_decay(trace: EnergyTrace, window=None) -> DecayReport:
    """Fit E ~ a e^{-w t}, a t^{-p} and a (log(e+t))^{-q}; keep the smallest log-RMS residual."""
    t, E = np.asarray(trace.times, dtype=float), np.asarray(trace.energies, dtype=float)
    if window is None:
        window = (0.2 * t[-1], t[-1])
    t1, t2 = float(window[0]), float(window[1])
    sel = (t >= t1 - 1e-12) & (t <= t2 + 1e-12)
    if t1 < t[0] - 1e-12 or t2 > t[-1] + 1e-12 or t2 <= t1:
        raise ConfigurationError(f"window {window} is not inside the trace")
    if sel.sum() < 16:
        raise ConfigurationError("fit window needs at least 16 samples")
    tw, Ew = t[sel], E[sel]
    if np.any(~(Ew > 0)):
        raise ConfigurationError("energy must be positive inside the fit window")
    if tw[0] <= 0:
        tw, Ew = tw[1:], Ew[1:]
    y = np.log(Ew)
    fits = {}
    for model in MODELS:
        x = _transform(model, tw)
        slope, intercept = np.polyfit(x, y, 1)
        rms = float(np.sqrt(np.mean((y - intercept - slope * x) ** 2)))
        fits[model] = {"rate": float(-slope), "amplitude": float(math.exp(intercept)), "residual": rms}
    order = sorted(MODELS, key=lambda m: fits[m]["residual"])
    best, second = fits[order[0]], fits[order[1]]
    tiny = np.finfo(float).tiny
    margin = second["residual"] / max(best["residual"], tiny) if second["residual"] > 0 else 1.0
    return DecayReport(order[0], best["rate"], (t1, t2), best["residual"], float(max(margin, 1.0)),
                       best["amplitude"], fits, dict(trace.meta))


def synthetic_trace(model: str, rate: float, t_range, num: int = 200, noise: float = 0.0,
                    rng: np.random.Generator | None = None) -> EnergyTrace:
    """Uniformly sampled trace of one decay family with multiplicative noise."""
    t = np.linspace(t_range[0], t_range[1], num)
    if model == "exponential":
        E = np.exp(-rate * t)
    elif model == "polynomial":
        E = (1.0 + t) ** -rate
    elif model == "logarithmic":
        E = np.log(math.e + t) ** -rate
    else:
        raise ConfigurationError(f"unknown decay model {model!r}")
    if noise:
        rng = rng if rng is not None else np.random.default_rng(0)
        E = E * (1.0 + noise * rng.standard_normal(num))
    return EnergyTrace(t, E, {"synthetic": model, "rate": rate})


def polynomial_rate_candidates(s: float) -> dict:
    """Candidate exponents s/(4-2s) and 2s/(4-2s) for 0 < s < 2."""
    if not 0 < s < 2:
        return {}
    return {"s/(4-2s)": s / (4 - 2 * s), "2s/(4-2s)": 2 * s / (4 - 2 * s)}
