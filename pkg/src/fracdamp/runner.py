"""Experiment runners behind the CLI subcommands.

Each runner takes a :class:`RunConfig` and an output directory and writes a
data CSV, ``report.json`` and ``chart.svg``.  CSV bytes depend only on the
config and seed; ``report.json`` additionally carries a timestamp.
"""

from __future__ import annotations

import csv
import datetime
import json
import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import plotting
from .config import RunConfig
from .damping import gcc_1d, make_damping, save_profile_csv, thickness, window_sums
from .errors import ConfigurationError
from .evolution import (broadband_data, fit_decay, polynomial_rate_candidates, read_trace_csv, simulate,
                        smooth_data, wave_packet)
from .operators import absorb_damping_estimate, resolvent_sweep
from .spectral_core import make_grid
from .uncertainty import quadform_sweep, spectral_constant_curve


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


@contextmanager
def _executor(threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            yield ex
    else:
        yield None


def _setup(cfg: RunConfig):
    grid = make_grid(cfg.grid["d"], cfg.grid["n"], cfg.grid["box_len"])
    damping = dict(cfg.damping)
    family = damping.pop("family")
    return grid, make_damping(grid, family, **damping)


def _lambda_grid(spec, path):
    try:
        return np.linspace(float(spec["lo"]), float(spec["hi"]), int(spec["num"]))
    except (KeyError, TypeError, ValueError):
        raise ConfigurationError(f"{path} needs numeric lo, hi, num", path) from None


def run_simulate(cfg: RunConfig, out: Path, threads=1) -> dict:
    p = cfg.params
    grid, profile = _setup(cfg)
    rng = np.random.default_rng(cfg.seed)
    data = p["data"]
    if data["kind"] == "broadband":
        U0 = broadband_data(grid, cfg.s, rng, data["width"])
    elif data["kind"] == "wave-packet":
        U0 = wave_packet(grid, cfg.s, data["center"], data["packet_width"], data["carrier"])
    else:
        raise ConfigurationError("params.data.kind must be broadband or wave-packet", "params.data.kind")
    if p["smooth"]:
        U0 = smooth_data(U0, cfg.s, int(p["smooth"]))
    trace = simulate(U0, profile, cfg.s, float(p["T"]), p["dt"], float(p["dt_out"]))
    report = fit_decay(trace, p["window"])
    write_csv(out / "trace.csv", ["t", "energy"], zip(trace.times, trace.energies))
    plotting.trace_chart(out / "chart.svg", trace, report)
    payload = report.to_dict()
    payload["data"] = data
    payload["polynomial_candidates"] = polynomial_rate_candidates(cfg.s)
    return payload


def run_fit(cfg: RunConfig, out: Path, threads=1) -> dict:
    p = cfg.params
    if not p["trace"]:
        raise ConfigurationError("params.trace must name a trace CSV", "params.trace")
    trace = read_trace_csv(p["trace"])
    report = fit_decay(trace, p["window"])
    write_csv(out / "trace.csv", ["t", "energy"], zip(trace.times, trace.energies))
    plotting.trace_chart(out / "chart.svg", trace, report)
    return report.to_dict()


def run_thickness(cfg: RunConfig, out: Path, threads=1) -> dict:
    p = cfg.params
    grid, profile = _setup(cfg)
    cert = thickness(profile, float(p["eps"]), float(p["cube_len"]))
    payload = {"certificate": cert.to_dict(), "ess_inf": float(profile.gamma.min()),
               "sup_norm": profile.sup_norm}
    counts = window_sums(profile.level_set(cert.eps).astype(np.int64), cert.window_cells)
    density = counts / cert.window_cells**grid.d
    if grid.d == 1:
        window = p["gcc_window"] if p["gcc_window"] is not None else p["cube_len"]
        payload["gcc_1d"] = {"window_len": float(window), "min_integral": gcc_1d(profile, float(window))}
        write_csv(out / "sweep.csv", ["x", "gamma", "window_density"],
                  zip(grid.coords, profile.gamma, density))
        plotting.profile_chart(out / "chart.svg", grid.coords, profile.gamma, density)
    else:
        write_csv(out / "sweep.csv", ["x", "y", "window_density"],
                  ((grid.coords[i], grid.coords[j], density[i, j]) for i in range(grid.n) for j in range(grid.n)))
        plotting.profile_chart(out / "chart.svg", grid.coords, profile.gamma.max(axis=1), density.min(axis=1))
    save_profile_csv(profile, out / "profile.csv")
    return payload


def run_spectral_constant(cfg: RunConfig, out: Path, threads=1) -> dict:
    p = cfg.params
    grid, profile = _setup(cfg)
    omega = profile.level_set(float(p["eps"]))
    curve = spectral_constant_curve(grid, omega, [float(r) for r in p["radii"]], tol=float(p["tol"]), seed=cfg.seed)
    write_csv(out / "sweep.csv", ["R", "constant", "iterations"],
              ((r.radius, r.constant, r.iterations) for r in curve.results))
    plotting.line_chart(out / "chart.svg", curve.radii, {"C(Omega, R)": curve.constants}, "R", "constant",
                        "restriction constant", logy=True, markers={"C(Omega, R)": "o-"})
    return {"omega": {"eps": float(p["eps"]), "measure_fraction": float(omega.mean())},
            "fit": {"slope": curve.slope, "intercept": curve.intercept, "rms_residual": curve.rms_residual,
                    "relative_residual": curve.relative_residual},
            "constants": curve.constants, "band_dims": [r.band_dim for r in curve.results]}


def _quad_curve(cfg, grid, omega, order, lambdas, tol, threads):
    with _executor(threads) as ex:
        return quadform_sweep(grid, order, omega, lambdas, tol=tol, seed=cfg.seed, executor=ex)


def run_uncertainty_sweep(cfg: RunConfig, out: Path, threads=1) -> dict:
    p = cfg.params
    grid, profile = _setup(cfg)
    omega = profile.level_set(float(p["eps"]))
    order = float(p["order"]) if p["order"] is not None else cfg.s
    lams = _lambda_grid(p["lambdas"], "params.lambdas")
    curve = _quad_curve(cfg, grid, omega, order, lams, float(p["tol"]), threads)
    write_csv(out / "sweep.csv", ["lambda", "mu_min", "residual"], zip(curve.lambdas, curve.mu_min, curve.residuals))
    plotting.line_chart(out / "chart.svg", curve.lambdas,
                        {"mu_min": curve.mu_min, "envelope": curve.envelope(curve.lambdas)},
                        "lambda", "smallest eigenvalue", "quadratic form", logy=True,
                        markers={"mu_min": "o-", "envelope": "--"})
    return {"order": order, "omega": {"eps": float(p["eps"]), "measure_fraction": float(omega.mean())},
            "envelope": curve.envelope.to_dict()}


def run_resolvent_sweep(cfg: RunConfig, out: Path, threads=1) -> dict:
    p = cfg.params
    grid, profile = _setup(cfg)
    lams = _lambda_grid(p["lambdas"], "params.lambdas")
    with _executor(threads) as ex:
        sweep = resolvent_sweep(profile, lams, cfg.s, tol=float(p["tol"]), refine=int(p["refine"]),
                                seed=cfg.seed, executor=ex)
    payload = {"envelope": sweep.envelope.to_dict(), "symmetry_defect": sweep.symmetry_defect(),
               "provenance": {"omega_eps": float(p["eps"]), "grid": grid.describe(), "damping": profile.describe()}}
    predicted = np.full(sweep.lambdas.shape, np.nan)
    if p["predict"]:
        eps = float(p["eps"])
        cert = thickness(profile, eps, float(p["cube_len"]))
        payload["certificate"] = cert.to_dict()
        if cert.thick:
            abs_l = np.unique(np.abs(sweep.lambdas))
            if abs_l.size < 8:
                abs_l = np.linspace(0.0, abs_l.max(), 8)
            curve = _quad_curve(cfg, grid, profile.level_set(eps), cfg.s / 2, abs_l, float(p["tol"]), threads)
            est = absorb_damping_estimate(profile, eps, sweep.lambdas, curve.envelope, cert, sweep.sigma_min)
            predicted = np.sqrt(est.predicted)
            payload["free_envelope"] = curve.envelope.to_dict()
            payload["absorption"] = est.to_dict()
    write_csv(out / "sweep.csv", ["lambda", "sigma_min", "residual", "predicted_envelope"],
              zip(sweep.lambdas, sweep.sigma_min, sweep.residuals, predicted))
    series = {"sigma_min": sweep.sigma_min, "envelope": np.sqrt(sweep.envelope(sweep.lambdas))}
    if np.any(np.isfinite(predicted)):
        series["predicted"] = predicted
    plotting.line_chart(out / "chart.svg", sweep.lambdas, series, "lambda", "sigma_min",
                        "resolvent lower bound", logy=True, markers={"sigma_min": "o-"})
    return payload


RUNNERS = {
    "simulate": run_simulate,
    "resolvent-sweep": run_resolvent_sweep,
    "spectral-constant": run_spectral_constant,
    "uncertainty-sweep": run_uncertainty_sweep,
    "thickness": run_thickness,
    "fit": run_fit,
}


def run(cfg: RunConfig, out=None, threads: int = 1) -> dict:
    """Run one experiment and write its artifacts; returns the report payload."""
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = RUNNERS[cfg.experiment](cfg, out, threads)
    report = {"experiment": cfg.experiment, "config": cfg.to_dict(), "config_hash": cfg.hash(),
              "created": datetime.datetime.now(datetime.timezone.utc).isoformat(), "result": payload}
    write_json(out / "report.json", report)
    return report


def _flatten(obj, prefix=""):
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(_flatten(v, f"{prefix}{k}."))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            out.update(_flatten(v, f"{prefix}{i}."))
    else:
        out[prefix[:-1]] = obj
    return out


DRIFT_LIMIT = 0.2


def compare(report_a: dict, report_b: dict) -> dict:
    """Per-field relative differences between two reports of the same kind."""
    exp_a, exp_b = report_a.get("experiment"), report_b.get("experiment")
    if exp_a != exp_b:
        raise ConfigurationError(f"cannot compare a {exp_a} report with a {exp_b} report")
    model_a = report_a.get("result", {}).get("model")
    model_b = report_b.get("result", {}).get("model")
    if model_a != model_b:
        raise ConfigurationError(f"cannot compare a {model_a} decay report with a {model_b} one")
    fa, fb = _flatten(report_a.get("result", {})), _flatten(report_b.get("result", {}))
    diffs = {}
    for key in sorted(set(fa) & set(fb)):
        a, b = fa[key], fb[key]
        if isinstance(a, bool) or isinstance(b, bool) or not isinstance(a, (int, float)) \
                or not isinstance(b, (int, float)):
            continue
        scale = max(abs(a), abs(b))
        diffs[key] = 0.0 if scale == 0 else abs(a - b) / scale
    drift_keys = [k for k in diffs if k.split(".")[-1] == "C" and "envelope" in k]
    flagged = [k for k in drift_keys if diffs[k] > DRIFT_LIMIT]
    return {"experiment": exp_a, "relative_differences": diffs,
            "envelope_drift": {k: diffs[k] for k in drift_keys}, "flagged": flagged,
            "drift_limit": DRIFT_LIMIT}
