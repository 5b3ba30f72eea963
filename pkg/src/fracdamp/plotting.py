"""Matplotlib figures for the run reports, written as SVG."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.frameon": False,
    # fixed ids and no date stamp keep the SVG bytes reproducible
    "svg.hashsalt": "fracdamp",
    "svg.fonttype": "none",
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def line_chart(path, x, series, xlabel, ylabel, title="", logy=False, markers=None):
    """Plot named y-series against a shared x and save to ``path``.

    ``series`` maps a label to a y-array; NaN entries are skipped by matplotlib.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, (label, y) in enumerate(series.items()):
            style = (markers or {}).get(label, "-")
            ax.plot(x, y, style, label=label, lw=1.2, ms=3)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend()
        _save(fig, path)


def trace_chart(path, trace, report=None):
    t, E = np.asarray(trace.times), np.asarray(trace.energies)
    series = {"energy": E}
    if report is not None:
        fit = report.candidates[report.model]
        x = {"exponential": t, "polynomial": np.log(np.maximum(t, 1e-300)),
             "logarithmic": np.log(np.log(np.e + t))}[report.model]
        model = fit["amplitude"] * np.exp(-fit["rate"] * x)
        lo, hi = report.fit_window
        model = np.where((t >= lo) & (t <= hi), model, np.nan)
        series[f"{report.model} fit (rate {fit['rate']:.4g})"] = model
    line_chart(path, t, series, "t", "E(t)", "energy trace", logy=True,
               markers={"energy": "-"})


def profile_chart(path, x, gamma, window_density=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(x, gamma, "-", lw=1.2, label="gamma")
        if window_density is not None:
            ax.plot(x, window_density, "--", lw=1.0, label="window density")
            ax.legend()
        ax.set_xlabel("x")
        ax.set_ylabel("value")
        _save(fig, path)
