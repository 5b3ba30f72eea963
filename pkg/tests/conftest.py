import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from fracdamp.spectral_core import StateVector, random_field  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]


def random_state(grid, s, rng, band_frac=0.9):
    """Random complex state with no energy in the Nyquist modes."""
    band = band_frac * grid.max_abs_freq
    return StateVector(random_field(grid, rng, band), random_field(grid, rng, band), s)


# criterion number -> (title, passed, detail, seconds); filled by test_acceptance
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        title, ok, detail, secs = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(
            f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {title} ({secs:.1f} s) -- {detail}")
