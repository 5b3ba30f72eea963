import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracdamp.errors import ConfigurationError, NumericDomainError
from fracdamp.spectral_core import (SpectralField, StateVector, annulus_mask, apply_multiplier, ball_mask,
                                    energy_norm, fft, frac_symbol_value, hs_norm, ifft, inner, l2_norm,
                                    make_grid, project_annulus, project_ball, random_field, symbol)


@pytest.fixture
def grid():
    return make_grid(1, 64, 2 * math.pi)


def test_integer_frequency_grid():
    g = make_grid(1, 8, 2 * math.pi)
    np.testing.assert_allclose(g.freqs, np.arange(-4, 4), atol=1e-14)


def test_max_frequency_2d():
    g = make_grid(2, 16, 1.0)
    assert g.max_abs_freq == pytest.approx(16 * math.pi)
    assert np.abs(g.freqs).max() == pytest.approx(16 * math.pi)
    assert g.shape == (16, 16)


@pytest.mark.parametrize("args", [(1, 6, 1.0), (1, 4, 1.0), (3, 8, 1.0), (1, 8, 0.0), (1, 8, -2.0)])
def test_invalid_grids(args):
    with pytest.raises(ConfigurationError):
        make_grid(*args)


def test_symbol_values():
    assert frac_symbol_value(0.0, 2, "full") == 1.0
    assert frac_symbol_value(math.sqrt(3), 2, "full") == pytest.approx(4.0, rel=1e-15)
    v = frac_symbol_value(1.0, 3, "half")
    assert v == pytest.approx(2 ** 0.75, rel=1e-15)
    assert v == pytest.approx(math.exp(0.75 * math.log(2)), rel=1e-15)
    assert frac_symbol_value([1.0, 1.0], 2, "full") == pytest.approx(3.0)


def test_symbol_at_least_one_and_increasing(grid):
    for s in (1, 1.5, 2, 3):
        m = symbol(grid, s)
        assert m.min() >= 1.0
        order = np.argsort(grid.xi_abs, kind="stable")
        assert np.all(np.diff(m[order]) >= 0)


def test_roundtrip_and_parseval(grid):
    rng = np.random.default_rng(1)
    f = random_field(grid, rng)
    np.testing.assert_allclose(ifft(grid, fft(grid, f.values)), f.values, rtol=0, atol=1e-13)
    lhs = np.sum(np.abs(f.values) ** 2) * grid.cell_volume
    rhs = np.sum(np.abs(f.spectrum) ** 2) * grid.cell_volume
    assert abs(lhs - rhs) <= 1e-12 * lhs


def test_multiplier_identity_and_plane_wave(grid):
    rng = np.random.default_rng(2)
    f = random_field(grid, rng)
    g = apply_multiplier(f, lambda xi: np.ones_like(xi))
    assert l2_norm(g - f) <= 1e-14 * l2_norm(f)
    k = 5
    wave = SpectralField.plane_wave(grid, (k,))
    out = apply_multiplier(wave, symbol(grid, 2))
    np.testing.assert_allclose(out.values, (k**2 + 1) * wave.values, atol=1e-12)


def test_multiplier_rejects_non_finite(grid):
    f = random_field(grid, np.random.default_rng(0))
    with pytest.raises(NumericDomainError):
        with np.errstate(divide="ignore", invalid="ignore"):
            apply_multiplier(f, lambda xi: 1.0 / (xi - xi))


def test_annulus_at_zero_keeps_mean(grid):
    f = random_field(grid, np.random.default_rng(3))
    p = project_annulus(f, 0.0, 2)
    assert np.count_nonzero(annulus_mask(grid, 0.0, 2)) == 1
    np.testing.assert_allclose(p.values, np.mean(f.values), atol=1e-13)


def test_annulus_lambda_eight():
    g = make_grid(1, 64, 2 * math.pi)
    kept = np.sort(np.abs(g.fft_freqs[annulus_mask(g, 8.0, 2)]))
    lo, hi = math.sqrt((math.sqrt(8) - 1) ** 2 - 1), math.sqrt((math.sqrt(8) + 1) ** 2 - 1)
    assert lo == pytest.approx(1.531, abs=1e-3) and hi == pytest.approx(3.695, abs=1e-3)
    np.testing.assert_array_equal(np.unique(kept), [2.0, 3.0])


def test_projections_are_orthogonal(grid):
    rng = np.random.default_rng(4)
    f, g = random_field(grid, rng), random_field(grid, rng)
    for P in (lambda u: project_annulus(u, 8.0, 2), lambda u: project_ball(u, 3.0)):
        Pf = P(f)
        assert l2_norm(P(Pf) - Pf) <= 1e-13 * l2_norm(f)
        assert abs(inner(Pf, g) - inner(f, P(g))) <= 1e-12
        assert l2_norm(Pf) ** 2 + l2_norm(f - Pf) ** 2 == pytest.approx(l2_norm(f) ** 2, rel=1e-12)


def test_ball_projection_cases(grid):
    f = random_field(grid, np.random.default_rng(5))
    assert l2_norm(project_ball(f, grid.max_abs_freq * 2) - f) <= 1e-14
    np.testing.assert_allclose(project_ball(f, 0.0).values, np.mean(f.values), atol=1e-13)
    np.testing.assert_array_equal(np.sort(grid.fft_freqs[ball_mask(grid, 2.0)]), [-2, -1, 0, 1, 2])


def test_norm_examples():
    g = make_grid(1, 32, 2 * math.pi)
    one = SpectralField(g, np.ones(32))
    assert l2_norm(one) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-14)
    # a mode with |xi|^2 = 3 does not exist on the integer lattice; rescale the box so it does
    g3 = make_grid(1, 32, 2 * math.pi / math.sqrt(3))
    u1 = SpectralField.plane_wave(g3, (1,))
    U = StateVector(u1, SpectralField.zeros(g3), 2)
    assert energy_norm(U) == pytest.approx(2 * l2_norm(u1), rel=1e-13)


def test_energy_norm_requires_s2(grid):
    U = StateVector(SpectralField.zeros(grid), SpectralField.zeros(grid), 1.5)
    with pytest.raises(ConfigurationError):
        energy_norm(U)


def test_hs_dominates_l2(grid):
    rng = np.random.default_rng(6)
    for _ in range(10):
        f = random_field(grid, rng)
        assert hs_norm(f, 2) >= l2_norm(f)


@settings(max_examples=200, deadline=None)
@given(lam=st.floats(0, 50), s=st.sampled_from([1, 1.5, 2, 3]))
def test_annulus_containment(lam, s):
    g = make_grid(1, 256, 16.0)
    kept = g.xi_abs[annulus_mask(g, lam, s)]
    assert np.all(kept <= lam + 2)


@settings(max_examples=30, deadline=None)
@given(a=st.complex_numbers(max_magnitude=10), b=st.complex_numbers(max_magnitude=10),
       seed=st.integers(0, 2**16), s=st.sampled_from([1, 2, 3]))
def test_multiplier_linearity(a, b, seed, s):
    g = make_grid(2, 16, 4.0)
    rng = np.random.default_rng(seed)
    f, h = random_field(g, rng), random_field(g, rng)
    m = symbol(g, s)
    lhs = apply_multiplier(f * a + h * b, m)
    rhs = apply_multiplier(f, m) * a + apply_multiplier(h, m) * b
    scale = float(m.max()) * (abs(a) + abs(b) + 1) * (l2_norm(f) + l2_norm(h))
    assert l2_norm(lhs - rhs) <= 1e-12 * scale


def test_multipliers_commute(grid):
    f = random_field(grid, np.random.default_rng(7))
    m1, m2 = symbol(grid, 2), annulus_mask(grid, 8.0, 2).astype(float)
    a = apply_multiplier(apply_multiplier(f, m1), m2)
    b = apply_multiplier(apply_multiplier(f, m2), m1)
    assert l2_norm(a - b) <= 1e-13 * l2_norm(a)


def test_field_is_immutable(grid):
    f = random_field(grid, np.random.default_rng(8))
    with pytest.raises(ValueError):
        f.values[0] = 1.0
