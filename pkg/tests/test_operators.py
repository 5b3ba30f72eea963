import math

import numpy as np
import pytest

from conftest import random_state
from oracles import dense_resolvent_sigma_min, free_sigma_min, uniform_damping_sigma_min
from fracdamp.damping import make_damping, thickness
from fracdamp.errors import ConfigurationError, NumericDomainError
from fracdamp.operators import (WPair, absorb_damping_estimate, apply_A, check_nyquist, check_resolvent2_chain,
                                free_norm_identity_terms, free_resolvent_norm_exact, resolvent_sigma_min,
                                resolvent_sweep, w_inverse, w_transform)
from fracdamp.spectral_core import (SpectralField, StateVector, energy_inner, energy_norm, l2_norm, make_grid,
                                    symbol)
from fracdamp.uncertainty import Envelope, envelope_fit, quadform_sweep

G = make_grid(1, 256, 16.0)


def test_apply_A_on_mode():
    g = make_grid(1, 32, 2 * math.pi)
    mode = SpectralField.plane_wave(g, (3,))
    out = apply_A(StateVector(mode, SpectralField.zeros(g), 2))
    assert l2_norm(out.u1) == 0
    np.testing.assert_allclose(out.u2.values, -10 * mode.values, atol=1e-12)


def test_apply_A_needs_s2():
    U = random_state(G, 1.5, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        apply_A(U)


def test_dissipation_identity():
    rng = np.random.default_rng(1)
    gamma = make_damping(G, "stripes", period=2.0, duty=0.5, height=1.3)
    for _ in range(50):
        U = random_state(G, 2, rng)
        lhs = energy_inner(apply_A(U, gamma), U).real
        rhs = -l2_norm(U.u2.pointwise(np.sqrt(gamma.gamma))) ** 2
        assert abs(lhs - rhs) <= 1e-11 * abs(rhs)


def test_free_operator_is_skew_adjoint():
    rng = np.random.default_rng(2)
    for s in (2, 3):
        for _ in range(20):
            U, V = random_state(G, s, rng), random_state(G, s, rng)
            a = energy_inner(apply_A(U), V) + energy_inner(U, apply_A(V))
            scale = energy_norm(apply_A(U)) * energy_norm(V) + energy_norm(U) * energy_norm(apply_A(V))
            assert abs(a) <= 1e-11 * scale
            assert abs(energy_inner(apply_A(U), U).real) <= 1e-11 * scale


def test_w_transform_examples():
    rng = np.random.default_rng(3)
    U = random_state(G, 2, rng)
    zero = SpectralField.zeros(G)
    W = w_transform(StateVector(U.u1, zero, 2))
    assert l2_norm(W.w1 - W.w2) == 0
    expected = SpectralField.from_spectrum(G, symbol(G, 2, "half") * U.u1.spectrum)
    assert l2_norm(W.w1 - expected) <= 1e-14 * l2_norm(expected)
    W = w_transform(StateVector(zero, U.u2, 2))
    assert l2_norm(W.w1 - U.u2 * (-1j)) <= 1e-15 and l2_norm(W.w2 - U.u2 * 1j) <= 1e-15


@pytest.mark.parametrize("s", [2, 2.5, 4])
def test_w_roundtrip_and_parallelogram(s):
    rng = np.random.default_rng(4)
    for _ in range(10):
        U = random_state(G, s, rng)
        W = w_transform(U)
        back = w_inverse(W, s)
        assert energy_norm(back - U) <= 1e-12 * energy_norm(U)
        lhs = l2_norm(W.w1) ** 2 + l2_norm(W.w2) ** 2
        assert lhs == pytest.approx(2 * energy_norm(U) ** 2, rel=1e-12)


def test_free_norm_identity():
    rng = np.random.default_rng(5)
    for _ in range(20):
        U = random_state(G, 2, rng)
        lam = rng.uniform(-30, 30)
        lhs, rhs = free_norm_identity_terms(U, lam)
        assert lhs == pytest.approx(rhs, rel=1e-11)


def test_free_resolvent_exact_examples():
    g = make_grid(1, 64, 2 * math.pi)
    assert free_resolvent_norm_exact(0.5, 2, g) == pytest.approx(2.0, rel=1e-14)
    with pytest.raises(NumericDomainError):
        free_resolvent_norm_exact(math.sqrt(5), 2, g)
    top = float(symbol(g, 2, "half").max())
    assert free_resolvent_norm_exact(top + 1.5, 2, g) < 1
    near = [free_resolvent_norm_exact(math.sqrt(5) + d, 2, g) for d in (1e-2, 1e-4, 1e-6)]
    assert near[0] < near[1] < near[2]


def test_sigma_min_free_matches_exact():
    rng = np.random.default_rng(6)
    for lam in rng.uniform(-20, 20, 5):
        got = resolvent_sigma_min(None, lam, 2, tol=1e-10, grid=G).sigma_min
        assert got == pytest.approx(1 / free_resolvent_norm_exact(lam, 2, G), rel=1e-8)
        assert got == pytest.approx(free_sigma_min(lam, 2, 256, 16.0), rel=1e-8)


def test_sigma_min_uniform_matches_block_oracle():
    rng = np.random.default_rng(7)
    for _ in range(4):
        lam, c0 = rng.uniform(-20, 20), rng.uniform(0.2, 3.0)
        got = resolvent_sigma_min(c0, lam, 2, tol=1e-10, grid=G).sigma_min
        assert got == pytest.approx(uniform_damping_sigma_min(lam, c0, 2, 256, 16.0), rel=1e-7)


def test_sigma_min_matches_dense_svd():
    g = make_grid(1, 64, 16.0)
    rng = np.random.default_rng(8)
    for k in range(4):
        gamma = make_damping(g, "bumps", centers=[[rng.uniform(-8, 8)]], width=1.0, heights=rng.uniform(0.5, 2))
        lam = rng.uniform(-15, 15)
        got = resolvent_sigma_min(gamma, lam, 2, tol=1e-10).sigma_min
        assert got == pytest.approx(dense_resolvent_sigma_min(gamma.gamma, lam, 2, 16.0), rel=1e-7)


def test_sigma_min_singular_pencil():
    g = make_grid(1, 64, 2 * math.pi)
    with pytest.raises(NumericDomainError):
        resolvent_sigma_min(None, math.sqrt(2), 2, grid=g)


def test_sweep_symmetry():
    gamma = make_damping(G, "stripes", period=2.0, duty=0.5)
    sweep = resolvent_sweep(gamma, np.linspace(-10, 10, 11), 2, tol=1e-10)
    assert sweep.symmetry_defect() <= 1e-9
    assert np.all(sweep.sigma_min > 0)


def test_sweep_refinement_adds_points():
    gamma = make_damping(G, "stripes", period=2.0, duty=0.5)
    lams = np.linspace(0, 10, 11)
    coarse = resolvent_sweep(gamma, lams, 2)
    fine = resolvent_sweep(gamma, lams, 2, refine=1)
    assert len(fine.lambdas) > len(coarse.lambdas)
    assert set(np.round(lams, 12)) <= set(np.round(fine.lambdas, 12))
    assert np.all(np.diff(fine.lambdas) > 0)


def test_nyquist_rejected():
    g = make_grid(1, 32, 2 * math.pi)
    nyq = SpectralField.plane_wave(g, (-16,))
    with pytest.raises(ConfigurationError):
        check_nyquist(StateVector(nyq, SpectralField.zeros(g), 2))


# ---------------------------------------------------------------- chain check

@pytest.fixture(scope="module")
def stripes_setup():
    g = make_grid(1, 256, 16.0)
    gamma = make_damping(g, "stripes", period=2.0, duty=0.5)
    omega = gamma.level_set(0.5)
    curve = quadform_sweep(g, 1.0, omega, np.linspace(0, 12, 13))
    return g, gamma, omega, curve.envelope


def test_chain_with_u2_zero(stripes_setup):
    g, _, omega, env = stripes_setup
    rng = np.random.default_rng(9)
    U = random_state(g, 2, rng)
    U = StateVector(U.u1, SpectralField.zeros(g), 2)
    W = w_transform(U)
    assert l2_norm(W.w1 - W.w2) == 0
    rep = check_resolvent2_chain(U, 0.0, omega, env)
    assert rep.holds
    # with w1 = w2 the first step is the quadratic-form bound applied to w1 alone
    e = rep.constants["e"]
    first = rep.terms[1] - e * l2_norm(W.w2) ** 2
    assert first >= e * l2_norm(W.w1) ** 2
    assert rep.terms[0] == pytest.approx(2 * e * l2_norm(W.w1) ** 2, rel=1e-12)


@pytest.mark.parametrize("lam", [3.0, -3.0, 10.0, -10.0])
def test_chain_random_states(stripes_setup, lam):
    g, _, omega, env = stripes_setup
    rng = np.random.default_rng(10)
    for _ in range(10):
        rep = check_resolvent2_chain(random_state(g, 2, rng), lam, omega, env)
        assert rep.holds, rep.to_dict()
        assert all(t > 0 for t in rep.terms)


def test_chain_flags_a_bad_envelope(stripes_setup):
    g, _, omega, _ = stripes_setup
    rng = np.random.default_rng(11)
    bogus = Envelope(c=1e8, C=0.0, slope=0.0, intercept=math.log(1e8), max_gap=0.0, floor=True)
    rep = check_resolvent2_chain(random_state(g, 2, rng), 3.0, omega, bogus)
    assert not rep.holds and rep.flagged[0]


# ---------------------------------------------------------------- absorption

def test_absorption_requires_certificate(stripes_setup):
    g, gamma, _, env = stripes_setup
    with pytest.raises(ConfigurationError):
        absorb_damping_estimate(gamma, 0.5, [0.0], env, None)
    thin = make_damping(g, "compact-support", width=1.0)
    with pytest.raises(ConfigurationError):
        absorb_damping_estimate(thin, 0.5, [0.0], env, thickness(thin, 0.5, 4.0))
    with pytest.raises(ConfigurationError):
        absorb_damping_estimate(gamma, 0.5, [0.0], env, thickness(gamma, 0.4, 2.0))


def test_absorption_uniform_minorizes_block_oracle():
    g = make_grid(1, 256, 16.0)
    gamma = make_damping(g, "uniform", level=1.0)
    omega = gamma.level_set(0.5)
    lams = np.linspace(-20, 20, 41)
    env = quadform_sweep(g, 1.0, omega, np.unique(np.abs(lams))).envelope
    oracle = np.array([uniform_damping_sigma_min(l, 1.0, 2, 256, 16.0) for l in lams])
    est = absorb_damping_estimate(gamma, 0.5, lams, env, thickness(gamma, 0.5, 2.0), oracle)
    assert est.minorizes
    assert np.all(est.predicted <= oracle**2)


def test_absorption_weaker_for_larger_damping(stripes_setup):
    g, gamma, _, env = stripes_setup
    doubled = make_damping(g, "stripes", period=2.0, duty=0.5, height=2.0)
    lams = np.linspace(-10, 10, 5)
    a = absorb_damping_estimate(gamma, 0.5, lams, env, thickness(gamma, 0.5, 2.0))
    b = absorb_damping_estimate(doubled, 0.5, lams, env, thickness(doubled, 0.5, 2.0))
    assert b.c < a.c
    assert np.all(b.predicted < a.predicted)


def test_absorption_stripes_below_measurement(stripes_setup):
    g, gamma, omega, env = stripes_setup
    lams = np.linspace(-12, 12, 13)
    sweep = resolvent_sweep(gamma, lams, 2)
    est = absorb_damping_estimate(gamma, 0.5, lams, env, thickness(gamma, 0.5, 2.0), sweep.sigma_min)
    assert est.minorizes and est.worst_ratio < 1
