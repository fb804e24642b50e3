import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superburst.bifurcation import (
    CW_SR,
    NO_SR,
    PERIODIC_SR,
    ContractViolation,
    ReducedParams,
    ReducedState,
    char_coeffs,
    coupling_from_gnorm,
    critical_disorder,
    delta_from_linewidth,
    hopf_residual,
    hurwitz_margin,
    jacobian,
    linewidth_from_delta,
    nontrivial_eigenvalues,
    reference_reduced_params,
    periodic_onset,
    phase_diagram,
    reduced_derivs,
    steady_states,
    threshold_ratio,
    trivial_instability,
)
from superburst.core import ConfigError, DomainError, hz, reference_params


def draw_params(rng) -> ReducedParams:
    """Dimensionless draws with the nontrivial branch present."""
    while True:
        gp = rng.uniform(0.01, 2.0)
        p = ReducedParams(
            g_tilde=rng.uniform(0.1, 10.0),
            kappa=rng.uniform(0.1, 10.0),
            gamma_s=rng.uniform(0.01, 2.0),
            gamma_plus=gp,
            gamma_minus=rng.uniform(0.0, 1.0) * gp,
            delta=rng.uniform(0.0, 3.0),
        )
        if steady_states(p).nontrivial_valid:
            return p


def test_steady_state_residuals(rng):
    for _ in range(500):
        p = draw_params(rng)
        ss = steady_states(p)
        for s in (ss.trivial, ss.nontrivial_plus, ss.nontrivial_minus):
            r = reduced_derivs(s, p).to_vector()
            assert np.max(np.abs(r)) < 1e-12 * max(1.0, p.kappa, p.g_tilde)


def test_char_coeffs_match_numeric_polynomial(rng):
    worst = 0.0
    for _ in range(10_000):
        p = draw_params(rng)
        J = jacobian(steady_states(p).nontrivial_plus, p)
        ref = np.poly(J)[1:]
        got = np.array(char_coeffs(p))
        # scale each coefficient by the natural size of its degree
        s = max(p.kappa, p.g_tilde, p.gamma_s, p.gamma_plus, p.delta)
        scale = np.maximum(np.abs(ref), s ** np.arange(1, 5) * 1e-3)
        worst = max(worst, float(np.max(np.abs(got - ref) / scale)))
    assert worst < 1e-9


def test_jacobian_matches_finite_differences(rng):
    for _ in range(200):
        p = draw_params(rng)
        ss = steady_states(p).nontrivial_plus
        J = jacobian(ss, p)
        y0 = ss.to_vector()
        num = np.zeros((4, 4))
        for k in range(4):
            h = 1e-6 * max(1.0, abs(y0[k]))
            e = np.zeros(4)
            e[k] = h
            fp = reduced_derivs(ReducedState(*(y0 + e)), p).to_vector()
            fm = reduced_derivs(ReducedState(*(y0 - e)), p).to_vector()
            num[:, k] = (fp - fm) / (2 * h)
        np.testing.assert_allclose(num, J, rtol=1e-6, atol=1e-6 * np.abs(J).max())


@settings(max_examples=200, deadline=None)
@given(v=st.lists(st.floats(-10, 10), min_size=4, max_size=4), seed=st.integers(0, 2**31))
def test_z2_symmetry_exact(v, seed):
    p = draw_params(np.random.default_rng(seed))
    s = ReducedState(*v)
    a = reduced_derivs(s.flipped(), p)
    b = reduced_derivs(s, p).flipped()
    assert a == b


def test_nontrivial_pair_are_mirror_images(rng):
    p = draw_params(rng)
    ss = steady_states(p)
    assert ss.nontrivial_minus == ss.nontrivial_plus.flipped()
    np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(jacobian(ss.nontrivial_minus, p))), np.sort_complex(nontrivial_eigenvalues(p)))


def test_jacobian_contract():
    p = reference_reduced_params()
    with pytest.raises(ContractViolation):
        jacobian(ReducedState(1.0, 1.0, 0.0, 0.0), p)
    jacobian(ReducedState(1.0, 1.0, 0.0, 0.0), p, check=False)


def test_branch_absence_is_a_domain_error():
    p = reference_reduced_params().replace(g_tilde=hz(1e3))
    assert not steady_states(p).nontrivial_valid
    with pytest.raises(DomainError):
        char_coeffs(p)
    with pytest.raises(DomainError):
        nontrivial_eigenvalues(p)


def test_threshold_is_unit_ratio(rng):
    for _ in range(100):
        p = draw_params(rng)
        assert threshold_ratio(p) > 1
        assert trivial_instability(p)
        below = p.replace(g_tilde=p.g_tilde / math.sqrt(threshold_ratio(p)) * 0.999)
        assert not steady_states(below).nontrivial_valid
        if below.delta == 0:
            assert not trivial_instability(below)


def test_detuned_trivial_state_can_be_unstable_below_threshold():
    base = reference_reduced_params()
    p = base.replace(g_tilde=coupling_from_gnorm(0.18, base), delta=2 * base.gamma_s)
    assert not steady_states(p).nontrivial_valid
    assert trivial_instability(p)
    assert not trivial_instability(base.replace(g_tilde=coupling_from_gnorm(0.1, base), delta=2 * base.gamma_s))


def test_trivial_state_loses_stability_at_threshold():
    p = reference_reduced_params()
    assert threshold_ratio(p) > 1
    lam = np.linalg.eigvals(jacobian(steady_states(p).trivial, p))
    assert lam.real.max() > 0


def test_hopf_residual_sign_agrees_with_hurwitz(rng):
    for _ in range(300):
        p = draw_params(rng)
        c3, c2, c1, c0 = char_coeffs(p)
        if c1 <= 0:
            continue
        hr = hopf_residual(p.delta, p)
        # residual = -margin / (c1 c3) for positive c1, c3
        assert hr == pytest.approx(-hurwitz_margin(p) / (c1 * c3), rel=1e-9, abs=1e-12 * (abs(c2) + 1))


def test_critical_disorder_is_a_marginal_point():
    p = reference_reduced_params()
    hp = critical_disorder(p)
    assert abs(hp.residual) < 1e-6 * max(char_coeffs(p.replace(delta=hp.delta))[1], 1.0)
    assert abs(hp.eigenvalues.real.max()) < 1e-6 * p.gamma_s
    assert nontrivial_eigenvalues(p.replace(delta=0.9 * hp.delta)).real.max() < 0
    assert nontrivial_eigenvalues(p.replace(delta=1.1 * hp.delta)).real.max() > 0
    assert hp.linewidth == pytest.approx(linewidth_from_delta(hp.delta, p.gamma_s))


def test_linewidth_mapping_round_trip():
    gs = hz(16e3)
    for lw in (hz(32e3), hz(50e3), hz(160e3)):
        assert linewidth_from_delta(delta_from_linewidth(lw, gs), gs) == pytest.approx(lw)
    with pytest.raises(DomainError):
        delta_from_linewidth(hz(10e3), gs)


def test_from_model_maps_device_rates():
    rp = ReducedParams.from_model(reference_params())
    ref = reference_reduced_params()
    assert rp.g_tilde == pytest.approx(ref.g_tilde)
    assert rp.gamma_s == pytest.approx(ref.gamma_s)
    assert rp.gamma_plus == pytest.approx(ref.gamma_plus)
    assert rp.gamma_minus == pytest.approx(ref.gamma_minus)
    assert linewidth_from_delta(rp.delta, rp.gamma_s) == pytest.approx(hz(160e3))


def test_bad_reduced_params():
    with pytest.raises(ConfigError):
        ReducedParams(1.0, 0.0, 1.0, 1.0, 0.5)
    with pytest.raises(ConfigError):
        ReducedParams(1.0, 1.0, 1.0, 0.5, 1.0)


def test_phase_diagram_labels_and_boundaries():
    base = reference_reduced_params()
    pd = phase_diagram(np.linspace(0, 2.5, 60), np.linspace(0, 10, 40), base)
    assert set(pd.labels.ravel()) == {NO_SR, CW_SR, PERIODIC_SR}
    assert pd.label_at(0.0, 0.0) == NO_SR
    assert pd.threshold_boundary.shape[1] == 2 and pd.hopf_boundary.shape[1] == 2
    # on the threshold curve the branch appears
    for d, gn in pd.threshold_boundary[::7]:
        g = coupling_from_gnorm(gn, base)
        q = base.replace(g_tilde=g, delta=base.gamma_s * math.sqrt(d))
        assert threshold_ratio(q) == pytest.approx(1.0, rel=1e-9)
    # periodic region lies above the threshold, up to the bisection resolution
    step = pd.g_norm[1] - pd.g_norm[0]
    for d, gn in pd.hopf_boundary:
        j = np.argmin(np.abs(pd.disorder - d))
        assert gn >= pd.threshold_boundary[j, 1] - step * 2.0**-19
    rows = list(pd.rows())
    assert len(rows) == 60 * 40


def test_rate_factor_option_rescales_axis():
    base = reference_reduced_params()
    on = periodic_onset(0.0, base, True)
    off = periodic_onset(0.0, base, False)
    assert off == pytest.approx(on / math.sqrt(base.gamma_minus / base.gamma_plus), rel=1e-3)
    with pytest.raises(ConfigError):
        phase_diagram(np.array([]), np.array([0.0]), base)
    with pytest.raises(ConfigError):
        phase_diagram(np.array([1.0]), np.array([-1.0]), base)
