import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superburst.core import (
    ConfigError,
    DisorderSpec,
    DomainError,
    ModelParams,
    build_bins,
    cooperativity,
    effective_ensemble_size,
    ensemble_from_weights,
    hz,
    normalized_coupling,
    reference_params,
)


def test_cooperativity_arithmetic():
    p = ModelParams(kappa=hz(3.6e6), g=hz(10), ensemble_size=1e10, inhomogeneous_linewidth=hz(160e3))
    expected = 4 * 1e10 * 100 / (3.6e6 * 160e3)
    assert cooperativity(p) == pytest.approx(expected, rel=1e-12)
    assert cooperativity(p) == pytest.approx(6.94, abs=0.01)


def test_cooperativity_unity_at_threshold():
    kappa, lw, g = hz(3.6e6), hz(160e3), hz(10)
    n = kappa * lw / (4 * g**2)
    p = ModelParams(kappa=kappa, g=g, ensemble_size=n, inhomogeneous_linewidth=lw)
    assert cooperativity(p) == pytest.approx(1.0, rel=1e-12)


def test_cooperativity_detuned_cavity_uses_reduced_decay():
    p = ModelParams(kappa=hz(1e6), g=hz(10), ensemble_size=1e10, inhomogeneous_linewidth=hz(1e5), ensemble_detuning=hz(5e5))
    assert p.kappa_tot == pytest.approx(p.kappa / 2)
    with pytest.raises(DomainError):
        cooperativity(p.replace(inhomogeneous_linewidth=0.0))


def test_normalized_coupling_nominal_value(nominal):
    assert normalized_coupling(nominal) == pytest.approx(1.1 / 1.8, rel=1e-12)
    assert normalized_coupling(nominal) == pytest.approx(0.61, abs=0.01)


def test_effective_ensemble_size():
    n = effective_ensemble_size(hz(36e6), hz(92e6), 1.0)
    assert n == pytest.approx(math.exp(-4 * math.log(2) * (36 / 92) ** 2), rel=1e-12)
    assert n == pytest.approx(0.654, abs=1e-3)
    with pytest.raises(DomainError):
        effective_ensemble_size(0.0, 0.0, 1.0)


@pytest.mark.parametrize("field", ["g", "gamma", "gamma1", "pump", "n_thermal", "inhomogeneous_linewidth"])
def test_negative_rates_rejected(field):
    kwargs = dict(kappa=1.0, g=1.0)
    kwargs[field] = -1.0
    with pytest.raises(ConfigError):
        ModelParams(**kwargs)


def test_nonpositive_kappa_and_ensemble_rejected():
    with pytest.raises(ConfigError):
        ModelParams(kappa=0.0, g=1.0)
    with pytest.raises(ConfigError):
        ModelParams(kappa=1.0, g=1.0, ensemble_size=0.5)


def test_kappa_s_is_sum_of_decays(nominal):
    assert nominal.kappa_s == pytest.approx(hz(32e3))
    assert nominal.collective_coupling == pytest.approx(hz(1.1e6))


@settings(max_examples=50, deadline=None)
@given(M=st.integers(0, 100).map(lambda k: 2 * k + 1), span=st.floats(0.5, 4.0), n=st.floats(1.0, 1e12))
def test_gaussian_bins_conserve_population(M, span, n):
    ens = build_bins(DisorderSpec("gaussian", hz(160e3), half_span_fwhm=span), n, M)
    assert ens.M == M
    assert abs(ens.weights.sum() - 1.0) <= 1e-12
    assert ens.populations.sum() == pytest.approx(n, rel=1e-12)
    assert np.all(ens.weights >= 0)
    np.testing.assert_allclose(ens.detunings, -ens.detunings[::-1], atol=1e-9 * hz(160e3))
    np.testing.assert_allclose(ens.weights, ens.weights[::-1], rtol=1e-9, atol=1e-15)


def test_gaussian_bins_center_on_zero():
    ens = build_bins(DisorderSpec("gaussian", hz(160e3)), 1e10, 129)
    assert ens.detunings[64] == pytest.approx(0.0, abs=1e-6)
    assert ens.weights[64] == ens.weights.max()
    assert ens.bin_width == pytest.approx(4 * hz(160e3) / 129)


def test_even_gaussian_bin_count_rejected():
    with pytest.raises(ConfigError):
        build_bins(DisorderSpec("gaussian", hz(160e3)), 1e10, 100)


def test_sampled_bins_are_seeded():
    spec = DisorderSpec("gaussian", hz(160e3), rng_seed=7, sampled=True)
    a = build_bins(spec, 1000, 33)
    b = build_bins(spec, 1000, 33)
    np.testing.assert_array_equal(a.weights, b.weights)
    assert np.allclose(a.weights * 1000, np.round(a.weights * 1000))


def test_other_disorder_kinds():
    assert build_bins(DisorderSpec("none"), 5.0).M == 1
    two = build_bins(DisorderSpec("two_delta", 3.0), 10.0)
    np.testing.assert_array_equal(two.detunings, [-3.0, 3.0])
    np.testing.assert_array_equal(two.populations, [5.0, 5.0])
    tab = build_bins(DisorderSpec("table", table=((2.0, 0.25), (-1.0, 0.75))), 4.0)
    np.testing.assert_array_equal(tab.detunings, [-1.0, 2.0])
    np.testing.assert_array_equal(tab.populations, [3.0, 1.0])


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="nope"),
        dict(kind="gaussian", width=-1.0),
        dict(kind="table", table=((0.0, -0.5), (1.0, 1.5))),
        dict(kind="table", table=((0.0, 0.5),)),
        dict(kind="table"),
    ],
)
def test_bad_disorder_rejected(kwargs):
    with pytest.raises(ConfigError):
        DisorderSpec(**kwargs)


def test_ensemble_from_weights_sorts():
    ens = ensemble_from_weights([1.0, -1.0], [0.3, 0.7], 10.0)
    np.testing.assert_array_equal(ens.detunings, [-1.0, 1.0])
    np.testing.assert_allclose(ens.populations, [7.0, 3.0])


def test_with_collective_coupling_round_trip():
    p = reference_params().with_collective_coupling(hz(2e6))
    assert p.collective_coupling == pytest.approx(hz(2e6))
    assert p.ensemble_size == 1e10
