import numpy as np
import pytest

from superburst.core import DisorderSpec, ModelParams, build_bins, hz, reference_params
from superburst.integrate import IntegratorConfig
from superburst.meanfield import (
    AdiabaticModel,
    CavityModel,
    MeanFieldState,
    SpinState,
    ThreeLevelModel,
    ThreeLevelState,
    mf_derivs_adiabatic,
    mf_derivs_cavity,
    mf_derivs_three_level,
    reference_three_level_params,
    seeded_state,
    steady_emission_frequency,
    tipped_state,
)


@pytest.fixture
def ens():
    return build_bins(DisorderSpec("gaussian", hz(160e3)), 1e10, 9)


def random_mf(rng, M):
    return MeanFieldState(complex(*rng.normal(size=2)), rng.normal(size=M) + 1j * rng.normal(size=M), rng.uniform(-1, 1, M))


def test_z2_symmetry(nominal, ens, rng):
    st = random_mf(rng, ens.M)
    d = mf_derivs_cavity(st, nominal, ens)
    flipped = MeanFieldState(-st.cavity_amp, -st.coherence, st.inversion)
    df = mf_derivs_cavity(flipped, nominal, ens)
    assert df.cavity_amp == pytest.approx(-d.cavity_amp, rel=1e-14)
    np.testing.assert_allclose(df.coherence, -d.coherence, rtol=1e-14)
    np.testing.assert_allclose(df.inversion, d.inversion, rtol=1e-14)


def test_dark_state_only_relaxes(nominal, ens):
    st = MeanFieldState(0j, np.zeros(ens.M, complex), np.full(ens.M, -1.0))
    d = mf_derivs_cavity(st, nominal, ens)
    assert d.cavity_amp == 0
    np.testing.assert_array_equal(d.coherence, 0)
    np.testing.assert_allclose(d.inversion, 2 * nominal.pump)


def test_bloch_length_conserved_without_decay(ens, rng):
    p = ModelParams(kappa=hz(1e6), g=hz(10), ensemble_size=1e10)
    st = tipped_state(ens.M, 0.3, cavity_amp=0.1)
    cfg = IntegratorConfig((0.0, 2e-6), rel_tol=1e-11, abs_tol=1e-13, output_dt=1e-7)
    tr = CavityModel(p, ens).run(st, cfg)
    final = MeanFieldState.from_vector(tr.final_state, ens.M)
    np.testing.assert_allclose(4 * abs(final.coherence) ** 2 + final.inversion**2, 1.0, rtol=1e-8)


def test_excitation_budget_without_decay(ens):
    # cavity photons plus spin excitations are conserved when nothing decays
    p = ModelParams(kappa=1e-30, g=hz(10), ensemble_size=1e10)
    m = CavityModel(p, ens)
    tr = m.run(tipped_state(ens.M, 0.3), IntegratorConfig((0.0, 1e-6), rel_tol=1e-11, abs_tol=1e-13, output_dt=1e-7), keep_states=True)
    budget = [abs(complex(y[0], y[1])) ** 2 + np.dot(ens.populations, y[2 + 2 * ens.M :]) / 2 for y in tr.states]
    np.testing.assert_allclose(budget, budget[0], rtol=1e-9)


def test_adiabatic_matches_slaved_cavity(nominal, ens, rng):
    s = rng.normal(size=ens.M) * 1e-3 + 1j * rng.normal(size=ens.M) * 1e-3
    u = rng.uniform(-1, 1, ens.M)
    am = AdiabaticModel(nominal, ens)
    y = SpinState(s, u).to_vector()
    b = am.field(y)
    # the field is the cavity fixed point for the given spins
    full = mf_derivs_cavity(MeanFieldState(b, s, u), nominal, ens)
    assert abs(full.cavity_amp) <= 1e-12 * nominal.kappa * abs(b)
    d = mf_derivs_adiabatic(SpinState(s, u), nominal, ens)
    np.testing.assert_allclose(d.coherence, full.coherence, rtol=1e-10)
    np.testing.assert_allclose(d.inversion, full.inversion, rtol=1e-10)


def test_adiabatic_tracks_cavity_model_in_bad_cavity_limit():
    p = ModelParams(kappa=hz(3.6e6), g=hz(10), ensemble_size=1e8)
    ens = build_bins(DisorderSpec("none"), p.ensemble_size)
    cfg = IntegratorConfig((0.0, 4e-5), rel_tol=1e-10, abs_tol=1e-12, output_dt=1e-8)
    full = CavityModel(p, ens).run(tipped_state(1, 0.1), cfg)
    st = tipped_state(1, 0.1)
    adi = AdiabaticModel(p, ens).run(SpinState(st.coherence, st.inversion), cfg)
    i, j = np.argmax(full.trace.power), np.argmax(adi.trace.power)
    assert adi.t[j] == pytest.approx(full.t[i], rel=0.02)
    assert adi.trace.power[j] == pytest.approx(full.trace.power[i], rel=0.05)


def test_emission_frequency_pulling():
    p = ModelParams(kappa=10.0, g=1.0, gamma=2.0, cavity_freq=0.0, ensemble_detuning=6.0)
    assert steady_emission_frequency(p) == pytest.approx(10 * 6 / 12)


def test_seeded_state():
    st = seeded_state(3, 0.5, 1e-3)
    np.testing.assert_array_equal(st.inversion, 0.5)
    np.testing.assert_array_equal(st.coherence, 1e-3)
    assert MeanFieldState.from_vector(st.to_vector(), 3).inversion.tolist() == [0.5] * 3


def test_three_level_population_conserved(rng):
    p = reference_three_level_params()
    ens = build_bins(DisorderSpec("gaussian", hz(160e3)), p.ensemble_size, 7)
    m = ThreeLevelModel(p, ens)
    y = ThreeLevelState.ground(ens.M, 1e-3).to_vector() + rng.normal(size=m.size) * 1e-3
    d = mf_derivs_three_level(ThreeLevelState.from_vector(y, ens.M), p, ens)
    np.testing.assert_allclose(d.p_g + d.p_d + d.p_u, 0.0, atol=1e-9 * p.omega_rabi)
    tr = m.run(ThreeLevelState.ground(ens.M, 1e-3), IntegratorConfig((0.0, 2e-5), output_dt=1e-6))
    np.testing.assert_allclose(tr.observables["populations"].sum(axis=1), 1.0, atol=1e-8)


def test_three_level_ground_is_quiet_without_drive():
    p = reference_three_level_params(omega_rabi=0.0, eta_b=0.0)
    ens = build_bins(DisorderSpec("none"), p.ensemble_size)
    d = ThreeLevelModel(p, ens).rhs(0.0, ThreeLevelState.ground(1).to_vector())
    np.testing.assert_array_equal(d, 0.0)
