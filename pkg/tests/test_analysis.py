import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superburst.analysis import (
    EmissionTrace,
    analytic_burst,
    burst_period_formula,
    data_collapse,
    detect_bursts,
    fit_noise_quanta,
    onset_phases,
    psd,
    rayleigh_test,
    scaling_fit,
    st_linewidth,
)
from superburst.core import DomainError, ModelParams, hz


def pulse_train(period=80e-6, dt=1e-8, duration=1e-3, width=2e-6, phase=0.0, amp=1.0, floor=1e-3):
    t = np.arange(0, duration, dt)
    x = np.mod(t - phase, period)
    p = floor + amp * np.exp(-0.5 * ((x - period / 2) / width) ** 2)
    return EmissionTrace(0.0, dt, p)


def test_trace_validation_and_tail():
    with pytest.raises(DomainError):
        EmissionTrace(0.0, 0.0, np.ones(5))
    with pytest.raises(DomainError):
        EmissionTrace(0.0, 1.0, np.ones(1))
    tr = EmissionTrace(1.0, 0.5, np.arange(10.0))
    tail = tr.tail(0.2)
    assert tail.t0 == 2.0 and tail.power[0] == 2.0
    np.testing.assert_array_equal(tail.t, tr.t[2:])


@pytest.mark.parametrize("period", [40e-6, 60e-6, 80e-6])
def test_detect_bursts_recovers_period(period):
    bt = detect_bursts(pulse_train(period))
    assert bt.period == pytest.approx(period, rel=1e-6)
    assert np.all(bt.peaks > 0.9)
    spacing = np.diff(bt.onsets)
    np.testing.assert_allclose(spacing, period, rtol=1e-6)
    assert bt.settled[-1] and not bt.settled[0]


def test_detect_bursts_merges_ringing():
    tr = pulse_train(80e-6)
    t = tr.t
    ring = 0.2 * np.exp(-0.5 * ((np.mod(t, 80e-6) - 40e-6 - 20e-6) / 1e-6) ** 2)
    bt = detect_bursts(EmissionTrace(0.0, tr.dt, tr.power + ring))
    assert bt.period == pytest.approx(80e-6, rel=1e-3)
    unmerged = detect_bursts(EmissionTrace(0.0, tr.dt, tr.power + ring), merge_fraction=0.0)
    assert len(unmerged) >= 2 * len(bt) - 1


def test_detect_bursts_flat_trace():
    bt = detect_bursts(EmissionTrace(0.0, 1.0, np.ones(100)))
    assert len(bt) == 0 and math.isnan(bt.period)
    with pytest.raises(DomainError):
        detect_bursts(EmissionTrace(0.0, 1.0, np.ones(10)))


def test_rayleigh_limits(rng):
    r, z, p = rayleigh_test(np.zeros(50))
    assert r == pytest.approx(1.0) and p < 1e-15
    r, z, p = rayleigh_test(rng.uniform(0, 2 * math.pi, 2000))
    assert r < 0.1 and p > 0.01


def test_onset_phases_of_locked_and_random_trains(rng):
    T = 80e-6
    locked = [detect_bursts(pulse_train(T, dt=4e-8)) for _ in range(10)]
    stats = onset_phases(locked, T)
    assert stats.p_value < 1e-3
    np.testing.assert_allclose(stats.phases, stats.phases[0])
    rand = [detect_bursts(pulse_train(T, dt=4e-8, phase=ph)) for ph in rng.uniform(0, T, 40)]
    assert onset_phases(rand, T).p_value > 0.01
    with pytest.raises(DomainError):
        onset_phases(locked, 0.0)


def test_psd_normalization_and_comb(rng):
    tr = pulse_train(80e-6)
    sp = psd(tr, 0.2)
    seg = tr.power[int(round(0.2 * (tr.power.size - 1))) :]
    assert sp.a_tot == pytest.approx(np.mean(seg**2), rel=1e-9)
    # the strongest line is DC or a harmonic of the burst rate
    assert sp.peak_freq * 80e-6 == pytest.approx(round(sp.peak_freq * 80e-6), abs=1e-9)
    assert 0.5 < sp.crystalline_fraction <= 1.0
    # spectral weight sits at harmonics of 1/T
    harmonic = np.argmin(np.abs(sp.freq - 1 / 80e-6))
    assert sp.psd[harmonic] > 100 * np.median(sp.psd)
    cw = psd(EmissionTrace(0.0, 1e-8, np.ones(5000) + 1e-6 * rng.normal(size=5000)))
    assert cw.crystalline_fraction < 1e-6


def test_psd_amplitude_two_sided():
    t = np.arange(4096) * 1e-6
    amp = np.exp(2j * math.pi * 10e3 * t)
    sp = psd(EmissionTrace(0.0, 1e-6, np.abs(amp) ** 2, amp), 0.0, use_amplitude=True)
    assert sp.peak_freq == pytest.approx(10e3, abs=sp.freq[1] - sp.freq[0])
    assert sp.a_tot == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(DomainError):
        psd(EmissionTrace(0.0, 1e-6, np.ones(100)), use_amplitude=True)


def test_analytic_burst_formulas():
    p = ModelParams(kappa=hz(3.6e6), g=hz(10), ensemble_size=1e9)
    th = 0.05
    ab = analytic_burst(p, th)
    rate = 2 * 1e9 * hz(10) ** 2 / hz(3.6e6)
    assert ab.delay == pytest.approx(-math.log(math.tan(th / 2)) / rate)
    assert ab.width == pytest.approx(hz(3.6e6) / (1e9 * hz(10) ** 2) * math.log(1 + math.sqrt(2)))
    assert ab.inversion(ab.delay) == pytest.approx(0.0, abs=1e-12)
    assert ab.inversion(0.0) == pytest.approx(math.cos(th), rel=1e-9)
    # the width is the FWHM of the emitted power, which follows -du/dt
    t = np.linspace(ab.delay - 5 * ab.width, ab.delay + 5 * ab.width, 200001)
    P = 1 - np.asarray(ab.inversion(t)) ** 2
    above = t[P > 0.5]
    assert above[-1] - above[0] == pytest.approx(ab.width, rel=1e-4)
    assert analytic_burst(p, 2.0).delay < 0
    with pytest.raises(DomainError):
        analytic_burst(p, 0.0)


def test_burst_period_formula():
    D, g, k, lw = hz(760), hz(11), hz(3.6e6), hz(160e3)
    thr = k * lw / (4 * g * g)
    bp = burst_period_formula(D, 0.5 * thr, 4 * thr, g, k, lw)
    assert bp.bursts
    assert bp.exact == pytest.approx(math.log(3.5 / 3) / D)
    assert bp.approx == pytest.approx(1 / (4 * D))
    # doubling the saturated population halves the approximate period
    assert burst_period_formula(D, 0.5 * thr, 8 * thr, g, k, lw).approx == pytest.approx(bp.approx / 2)
    assert not burst_period_formula(D, 0.0, 0.5 * thr, g, k, lw).bursts


@settings(max_examples=50, deadline=None)
@given(a=st.floats(-3, 3), c=st.floats(1e-3, 1e3))
def test_scaling_fit_exact_power_law(a, c):
    n = np.array([1e9, 2e9, 5e9, 1e10])
    fit = scaling_fit(list(zip(n, c * n**a)))
    assert fit.exponent == pytest.approx(a, abs=1e-9)
    assert fit.prefactor == pytest.approx(c, rel=1e-6)
    assert fit.residual < 1e-9


def test_scaling_fit_rejects_bad_input():
    with pytest.raises(DomainError):
        scaling_fit([(1, 1), (2, 2)])
    with pytest.raises(DomainError):
        scaling_fit([(1, 1), (2, -2), (3, 3)])


def test_data_collapse_of_self_similar_traces():
    traces = []
    for n in (1.0, 1.5, 2.0):
        T = 80e-6 / n
        base = pulse_train(T, dt=1e-8, duration=1e-3, width=2e-6 / n, amp=n * n, floor=1e-3 * n * n)
        traces.append((base, n * 1e10))
    assert data_collapse(traces).metric < 0.02
    bad = [(pulse_train(80e-6), 1e10), (pulse_train(80e-6), 2e10)]
    assert data_collapse(bad).metric > 0.15
    with pytest.raises(DomainError):
        data_collapse(traces[:1])


def test_st_linewidth():
    kc, ka = hz(3.6e6), hz(32e3)
    q = st_linewidth(1e6, kc, ka)
    assert q == pytest.approx((ka * kc / (ka + kc)) ** 2 / (4 * math.pi * 1e6 * kc))
    assert st_linewidth(2e6, kc, ka, 2.0, 1.0) == pytest.approx(q * 4 / 2)
    with pytest.raises(DomainError):
        st_linewidth(0.0, kc, ka)


def test_fit_noise_quanta_recovers_value(rng):
    kc, ka = hz(3.6e6), hz(32e3)
    n = np.geomspace(1e5, 1e7, 12)
    lw = np.array([st_linewidth(x, kc, ka, 3.2, 2.6) for x in n]) * (1 + 0.005 * rng.normal(size=n.size))
    assert fit_noise_quanta(n, lw, kc, ka) == pytest.approx(5.8, abs=0.1)
