"""Emission-trace analysis: bursts, periodicity, spectra, scaling and closed forms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .core import DomainError, ModelParams


@dataclass(frozen=True)
class EmissionTrace:
    """Output power sampled every ``dt`` from ``t0``; ``amplitude`` optionally keeps the complex field."""

    t0: float
    dt: float
    power: np.ndarray
    amplitude: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise DomainError("trace dt must be > 0")
        p = np.asarray(self.power, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise DomainError("trace needs at least two power samples")
        object.__setattr__(self, "power", p)
        if self.amplitude is not None:
            a = np.asarray(self.amplitude, dtype=complex)
            if a.shape != p.shape:
                raise DomainError("amplitude and power lengths differ")
            object.__setattr__(self, "amplitude", a)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.power.size)

    @property
    def duration(self) -> float:
        return self.dt * (self.power.size - 1)

    def scaled(self, factor: float) -> "EmissionTrace":
        return EmissionTrace(self.t0, self.dt, self.power * factor, self.amplitude)

    def tail(self, start_fraction: float) -> "EmissionTrace":
        """The part after ``start_fraction`` of the samples, keeping absolute times."""
        i = int(start_fraction * self.power.size)
        amp = None if self.amplitude is None else self.amplitude[i:]
        return EmissionTrace(self.t0 + i * self.dt, self.dt, self.power[i:], amp)


@dataclass(frozen=True)
class BurstTrain:
    onsets: np.ndarray
    peaks: np.ndarray
    peak_times: np.ndarray
    settled: np.ndarray
    period: float

    def __len__(self) -> int:
        return int(self.onsets.size)

    @property
    def settled_onsets(self) -> np.ndarray:
        return self.onsets[self.settled]

    @property
    def settled_peaks(self) -> np.ndarray:
        return self.peaks[self.settled]


@dataclass(frozen=True)
class Spectrum:
    freq: np.ndarray
    psd: np.ndarray
    peak_freq: float
    a_tot: float
    a_sb: float
    window: float

    @property
    def crystalline_fraction(self) -> float:
        if self.a_tot <= 0:
            return 0.0
        return min(1.0, max(0.0, self.a_sb / self.a_tot))


def _empty_train() -> BurstTrain:
    e = np.empty(0)
    return BurstTrain(e, e, e, np.empty(0, dtype=bool), math.nan)


def detect_bursts(
    trace: EmissionTrace,
    threshold_factor: float = 3.0,
    settle_fraction: float = 0.2,
    merge_fraction: float = 0.25,
) -> BurstTrain:
    """Find bursts as runs of power above ``threshold_factor * median(power)``.

    The onset is the linearly interpolated up-crossing. Runs separated by a
    gap shorter than ``merge_fraction`` times the longest gap are merged, so
    the ringing tail of a burst is not counted as separate bursts; set it to
    0 to disable. Bursts starting after ``settle_fraction`` of the trace are
    settled; the period is the median onset spacing among them.
    """
    p = trace.power
    if p.size < 16:
        raise DomainError("burst detection needs at least 16 samples")
    level = threshold_factor * float(np.median(p))
    above = p > level
    if not above.any() or above.all():
        return _empty_train()
    edges = np.diff(above.astype(np.int8))
    starts = np.flatnonzero(edges == 1) + 1
    ends = np.flatnonzero(edges == -1) + 1
    if above[0]:
        # first run has no up-crossing
        ends = ends[1:]
    if above[-1]:
        ends = np.append(ends, p.size)
    n = min(starts.size, ends.size)
    starts, ends = starts[:n], ends[:n]
    if n == 0:
        return _empty_train()

    if merge_fraction > 0 and n > 1:
        gaps = starts[1:] - ends[:-1]
        keep = gaps >= merge_fraction * gaps.max()
        starts = np.concatenate([[starts[0]], starts[1:][keep]])
        ends = np.concatenate([ends[:-1][keep], [ends[-1]]])

    t = trace.t
    onsets = np.empty(starts.size)
    peaks = np.empty(starts.size)
    peak_times = np.empty(starts.size)
    for k, (a, b) in enumerate(zip(starts, ends)):
        lo, hi = p[a - 1], p[a]
        frac = (level - lo) / (hi - lo) if hi != lo else 0.0
        onsets[k] = t[a - 1] + frac * trace.dt
        j = a + int(np.argmax(p[a:b]))
        peaks[k] = p[j]
        peak_times[k] = t[j]
    settled = onsets >= trace.t0 + settle_fraction * trace.duration
    so = onsets[settled]
    period = float(np.median(np.diff(so))) if so.size >= 2 else math.nan
    return BurstTrain(onsets, peaks, peak_times, settled, period)


@dataclass(frozen=True)
class PhaseStatistics:
    phases: np.ndarray
    resultant_length: float
    rayleigh_z: float
    p_value: float


def rayleigh_test(phases: np.ndarray) -> tuple[float, float, float]:
    """Rayleigh test for circular uniformity: returns (R, Z, p)."""
    n = phases.size
    r = float(np.abs(np.mean(np.exp(1j * phases))))
    z = n * r * r
    # series correction to exp(-Z) for finite n (Zar, Biostatistical Analysis)
    p = math.exp(-z) * (1 + (2 * z - z * z) / (4 * n) - (24 * z - 132 * z**2 + 76 * z**3 - 9 * z**4) / (288 * n * n))
    return r, z, min(1.0, max(0.0, p))


def onset_phases(trains: Sequence[BurstTrain], period: float) -> PhaseStatistics:
    """Phase ``2 pi tau / T mod 2 pi`` of each train's first settled onset."""
    if period <= 0:
        raise DomainError("reference period must be > 0")
    taus = []
    for tr in trains:
        so = tr.settled_onsets
        if so.size:
            taus.append(so[0])
    if not taus:
        raise DomainError("no train has a settled burst")
    theta = np.mod(2 * math.pi * np.asarray(taus) / period, 2 * math.pi)
    r, z, p = rayleigh_test(theta)
    return PhaseStatistics(theta, r, z, p)


def psd(
    trace: EmissionTrace,
    window_start_fraction: float = 0.2,
    window_bins: float = 4.0,
    use_amplitude: bool = False,
) -> Spectrum:
    """Rectangular-window periodogram of the trace after the transient.

    The density is normalized so that ``sum(psd) * df`` equals the mean square
    of the analysed segment. Power traces give a one-sided spectrum; the
    complex amplitude (``use_amplitude``) a two-sided one.
    """
    i0 = int(round(window_start_fraction * (trace.power.size - 1)))
    if use_amplitude:
        if trace.amplitude is None:
            raise DomainError("trace carries no amplitude samples")
        x = trace.amplitude[i0:]
    else:
        x = trace.power[i0:]
    n = x.size
    if n < 16:
        raise DomainError("spectral segment shorter than 16 samples")
    fs = 1.0 / trace.dt
    df = fs / n
    if use_amplitude:
        X = np.fft.fftshift(np.fft.fft(x))
        freq = np.fft.fftshift(np.fft.fftfreq(n, trace.dt))
        dens = np.abs(X) ** 2 / (n * n * df)
    else:
        X = np.fft.rfft(x)
        freq = np.fft.rfftfreq(n, trace.dt)
        dens = np.abs(X) ** 2 / (n * n * df)
        # fold negative frequencies; DC and Nyquist have no mirror
        dens[1:] *= 2.0
        if n % 2 == 0:
            dens[-1] /= 2.0
    k = int(np.argmax(dens))
    fp = float(freq[k])
    window = window_bins * df
    a_tot = float(dens.sum() * df)
    outside = np.abs(freq - fp) > window / 2 + 1e-9 * df
    a_sb = float(dens[outside].sum() * df)
    return Spectrum(freq, dens, fp, a_tot, a_sb, window)


@dataclass(frozen=True)
class AnalyticBurst:
    delay: float
    width: float
    inversion: Callable[[np.ndarray | float], np.ndarray | float]


def analytic_burst(params: ModelParams, tip_angle: float) -> AnalyticBurst:
    """Delay and width of a superradiant burst from a tipped, fully pumped ensemble.

    ``tip_angle`` is the polar angle of the collective Bloch vector away from
    full inversion, so small angles give long delays. The delay is
    ``-(kappa / 2 N g^2) log tan(tip/2)``, negative once the ensemble is past
    the equator. ``inversion(t)`` is the mean inversion ``u`` (+1 = inverted),
    ``-tanh(2 N g^2 / kappa (t - delay))``.
    """
    if not 0 < tip_angle < math.pi:
        raise DomainError("tip angle must lie in (0, pi)")
    k = params.kappa_tot
    ng2 = params.ensemble_size * params.g**2
    if ng2 == 0:
        raise DomainError("burst needs nonzero coupling")
    rate = 2 * ng2 / k
    delay = -math.log(math.tan(tip_angle / 2)) / rate
    width = k / ng2 * math.log(math.sqrt(2) + 1)

    def inversion(t):
        return -np.tanh(rate * (np.asarray(t) - delay))

    return AnalyticBurst(delay, width, inversion)


@dataclass(frozen=True)
class BurstPeriod:
    exact: float
    approx: float
    bursts: bool


def burst_period_formula(pump: float, n_initial: float, n_final: float, g: float, kappa: float, linewidth: float) -> BurstPeriod:
    """Repumping-limited burst period and its ``1 / (D C_f)`` approximation.

    When the saturated population never reaches threshold there are no
    bursts and both periods are infinite.
    """
    threshold = kappa * linewidth / (4 * g * g)
    if not (n_final > threshold and n_final > n_initial):
        return BurstPeriod(math.inf, math.inf, False)
    exact = math.log((n_final - n_initial) / (n_final - threshold)) / pump
    c_final = n_final / threshold
    return BurstPeriod(exact, 1.0 / (pump * c_final), True)


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    prefactor: float
    residual: float


def scaling_fit(points: Sequence[tuple[float, float]]) -> PowerLawFit:
    """Least-squares line through ``(log N, log y)``."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 3:
        raise DomainError("scaling fit needs at least three points")
    if np.any(arr <= 0):
        raise DomainError("scaling fit needs positive values")
    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return PowerLawFit(float(slope), float(math.exp(intercept)), float(np.sqrt(np.mean(resid**2))))


@dataclass(frozen=True)
class Collapse:
    times: list[np.ndarray]
    powers: list[np.ndarray]
    metric: float


def data_collapse(traces: Sequence[tuple[EmissionTrace, float]], threshold_factor: float = 3.0) -> Collapse:
    """Rescale time by ``N`` and power by ``1/N^2`` and measure how well traces overlap.

    Each trace is shifted so its first settled burst onset sits at zero. The
    metric is the largest pairwise RMS difference on the common rescaled
    window, divided by the largest rescaled peak power.
    """
    if len(traces) < 2:
        raise DomainError("collapse needs at least two traces")
    n_ref = traces[0][1]
    times, powers = [], []
    for tr, n in traces:
        bt = detect_bursts(tr, threshold_factor)
        so = bt.settled_onsets
        if so.size == 0:
            raise DomainError("every trace needs a settled burst")
        s = n / n_ref
        times.append((tr.t - so[0]) * s)
        powers.append(tr.power / s**2)
    lo = max(t[0] for t in times)
    hi = min(t[-1] for t in times)
    if not hi > lo:
        raise DomainError("rescaled traces do not overlap")
    ref = times[0]
    grid = ref[(ref >= lo) & (ref <= hi)]
    resampled = [np.interp(grid, t, p) for t, p in zip(times, powers)]
    peak = max(float(np.max(r)) for r in resampled)
    metric = 0.0
    for a, b in combinations(resampled, 2):
        metric = max(metric, float(np.sqrt(np.mean((a - b) ** 2))) / peak)
    return Collapse(times, powers, metric)


def st_linewidth(n_cavity: float, kappa_c: float, kappa_a: float, n_thermal: float = 0.0, n_spont: float = 0.0) -> float:
    """Noise-broadened Schawlow-Townes linewidth in Hz (rates in rad/s)."""
    if not (n_cavity > 0 and kappa_c > 0 and kappa_a > 0):
        raise DomainError("photon number and both linewidths must be positive")
    k_eff = kappa_a * kappa_c / (kappa_a + kappa_c)
    return k_eff**2 * (n_thermal + n_spont + 1.0) / (4 * math.pi * n_cavity * kappa_c)


def fit_noise_quanta(n_cavity: Sequence[float], linewidths: Sequence[float], kappa_c: float, kappa_a: float) -> float:
    """Total ``n_th + n_sp`` from linewidths measured at several photon numbers.

    Fits ``linewidth = s / n_c`` by least squares through the origin.
    """
    x = 1.0 / np.asarray(n_cavity, dtype=float)
    y = np.asarray(linewidths, dtype=float)
    slope = float(x @ y / (x @ x))
    unit = st_linewidth(1.0, kappa_c, kappa_a, 0.0, 0.0)
    return slope / unit - 1.0
