"""Reusable simulation workflows shared by the command line and the test suites."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .analysis import (
    BurstTrain,
    EmissionTrace,
    PhaseStatistics,
    analytic_burst,
    detect_bursts,
    onset_phases,
    psd,
)
from .core import BinnedEnsemble, DisorderSpec, ModelParams, build_bins, hz
from .cumulant import CumulantModel, CumulantState, randomized_initial_state
from .integrate import IntegratorConfig, Trajectory
from .meanfield import CavityModel, ThreeLevelModel, ThreeLevelParams, ThreeLevelState, tipped_state

#: Settings for long limit-cycle runs: 50 ns step cap, 10 ns output.
LIMIT_CYCLE_TOL = dict(rel_tol=1e-7, abs_tol=1e-9, max_step=5e-8, output_dt=1e-8)


def map_ordered(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally in a process pool; order is preserved."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def gaussian_ensemble(params: ModelParams, M: int, half_span_fwhm: float = 2.0) -> BinnedEnsemble:
    lw = params.inhomogeneous_linewidth
    spec = DisorderSpec("gaussian", lw, half_span_fwhm=half_span_fwhm) if lw > 0 else DisorderSpec("none")
    return build_bins(spec, params.ensemble_size, M)


def cumulant_run(
    params: ModelParams,
    duration: float,
    M: int = 129,
    half_span_fwhm: float = 2.0,
    initial: CumulantState | None = None,
    decomposition: bool = False,
    **tol,
) -> Trajectory:
    """Pump-on limit-cycle run from the ground state (or ``initial``)."""
    ens = gaussian_ensemble(params, M, half_span_fwhm)
    model = CumulantModel(params, ens)
    state = initial if initial is not None else CumulantState.ground(ens.M, params.n_thermal)
    cfg = IntegratorConfig((0.0, duration), **{**LIMIT_CYCLE_TOL, **tol})
    return model.run(state, cfg, decomposition=decomposition)


def three_level_run(params: ThreeLevelParams, duration: float, linewidth: float = hz(160e3), M: int = 101, seed_coherence: float = 1e-3, **tol) -> Trajectory:
    ens = build_bins(DisorderSpec("gaussian", linewidth), params.ensemble_size, M)
    model = ThreeLevelModel(params, ens)
    cfg = IntegratorConfig((0.0, duration), **{**LIMIT_CYCLE_TOL, "abs_tol": 1e-10, **tol})
    return model.run(ThreeLevelState.ground(ens.M, seed_coherence), cfg)


@dataclass(frozen=True)
class TrainSummary:
    period: float
    peak_power: float
    mean_power: float
    crystalline_fraction: float
    n_settled: int


def summarize(trace: EmissionTrace, settle_fraction: float = 0.2) -> TrainSummary:
    bt = detect_bursts(trace, settle_fraction=settle_fraction)
    tail = trace.tail(settle_fraction)
    peaks = bt.settled_peaks
    return TrainSummary(
        bt.period,
        float(np.max(peaks)) if peaks.size else math.nan,
        float(np.mean(tail.power)),
        psd(trace, settle_fraction).crystalline_fraction,
        int(peaks.size),
    )


# --- transient bursts ----------------------------------------------------------


@dataclass(frozen=True)
class TransientResult:
    N: float
    delay: float
    width: float
    analytic_delay: float
    analytic_width: float


def transient_burst(params: ModelParams, tip_angle: float, samples: int = 20000) -> TransientResult:
    """Single-bin mean-field burst from a tipped inverted state; delay is the peak time, width the FWHM."""
    ens = build_bins(DisorderSpec("none"), params.ensemble_size)
    ab = analytic_burst(params, tip_angle)
    duration = 3 * max(ab.delay, ab.width)
    cfg = IntegratorConfig((0.0, duration), rel_tol=1e-9, abs_tol=1e-12, output_dt=duration / samples)
    tr = CavityModel(params, ens).run(tipped_state(1, tip_angle), cfg)
    P, t = tr.trace.power, tr.t
    k = int(np.argmax(P))
    half = t[P > P[k] / 2]
    return TransientResult(params.ensemble_size, float(t[k]), float(half[-1] - half[0]), ab.delay, ab.width)


# --- onset phases ----------------------------------------------------------------


@dataclass(frozen=True)
class _OnsetJob:
    params: ModelParams
    seed: int
    M: int
    duration: float
    half_span_fwhm: float


def _onset_train(job: _OnsetJob) -> BurstTrain:
    init = randomized_initial_state(job.M, job.params.n_thermal, job.seed, inversion_range=(-1.0, 1.0))
    tr = cumulant_run(job.params, job.duration, job.M, job.half_span_fwhm, initial=init)
    # detecting on the post-settling window keeps the quiet start out of the median
    return detect_bursts(tr.trace.tail(0.2), settle_fraction=0.0)


def onset_ensemble(
    params: ModelParams,
    seeds: Sequence[int],
    M: int = 33,
    duration: float = 6e-4,
    half_span_fwhm: float = 1.0,
    workers: int = 1,
    period: float | None = None,
) -> tuple[PhaseStatistics, list[BurstTrain], float]:
    """Runs from seeded random initial states; returns phase statistics, trains and the reference period.

    Reusing one seed for every run gives the phase-locked control.
    """
    jobs = [_OnsetJob(params, int(s), M, duration, half_span_fwhm) for s in seeds]
    trains = map_ordered(_onset_train, jobs, workers)
    if period is None:
        periods = [t.period for t in trains if np.isfinite(t.period)]
        period = float(np.median(periods))
    return onset_phases(trains, period), trains, period

