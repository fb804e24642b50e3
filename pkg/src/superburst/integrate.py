"""Deterministic ODE integration on a uniform output grid.

Two methods are offered: a classical fixed-step RK4 (bit-reproducible, used
for order checks and short runs) and adaptive Dormand-Prince 5(4) through
scipy's stepper with dense output. Observables are evaluated on the output
grid; full states are only kept when asked for, since a 10^4-dimensional
state sampled every 10 ns would not fit in memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.integrate import RK45

from .analysis import EmissionTrace
from .core import ConfigError

Derivs = Callable[[float, np.ndarray], np.ndarray]
Observable = Callable[[np.ndarray], np.ndarray | float | complex]


class IntegrationError(RuntimeError):
    """Integration could not continue; ``t_fail`` is the last time reached."""

    def __init__(self, message: str, t_fail: float):
        super().__init__(f"{message} (t = {t_fail:.6e} s)")
        self.t_fail = t_fail


@dataclass(frozen=True)
class IntegratorConfig:
    t_span: tuple[float, float]
    method: str = "adaptive_rk45"
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    fixed_step: float = 1e-9
    output_dt: float = 1e-8

    def __post_init__(self) -> None:
        if self.method not in ("fixed_rk4", "adaptive_rk45"):
            raise ConfigError(f"unknown integration method {self.method!r}")
        t0, t1 = self.t_span
        if not t1 > t0:
            raise ConfigError("t_span must satisfy t_end > t_start")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigError("tolerances must be > 0")
        if not (self.fixed_step > 0 and self.output_dt > 0 and self.max_step > 0):
            raise ConfigError("step sizes must be > 0")

    @property
    def n_out(self) -> int:
        t0, t1 = self.t_span
        return int(math.floor((t1 - t0) / self.output_dt * (1 + 1e-12))) + 1

    def output_grid(self) -> np.ndarray:
        return self.t_span[0] + self.output_dt * np.arange(self.n_out)


@dataclass
class Trajectory:
    """Samples on the uniform output grid."""

    t: np.ndarray
    observables: dict[str, np.ndarray]
    final_state: np.ndarray
    states: np.ndarray | None = None
    nfev: int = 0
    trace: EmissionTrace | None = field(default=None)


@dataclass(frozen=True)
class Kicks:
    """Perturbations applied at fixed times: ``y <- apply(index, y)``."""

    times: Sequence[float]
    apply: Callable[[int, np.ndarray], np.ndarray]


def _rk4_step(f: Derivs, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_finite(y: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite value in state", t)


class _Recorder:
    def __init__(self, grid: np.ndarray, observables: Mapping[str, Observable], keep_states: bool, dim: int, dtype):
        self.grid = grid
        self.obs = dict(observables)
        self.values: dict[str, list] = {k: [] for k in self.obs}
        self.keep = keep_states
        self.states = np.empty((grid.size, dim), dtype=dtype) if keep_states else None
        self.i = 0

    def record(self, y: np.ndarray) -> None:
        for name, fn in self.obs.items():
            self.values[name].append(fn(y))
        if self.keep:
            self.states[self.i] = y
        self.i += 1

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(v) for k, v in self.values.items()}


def integrate(
    f: Derivs,
    y0: np.ndarray,
    config: IntegratorConfig,
    observables: Mapping[str, Observable] | None = None,
    keep_states: bool = False,
    kicks: Kicks | None = None,
    power: str | None = "power",
    amplitude: str | None = None,
) -> Trajectory:
    """Integrate ``dy/dt = f(t, y)`` and sample on ``config.output_grid()``.

    ``observables`` maps names to functions of the state evaluated at every
    output time. When ``power`` names one of them the result also carries an
    :class:`EmissionTrace` (with ``amplitude`` attached if given).
    """
    y = np.array(y0, copy=True)
    _check_finite(y, config.t_span[0])
    grid = config.output_grid()
    rec = _Recorder(grid, observables or {}, keep_states, y.size, y.dtype)
    kick_times = sorted(kicks.times) if kicks else []
    nfev = 0

    t = config.t_span[0]
    rec.record(y)
    segments = _segments(config.t_span, kick_times)
    for k, (ta, tb) in enumerate(segments):
        if k > 0:
            y = np.array(kicks.apply(k - 1, y), copy=True)
        if config.method == "fixed_rk4":
            y, n = _run_fixed(f, y, ta, tb, config, rec)
        else:
            y, n = _run_adaptive(f, y, ta, tb, config, rec)
        nfev += n
        t = tb

    traj = Trajectory(grid, rec.arrays(), y, rec.states, nfev)
    if power is not None and power in traj.observables:
        amp = traj.observables.get(amplitude) if amplitude else None
        traj.trace = EmissionTrace(grid[0], config.output_dt, np.asarray(traj.observables[power], float), amp)
    return traj


def _segments(t_span: tuple[float, float], kick_times: list[float]) -> list[tuple[float, float]]:
    t0, t1 = t_span
    inner = [tk for tk in kick_times if t0 < tk < t1]
    bounds = [t0, *inner, t1]
    return list(zip(bounds[:-1], bounds[1:]))


def _pending(rec: _Recorder, t_hi: float, inclusive: bool) -> int:
    """Index one past the last grid point that falls before ``t_hi``."""
    tol = 1e-12 * max(1.0, abs(t_hi))
    side = rec.grid <= t_hi + tol if inclusive else rec.grid < t_hi - tol
    return int(np.count_nonzero(side))


def _run_fixed(f, y, ta, tb, config, rec):
    nfev = 0
    dt_out = config.output_dt
    # step size is adjusted down so output points are hit exactly
    n_sub = max(1, int(math.ceil(dt_out / config.fixed_step - 1e-9)))
    h_nom = dt_out / n_sub
    t = ta
    while t < tb - 1e-15 * max(1.0, abs(tb)):
        # next boundary: the next output point or the segment end
        stop = _pending(rec, tb, True)
        t_next = rec.grid[rec.i] if rec.i < stop else tb
        t_next = min(t_next, tb)
        n = max(1, int(math.ceil((t_next - t) / h_nom - 1e-9)))
        h = (t_next - t) / n
        for _ in range(n):
            y = _rk4_step(f, t, y, h)
            t += h
            nfev += 4
        t = t_next
        _check_finite(y, t)
        if rec.i < rec.grid.size and abs(rec.grid[rec.i] - t) <= 1e-12 * max(1.0, abs(t)):
            rec.record(y)
    return y, nfev


def _run_adaptive(f, y, ta, tb, config, rec):
    solver = RK45(
        f, ta, y, tb,
        rtol=config.rel_tol, atol=config.abs_tol,
        max_step=config.max_step if math.isfinite(config.max_step) else np.inf,
        first_step=min(config.max_step, config.output_dt) if math.isfinite(config.max_step) else None,
        vectorized=False,
    )
    last = tb == rec.grid[-1] or tb >= rec.grid[-1] - 1e-12 * max(1.0, abs(tb))
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"adaptive step failed: {msg}", solver.t)
        _check_finite(solver.y, solver.t)
        stop = _pending(rec, solver.t, inclusive=True) if (last or solver.t < tb) else _pending(rec, tb, False)
        if solver.status == "finished" and not last:
            stop = _pending(rec, tb, False)
        if rec.i < stop:
            dense = solver.dense_output()
            for i in range(rec.i, stop):
                ti = rec.grid[i]
                rec.record(solver.y if ti == solver.t else dense(ti))
    return solver.y.copy(), solver.nfev
