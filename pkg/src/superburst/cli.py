"""Command-line front end: JSON configs in, CSV/JSON artifacts out.

Each run writes into ``<out>/<hash>`` where ``hash`` is a digest of the
resolved configuration, so identical configs land in the same directory.
Exit status is 0 on success, 1 for configuration errors and 2 for
integration failures; failures also print a JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .analysis import EmissionTrace, data_collapse, detect_bursts, psd, scaling_fit
from .bifurcation import ReducedParams, ReducedState, phase_diagram, reduced_derivs, steady_states
from .core import ConfigError, DisorderSpec, DomainError, ModelParams, build_bins, cooperativity, hz, normalized_coupling
from .cumulant import CumulantModel, CumulantState, randomized_initial_state
from .experiments import map_ordered, transient_burst
from .integrate import IntegrationError, IntegratorConfig, Kicks, integrate
from .meanfield import (
    AdiabaticModel,
    CavityModel,
    SpinState,
    ThreeLevelModel,
    ThreeLevelParams,
    ThreeLevelState,
    gaussian_kicks,
    seeded_state,
    tipped_state,
)

log = logging.getLogger("superburst")

MODELS = ("meanfield2", "meanfield_adiabatic", "meanfield3", "cumulant", "reduced_wxyz")

# key -> (default, kind); kinds: hz (converted to rad/s), s, dimensionless, count
PARAM_KEYS = {
    "kappa_hz": (3.6e6, "hz"),
    "g_hz": (11.0, "hz"),
    "gamma_hz": (30.8e3, "hz"),
    "gamma1_hz": (440.0, "hz"),
    "pump_hz": (760.0, "hz"),
    "N": (1e10, "count"),
    "n_thermal": (3.2, "dimensionless"),
    "ensemble_detuning_hz": (0.0, "hz"),
    "inhomogeneous_linewidth_hz": (160e3, "hz"),
    "cavity_freq_hz": (0.0, "hz"),
}
THREE_LEVEL_KEYS = {
    "kappa_mw_hz": (3.6e6, "hz"),
    "g_mw_hz": (11.0, "hz"),
    "kappa_opt_hz": (10e6, "hz"),
    "g_opt_hz": (1.0, "hz"),
    "omega_rabi_hz": (24e3, "hz"),
    "gamma_opt_hz": (1e6, "hz"),
    "gamma_spin_hz": (32e3, "hz"),
    "gamma1_hz": (1.5e3, "hz"),
    "eta_b_per_s": (1e3, "dimensionless"),
    "N": (1e10, "count"),
    "ensemble_detuning_hz": (0.0, "hz"),
    "pump_detuning_hz": (0.0, "hz"),
    "optical_cavity_detuning_hz": (0.0, "hz"),
    "inhomogeneous_linewidth_hz": (160e3, "hz"),
}
DISORDER_KEYS = {
    "kind": ("gaussian", "str"),
    "width_hz": (None, "hz"),
    "table": (None, "table"),
    "rng_seed": (0, "int"),
    "sampled": (False, "bool"),
    "bins": (129, "int"),
    "half_span_fwhm": (2.0, "dimensionless"),
}
INTEGRATOR_KEYS = {
    "method": ("adaptive_rk45", "str"),
    "t_start_s": (0.0, "s"),
    "t_end_s": (8e-4, "s"),
    "rel_tol": (1e-7, "dimensionless"),
    "abs_tol": (1e-9, "dimensionless"),
    "max_step_s": (5e-8, "s"),
    "fixed_step_s": (1e-9, "s"),
    "output_dt_s": (1e-8, "s"),
}
INITIAL_KEYS = {
    "kind": (None, "str"),
    "tip_angle_rad": (0.1, "dimensionless"),
    "seed_coherence": (1e-3, "dimensionless"),
    "inversion": (-1.0, "dimensionless"),
}
KICK_KEYS = {
    "interval_s": (None, "s"),
    "amplitude": (0.0, "dimensionless"),
}
ANALYSIS_KEYS = {
    "bursts": (True, "bool"),
    "psd": (True, "bool"),
    "decomposition": (False, "bool"),
    "threshold_factor": (3.0, "dimensionless"),
    "settle_fraction": (0.2, "dimensionless"),
    "window_bins": (4.0, "dimensionless"),
    "collapse": (False, "bool"),
}
SWEEP_KEYS = {
    "axis": (None, "str"),
    "values": (None, "list"),
    "workers": (1, "int"),
}
RANGE_KEYS = {"start": (None, "dimensionless"), "stop": (None, "dimensionless"), "num": (None, "int")}
PHASE_KEYS = {
    "g_norm": (None, "range"),
    "disorder": (None, "range"),
    "include_rate_factor": (True, "bool"),
}
TRANSIENT_KEYS = {
    "tip_angle_rad": (0.1, "dimensionless"),
}
TOP_KEYS = {
    "model": (None, "str"),
    "params": (None, "block"),
    "three_level": (None, "block"),
    "disorder": (None, "block"),
    "integrator": (None, "block"),
    "initial": (None, "block"),
    "kicks": (None, "block"),
    "analysis": (None, "block"),
    "sweep": (None, "block"),
    "phase_diagram": (None, "block"),
    "transient": (None, "block"),
    "rng_seed": (0, "int"),
    "output_dir": (None, "str"),
    "label": (None, "str"),
}
BLOCKS = {
    "params": PARAM_KEYS,
    "three_level": THREE_LEVEL_KEYS,
    "disorder": DISORDER_KEYS,
    "integrator": INTEGRATOR_KEYS,
    "initial": INITIAL_KEYS,
    "kicks": KICK_KEYS,
    "analysis": ANALYSIS_KEYS,
    "sweep": SWEEP_KEYS,
    "phase_diagram": PHASE_KEYS,
    "transient": TRANSIENT_KEYS,
}
_UNIT_SUFFIXES = ("_khz", "_mhz", "_ghz", "_rad_s", "_ms", "_us", "_ns", "_min", "_db", "_dbm", "_w", "_mw")


class ConfigPathError(ConfigError):
    """Configuration problem tied to a key path such as ``params.kappa_hz``."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# --- parsing -----------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisOptions:
    bursts: bool = True
    psd: bool = True
    decomposition: bool = False
    threshold_factor: float = 3.0
    settle_fraction: float = 0.2
    window_bins: float = 4.0
    collapse: bool = False


@dataclass(frozen=True)
class RunConfig:
    model: str
    params: ModelParams | None
    three_level: ThreeLevelParams | None
    three_level_linewidth: float
    disorder: DisorderSpec
    bins: int
    integrator: IntegratorConfig
    initial: dict
    kicks: dict | None
    analysis: AnalysisOptions
    sweep: dict | None
    phase: dict | None
    transient: dict
    rng_seed: int
    output_dir: str | None
    resolved: dict = field(repr=False, compare=False)

    @property
    def digest(self) -> str:
        return config_digest(self.resolved)


def config_digest(resolved: dict) -> str:
    text = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _unit_check(path: str, key: str) -> None:
    low = key.lower()
    for suf in _UNIT_SUFFIXES:
        if low.endswith(suf):
            raise ConfigPathError(path, f"unsupported unit suffix {suf!r}; use _hz, _s or a dimensionless key")


def _coerce(path: str, value: Any, kind: str) -> Any:
    if kind in ("hz", "s", "dimensionless", "count"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigPathError(path, f"expected a number, got {value!r}")
        v = float(value)
        if not math.isfinite(v):
            raise ConfigPathError(path, "must be finite")
        return v
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigPathError(path, f"expected an integer, got {value!r}")
        return int(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigPathError(path, f"expected true/false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigPathError(path, f"expected a string, got {value!r}")
        return value
    if kind == "list":
        if not isinstance(value, list) or not value:
            raise ConfigPathError(path, "expected a non-empty list")
        return list(value)
    if kind == "table":
        if not isinstance(value, list) or not all(isinstance(r, list) and len(r) == 2 for r in value):
            raise ConfigPathError(path, "expected a list of [detuning_hz, weight] pairs")
        return [[_coerce(f"{path}[{i}][0]", r[0], "hz"), _coerce(f"{path}[{i}][1]", r[1], "dimensionless")] for i, r in enumerate(value)]
    if kind == "range":
        return _block(path, value, RANGE_KEYS, True)
    raise AssertionError(kind)


def _block(path: str, raw: Any, keys: dict, strict: bool) -> dict:
    """Validate one block, filling defaults; values stay in config units."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigPathError(path, "expected an object")
    out = {}
    for k, v in raw.items():
        kp = f"{path}.{k}" if path else k
        if k not in keys:
            _unit_check(kp, k)
            if strict:
                raise ConfigPathError(kp, "unknown key")
            log.warning("ignoring unknown config key %s", kp)
            continue
        kind = keys[k][1]
        out[k] = None if v is None else (v if kind == "block" else _coerce(kp, v, kind))
    for k, (default, kind) in keys.items():
        if k not in out and kind != "block":
            out[k] = default
    return out


def _nonneg(resolved: dict, block: str, names) -> None:
    for n in names:
        v = resolved[block].get(n)
        if v is not None and v < 0:
            raise ConfigPathError(f"{block}.{n}", f"must be >= 0, got {v}")


def resolve(doc: Any, strict: bool = True) -> dict:
    """Validate and fill defaults, returning a canonical config dict in config units."""
    if not isinstance(doc, dict):
        raise ConfigPathError("<root>", "config must be a JSON object")
    top = _block("", doc, TOP_KEYS, strict)
    model = top.get("model")
    if model is None:
        raise ConfigPathError("model", "required")
    if model not in MODELS:
        raise ConfigPathError("model", f"unknown model {model!r}; expected one of {', '.join(MODELS)}")
    resolved: dict = {"model": model, "rng_seed": top["rng_seed"]}
    if top.get("output_dir") is not None:
        resolved["output_dir"] = top["output_dir"]
    if top.get("label") is not None:
        resolved["label"] = top["label"]
    for name in ("params", "disorder", "integrator", "initial", "analysis", "transient"):
        resolved[name] = _block(name, doc.get(name), BLOCKS[name], strict)
    if model == "meanfield3":
        resolved["three_level"] = _block("three_level", doc.get("three_level"), THREE_LEVEL_KEYS, strict)
    elif doc.get("three_level") is not None:
        raise ConfigPathError("three_level", "only valid with model meanfield3")
    for name in ("kicks", "sweep", "phase_diagram"):
        if doc.get(name) is not None:
            resolved[name] = _block(name, doc[name], BLOCKS[name], strict)

    p = resolved["params"]
    if not p["kappa_hz"] > 0:
        raise ConfigPathError("params.kappa_hz", f"must be > 0, got {p['kappa_hz']}")
    _nonneg(resolved, "params", ["g_hz", "gamma_hz", "gamma1_hz", "pump_hz", "n_thermal", "inhomogeneous_linewidth_hz"])
    if p["N"] < 1:
        raise ConfigPathError("params.N", f"must be >= 1, got {p['N']}")
    if "three_level" in resolved:
        t3 = resolved["three_level"]
        for k in ("kappa_mw_hz", "kappa_opt_hz"):
            if not t3[k] > 0:
                raise ConfigPathError(f"three_level.{k}", f"must be > 0, got {t3[k]}")
        _nonneg(resolved, "three_level", ["g_mw_hz", "g_opt_hz", "omega_rabi_hz", "gamma_opt_hz", "gamma_spin_hz", "gamma1_hz", "eta_b_per_s", "inhomogeneous_linewidth_hz"])
    d = resolved["disorder"]
    if d["width_hz"] is None and d["kind"] == "gaussian":
        d["width_hz"] = p["inhomogeneous_linewidth_hz"] if model != "meanfield3" else resolved["three_level"]["inhomogeneous_linewidth_hz"]
    if d["kind"] not in ("gaussian", "two_delta", "table", "none"):
        raise ConfigPathError("disorder.kind", f"unknown disorder kind {d['kind']!r}")
    if d["width_hz"] is not None and d["width_hz"] < 0:
        raise ConfigPathError("disorder.width_hz", "must be >= 0")
    if d["bins"] < 1:
        raise ConfigPathError("disorder.bins", "must be >= 1")
    it = resolved["integrator"]
    if it["method"] not in ("fixed_rk4", "adaptive_rk45"):
        raise ConfigPathError("integrator.method", f"unknown method {it['method']!r}")
    if not it["t_end_s"] > it["t_start_s"]:
        raise ConfigPathError("integrator.t_end_s", "must exceed t_start_s")
    for k in ("rel_tol", "abs_tol", "max_step_s", "fixed_step_s", "output_dt_s"):
        if not it[k] > 0:
            raise ConfigPathError(f"integrator.{k}", "must be > 0")
    if "sweep" in resolved:
        sw = resolved["sweep"]
        if sw["axis"] is None or sw["values"] is None:
            raise ConfigPathError("sweep", "needs 'axis' and 'values'")
        _check_axis(sw["axis"])
        if sw["workers"] < 1:
            raise ConfigPathError("sweep.workers", "must be >= 1")
    if "phase_diagram" in resolved:
        for ax in ("g_norm", "disorder"):
            r = resolved["phase_diagram"][ax]
            if r is None or any(r[k] is None for k in RANGE_KEYS):
                raise ConfigPathError(f"phase_diagram.{ax}", "needs start, stop and num")
            if r["num"] < 1:
                raise ConfigPathError(f"phase_diagram.{ax}.num", "must be >= 1")
    return resolved


def _check_axis(axis: str) -> None:
    parts = axis.split(".")
    if len(parts) != 2 or parts[0] not in BLOCKS or parts[1] not in BLOCKS[parts[0]]:
        raise ConfigPathError("sweep.axis", f"unknown parameter path {axis!r}")


def parse_config(text: str, strict: bool = True) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigPathError("<root>", f"invalid JSON: {exc}") from None
    return build_config(resolve(doc, strict))


def build_config(resolved: dict) -> RunConfig:
    p = resolved["params"]
    try:
        params = ModelParams(
            kappa=hz(p["kappa_hz"]),
            g=hz(p["g_hz"]),
            gamma=hz(p["gamma_hz"]),
            gamma1=hz(p["gamma1_hz"]),
            pump=hz(p["pump_hz"]),
            ensemble_size=p["N"],
            n_thermal=p["n_thermal"],
            ensemble_detuning=hz(p["ensemble_detuning_hz"]),
            inhomogeneous_linewidth=hz(p["inhomogeneous_linewidth_hz"]),
            cavity_freq=hz(p["cavity_freq_hz"]),
        )
    except ConfigError as exc:
        raise ConfigPathError("params", str(exc)) from None
    three = None
    lw3 = 0.0
    if "three_level" in resolved:
        t = resolved["three_level"]
        three = ThreeLevelParams(
            kappa_mw=hz(t["kappa_mw_hz"]),
            g_mw=hz(t["g_mw_hz"]),
            kappa_opt=hz(t["kappa_opt_hz"]),
            g_opt=hz(t["g_opt_hz"]),
            omega_rabi=hz(t["omega_rabi_hz"]),
            gamma_opt=hz(t["gamma_opt_hz"]),
            gamma_spin=hz(t["gamma_spin_hz"]),
            gamma1=hz(t["gamma1_hz"]),
            eta_b=t["eta_b_per_s"],
            ensemble_size=t["N"],
            ensemble_detuning=hz(t["ensemble_detuning_hz"]),
            pump_detuning=hz(t["pump_detuning_hz"]),
            optical_cavity_detuning=hz(t["optical_cavity_detuning_hz"]),
        )
        lw3 = hz(t["inhomogeneous_linewidth_hz"])
    d = resolved["disorder"]
    try:
        disorder = DisorderSpec(
            kind=d["kind"],
            width=hz(d["width_hz"] or 0.0),
            table=tuple((hz(x), w) for x, w in (d["table"] or [])),
            rng_seed=d["rng_seed"],
            sampled=d["sampled"],
            half_span_fwhm=d["half_span_fwhm"],
        )
    except ConfigError as exc:
        raise ConfigPathError("disorder", str(exc)) from None
    it = resolved["integrator"]
    integ = IntegratorConfig(
        (it["t_start_s"], it["t_end_s"]),
        method=it["method"],
        rel_tol=it["rel_tol"],
        abs_tol=it["abs_tol"],
        max_step=it["max_step_s"],
        fixed_step=it["fixed_step_s"],
        output_dt=it["output_dt_s"],
    )
    return RunConfig(
        model=resolved["model"],
        params=params,
        three_level=three,
        three_level_linewidth=lw3,
        disorder=disorder,
        bins=d["bins"],
        integrator=integ,
        initial=resolved["initial"],
        kicks=resolved.get("kicks"),
        analysis=AnalysisOptions(**resolved["analysis"]),
        sweep=resolved.get("sweep"),
        phase=resolved.get("phase_diagram"),
        transient=resolved["transient"],
        rng_seed=resolved["rng_seed"],
        output_dir=resolved.get("output_dir"),
        resolved=resolved,
    )


# --- output helpers -----------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def write_json(path: Path, obj: Any) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _clean(x: float) -> float | None:
    return None if x is None or not math.isfinite(x) else float(x)


def write_trace(path: Path, trace: EmissionTrace) -> None:
    cols = [trace.t, trace.power]
    header = ["t_s", "power_photons_per_s"]
    if trace.amplitude is not None:
        cols += [trace.amplitude.real, trace.amplitude.imag]
        header += ["re_amp", "im_amp"]
    write_csv(path, header, cols)


def read_trace(path: Path) -> EmissionTrace:
    """Inverse of :func:`write_trace`; reconstructs the trace bit-for-bit."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if len(body) < 2 or header[:2] != ["t_s", "power_photons_per_s"]:
        raise ConfigPathError(str(path), "not a trace.csv file")
    data = np.array([[float(v) for v in r] for r in body])
    t = data[:, 0]
    amp = data[:, 2] + 1j * data[:, 3] if data.shape[1] >= 4 else None
    return EmissionTrace(float(t[0]), _grid_step(t), data[:, 1], amp)


def _grid_step(t: np.ndarray) -> float:
    """The ``dt`` for which ``t[0] + dt * arange(n)`` reproduces ``t`` bit-for-bit, if one is nearby."""
    idx = np.arange(t.size)
    guess = float((t[-1] - t[0]) / (t.size - 1))
    cands = [guess, float(t[1] - t[0]), float(np.median(np.diff(t)))]
    for c in list(cands):
        lo = hi = c
        for _ in range(4):
            lo, hi = np.nextafter(lo, -np.inf), np.nextafter(hi, np.inf)
            cands += [float(lo), float(hi)]
    for c in cands:
        if c > 0 and np.array_equal(t[0] + c * idx, t):
            return c
    return guess


# --- running ------------------------------------------------------------------


class RunFailure(RuntimeError):
    def __init__(self, record: dict, status: int):
        super().__init__(record.get("message", ""))
        self.record = record
        self.status = status


def derived_figures(cfg: RunConfig) -> dict:
    p = cfg.params
    out = {"normalized_coupling": normalized_coupling(p)}
    try:
        out["cooperativity"] = cooperativity(p)
    except DomainError:
        out["cooperativity"] = None
    return out


def _ensemble(cfg: RunConfig, total: float):
    return build_bins(cfg.disorder, total, cfg.bins)


def _simulate_trajectory(cfg: RunConfig):
    """Integrate the configured model; returns (trajectory, extra columns for decomposition)."""
    init = cfg.initial
    if cfg.model == "cumulant":
        ens = _ensemble(cfg, cfg.params.ensemble_size)
        model = CumulantModel(cfg.params, ens)
        kind = init["kind"] or "ground"
        if kind == "ground":
            state = CumulantState.ground(ens.M, cfg.params.n_thermal)
        elif kind == "random":
            state = randomized_initial_state(ens.M, cfg.params.n_thermal, cfg.rng_seed, inversion_range=(-1.0, 1.0))
        else:
            raise ConfigPathError("initial.kind", f"{kind!r} is not available for the cumulant model")
        return model.run(state, cfg.integrator, decomposition=cfg.analysis.decomposition)
    if cfg.model in ("meanfield2", "meanfield_adiabatic"):
        ens = _ensemble(cfg, cfg.params.ensemble_size)
        kind = init["kind"] or "seeded"
        if kind == "tipped":
            mf = tipped_state(ens.M, init["tip_angle_rad"])
        elif kind == "seeded":
            mf = seeded_state(ens.M, init["inversion"], init["seed_coherence"])
        else:
            raise ConfigPathError("initial.kind", f"{kind!r} is not available for mean-field models")
        kicks = _kicks(cfg, (0, 1) if cfg.model == "meanfield2" else (0, ens.M))
        if cfg.model == "meanfield2":
            return CavityModel(cfg.params, ens).run(mf, cfg.integrator, kicks=kicks)
        return AdiabaticModel(cfg.params, ens).run(SpinState(mf.coherence, mf.inversion), cfg.integrator, kicks=kicks)
    if cfg.model == "meanfield3":
        ens = _ensemble(cfg, cfg.three_level.ensemble_size)
        return ThreeLevelModel(cfg.three_level, ens).run(ThreeLevelState.ground(ens.M, init["seed_coherence"]), cfg.integrator)
    if cfg.model == "reduced_wxyz":
        rp = ReducedParams.from_model(cfg.params)
        z0 = steady_states(rp).trivial.z
        y0 = ReducedState(0.0, init["seed_coherence"], 0.0, z0).to_vector()
        kappa = cfg.params.kappa
        return integrate(
            lambda t, y: reduced_derivs(ReducedState(*y), rp).to_vector(),
            y0,
            cfg.integrator,
            {"power": lambda y: kappa * y[0] * y[0]},
        )
    raise ConfigPathError("model", f"unsupported model {cfg.model!r}")


def _kicks(cfg: RunConfig, index) -> Kicks | None:
    k = cfg.kicks
    if not k or not k.get("interval_s") or k["amplitude"] == 0:
        return None
    t0, t1 = cfg.integrator.t_span
    times = np.arange(t0 + k["interval_s"], t1, k["interval_s"])
    return gaussian_kicks(times, k["amplitude"], cfg.rng_seed, index)


def _analyse(trace: EmissionTrace, opts: AnalysisOptions, run_dir: Path) -> dict:
    fits: dict = {"mean_power": float(np.mean(trace.tail(opts.settle_fraction).power))}
    if opts.bursts:
        bt = detect_bursts(trace, opts.threshold_factor, opts.settle_fraction)
        write_csv(
            run_dir / "bursts.csv",
            ["onset_s", "peak_time_s", "peak_power_photons_per_s", "settled"],
            [bt.onsets, bt.peak_times, bt.peaks, np.array(["true" if s else "false" for s in bt.settled])],
        )
        fits["period_s"] = _clean(bt.period)
        fits["n_bursts"] = len(bt)
        fits["n_settled"] = int(bt.settled.sum())
        sp = bt.settled_peaks
        fits["peak_power"] = float(sp.max()) if sp.size else None
    if opts.psd:
        try:
            spec = psd(trace, opts.settle_fraction, opts.window_bins)
        except DomainError as exc:
            fits["psd_error"] = str(exc)
        else:
            write_csv(run_dir / "spectrum.csv", ["freq_hz", "psd_photons2_per_s2_per_hz"], [spec.freq, spec.psd])
            fits.update(
                peak_freq_hz=spec.peak_freq,
                a_tot=spec.a_tot,
                a_sb=spec.a_sb,
                crystalline_fraction=spec.crystalline_fraction,
            )
    return fits


def _run_dir(base: Path, cfg_digest: str) -> Path:
    d = base / cfg_digest
    d.mkdir(parents=True, exist_ok=True)
    return d


def _manifest(cfg: RunConfig, verb: str, extra: dict | None = None) -> dict:
    m = {
        "tool": "superburst",
        "version": __version__,
        "verb": verb,
        "model": cfg.model,
        "config_hash": cfg.digest,
        "seed": cfg.rng_seed,
        "resolved_config": cfg.resolved,
        "derived": derived_figures(cfg),
    }
    if extra:
        m.update(extra)
    return m


def run_simulate(cfg: RunConfig, base: Path) -> Path:
    run_dir = _run_dir(base, cfg.digest)
    write_json(run_dir / "manifest.json", _manifest(cfg, "simulate"))
    try:
        traj = _simulate_trajectory(cfg)
    except IntegrationError as exc:
        record = {"error": "integration", "message": str(exc), "t_fail": exc.t_fail}
        write_json(run_dir / "error.json", record)
        raise RunFailure(record, 2) from None
    write_trace(run_dir / "trace.csv", traj.trace)
    fits = _analyse(traj.trace, cfg.analysis, run_dir)
    if cfg.model == "meanfield3":
        bt = detect_bursts(EmissionTrace(traj.trace.t0, traj.trace.dt, traj.observables["optical_power"]))
        fits["optical_period_s"] = _clean(bt.period)
    if cfg.analysis.decomposition and "decomposition" in traj.observables:
        d = np.asarray(traj.observables["decomposition"])
        write_csv(
            run_dir / "decomposition.csv",
            ["t_s", "spontaneous_per_s", "stimulated_per_s", "superradiant_per_s"],
            [traj.t, d[:, 0], d[:, 1], d[:, 2]],
        )
        tail = d[traj.t >= traj.t[0] + cfg.analysis.settle_fraction * (traj.t[-1] - traj.t[0])]
        means = tail.mean(axis=0)
        fits["decomposition_mean"] = {"spontaneous": means[0], "stimulated": means[1], "superradiant": means[2]}
        fits["superradiant_to_stimulated"] = _clean(means[2] / means[1]) if means[1] != 0 else None
    write_json(run_dir / "fits.json", fits)
    return run_dir


def run_transient(cfg: RunConfig, base: Path) -> Path:
    run_dir = _run_dir(base, cfg.digest)
    write_json(run_dir / "manifest.json", _manifest(cfg, "transient"))
    res = transient_burst(cfg.params, cfg.transient["tip_angle_rad"])
    write_json(
        run_dir / "fits.json",
        {
            "N": res.N,
            "delay_s": res.delay,
            "width_s": res.width,
            "analytic_delay_s": res.analytic_delay,
            "analytic_width_s": res.analytic_width,
        },
    )
    return run_dir


def run_phase_diagram(cfg: RunConfig, base: Path) -> Path:
    if cfg.phase is None:
        raise ConfigPathError("phase_diagram", "block required for the phase-diagram verb")
    run_dir = _run_dir(base, cfg.digest)
    write_json(run_dir / "manifest.json", _manifest(cfg, "phase-diagram"))
    rp = ReducedParams.from_model(cfg.params, delta=0.0)
    ax = cfg.phase
    gn = np.linspace(ax["g_norm"]["start"], ax["g_norm"]["stop"], ax["g_norm"]["num"])
    dn = np.linspace(ax["disorder"]["start"], ax["disorder"]["stop"], ax["disorder"]["num"])
    pd = phase_diagram(gn, dn, rp, ax["include_rate_factor"])
    rows = list(pd.rows())
    write_csv(
        run_dir / "phase_diagram.csv",
        ["g_norm", "normalized_disorder", "label"],
        [np.array([r[0] for r in rows]), np.array([r[1] for r in rows]), np.array([r[2] for r in rows], dtype=object)],
    )
    write_json(
        run_dir / "boundaries.json",
        {
            "axes": ["normalized_disorder", "g_norm"],
            "threshold": pd.threshold_boundary.tolist(),
            "hopf": pd.hopf_boundary.tolist(),
            "include_rate_factor": pd.include_rate_factor,
        },
    )
    return run_dir


def _set_path(doc: dict, axis: str, value) -> dict:
    out = copy.deepcopy(doc)
    block, key = axis.split(".")
    out.setdefault(block, {})
    out[block] = dict(out[block] or {})
    out[block][key] = value
    return out


def _sweep_child(args) -> tuple[str, dict]:
    resolved, base = args
    cfg = build_config(resolved)
    run_dir = run_simulate(cfg, Path(base))
    with open(run_dir / "fits.json", encoding="utf-8") as fh:
        return run_dir.name, json.load(fh)


def run_sweep(cfg: RunConfig, base: Path, workers: int | None = None) -> Path:
    if cfg.sweep is None:
        raise ConfigPathError("sweep", "block required for the sweep verb")
    sw = cfg.sweep
    parent = {k: v for k, v in cfg.resolved.items() if k != "sweep"}
    children = []
    for i, v in enumerate(sw["values"]):
        kind = BLOCKS[sw["axis"].split(".")[0]][sw["axis"].split(".")[1]][1]
        _coerce(f"sweep.values[{i}]", v, kind)
        children.append(resolve(_set_path(parent, sw["axis"], v)))
    run_dir = _run_dir(base, cfg.digest)
    write_json(run_dir / "manifest.json", _manifest(cfg, "sweep", {"children": [config_digest(c) for c in children]}))
    n_workers = workers if workers is not None else sw["workers"]
    results = map_ordered(_sweep_child, [(c, str(run_dir)) for c in children], n_workers)
    summary = {"axis": sw["axis"], "values": sw["values"], "runs": [{"dir": d, **f} for d, f in results]}
    if sw["axis"] in ("params.N", "three_level.N") and len(results) >= 3:
        summary["scaling"] = _scaling(sw["values"], [f for _, f in results])
    if cfg.analysis.collapse and sw["axis"] == "params.N":
        traces = [(read_trace(run_dir / d / "trace.csv"), float(v)) for (d, _), v in zip(results, sw["values"])]
        try:
            summary["collapse_metric"] = data_collapse(traces, cfg.analysis.threshold_factor).metric
        except DomainError as exc:
            summary["collapse_error"] = str(exc)
    write_json(run_dir / "fits.json", summary)
    return run_dir


def _scaling(values, fits) -> dict:
    out = {}
    for key, name in (("period_s", "period"), ("peak_power", "peak_power"), ("mean_power", "mean_power")):
        pts = [(float(v), f.get(key)) for v, f in zip(values, fits)]
        pts = [(n, y) for n, y in pts if y is not None and y > 0]
        if len(pts) >= 3:
            fit = scaling_fit(pts)
            out[name] = {"exponent": fit.exponent, "prefactor": fit.prefactor, "residual": fit.residual}
    return out


def run_analyze(trace_path: Path, base: Path, opts: AnalysisOptions) -> Path:
    data = trace_path.read_bytes()
    digest = hashlib.sha256(data).hexdigest()[:16]
    run_dir = _run_dir(base, digest)
    trace = read_trace(trace_path)
    fits = _analyse(trace, opts, run_dir)
    write_json(run_dir / "manifest.json", {"tool": "superburst", "version": __version__, "verb": "analyze", "source": str(trace_path), "trace_hash": digest})
    write_json(run_dir / "fits.json", fits)
    return run_dir


PRESETS = ("fig1e", "fig2e", "fig3ef", "figS1", "figS4", "ed6a", "ed6c")


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigPathError("figure", f"unknown figure id {name!r}; expected one of {', '.join(PRESETS)}")
    text = resources.files("superburst").joinpath("presets", f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


VERBS = {
    "simulate": run_simulate,
    "transient": run_transient,
    "phase-diagram": run_phase_diagram,
}


def _dispatch(verb: str, cfg: RunConfig, base: Path, workers: int | None) -> Path:
    if verb == "sweep":
        return run_sweep(cfg, base, workers)
    return VERBS[verb](cfg, base)


def run_preset(name: str, base: Path, workers: int | None, seed: int | None, strict: bool) -> Path:
    """Run every step of a packaged figure preset and gather the headline numbers."""
    preset = load_preset(name)
    out = base / name
    out.mkdir(parents=True, exist_ok=True)
    summary = {"figure": name, "steps": []}
    for i, step in enumerate(preset["steps"]):
        doc = step["config"]
        if seed is not None:
            doc = {**doc, "rng_seed": seed}
        cfg = build_config(resolve(doc, strict))
        run_dir = _dispatch(step["verb"], cfg, out, workers)
        entry = {"label": step.get("label", f"step{i}"), "verb": step["verb"], "dir": run_dir.name}
        fits = run_dir / "fits.json"
        if fits.exists():
            with open(fits, encoding="utf-8") as fh:
                entry["fits"] = json.load(fh)
        summary["steps"].append(entry)
    write_json(out / "fits.json", summary)
    return out


# --- entry point ----------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="superburst", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"superburst {__version__}")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON run configuration")
        p.add_argument("--out", default="runs", help="output base directory")
        p.add_argument("--workers", type=int, default=None, help="parallel runs for sweeps")
        p.add_argument("--seed", type=int, default=None, help="override rng_seed")
        p.add_argument("--strict", action="store_true", help="reject unknown config keys")
        p.add_argument("-v", "--verbose", action="store_true")

    for verb in ("simulate", "transient", "phase-diagram", "sweep"):
        common(sub.add_parser(verb))
    a = sub.add_parser("analyze")
    common(a, config_required=False)
    a.add_argument("--trace", required=True, help="trace.csv to analyse")
    r = sub.add_parser("reproduce")
    common(r, config_required=False)
    r.add_argument("figure", help=f"one of {', '.join(PRESETS)}")
    return ap


def _fail(record: dict, status: int) -> int:
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return status


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers is not None and args.workers < 1:
        return _fail({"error": "config", "path": "--workers", "message": "must be >= 1"}, 1)
    base = Path(args.out)
    try:
        if args.verb == "reproduce":
            out = run_preset(args.figure, base, args.workers, args.seed, args.strict)
        elif args.verb == "analyze":
            opts = AnalysisOptions()
            if args.config:
                doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
                opts = AnalysisOptions(**_block("analysis", doc.get("analysis"), ANALYSIS_KEYS, args.strict))
            out = run_analyze(Path(args.trace), base, opts)
        else:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
            if args.seed is not None:
                doc["rng_seed"] = args.seed
            cfg = build_config(resolve(doc, args.strict))
            if cfg.output_dir and args.out == "runs":
                base = Path(cfg.output_dir)
            out = _dispatch(args.verb, cfg, base, args.workers)
    except RunFailure as exc:
        return _fail(exc.record, exc.status)
    except IntegrationError as exc:
        return _fail({"error": "integration", "message": str(exc), "t_fail": exc.t_fail}, 2)
    except ConfigPathError as exc:
        return _fail({"error": "config", "path": exc.path, "message": str(exc)}, 1)
    except (ConfigError, DomainError, json.JSONDecodeError, OSError) as exc:
        return _fail({"error": "config", "message": str(exc)}, 1)
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
