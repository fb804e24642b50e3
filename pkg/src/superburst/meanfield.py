"""First-order (mean-field) models of the driven ensemble.

Three tiers share one packing scheme (real vectors, complex parts split):

* explicit cavity, two-level spins (:class:`CavityModel`);
* cavity adiabatically eliminated, spins only (:class:`AdiabaticModel`);
* three-level spins with an optical and a microwave mode (:class:`ThreeLevelModel`).

All models run in the frame of the microwave cavity. Inversion is
``u = p_up - p_down``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BinnedEnsemble, ConfigError, ModelParams, hz
from .integrate import IntegratorConfig, Kicks, Trajectory, integrate


@dataclass(frozen=True)
class MeanFieldState:
    cavity_amp: complex
    coherence: np.ndarray
    inversion: np.ndarray

    @property
    def M(self) -> int:
        return int(self.coherence.size)

    def to_vector(self) -> np.ndarray:
        s = np.asarray(self.coherence, complex)
        return np.concatenate([[self.cavity_amp.real, self.cavity_amp.imag], s.real, s.imag, np.asarray(self.inversion, float)])

    @classmethod
    def from_vector(cls, y: np.ndarray, M: int) -> "MeanFieldState":
        if y.size != 2 + 3 * M:
            raise ConfigError(f"state vector has {y.size} entries, expected {2 + 3 * M}")
        return cls(complex(y[0], y[1]), y[2 : 2 + M] + 1j * y[2 + M : 2 + 2 * M], y[2 + 2 * M :].copy())


@dataclass(frozen=True)
class SpinState:
    """Spins-only state of the adiabatic model."""

    coherence: np.ndarray
    inversion: np.ndarray

    def to_vector(self) -> np.ndarray:
        s = np.asarray(self.coherence, complex)
        return np.concatenate([s.real, s.imag, np.asarray(self.inversion, float)])

    @classmethod
    def from_vector(cls, y: np.ndarray, M: int) -> "SpinState":
        if y.size != 3 * M:
            raise ConfigError(f"state vector has {y.size} entries, expected {3 * M}")
        return cls(y[:M] + 1j * y[M : 2 * M], y[2 * M :].copy())


def tipped_state(M: int, tip_angle: float, phase: float = 0.0, cavity_amp: complex = 0.0) -> MeanFieldState:
    """Every bin on a pure Bloch vector ``tip_angle`` away from full inversion."""
    s = 0.5 * math.sin(tip_angle) * np.exp(-1j * phase) * np.ones(M)
    u = math.cos(tip_angle) * np.ones(M)
    return MeanFieldState(complex(cavity_amp), s, u)


def seeded_state(M: int, inversion: float = -1.0, seed_coherence: float = 1e-3, cavity_amp: complex = 0.0) -> MeanFieldState:
    """Uniform inversion with a small real coherence in every bin (noise surrogate)."""
    return MeanFieldState(complex(cavity_amp), np.full(M, seed_coherence, dtype=complex), np.full(M, float(inversion)))


class CavityModel:
    """Two-level spins plus explicit cavity field."""

    def __init__(self, params: ModelParams, ens: BinnedEnsemble):
        self.params = params
        self.ens = ens
        self.M = ens.M
        self.rot = params.ensemble_detuning + ens.detunings
        self.pops = ens.populations

    @property
    def size(self) -> int:
        return 2 + 3 * self.M

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        p, M = self.params, self.M
        b = y[0] + 1j * y[1]
        s = y[2 : 2 + M] + 1j * y[2 + M : 2 + 2 * M]
        u = y[2 + 2 * M :]
        db = -0.5 * p.kappa * b - 1j * p.g * np.dot(self.pops, s)
        ds = -(1j * self.rot + 0.5 * p.kappa_s) * s + 1j * p.g * u * b
        du = p.pump * (1 - u) - p.gamma1 * (1 + u) + 4 * p.g * np.imag(np.conj(s) * b)
        out = np.empty_like(y)
        out[0], out[1] = db.real, db.imag
        out[2 : 2 + M] = ds.real
        out[2 + M : 2 + 2 * M] = ds.imag
        out[2 + 2 * M :] = du
        return out

    def power(self, y: np.ndarray) -> float:
        return self.params.kappa * (y[0] * y[0] + y[1] * y[1])

    def amplitude(self, y: np.ndarray) -> complex:
        return complex(y[0], y[1])

    def mean_inversion(self, y: np.ndarray) -> float:
        return float(np.dot(self.ens.weights, y[2 + 2 * self.M :]))

    def run(self, state: MeanFieldState, config: IntegratorConfig, keep_states: bool = False, kicks: Kicks | None = None) -> Trajectory:
        obs = {"power": self.power, "amplitude": self.amplitude, "inversion": self.mean_inversion}
        return integrate(self.rhs, state.to_vector(), config, obs, keep_states, kicks, amplitude="amplitude")


def mf_derivs_cavity(state: MeanFieldState, params: ModelParams, ens: BinnedEnsemble) -> MeanFieldState:
    """Time derivative of the two-level mean-field state with explicit cavity."""
    if state.M != ens.M:
        raise ConfigError(f"state has {state.M} bins, ensemble has {ens.M}")
    d = CavityModel(params, ens).rhs(0.0, state.to_vector())
    return MeanFieldState.from_vector(d, ens.M)


class AdiabaticModel:
    """Spins only; the cavity field follows ``b = -i g S / (kappa/2 - i Delta_e)``.

    Runs in the frame of the spin line centre, so bins rotate at their own
    detuning only.
    """

    def __init__(self, params: ModelParams, ens: BinnedEnsemble):
        self.params = params
        self.ens = ens
        self.M = ens.M
        self.pops = ens.populations
        self.chi = 1.0 / (0.5 * params.kappa - 1j * params.ensemble_detuning)

    @property
    def size(self) -> int:
        return 3 * self.M

    def field(self, y: np.ndarray) -> complex:
        M = self.M
        S = np.dot(self.pops, y[:M] + 1j * y[M : 2 * M])
        return -1j * self.params.g * self.chi * S

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        p, M = self.params, self.M
        s = y[:M] + 1j * y[M : 2 * M]
        u = y[2 * M :]
        S = np.dot(self.pops, s)
        g2chi = p.g**2 * self.chi
        ds = -(1j * self.ens.detunings + 0.5 * p.kappa_s) * s + g2chi * u * S
        du = p.pump * (1 - u) - p.gamma1 * (1 + u) - 4 * np.real(g2chi * np.conj(s) * S)
        return np.concatenate([ds.real, ds.imag, du])

    def power(self, y: np.ndarray) -> float:
        return self.params.kappa * abs(self.field(y)) ** 2

    def mean_inversion(self, y: np.ndarray) -> float:
        return float(np.dot(self.ens.weights, y[2 * self.M :]))

    def run(self, state: SpinState, config: IntegratorConfig, keep_states: bool = False, kicks: Kicks | None = None) -> Trajectory:
        obs = {"power": self.power, "amplitude": self.field, "inversion": self.mean_inversion}
        return integrate(self.rhs, state.to_vector(), config, obs, keep_states, kicks, amplitude="amplitude")


def mf_derivs_adiabatic(state: SpinState, params: ModelParams, ens: BinnedEnsemble) -> SpinState:
    if state.coherence.size != ens.M:
        raise ConfigError(f"state has {state.coherence.size} bins, ensemble has {ens.M}")
    d = AdiabaticModel(params, ens).rhs(0.0, state.to_vector())
    return SpinState.from_vector(d, ens.M)


def steady_emission_frequency(params: ModelParams) -> float:
    """CW carrier of identical spins: the ``kappa_s``/``kappa`` weighted mean of cavity and spin frequencies."""
    ks = params.kappa_s
    if params.kappa + ks <= 0:
        raise ConfigError("kappa + kappa_s must be positive")
    return (ks * params.cavity_freq + params.kappa * params.spin_center_freq) / (params.kappa + ks)


# --- three-level (dual-rail) model -------------------------------------------


@dataclass(frozen=True)
class ThreeLevelParams:
    """Rates for the ``|g>, |down>, |up>`` system (rad/s).

    The pump ``omega_rabi`` drives ``g <-> up``; the microwave mode couples
    ``down <-> up`` with ``g_mw`` and is kicked by the constant drive
    ``eta_b``; the optical mode couples ``g <-> down`` with ``g_opt``.
    ``gamma_spin / 2`` damps the microwave coherence, ``gamma_opt / 2``
    both optical coherences, ``gamma1`` returns ``down`` and ``up`` to ``g``.
    Detunings are frame frequencies: ``pump_detuning`` is laser minus
    ``g-up`` transition and ``optical_cavity_detuning`` the optical mode
    relative to the two-photon frame.
    """

    kappa_mw: float
    g_mw: float
    kappa_opt: float
    g_opt: float
    omega_rabi: float
    gamma_opt: float
    gamma_spin: float
    gamma1: float
    eta_b: float = 0.0
    ensemble_size: float = 1.0
    ensemble_detuning: float = 0.0
    pump_detuning: float = 0.0
    optical_cavity_detuning: float = 0.0

    def __post_init__(self) -> None:
        if not (self.kappa_mw > 0 and self.kappa_opt > 0):
            raise ConfigError("cavity decay rates must be > 0")
        for name in ("g_mw", "g_opt", "omega_rabi", "gamma_opt", "gamma_spin", "gamma1", "eta_b"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.ensemble_size < 1:
            raise ConfigError("ensemble_size must be >= 1")


@dataclass(frozen=True)
class ThreeLevelState:
    optical_amp: complex
    microwave_amp: complex
    s_gd: np.ndarray
    s_du: np.ndarray
    s_gu: np.ndarray
    p_g: np.ndarray
    p_d: np.ndarray
    p_u: np.ndarray

    @property
    def M(self) -> int:
        return int(self.p_g.size)

    def to_vector(self) -> np.ndarray:
        parts = [[self.optical_amp.real, self.optical_amp.imag, self.microwave_amp.real, self.microwave_amp.imag]]
        for s in (self.s_gd, self.s_du, self.s_gu):
            s = np.asarray(s, complex)
            parts += [s.real, s.imag]
        parts += [self.p_g, self.p_d, self.p_u]
        return np.concatenate([np.asarray(p, float) for p in parts])

    @classmethod
    def from_vector(cls, y: np.ndarray, M: int) -> "ThreeLevelState":
        if y.size != 4 + 9 * M:
            raise ConfigError(f"state vector has {y.size} entries, expected {4 + 9 * M}")
        c = [y[4 + 2 * k * M : 4 + (2 * k + 1) * M] + 1j * y[4 + (2 * k + 1) * M : 4 + (2 * k + 2) * M] for k in range(3)]
        r = [y[4 + (6 + k) * M : 4 + (7 + k) * M].copy() for k in range(3)]
        return cls(complex(y[0], y[1]), complex(y[2], y[3]), *c, *r)

    @classmethod
    def ground(cls, M: int, seed_coherence: float = 0.0) -> "ThreeLevelState":
        z = np.zeros(M, complex)
        return cls(0j, 0j, z, np.full(M, seed_coherence, complex), z.copy(), np.ones(M), np.zeros(M), np.zeros(M))


class ThreeLevelModel:
    def __init__(self, params: ThreeLevelParams, ens: BinnedEnsemble):
        self.params = params
        self.ens = ens
        self.M = ens.M
        self.pops = ens.populations
        p = params
        self.w_du = p.ensemble_detuning + ens.detunings
        self.w_gu = -p.pump_detuning * np.ones(ens.M)
        self.w_gd = self.w_gu - self.w_du

    @property
    def size(self) -> int:
        return 4 + 9 * self.M

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        p, M = self.params, self.M
        a = y[0] + 1j * y[1]
        b = y[2] + 1j * y[3]
        o = 4
        s_gd = y[o : o + M] + 1j * y[o + M : o + 2 * M]
        s_du = y[o + 2 * M : o + 3 * M] + 1j * y[o + 3 * M : o + 4 * M]
        s_gu = y[o + 4 * M : o + 5 * M] + 1j * y[o + 5 * M : o + 6 * M]
        p_g = y[o + 6 * M : o + 7 * M]
        p_d = y[o + 7 * M : o + 8 * M]
        p_u = y[o + 8 * M : o + 9 * M]
        W, Om, go, ge = self.pops, p.omega_rabi, p.g_opt, p.g_mw
        ac, bc = np.conj(a), np.conj(b)

        da = -(1j * p.optical_cavity_detuning + 0.5 * p.kappa_opt) * a - 1j * go * np.dot(W, s_gd)
        db = -0.5 * p.kappa_mw * b - 1j * ge * np.dot(W, s_du) - 1j * p.eta_b
        d_gd = (
            -(1j * self.w_gd + 0.5 * p.gamma_opt) * s_gd
            + 1j * Om * np.conj(s_du)
            - 1j * go * (p_g - p_d) * a
            - 1j * ge * bc * s_gu
        )
        d_du = (
            -(1j * self.w_du + 0.5 * p.gamma_spin) * s_du
            - 1j * ge * (p_d - p_u) * b
            + 1j * go * ac * s_gu
            - 1j * Om * np.conj(s_gd)
        )
        d_gu = (
            -(1j * self.w_gu + 0.5 * p.gamma_opt) * s_gu
            - 1j * ge * s_gd * b
            - 1j * Om * (p_g - p_u)
            + 1j * go * s_du * a
        )
        # -i (z - z*) = 2 Im z
        pump_flow = 2 * Om * np.imag(s_gu)
        mw_flow = 2 * ge * np.imag(bc * s_du)
        opt_flow = 2 * go * np.imag(ac * s_gd)
        dp_g = p.gamma1 * (p_d + p_u) + pump_flow + opt_flow
        dp_d = -p.gamma1 * p_d + mw_flow - opt_flow
        dp_u = -p.gamma1 * p_u - pump_flow - mw_flow

        out = np.empty_like(y)
        out[0], out[1], out[2], out[3] = da.real, da.imag, db.real, db.imag
        for k, d in enumerate((d_gd, d_du, d_gu)):
            out[o + 2 * k * M : o + (2 * k + 1) * M] = d.real
            out[o + (2 * k + 1) * M : o + (2 * k + 2) * M] = d.imag
        out[o + 6 * M : o + 7 * M] = dp_g
        out[o + 7 * M : o + 8 * M] = dp_d
        out[o + 8 * M :] = dp_u
        return out

    def microwave_power(self, y: np.ndarray) -> float:
        return self.params.kappa_mw * (y[2] * y[2] + y[3] * y[3])

    def optical_power(self, y: np.ndarray) -> float:
        return self.params.kappa_opt * (y[0] * y[0] + y[1] * y[1])

    def populations(self, y: np.ndarray) -> np.ndarray:
        M, w = self.M, self.ens.weights
        o = 4 + 6 * M
        return np.array([np.dot(w, y[o : o + M]), np.dot(w, y[o + M : o + 2 * M]), np.dot(w, y[o + 2 * M :])])

    def run(self, state: ThreeLevelState, config: IntegratorConfig, keep_states: bool = False, kicks: Kicks | None = None) -> Trajectory:
        obs = {
            "power": self.microwave_power,
            "optical_power": self.optical_power,
            "amplitude": lambda y: complex(y[2], y[3]),
            "optical_amplitude": lambda y: complex(y[0], y[1]),
            "populations": self.populations,
        }
        return integrate(self.rhs, state.to_vector(), config, obs, keep_states, kicks, amplitude="amplitude")


def mf_derivs_three_level(state: ThreeLevelState, params: ThreeLevelParams, ens: BinnedEnsemble) -> ThreeLevelState:
    if state.M != ens.M:
        raise ConfigError(f"state has {state.M} bins, ensemble has {ens.M}")
    d = ThreeLevelModel(params, ens).rhs(0.0, state.to_vector())
    return ThreeLevelState.from_vector(d, ens.M)


def gaussian_kicks(times: np.ndarray, amplitude: float, seed: int, index: tuple[int, int] = (0, 1)) -> Kicks:
    """Seeded complex Gaussian kicks of rms ``amplitude`` added to one complex component.

    ``index`` names the (real, imag) positions in the packed state vector.
    """
    rng = np.random.default_rng(seed)
    draws = rng.normal(scale=amplitude / math.sqrt(2), size=(len(times), 2))

    def apply(k: int, y: np.ndarray) -> np.ndarray:
        y = y.copy()
        y[index[0]] += draws[k, 0]
        y[index[1]] += draws[k, 1]
        return y

    return Kicks(list(times), apply)


def reference_three_level_params(**overrides) -> ThreeLevelParams:
    """Three-level rate set matched to the two-level device values.

    The microwave side reuses kappa, sqrt(N) g and the 2pi x 16 kHz coherence
    decay. The optical side (pump Rabi frequency, optical linewidth, optical
    coupling and decay, return rate) was not available in numeric form; the
    values here were chosen so the microwave pulse period comes out near 60 us.
    """
    n = 1e10
    base = dict(
        kappa_mw=hz(3.6e6),
        g_mw=hz(1.1e6) / math.sqrt(n),
        kappa_opt=hz(10e6),
        g_opt=hz(100e3) / math.sqrt(n),
        omega_rabi=hz(24e3),
        gamma_opt=hz(1e6),
        gamma_spin=hz(32e3),
        gamma1=hz(1.5e3),
        eta_b=1e3,
        ensemble_size=n,
    )
    base.update(overrides)
    return ThreeLevelParams(**base)
