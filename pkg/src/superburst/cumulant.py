"""Second-order cumulant dynamics of the frequency-binned ensemble.

Variables per bin ``m`` (``W_m = N rho_m`` spins each):

* ``B = <b^dag b>``                     photon number
* ``X_m = <b^dag sigma_du,m>``          cavity-spin correlation
* ``C_mn = <sigma_ud,m sigma_du,n>``    spin-spin correlation between two
  distinct spins (Hermitian; only ``m <= n`` is stored)
* ``u_m``                               inversion, +1 = fully up

The packed real state is ``[B, Re X, Im X, u, Re c, Im c]`` with ``c`` the
row-major upper triangle of ``C``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .core import BinnedEnsemble, ConfigError, ModelParams
from .integrate import IntegratorConfig, Kicks, Trajectory, integrate

try:
    import numba

    _threads = os.environ.get("SUPERBURST_THREADS")
    if _threads:
        numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


class NumericalDegradationError(ArithmeticError):
    """A structural property (such as Hermiticity) was lost beyond tolerance."""


def n_triangle(M: int) -> int:
    return M * (M + 1) // 2


def state_size(M: int) -> int:
    return 1 + 3 * M + 2 * n_triangle(M)


@dataclass(frozen=True)
class CumulantState:
    photon_number: float
    cross_corr: np.ndarray
    spin_tri: np.ndarray
    inversion: np.ndarray

    @property
    def M(self) -> int:
        return int(self.inversion.size)

    @property
    def spin_corr(self) -> np.ndarray:
        """Full Hermitian ``M x M`` view of the spin-spin correlations."""
        return tri_to_full(self.spin_tri, self.M)

    def to_vector(self) -> np.ndarray:
        x = np.asarray(self.cross_corr, complex)
        c = np.asarray(self.spin_tri, complex)
        return np.concatenate([[self.photon_number], x.real, x.imag, np.asarray(self.inversion, float), c.real, c.imag])

    @classmethod
    def from_vector(cls, y: np.ndarray, M: int) -> "CumulantState":
        if y.size != state_size(M):
            raise ConfigError(f"state vector has {y.size} entries, expected {state_size(M)}")
        nt = n_triangle(M)
        o = 1 + 3 * M
        return cls(
            float(y[0]),
            y[1 : 1 + M] + 1j * y[1 + M : 1 + 2 * M],
            y[o : o + nt] + 1j * y[o + nt :],
            y[1 + 2 * M : o].copy(),
        )

    @classmethod
    def from_full(cls, photon_number: float, cross_corr: np.ndarray, spin_corr: np.ndarray, inversion: np.ndarray) -> "CumulantState":
        C = np.asarray(spin_corr, complex)
        if not np.allclose(C, C.conj().T, rtol=0, atol=1e-12 * max(1.0, np.abs(C).max())):
            raise NumericalDegradationError("spin correlation matrix is not Hermitian")
        return cls(float(photon_number), np.asarray(cross_corr, complex), full_to_tri(C), np.asarray(inversion, float))

    @classmethod
    def ground(cls, M: int, n_thermal: float = 0.0) -> "CumulantState":
        """All spins down, no correlations, thermal cavity."""
        return cls(float(n_thermal), np.zeros(M, complex), np.zeros(n_triangle(M), complex), -np.ones(M))


def tri_to_full(tri: np.ndarray, M: int) -> np.ndarray:
    iu = np.triu_indices(M)
    C = np.zeros((M, M), complex)
    C[iu] = tri
    lower = np.tril_indices(M, -1)
    C[lower] = np.conj(C.T[lower])
    return C


def full_to_tri(C: np.ndarray) -> np.ndarray:
    return np.asarray(C)[np.triu_indices(C.shape[0])].copy()


# --- reference transcription (full matrices, plain numpy) -------------------


def cumulant_derivs_reference(y: np.ndarray, params: ModelParams, ens: BinnedEnsemble) -> np.ndarray:
    """Binned cumulant right-hand side written with full matrices.

    Slow but literal; the compiled kernel is checked against it.
    """
    M = ens.M
    st = CumulantState.from_vector(y, M)
    B, X, u, C = st.photon_number, st.cross_corr, st.inversion, st.spin_corr
    p = params
    W = ens.populations
    delta = p.ensemble_detuning + ens.detunings
    g, k, ks = p.g, p.kappa, p.kappa_s

    # (W_m - 1) C_mm + sum_{n != m} W_n C_nm
    drive = W @ C - np.diag(C)
    dX = (-1j * delta - 0.5 * (k + ks)) * X + 1j * g * (0.5 * (1 + u) + drive + u * B)
    dB = -k * B + k * p.n_thermal + 2 * g * np.dot(W, X.imag)
    dC = (1j * (delta[:, None] - delta[None, :]) - ks) * C - 1j * g * u[:, None] * X[None, :] + 1j * g * u[None, :] * np.conj(X)[:, None]
    du = p.pump * (1 - u) - p.gamma1 * (1 + u) - 4 * g * X.imag
    return CumulantState(dB, dX, full_to_tri(dC), du).to_vector()


# --- compiled kernel --------------------------------------------------------


def _kernel_py(y, out, M, delta, W, g, kappa, ks, pump, gamma1, nth):
    nt = M * (M + 1) // 2
    o = 1 + 3 * M
    B = y[0]
    drive_re = np.zeros(M)
    drive_im = np.zeros(M)
    k = 0
    for m in range(M):
        for n in range(m, M):
            cr = y[o + k]
            ci = y[o + nt + k]
            # S_n += W_m C_mn
            drive_re[n] += W[m] * cr
            drive_im[n] += W[m] * ci
            if n != m:
                # S_m += W_n C_nm = W_n conj(C_mn)
                drive_re[m] += W[n] * cr
                drive_im[m] -= W[n] * ci
            else:
                drive_re[m] -= cr
                drive_im[m] -= ci
            k += 1
    half = 0.5 * (kappa + ks)
    src = 0.0
    for m in range(M):
        xr = y[1 + m]
        xi = y[1 + M + m]
        u = y[1 + 2 * M + m]
        # ig * (real bracket + i imag bracket)
        br = 0.5 * (1.0 + u) + drive_re[m] + u * B
        bi = drive_im[m]
        # (-i delta - half) (xr + i xi)
        out[1 + m] = -half * xr + delta[m] * xi - g * bi
        out[1 + M + m] = -half * xi - delta[m] * xr + g * br
        out[1 + 2 * M + m] = pump * (1.0 - u) - gamma1 * (1.0 + u) - 4.0 * g * xi
        src += W[m] * xi
    out[0] = -kappa * B + kappa * nth + 2.0 * g * src
    k = 0
    for m in range(M):
        um = y[1 + 2 * M + m]
        xmr = y[1 + m]
        xmi = y[1 + M + m]
        for n in range(m, M):
            un = y[1 + 2 * M + n]
            xnr = y[1 + n]
            xni = y[1 + M + n]
            cr = y[o + k]
            ci = y[o + nt + k]
            w = delta[m] - delta[n]
            # (i w - ks) C - i g u_m X_n + i g u_n conj(X_m)
            out[o + k] = -ks * cr - w * ci + g * um * xni + g * un * xmi
            out[o + nt + k] = -ks * ci + w * cr - g * um * xnr + g * un * xmr
            k += 1


_kernel = numba.njit(cache=True, fastmath=False)(_kernel_py) if numba is not None else _kernel_py


class CumulantModel:
    def __init__(self, params: ModelParams, ens: BinnedEnsemble, compiled: bool = True):
        self.params = params
        self.ens = ens
        self.M = ens.M
        self.delta = np.ascontiguousarray(params.ensemble_detuning + ens.detunings, dtype=float)
        self.W = np.ascontiguousarray(ens.populations, dtype=float)
        self.kernel = _kernel if compiled else _kernel_py
        iu, ju = np.triu_indices(self.M)
        # weights turning the packed triangle into sum_{m,n} W_m W_n C_mn - sum_m W_m C_mm
        pair = self.W[iu] * self.W[ju]
        self._tri_w = np.where(iu == ju, pair - self.W[iu], 2 * pair)

    @property
    def size(self) -> int:
        return state_size(self.M)

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        p = self.params
        out = np.empty_like(y)
        self.kernel(y, out, self.M, self.delta, self.W, p.g, p.kappa, p.kappa_s, p.pump, p.gamma1, p.n_thermal)
        return out

    def power(self, y: np.ndarray) -> float:
        return self.params.kappa * y[0]

    def photon_number(self, y: np.ndarray) -> float:
        return float(y[0])

    def mean_inversion(self, y: np.ndarray) -> float:
        M = self.M
        return float(np.dot(self.ens.weights, y[1 + 2 * M : 1 + 3 * M]))

    def decomposition(self, y: np.ndarray) -> np.ndarray:
        """``[spontaneous, stimulated, superradiant]`` as in :func:`emission_decomposition`."""
        M, p = self.M, self.params
        u = y[1 + 2 * M : 1 + 3 * M]
        o = 1 + 3 * M
        # the Hermitian pair sum is real, so only Re c enters
        sr = float(np.dot(self._tri_w, y[o : o + n_triangle(M)]))
        rate = 4 * p.g**2 / p.kappa_tot
        return rate * np.array([np.dot(self.W, 0.5 * (1 + u)), np.dot(self.W, u) * y[0], sr])

    def run(
        self,
        state: CumulantState,
        config: IntegratorConfig,
        keep_states: bool = False,
        kicks: Kicks | None = None,
        decomposition: bool = False,
    ) -> Trajectory:
        obs = {"power": self.power, "photon_number": self.photon_number, "inversion": self.mean_inversion}
        if decomposition:
            obs["decomposition"] = self.decomposition
        return integrate(self.rhs, state.to_vector(), config, obs, keep_states, kicks)


def cumulant_derivs(state: CumulantState, params: ModelParams, ens: BinnedEnsemble) -> CumulantState:
    if state.M != ens.M:
        raise ConfigError(f"state has {state.M} bins, ensemble has {ens.M}")
    d = CumulantModel(params, ens).rhs(0.0, state.to_vector())
    return CumulantState.from_vector(d, ens.M)


def spin_spin_correlation(state: CumulantState, ens: BinnedEnsemble, rtol: float = 1e-9) -> float:
    """Collective ``<S_ud S_du>`` excluding same-spin terms."""
    if state.M != ens.M:
        raise ConfigError(f"state has {state.M} bins, ensemble has {ens.M}")
    W = ens.populations
    C = state.spin_corr
    total = W @ C @ W - np.dot(W, np.diag(C))
    if abs(total.imag) > rtol * abs(total) + 1e-300:
        raise NumericalDegradationError(f"collective correlation has imaginary part {total.imag:.3e}")
    return float(total.real)


@dataclass(frozen=True)
class EmissionRates:
    spontaneous: float
    stimulated: float
    superradiant: float

    def __iter__(self):
        return iter((self.spontaneous, self.stimulated, self.superradiant))

    @property
    def total(self) -> float:
        return self.spontaneous + self.stimulated + self.superradiant


def emission_decomposition(state: CumulantState, params: ModelParams, ens: BinnedEnsemble) -> EmissionRates:
    """Split the bad-cavity photon source into spontaneous, stimulated and superradiant parts.

    With ``W_m`` spins per bin, the collective terms are ``sum W (1+u)/2``
    (upper-state population), ``sum W u * B`` and ``<S_ud S_du>``, each times
    ``4 g^2 / kappa_tot``.
    """
    W = ens.populations
    rate = 4 * params.g**2 / params.kappa_tot
    u = state.inversion
    spont = rate * float(np.dot(W, 0.5 * (1 + u)))
    stim = rate * float(np.dot(W, u)) * state.photon_number
    sr = rate * spin_spin_correlation(state, ens)
    return EmissionRates(spont, stim, sr)


def slaved_cross_corr(state: CumulantState, params: ModelParams, ens: BinnedEnsemble) -> np.ndarray:
    """Cavity-spin correlations at their adiabatic values for the given spins and photons."""
    W = ens.populations
    C = state.spin_corr
    u = state.inversion
    delta = params.ensemble_detuning + ens.detunings
    drive = W @ C - np.diag(C)
    bracket = 0.5 * (1 + u) + drive + u * state.photon_number
    return 1j * params.g * bracket / (0.5 * (params.kappa + params.kappa_s) + 1j * delta)


# --- homogeneous rescaled system --------------------------------------------


@dataclass(frozen=True)
class ReducedHomogeneousState:
    """Photons per spin ``n``, scaled spin-cavity correlation ``x``, inversion ``z`` and spin-spin correlation ``c``."""

    n: float
    x: float
    z: float
    c: float

    def to_vector(self) -> np.ndarray:
        return np.array([self.n, self.x, self.z, self.c])


def homogeneous_reduced_derivs(
    state: ReducedHomogeneousState, g_tilde: float, kappa: float, gamma_plus: float, gamma_minus: float, gamma_s: float, N: float
) -> ReducedHomogeneousState:
    if N < 1:
        raise ConfigError("N must be >= 1")
    n, x, z, c = state.n, state.x, state.z, state.c
    return ReducedHomogeneousState(
        2 * g_tilde * x - kappa * n,
        g_tilde * (z * n + c + (1 + z) / (2 * N)) - (gamma_s + 0.5 * kappa) * x,
        gamma_minus - gamma_plus * z - 4 * g_tilde * x,
        2 * g_tilde * z * x - 2 * gamma_s * c,
    )


def collective_rate(g_tilde: float, kappa: float, factor: float = 4.0) -> float:
    """``factor * g_tilde^2 / kappa``; 4 makes the large-N fixed point exact, 2 reproduces the quoted z."""
    return factor * g_tilde**2 / kappa


def homogeneous_steady_state(
    g_tilde: float, kappa: float, gamma_plus: float, gamma_minus: float, gamma_s: float, factor: float = 4.0
) -> ReducedHomogeneousState:
    """Non-trivial large-N steady state; exact for ``factor = 4`` when the 1/N term is dropped."""
    gamma = collective_rate(g_tilde, kappa, factor)
    z = 2 * gamma_s / gamma
    fill = 1 - gamma_plus / gamma_minus * z
    return ReducedHomogeneousState(
        gamma_minus / (2 * kappa) * fill,
        gamma_minus / (2 * math.sqrt(gamma * kappa)) * fill,
        z,
        gamma_minus / (2 * gamma) * fill,
    )


def ensemble_threshold(g_tilde: float, kappa: float, gamma_s: float, gamma_minus: float, factor: float = 2.0) -> float:
    """Ensemble size above which the collective large-N solution dominates: ``Gamma kappa / (2 gamma_s gamma_-)``."""
    if min(g_tilde, kappa, gamma_s, gamma_minus) <= 0:
        raise ConfigError("all threshold arguments must be > 0")
    return collective_rate(g_tilde, kappa, factor) * kappa / (2 * gamma_s * gamma_minus)


# --- unbinned per-spin equations (small-N oracle) ---------------------------


class PerSpinCumulant:
    """Cumulant equations with one variable set per spin; ``C`` diagonal unused.

    Only practical for a handful of spins. Packing: ``[B, Re X, Im X, u,
    Re C, Im C]`` with ``C`` the full ``N x N`` matrix.
    """

    def __init__(self, params: ModelParams, detunings: np.ndarray):
        self.params = params
        self.delta = params.ensemble_detuning + np.asarray(detunings, float)
        self.N = self.delta.size

    def initial(self) -> np.ndarray:
        N = self.N
        y = np.zeros(1 + 3 * N + 2 * N * N)
        y[0] = self.params.n_thermal
        y[1 + 2 * N : 1 + 3 * N] = -1.0
        return y

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        p, N = self.params, self.N
        g = p.g
        B = y[0]
        X = y[1 : 1 + N] + 1j * y[1 + N : 1 + 2 * N]
        u = y[1 + 2 * N : 1 + 3 * N]
        o = 1 + 3 * N
        C = (y[o : o + N * N] + 1j * y[o + N * N :]).reshape(N, N)
        dX = np.empty(N, complex)
        for k in range(N):
            corr = sum(C[j, k] for j in range(N) if j != k)
            dX[k] = (-1j * self.delta[k] - 0.5 * (p.kappa + p.kappa_s)) * X[k] + 1j * g * (0.5 * (1 + u[k]) + corr + u[k] * B)
        dB = -p.kappa * B + p.kappa * p.n_thermal + 2 * g * np.sum(X.imag)
        dC = np.zeros((N, N), complex)
        for i in range(N):
            for j in range(N):
                if i != j:
                    dC[i, j] = (
                        (1j * (self.delta[i] - self.delta[j]) - p.kappa_s) * C[i, j]
                        - 1j * g * u[i] * X[j]
                        + 1j * g * u[j] * np.conj(X[i])
                    )
        du = p.pump * (1 - u) - p.gamma1 * (1 + u) - 4 * g * X.imag
        dCf = dC.ravel()
        return np.concatenate([[dB], dX.real, dX.imag, du, dCf.real, dCf.imag])


def thermal_kicks(times, photon_jitter: float, seed: int) -> Kicks:
    """Seeded random jumps of the photon number (kept non-negative)."""
    rng = np.random.default_rng(seed)
    draws = rng.normal(scale=photon_jitter, size=len(times))

    def apply(k: int, y: np.ndarray) -> np.ndarray:
        y = y.copy()
        y[0] = max(0.0, y[0] + draws[k])
        return y

    return Kicks(list(times), apply)


def randomized_initial_state(M: int, n_thermal: float, seed: int, inversion_range=(-1.0, -0.5), log10_coherence=(-8.0, -3.0)) -> CumulantState:
    """Ground-like start with a seeded random inversion and coherence seed.

    A uniform product state with per-spin coherence ``eps`` has
    ``C_mn = eps^2`` and ``X_m = 0``; ``eps`` is drawn log-uniformly.
    """
    rng = np.random.default_rng(seed)
    u0 = rng.uniform(*inversion_range)
    eps = 10 ** rng.uniform(*log10_coherence)
    tri = np.full(n_triangle(M), eps * eps, complex)
    return CumulantState(float(n_thermal), np.zeros(M, complex), tri, np.full(M, u0))
