"""Two-sub-ensemble reduction: fixed points, stability, Hopf point and phase diagram.

Two equal halves of the ensemble sit at detunings ``+-delta``. With a real
cavity quadrature ``w``, symmetric and antisymmetric coherences ``x, y``
and inversion ``z`` (positive when pumped), the flow is

    w' = -kappa w / 2 + g x
    x' = -delta y - gamma_s x + g w z
    y' =  delta x - gamma_s y
    z' = gamma_- - gamma_+ z - 4 g w x

with ``g = sqrt(N) g_single``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .core import ConfigError, DomainError, ModelParams, hz


class ContractViolation(ValueError):
    """An operation was called with input that breaks its precondition."""


class PoleError(ArithmeticError):
    """The Hopf residual is evaluated where ``c1`` or ``c3`` vanishes."""


@dataclass(frozen=True)
class ReducedParams:
    g_tilde: float
    kappa: float
    gamma_s: float
    gamma_plus: float
    gamma_minus: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not self.kappa > 0:
            raise ConfigError("kappa must be > 0")
        if not self.gamma_s > 0:
            raise ConfigError("gamma_s must be > 0")
        if self.gamma_plus < abs(self.gamma_minus):
            raise ConfigError("gamma_plus must be >= |gamma_minus|")
        if self.g_tilde < 0:
            raise ConfigError("g_tilde must be >= 0")

    def replace(self, **changes) -> "ReducedParams":
        return replace(self, **changes)

    @classmethod
    def from_model(cls, params: ModelParams, delta: float | None = None) -> "ReducedParams":
        """Map device rates: ``gamma_s = kappa_s / 2``, ``gamma_+- = pump +- gamma1``.

        Without an explicit ``delta`` the inhomogeneous linewidth is mapped
        through :func:`delta_from_linewidth` (zero if the line is narrower
        than the homogeneous width).
        """
        gs = params.kappa_s / 2
        if delta is None:
            lw = params.inhomogeneous_linewidth
            delta = delta_from_linewidth(lw, gs) if lw > 2 * gs else 0.0
        return cls(params.collective_coupling, params.kappa, gs, params.pump + params.gamma1, params.pump - params.gamma1, delta)


def reference_reduced_params(delta: float = 0.0) -> ReducedParams:
    """Device rates: kappa = 2pi x 3.6 MHz, g = 2pi x 1.1 MHz, gamma_s = 2pi x 16 kHz, gamma_+- = 2pi x (1.2, 0.32) kHz."""
    return ReducedParams(hz(1.1e6), hz(3.6e6), hz(16e3), hz(1.2e3), hz(0.32e3), delta)


def linewidth_from_delta(delta: float, gamma_s: float) -> float:
    """Effective linewidth ``gamma0 (1 + 4 delta^2 / gamma0^2)`` with ``gamma0 = 2 gamma_s``."""
    g0 = 2 * gamma_s
    return g0 * (1 + 4 * delta**2 / g0**2)


def delta_from_linewidth(linewidth: float, gamma_s: float) -> float:
    g0 = 2 * gamma_s
    if linewidth < g0:
        raise DomainError(f"linewidth {linewidth} is below the homogeneous width {g0}")
    return 0.5 * g0 * math.sqrt(linewidth / g0 - 1)


@dataclass(frozen=True)
class ReducedState:
    w: float
    x: float
    y: float
    z: float

    def to_vector(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], float)

    def flipped(self) -> "ReducedState":
        return ReducedState(-self.w, -self.x, -self.y, self.z)


@dataclass(frozen=True)
class SteadyStateSet:
    trivial: ReducedState
    nontrivial_plus: ReducedState | None
    nontrivial_minus: ReducedState | None

    @property
    def nontrivial_valid(self) -> bool:
        return self.nontrivial_plus is not None


def reduced_derivs(state: ReducedState, p: ReducedParams) -> ReducedState:
    w, x, y, z = state.w, state.x, state.y, state.z
    g = p.g_tilde
    return ReducedState(
        -0.5 * p.kappa * w + g * x,
        -p.delta * y - p.gamma_s * x + g * w * z,
        p.delta * x - p.gamma_s * y,
        p.gamma_minus - p.gamma_plus * z - 4 * g * w * x,
    )


def _rhs_vec(v: np.ndarray, p: ReducedParams) -> np.ndarray:
    return reduced_derivs(ReducedState(*v), p).to_vector()


def nontrivial_inversion(p: ReducedParams) -> float:
    if p.g_tilde == 0:
        return math.inf
    return p.kappa * (p.gamma_s**2 + p.delta**2) / (2 * p.g_tilde**2 * p.gamma_s)


def nontrivial_x0_squared(p: ReducedParams) -> float:
    if p.g_tilde == 0:
        return -math.inf
    return p.kappa / (8 * p.g_tilde**2) * (p.gamma_minus - p.gamma_plus * nontrivial_inversion(p))


def steady_states(p: ReducedParams) -> SteadyStateSet:
    z_triv = p.gamma_minus / p.gamma_plus if p.gamma_plus > 0 else 0.0
    trivial = ReducedState(0.0, 0.0, 0.0, z_triv)
    x0sq = nontrivial_x0_squared(p)
    if not x0sq > 0:
        return SteadyStateSet(trivial, None, None)
    x0 = math.sqrt(x0sq)
    plus = ReducedState(2 * p.g_tilde / p.kappa * x0, x0, p.delta / p.gamma_s * x0, nontrivial_inversion(p))
    return SteadyStateSet(trivial, plus, plus.flipped())


def threshold_ratio(p: ReducedParams) -> float:
    """``2 g^2 gamma_s gamma_- / (kappa gamma_+ (gamma_s^2 + delta^2))``; the nontrivial branch exists above 1."""
    return 2 * p.g_tilde**2 * p.gamma_s * p.gamma_minus / (p.kappa * p.gamma_plus * (p.gamma_s**2 + p.delta**2))


def trivial_instability(p: ReducedParams) -> bool:
    """Linear instability of the non-emitting state.

    Above threshold this always holds. With large ``delta`` it can also hold
    below threshold (a negative linear coefficient of the field-spin block),
    where the flow settles on a small oscillating cycle with no fixed point;
    the phase diagram still labels that band ``no_SR``.
    """
    lam = np.linalg.eigvals(jacobian(steady_states(p).trivial, p, check=False))
    return bool(lam.real.max() > 0)


def _steady_residual(state: ReducedState, p: ReducedParams) -> float:
    r = _rhs_vec(state.to_vector(), p)
    scale = max(1.0, p.kappa, p.gamma_s, p.g_tilde)
    return float(np.max(np.abs(r))) / scale


def jacobian(ss: ReducedState, p: ReducedParams, check: bool = True) -> np.ndarray:
    """Linearization at the steady state ``ss``; ``check`` enforces the steady-state precondition."""
    if check and _steady_residual(ss, p) > 1e-9:
        raise ContractViolation("jacobian requested at a point that is not a steady state")
    g = p.g_tilde
    w0, x0, z0 = ss.w, ss.x, ss.z
    return np.array(
        [
            [-0.5 * p.kappa, g, 0.0, 0.0],
            [g * z0, -p.gamma_s, -p.delta, g * w0],
            [0.0, p.delta, -p.gamma_s, 0.0],
            [-4 * g * x0, -4 * g * w0, 0.0, -p.gamma_plus],
        ]
    )


def char_coeffs(p: ReducedParams) -> tuple[float, float, float, float]:
    """``(c3, c2, c1, c0)`` of ``lambda^4 + c3 lambda^3 + c2 lambda^2 + c1 lambda + c0`` on the nontrivial branch."""
    if not nontrivial_x0_squared(p) > 0:
        raise DomainError("nontrivial branch absent")
    g2, k, gs, gp, gm, d2 = p.g_tilde**2, p.kappa, p.gamma_s, p.gamma_plus, p.gamma_minus, p.delta**2
    c3 = gp + 2 * gs + 0.5 * k
    c2 = d2 + 2 * g2 * gm / k + 0.5 * ((gp + gs) * (2 * gs + k) - d2 / gs * (2 * gp + k))
    c1 = 2 * g2 * gm * (gs + k) / k - gp * k * (gs**2 + 3 * d2) / (2 * gs)
    c0 = 2 * g2 * gm * gs - gp * k * (gs**2 + d2)
    return c3, c2, c1, c0


def hopf_residual(delta: float, p: ReducedParams) -> float:
    """``c0 c3 / c1 - c2 + c1 / c3``; negative on the stable side when ``c1, c3 > 0``."""
    q = p.replace(delta=delta)
    c3, c2, c1, c0 = char_coeffs(q)
    if c1 == 0 or c3 == 0:
        raise PoleError(f"c1 or c3 vanishes at delta = {delta}")
    return c0 * c3 / c1 - c2 + c1 / c3


def hurwitz_margin(p: ReducedParams) -> float:
    """Pole-free form ``c3 c2 c1 - c1^2 - c3^2 c0``; positive (with positive coefficients) means stable."""
    c3, c2, c1, c0 = char_coeffs(p)
    return c3 * c2 * c1 - c1 * c1 - c3 * c3 * c0


@dataclass(frozen=True)
class HopfPoint:
    delta: float
    linewidth: float
    residual: float
    eigenvalues: np.ndarray


def nontrivial_eigenvalues(p: ReducedParams) -> np.ndarray:
    ss = steady_states(p)
    if not ss.nontrivial_valid:
        raise DomainError("nontrivial branch absent")
    return np.linalg.eigvals(jacobian(ss.nontrivial_plus, p, check=False))


def critical_disorder(p: ReducedParams, delta_max: float | None = None, n_scan: int = 2000, xtol: float = 1e-6) -> HopfPoint:
    """Smallest ``delta`` where the nontrivial branch loses stability.

    The Hopf residual is scanned on a grid; brackets whose ends straddle a
    zero of ``c1`` are poles, not roots, and are skipped. Roots are polished
    with Brent's bracketed bisection/secant method to ``xtol`` (rad/s).
    """
    if delta_max is None:
        # beyond this the nontrivial branch no longer exists
        lim = 2 * p.g_tilde**2 * p.gamma_s * p.gamma_minus / (p.kappa * p.gamma_plus) - p.gamma_s**2 if p.gamma_plus > 0 else 0.0
        if lim <= 0:
            raise DomainError("nontrivial branch absent at zero disorder")
        delta_max = math.sqrt(lim) * (1 - 1e-9)
    grid = np.linspace(0.0, delta_max, n_scan)

    def c1_at(d):
        return char_coeffs(p.replace(delta=d))[2]

    def safe(d):
        try:
            return hopf_residual(d, p)
        except PoleError:
            return math.nan

    vals = np.array([safe(d) for d in grid])
    c1s = np.array([c1_at(d) for d in grid])
    for i in range(n_scan - 1):
        a, b = vals[i], vals[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)) or a * b > 0:
            continue
        if c1s[i] * c1s[i + 1] <= 0:
            continue  # pole of c0 c3 / c1
        root = brentq(safe, grid[i], grid[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps)
        return HopfPoint(root, linewidth_from_delta(root, p.gamma_s), safe(root), nontrivial_eigenvalues(p.replace(delta=root)))
    raise DomainError("no Hopf point on the nontrivial branch within the scanned range")


# --- phase diagram ------------------------------------------------------------

NO_SR, CW_SR, PERIODIC_SR = "no_SR", "CW_SR", "periodic_SR"
LABELS = (NO_SR, CW_SR, PERIODIC_SR)


@dataclass(frozen=True)
class PhaseDiagram:
    """``labels[i, j]`` belongs to ``g_norm[i]`` and ``disorder[j]`` (normalized as ``delta^2 / gamma_s^2``)."""

    g_norm: np.ndarray
    disorder: np.ndarray
    labels: np.ndarray
    threshold_boundary: np.ndarray
    hopf_boundary: np.ndarray
    include_rate_factor: bool

    def label_at(self, g_norm: float, disorder: float) -> str:
        i = int(np.argmin(np.abs(self.g_norm - g_norm)))
        j = int(np.argmin(np.abs(self.disorder - disorder)))
        return str(self.labels[i, j])

    def rows(self):
        for i, gn in enumerate(self.g_norm):
            for j, d in enumerate(self.disorder):
                yield float(gn), float(d), str(self.labels[i, j])


def _rate_factor(base: ReducedParams, include: bool) -> float:
    if not include:
        return 1.0
    if base.gamma_plus <= 0 or base.gamma_minus <= 0:
        raise DomainError("rate factor sqrt(gamma_-/gamma_+) needs gamma_- > 0")
    return math.sqrt(base.gamma_minus / base.gamma_plus)


def coupling_from_gnorm(g_norm: float, base: ReducedParams, include_rate_factor: bool = True) -> float:
    """Collective coupling at normalized coupling ``g_norm``.

    ``g_norm = g / (kappa / 2)``, optionally times ``sqrt(gamma_- / gamma_+)``.
    """
    return g_norm * 0.5 * base.kappa / _rate_factor(base, include_rate_factor)


def _classify(g_tilde: np.ndarray, delta: np.ndarray, base: ReducedParams) -> np.ndarray:
    """Vectorized labels (0 no_SR, 1 CW_SR, 2 periodic_SR) for paired arrays."""
    k, gs, gp, gm = base.kappa, base.gamma_s, base.gamma_plus, base.gamma_minus
    g = np.asarray(g_tilde, float)
    d = np.asarray(delta, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z0 = k * (gs**2 + d**2) / (2 * g**2 * gs)
        x0sq = k / (8 * g**2) * (gm - gp * z0)
    exists = np.isfinite(x0sq) & (x0sq > 0)
    out = np.zeros(g.shape, dtype=np.int8)
    if not exists.any():
        return out
    ge, de, z = g[exists], d[exists], z0[exists]
    x0 = np.sqrt(x0sq[exists])
    w0 = 2 * ge / k * x0
    J = np.zeros((ge.size, 4, 4))
    J[:, 0, 0] = -0.5 * k
    J[:, 0, 1] = ge
    J[:, 1, 0] = ge * z
    J[:, 1, 1] = -gs
    J[:, 1, 2] = -de
    J[:, 1, 3] = ge * w0
    J[:, 2, 1] = de
    J[:, 2, 2] = -gs
    J[:, 3, 0] = -4 * ge * x0
    J[:, 3, 1] = -4 * ge * w0
    J[:, 3, 3] = -gp
    growth = np.linalg.eigvals(J).real.max(axis=1)
    out[exists] = np.where(growth > 0, 2, 1)
    return out


def _refine(lo: float, hi: float, inside, iters: int) -> float:
    """Bisect the crossing of a boolean predicate between ``lo`` (False) and ``hi`` (True)."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if inside(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def phase_diagram(
    g_norm: np.ndarray,
    disorder: np.ndarray,
    base: ReducedParams,
    include_rate_factor: bool = True,
    refine_iters: int = 20,
) -> PhaseDiagram:
    """Label each ``(g_norm, disorder)`` cell and trace the two boundaries.

    Boundaries are polylines of ``(disorder, g_norm)`` pairs: the threshold
    curve (nontrivial branch appears) in closed form, the Hopf curve at the
    first CW-to-periodic crossing in each disorder column, bisected between
    the grid cells.
    """
    gn = np.asarray(g_norm, float)
    dn = np.asarray(disorder, float)
    if gn.size == 0 or dn.size == 0:
        raise ConfigError("phase diagram grid must be non-empty")
    if np.any(dn < 0):
        raise ConfigError("normalized disorder must be >= 0")
    factor = _rate_factor(base, include_rate_factor)
    G, Dn = np.meshgrid(gn, dn, indexing="ij")
    gt = G * 0.5 * base.kappa / factor
    delta = base.gamma_s * np.sqrt(Dn)
    codes = _classify(gt.ravel(), delta.ravel(), base).reshape(G.shape)
    labels = np.array(LABELS, dtype=object)[codes]

    # threshold: 2 g^2 gs gm = kappa gp (gs^2 + delta^2)
    thr = []
    if base.gamma_minus > 0:
        for d in dn:
            g_thr = math.sqrt(base.kappa * base.gamma_plus * base.gamma_s**2 * (1 + d) / (2 * base.gamma_s * base.gamma_minus))
            thr.append((float(d), g_thr * factor / (0.5 * base.kappa)))

    hopf = []
    for j, d in enumerate(dn):
        col = codes[:, j]
        delta_j = base.gamma_s * math.sqrt(d)
        for i in range(gn.size - 1):
            if col[i] != 2 and col[i + 1] == 2:
                def periodic(g, dj=delta_j):
                    return _classify(np.array([g * 0.5 * base.kappa / factor]), np.array([dj]), base)[0] == 2

                hopf.append((float(d), _refine(gn[i], gn[i + 1], periodic, refine_iters)))
                break
    return PhaseDiagram(gn, dn, labels, np.array(thr).reshape(-1, 2), np.array(hopf).reshape(-1, 2), include_rate_factor)


def periodic_onset(disorder: float, base: ReducedParams, include_rate_factor: bool = True, g_max: float = 10.0, n: int = 4000) -> float:
    """Smallest normalized coupling with an unstable nontrivial branch at the given normalized disorder."""
    grid = np.linspace(1e-3, g_max, n)
    pd = phase_diagram(grid, np.array([disorder]), base, include_rate_factor)
    if pd.hopf_boundary.size == 0:
        return math.inf
    return float(pd.hopf_boundary[0, 1])
