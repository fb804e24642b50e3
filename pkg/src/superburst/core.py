"""Physical parameters, derived dimensionless figures and frequency binning.

All rates are angular frequencies (rad/s). Inversion convention used across
the package: ``u = +1`` means a spin fully in the upper state ``|up>`` and
``u = -1`` fully in ``|down>``. The cavity-QED literature often writes
``sigma_z = |down><down| - |up><up|``; that quantity is ``-u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import norm

TWO_PI = 2.0 * math.pi

#: Numerical slack used by state-bound checks throughout the package.
TOL_STATE = 1e-6


class ConfigError(ValueError):
    """Invalid physical or numerical configuration."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


def hz(value: float) -> float:
    """Convert a linear frequency in Hz to rad/s."""
    return TWO_PI * value


@dataclass(frozen=True)
class ModelParams:
    """Rates and counts of the driven two-level ensemble in a lossy cavity.

    ``ensemble_size`` is real-valued so scaled populations can be passed
    straight through. The total coherence decay ``kappa_s`` is derived,
    never stored.
    """

    kappa: float
    g: float
    gamma: float = 0.0
    gamma1: float = 0.0
    pump: float = 0.0
    ensemble_size: float = 1.0
    n_thermal: float = 0.0
    ensemble_detuning: float = 0.0
    inhomogeneous_linewidth: float = 0.0
    cavity_freq: float = 0.0

    def __post_init__(self) -> None:
        if not self.kappa > 0:
            raise ConfigError(f"kappa must be > 0, got {self.kappa}")
        for name in ("g", "gamma", "gamma1", "pump", "n_thermal", "inhomogeneous_linewidth"):
            value = getattr(self, name)
            if not value >= 0 or not math.isfinite(value):
                raise ConfigError(f"{name} must be finite and >= 0, got {value}")
        if not self.ensemble_size >= 1:
            raise ConfigError(f"ensemble_size must be >= 1, got {self.ensemble_size}")

    @property
    def spin_center_freq(self) -> float:
        return self.cavity_freq + self.ensemble_detuning

    @property
    def kappa_s(self) -> float:
        """Total coherence decay ``gamma + gamma1 + pump``."""
        return self.gamma + self.gamma1 + self.pump

    @property
    def kappa_tot(self) -> float:
        """Cavity decay reduced by the ensemble-cavity detuning."""
        return self.kappa / (1.0 + (2.0 * self.ensemble_detuning / self.kappa) ** 2)

    @property
    def collective_coupling(self) -> float:
        return math.sqrt(self.ensemble_size) * self.g

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def with_collective_coupling(self, g_tilde: float) -> "ModelParams":
        """Same ensemble size, single-spin coupling rescaled to ``sqrt(N) g = g_tilde``."""
        return replace(self, g=g_tilde / math.sqrt(self.ensemble_size))


def cooperativity(params: ModelParams) -> float:
    """Ensemble cooperativity ``4 N g^2 / (kappa_tot Gamma)``."""
    if params.inhomogeneous_linewidth <= 0:
        raise DomainError("cooperativity needs a positive inhomogeneous linewidth")
    return 4.0 * params.ensemble_size * params.g**2 / (params.kappa_tot * params.inhomogeneous_linewidth)


def normalized_coupling(params: ModelParams) -> float:
    """``sqrt(N) g / (kappa / 2)``."""
    return params.collective_coupling / (params.kappa / 2.0)


def effective_ensemble_size(pump_detuning: float, optical_linewidth: float, n_total: float) -> float:
    """Population reached by a pump detuned across a Gaussian optical line of FWHM ``optical_linewidth``."""
    if optical_linewidth <= 0:
        raise DomainError("optical linewidth must be positive")
    return n_total * math.exp(-4.0 * math.log(2.0) * pump_detuning**2 / optical_linewidth**2)


@dataclass(frozen=True)
class DisorderSpec:
    """How spin detunings are distributed.

    kind:
      ``gaussian``  -- FWHM ``width``; bins carry the Gaussian mass.
      ``two_delta`` -- two equal halves at ``-width`` and ``+width``.
      ``table``     -- explicit ``(detuning, weight)`` pairs.
      ``none``      -- every spin at zero detuning (single bin).

    With ``sampled=True`` a gaussian ensemble is drawn as a multinomial
    sample of ``N`` spins instead of using exact bin masses.
    """

    kind: str = "gaussian"
    width: float = 0.0
    table: tuple[tuple[float, float], ...] = ()
    rng_seed: int = 0
    sampled: bool = False
    half_span_fwhm: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("gaussian", "two_delta", "table", "none"):
            raise ConfigError(f"unknown disorder kind {self.kind!r}")
        if self.width < 0:
            raise ConfigError("disorder width must be >= 0")
        if self.kind == "table":
            if not self.table:
                raise ConfigError("table disorder needs at least one (detuning, weight) pair")
            weights = np.array([w for _, w in self.table], dtype=float)
            if np.any(weights < 0):
                raise ConfigError("table weights must be >= 0")
            if abs(weights.sum() - 1.0) > 1e-12:
                raise ConfigError(f"table weights sum to {weights.sum()!r}, expected 1")


@dataclass(frozen=True)
class BinnedEnsemble:
    """``M`` groups of identical spins at ``detunings`` holding fraction ``weights`` of ``total_n``."""

    detunings: np.ndarray
    weights: np.ndarray
    total_n: float
    bin_width: float = 0.0
    populations: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        det = np.asarray(self.detunings, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if det.ndim != 1 or det.shape != w.shape or det.size == 0:
            raise ConfigError("detunings and weights must be equal-length 1-D arrays")
        if np.any(w < 0):
            raise ConfigError("bin weights must be >= 0")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(f"bin weights sum to {w.sum()!r}, expected 1")
        if np.any(np.diff(det) < 0):
            raise ConfigError("detunings must be sorted ascending")
        det.flags.writeable = False
        w.flags.writeable = False
        pops = self.total_n * w
        pops.flags.writeable = False
        object.__setattr__(self, "detunings", det)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "populations", pops)

    @property
    def M(self) -> int:
        return int(self.detunings.size)

    def with_total(self, total_n: float) -> "BinnedEnsemble":
        return BinnedEnsemble(self.detunings, self.weights, total_n, self.bin_width)


def _normalized(w: np.ndarray) -> np.ndarray:
    w = w / w.sum()
    # a final correction on the largest entry pins the sum to 1 at round-off level
    w[np.argmax(w)] += 1.0 - w.sum()
    return w


def build_bins(spec: DisorderSpec, total_n: float, M: int = 129) -> BinnedEnsemble:
    """Group the disordered ensemble into frequency bins.

    Gaussian bins are equal-width over ``+-half_span_fwhm * FWHM``; mass
    beyond the span is folded into the two edge bins. ``M`` must be odd so
    that one bin sits on zero detuning.
    """
    if M < 1:
        raise ConfigError("bin count must be >= 1")
    if spec.kind == "none" or (spec.kind == "gaussian" and spec.width == 0):
        return BinnedEnsemble(np.zeros(1), np.ones(1), total_n)
    if spec.kind == "two_delta":
        return BinnedEnsemble(np.array([-spec.width, spec.width]), np.array([0.5, 0.5]), total_n)
    if spec.kind == "table":
        pairs = sorted(spec.table)
        det = np.array([d for d, _ in pairs], dtype=float)
        w = np.array([x for _, x in pairs], dtype=float)
        return BinnedEnsemble(det, w, total_n)

    if M % 2 == 0:
        raise ConfigError(f"gaussian binning needs an odd bin count, got {M}")
    fwhm = spec.width
    sigma = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    half = spec.half_span_fwhm * fwhm
    edges = np.linspace(-half, half, M + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    if spec.sampled:
        rng = np.random.default_rng(spec.rng_seed)
        n_int = int(round(total_n))
        # folding the tails is the same as clipping the cdf at the outer edges
        cdf = norm.cdf(edges[1:-1] / sigma)
        probs = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
        counts = rng.multinomial(n_int, probs)
        w = counts.astype(float)
    else:
        cdf = norm.cdf(edges / sigma)
        cdf[0], cdf[-1] = 0.0, 1.0
        w = np.diff(cdf)
    return BinnedEnsemble(centers, _normalized(w), total_n, bin_width=edges[1] - edges[0])


def ensemble_from_weights(detunings: Sequence[float], weights: Sequence[float], total_n: float) -> BinnedEnsemble:
    order = np.argsort(detunings)
    return BinnedEnsemble(np.asarray(detunings, float)[order], np.asarray(weights, float)[order], total_n)


def reference_params(**overrides) -> ModelParams:
    """Regime-III rate set of the Yb:YVO4 device (rad/s).

    kappa = 2pi x 3.6 MHz, sqrt(N) g = 2pi x 1.1 MHz at N = 1e10, homogeneous
    coherence decay 2pi x 16 kHz, pump 2pi x 0.76 kHz, relaxation 2pi x 0.44 kHz,
    Gaussian disorder FWHM 2pi x 160 kHz, 3.2 thermal photons.
    """
    n = 1e10
    base = dict(
        kappa=hz(3.6e6),
        g=hz(1.1e6) / math.sqrt(n),
        gamma=hz(32e3) - hz(0.76e3) - hz(0.44e3),
        gamma1=hz(0.44e3),
        pump=hz(0.76e3),
        ensemble_size=n,
        n_thermal=3.2,
        inhomogeneous_linewidth=hz(160e3),
    )
    base.update(overrides)
    return ModelParams(**base)
