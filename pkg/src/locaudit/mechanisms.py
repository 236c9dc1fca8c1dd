"""Additive-noise DP mechanisms and the optimal composition accountant.

Covers the Laplace and Gaussian mechanisms, per-observation sensitivity,
the k-fold optimal composition region, and the expected-attack-accuracy
bound implied by that region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import norm

from .data import AggregateMatrix, NoisyAggregate, as_rng

LAPLACE = "laplace"
GAUSSIAN = "gaussian"


def gaussian_sigma(epsilon: float, delta: float, clip_bound: float) -> float:
    """Classical-bound noise scale for the Gaussian mechanism, l2 sensitivity C."""
    if not 0 < delta < 1:
        raise ValueError("gaussian mechanism requires delta in (0, 1)")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return clip_bound * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


@dataclass(frozen=True)
class MechanismSpec:
    """A per-observation DP mechanism: family, budget, clip bound, noise scale.

    ``noise_scale`` is the Laplace scale b = C/epsilon or the Gaussian sigma.
    A noise scale of 0 means "no noise" and is accepted for testing.
    """

    family: str
    epsilon: float
    delta: float
    clip_bound: int
    noise_scale: float

    def __post_init__(self):
        if self.family not in (LAPLACE, GAUSSIAN):
            raise ValueError(f"unknown mechanism family {self.family!r}")
        if self.family == LAPLACE and self.delta != 0:
            raise ValueError("laplace mechanism requires delta = 0")
        if not 0 <= self.delta < 1:
            raise ValueError("delta must lie in [0, 1)")
        if self.clip_bound < 1:
            raise ValueError("clip bound must be >= 1")
        if self.noise_scale < 0:
            raise ValueError("noise scale must be non-negative")

    @classmethod
    def laplace(cls, epsilon: float, clip_bound: int = 1) -> "MechanismSpec":
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        return cls(LAPLACE, epsilon, 0.0, clip_bound, clip_bound / epsilon)

    @classmethod
    def gaussian(
        cls, epsilon: float, delta: float, clip_bound: int = 1
    ) -> "MechanismSpec":
        sigma = gaussian_sigma(epsilon, delta, clip_bound)
        return cls(GAUSSIAN, epsilon, delta, clip_bound, sigma)

    @classmethod
    def noiseless(cls, clip_bound: int = 1) -> "MechanismSpec":
        """Degenerate mechanism with zero noise (epsilon = inf)."""
        return cls(LAPLACE, math.inf, 0.0, clip_bound, 0.0)

    def noise_variance(self) -> float:
        if self.family == LAPLACE:
            return 2.0 * self.noise_scale**2
        return self.noise_scale**2

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "clip_bound": self.clip_bound,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MechanismSpec":
        known = {"family", "epsilon", "delta", "clip_bound", "noise_scale"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown mechanism fields: {sorted(unknown)}")
        family = obj.get("family")
        if "noise_scale" in obj:
            return cls(
                family,
                float(obj.get("epsilon", math.inf)),
                float(obj.get("delta", 0.0)),
                int(obj.get("clip_bound", 1)),
                float(obj["noise_scale"]),
            )
        if family == LAPLACE:
            return cls.laplace(float(obj["epsilon"]), int(obj.get("clip_bound", 1)))
        if family == GAUSSIAN:
            return cls.gaussian(
                float(obj["epsilon"]), float(obj["delta"]), int(obj.get("clip_bound", 1))
            )
        raise ValueError(f"unknown mechanism family {family!r}")


@dataclass(frozen=True)
class PrivacyRegionPoint:
    """One (epsilon_total, delta_total) guarantee from k-fold composition."""

    epsilon_total: float
    delta_total: float

    def __post_init__(self):
        if not 0 <= self.delta_total <= 1:
            raise ValueError("delta_total must lie in [0, 1]")


def sensitivity(C: int, p: int) -> float:
    """l_p sensitivity of one per-cell observation after clipping at C."""
    if C < 1:
        raise ValueError("clip bound must be >= 1")
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    # One individual changes each positive cell by at most 1 and at most C
    # cells per epoch, and each released observation is a single cell query.
    return float(C)


def perturb(agg: AggregateMatrix, mech: MechanismSpec, seed=None) -> NoisyAggregate:
    """Add i.i.d. mechanism noise to every cell of the aggregate."""
    rng = as_rng(seed)
    cells = agg.cells.astype(float)
    if mech.noise_scale > 0:
        if mech.family == LAPLACE:
            cells = cells + rng.laplace(0.0, mech.noise_scale, size=cells.shape)
        else:
            cells = cells + rng.normal(0.0, mech.noise_scale, size=cells.shape)
    return NoisyAggregate(cells, mech)


def mechanism_cdf(mech: MechanismSpec, shift: float, x) -> float:
    """CDF of the mechanism's noise distribution centered at ``shift``."""
    x = np.asarray(x, dtype=float)
    if mech.noise_scale == 0:
        out = np.where(x >= shift, 1.0, 0.0)
    elif mech.family == LAPLACE:
        u = (x - shift) / mech.noise_scale
        out = np.where(
            u < 0,
            0.5 * np.exp(np.minimum(u, 0.0)),
            1.0 - 0.5 * np.exp(-np.maximum(u, 0.0)),
        )
    else:
        out = norm.cdf(x, loc=shift, scale=mech.noise_scale)
    return float(out) if out.ndim == 0 else out


def _log1pexp(epsilon: float) -> float:
    """log(1 + e^epsilon), stable for large epsilon."""
    return float(np.logaddexp(0.0, epsilon))


def _delta_i(epsilon: float, k: int, i: int) -> float:
    """Region offset delta_i of k-fold composition, evaluated in log space."""
    if i == 0 or epsilon == 0.0:
        return 0.0
    ls = np.arange(i)
    log_binom = gammaln(k + 1) - gammaln(ls + 1) - gammaln(k - ls + 1)
    # e^{(k-l)eps} - e^{(k-2i+l)eps} = e^{(k-2i+l)eps} * expm1(2(i-l)eps)
    log_terms = log_binom + (k - 2 * i + ls) * epsilon + np.log(
        np.expm1(2.0 * (i - ls) * epsilon)
    )
    log_delta = logsumexp(log_terms) - k * _log1pexp(epsilon)
    return float(min(1.0, math.exp(min(0.0, log_delta))))


def composition_deltas(epsilon: float, delta: float, k: int) -> list[PrivacyRegionPoint]:
    """Optimal-composition guarantees for k-fold use of an (eps, delta) mechanism.

    Returns one point per i in {0, ..., floor(k/2)}: epsilon_i = (k - 2i) eps
    and delta_i_total = 1 - (1 - delta)^k (1 - delta_i).
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    if k < 1:
        raise ValueError("k must be >= 1")
    points = []
    for i in range(k // 2 + 1):
        eps_i = (k - 2 * i) * epsilon
        delta_total = 1.0 - (1.0 - delta) ** k * (1.0 - _delta_i(epsilon, k, i))
        points.append(PrivacyRegionPoint(eps_i, min(1.0, max(0.0, delta_total))))
    return points


def tradeoff_min_error(point: PrivacyRegionPoint) -> tuple[float, float]:
    """The (alpha, beta) minimizing alpha + beta on one DP testing region.

    The region is alpha + e^eps beta >= 1 - delta and e^eps alpha + beta
    >= 1 - delta with alpha, beta in [0, 1]; the minimum sits at the
    symmetric intersection of the two constraints.
    """
    eps, delta = point.epsilon_total, point.delta_total
    if delta >= 1.0:
        return 0.0, 0.0
    # (1 - delta) / (1 + e^eps) computed in log space for large eps
    val = math.exp(math.log(1.0 - delta) - _log1pexp(eps))
    val = min(1.0, max(0.0, val))
    return val, val


def expected_attack_accuracy_from_budget(epsilon: float, delta: float, k: int) -> float:
    """Tight upper bound on balanced attack accuracy after k observations.

    Every composition point is a simultaneously valid DP guarantee, so the
    attainable error sum is bounded below by the largest per-point minimum
    and the accuracy bound is the smallest per-point bound.
    """
    best = 0.0
    for point in composition_deltas(epsilon, delta, k):
        alpha, beta = tradeoff_min_error(point)
        best = max(best, (alpha + beta) / 2.0)
    return 1.0 - best


def expected_attack_accuracy(mech: MechanismSpec, k: int) -> float:
    """Expected-accuracy bound for k observations released through ``mech``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if mech.noise_scale == 0:
        return 1.0
    return expected_attack_accuracy_from_budget(mech.epsilon, mech.delta, k)
