"""One-threshold and two-threshold metric attacks.

Shadow-aggregate generation, score functions, threshold estimation
(max-accuracy and fixed-error variants), analytic score-distribution
models, and the reference-attack baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy.stats import norm

from .data import (
    AggregateMatrix,
    NoisyAggregate,
    TraceDataset,
    TraceMatrix,
    as_rng,
    positive_cells,
)
from .mechanisms import LAPLACE, MechanismSpec, mechanism_cdf


# ---------------------------------------------------------------------------
# shadow aggregates


@dataclass(frozen=True)
class ShadowSet:
    """Labeled member/non-member shadow aggregates for one target trace.

    The first floor(m/2) aggregates carry the target and are labeled 1.
    """

    aggregates: tuple[NoisyAggregate, ...]
    labels: np.ndarray
    target: TraceMatrix

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        if len(labels) != len(self.aggregates):
            raise ValueError("labels and aggregates length mismatch")
        if abs(int(labels.sum()) - (len(labels) - int(labels.sum()))) > 1:
            raise ValueError("labels must be balanced within one")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "aggregates", tuple(self.aggregates))

    def __len__(self) -> int:
        return len(self.aggregates)

    def members(self) -> tuple[NoisyAggregate, ...]:
        return tuple(a for a, y in zip(self.aggregates, self.labels) if y == 1)

    def nonmembers(self) -> tuple[NoisyAggregate, ...]:
        return tuple(a for a, y in zip(self.aggregates, self.labels) if y == 0)

    def cell_matrix(self) -> np.ndarray:
        """All aggregates stacked as one (m, L, E) array."""
        return np.stack([a.cells for a in self.aggregates])


def generate_shadow_set(
    aux: TraceDataset | None,
    n: int,
    theta: float,
    m: int,
    z: TraceMatrix,
    mech: MechanismSpec,
    seed=None,
) -> ShadowSet:
    """Build m shadow aggregates mimicking a release of n traces.

    Each aggregate sums n(1 - theta) traces sampled without replacement
    from a fresh shuffle of the auxiliary data; the first floor(m/2) get
    the target added, then all are perturbed with the mechanism.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    if m < 2:
        raise ValueError("need at least 2 shadow aggregates")
    n_sample = int(round(n * (1.0 - theta)))
    if n_sample > 0:
        if aux is None:
            raise ValueError("auxiliary dataset required when n(1 - theta) > 0")
        if n_sample > len(aux):
            raise ValueError(
                f"cannot sample {n_sample} traces from {len(aux)} auxiliary traces"
            )
        if aux.shape != z.shape:
            raise ValueError("auxiliary traces and target shape mismatch")
        stack = aux.stacked()
    rng = as_rng(seed)
    base = np.zeros((m, *z.shape))
    if n_sample > 0:
        for i in range(m):
            idx = rng.choice(len(aux), size=n_sample, replace=False)
            base[i] = stack[idx].sum(axis=0)
    n_member = m // 2
    base[:n_member] += z.cells
    if mech.noise_scale > 0:
        if mech.family == LAPLACE:
            base += rng.laplace(0.0, mech.noise_scale, size=base.shape)
        else:
            base += rng.normal(0.0, mech.noise_scale, size=base.shape)
    labels = np.zeros(m, dtype=np.int8)
    labels[:n_member] = 1
    aggs = tuple(NoisyAggregate(c, mech) for c in base)
    return ShadowSet(aggs, labels, z)


def shadow_features(shadow: ShadowSet, background: AggregateMatrix | None = None):
    """Positive-observation feature matrix and labels for classifier training."""
    cells = shadow.cell_matrix()
    if background is not None:
        cells = cells - background.cells
    mask = shadow.target.cells.astype(bool).reshape(-1)
    features = cells.reshape(len(shadow), -1)[:, mask]
    return features, np.asarray(shadow.labels, dtype=float)


# ---------------------------------------------------------------------------
# score functions and decisions


def _residual(agg: NoisyAggregate, background: AggregateMatrix, z: TraceMatrix):
    if agg.shape != background.shape or agg.shape != z.shape:
        raise ValueError(
            f"shape mismatch: aggregate {agg.shape}, background {background.shape}, "
            f"trace {z.shape}"
        )
    return agg.cells - background.cells


def zero_background(shape: tuple[int, int]) -> AggregateMatrix:
    return AggregateMatrix(np.zeros(shape, dtype=np.int64))


def score_one(agg: NoisyAggregate, background: AggregateMatrix, z: TraceMatrix) -> float:
    """Sum of the residual aggregate over the target's positive cells."""
    residual = _residual(agg, background, z)
    return float(residual[z.cells.astype(bool)].sum())


@dataclass(frozen=True)
class PerCellThresholds:
    """One decision threshold per positive-observation cell, keyed by (site, epoch)."""

    thresholds: Mapping[tuple[int, int], float]

    def __post_init__(self):
        object.__setattr__(
            self,
            "thresholds",
            {(int(l), int(e)): float(t) for (l, e), t in dict(self.thresholds).items()},
        )

    def __len__(self) -> int:
        return len(self.thresholds)

    def values_for(self, z: TraceMatrix) -> np.ndarray:
        """Thresholds in row-major positive-cell order; raises on missing cells."""
        out = []
        for cell in positive_cells(z):
            if cell not in self.thresholds:
                raise ValueError(f"missing threshold for positive cell {cell}")
            out.append(self.thresholds[cell])
        return np.array(out)

    def to_json(self) -> list:
        return [[l, e, t] for (l, e), t in sorted(self.thresholds.items())]

    @classmethod
    def from_json(cls, obj) -> "PerCellThresholds":
        return cls({(int(l), int(e)): float(t) for l, e, t in obj})


def score_two(
    agg: NoisyAggregate,
    background: AggregateMatrix,
    z: TraceMatrix,
    thresholds: PerCellThresholds,
) -> int:
    """Count of positive cells whose residual reaches its per-cell threshold."""
    residual = _residual(agg, background, z)
    count = 0
    for l, e in positive_cells(z):
        if (l, e) not in thresholds.thresholds:
            raise ValueError(f"missing threshold for positive cell ({l}, {e})")
        if residual[l, e] >= thresholds.thresholds[(l, e)]:
            count += 1
    return count


def decide(score: float, threshold: float) -> int:
    """Membership decision: non-member below the threshold, member at or above."""
    return 0 if score < threshold else 1


@dataclass(frozen=True)
class AttackOutcome:
    score: float
    threshold: float
    decision: int

    def __post_init__(self):
        if self.decision != decide(self.score, self.threshold):
            raise ValueError("decision inconsistent with score and threshold")


Scorer = Callable[[NoisyAggregate, AggregateMatrix, TraceMatrix], float]


# ---------------------------------------------------------------------------
# threshold estimation


def _class_scores(shadow: ShadowSet, scorer: Scorer):
    background = zero_background(shadow.target.shape)
    member = np.array([scorer(a, background, shadow.target) for a in shadow.members()])
    nonmember = np.array(
        [scorer(a, background, shadow.target) for a in shadow.nonmembers()]
    )
    if len(member) == 0 or len(nonmember) == 0:
        raise ValueError("shadow set must contain both classes")
    return member, nonmember


def estimate_threshold_max_acc(
    shadow: ShadowSet, scorer: Scorer = score_one
) -> float:
    """Max-accuracy threshold: midpoint of mean member and non-member scores."""
    member, nonmember = _class_scores(shadow, scorer)
    return 0.5 * (member.mean() + nonmember.mean())


def estimate_threshold_fixed_error(
    shadow: ShadowSet, scorer: Scorer, alpha: float
) -> float:
    """Threshold at false-positive rate alpha under a fitted Gaussian pair."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    member, nonmember = _class_scores(shadow, scorer)
    pooled_std = 0.5 * (member.std(ddof=0) + nonmember.std(ddof=0))
    if pooled_std == 0:
        raise ValueError("degenerate shadow scores: zero variance")
    return float(nonmember.mean() + pooled_std * norm.ppf(1.0 - alpha))


def per_cell_thresholds_max_acc(shadow: ShadowSet) -> PerCellThresholds:
    """Per positive cell, the midpoint of member and non-member cell means."""
    members, nonmembers = shadow.members(), shadow.nonmembers()
    if not members or not nonmembers:
        raise ValueError("shadow set must contain both classes")
    mem = np.stack([a.cells for a in members]).mean(axis=0)
    non = np.stack([a.cells for a in nonmembers]).mean(axis=0)
    mid = 0.5 * (mem + non)
    return PerCellThresholds(
        {cell: mid[cell] for cell in positive_cells(shadow.target)}
    )


def smoothed_cdf(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF from a histogram, linear between bin midpoints.

    Bin width follows the Freedman-Diaconis rule (falls back to Scott's
    rule when the IQR is zero).  Raises on single-valued samples.
    """
    samples = np.asarray(samples, dtype=float)
    lo, hi = samples.min(), samples.max()
    if lo == hi:
        raise ValueError("degenerate single-valued histogram")
    q75, q25 = np.percentile(samples, [75, 25])
    width = 2.0 * (q75 - q25) / len(samples) ** (1.0 / 3.0)
    if width <= 0:
        width = 3.49 * samples.std(ddof=0) / len(samples) ** (1.0 / 3.0)
    n_bins = max(1, int(np.ceil((hi - lo) / width)))
    counts, edges = np.histogram(samples, bins=n_bins)
    midpoints = 0.5 * (edges[:-1] + edges[1:])
    cdf = np.cumsum(counts) / len(samples)
    xs = np.concatenate(([edges[0]], midpoints, [edges[-1]]))
    ys = np.concatenate(([0.0], cdf - 0.5 * counts / len(samples), [1.0]))
    ys = np.maximum.accumulate(ys)
    return xs, ys


def _inverse_cdf(xs: np.ndarray, ys: np.ndarray, q: float) -> float:
    return float(np.interp(q, ys, xs))


def per_cell_thresholds_fixed_error(
    shadow: ShadowSet, alphas: Mapping[tuple[int, int], float] | float
) -> PerCellThresholds:
    """Per positive cell, the 1 - alpha quantile of the smoothed non-member CDF."""
    nonmembers = shadow.nonmembers()
    if not nonmembers:
        raise ValueError("shadow set must contain non-member aggregates")
    cells = np.stack([a.cells for a in nonmembers])
    thresholds = {}
    for cell in positive_cells(shadow.target):
        alpha = alphas if np.isscalar(alphas) else alphas[cell]
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha for cell {cell} must lie in (0, 1)")
        samples = cells[:, cell[0], cell[1]]
        try:
            xs, ys = smoothed_cdf(samples)
        except ValueError:
            raise ValueError(
                f"degenerate single-valued histogram at cell {cell}"
            ) from None
        thresholds[cell] = _inverse_cdf(xs, ys, 1.0 - alpha)
    return PerCellThresholds(thresholds)


# ---------------------------------------------------------------------------
# analytic score models


@dataclass(frozen=True)
class GaussianPair:
    """Gaussian member/non-member score distributions."""

    nonmember_mean: float
    member_mean: float
    nonmember_std: float
    member_std: float

    kind = "gaussian_pair"

    def __post_init__(self):
        if self.nonmember_std < 0 or self.member_std < 0:
            raise ValueError("standard deviations must be non-negative")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "nonmember": {"mean": self.nonmember_mean, "std": self.nonmember_std},
            "member": {"mean": self.member_mean, "std": self.member_std},
        }


@dataclass(frozen=True)
class BinomialPair:
    """(Poisson-)binomial member/non-member score distributions.

    Per-trial success probabilities; a constant vector is an ordinary
    binomial distribution.
    """

    nonmember_probs: np.ndarray
    member_probs: np.ndarray

    kind = "binomial_pair"

    def __post_init__(self):
        non = np.atleast_1d(np.asarray(self.nonmember_probs, dtype=float))
        mem = np.atleast_1d(np.asarray(self.member_probs, dtype=float))
        if non.shape != mem.shape:
            raise ValueError("probability vectors must share a length")
        for p in (non, mem):
            if ((p < 0) | (p > 1)).any():
                raise ValueError("probabilities must lie in [0, 1]")
            p.setflags(write=False)
        object.__setattr__(self, "nonmember_probs", non)
        object.__setattr__(self, "member_probs", mem)

    @property
    def n(self) -> int:
        return len(self.member_probs)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "nonmember_probs": self.nonmember_probs.tolist(),
            "member_probs": self.member_probs.tolist(),
        }


@dataclass(frozen=True)
class EmpiricalPair:
    """Smoothed empirical CDF tables for member and non-member scores."""

    nonmember_x: np.ndarray
    nonmember_cdf: np.ndarray
    member_x: np.ndarray
    member_cdf: np.ndarray

    kind = "empirical_pair"

    def __post_init__(self):
        for name in ("nonmember_x", "nonmember_cdf", "member_x", "member_cdf"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for ys in (self.nonmember_cdf, self.member_cdf):
            if (np.diff(ys) < 0).any() or ys.min() < 0 or ys.max() > 1:
                raise ValueError("CDF tables must be monotone within [0, 1]")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "nonmember": {"x": self.nonmember_x.tolist(), "cdf": self.nonmember_cdf.tolist()},
            "member": {"x": self.member_x.tolist(), "cdf": self.member_cdf.tolist()},
        }


ScoreModel = GaussianPair | BinomialPair | EmpiricalPair


def empirical_score_model(shadow: ShadowSet, scorer: Scorer) -> EmpiricalPair:
    """Fit smoothed member/non-member score CDFs from shadow aggregates."""
    member, nonmember = _class_scores(shadow, scorer)
    nx, ny = smoothed_cdf(nonmember)
    mx, my = smoothed_cdf(member)
    return EmpiricalPair(nx, ny, mx, my)


def analytic_one_threshold_model(
    cell_means: np.ndarray,
    cell_variances: np.ndarray,
    z: TraceMatrix,
    mech: MechanismSpec,
) -> GaussianPair:
    """CLT model of the one-threshold score over the target's positive cells.

    ``cell_means`` / ``cell_variances`` describe the clean residual
    aggregate per cell (all zeros for an informed attacker).
    """
    means = np.broadcast_to(np.asarray(cell_means, dtype=float), z.shape)
    variances = np.broadcast_to(np.asarray(cell_variances, dtype=float), z.shape)
    if (variances < 0).any():
        raise ValueError("cell variances must be non-negative")
    mask = z.cells.astype(bool)
    n_obs = int(mask.sum())
    mu0 = float(means[mask].sum())
    mu1 = mu0 + n_obs * mech.clip_bound
    var = float(variances[mask].sum()) + n_obs * mech.noise_variance()
    sigma = float(np.sqrt(var))
    return GaussianPair(mu0, mu1, sigma, sigma)


def informed_one_threshold_model(n_obs: int, mech: MechanismSpec) -> GaussianPair:
    """One-threshold CLT model when the attacker knows all non-target traces."""
    sigma = float(np.sqrt(n_obs * mech.noise_variance()))
    return GaussianPair(0.0, float(n_obs * mech.clip_bound), sigma, sigma)


def per_cell_error_rates(
    mech: MechanismSpec, threshold_offset: float | None = None
) -> tuple[float, float]:
    """Per-observation (alpha', beta') when thresholding a single cell.

    The non-member cell is noise around 0, the member cell noise around C;
    the threshold defaults to C/2.
    """
    t = mech.clip_bound / 2.0 if threshold_offset is None else threshold_offset
    alpha_prime = 1.0 - mechanism_cdf(mech, 0.0, t)
    beta_prime = mechanism_cdf(mech, float(mech.clip_bound), t)
    return float(alpha_prime), float(beta_prime)


def analytic_two_threshold_model(
    n_obs: int, alpha_prime, beta_prime
) -> BinomialPair:
    """Binomial model of the two-threshold score: B(n, 1 - beta') vs B(n, alpha').

    Scalar rates give an ordinary binomial pair; per-cell rate vectors give
    the exact Poisson-binomial pair.
    """
    alpha_prime = np.asarray(alpha_prime, dtype=float)
    beta_prime = np.asarray(beta_prime, dtype=float)
    if alpha_prime.ndim == 0:
        alpha_prime = np.full(n_obs, float(alpha_prime))
    if beta_prime.ndim == 0:
        beta_prime = np.full(n_obs, float(beta_prime))
    if len(alpha_prime) != n_obs or len(beta_prime) != n_obs:
        raise ValueError("per-cell rates must have length n_obs")
    return BinomialPair(alpha_prime, 1.0 - beta_prime)


@dataclass(frozen=True)
class GaussianApprox:
    """Normal approximation of a binomial count, with a small-sample flag."""

    mean: float
    std: float
    small_sample: bool


def clt_binomial_approx(n: int, p: float) -> GaussianApprox:
    """Gaussian (np, sqrt(np(1-p))) approximation of Binomial(n, p)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return GaussianApprox(n * p, float(np.sqrt(n * p * (1.0 - p))), n < 5)


def poisson_binomial_pmf(probs: np.ndarray) -> np.ndarray:
    """Exact pmf of a sum of independent Bernoulli(p_i) by convolution."""
    pmf = np.array([1.0])
    for p in np.asarray(probs, dtype=float):
        nxt = np.zeros(len(pmf) + 1)
        nxt[:-1] = pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    return pmf


def _gaussian_cdf(x, mean, std):
    if std == 0:
        return np.where(np.asarray(x, dtype=float) >= mean, 1.0, 0.0)
    return norm.cdf(x, loc=mean, scale=std)


def model_accuracy(model: ScoreModel) -> tuple[float, float]:
    """Best balanced-accuracy decision threshold and its accuracy.

    Gaussian pairs use the closed-form midpoint; binomial pairs scan every
    integer threshold with exact tail sums; empirical pairs scan the CDF
    support.
    """
    if isinstance(model, GaussianPair):
        t = 0.5 * (model.nonmember_mean + model.member_mean)
        acc = 0.5 * (1.0 - _gaussian_cdf(t, model.member_mean, model.member_std)) + (
            0.5 * _gaussian_cdf(t, model.nonmember_mean, model.nonmember_std)
        )
        if model.member_mean == model.nonmember_mean and (
            model.member_std == model.nonmember_std
        ):
            acc = 0.5
        return float(t), float(acc)
    if isinstance(model, BinomialPair):
        cdf0 = np.cumsum(poisson_binomial_pmf(model.nonmember_probs))
        cdf1 = np.cumsum(poisson_binomial_pmf(model.member_probs))
        best_t, best_acc = 0.0, 0.5
        for t in range(model.n + 2):
            # decision: member iff score >= t
            p_below0 = cdf0[t - 1] if t >= 1 else 0.0
            p_below1 = cdf1[t - 1] if t >= 1 else 0.0
            acc = 0.5 * (1.0 - p_below1) + 0.5 * p_below0
            if acc > best_acc:
                best_t, best_acc = float(t), float(acc)
        return best_t, best_acc
    if isinstance(model, EmpiricalPair):
        candidates = np.union1d(model.nonmember_x, model.member_x)
        f0 = np.interp(candidates, model.nonmember_x, model.nonmember_cdf, left=0.0, right=1.0)
        f1 = np.interp(candidates, model.member_x, model.member_cdf, left=0.0, right=1.0)
        acc = 0.5 * (1.0 - f1) + 0.5 * f0
        i = int(np.argmax(acc))
        if acc[i] <= 0.5:
            return float(candidates[i]), 0.5
        return float(candidates[i]), float(acc[i])
    raise TypeError(f"unknown score model {type(model).__name__}")


# ---------------------------------------------------------------------------
# reference-attack baseline


def reference_attack_score(
    agg: NoisyAggregate,
    background: AggregateMatrix,
    z: TraceMatrix,
    references: TraceDataset,
) -> float:
    """Target-vs-residual similarity minus the mean reference similarity."""
    if len(references) == 0:
        raise ValueError("references must be non-empty")
    if references.shape != z.shape:
        raise ValueError("references and target shape mismatch")
    residual = _residual(agg, background, z).reshape(-1)
    target_sim = float(z.cells.reshape(-1) @ residual)
    ref_stack = references.stacked().reshape(len(references), -1)
    ref_sim = float((ref_stack @ residual).mean())
    return target_sim - ref_sim
