"""Membership-inference game, metrics, and experiment sweeps.

Runs the challenger/adversary game over many trials, computes
accuracy/AUC/ROC, and produces the accuracy-vs-observations and
shadow-count sweep tables plus the expected-accuracy gap report.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import attacks
from .attacks import (
    PerCellThresholds,
    decide,
    estimate_threshold_max_acc,
    generate_shadow_set,
    per_cell_thresholds_max_acc,
    reference_attack_score,
    score_one,
    score_two,
    shadow_features,
    zero_background,
)
from .data import (
    AggregateMatrix,
    NoisyAggregate,
    TraceDataset,
    TraceMatrix,
    aggregate,
)
from .mechanisms import LAPLACE, MechanismSpec, expected_attack_accuracy
from .mlp import TrainConfig, init_model, mlp_forward, mlp_train

INFORMED = "informed"
AUXILIARY = "auxiliary"
ATTACKS = ("one_threshold", "two_threshold", "meta_classifier", "reference")


@dataclass(frozen=True)
class GameConfig:
    """Everything needed to run one membership-inference experiment."""

    attacker: str
    mech: MechanismSpec
    n_traces: int
    trials: int
    attack: str
    shadow_count: int
    n_obs_target: int | str = "natural"
    target_seed: int = 0
    master_seed: int = 0
    n_references: int = 16
    train: TrainConfig = field(default_factory=TrainConfig)
    threads: int = 1

    def __post_init__(self):
        if self.attacker not in (INFORMED, AUXILIARY):
            raise ValueError(f"unknown attacker kind {self.attacker!r}")
        if self.attack not in ATTACKS:
            raise ValueError(f"unknown attack {self.attack!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.shadow_count < 2:
            raise ValueError("shadow_count must be >= 2")
        if self.n_obs_target != "natural" and int(self.n_obs_target) < 0:
            raise ValueError("n_obs_target must be 'natural' or a count")


@dataclass(frozen=True)
class TrialRecord:
    true_bit: int
    score: float
    decision: int
    success: bool

    def __post_init__(self):
        if self.success != (self.decision == self.true_bit):
            raise ValueError("success flag inconsistent with decision")


def accuracy_from_errors(alpha: float, beta: float) -> float:
    """Balanced success probability (1 - alpha)/2 + (1 - beta)/2."""
    if not (0 <= alpha <= 1 and 0 <= beta <= 1):
        raise ValueError("error rates must lie in [0, 1]")
    return (1.0 - alpha) / 2.0 + (1.0 - beta) / 2.0


def empirical_error_rates(records: list[TrialRecord]) -> tuple[float, float]:
    """(alpha, beta) under the balanced-prior convention: misses per half run.

    Normalizing by trials/2 (not per-class counts) makes
    ``accuracy_from_errors(alpha, beta)`` reproduce the success rate exactly.
    """
    n = len(records)
    misses = sum(1 for r in records if r.true_bit == 1 and r.decision == 0)
    false_alarms = sum(1 for r in records if r.true_bit == 0 and r.decision == 1)
    return 2.0 * misses / n, 2.0 * false_alarms / n


def success_rate(records: list[TrialRecord]) -> float:
    return sum(r.success for r in records) / len(records)


# ---------------------------------------------------------------------------
# ROC / AUC


@dataclass(frozen=True)
class RocCurve:
    """Threshold-sweep ROC points (fpr, tpr) and the trapezoid AUC."""

    points: tuple[tuple[float, float], ...]
    auc: float

    def __post_init__(self):
        pts = tuple((float(f), float(t)) for f, t in self.points)
        if pts[0] != (0.0, 0.0) or pts[-1] != (1.0, 1.0):
            raise ValueError("ROC must run from (0, 0) to (1, 1)")
        arr = np.array(pts)
        if (np.diff(arr, axis=0) < 0).any():
            raise ValueError("ROC points must be monotone")
        if not 0.0 <= self.auc <= 1.0:
            raise ValueError("AUC must lie in [0, 1]")
        object.__setattr__(self, "points", pts)


def roc_from_scores(member_scores, nonmember_scores) -> RocCurve:
    """ROC over every distinct score threshold; AUC by the trapezoid rule."""
    member = np.asarray(member_scores, dtype=float)
    nonmember = np.asarray(nonmember_scores, dtype=float)
    if len(member) == 0 or len(nonmember) == 0:
        raise ValueError("score lists must be non-empty")
    thresholds = np.unique(np.concatenate([member, nonmember]))[::-1]
    m_sorted = np.sort(member)
    n_sorted = np.sort(nonmember)
    tpr = 1.0 - np.searchsorted(m_sorted, thresholds, side="left") / len(member)
    fpr = 1.0 - np.searchsorted(n_sorted, thresholds, side="left") / len(nonmember)
    fpr = np.concatenate([[0.0], fpr, [1.0]])
    tpr = np.concatenate([[0.0], tpr, [1.0]])
    trapezoid = getattr(np, "trapezoid", np.trapz)
    auc = float(trapezoid(tpr, fpr))
    points = tuple(zip(fpr.tolist(), tpr.tolist()))
    return RocCurve(points, min(1.0, max(0.0, auc)))


# ---------------------------------------------------------------------------
# the game


def _draw_noise(rng: np.random.Generator, mech: MechanismSpec, shape):
    if mech.noise_scale == 0:
        return np.zeros(shape)
    if mech.family == LAPLACE:
        return rng.laplace(0.0, mech.noise_scale, size=shape)
    return rng.normal(0.0, mech.noise_scale, size=shape)


def synthetic_target(rates: np.ndarray, n_obs: int) -> TraceMatrix:
    """Target trace with exactly n_obs ones at the highest-rate cells."""
    rates = np.asarray(rates, dtype=float)
    if n_obs > rates.size:
        raise ValueError("n_obs exceeds the number of grid cells")
    order = np.argsort(-rates.reshape(-1), kind="stable")
    cells = np.zeros(rates.size, dtype=np.uint8)
    cells[order[:n_obs]] = 1
    return TraceMatrix(cells.reshape(rates.shape))


@dataclass(frozen=True)
class _Calibrated:
    """Attack state after shadow-set calibration."""

    kind: str
    threshold: float
    per_cell: PerCellThresholds | None = None
    model: object = None
    references: TraceDataset | None = None


def _calibrate(cfg: GameConfig, z: TraceMatrix, aux: TraceDataset | None, seed):
    theta = 1.0 if cfg.attacker == INFORMED else 0.0
    shadow = generate_shadow_set(
        aux, cfg.n_traces, theta, cfg.shadow_count, z, cfg.mech, seed
    )
    if cfg.attack == "one_threshold":
        return _Calibrated("one_threshold", estimate_threshold_max_acc(shadow, score_one))
    if cfg.attack == "two_threshold":
        per_cell = per_cell_thresholds_max_acc(shadow)
        scorer = lambda a, bg, t: score_two(a, bg, t, per_cell)
        return _Calibrated(
            "two_threshold", estimate_threshold_max_acc(shadow, scorer), per_cell
        )
    if cfg.attack == "meta_classifier":
        features, labels = shadow_features(shadow)
        model = init_model(features.shape[1], seed=cfg.train.seed)
        model = mlp_train(model, features, labels, cfg.train)
        return _Calibrated("meta_classifier", 0.5, model=model)
    if cfg.attack == "reference":
        if aux is None or len(aux) < cfg.n_references:
            raise ValueError("reference attack needs auxiliary traces")
        references = TraceDataset(aux.traces[: cfg.n_references])
        scorer = lambda a, bg, t: reference_attack_score(a, bg, t, references)
        return _Calibrated(
            "reference",
            estimate_threshold_max_acc(shadow, scorer),
            references=references,
        )
    raise ValueError(cfg.attack)


def _records_from_scores(bits, scores, threshold) -> list[TrialRecord]:
    out = []
    for b, s in zip(bits, scores):
        d = decide(float(s), float(threshold))
        out.append(TrialRecord(int(b), float(s), d, d == int(b)))
    return out


_CHUNK = 20_000


def _run_informed(cfg: GameConfig, z: TraceMatrix, cal: _Calibrated, rng):
    """Vectorized informed-attacker trials.

    The informed attacker subtracts the exact background aggregate, so the
    residual is DP noise plus the coin times the target trace; the
    non-target dataset cancels identically and is not simulated.
    """
    mask = z.cells.astype(bool)
    n_obs = int(mask.sum())
    bits_all, scores_all = [], []
    remaining = cfg.trials
    while remaining > 0:
        chunk = min(remaining, _CHUNK)
        bits = rng.integers(0, 2, size=chunk)
        if cal.kind == "reference":
            noise = _draw_noise(rng, cfg.mech, (chunk, *z.shape))
            residual = noise + bits[:, None, None] * z.cells
            flat = residual.reshape(chunk, -1)
            target_sim = flat @ z.cells.reshape(-1).astype(float)
            refs = cal.references.stacked().reshape(len(cal.references), -1)
            ref_sim = (flat @ refs.T.astype(float)).mean(axis=1)
            scores = target_sim - ref_sim
        else:
            noise = _draw_noise(rng, cfg.mech, (chunk, n_obs))
            residual = noise + bits[:, None]  # z is 1 at every positive cell
            if cal.kind == "one_threshold":
                scores = residual.sum(axis=1)
            elif cal.kind == "two_threshold":
                t = cal.per_cell.values_for(z)
                scores = (residual >= t).sum(axis=1)
            else:  # meta_classifier
                scores = mlp_forward(cal.model, residual)
        bits_all.append(bits)
        scores_all.append(np.asarray(scores, dtype=float))
        remaining -= chunk
    return _records_from_scores(
        np.concatenate(bits_all), np.concatenate(scores_all), cal.threshold
    )


def _score_auxiliary(cfg, cal, z, noisy: NoisyAggregate) -> float:
    background = zero_background(z.shape)
    if cal.kind == "one_threshold":
        return score_one(noisy, background, z)
    if cal.kind == "two_threshold":
        return float(score_two(noisy, background, z, cal.per_cell))
    if cal.kind == "meta_classifier":
        values = noisy.cells[z.cells.astype(bool)]
        return float(mlp_forward(cal.model, values))
    return reference_attack_score(noisy, background, z, cal.references)


def _run_auxiliary(cfg: GameConfig, z: TraceMatrix, cal, pool: TraceDataset, seeds):
    if cfg.n_traces > len(pool):
        raise ValueError(
            f"insufficient traces: need {cfg.n_traces}, pool has {len(pool)}"
        )
    stack = pool.stacked()

    def one_trial(seed_seq):
        rng = np.random.default_rng(seed_seq)
        idx = rng.choice(len(pool), size=cfg.n_traces, replace=False)
        cells = stack[idx].sum(axis=0).astype(float)
        bit = int(rng.integers(0, 2))
        if bit:
            cells = cells + z.cells
        noisy = NoisyAggregate(cells + _draw_noise(rng, cfg.mech, cells.shape), cfg.mech)
        score = _score_auxiliary(cfg, cal, z, noisy)
        d = decide(score, cal.threshold)
        return TrialRecord(bit, score, d, d == bit)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool_exec:
            return list(pool_exec.map(one_trial, seeds))
    return [one_trial(s) for s in seeds]


def prepare_game(cfg: GameConfig, data: TraceDataset):
    """Pick the target and carve the population into target/auxiliary pools."""
    target_rng = np.random.default_rng(cfg.target_seed)
    if cfg.n_obs_target == "natural":
        idx = int(target_rng.integers(len(data)))
        z = data.traces[idx]
        remaining = [t for i, t in enumerate(data.traces) if i != idx]
    else:
        z = synthetic_target(data.cell_rates(), int(cfg.n_obs_target))
        remaining = list(data.traces)
    if len(remaining) < 2:
        raise ValueError("insufficient traces after removing the target")
    perm = target_rng.permutation(len(remaining))
    half = len(remaining) // 2
    target_pool = TraceDataset(tuple(remaining[i] for i in perm[:half]))
    aux_pool = TraceDataset(tuple(remaining[i] for i in perm[half:]))
    return z, target_pool, aux_pool


def run_game(cfg: GameConfig, data: TraceDataset) -> list[TrialRecord]:
    """Play the membership game for cfg.trials independent challenges."""
    z, target_pool, aux_pool = prepare_game(cfg, data)
    root = np.random.SeedSequence(cfg.master_seed)
    shadow_seed, trial_seed = root.spawn(2)
    if z.n_positive() == 0:
        # no positive observations: every attack scores 0 and guesses member
        rng = np.random.default_rng(trial_seed)
        bits = rng.integers(0, 2, size=cfg.trials)
        return _records_from_scores(bits, np.zeros(cfg.trials), 0.0)
    aux = None if cfg.attacker == INFORMED else aux_pool
    if cfg.attacker == AUXILIARY or cfg.attack == "reference":
        aux = aux_pool
    cal = _calibrate(cfg, z, aux, np.random.default_rng(shadow_seed))
    if cfg.attacker == INFORMED:
        return _run_informed(cfg, z, cal, np.random.default_rng(trial_seed))
    return _run_auxiliary(cfg, z, cal, target_pool, trial_seed.spawn(cfg.trials))


# ---------------------------------------------------------------------------
# summaries and sweeps

RESULT_COLUMNS = (
    "k",
    "attack",
    "attacker",
    "mechanism",
    "accuracy",
    "ci_low",
    "ci_high",
    "auc",
)


def summarize(cfg: GameConfig, records: list[TrialRecord], k: int | None = None) -> dict:
    """One result row: accuracy with a 95% normal interval, plus AUC."""
    acc = success_rate(records)
    half_width = 1.96 * np.sqrt(acc * (1.0 - acc) / len(records))
    member = [r.score for r in records if r.true_bit == 1]
    nonmember = [r.score for r in records if r.true_bit == 0]
    auc = roc_from_scores(member, nonmember).auc if member and nonmember else float("nan")
    return {
        "k": k if k is not None else "",
        "attack": cfg.attack,
        "attacker": cfg.attacker,
        "mechanism": cfg.mech.family,
        "accuracy": acc,
        "ci_low": max(0.0, acc - half_width),
        "ci_high": min(1.0, acc + half_width),
        "auc": auc,
    }


def sweep_positive_observations(
    cfg: GameConfig, k_grid, data: TraceDataset
) -> list[dict]:
    """Accuracy/AUC per number of positive observations, one row per k."""
    rows = []
    for k in k_grid:
        sub = replace(cfg, n_obs_target=int(k))
        records = run_game(sub, data)
        rows.append(summarize(sub, records, k=int(k)))
    return rows


def sweep_shadow_count(cfg: GameConfig, m_grid, data: TraceDataset) -> list[dict]:
    """Accuracy/AUC per shadow-set size; the evaluation seed stays fixed."""
    rows = []
    for m in m_grid:
        sub = replace(cfg, shadow_count=int(m))
        records = run_game(sub, data)
        row = summarize(sub, records)
        row["k"] = int(m)  # the swept variable occupies the first column
        rows.append(row)
    return rows


def gap_report(cfg: GameConfig, k_grid, data: TraceDataset) -> list[dict]:
    """Expected-accuracy bound vs empirical accuracy, one row per k."""
    if cfg.attacker != INFORMED:
        raise ValueError("gap report is defined for the informed attacker")
    rows = []
    for k in k_grid:
        sub = replace(cfg, n_obs_target=int(k))
        records = run_game(sub, data)
        bound = expected_attack_accuracy(cfg.mech, int(k))
        acc = success_rate(records)
        rows.append(
            {
                "k": int(k),
                "attack": cfg.attack,
                "expected_bound": bound,
                "empirical_accuracy": acc,
                "gap": bound - acc,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# table output


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def rows_to_csv(rows: list[dict], path, columns=None) -> None:
    if not rows:
        raise ValueError("no rows to write")
    columns = list(columns or rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def rows_to_json(rows: list[dict], path) -> None:
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)


def roc_to_csv(roc: RocCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for fpr, tpr in roc.points:
            writer.writerow([_fmt(fpr), _fmt(tpr)])
