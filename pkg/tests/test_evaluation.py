import math

import numpy as np
import pytest

from locaudit.attacks import analytic_two_threshold_model, model_accuracy, per_cell_error_rates
from locaudit.data import TraceDataset, TraceMatrix, generate_synthetic_traces
from locaudit.evaluation import (
    GameConfig,
    RocCurve,
    TrialRecord,
    accuracy_from_errors,
    empirical_error_rates,
    gap_report,
    roc_from_scores,
    rows_to_csv,
    roc_to_csv,
    run_game,
    success_rate,
    summarize,
    sweep_positive_observations,
    sweep_shadow_count,
    synthetic_target,
)
from locaudit.mechanisms import MechanismSpec
from locaudit.mlp import TrainConfig


def small_data(seed=0, n=120, shape=(8, 20), rate=0.2):
    return generate_synthetic_traces(np.full(shape, rate), n, seed)


def informed_cfg(**kw):
    base = dict(
        attacker="informed",
        mech=MechanismSpec.laplace(0.5),
        n_traces=50,
        trials=2_000,
        attack="one_threshold",
        shadow_count=2_000,
        n_obs_target=30,
        target_seed=1,
        master_seed=2,
    )
    base.update(kw)
    return GameConfig(**base)


class TestAccuracyFromErrors:
    def test_values(self):
        assert accuracy_from_errors(0.0, 0.0) == 1.0
        assert accuracy_from_errors(0.5, 0.5) == 0.5
        assert accuracy_from_errors(0.2, 0.4) == pytest.approx(0.7)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            accuracy_from_errors(-0.1, 0.5)


class TestRoc:
    def test_perfect_separation(self):
        roc = roc_from_scores([5, 6, 7], [1, 2, 3])
        assert roc.auc == pytest.approx(1.0)

    def test_identical_distributions(self):
        rng = np.random.default_rng(1)
        roc = roc_from_scores(rng.normal(size=4000), rng.normal(size=4000))
        assert abs(roc.auc - 0.5) < 0.02

    def test_mann_whitney_oracle_with_ties(self):
        rng = np.random.default_rng(2)
        member = np.round(rng.normal(1.0, 1.0, 500), 1)  # rounding forces ties
        nonmember = np.round(rng.normal(0.0, 1.0, 700), 1)
        roc = roc_from_scores(member, nonmember)
        greater = (member[:, None] > nonmember[None, :]).sum()
        equal = (member[:, None] == nonmember[None, :]).sum()
        u_stat = (greater + 0.5 * equal) / (len(member) * len(nonmember))
        assert roc.auc == pytest.approx(u_stat, abs=1e-9)

    def test_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(3)
        roc = roc_from_scores(rng.normal(1, 1, 50), rng.normal(0, 1, 50))
        points = np.array(roc.points)
        assert tuple(points[0]) == (0.0, 0.0)
        assert tuple(points[-1]) == (1.0, 1.0)
        assert (np.diff(points, axis=0) >= 0).all()

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            roc_from_scores([], [1.0])

    def test_curve_validation(self):
        with pytest.raises(ValueError, match="monotone"):
            RocCurve(((0.0, 0.0), (0.5, 0.8), (0.4, 0.9), (1.0, 1.0)), 0.8)


def test_trial_record_consistency():
    TrialRecord(1, 2.0, 1, True)
    with pytest.raises(ValueError):
        TrialRecord(1, 2.0, 0, True)


def test_synthetic_target_places_k_ones_at_top_rates():
    rates = np.array([[0.9, 0.1], [0.5, 0.7]])
    z = synthetic_target(rates, 2)
    assert z.n_positive() == 2
    assert z.cells[0, 0] == 1 and z.cells[1, 1] == 1
    with pytest.raises(ValueError, match="exceeds"):
        synthetic_target(rates, 5)


class TestRunGame:
    def test_noiseless_informed_perfect(self):
        cfg = informed_cfg(mech=MechanismSpec.noiseless(), trials=500)
        records = run_game(cfg, small_data())
        assert success_rate(records) == 1.0

    def test_huge_noise_coin_flip(self):
        # b = 2000 approximates the epsilon -> 0 limit
        mech = MechanismSpec("laplace", 5e-4, 0.0, 1, 2000.0)
        cfg = informed_cfg(mech=mech, trials=10_000)
        records = run_game(cfg, small_data())
        assert abs(success_rate(records) - 0.5) < 0.01

    def test_two_threshold_matches_binomial_model(self):
        cfg = informed_cfg(attack="two_threshold", n_obs_target=60, trials=20_000)
        records = run_game(cfg, small_data())
        alpha, beta = per_cell_error_rates(cfg.mech)
        _, expected = model_accuracy(analytic_two_threshold_model(60, alpha, beta))
        assert success_rate(records) == pytest.approx(expected, abs=0.02)

    def test_bookkeeping_identity_exact(self):
        cfg = informed_cfg(trials=3_001)
        records = run_game(cfg, small_data())
        alpha, beta = empirical_error_rates(records)
        assert accuracy_from_errors(alpha, beta) == pytest.approx(
            success_rate(records), abs=1e-12
        )

    def test_deterministic(self):
        cfg = informed_cfg(trials=400)
        a = run_game(cfg, small_data())
        b = run_game(cfg, small_data())
        assert a == b

    def test_natural_target(self):
        cfg = informed_cfg(n_obs_target="natural", trials=300)
        records = run_game(cfg, small_data())
        assert len(records) == 300

    def test_auxiliary_attacker_runs_and_beats_chance(self):
        cfg = informed_cfg(
            attacker="auxiliary", n_traces=30, trials=2_000, n_obs_target=40
        )
        records = run_game(cfg, small_data(n=200))
        assert 0.5 - 0.03 <= success_rate(records) <= 1.0

    def test_informed_at_least_auxiliary(self):
        data = small_data(n=200)
        informed = run_game(informed_cfg(trials=6_000, n_obs_target=40), data)
        auxiliary = run_game(
            informed_cfg(
                attacker="auxiliary", n_traces=30, trials=6_000, n_obs_target=40
            ),
            data,
        )
        assert success_rate(informed) >= success_rate(auxiliary) - 0.02

    def test_threads_do_not_change_results(self):
        cfg1 = informed_cfg(attacker="auxiliary", n_traces=20, trials=300, threads=1)
        cfg4 = informed_cfg(attacker="auxiliary", n_traces=20, trials=300, threads=4)
        data = small_data(n=150)
        assert run_game(cfg1, data) == run_game(cfg4, data)

    def test_insufficient_traces(self):
        cfg = informed_cfg(attacker="auxiliary", n_traces=500, trials=10)
        with pytest.raises(ValueError, match="insufficient|cannot sample"):
            run_game(cfg, small_data(n=30))

    def test_meta_classifier_runs(self):
        cfg = informed_cfg(
            attack="meta_classifier",
            n_obs_target=20,
            trials=2_000,
            shadow_count=400,
            train=TrainConfig(learning_rate=0.05, epochs=150, optimizer="adam"),
        )
        records = run_game(cfg, small_data())
        assert success_rate(records) > 0.55

    def test_reference_attack_runs(self):
        cfg = informed_cfg(attack="reference", trials=2_000, n_obs_target=40)
        records = run_game(cfg, small_data(n=200))
        assert success_rate(records) > 0.6


class TestSweeps:
    def test_k_zero_is_chance(self):
        cfg = informed_cfg(trials=4_000)
        rows = sweep_positive_observations(cfg, [0], small_data())
        assert rows[0]["accuracy"] == pytest.approx(0.5, abs=0.025)

    def test_accuracy_non_decreasing_in_k(self):
        cfg = informed_cfg(trials=20_000)
        rows = sweep_positive_observations(cfg, [5, 20, 60], small_data())
        accs = [r["accuracy"] for r in rows]
        assert all(a <= b + 0.01 for a, b in zip(accs, accs[1:]))

    def test_row_schema(self):
        cfg = informed_cfg(trials=200)
        rows = sweep_positive_observations(cfg, [5, 10], small_data())
        assert [r["k"] for r in rows] == [5, 10]
        for r in rows:
            assert set(r) == {
                "k", "attack", "attacker", "mechanism",
                "accuracy", "ci_low", "ci_high", "auc",
            }
            assert r["ci_low"] <= r["accuracy"] <= r["ci_high"]

    def test_shadow_sweep_metric_attack_stable(self):
        cfg = informed_cfg(trials=8_000)
        rows = sweep_shadow_count(cfg, [200, 1_000, 5_000], small_data())
        accs = [r["accuracy"] for r in rows]
        assert max(accs) - min(accs) < 0.02

    def test_shadow_sweep_minimum_m(self):
        cfg = informed_cfg(trials=300)
        rows = sweep_shadow_count(cfg, [2], small_data())
        assert len(rows) == 1


class TestGapReport:
    def test_noiseless_gap_zero(self):
        cfg = informed_cfg(mech=MechanismSpec.noiseless(), trials=400)
        rows = gap_report(cfg, [10, 30], small_data())
        for r in rows:
            assert r["expected_bound"] == 1.0
            assert r["empirical_accuracy"] == 1.0
            assert r["gap"] == 0.0

    def test_gap_non_negative(self):
        cfg = informed_cfg(trials=10_000)
        rows = gap_report(cfg, [10, 30, 60], small_data())
        for r in rows:
            assert r["gap"] >= -0.01  # Monte-Carlo slack only

    def test_requires_informed(self):
        cfg = informed_cfg(attacker="auxiliary", n_traces=20)
        with pytest.raises(ValueError, match="informed"):
            gap_report(cfg, [10], small_data())


class TestTables:
    def test_csv_deterministic_bytes(self, tmp_path):
        cfg = informed_cfg(trials=500)
        data = small_data()
        paths = []
        for name in ("a.csv", "b.csv"):
            rows = [summarize(cfg, run_game(cfg, data), k=30)]
            path = tmp_path / name
            rows_to_csv(rows, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_roc_csv(self, tmp_path):
        roc = roc_from_scores([3.0, 4.0], [1.0, 2.0])
        path = tmp_path / "roc.csv"
        roc_to_csv(roc, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "fpr,tpr"
        assert len(lines) == len(roc.points) + 1

    def test_rejects_empty_rows(self, tmp_path):
        with pytest.raises(ValueError):
            rows_to_csv([], tmp_path / "x.csv")
