import math

import mpmath as mp
import numpy as np
import pytest
from scipy.stats import binom, kstest

from locaudit.data import AggregateMatrix
from locaudit.mechanisms import (
    MechanismSpec,
    PrivacyRegionPoint,
    composition_deltas,
    expected_attack_accuracy,
    expected_attack_accuracy_from_budget,
    gaussian_sigma,
    mechanism_cdf,
    perturb,
    sensitivity,
    tradeoff_min_error,
)


def delta_i_reference(epsilon, k, i):
    """Arbitrary-precision evaluation of the composition offset delta_i."""
    e = mp.mpf(epsilon)
    total = mp.mpf(0)
    for l in range(i):
        total += mp.binomial(k, l) * (mp.exp((k - l) * e) - mp.exp((k - 2 * i + l) * e))
    return float(total / (1 + mp.exp(e)) ** k)


class TestMechanismSpec:
    def test_laplace_scale(self):
        mech = MechanismSpec.laplace(0.5, clip_bound=1)
        assert mech.noise_scale == pytest.approx(2.0)
        assert mech.noise_variance() == pytest.approx(8.0)

    def test_laplace_requires_zero_delta(self):
        with pytest.raises(ValueError, match="delta"):
            MechanismSpec("laplace", 0.5, 0.1, 1, 2.0)

    def test_gaussian_sigma_classical_bound(self):
        # delta fixed at 1/(2m) for a pool of m = 1999 traces
        sigma = gaussian_sigma(0.5, 1.0 / 3998, 1)
        assert sigma == pytest.approx(
            math.sqrt(2 * math.log(1.25 * 3998)) / 0.5, rel=1e-12
        )
        assert 8.2 < sigma < 8.3

    def test_json_round_trip(self):
        mech = MechanismSpec.gaussian(0.5, 1e-3, 2)
        back = MechanismSpec.from_json(mech.to_json())
        assert back == mech

    def test_json_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown"):
            MechanismSpec.from_json({"family": "laplace", "epsilon": 1.0, "b": 2})

    def test_noiseless(self):
        mech = MechanismSpec.noiseless()
        assert mech.noise_scale == 0.0 and math.isinf(mech.epsilon)


def test_sensitivity():
    assert sensitivity(1, 1) == 1.0
    assert sensitivity(1, 2) == 1.0
    assert sensitivity(3, 1) == 3.0
    with pytest.raises(ValueError):
        sensitivity(1, 3)


class TestPerturb:
    def test_noiseless_identity(self):
        agg = AggregateMatrix(np.arange(6).reshape(2, 3))
        out = perturb(agg, MechanismSpec.noiseless(), seed=0)
        assert np.array_equal(out.cells, agg.cells)

    def test_laplace_variance(self):
        agg = AggregateMatrix(np.zeros((1000, 1000), dtype=int))
        out = perturb(agg, MechanismSpec.laplace(0.5), seed=1)
        assert out.cells.var() == pytest.approx(8.0, rel=0.02)

    def test_gaussian_variance(self):
        mech = MechanismSpec("gaussian", 0.5, 1e-3, 1, 3.0)
        agg = AggregateMatrix(np.zeros((1000, 1000), dtype=int))
        out = perturb(agg, mech, seed=2)
        assert out.cells.var() == pytest.approx(9.0, rel=0.02)

    def test_deterministic_under_seed(self):
        agg = AggregateMatrix(np.zeros((5, 5), dtype=int))
        mech = MechanismSpec.laplace(1.0)
        assert np.array_equal(
            perturb(agg, mech, seed=7).cells, perturb(agg, mech, seed=7).cells
        )

    @pytest.mark.parametrize(
        "mech",
        [MechanismSpec.laplace(0.5), MechanismSpec("gaussian", 0.5, 1e-3, 1, 2.5)],
    )
    def test_noise_matches_cdf(self, mech):
        agg = AggregateMatrix(np.zeros((1000, 1000), dtype=int))
        samples = perturb(agg, mech, seed=3).cells.reshape(-1)
        stat = kstest(samples, lambda x: mechanism_cdf(mech, 0.0, x)).statistic
        assert stat < 0.005


class TestMechanismCdf:
    def test_laplace_median_and_tail(self):
        mech = MechanismSpec.laplace(0.5)  # b = 2
        assert mechanism_cdf(mech, 0.0, 0.0) == pytest.approx(0.5)
        assert mechanism_cdf(mech, 0.0, 0.5) == pytest.approx(
            1 - 0.5 * math.exp(-0.25), abs=1e-12
        )

    def test_gaussian_symmetry(self):
        mech = MechanismSpec("gaussian", 0.5, 1e-3, 1, 1.0)
        assert mechanism_cdf(mech, 0.0, 0.0) == pytest.approx(0.5)

    def test_shift(self):
        mech = MechanismSpec.laplace(0.5)
        assert mechanism_cdf(mech, 1.0, 1.0) == pytest.approx(0.5)

    def test_zero_scale_step(self):
        mech = MechanismSpec.noiseless()
        assert mechanism_cdf(mech, 1.0, 0.9) == 0.0
        assert mechanism_cdf(mech, 1.0, 1.0) == 1.0


class TestComposition:
    def test_k1_identity(self):
        (point,) = composition_deltas(0.7, 0.01, 1)
        assert point.epsilon_total == pytest.approx(0.7)
        assert point.delta_total == pytest.approx(0.01)

    def test_delta_1_closed_form(self):
        points = composition_deltas(0.5, 0.0, 2)
        expected = (math.e - 1) / (1 + math.exp(0.5)) ** 2
        assert points[1].epsilon_total == pytest.approx(0.0)
        assert points[1].delta_total == pytest.approx(expected, abs=1e-5)
        assert points[1].delta_total == pytest.approx(0.24492, abs=1e-5)

    @pytest.mark.parametrize("k", [3, 10, 60, 200])
    def test_matches_arbitrary_precision(self, k):
        points = composition_deltas(0.5, 0.0, k)
        for i, point in enumerate(points):
            ref = delta_i_reference(0.5, k, i)
            assert point.delta_total == pytest.approx(ref, rel=1e-9, abs=1e-12)

    def test_epsilon_zero_all_points_zero(self):
        for point in composition_deltas(0.0, 0.0, 7):
            assert point.epsilon_total == 0.0
            assert point.delta_total == 0.0

    def test_monotone_in_i(self):
        points = composition_deltas(0.8, 0.0, 30)
        deltas = [p.delta_total for p in points]
        epsilons = [p.epsilon_total for p in points]
        assert all(a <= b + 1e-15 for a, b in zip(deltas, deltas[1:]))
        assert all(a > b for a, b in zip(epsilons, epsilons[1:]))

    def test_base_delta_folds_in(self):
        points = composition_deltas(0.5, 0.01, 3)
        assert points[0].delta_total == pytest.approx(1 - 0.99**3)

    def test_rejects_k0(self):
        with pytest.raises(ValueError):
            composition_deltas(0.5, 0.0, 0)


class TestTradeoff:
    def test_eps0(self):
        alpha, beta = tradeoff_min_error(PrivacyRegionPoint(0.0, 0.0))
        assert alpha + beta == pytest.approx(1.0)

    def test_closed_form(self):
        alpha, beta = tradeoff_min_error(PrivacyRegionPoint(0.5, 0.0))
        assert alpha == beta == pytest.approx(1 / (1 + math.exp(0.5)), abs=1e-12)

    def test_delta1_vacuous(self):
        assert tradeoff_min_error(PrivacyRegionPoint(0.5, 1.0)) == (0.0, 0.0)

    @pytest.mark.parametrize("eps,delta", [(0.3, 0.0), (1.0, 0.05), (2.5, 0.2)])
    def test_grid_search_oracle(self, eps, delta):
        # returned point is feasible, and no feasible grid point has smaller sum
        alpha, beta = tradeoff_min_error(PrivacyRegionPoint(eps, delta))
        assert alpha + math.exp(eps) * beta >= 1 - delta - 1e-9
        assert math.exp(eps) * alpha + beta >= 1 - delta - 1e-9
        grid = np.linspace(0, 1, 401)
        a, b = np.meshgrid(grid, grid)
        feasible = (a + math.exp(eps) * b >= 1 - delta) & (
            math.exp(eps) * a + b >= 1 - delta
        )
        best = (a + b)[feasible].min()
        assert alpha + beta <= best + 1e-9


def randomized_response_accuracy(epsilon, k):
    """Exact best distinguishing accuracy of k-fold randomized response.

    The count of flipped bits is sufficient, so the accuracy is
    1/2 + TV(Binom(k, q), Binom(k, p))/2 with p = 1/(1+e^eps).
    """
    p = 1.0 / (1.0 + math.exp(epsilon))
    xs = np.arange(k + 1)
    tv = 0.5 * np.abs(binom.pmf(xs, k, 1 - p) - binom.pmf(xs, k, p)).sum()
    return 0.5 + 0.5 * tv


class TestExpectedAccuracy:
    def test_k1_closed_form(self):
        acc = expected_attack_accuracy_from_budget(0.5, 0.0, 1)
        assert acc == pytest.approx(math.exp(0.5) / (1 + math.exp(0.5)), abs=1e-12)
        assert acc == pytest.approx(0.62246, abs=1e-5)

    def test_eps0_is_half(self):
        for k in (1, 5, 40):
            assert expected_attack_accuracy_from_budget(0.0, 0.0, k) == pytest.approx(0.5)

    @pytest.mark.parametrize("k", [1, 2, 3, 5, 8])
    def test_matches_randomized_response_oracle(self, k):
        # the pure-eps bound is tight; randomized response attains it exactly
        acc = expected_attack_accuracy_from_budget(0.5, 0.0, k)
        assert acc == pytest.approx(randomized_response_accuracy(0.5, k), abs=1e-10)

    def test_monotone_in_k(self):
        accs = [expected_attack_accuracy_from_budget(0.5, 0.0, k) for k in range(1, 80)]
        assert all(a <= b + 1e-12 for a, b in zip(accs, accs[1:]))
        assert accs[59] > accs[9]

    def test_monotone_in_eps(self):
        accs = [
            expected_attack_accuracy_from_budget(e, 0.0, 10)
            for e in (0.1, 0.3, 0.5, 1.0)
        ]
        assert all(a < b for a, b in zip(accs, accs[1:]))

    def test_mechanism_wrapper(self):
        mech = MechanismSpec.laplace(0.5)
        assert expected_attack_accuracy(mech, 1) == pytest.approx(0.62246, abs=1e-5)
        assert expected_attack_accuracy(MechanismSpec.noiseless(), 10) == 1.0
