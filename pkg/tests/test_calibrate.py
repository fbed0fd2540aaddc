import numpy as np
import pytest

from minder.calibrate import Threshold, calibrate_threshold, decide
from minder.errors import TooFewSamples
from minder.scoring import CombinerSpec

from conftest import rng


class TestCalibrateThreshold:
    def test_hundred_point_grid_at_five_percent(self):
        scores = [round(0.01 * k, 2) for k in range(1, 101)]
        th = calibrate_threshold(scores, 0.05)
        assert th.epsilon == pytest.approx(0.95)
        exceed = sum(1 for s in scores if s > th.epsilon)
        assert exceed == 5
        assert th.achieved_fpr == pytest.approx(0.05)
        assert th.n_calibration == 100

    def test_all_identical_scores(self):
        th = calibrate_threshold([0.7] * 50, 0.05)
        assert th.epsilon == 0.7
        assert th.achieved_fpr == 0.0

    def test_half_target_on_four_values(self):
        th = calibrate_threshold([1.0, 2.0, 3.0, 4.0] * 5, 0.5)
        assert th.epsilon == 2.0

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            calibrate_threshold(list(range(19)), 0.05)

    def test_target_range_validated(self):
        scores = list(np.linspace(0, 1, 30))
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                calibrate_threshold(scores, bad)

    def test_tightness_on_distinct_scores(self):
        scores = rng(1).random(100)
        th = calibrate_threshold(scores, 0.05)
        assert th.achieved_fpr <= 0.05
        assert th.achieved_fpr > 0.05 - 1.0 / 100

    def test_monotone_in_target(self):
        scores = rng(2).random(200)
        eps = [calibrate_threshold(scores, t).epsilon for t in (0.01, 0.05, 0.1, 0.3, 0.5)]
        assert all(b <= a for a, b in zip(eps, eps[1:]))

    def test_epsilon_is_a_calibration_score(self):
        scores = rng(3).random(64)
        th = calibrate_threshold(scores, 0.1)
        assert th.epsilon in set(scores.tolist())


class TestDecide:
    def make(self, eps):
        return Threshold(epsilon=eps, target_fpr=0.05, n_calibration=100, achieved_fpr=0.05)

    def test_boundary_inclusive_fake(self):
        th = self.make(0.42)
        assert decide(0.42, th) == "fake"

    def test_just_below_is_real(self):
        th = self.make(0.42)
        assert decide(0.42 - 1e-9, th) == "real"

    def test_large_score_is_fake(self):
        assert decide(1e9, self.make(0.42)) == "fake"

    def test_isotone_transform_preserves_decisions(self):
        scores = rng(4).random(100)
        th = calibrate_threshold(scores, 0.1)
        transform = lambda s: np.expm1(3.0 * s) + 0.5
        th_t = calibrate_threshold(transform(scores), 0.1)
        probes = rng(5).random(50)
        for p in probes:
            assert decide(p, th) == decide(float(transform(p)), th_t)


class TestThresholdJson:
    def test_round_trip(self):
        combiner = CombinerSpec("min", ("noise", "contrastive_blur"))
        th = calibrate_threshold(rng(6).random(40), 0.05, combiner=combiner)
        again = Threshold.from_json(th.to_json())
        assert again == th

    def test_serialization_is_stable(self):
        th = calibrate_threshold(rng(7).random(40), 0.05)
        assert th.to_json() == Threshold.from_json(th.to_json()).to_json()
