"""Threshold calibration on a real-only validation set.

The threshold is the smallest calibration score whose strict-exceedance
fraction is at most the target false-positive rate, which guarantees the
achieved rate never overshoots the target. Decisions are boundary-inclusive
on the fake side: score >= epsilon reads as fake.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import TooFewSamples
from .scoring import CombinerSpec

MIN_CALIBRATION_SAMPLES = 20

REAL = "real"
FAKE = "fake"


@dataclass(frozen=True)
class Threshold:
    epsilon: float
    target_fpr: float
    n_calibration: int
    achieved_fpr: float
    combiner: CombinerSpec | None = None
    config_fingerprint: str | None = None

    def to_json_dict(self) -> dict:
        rec = {
            "epsilon": self.epsilon,
            "target_fpr": self.target_fpr,
            "n_calibration": self.n_calibration,
            "achieved_fpr": self.achieved_fpr,
            "combiner": self.combiner.to_json_dict() if self.combiner else None,
        }
        if self.config_fingerprint is not None:
            rec["config_fingerprint"] = self.config_fingerprint
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Threshold":
        rec = json.loads(text)
        combiner = rec.get("combiner")
        return cls(
            epsilon=float(rec["epsilon"]),
            target_fpr=float(rec["target_fpr"]),
            n_calibration=int(rec["n_calibration"]),
            achieved_fpr=float(rec.get("achieved_fpr", 0.0)),
            combiner=CombinerSpec.from_json_dict(combiner) if combiner else None,
            config_fingerprint=rec.get("config_fingerprint"),
        )

    def with_fingerprint(self, fingerprint: str) -> "Threshold":
        from dataclasses import replace

        return replace(self, config_fingerprint=fingerprint)


def calibrate_threshold(
    real_scores, target_fpr: float, combiner: CombinerSpec | None = None
) -> Threshold:
    """Empirical upper-quantile threshold from real-image scores.

    epsilon is the smallest score value s in the calibration set such that
    the fraction of scores strictly greater than s is <= target_fpr.
    """
    scores = np.asarray(list(real_scores), dtype=np.float64)
    n = scores.size
    if n < MIN_CALIBRATION_SAMPLES:
        raise TooFewSamples(
            f"calibration needs >= {MIN_CALIBRATION_SAMPLES} scores, got {n}"
        )
    if not 0.0 < target_fpr < 1.0:
        raise ValueError(f"target_fpr must be in (0, 1), got {target_fpr}")
    if not np.isfinite(scores).all():
        raise ValueError("calibration scores must be finite")

    ordered = np.sort(scores)
    # fraction strictly above ordered[i] is (n - 1 - last_index_of_value) / n;
    # walking unique values in ascending order finds the smallest admissible one
    for value in np.unique(ordered):
        exceed = n - int(np.searchsorted(ordered, value, side="right"))
        if exceed / n <= target_fpr:
            achieved = exceed / n
            return Threshold(
                epsilon=float(value),
                target_fpr=float(target_fpr),
                n_calibration=n,
                achieved_fpr=achieved,
                combiner=combiner,
            )
    raise AssertionError("unreachable: the maximum score always satisfies the bound")


def decide(score: float, th: Threshold) -> str:
    """fake iff score >= epsilon."""
    return FAKE if score >= th.epsilon else REAL
