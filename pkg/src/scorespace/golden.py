"""Four-direction grasp example: a tiny score matrix with a known correlation story.

Four training instances, four approach directions (top, left, bottom,
right), binary scores.  Top and right always agree, left is uncorrelated
with both, and bottom is only feasible when the other three fail.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gaussian import ScoreMatrix, condition, estimate_prior, ucb
from .policies import DEFAULT_ZETA, TableOracle, run_box

DIRECTIONS = ("top", "left", "bottom", "right")
TOP, LEFT, BOTTOM, RIGHT = range(4)

SCORES = np.array([
    [1, 1, 0, 1],
    [1, 0, 0, 1],
    [0, 1, 0, 0],
    [0, 0, 1, 0],
], dtype=float)

# bottom and right swap roles: bottom now follows top, right opposes it
FLIPPED_SCORES = np.array([
    [1, 1, 1, 0],
    [1, 0, 0, 0],
    [0, 1, 0, 1],
    [0, 0, 0, 0],
], dtype=float)

ONLY_BOTTOM = np.array([0.0, 0.0, 1.0, 0.0])
ONLY_LEFT = np.array([0.0, 1.0, 0.0, 0.0])


def score_matrix(values=SCORES) -> ScoreMatrix:
    return ScoreMatrix(values, DIRECTIONS, tuple(f"train{i}" for i in range(len(values))))


@dataclass
class GoldenReport:
    checks: dict[str, bool] = field(default_factory=dict)
    details: dict[str, object] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def rise_fall_passed(self) -> bool:
        return self.checks["negative_correlate_rises"] and self.checks["positive_correlate_falls"]


def run_golden(values=SCORES, zeta: float = DEFAULT_ZETA, seeds=range(50)) -> GoldenReport:
    """Replay the example and check how the UCBs move after each observation."""
    prior = estimate_prior(score_matrix(values))
    report = GoldenReport()
    u0 = ucb(prior, zeta)
    tol = 1e-9
    report.details["prior_mean"] = prior.mean.tolist()
    report.details["prior_ucb"] = u0.tolist()

    report.checks["initial_tie"] = bool(
        abs(u0[TOP] - u0[LEFT]) < tol and abs(u0[TOP] - u0[RIGHT]) < tol and u0[TOP] > u0[BOTTOM] + tol
    )

    # left fails first: top/right have zero covariance with it
    after_left = ucb(condition(prior, LEFT, 0.0), zeta)
    report.details["ucb_after_left_fails"] = after_left.tolist()
    report.checks["uncorrelated_unchanged"] = bool(
        abs(after_left[TOP] - u0[TOP]) < tol and abs(after_left[RIGHT] - u0[RIGHT]) < tol
    )

    # top fails first: bottom (negative correlate) rises, right (positive) falls
    after_top = ucb(condition(prior, TOP, 0.0), zeta)
    report.details["ucb_after_top_fails"] = after_top.tolist()
    report.checks["negative_correlate_rises"] = bool(after_top[BOTTOM] > u0[BOTTOM] + tol)
    report.checks["positive_correlate_falls"] = bool(after_top[RIGHT] < u0[RIGHT] - tol)

    steps = []
    for seed in seeds:
        trace = run_box(None, TableOracle(ONLY_LEFT), prior, 2, zeta, seed)
        steps.append(LEFT in trace.indices)
    report.details["left_within_two"] = f"{sum(steps)}/{len(steps)} seeds"
    report.checks["feasible_within_two"] = all(steps)
    return report
