"""Constraint-selection policies: BOX, STATIC, RAND, DOO and the raw planner.

Every policy spends a budget of planner calls on one test instance and
returns an :class:`EpisodeTrace`.  Planners are reached through the
:class:`PlannerOracle` protocol so the same policies run against a synthetic
domain, a lookup table of scores, or anything else.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Protocol, Sequence

import numpy as np

from .gaussian import DegeneratePivotError, GaussianBelief, condition, pin, ucb

DEFAULT_ZETA = 1.96
TIE_RTOL = 1e-12


def theorem_zeta(delta: float) -> float:
    """Exploration constant sqrt(2 log(1/delta)) used by the regret guarantee."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    return math.sqrt(2.0 * math.log(1.0 / delta))


ZETA_PRESETS = {"default": DEFAULT_ZETA, "theorem-0.05": theorem_zeta(0.05)}


@dataclass(frozen=True)
class PlanResult:
    score: float
    feasible: bool
    plan: Any = None
    cost_units: float = 1.0
    constraint: Optional[tuple] = None


class PlannerOracle(Protocol):
    def evaluate(self, instance, index: int) -> PlanResult: ...

    def unconstrained_solve(self, instance, rng: np.random.Generator) -> PlanResult: ...


@dataclass(frozen=True)
class Step:
    t: int
    index: Optional[int]
    score: float
    ucb: Optional[float]
    feasible: bool
    cum_cost: float


@dataclass
class EpisodeTrace:
    policy: str
    choices: list[Step] = field(default_factory=list)
    best_step: Optional[int] = None
    best_score: float = -math.inf
    cumulative_cost: float = 0.0
    belief: Optional[GaussianBelief] = None

    def record(self, index, result: PlanResult, ucb_value=None) -> None:
        self.cumulative_cost += float(result.cost_units)
        step = Step(len(self.choices) + 1, index, float(result.score), ucb_value, bool(result.feasible),
                    self.cumulative_cost)
        self.choices.append(step)
        if step.score > self.best_score:
            self.best_score = step.score
            self.best_step = step.t

    @property
    def indices(self) -> list[int]:
        return [s.index for s in self.choices]

    @property
    def solved(self) -> bool:
        return any(s.feasible for s in self.choices)

    def first_feasible(self) -> Optional[Step]:
        return next((s for s in self.choices if s.feasible), None)

    def best_by_budget(self, budget: int) -> float:
        scores = [s.score for s in self.choices[:budget]]
        return max(scores) if scores else -math.inf

    def to_jsonl(self, constraint_ids: Optional[Sequence[str]] = None) -> str:
        lines = []
        for s in self.choices:
            if s.index is None:
                cid = None
            elif constraint_ids is not None:
                cid = constraint_ids[s.index]
            else:
                cid = str(s.index)
            lines.append(json.dumps({"t": s.t, "constraint_id": cid, "score": s.score,
                                     "ucb": s.ucb, "cum_cost": s.cum_cost}))
        return "\n".join(lines) + ("\n" if lines else "")


def _check_budget(k: int, m: int) -> None:
    if k < 0:
        raise ValueError("budget must be nonnegative")
    if k > m:
        raise ValueError(f"budget k={k} exceeds number of constraints m={m}")


def _argmax_tied(values: np.ndarray, candidates: Sequence[int], rng: np.random.Generator) -> int:
    vals = values[list(candidates)]
    top = np.max(vals)
    tol = TIE_RTOL * max(1.0, abs(top)) if np.isfinite(top) else 0.0
    tied = [c for c, v in zip(candidates, vals) if v >= top - tol]
    if len(tied) == 1:
        return tied[0]
    return int(tied[rng.integers(len(tied))])


def run_box(instance, oracle: PlannerOracle, prior: GaussianBelief, k: int,
            zeta: float = DEFAULT_ZETA, seed=None) -> EpisodeTrace:
    """Pick by maximum UCB, observe, condition, repeat ``k`` times."""
    if prior.evaluated:
        raise ValueError("prior must not contain observations")
    _check_budget(k, prior.m)
    rng = np.random.default_rng(seed)
    belief = prior
    trace = EpisodeTrace("box")
    for _ in range(k):
        bounds = ucb(belief, zeta)
        choice = _argmax_tied(bounds, belief.untried, rng)
        result = oracle.evaluate(instance, choice)
        trace.record(choice, result, float(bounds[choice]))
        try:
            belief = condition(belief, choice, result.score)
        except DegeneratePivotError:
            belief = pin(belief, choice, result.score)
    trace.belief = belief
    return trace


def static_order(mean: Sequence[float]) -> list[int]:
    return sorted(range(len(mean)), key=lambda i: (-mean[i], i))


def run_static(instance, oracle: PlannerOracle, prior: GaussianBelief, k: int) -> EpisodeTrace:
    _check_budget(k, prior.m)
    trace = EpisodeTrace("static")
    for i in static_order(prior.mean.tolist())[:k]:
        trace.record(i, oracle.evaluate(instance, i))
    return trace


def run_rand(instance, oracle: PlannerOracle, m: int, k: int, seed=None) -> EpisodeTrace:
    _check_budget(k, m)
    rng = np.random.default_rng(seed)
    trace = EpisodeTrace("rand")
    for i in rng.permutation(m)[:k]:
        trace.record(int(i), oracle.evaluate(instance, int(i)))
    return trace


def euclidean(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


@dataclass(frozen=True)
class DooParams:
    lipschitz: float = 1.0
    semimetric: Callable[[Any, Any], float] = euclidean

    def __post_init__(self):
        if self.lipschitz < 0:
            raise ValueError("Lipschitz constant must be nonnegative")


def doo_bounds(params: DooParams, points: np.ndarray, evaluated: Sequence[tuple[int, float]],
               candidates: Sequence[int]) -> np.ndarray:
    """Optimistic bound min_j [J(theta_j) + lambda * l(theta_i, theta_j)] per candidate.

    Returned array is indexed like ``points``; non-candidates are ``-inf`` and
    candidates are ``+inf`` while nothing has been evaluated.
    """
    bounds = np.full(len(points), -np.inf)
    for i in candidates:
        if not evaluated:
            bounds[i] = np.inf
            continue
        bounds[i] = min(score + params.lipschitz * params.semimetric(points[i], points[j])
                        for j, score in evaluated)
    return bounds


def run_doo(instance, oracle: PlannerOracle, constraints, params: DooParams, k: int, seed=None) -> EpisodeTrace:
    """Discrete DOO over the constraint parameter vectors.

    ``constraints`` is a ConstraintSet or an (m, d) array of parameters.
    """
    points = np.asarray(getattr(constraints, "params", constraints), dtype=float)
    if points.ndim != 2:
        raise ValueError("constraint parameters must be an (m, d) array")
    m = points.shape[0]
    _check_budget(k, m)
    rng = np.random.default_rng(seed)
    trace = EpisodeTrace("doo")
    evaluated: list[tuple[int, float]] = []
    untried = list(range(m))
    for _ in range(k):
        bounds = doo_bounds(params, points, evaluated, untried)
        choice = _argmax_tied(bounds, untried, rng)
        result = oracle.evaluate(instance, choice)
        b = float(bounds[choice])
        trace.record(choice, result, b if np.isfinite(b) else None)
        evaluated.append((choice, float(result.score)))
        untried.remove(choice)
    return trace


def run_raw(instance, oracle: PlannerOracle, budget: int, seed=None) -> EpisodeTrace:
    """Call the unconstrained planner until it succeeds or ``budget`` attempts are spent."""
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    rng = np.random.default_rng(seed)
    trace = EpisodeTrace("raw")
    for _ in range(budget):
        result = oracle.unconstrained_solve(instance, rng)
        trace.record(None, result)
        if result.feasible:
            break
    return trace


class TableOracle:
    """Oracle answering from a fixed score vector (one test instance).

    ``instance`` arguments are ignored.  Entries flagged infeasible keep the
    stored score, which is expected to already be the sentinel.
    """

    def __init__(self, scores, feasible=None, costs=None):
        self.scores = np.asarray(scores, dtype=float)
        self.feasible = np.ones(self.scores.size, bool) if feasible is None else np.asarray(feasible, bool)
        self.costs = np.ones(self.scores.size) if costs is None else np.asarray(costs, dtype=float)

    def evaluate(self, instance, index: int) -> PlanResult:
        return PlanResult(float(self.scores[index]), bool(self.feasible[index]), None, float(self.costs[index]))

    def unconstrained_solve(self, instance, rng: np.random.Generator) -> PlanResult:
        return self.evaluate(instance, int(rng.integers(self.scores.size)))
