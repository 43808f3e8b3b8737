"""Small constraint subsets that still cover every training instance.

A constraint covers an instance when planning under it is feasible.  The
greedy builder follows the usual set-cover step (maximize new coverage)
and breaks ties first by mean score, then by information gain.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .experience import ExperienceBundle
from .gaussian import GaussianBelief, estimate_prior

DEFAULT_LAMBDA = 0.1
BRUTE_FORCE_MAX_M = 15


class DegenerateGainWarning(UserWarning):
    pass


@dataclass(frozen=True)
class OmsParams:
    lambda_tradeoff: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if not math.isfinite(self.lambda_tradeoff) or self.lambda_tradeoff < 0:
            raise ValueError("lambda_tradeoff must be finite and nonnegative")


@dataclass(frozen=True)
class MinimalSet:
    indices: tuple[int, ...]
    covered: frozenset[int]
    success_prob: float
    total_gain: float
    n_coverable: int
    uncoverable: tuple[int, ...] = ()
    constraint_ids: tuple[str, ...] = ()

    def to_json(self) -> str:
        return json.dumps({
            "indices": list(self.indices),
            "constraint_ids": list(self.constraint_ids),
            "covered_count": len(self.covered),
            "n_coverable": self.n_coverable,
            "success_prob": self.success_prob,
            "total_gain": self.total_gain,
        })


def success_prob(p: Sequence[float], L: Sequence[int]) -> float:
    """Probability that at least one constraint in L is feasible, assuming independence."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    return float(1.0 - np.prod(1.0 - p[list(L)]))


def feasibility_rates(feasibility: np.ndarray) -> np.ndarray:
    return np.asarray(feasibility, dtype=float).mean(axis=0)


def _logdet(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    try:
        chol = np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        sign, value = np.linalg.slogdet(matrix)
        return float(value) if sign > 0 else -math.inf
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def entropy(covariance) -> float:
    """Differential entropy of a Gaussian with the given covariance."""
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    k = cov.shape[0]
    return 0.5 * k * (1.0 + math.log(2.0 * math.pi)) + 0.5 * _logdet(cov)


def gain(covariance, L: Sequence[int], theta: int, pivot_floor: float = 0.0) -> float:
    """Log-det reduction over L minus theta after observing theta.

    Equals twice the mutual information between theta's score and the rest
    of L.  Returns 0 (with a warning) when theta's variance is at or below
    ``pivot_floor``.
    """
    L = list(L)
    if theta not in L:
        raise ValueError("theta must be a member of L")
    cov = np.asarray(covariance, dtype=float)
    rest = [i for i in L if i != theta]
    pivot = float(cov[theta, theta])
    if pivot <= max(pivot_floor, 0.0):
        warnings.warn(f"degenerate pivot {pivot:.3g} for constraint {theta}; gain set to 0",
                      DegenerateGainWarning, stacklevel=2)
        return 0.0
    if not rest:
        return 0.0
    block = cov[np.ix_(rest, rest)]
    cross = cov[rest, theta]
    posterior = block - np.outer(cross, cross) / pivot
    return _logdet(block) - _logdet(0.5 * (posterior + posterior.T))


def objective(covariance, p, L: Sequence[int], lambda_tradeoff: float, pivot_floor: float = 0.0) -> float:
    """Sum of feasibility rates plus lambda times the summed gains over L."""
    return float(sum(p[i] for i in L)) + lambda_tradeoff * total_gain(covariance, L, pivot_floor)


def total_gain(covariance, L: Sequence[int], pivot_floor: float = 0.0) -> float:
    return float(sum(gain(covariance, L, t, pivot_floor) for t in L))


def _covered_by(feas: np.ndarray, L: Sequence[int], rows: Optional[set] = None) -> set[int]:
    if not L:
        return set()
    hit = np.flatnonzero(feas[:, list(L)].any(axis=1))
    out = set(hit.tolist())
    return out if rows is None else out & rows


def _finish(bundle: ExperienceBundle, belief: GaussianBelief, L: list[int], coverable: set[int]) -> MinimalSet:
    p = feasibility_rates(bundle.feasibility)
    return MinimalSet(
        indices=tuple(L),
        covered=frozenset(_covered_by(bundle.feasibility, L)),
        success_prob=success_prob(p, L),
        total_gain=total_gain(belief.covariance, L, belief.pivot_floor),
        n_coverable=len(coverable),
        uncoverable=tuple(sorted(set(range(bundle.n)) - coverable)),
        constraint_ids=tuple(bundle.constraints.ids[i] for i in L),
    )


def construct_oms(bundle: ExperienceBundle, prior: Optional[GaussianBelief] = None,
                  params: OmsParams = OmsParams()) -> MinimalSet:
    """Greedy minimal set: seed with the best mean, then cover, filter by mean, pick by gain."""
    feas = bundle.feasibility
    if not feas.any():
        raise ValueError("no constraint is feasible for any instance")
    belief = prior if prior is not None else estimate_prior(bundle.scores)
    mu = belief.mean
    cov = belief.covariance
    coverable = _covered_by(feas, range(bundle.m))

    first = int(np.argmax(mu))
    L = [first]
    covered = _covered_by(feas, L)
    while not coverable <= covered:
        uncovered = coverable - covered
        rows = sorted(uncovered)
        candidates = [i for i in range(bundle.m) if i not in L]
        new_cover = {i: int(feas[rows, i].sum()) for i in candidates}
        best = max(new_cover.values())
        cand = [i for i in candidates if new_cover[i] == best]
        top_mu = max(mu[i] for i in cand)
        cand = [i for i in cand if mu[i] == top_mu]
        gains = [gain(cov, L + [i], i, belief.pivot_floor) for i in cand]
        # first occurrence of the max keeps the lowest index on ties
        nxt = cand[int(np.argmax(gains))]
        L.append(nxt)
        covered = _covered_by(feas, L)
    return _finish(bundle, belief, L, coverable)


def brute_force_oms(bundle: ExperienceBundle, prior: Optional[GaussianBelief] = None,
                    params: OmsParams = OmsParams(), max_m: int = BRUTE_FORCE_MAX_M) -> MinimalSet:
    """Exhaustive search: smallest covering subsets, best objective among them."""
    if bundle.m > max_m:
        raise ValueError(f"brute force limited to m <= {max_m}")
    feas = bundle.feasibility
    if not feas.any():
        raise ValueError("no constraint is feasible for any instance")
    belief = prior if prior is not None else estimate_prior(bundle.scores)
    p = feasibility_rates(feas)
    coverable = _covered_by(feas, range(bundle.m))
    for size in range(1, bundle.m + 1):
        best, best_val = None, -math.inf
        for subset in itertools.combinations(range(bundle.m), size):
            if not coverable <= _covered_by(feas, subset):
                continue
            val = objective(belief.covariance, p, subset, params.lambda_tradeoff, belief.pivot_floor)
            if val > best_val:
                best, best_val = list(subset), val
        if best is not None:
            return _finish(bundle, belief, best, coverable)
    raise AssertionError("full constraint set must cover every coverable instance")


def min_cover_size(feasibility: np.ndarray) -> int:
    """Size of the smallest covering subset (exhaustive)."""
    feas = np.asarray(feasibility, dtype=bool)
    m = feas.shape[1]
    coverable = _covered_by(feas, range(m))
    for size in range(1, m + 1):
        for subset in itertools.combinations(range(m), size):
            if coverable <= _covered_by(feas, subset):
                return size
    return 0
