"""Gaussian model over constraint scores.

A problem instance is represented by the vector of scores it obtains under
every constraint of a fixed library.  Past instances give a score matrix;
its column means and sample covariance form the prior, and observed scores
on a new instance are folded in one at a time by Gaussian conditioning.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

SYMMETRY_TOL = 1e-10
JITTER_START = 1e-10
JITTER_MAX = 1e-2


class DegeneratePivotError(ValueError):
    """Conditioning pivot (posterior variance of the observed entry) is too small."""


class RegularizationError(np.linalg.LinAlgError):
    """No jitter on the ladder made the covariance factorizable."""


@dataclass(frozen=True)
class ScoreMatrix:
    """n x m matrix of scores; rows are problem instances, columns constraints."""

    values: np.ndarray
    constraint_ids: tuple[str, ...]
    instance_ids: tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("score matrix must be 2-dimensional")
        n, m = values.shape
        if n < 2 or m < 1:
            raise ValueError(f"need n >= 2 and m >= 1, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("score matrix contains non-finite entries")
        cids = tuple(str(c) for c in self.constraint_ids)
        iids = tuple(str(i) for i in self.instance_ids)
        if len(cids) != m or len(set(cids)) != m:
            raise ValueError("constraint_ids must be unique and match column count")
        if len(iids) != n or len(set(iids)) != n:
            raise ValueError("instance_ids must be unique and match row count")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "constraint_ids", cids)
        object.__setattr__(self, "instance_ids", iids)

    @classmethod
    def from_array(cls, values, constraint_ids=None, instance_ids=None) -> "ScoreMatrix":
        values = np.asarray(values, dtype=float)
        n, m = values.shape
        if constraint_ids is None:
            constraint_ids = [f"c{j}" for j in range(m)]
        if instance_ids is None:
            instance_ids = [f"i{i}" for i in range(n)]
        return cls(values, tuple(constraint_ids), tuple(instance_ids))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["instance_id", *self.constraint_ids])
        for iid, row in zip(self.instance_ids, self.values):
            writer.writerow([iid, *(f"{v:.17g}" for v in row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ScoreMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        values = [[float(v) for v in r[1:]] for r in body]
        return cls(np.array(values), tuple(header[1:]), tuple(r[0] for r in body))

    def to_json(self) -> str:
        return json.dumps(
            {
                "instance_ids": list(self.instance_ids),
                "constraint_ids": list(self.constraint_ids),
                "values": self.values.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ScoreMatrix":
        obj = json.loads(text)
        return cls(np.array(obj["values"], dtype=float), obj["constraint_ids"], obj["instance_ids"])

    def save(self, path) -> None:
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(self.to_json())
        else:
            path.write_text(self.to_csv())

    @classmethod
    def load(cls, path) -> "ScoreMatrix":
        path = Path(path)
        if path.suffix == ".json":
            return cls.from_json(path.read_text())
        return cls.from_csv(path.read_text())


@dataclass(frozen=True)
class GaussianBelief:
    """Mean and covariance over all m constraint scores plus the observations so far.

    ``pivots`` holds, for each observation in order, the variance of the
    observed entry just before it was conditioned on.
    """

    mean: np.ndarray
    covariance: np.ndarray
    evaluated: tuple[tuple[int, float], ...] = ()
    jitter: float = 0.0
    pivots: tuple[float, ...] = field(default=())

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.covariance, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        idx = [i for i, _ in self.evaluated]
        if len(set(idx)) != len(idx):
            raise ValueError("evaluated indices must be distinct")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def m(self) -> int:
        return self.mean.size

    @property
    def evaluated_indices(self) -> list[int]:
        return [i for i, _ in self.evaluated]

    @property
    def untried(self) -> list[int]:
        done = set(self.evaluated_indices)
        return [i for i in range(self.m) if i not in done]

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.covariance).copy()

    @property
    def pivot_floor(self) -> float:
        # Mathematically pivots stay >= jitter after regularization; half of it
        # leaves room for rounding.
        return 0.5 * self.jitter

    @classmethod
    def from_moments(cls, mean, covariance, tol: float = 1e-12) -> "GaussianBelief":
        cov, jitter = regularize(covariance, tol)
        return cls(np.asarray(mean, dtype=float), cov, (), jitter)

    def restrict(self, indices: Sequence[int]) -> "GaussianBelief":
        """Prior over a subset of the constraints (no observations allowed)."""
        if self.evaluated:
            raise ValueError("can only restrict a belief with no observations")
        idx = np.asarray(indices, dtype=int)
        return GaussianBelief(self.mean[idx], self.covariance[np.ix_(idx, idx)], (), self.jitter)

    def shifted(self, offset: float) -> "GaussianBelief":
        return GaussianBelief(self.mean + offset, self.covariance, (), self.jitter)


def _cholesky_ok(matrix: np.ndarray, tol: float) -> bool:
    try:
        chol = np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        return False
    scale = max(float(np.max(np.diag(matrix))), np.finfo(float).tiny)
    return bool(np.min(np.diag(chol)) ** 2 > tol * scale)


def regularize(covariance, tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Add the smallest ladder jitter to the diagonal that makes ``covariance`` factorizable.

    The ladder starts at 1e-10 * trace / m and grows by 10x per retry; a
    factorization only counts if every Cholesky pivot exceeds ``tol`` times
    the largest diagonal entry.  Returns ``(matrix, jitter)``.
    """
    cov = np.array(covariance, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    if not np.all(np.isfinite(cov)):
        raise ValueError("covariance contains non-finite entries")
    if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError("covariance is not symmetric")
    cov = 0.5 * (cov + cov.T)
    if _cholesky_ok(cov, tol):
        return cov, 0.0

    m = cov.shape[0]
    # all-zero matrices (identical training rows) fall back to unit scale
    scale = float(np.trace(cov)) / m
    if scale <= 0.0:
        scale = 1.0
    max_diag = float(np.max(np.diag(cov)))
    limit = JITTER_MAX * (max_diag if max_diag > 0.0 else scale)

    jitter = JITTER_START * scale
    eye = np.eye(m)
    while jitter <= limit * (1 + 1e-12):
        candidate = cov + jitter * eye
        if _cholesky_ok(candidate, tol):
            return candidate, jitter
        jitter *= 10.0
    raise RegularizationError(f"jitter would exceed {limit:.3g} without a valid factorization")


def estimate_prior(scores: ScoreMatrix, tol: float = 1e-12) -> GaussianBelief:
    """Column means and unbiased sample covariance of the score matrix, regularized."""
    if not isinstance(scores, ScoreMatrix):
        scores = ScoreMatrix.from_array(scores)
    D = scores.values
    mean = D.mean(axis=0)
    centered = D - mean
    cov = centered.T @ centered / (scores.n - 1)
    cov = 0.5 * (cov + cov.T)
    return GaussianBelief.from_moments(mean, cov, tol)


def condition(belief: GaussianBelief, index: int, observed: float) -> GaussianBelief:
    """Posterior after observing score ``observed`` for constraint ``index``.

    Rank-one Schur-complement update of the current posterior; equivalent to
    block conditioning on all observations at once.
    """
    index = int(index)
    if not 0 <= index < belief.m:
        raise IndexError(f"constraint index {index} out of range")
    if index in belief.evaluated_indices:
        raise ValueError(f"constraint {index} already evaluated")
    observed = float(observed)
    if not np.isfinite(observed):
        raise ValueError("observed score must be finite")

    S = belief.covariance
    pivot = float(S[index, index])
    if pivot <= belief.pivot_floor or pivot <= 0.0:
        raise DegeneratePivotError(f"pivot {pivot:.3g} at constraint {index} below jitter scale")

    gain = S[:, index] / pivot
    mean = belief.mean + gain * (observed - belief.mean[index])
    cov = S - np.outer(gain, S[index, :])
    cov = 0.5 * (cov + cov.T)
    mean[index] = observed
    cov[index, :] = 0.0
    cov[:, index] = 0.0
    return GaussianBelief(
        mean,
        cov,
        belief.evaluated + ((index, observed),),
        belief.jitter,
        belief.pivots + (pivot,),
    )


def pin(belief: GaussianBelief, index: int, observed: float) -> GaussianBelief:
    """Record an observation without propagating it (for degenerate pivots)."""
    mean = belief.mean.copy()
    cov = belief.covariance.copy()
    pivot = float(cov[index, index])
    mean[index] = float(observed)
    cov[index, :] = 0.0
    cov[:, index] = 0.0
    return GaussianBelief(
        mean, cov, belief.evaluated + ((int(index), float(observed)),), belief.jitter, belief.pivots + (pivot,)
    )


def ucb(belief: GaussianBelief, zeta: float) -> np.ndarray:
    """Upper confidence bound per constraint; evaluated entries are ``-inf``."""
    if zeta < 0:
        raise ValueError("zeta must be nonnegative")
    values = belief.mean + zeta * np.sqrt(np.maximum(np.diag(belief.covariance), 0.0))
    values = values.copy()
    for i in belief.evaluated_indices:
        values[i] = -np.inf
    return values

