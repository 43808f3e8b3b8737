"""Training experience: constraint libraries, score matrices and their persistence."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional, Protocol, Sequence

import numpy as np

from .gaussian import ScoreMatrix
from .policies import PlanResult, euclidean


class Domain(Protocol):
    """What training-data generation and the harness need from a planning domain.

    Planner results for infeasible plans carry ``score = nan``; the sentinel
    is only known once the whole score matrix exists.
    """

    name: str
    param_dim: int
    raw_budget: int

    def sample_instance(self, seed: int) -> Any: ...

    def solve_constrained(self, instance, params: Sequence[float]) -> PlanResult: ...

    def solve_unconstrained(self, instance, rng: np.random.Generator) -> PlanResult: ...

    def constraint_id(self, params: Sequence[float]) -> str: ...

    def config(self) -> dict: ...


@dataclass(frozen=True)
class ConstraintSet:
    ids: tuple[str, ...]
    params: np.ndarray

    def __post_init__(self):
        params = np.array(self.params, dtype=float)
        if params.ndim == 1:
            params = params.reshape(-1, 1)
        ids = tuple(str(i) for i in self.ids)
        if len(ids) != params.shape[0] or len(set(ids)) != len(ids):
            raise ValueError("constraint ids must be unique, one per parameter vector")
        if not np.all(np.isfinite(params)):
            raise ValueError("constraint parameters must be finite")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "ids", ids)

    @property
    def m(self) -> int:
        return len(self.ids)

    @property
    def d(self) -> int:
        return self.params.shape[1]

    def __len__(self) -> int:
        return self.m

    def subset(self, indices: Sequence[int]) -> "ConstraintSet":
        idx = list(indices)
        return ConstraintSet(tuple(self.ids[i] for i in idx), self.params[idx])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", *(f"p{j}" for j in range(self.d))])
        for cid, row in zip(self.ids, self.params):
            writer.writerow([cid, *(f"{v:.17g}" for v in row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConstraintSet":
        rows = [r for r in csv.reader(io.StringIO(text))][1:]
        rows = [r for r in rows if r]
        return cls(tuple(r[0] for r in rows), np.array([[float(v) for v in r[1:]] for r in rows]))


def compute_sentinel(scores, feasible) -> float:
    """Infeasibility score: min minus mean of the feasible entries."""
    scores = np.asarray(scores, dtype=float)
    feasible = np.asarray(feasible, dtype=bool)
    ok = scores[feasible]
    if ok.size == 0:
        raise ValueError("no feasible entries to derive the sentinel from")
    return float(ok.min() - ok.mean())


def apply_sentinel(raw_scores, feasible, sentinel: float) -> np.ndarray:
    return np.where(np.asarray(feasible, bool), np.asarray(raw_scores, float), sentinel)


def score_plan(plan, feasible: bool, sentinel: float,
               metric: Callable[[Any, Any], float] = euclidean) -> float:
    """Negative path length of a feasible waypoint list, else the sentinel."""
    if not feasible:
        return float(sentinel)
    waypoints = list(plan)
    return -float(sum(metric(a, b) for a, b in zip(waypoints, waypoints[1:])))


@dataclass(frozen=True)
class ExperienceBundle:
    """Score matrix, constraint library and feasibility from past instances.

    ``feasibility`` is what the planner reported; infeasible cells of
    ``scores`` hold ``sentinel``.
    """

    scores: ScoreMatrix
    constraints: ConstraintSet
    sentinel: float
    feasibility: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        feas = np.array(self.feasibility, dtype=bool)
        if feas.shape != self.scores.values.shape:
            raise ValueError("feasibility shape must match the score matrix")
        if self.scores.m != self.constraints.m:
            raise ValueError("score columns and constraint count differ")
        feas.setflags(write=False)
        object.__setattr__(self, "feasibility", feas)

    @property
    def n(self) -> int:
        return self.scores.n

    @property
    def m(self) -> int:
        return self.scores.m

    def sentinel_consistent(self) -> bool:
        """Whether feasible <=> score > sentinel holds for every entry."""
        return bool(np.array_equal(self.feasibility, self.scores.values > self.sentinel))

    @classmethod
    def from_raw(cls, raw_scores, feasibility, constraints: ConstraintSet,
                 instance_ids: Sequence[str], meta: Optional[dict] = None) -> "ExperienceBundle":
        feasibility = np.asarray(feasibility, bool)
        sentinel = compute_sentinel(raw_scores, feasibility)
        values = apply_sentinel(raw_scores, feasibility, sentinel)
        scores = ScoreMatrix(values, constraints.ids, tuple(instance_ids))
        return cls(scores, constraints, sentinel, feasibility, dict(meta or {}))

    def select(self, rows: Optional[Sequence[int]] = None, cols: Optional[Sequence[int]] = None) -> "ExperienceBundle":
        """Sub-bundle over the given rows/columns with the sentinel recomputed."""
        rows = list(range(self.n)) if rows is None else list(rows)
        cols = list(range(self.m)) if cols is None else list(cols)
        feas = self.feasibility[np.ix_(rows, cols)]
        # feasible cells still hold raw scores, so recomputation is exact
        raw = self.scores.values[np.ix_(rows, cols)]
        return ExperienceBundle.from_raw(
            raw, feas, self.constraints.subset(cols),
            [self.scores.instance_ids[i] for i in rows], self.meta,
        )

    def save(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        self.scores.save(out / "scores.csv")
        (out / "constraints.csv").write_text(self.constraints.to_csv())
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["instance_id", *self.scores.constraint_ids])
        for iid, row in zip(self.scores.instance_ids, self.feasibility):
            writer.writerow([iid, *(int(v) for v in row)])
        (out / "feasibility.csv").write_text(buf.getvalue())
        meta = {
            **self.meta,
            "sentinel": self.sentinel,
            "d": self.constraints.d,
            "n": self.n,
            "m": self.m,
        }
        (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return out

    @classmethod
    def load(cls, directory) -> "ExperienceBundle":
        src = Path(directory)
        scores = ScoreMatrix.load(src / "scores.csv")
        constraints = ConstraintSet.from_csv((src / "constraints.csv").read_text())
        rows = [r for r in csv.reader(io.StringIO((src / "feasibility.csv").read_text()))][1:]
        feas = np.array([[bool(int(v)) for v in r[1:]] for r in rows if r], dtype=bool)
        meta = json.loads((src / "meta.json").read_text())
        sentinel = float(meta["sentinel"])
        extra = {k: v for k, v in meta.items() if k not in ("sentinel", "d", "n", "m")}
        return cls(scores, constraints, sentinel, feas, extra)


def instance_seeds(seed: int, n: int) -> list[int]:
    """Distinct per-instance seeds derived from a master seed."""
    seeds = np.random.SeedSequence(seed).generate_state(2 * n, dtype=np.uint64) >> np.uint64(1)
    out: list[int] = []
    for s in seeds.tolist():
        if s not in out:
            out.append(int(s))
        if len(out) == n:
            return out
    raise RuntimeError("could not derive distinct instance seeds")


def generate_training_data(domain: Domain, n: int, solutions_per_instance: int = 1,
                           seed: int = 0) -> ExperienceBundle:
    """Solve n sampled instances unconstrained, extract constraints, score every pair.

    Instances whose unconstrained search fails within ``domain.raw_budget``
    stay in the matrix with all-infeasible rows.
    """
    if n < 2:
        raise ValueError("need at least two training instances")
    if solutions_per_instance < 1:
        raise ValueError("solutions_per_instance must be positive")
    seeds = instance_seeds(seed, n)
    instances = [domain.sample_instance(s) for s in seeds]

    extracted: list[tuple] = []
    seen: set[tuple] = set()
    for s, inst in zip(seeds, instances):
        rng = np.random.default_rng([seed, s])
        for _ in range(solutions_per_instance):
            for _ in range(domain.raw_budget):
                result = domain.solve_unconstrained(inst, rng)
                if result.feasible:
                    params = tuple(float(v) for v in result.constraint)
                    if params not in seen:
                        seen.add(params)
                        extracted.append(params)
                    break
    if not extracted:
        raise RuntimeError("no training instance could be solved; no constraints extracted")

    constraints = ConstraintSet(tuple(domain.constraint_id(p) for p in extracted), np.array(extracted))
    raw = np.zeros((n, constraints.m))
    feas = np.zeros((n, constraints.m), dtype=bool)
    for i, inst in enumerate(instances):
        for j, params in enumerate(extracted):
            result = domain.solve_constrained(inst, params)
            feas[i, j] = result.feasible
            raw[i, j] = result.score if result.feasible else 0.0
    meta = {"domain": domain.name, "seed": int(seed), "domain_config": domain.config(),
            "solutions_per_instance": int(solutions_per_instance)}
    return ExperienceBundle.from_raw(raw, feas, constraints, [str(s) for s in seeds], meta)


@dataclass(frozen=True)
class HeldOut:
    """The held-out row of a leave-one-out split."""

    index: int
    instance_id: str
    scores: np.ndarray
    feasible: np.ndarray


def loocv_split(bundle: ExperienceBundle, i: int) -> tuple[ExperienceBundle, HeldOut]:
    if bundle.n < 3:
        raise ValueError("leave-one-out needs n >= 3")
    if not 0 <= i < bundle.n:
        raise IndexError(f"held-out index {i} out of range")
    train = bundle.select(rows=[r for r in range(bundle.n) if r != i])
    test = HeldOut(i, bundle.scores.instance_ids[i], bundle.scores.values[i].copy(),
                   bundle.feasibility[i].copy())
    return train, test


def subsample_constraints(bundle: ExperienceBundle, target_m: int, seed: int = 0) -> ExperienceBundle:
    if not 1 <= target_m <= bundle.m:
        raise ValueError(f"target m' must be in [1, {bundle.m}]")
    rng = np.random.default_rng(seed)
    cols = sorted(rng.choice(bundle.m, size=target_m, replace=False).tolist())
    out = bundle.select(cols=cols)
    return replace(out, meta={**out.meta, "subsample_seed": int(seed)})


class ConstraintOracle:
    """Planner oracle for policies: evaluates library constraints through a domain.

    Infeasible results are reported with ``sentinel`` as their score.
    """

    def __init__(self, domain: Domain, constraints: ConstraintSet, sentinel: float):
        self.domain = domain
        self.constraints = constraints
        self.sentinel = float(sentinel)

    def _fix(self, result: PlanResult) -> PlanResult:
        if result.feasible:
            return result
        return replace(result, score=self.sentinel)

    def evaluate(self, instance, index: int) -> PlanResult:
        return self._fix(self.domain.solve_constrained(instance, self.constraints.params[index]))

    def unconstrained_solve(self, instance, rng: np.random.Generator) -> PlanResult:
        return self._fix(self.domain.solve_unconstrained(instance, rng))


def mean_abs_correlation(covariance) -> float:
    cov = np.asarray(covariance, dtype=float)
    sd = np.sqrt(np.maximum(np.diag(cov), 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = cov / np.outer(sd, sd)
    off = ~np.eye(cov.shape[0], dtype=bool)
    vals = np.abs(corr[off])
    vals = vals[np.isfinite(vals)]
    return float(vals.mean()) if vals.size else 0.0


def isclose_sentinel(bundle: ExperienceBundle) -> bool:
    return math.isclose(bundle.sentinel, compute_sentinel(bundle.scores.values, bundle.feasibility),
                        rel_tol=0.0, abs_tol=1e-12)
