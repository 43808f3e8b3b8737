"""Benchmark harness: data generation, leave-one-out policy comparison, minset and regret runs.

All randomness is derived from the config's master seed.  Held-out
instances are regenerated from their instance id (the instance seed) and
planned through the domain, so the raw planner can run on them too.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .domains import correlation_audit, make_domain
from .experience import (ConstraintOracle, ExperienceBundle, generate_training_data, loocv_split,
                         mean_abs_correlation, subsample_constraints)
from .gaussian import GaussianBelief, estimate_prior
from .minset import OmsParams, construct_oms
from .policies import (DEFAULT_ZETA, DooParams, EpisodeTrace, TableOracle, run_box, run_doo, run_rand, run_raw,
                       run_static)
from .regret import RegretParams, ValidationReport, monte_carlo_validate

log = logging.getLogger(__name__)

POLICIES = ("box", "static", "rand", "doo", "raw")
PRIOR_POLICIES = ("box", "static")


class ConfigError(ValueError):
    pass


@dataclass
class BenchConfig:
    domain: dict = field(default_factory=lambda: {"domain": "grid"})
    n: int = 50
    solutions_per_instance: int = 1
    subsample_m: Optional[int] = None
    seed: int = 0
    folds: Optional[int] = None
    policies: tuple[str, ...] = POLICIES
    k: Optional[int] = None
    zeta: float = DEFAULT_ZETA
    doo_lipschitz: float = 1.0
    raw_budget: Optional[int] = None
    oms_lambda: float = 0.1
    delta: float = 0.05
    trials: int = 2000
    regret_k: tuple[int, ...] = (3,)
    regret_synthetic: Optional[dict] = None
    workers: int = 1
    out: str = "bench_out"

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchConfig":
        raw = dict(raw)
        cfg = cls()
        if isinstance(raw.get("domain"), dict):
            cfg.domain = dict(raw.pop("domain"))
        else:
            keys = ("domain", "width", "height", "density", "n_directions", "max_cluster", "start_radius",
                    "occluders", "side_weights", "occluder_span", "n_obstacles", "min_side", "max_side", "reach",
                    "angle_tol", "target_box")
            cfg.domain = {k: raw.pop(k) for k in keys if k in raw}
            cfg.domain.setdefault("domain", "grid")
        if "domain_raw_budget" in raw:
            cfg.domain["raw_budget"] = raw.pop("domain_raw_budget")
        box, doo, raw_p = raw.pop("box", {}), raw.pop("doo", {}), raw.pop("raw", {})
        minset, regret = raw.pop("minset", {}), raw.pop("regret", {})
        cfg.zeta = float(box.get("zeta", raw.pop("zeta", cfg.zeta)))
        cfg.doo_lipschitz = float(doo.get("lipschitz", cfg.doo_lipschitz))
        cfg.raw_budget = raw_p.get("budget", raw.pop("raw_budget", None))
        cfg.oms_lambda = float(minset.get("lambda", cfg.oms_lambda))
        cfg.delta = float(regret.get("delta", cfg.delta))
        cfg.trials = int(regret.get("trials", raw.pop("trials", cfg.trials)))
        rk = regret.get("k", cfg.regret_k)
        cfg.regret_k = tuple(rk) if isinstance(rk, (list, tuple)) else (int(rk),)
        cfg.regret_synthetic = regret.get("synthetic")
        for key in ("n", "solutions_per_instance", "subsample_m", "seed", "folds", "k", "workers"):
            if key in raw:
                v = raw.pop(key)
                setattr(cfg, key, None if v is None else int(v))
        if "policies" in raw:
            cfg.policies = parse_policies(raw.pop("policies"))
        if "out" in raw:
            cfg.out = str(raw.pop("out"))
        if raw:
            raise ConfigError(f"unknown config keys: {sorted(raw)}")
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.zeta < 0:
            raise ConfigError("zeta must be nonnegative")
        bad = [p for p in self.policies if p not in POLICIES]
        if bad:
            raise ConfigError(f"unknown policies {bad}")
        try:
            make_domain(self.domain)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def parse_policies(value) -> tuple[str, ...]:
    items = value.split(",") if isinstance(value, str) else list(value)
    out = tuple(p.strip().lower() for p in items if p.strip())
    bad = [p for p in out if p not in POLICIES]
    if bad:
        raise ConfigError(f"unknown policies {bad}")
    return out


def ci95(values: Sequence[float]) -> float:
    """Half-width of a normal 95% interval on the mean: 1.96 * sd / sqrt(n)."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        return 0.0
    return float(1.96 * x.std(ddof=1) / math.sqrt(x.size))


def fold_seed(master: int, fold: int) -> int:
    return int(np.random.SeedSequence([master, fold]).generate_state(1, dtype=np.uint32)[0])


# ---------------------------------------------------------------- gen

def cmd_gen(cfg: BenchConfig, out: Optional[Path] = None) -> tuple[ExperienceBundle, dict]:
    domain = make_domain(cfg.domain)
    bundle = generate_training_data(domain, cfg.n, cfg.solutions_per_instance, cfg.seed)
    if cfg.subsample_m is not None and cfg.subsample_m < bundle.m:
        bundle = subsample_constraints(bundle, cfg.subsample_m, cfg.seed)
    summary = {"n": bundle.n, "m": bundle.m, "sentinel": bundle.sentinel,
               "mean_abs_correlation": mean_abs_correlation(estimate_prior(bundle.scores).covariance),
               "feasible_fraction": float(bundle.feasibility.mean())}
    audit = correlation_audit(bundle)
    summary.update({k: v for k, v in audit.items() if k not in summary})
    if out is not None:
        bundle.save(Path(out) / "bundle")
    return bundle, summary


# ---------------------------------------------------------------- loocv

@dataclass
class FoldResult:
    fold: int
    instance_id: str
    seed: int
    optimum: float
    traces: dict[str, EpisodeTrace]


@dataclass(frozen=True)
class CurvePoint:
    policy: str
    budget: int
    mean_score: float
    ci95: float


def _episode_setup(bundle: ExperienceBundle, fold: int, domain):
    train, test = loocv_split(bundle, fold)
    if domain is not None:
        instance = domain.sample_instance(int(test.instance_id))
        oracle = ConstraintOracle(domain, train.constraints, train.sentinel)
    else:
        instance = None
        oracle = TableOracle(np.where(test.feasible, test.scores, train.sentinel), test.feasible)
    optimum_scores = np.where(test.feasible, test.scores, train.sentinel)
    return train, instance, oracle, float(optimum_scores.max())


def run_fold(bundle: ExperienceBundle, fold: int, cfg: BenchConfig, domain, k: int,
             columns: Optional[Sequence[int]] = None, policies: Optional[Sequence[str]] = None) -> FoldResult:
    """One held-out instance, every requested policy.

    ``columns`` restricts the library (used for BOX on a minimal set); the
    prior is then the restriction of the full training prior.
    """
    policies = cfg.policies if policies is None else policies
    seed = fold_seed(cfg.seed, fold)
    train, instance, oracle, optimum = _episode_setup(bundle, fold, domain)
    if columns is not None:
        train = train.select(cols=columns)
        oracle = _SubsetOracle(oracle, columns)
    prior: Optional[GaussianBelief] = None
    if any(p in PRIOR_POLICIES for p in policies):
        prior = estimate_prior(train.scores)
    children = np.random.SeedSequence(seed).spawn(4)
    traces: dict[str, EpisodeTrace] = {}
    kk = min(k, train.m)
    for policy in policies:
        if policy == "box":
            traces[policy] = run_box(instance, oracle, prior, kk, cfg.zeta, children[0])
        elif policy == "static":
            traces[policy] = run_static(instance, oracle, prior, kk)
        elif policy == "rand":
            traces[policy] = run_rand(instance, oracle, train.m, kk, children[1])
        elif policy == "doo":
            traces[policy] = run_doo(instance, oracle, train.constraints, DooParams(cfg.doo_lipschitz), kk,
                                     children[2])
        elif policy == "raw":
            if domain is None:
                continue
            budget = cfg.raw_budget if cfg.raw_budget is not None else kk
            traces[policy] = run_raw(instance, oracle, int(budget), children[3])
    return FoldResult(fold, bundle.scores.instance_ids[fold], seed, optimum, traces)


class _SubsetOracle:
    def __init__(self, inner, columns):
        self.inner = inner
        self.columns = list(columns)

    def evaluate(self, instance, index: int):
        return self.inner.evaluate(instance, self.columns[index])

    def unconstrained_solve(self, instance, rng):
        return self.inner.unconstrained_solve(instance, rng)


def _folds(bundle: ExperienceBundle, cfg: BenchConfig) -> list[int]:
    count = bundle.n if cfg.folds is None else min(cfg.folds, bundle.n)
    return list(range(count))


def _budget(bundle: ExperienceBundle, cfg: BenchConfig) -> int:
    k = bundle.m if cfg.k is None else cfg.k
    if not 1 <= k <= bundle.m:
        raise ConfigError(f"k={k} must be in [1, m={bundle.m}]")
    return k


def run_loocv(bundle: ExperienceBundle, cfg: BenchConfig, columns=None, policies=None) -> list[FoldResult]:
    policies = cfg.policies if policies is None else policies
    if bundle.n - 1 < 2 and any(p in PRIOR_POLICIES for p in policies):
        log.warning("n-1 < 2: skipping policies that need a prior")
        policies = [p for p in policies if p not in PRIOR_POLICIES]
    if bundle.n < 3:
        raise ConfigError("leave-one-out needs n >= 3")
    domain = make_domain(bundle.meta["domain_config"]) if "domain_config" in bundle.meta else None
    k = _budget(bundle, cfg)
    folds = _folds(bundle, cfg)
    job = lambda f: run_fold(bundle, f, cfg, domain, k, columns, policies)  # noqa: E731
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            return list(pool.map(job, folds))
    return [job(f) for f in folds]


def evaluations_to_first(trace: EpisodeTrace, k: int) -> int:
    """Step of the first feasible evaluation, or k + 1 when none was found."""
    first = trace.first_feasible()
    return first.t if first is not None else k + 1


def cost_to_first(trace: EpisodeTrace) -> float:
    """Cumulative cost at the first feasible result; unsolved episodes count their full cost."""
    first = trace.first_feasible()
    return first.cum_cost if first is not None else trace.cumulative_cost


def curves(results: list[FoldResult], k: int) -> list[CurvePoint]:
    policies = list(results[0].traces) if results else []
    points = []
    for p in policies:
        for b in range(1, k + 1):
            vals = [r.traces[p].best_by_budget(b) for r in results]
            points.append(CurvePoint(p, b, float(np.mean(vals)), ci95(vals)))
    opt = [r.optimum for r in results]
    for b in range(1, k + 1):
        points.append(CurvePoint("optimal", b, float(np.mean(opt)), ci95(opt)))
    return points


def first_feasible_table(results: list[FoldResult], k: int) -> list[dict]:
    rows = []
    policies = list(results[0].traces) if results else []
    for p in policies:
        traces = [r.traces[p] for r in results]
        costs = [cost_to_first(t) for t in traces]
        evals = [evaluations_to_first(t, k) for t in traces]
        rows.append({"policy": p, "mean_cost": float(np.mean(costs)), "ci95": ci95(costs),
                     "success_rate": float(np.mean([t.solved for t in traces])),
                     "mean_evaluations": float(np.mean(evals)), "evaluations_ci95": ci95(evals)})
    return rows


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def cmd_loocv(cfg: BenchConfig, bundle: ExperienceBundle, out: Optional[Path] = None) -> dict:
    results = run_loocv(bundle, cfg)
    k = _budget(bundle, cfg)
    pts = curves(results, k)
    table = first_feasible_table(results, k)
    summary = {
        "n": bundle.n, "m": bundle.m, "k": k, "folds": len(results), "seed": cfg.seed,
        "first_feasible": table,
        "optimal_mean_score": float(np.mean([r.optimum for r in results])) if results else None,
        "fold_seeds": [r.seed for r in results],
        "per_fold_evaluations": {p: [evaluations_to_first(r.traces[p], k) for r in results]
                                 for p in (results[0].traces if results else {})},
    }
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "curves.csv").write_text(_csv([["policy", "budget", "mean_score", "ci95"]]
                                             + [[c.policy, c.budget, c.mean_score, c.ci95] for c in pts]))
        (out / "firstfeasible.csv").write_text(_csv([["policy", "mean_cost", "ci95", "success_rate"]]
                                                    + [[r["policy"], r["mean_cost"], r["ci95"], r["success_rate"]]
                                                       for r in table]))
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    summary["curves"] = [asdict(c) for c in pts]
    return summary


# ---------------------------------------------------------------- minset

def cmd_minset(cfg: BenchConfig, bundle: ExperienceBundle, out: Optional[Path] = None) -> dict:
    """BOX on the greedy minimal set versus BOX on the whole library."""
    oms = construct_oms(bundle, params=OmsParams(cfg.oms_lambda))
    L = list(oms.indices)
    k_full = _budget(bundle, cfg)
    k = min(k_full, len(L))
    sub_cfg = BenchConfig(**{**cfg.__dict__, "k": k})
    full = run_loocv(bundle, sub_cfg, policies=["box"])
    small = run_loocv(bundle, sub_cfg, columns=L, policies=["box"])
    full_t = [r.traces["box"] for r in full]
    small_t = [r.traces["box"] for r in small]
    # each belief update touches an (active m) x (active m) covariance
    update_full = sum(len(t.choices) * bundle.m ** 2 for t in full_t)
    update_small = sum(len(t.choices) * len(L) ** 2 for t in small_t)
    succ_full = float(np.mean([t.solved for t in full_t]))
    succ_small = float(np.mean([t.solved for t in small_t]))
    deltas = [cost_to_first(a) - cost_to_first(b) for a, b in zip(small_t, full_t)]
    report = {
        "m": bundle.m, "L_size": len(L), "L_over_m": len(L) / bundle.m, "L": list(oms.constraint_ids),
        "coverage": len(oms.covered) / bundle.n, "n_coverable": oms.n_coverable,
        "update_cost_ratio": update_small / update_full if update_full else 0.0,
        "k": k, "folds": len(full),
        "success_rate_L": succ_small, "success_rate_full": succ_full,
        "first_feasible_cost_L": float(np.mean([cost_to_first(t) for t in small_t])),
        "first_feasible_cost_full": float(np.mean([cost_to_first(t) for t in full_t])),
        "first_feasible_delta_mean": float(np.mean(deltas)), "first_feasible_delta_ci95": ci95(deltas),
    }
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "minset.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


# ---------------------------------------------------------------- regret

def lowrank_prior(m: int, d: int, sigma: float, seed: int) -> GaussianBelief:
    """Prior with covariance Theta Theta^T + sigma^2 I for a random m x d Theta."""
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal((m, d))
    cov = theta @ theta.T + sigma ** 2 * np.eye(m)
    return GaussianBelief.from_moments(np.zeros(m), cov)


def cmd_regret(cfg: BenchConfig, bundle: Optional[ExperienceBundle] = None,
               out: Optional[Path] = None) -> list[ValidationReport]:
    syn = cfg.regret_synthetic
    if syn:
        sigma = float(syn.get("sigma", 0.5))
        prior = lowrank_prior(int(syn.get("m", 12)), int(syn.get("d", 2)), sigma, cfg.seed)
    elif bundle is not None:
        prior = estimate_prior(bundle.scores)
        sigma = None
    else:
        raise ConfigError("regret needs a bundle or a [regret.synthetic] block")
    reports = []
    for i, k in enumerate(cfg.regret_k):
        if not 1 <= k <= prior.m:
            raise ConfigError(f"regret k={k} must be in [1, {prior.m}]")
        if sigma is None:
            params = RegretParams.defaults(prior.covariance, cfg.delta, k)
        else:
            params = RegretParams(cfg.delta, sigma, 1.01 * float(np.max(np.diag(prior.covariance))), k)
        reports.append(monte_carlo_validate(prior, params, cfg.trials, fold_seed(cfg.seed, i)))
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "regret.json").write_text(
            json.dumps([asdict(r) for r in reports], indent=2, sort_keys=True) + "\n")
    return reports
