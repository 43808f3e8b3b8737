"""Regret of BOX and a Monte-Carlo check of its high-probability bound.

The bound needs an artificial noise level sigma with Sigma - sigma^2 I PSD
and a strict upper bound c on the prior variances.  Scores are modelled as
f ~ N(mu, Sigma - sigma^2 I), J ~ N(f, sigma^2 I), which marginalizes to
J ~ N(mu, Sigma).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .gaussian import GaussianBelief
from .policies import EpisodeTrace, TableOracle, run_box, theorem_zeta

EXACT_RHO_MAX_M = 20
MIN_TRIALS = 100


@dataclass(frozen=True)
class RegretParams:
    delta: float
    sigma: float
    c_bound: float
    k: int

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if self.sigma <= 0 or self.c_bound <= 0:
            raise ValueError("sigma and c must be positive")
        if self.k < 1:
            raise ValueError("k must be positive")

    @property
    def zeta(self) -> float:
        return theorem_zeta(self.delta)

    def validate(self, covariance) -> None:
        """Check Sigma - sigma^2 I is PSD and every variance is strictly below c."""
        cov = np.asarray(covariance, dtype=float)
        shifted = cov - self.sigma ** 2 * np.eye(cov.shape[0])
        lam_min = float(np.linalg.eigvalsh(0.5 * (shifted + shifted.T)).min())
        if lam_min < -1e-10 * max(1.0, float(np.max(np.diag(cov)))):
            raise ValueError(f"Sigma - sigma^2 I is not PSD (min eigenvalue {lam_min:.3g})")
        if not self.c_bound > float(np.max(np.diag(cov))):
            raise ValueError("c must exceed every prior variance")

    @classmethod
    def defaults(cls, covariance, delta: float, k: int) -> "RegretParams":
        """sigma^2 = 0.99 * smallest eigenvalue, c = 1.01 * largest variance."""
        cov = np.asarray(covariance, dtype=float)
        lam_min = float(np.linalg.eigvalsh(cov).min())
        if lam_min <= 0:
            raise ValueError("covariance must be positive definite to choose sigma")
        return cls(delta, math.sqrt(0.99 * lam_min), 1.01 * float(np.max(np.diag(cov))), k)


@dataclass(frozen=True)
class AugmentedSample:
    f: np.ndarray
    J: np.ndarray


def sample_augmented(mean, covariance, sigma: float, rng: np.random.Generator,
                     size: Optional[int] = None):
    """Draw latent f then noisy J; with ``size`` returns stacked arrays (f, J)."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(covariance, dtype=float)
    latent_cov = cov - sigma ** 2 * np.eye(mean.size)
    f = rng.multivariate_normal(mean, latent_cov, size=size, method="eigh")
    J = f + sigma * rng.standard_normal(f.shape)
    if size is None:
        return AugmentedSample(f, J)
    return f, J


def regret(true_scores, trace: EpisodeTrace) -> float:
    """Best score in the library minus best score found by the episode."""
    true_scores = np.asarray(true_scores, dtype=float)
    found = [true_scores[s.index] for s in trace.choices]
    if not found:
        raise ValueError("trace has no evaluations")
    return float(true_scores.max() - max(found))


def _half_logdet_ratio(cov: np.ndarray, A: Sequence[int], sigma: float) -> float:
    sub = cov[np.ix_(A, A)] / sigma ** 2
    sign, logdet = np.linalg.slogdet(sub)
    if sign <= 0:
        return -math.inf
    return 0.5 * float(logdet)


def rho_k(covariance, sigma: float, k: int, mode: str = "exact") -> float:
    """Maximum of 0.5 * log det(Sigma_A / sigma^2) over |A| = k."""
    cov = np.asarray(covariance, dtype=float)
    m = cov.shape[0]
    if not 1 <= k <= m:
        raise ValueError("k must be in [1, m]")
    if mode == "exact":
        if m > EXACT_RHO_MAX_M:
            raise ValueError(f"exact rho_k limited to m <= {EXACT_RHO_MAX_M}")
        return max(_half_logdet_ratio(cov, A, sigma) for A in itertools.combinations(range(m), k))
    if mode == "greedy":
        chosen: list[int] = []
        for _ in range(k):
            rest = [i for i in range(m) if i not in chosen]
            vals = [_half_logdet_ratio(cov, chosen + [i], sigma) for i in rest]
            chosen.append(rest[int(np.argmax(vals))])
        return _half_logdet_ratio(cov, chosen, sigma)
    raise ValueError(f"unknown mode {mode!r}")


def theorem1_bound(params: RegretParams, rho: float) -> float:
    """Regret bound that holds with probability at least 1 - delta."""
    s2 = params.sigma ** 2
    c = params.c_bound
    inner = 2.0 * (c - s2) * rho / (params.k * math.log(c / s2)) + s2
    return 2.0 * math.sqrt(2.0 * math.log(1.0 / params.delta) * inner)


def mutual_info_sequential(pivots: Sequence[float], sigma: float) -> float:
    """0.5 * sum_t log(pivot_t / sigma^2) over the recorded conditioning pivots."""
    return 0.5 * float(sum(math.log(v / sigma ** 2) for v in pivots))


def bernoulli_corollary_check(x: float, a: float, c: float) -> bool:
    if not (0.0 <= x <= c and a > 0.0):
        raise ValueError("need 0 <= x <= c and a > 0")
    rhs = c * math.log1p(a * x / c) / math.log1p(a)
    return x <= rhs * (1 + 1e-12) + 1e-15


def gaussian_tail_frequency(delta0: float, samples: int, rng: np.random.Generator,
                            mu: float = 0.0, sigma: float = 1.0) -> float:
    """Fraction of N(mu, sigma^2) draws within zeta0 * sigma of the mean."""
    zeta0 = theorem_zeta(delta0)
    x = rng.normal(mu, sigma, size=samples)
    return float(np.mean(np.abs(x - mu) <= zeta0 * sigma))


@dataclass
class ValidationReport:
    delta: float
    sigma: float
    c: float
    k: int
    trials: int
    violations: int
    violation_rate: float
    mean_regret: float
    mean_bound: float
    rho_mode: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def monte_carlo_validate(prior: GaussianBelief, params: RegretParams, trials: int,
                         seed: int = 0) -> ValidationReport:
    """Sample score vectors from the prior, run BOX, and count bound violations."""
    if trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials")
    params.validate(prior.covariance)
    m = prior.m
    mode = "exact" if m <= EXACT_RHO_MAX_M else "greedy"
    bound = theorem1_bound(params, rho_k(prior.covariance, params.sigma, params.k, mode))
    children = np.random.SeedSequence(seed).spawn(trials)
    regrets = np.empty(trials)
    for t, child in enumerate(children):
        rng = np.random.default_rng(child)
        J = sample_augmented(prior.mean, prior.covariance, params.sigma, rng).J
        trace = run_box(None, TableOracle(J), prior, params.k, params.zeta, rng)
        regrets[t] = regret(J, trace)
    violations = int(np.sum(regrets > bound))
    return ValidationReport(params.delta, params.sigma, params.c_bound, params.k, trials, violations,
                            violations / trials, float(regrets.mean()), bound, mode)
