"""Synthetic planning domains and domain configuration loading."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from ..experience import ExperienceBundle, mean_abs_correlation
from ..gaussian import estimate_prior
from .grid import (GridDomain, GridParams, GridPickInstance, approach_offsets, bfs_path, grid_plan,
                   sample_grid_instance)
from .nav import NavDomain, NavInstance, NavParams, nav_plan, sample_nav_instance, shortest_path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "GridDomain", "GridParams", "GridPickInstance", "NavDomain", "NavInstance", "NavParams",
    "approach_offsets", "bfs_path", "correlation_audit", "grid_plan", "load_config", "make_domain",
    "nav_plan", "sample_grid_instance", "sample_nav_instance", "shortest_path",
]


def load_config(path) -> dict:
    """Read a TOML or JSON config file (same keys either way)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    return tomllib.loads(text)


def make_domain(cfg: dict):
    """Build a domain from a flat config block with a ``domain`` key."""
    kind = cfg.get("domain", "grid")
    if kind == "grid":
        keys = ("width", "height", "density", "n_directions", "max_cluster", "raw_budget", "start_radius", "occluders",
                "occluder_span")
        kwargs = {k: cfg[k] for k in keys if k in cfg}
        if "side_weights" in cfg:
            kwargs["side_weights"] = tuple(cfg["side_weights"])
        return GridDomain(GridParams(**kwargs))
    if kind == "nav":
        keys = ("n_obstacles", "min_side", "max_side", "reach", "angle_tol", "raw_budget")
        kwargs = {k: cfg[k] for k in keys if k in cfg}
        if "target_box" in cfg:
            kwargs["target_box"] = tuple(cfg["target_box"])
        return NavDomain(NavParams(**kwargs))
    raise ValueError(f"unknown domain {kind!r}")


def _corr(covariance: np.ndarray) -> np.ndarray:
    sd = np.sqrt(np.maximum(np.diag(covariance), 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = covariance / np.outer(sd, sd)
    return np.nan_to_num(corr)


def correlation_audit(bundle: ExperienceBundle) -> dict:
    """Correlation structure of a bundle's prior covariance.

    For grid bundles also splits pairs of approach offsets into same-side
    (positive dot product) and opposite-side (negative dot product).
    """
    cov = estimate_prior(bundle.scores).covariance
    corr = _corr(cov)
    m = corr.shape[0]
    report = {"m": m, "mean_abs_correlation": mean_abs_correlation(cov)}
    if bundle.meta.get("domain") == "grid" and bundle.constraints.d == 2:
        P = bundle.constraints.params
        same, opposite = [], []
        for i in range(m):
            for j in range(i + 1, m):
                dot = float(P[i] @ P[j])
                if dot > 0:
                    same.append(corr[i, j])
                elif dot < 0:
                    opposite.append(corr[i, j])
        report["same_side_mean_correlation"] = float(np.mean(same)) if same else None
        report["same_side_mean_abs_correlation"] = float(np.mean(np.abs(same))) if same else None
        report["opposite_side_mean_correlation"] = float(np.mean(opposite)) if opposite else None
    return report
