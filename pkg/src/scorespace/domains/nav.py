"""Continuous navigation domain on the unit square.

A constraint is an approach pose (x, y, psi): a point near the target and a
heading.  It is feasible when the point is collision free, within reach of
the target, faces the target within the angular tolerance, and a
collision-free path from the start exists.  Paths come from a visibility
graph over obstacle corners, so they are exact shortest paths.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..policies import PlanResult

CORNER_EPS = 1e-7


@dataclass(frozen=True)
class NavParams:
    n_obstacles: int = 5
    min_side: float = 0.05
    max_side: float = 0.3
    reach: float = 0.15
    angle_tol: float = math.pi / 4
    target_box: tuple[float, float, float, float] = (0.35, 0.35, 0.65, 0.65)
    raw_budget: int = 200


@dataclass(frozen=True)
class NavInstance:
    obstacles: tuple[tuple[float, float, float, float], ...]  # (x0, y0, x1, y1)
    target: tuple[float, float]
    start: tuple[float, float]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(tuple(float(v) for v in r) for r in self.obstacles))
        object.__setattr__(self, "target", tuple(float(v) for v in self.target))
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        if in_collision(self.obstacles, self.target) or in_collision(self.obstacles, self.start):
            raise ValueError("target and start must lie outside obstacles")

    def to_json(self) -> str:
        return json.dumps({"obstacles": [list(r) for r in self.obstacles], "target": list(self.target),
                           "start": list(self.start), "seed": self.seed})

    @classmethod
    def from_json(cls, text: str) -> "NavInstance":
        obj = json.loads(text)
        return cls(tuple(tuple(r) for r in obj["obstacles"]), tuple(obj["target"]), tuple(obj["start"]),
                   obj["seed"])


def in_collision(obstacles, point) -> bool:
    x, y = point
    return any(x0 <= x <= x1 and y0 <= y <= y1 for x0, y0, x1, y1 in obstacles)


def segment_hits(p, q, rect) -> bool:
    """True when segment pq passes through the open interior of ``rect`` (Liang-Barsky)."""
    x0, y0, x1, y1 = rect
    dx, dy = q[0] - p[0], q[1] - p[1]
    t0, t1 = 0.0, 1.0
    for d, lo, hi, s in ((dx, x0, x1, p[0]), (dy, y0, y1, p[1])):
        if d == 0.0:
            if not lo < s < hi:
                return False
            continue
        a, b = (lo - s) / d, (hi - s) / d
        if a > b:
            a, b = b, a
        t0, t1 = max(t0, a), min(t1, b)
        if t0 >= t1:
            return False
    return t1 - t0 > 1e-12


def visible(obstacles, p, q) -> bool:
    return not any(segment_hits(p, q, r) for r in obstacles)


def shortest_path(obstacles, start, goal) -> tuple[Optional[list[tuple[float, float]]], int]:
    """Visibility-graph shortest path inside the unit square; returns (path, node count)."""
    nodes = [tuple(start), tuple(goal)]
    for x0, y0, x1, y1 in obstacles:
        for cx, cy in ((x0 - CORNER_EPS, y0 - CORNER_EPS), (x1 + CORNER_EPS, y0 - CORNER_EPS),
                       (x1 + CORNER_EPS, y1 + CORNER_EPS), (x0 - CORNER_EPS, y1 + CORNER_EPS)):
            if 0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0 and not in_collision(obstacles, (cx, cy)):
                nodes.append((cx, cy))
    dist = {0: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, 0)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == 1:
            path = [nodes[1]]
            while u != 0:
                u = prev[u]
                path.append(nodes[u])
            return path[::-1], len(nodes)
        for v in range(len(nodes)):
            if v in done or v == u:
                continue
            if not visible(obstacles, nodes[u], nodes[v]):
                continue
            nd = d + math.dist(nodes[u], nodes[v])
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    return None, len(nodes)


def _angle_gap(a: float, b: float) -> float:
    return abs((a - b + math.pi) % (2 * math.pi) - math.pi)


def sample_nav_instance(params: NavParams, seed: int) -> NavInstance:
    rng = np.random.default_rng(seed)
    obstacles = []
    for _ in range(params.n_obstacles):
        w, h = rng.uniform(params.min_side, params.max_side, size=2)
        x0 = rng.uniform(0.0, 1.0 - w)
        y0 = rng.uniform(0.0, 1.0 - h)
        obstacles.append((float(x0), float(y0), float(x0 + w), float(y0 + h)))
    bx0, by0, bx1, by1 = params.target_box
    while True:
        target = (float(rng.uniform(bx0, bx1)), float(rng.uniform(by0, by1)))
        if not in_collision(obstacles, target):
            break
        obstacles.pop(int(rng.integers(len(obstacles))))
    while True:
        start = (float(rng.uniform(0, 1)), float(rng.uniform(0, 1)))
        if not in_collision(obstacles, start):
            break
    return NavInstance(tuple(obstacles), target, start, int(seed))


def nav_plan(instance: NavInstance, constraint: Optional[Sequence[float]] = None, budget: int = 1,
             rng: Optional[np.random.Generator] = None, params: NavParams = NavParams()) -> PlanResult:
    """Plan to an approach pose; without a pose, rejection-sample up to ``budget`` poses.

    Infeasible results have ``score = nan``.  ``cost_units`` accumulate over
    raw attempts.
    """
    if constraint is None:
        rng = rng if rng is not None else np.random.default_rng()
        total = 0.0
        result = PlanResult(math.nan, False, None, 0.0, None)
        for _ in range(budget):
            radius = params.reach * math.sqrt(rng.uniform())
            phi = rng.uniform(-math.pi, math.pi)
            psi = rng.uniform(-math.pi, math.pi)
            pose = (instance.target[0] + radius * math.cos(phi), instance.target[1] + radius * math.sin(phi), psi)
            result = nav_plan(instance, pose, params=params)
            total += result.cost_units
            if result.feasible:
                break
        return PlanResult(result.score, result.feasible, result.plan, total, result.constraint)

    x, y, psi = (float(v) for v in constraint)
    pose = (x, y, psi)
    tx, ty = instance.target
    reject = PlanResult(math.nan, False, None, 0.1, pose)
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0) or in_collision(instance.obstacles, (x, y)):
        return reject
    if math.hypot(tx - x, ty - y) > params.reach:
        return reject
    if (x, y) != (tx, ty) and _angle_gap(psi, math.atan2(ty - y, tx - x)) > params.angle_tol:
        return reject
    path, n_nodes = shortest_path(instance.obstacles, instance.start, (x, y))
    cost = 1.0 + 0.05 * n_nodes
    if path is None:
        return PlanResult(math.nan, False, None, cost, pose)
    length = sum(math.dist(a, b) for a, b in zip(path, path[1:]))
    return PlanResult(-length, True, path, cost, pose)


@dataclass
class NavDomain:
    params: NavParams = field(default_factory=NavParams)
    name: str = "nav"
    param_dim: int = 3

    @property
    def raw_budget(self) -> int:
        return self.params.raw_budget

    def sample_instance(self, seed: int) -> NavInstance:
        return sample_nav_instance(self.params, seed)

    def solve_constrained(self, instance, params) -> PlanResult:
        return nav_plan(instance, params, params=self.params)

    def solve_unconstrained(self, instance, rng) -> PlanResult:
        return nav_plan(instance, None, 1, rng, self.params)

    def constraint_id(self, params) -> str:
        return "pose_{:.6f}_{:.6f}_{:.6f}".format(*params)

    def config(self) -> dict:
        p = self.params
        return {"domain": self.name, "n_obstacles": p.n_obstacles, "min_side": p.min_side, "max_side": p.max_side,
                "reach": p.reach, "angle_tol": p.angle_tol, "target_box": list(p.target_box),
                "raw_budget": p.raw_budget}
