"""Discrete pick domain: reach a target cell from one of a fixed set of approach cells.

The robot moves 4-connected on an occupancy grid.  A constraint fixes the
approach offset (dx, dy) relative to the target; the plan is a shortest
path from the start to the approach cell.  Coordinates are (x, y) with y
pointing up, so "top" is (0, +1).
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..policies import PlanResult

FOUR_DIRECTIONS = {"top": (0, 1), "left": (-1, 0), "bottom": (0, -1), "right": (1, 0)}


def approach_offsets(n_directions: int) -> list[tuple[int, int]]:
    """Approach offsets for 4 directions or a full square ring of radius R.

    Valid counts are 4 and (2R+1)^2 - 1, i.e. 8, 24, 48, 80, ...
    """
    if n_directions == 4:
        return list(FOUR_DIRECTIONS.values())
    radius = (math.isqrt(n_directions + 1) - 1) // 2
    if radius < 1 or (2 * radius + 1) ** 2 - 1 != n_directions:
        raise ValueError(f"n_directions must be 4 or (2R+1)^2-1, got {n_directions}")
    offsets = [(dx, dy) for dx in range(-radius, radius + 1) for dy in range(-radius, radius + 1)
               if (dx, dy) != (0, 0)]
    offsets.sort(key=lambda o: (max(abs(o[0]), abs(o[1])), math.atan2(o[1], o[0]) % (2 * math.pi)))
    return offsets


def offset_name(offset: Sequence[float]) -> str:
    dx, dy = int(offset[0]), int(offset[1])
    for name, o in FOUR_DIRECTIONS.items():
        if o == (dx, dy):
            return name
    return f"dx{dx:+d}_dy{dy:+d}"


@dataclass(frozen=True)
class GridParams:
    width: int = 20
    height: int = 20
    density: float = 0.3
    n_directions: int = 8
    max_cluster: int = 5
    raw_budget: int = 50
    start_radius: Optional[int] = None
    occluders: int = 0
    side_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    occluder_span: int = 0

    def __post_init__(self):
        if not 0.0 <= self.density < 1.0:
            raise ValueError("obstacle density must be in [0, 1)")
        if self.width < 2 or self.height < 2:
            raise ValueError("grid must be at least 2x2")
        approach_offsets(self.n_directions)


@dataclass(frozen=True)
class GridPickInstance:
    grid: np.ndarray  # bool, indexed [y, x]; True = occupied
    target: tuple[int, int]
    robot_start: tuple[int, int]
    seed: int = 0

    def __post_init__(self):
        grid = np.array(self.grid, dtype=bool)
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "target", tuple(int(v) for v in self.target))
        object.__setattr__(self, "robot_start", tuple(int(v) for v in self.robot_start))
        if self.occupied(self.target) or self.occupied(self.robot_start):
            raise ValueError("target and start must be free cells")

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    def inside(self, cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def occupied(self, cell) -> bool:
        return bool(self.grid[cell[1], cell[0]])

    def to_json(self) -> str:
        flat = self.grid.ravel().astype(int).tolist()
        runs: list[int] = []
        current, count = 0, 0
        for v in flat:
            if v == current:
                count += 1
            else:
                runs.append(count)
                current, count = v, 1
        runs.append(count)
        return json.dumps({"width": self.width, "height": self.height, "rle": runs,
                           "target": list(self.target), "start": list(self.robot_start), "seed": self.seed})

    @classmethod
    def from_json(cls, text: str) -> "GridPickInstance":
        obj = json.loads(text)
        flat: list[int] = []
        value = 0
        for run in obj["rle"]:
            flat.extend([value] * run)
            value ^= 1
        grid = np.array(flat, dtype=bool).reshape(obj["height"], obj["width"])
        return cls(grid, tuple(obj["target"]), tuple(obj["start"]), obj["seed"])


def sample_grid_instance(params: GridParams, seed: int) -> GridPickInstance:
    """Random target/start and rectangular obstacle clusters up to the requested density."""
    rng = np.random.default_rng(seed)
    W, H = params.width, params.height
    t = int(rng.integers(W * H))
    target = (t % W, t // W)
    if params.start_radius is None:
        pool = [c for c in range(W * H) if c != t]
    else:
        r = params.start_radius
        pool = [y * W + x for y in range(max(0, target[1] - r), min(H, target[1] + r + 1))
                for x in range(max(0, target[0] - r), min(W, target[0] + r + 1)) if (x, y) != target]
    s = int(pool[int(rng.integers(len(pool)))])
    start = (s % W, s // W)
    grid = np.zeros((H, W), dtype=bool)
    goal = min(int(round(params.density * W * H)), W * H - 2)
    count = 0

    def fill(x0, y0, x1, y1):
        nonlocal count
        for y in range(max(0, y0), min(H, y1 + 1)):
            for x in range(max(0, x0), min(W, x1 + 1)):
                if count == goal:
                    return
                if grid[y, x] or (x, y) == target or (x, y) == start:
                    continue
                grid[y, x] = True
                count += 1

    # clutter hugging one side of the target, so approach cells on that side fail together
    weights = np.asarray(params.side_weights, dtype=float)
    tx, ty = target
    for _ in range(params.occluders):
        side = int(rng.choice(4, p=weights / weights.sum()))
        lo = -params.occluder_span - int(rng.integers(0, 3 - params.occluder_span))
        hi = params.occluder_span + int(rng.integers(0, 3 - params.occluder_span))
        depth = int(rng.integers(1, 3))
        if side == 0:
            fill(tx + lo, ty + 1, tx + hi, ty + depth)
        elif side == 1:
            fill(tx - depth, ty + lo, tx - 1, ty + hi)
        elif side == 2:
            fill(tx + lo, ty - depth, tx + hi, ty - 1)
        else:
            fill(tx + 1, ty + lo, tx + depth, ty + hi)
    while count < goal:
        w = int(rng.integers(1, params.max_cluster + 1))
        h = int(rng.integers(1, params.max_cluster + 1))
        x0 = int(rng.integers(0, W - w + 1))
        y0 = int(rng.integers(0, H - h + 1))
        fill(x0, y0, x0 + w - 1, y0 + h - 1)
    return GridPickInstance(grid, target, start, int(seed))


def _line_cells(a, b) -> list[tuple[int, int]]:
    """Cells strictly between a and b on a Bresenham line."""
    (x0, y0), (x1, y1) = a, b
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx, sy = (1 if x0 < x1 else -1), (1 if y0 < y1 else -1)
    err = dx + dy
    out = []
    x, y = x0, y0
    while (x, y) != (x1, y1):
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
        if (x, y) != (x1, y1):
            out.append((x, y))
    return out


def bfs_path(instance: GridPickInstance, goal) -> tuple[Optional[list[tuple[int, int]]], int]:
    """Shortest 4-connected path start -> goal avoiding obstacles and the target cell.

    Returns ``(path or None, expanded node count)``.
    """
    start = instance.robot_start
    blocked = instance.grid.copy()
    blocked[instance.target[1], instance.target[0]] = True
    parent = {start: None}
    queue = deque([start])
    expanded = 0
    while queue:
        cell = queue.popleft()
        expanded += 1
        if cell == goal:
            path = []
            while cell is not None:
                path.append(cell)
                cell = parent[cell]
            return path[::-1], expanded
        x, y = cell
        for nxt in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if nxt in parent or not instance.inside(nxt) or blocked[nxt[1], nxt[0]]:
                continue
            parent[nxt] = cell
            queue.append(nxt)
    return None, expanded


def grid_plan(instance: GridPickInstance, offset: Optional[Sequence[int]] = None,
              rng: Optional[np.random.Generator] = None, n_directions: int = 8) -> PlanResult:
    """Plan to the approach cell ``target + offset``.

    Without an offset (raw planner) one is drawn uniformly from the
    ``n_directions`` approach offsets.  Infeasible results have ``score = nan``.
    """
    if offset is None:
        rng = rng if rng is not None else np.random.default_rng()
        choices = approach_offsets(n_directions)
        offset = choices[int(rng.integers(len(choices)))]
    dx, dy = int(round(offset[0])), int(round(offset[1]))
    tx, ty = instance.target
    goal = (tx + dx, ty + dy)
    area = instance.width * instance.height
    constraint = (float(dx), float(dy))
    if not instance.inside(goal) or instance.occupied(goal):
        return PlanResult(math.nan, False, None, 1.0, constraint)
    if any(instance.occupied(c) for c in _line_cells(goal, instance.target)):
        return PlanResult(math.nan, False, None, 1.0, constraint)
    path, expanded = bfs_path(instance, goal)
    cost = 1.0 + expanded / area
    if path is None:
        return PlanResult(math.nan, False, None, cost, constraint)
    return PlanResult(-float(len(path) - 1), True, path, cost, constraint)


@dataclass
class GridDomain:
    params: GridParams = field(default_factory=GridParams)
    name: str = "grid"
    param_dim: int = 2

    @property
    def raw_budget(self) -> int:
        return self.params.raw_budget

    def sample_instance(self, seed: int) -> GridPickInstance:
        return sample_grid_instance(self.params, seed)

    def solve_constrained(self, instance, params) -> PlanResult:
        return grid_plan(instance, params)

    def solve_unconstrained(self, instance, rng) -> PlanResult:
        return grid_plan(instance, None, rng, self.params.n_directions)

    def constraint_id(self, params) -> str:
        return offset_name(params)

    def config(self) -> dict:
        p = self.params
        return {"domain": self.name, "width": p.width, "height": p.height, "density": p.density,
                "n_directions": p.n_directions, "max_cluster": p.max_cluster, "raw_budget": p.raw_budget,
                "start_radius": p.start_radius, "occluders": p.occluders,
                "side_weights": list(p.side_weights), "occluder_span": p.occluder_span}
