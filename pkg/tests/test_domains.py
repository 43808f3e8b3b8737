import json
import math

import numpy as np
import pytest

from scorespace.domains import (GridDomain, GridParams, GridPickInstance, NavDomain, NavInstance, NavParams,
                                approach_offsets, correlation_audit, grid_plan, load_config, make_domain, nav_plan,
                                sample_grid_instance, sample_nav_instance, shortest_path)
from scorespace.domains.nav import segment_hits, in_collision
from scorespace.experience import generate_training_data, mean_abs_correlation
from scorespace.gaussian import estimate_prior

from oracles import discretized_path_length, flood_reachable


# ---- grid

def test_approach_offsets():
    assert len(approach_offsets(4)) == 4
    assert len(approach_offsets(8)) == 8
    assert len(approach_offsets(24)) == 24
    with pytest.raises(ValueError):
        approach_offsets(10)


def test_zero_density_is_empty():
    inst = sample_grid_instance(GridParams(density=0.0), 3)
    assert not inst.grid.any()


def test_grid_sampling_deterministic_and_exact_density():
    p = GridParams(width=20, height=20, density=0.3)
    a, b = sample_grid_instance(p, 11), sample_grid_instance(p, 11)
    assert np.array_equal(a.grid, b.grid) and a.target == b.target
    fractions = [sample_grid_instance(p, s).grid.mean() for s in range(1000)]
    sd = math.sqrt(0.3 * 0.7 / 400)
    assert all(abs(f - 0.3) <= 3 * sd for f in fractions)


def _blank(w=7, h=7):
    return np.zeros((h, w), bool)


def test_surrounded_target_infeasible_everywhere():
    g = _blank()
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if (dx, dy) != (0, 0):
                g[3 + dy, 3 + dx] = True
    inst = GridPickInstance(g, (3, 3), (0, 0))
    assert not any(grid_plan(inst, o).feasible for o in approach_offsets(8))


def test_start_on_approach_cell_scores_zero():
    inst = GridPickInstance(_blank(), (3, 3), (3, 4))
    r = grid_plan(inst, (0, 1))
    assert r.feasible and r.score == 0.0


def test_corridor_open_from_below():
    g = _blank()
    g[2:5, 2] = True   # left wall
    g[2:5, 4] = True   # right wall
    g[4, 3] = True     # top cap
    inst = GridPickInstance(g, (3, 3), (0, 0))
    feasible = {name: grid_plan(inst, o).feasible
                for name, o in zip(("top", "left", "bottom", "right"), approach_offsets(4))}
    assert feasible == {"top": False, "left": False, "bottom": True, "right": False}
    reach = flood_reachable(g.tolist(), inst.robot_start, [inst.target])
    for name, o in zip(("top", "left", "bottom", "right"), approach_offsets(4)):
        cell = (3 + o[0], 3 + o[1])
        assert feasible[name] == (cell in reach)


def test_grid_plans_are_sound():
    dom = GridDomain(GridParams(width=12, height=12, density=0.25))
    for seed in range(30):
        inst = dom.sample_instance(seed)
        for o in approach_offsets(8):
            r = grid_plan(inst, o)
            if not r.feasible:
                continue
            path = r.plan
            assert path[0] == inst.robot_start
            assert path[-1] == (inst.target[0] + o[0], inst.target[1] + o[1])
            for a, b in zip(path, path[1:]):
                assert abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1
            assert not any(inst.occupied(c) for c in path)
            assert r.score == -(len(path) - 1)


def test_grid_raw_consistency():
    dom = GridDomain(GridParams(width=12, height=12, density=0.25))
    rng = np.random.default_rng(0)
    for seed in range(30):
        inst = dom.sample_instance(seed)
        r = dom.solve_unconstrained(inst, rng)
        if r.feasible:
            again = dom.solve_constrained(inst, r.constraint)
            assert again.feasible and again.score == r.score


def test_grid_instance_json_round_trip():
    inst = sample_grid_instance(GridParams(width=9, height=7, density=0.3), 2)
    back = GridPickInstance.from_json(inst.to_json())
    assert np.array_equal(back.grid, inst.grid)
    assert (back.target, back.robot_start, back.seed) == (inst.target, inst.robot_start, inst.seed)


# ---- nav

def test_nav_straight_line():
    inst = NavInstance((), (0.5, 0.5), (0.1, 0.1))
    r = nav_plan(inst, (0.5 + 0.075, 0.5, math.pi))
    assert r.feasible
    assert r.score == pytest.approx(-math.dist((0.1, 0.1), (0.575, 0.5)))


def test_nav_infeasible_cases():
    inst = NavInstance(((0.6, 0.45, 0.7, 0.55),), (0.5, 0.5), (0.1, 0.1))
    assert not nav_plan(inst, (0.62, 0.5, math.pi)).feasible      # inside obstacle
    assert not nav_plan(inst, (0.5, 0.9, -math.pi / 2)).feasible  # out of reach
    assert not nav_plan(inst, (0.4, 0.5, math.pi)).feasible       # facing away


def test_nav_wall_with_gap_matches_discretized_oracle():
    wall = ((0.48, 0.0, 0.52, 0.6), (0.48, 0.7, 0.52, 1.0))
    start, goal = (0.2, 0.2), (0.8, 0.2)
    path, _ = shortest_path(wall, start, goal)
    length = sum(math.dist(a, b) for a, b in zip(path, path[1:]))
    assert length > math.dist(start, goal)
    ref = discretized_path_length(wall, start, goal)
    assert abs(length - ref) / ref < 0.02
    for a, b in zip(path, path[1:]):
        assert not any(segment_hits(a, b, r) for r in wall)


def test_nav_plans_are_sound_and_raw_consistent():
    dom = NavDomain(NavParams())
    rng = np.random.default_rng(1)
    for seed in range(20):
        inst = dom.sample_instance(seed)
        r = nav_plan(inst, None, 200, rng)
        if not r.feasible:
            continue
        assert r.plan[0] == inst.start
        assert r.plan[-1] == pytest.approx(r.constraint[:2])
        for a, b in zip(r.plan, r.plan[1:]):
            assert not any(segment_hits(a, b, o) for o in inst.obstacles)
        assert dom.solve_constrained(inst, r.constraint).feasible


def test_nav_instance_invariants_and_json():
    inst = sample_nav_instance(NavParams(), 5)
    assert not in_collision(inst.obstacles, inst.target) and not in_collision(inst.obstacles, inst.start)
    assert NavInstance.from_json(inst.to_json()) == inst
    with pytest.raises(ValueError):
        NavInstance(((0.0, 0.0, 1.0, 1.0),), (0.5, 0.5), (0.2, 0.2))


# ---- config and audit

def test_load_config_toml_and_json_agree(tmp_path):
    (tmp_path / "c.toml").write_text('domain = "grid"\nwidth = 12\nheight = 9\ndensity = 0.2\nn_directions = 8\n')
    (tmp_path / "c.json").write_text(json.dumps({"domain": "grid", "width": 12, "height": 9, "density": 0.2,
                                                 "n_directions": 8}))
    a = load_config(tmp_path / "c.toml")
    assert a == load_config(tmp_path / "c.json")
    assert make_domain(a).params == GridParams(width=12, height=9, density=0.2, n_directions=8)
    assert isinstance(make_domain({"domain": "nav", "reach": 0.2}), NavDomain)
    with pytest.raises(ValueError):
        make_domain({"domain": "maze"})


def test_independent_coins_near_zero_correlation():
    D = np.random.default_rng(0).integers(0, 2, (4000, 6)).astype(float)
    assert mean_abs_correlation(estimate_prior(D).covariance) < 0.05


def test_duplicate_columns_correlation_one():
    x = np.random.default_rng(1).standard_normal(50)
    assert mean_abs_correlation(estimate_prior(np.column_stack([x, x])).covariance) == pytest.approx(1.0, abs=1e-6)


def test_clustered_grid_same_side_beats_opposite_side():
    dom = make_domain({"domain": "grid", "density": 0.1, "occluders": 3, "side_weights": [0.35, 0.3, 0.05, 0.3],
                       "start_radius": 3, "n_directions": 8})
    audit = correlation_audit(generate_training_data(dom, 200, 1, seed=1))
    assert audit["same_side_mean_correlation"] > audit["opposite_side_mean_correlation"]
    assert audit["same_side_mean_abs_correlation"] > 0.2
