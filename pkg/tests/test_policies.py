import json
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scorespace.gaussian import GaussianBelief, estimate_prior
from scorespace.golden import BOTTOM, LEFT, ONLY_LEFT, TOP, score_matrix
from scorespace.policies import (DooParams, TableOracle, doo_bounds, run_box, run_doo, run_rand, run_raw, run_static,
                                 static_order, theorem_zeta, ZETA_PRESETS)

from oracles import doo_reference, random_psd

# chi-square 0.1% critical values
CHI2_999 = {3: 16.266, 23: 49.728}


def chi2(counts, expected):
    return sum((c - expected) ** 2 / expected for c in counts)


def check_trace(trace, k):
    idx = [i for i in trace.indices if i is not None]
    assert len(idx) == len(set(idx))
    assert len(trace.choices) <= k
    if trace.choices:
        assert trace.best_score == max(s.score for s in trace.choices)
        assert trace.choices[trace.best_step - 1].score == trace.best_score


# ---- BOX

def test_box_exhaustive_budget_finds_max():
    rng = np.random.default_rng(0)
    D = rng.standard_normal((6, 5))
    J = rng.standard_normal(5)
    trace = run_box(None, TableOracle(J), estimate_prior(D), 5, seed=1)
    assert sorted(trace.indices) == list(range(5))
    assert trace.best_score == J.max()
    check_trace(trace, 5)


def test_box_four_direction_instance_two():
    prior = estimate_prior(score_matrix())
    for seed in range(40):
        trace = run_box(None, TableOracle(ONLY_LEFT), prior, 2, 1.96, seed)
        assert LEFT in trace.indices
        if trace.indices[0] == TOP:
            # right fell to about the infeasible level, bottom rose, left was picked
            assert trace.indices[1] == LEFT
            after = trace.choices[1].ucb
            assert after == pytest.approx(0.5 + 1.96 * math.sqrt(1 / 3), abs=1e-8)


def test_box_tie_break_is_uniform():
    m = 4
    prior = GaussianBelief(np.zeros(m), np.eye(m))
    table = TableOracle(np.zeros(m))
    perms = Counter()
    for seed in range(10_000):
        perms[tuple(run_box(None, table, prior, m, 0.0, seed).indices)] += 1
    assert len(perms) == 24
    assert chi2([perms[p] for p in perms], 10_000 / 24) < CHI2_999[23]
    first = Counter(p[0] for p in perms.elements())
    assert chi2([first[i] for i in range(m)], 10_000 / m) < CHI2_999[3]


def test_box_rejects_bad_budget_and_used_prior():
    prior = GaussianBelief(np.zeros(3), np.eye(3))
    with pytest.raises(ValueError):
        run_box(None, TableOracle(np.zeros(3)), prior, 4)
    from scorespace.gaussian import condition
    with pytest.raises(ValueError):
        run_box(None, TableOracle(np.zeros(3)), condition(prior, 0, 0.0), 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
def test_box_zeta_zero_diagonal_equals_static(m, seed):
    rng = np.random.default_rng(seed)
    mean = rng.permutation(m).astype(float) + rng.uniform(0, 0.5, m)
    prior = GaussianBelief(mean, np.diag(rng.uniform(0.1, 2.0, m)))
    table = TableOracle(rng.standard_normal(m))
    assert run_box(None, table, prior, m, 0.0, seed).indices == run_static(None, table, prior, m).indices


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1), st.floats(-50, 50))
def test_box_shift_invariance(m, seed, shift):
    rng = np.random.default_rng(seed)
    prior = GaussianBelief.from_moments(rng.standard_normal(m), random_psd(rng, m, ridge=0.1))
    J = rng.standard_normal(m)
    a = run_box(None, TableOracle(J), prior, m, 1.96, seed)
    b = run_box(None, TableOracle(J + shift), prior.shifted(shift), m, 1.96, seed)
    assert a.indices == b.indices


def test_box_determinism():
    rng = np.random.default_rng(9)
    prior = GaussianBelief.from_moments(np.zeros(6), random_psd(rng, 6, rank=2))
    J = rng.standard_normal(6)
    a = run_box(None, TableOracle(J), prior, 4, 1.96, 123)
    b = run_box(None, TableOracle(J), prior, 4, 1.96, 123)
    assert a.to_jsonl() == b.to_jsonl()


def test_trace_jsonl_fields():
    prior = estimate_prior(score_matrix())
    trace = run_box(None, TableOracle(ONLY_LEFT), prior, 2, seed=0)
    lines = [json.loads(x) for x in trace.to_jsonl(("top", "left", "bottom", "right")).splitlines()]
    assert [set(x) for x in lines] == [{"t", "constraint_id", "score", "ucb", "cum_cost"}] * 2
    assert [x["cum_cost"] for x in lines] == [1.0, 2.0]


def test_theorem_zeta_preset():
    assert theorem_zeta(0.05) == pytest.approx(math.sqrt(2 * math.log(20)))
    assert ZETA_PRESETS["default"] == 1.96
    with pytest.raises(ValueError):
        theorem_zeta(1.0)


# ---- STATIC

def test_static_orders():
    assert static_order([0.5, 0.5, 0.25, 0.5]) == [0, 1, 3, 2]
    assert static_order([1.0] * 5) == [0, 1, 2, 3, 4]
    prior = GaussianBelief(np.array([0.1, 0.9, 0.3]), np.eye(3))
    assert run_static(None, TableOracle(np.zeros(3)), prior, 1).indices == [1]
    with pytest.raises(ValueError):
        run_static(None, TableOracle(np.zeros(3)), prior, 4)


# ---- RAND

def test_rand_permutation_and_determinism():
    t = run_rand(None, TableOracle(np.zeros(7)), 7, 7, seed=4)
    assert sorted(t.indices) == list(range(7))
    assert run_rand(None, TableOracle(np.zeros(7)), 7, 3, seed=4).indices == t.indices[:3]


def test_rand_first_pick_frequency():
    m, trials = 5, 10_000
    counts = Counter(run_rand(None, TableOracle(np.zeros(m)), m, 1, seed=s).indices[0] for s in range(trials))
    p = 1 / m
    sd = math.sqrt(trials * p * (1 - p))
    for i in range(m):
        assert abs(counts[i] - trials * p) <= 3 * sd


# ---- DOO

def test_doo_bound_arithmetic():
    points = np.array([[0.0], [2.0], [0.5], [10.0]])
    b = doo_bounds(DooParams(1.0), points, [(1, 1.0), (2, 0.0)], [0])
    assert b[0] == pytest.approx(0.5)
    assert np.isneginf(b[1]) and np.isneginf(b[3])


def test_doo_zero_lipschitz_flat_bounds():
    points = np.random.default_rng(0).uniform(size=(6, 2))
    b = doo_bounds(DooParams(0.0), points, [(0, 3.0), (1, -1.0)], [2, 3, 4, 5])
    # min over evaluated points, so the worst observed score
    assert np.all(b[2:] == -1.0)
    firsts = Counter(run_doo(None, TableOracle(np.zeros(6)), points, DooParams(0.0), 3, s).indices[1]
                     for s in range(600))
    assert len(firsts) == 6


def test_doo_initial_bounds_infinite():
    assert np.all(np.isposinf(doo_bounds(DooParams(1.0), np.zeros((3, 1)), [], [0, 1, 2])))


def test_doo_matches_reference_on_line():
    rng = np.random.default_rng(11)
    xs = np.sort(rng.uniform(0, 5, 6))
    points = xs[:, None]
    scores = rng.standard_normal(6)
    for seed in range(10):
        trace = run_doo(None, TableOracle(scores), points, DooParams(1.0), 6, seed)
        ref = doo_reference(points.tolist(), scores.tolist(), 6, 1.0, trace.indices[0])
        assert trace.indices == ref


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.integers(0, 2 ** 32 - 1), st.floats(0.1, 3.0))
def test_doo_bounds_valid_for_lipschitz_scores(m, seed, lam):
    rng = np.random.default_rng(seed)
    points = rng.uniform(0, 1, (m, 2))
    w = rng.standard_normal(2)
    w *= lam / np.linalg.norm(w)
    J = points @ w  # exactly lam-Lipschitz in the Euclidean metric
    trace = run_doo(None, TableOracle(J), points, DooParams(lam), m, seed)
    evaluated = []
    for step in trace.choices:
        untried = [i for i in range(m) if i not in [e[0] for e in evaluated]]
        b = doo_bounds(DooParams(lam), points, evaluated, untried)
        assert all(b[i] >= J[i] - 1e-12 for i in untried)
        evaluated.append((step.index, step.score))


def test_doo_rejects_bad_input():
    with pytest.raises(ValueError):
        run_doo(None, TableOracle(np.zeros(3)), np.zeros(3), DooParams(), 1)
    with pytest.raises(ValueError):
        DooParams(-1.0)


# ---- RAW

def test_raw_all_feasible_first_attempt():
    t = run_raw(None, TableOracle(np.ones(4)), 10, seed=0)
    assert len(t.choices) == 1 and t.solved


def test_raw_geometric_attempts():
    feas = np.zeros(10, bool)
    feas[3] = True
    oracle = TableOracle(np.where(feas, 1.0, -1.0), feas)
    attempts = [len(run_raw(None, oracle, 10_000, seed=s).choices) for s in range(1000)]
    se = math.sqrt(0.9) / 0.1 / math.sqrt(1000)
    assert abs(np.mean(attempts) - 10.0) < 4 * se


def test_raw_zero_budget():
    t = run_raw(None, TableOracle(np.ones(2)), 0)
    assert t.choices == [] and not t.solved


def test_policy_traces_invariants():
    rng = np.random.default_rng(2)
    D = rng.standard_normal((8, 6))
    J = rng.standard_normal(6)
    prior = estimate_prior(D)
    t = TableOracle(J)
    for trace in (run_box(None, t, prior, 4, seed=1), run_static(None, t, prior, 4), run_rand(None, t, 6, 4, 1),
                  run_doo(None, t, rng.uniform(size=(6, 2)), DooParams(), 4, 1), run_raw(None, t, 4, 1)):
        check_trace(trace, 4)


def test_exhaustive_budget_same_best_across_policies():
    rng = np.random.default_rng(3)
    D = rng.standard_normal((8, 5))
    J = rng.standard_normal(5)
    prior = estimate_prior(D)
    t = TableOracle(J)
    bests = {run_box(None, t, prior, 5, seed=2).best_score, run_static(None, t, prior, 5).best_score,
             run_rand(None, t, 5, 5, 2).best_score,
             run_doo(None, t, rng.uniform(size=(5, 1)), DooParams(), 5, 2).best_score}
    assert bests == {J.max()}


def test_box_picks_the_rising_bottom_after_top_and_left_fail():
    prior = estimate_prior(score_matrix())
    only_bottom = np.zeros(4)
    only_bottom[BOTTOM] = 1.0
    trace = run_box(None, TableOracle(only_bottom), prior, 4, 1.96, 0)
    assert BOTTOM in trace.indices[:3]
