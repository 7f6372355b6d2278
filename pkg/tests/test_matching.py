import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from radgraphgen.graph import make_graph
from radgraphgen.matching import MatchError, hungarian_match, match_cost, solve_assignment


def brute_force(cost: np.ndarray) -> float:
    """Minimum over all injective row choices, summed in column order."""
    n_rows, n_cols = cost.shape
    best = np.inf
    for rows in itertools.permutations(range(n_rows), n_cols):
        total = float(sum(cost[r, c] for c, r in enumerate(rows)))
        best = min(best, total)
    return best


def test_two_by_two_example():
    m = solve_assignment(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert m.assignment == ((0, 0), (1, 1))
    assert m.total_cost == 2.0


def test_zero_diagonal_gives_identity():
    cost = np.ones((5, 5)) - np.eye(5)
    m = solve_assignment(cost)
    assert m.assignment == tuple((i, i) for i in range(5))
    assert m.total_cost == 0.0


@pytest.mark.parametrize("size", range(2, 8))
def test_square_matches_brute_force(size):
    rng = np.random.default_rng(size)
    for _ in range(100):
        cost = rng.random((size, size))
        assert solve_assignment(cost).total_cost == brute_force(cost)


@given(st.integers(1, 4), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_rectangular_matches_brute_force(cols, extra, seed):
    cost = np.random.default_rng(seed).normal(size=(cols + extra, cols))
    m = solve_assignment(cost)
    assert m.total_cost == brute_force(cost)
    assert sorted(g for _, g in m.assignment) == list(range(cols))
    assert len({t for t, _ in m.assignment}) == cols


def test_cost_definition():
    gt = make_graph([(1, "uncertain"), (0, "definitely_present")])
    cp = np.array([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3]])
    up = np.array([[0.1, 0.7, 0.2], [0.8, 0.1, 0.1]])
    np.testing.assert_array_equal(match_cost(cp, up, gt), [[-0.5 - 0.7, -0.2 - 0.1], [-0.1 - 0.1, -0.6 - 0.8]])
    m = hungarian_match(cp, up, gt)
    assert m.token_for_entity() == {0: 0, 1: 1}


def test_empty_gt_and_too_many_entities():
    cp, up = np.full((2, 3), 1 / 3), np.full((2, 3), 1 / 3)
    assert hungarian_match(cp, up, make_graph([])).assignment == ()
    with pytest.raises(MatchError):
        hungarian_match(cp, up, make_graph([(0, "uncertain")] * 3))
