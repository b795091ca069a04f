from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rieszrpo.depgraph import (
    DependencyGraph,
    InterferenceGraph,
    blocks_from_rate,
    depgraph_from_blocks,
    diagonal_pairs,
    expected_inverse_neighbourhood,
    graph_stats,
    partition_from_sizes,
    read_edge_list,
    sample_blockwise_er,
    write_edge_list,
)
from rieszrpo.errors import InvalidProbabilityError, InvalidRateError
from rieszrpo.montecarlo import simulate_inverse_neighbourhood


def test_block_count_n100_d01():
    p = blocks_from_rate(100, 0.1)
    assert p.n_blocks == 63
    assert np.sum(p.block_sizes == 2) == 37 and np.sum(p.block_sizes == 1) == 26
    D, d_mean = graph_stats(depgraph_from_blocks(p))
    assert D == 2
    assert d_mean == pytest.approx(1.74)


def test_block_count_n8_d05():
    p = blocks_from_rate(8, 0.5)
    np.testing.assert_array_equal(p.block_sizes, [4, 4])
    np.testing.assert_array_equal(p.block_of, [0, 0, 0, 0, 1, 1, 1, 1])


def test_d_zero_is_all_singletons():
    p = blocks_from_rate(50, 0.0)
    assert p.n_blocks == 50
    rows, cols = p.within_pairs
    assert rows.size == 0 and cols.size == 0


@pytest.mark.parametrize("d", [-0.1, 1.0, 1.5])
def test_rate_outside_unit_interval(d):
    with pytest.raises(InvalidRateError):
        blocks_from_rate(10, d)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 400), d=st.floats(0.0, 0.95))
def test_blocks_are_balanced_and_contiguous(n, d):
    p = blocks_from_rate(n, d)
    assert p.block_sizes.sum() == n
    assert p.block_sizes.max() - p.block_sizes.min() <= 1
    assert np.all(np.diff(p.block_of) >= 0)
    assert p.n_blocks == max(1, min(n, int(np.floor(n ** (1 - d) + 1e-9))))


@settings(max_examples=30, deadline=None)
@given(sizes=st.lists(st.integers(1, 5), min_size=1, max_size=12))
def test_block_dependency_graph_is_reflexive_and_symmetric(sizes):
    g = depgraph_from_blocks(partition_from_sizes(sizes))
    pairs = g.pair_set()
    for i in range(g.n):
        assert (i, i) in pairs
    assert all((j, i) in pairs for i, j in pairs)
    assert len(pairs) == sum(m * m for m in sizes)


def test_within_pairs_match_brute_force():
    p = partition_from_sizes([3, 1, 2, 4])
    rows, cols = p.within_pairs
    brute = [(i, j) for i in range(p.n) for j in range(i + 1, p.n) if p.block_of[i] == p.block_of[j]]
    assert list(zip(rows.tolist(), cols.tolist())) == brute


def test_dependency_graph_validation():
    # asymmetric: 0 lists 1 but 1 does not list 0
    with pytest.raises(ValueError):
        DependencyGraph(2, (np.array([0, 1]), np.array([1])))
    # unit 0 missing from its own neighbourhood
    with pytest.raises(ValueError):
        DependencyGraph(2, (np.array([1]), np.array([0, 1])))


def test_diagonal_pairs():
    rows, cols = diagonal_pairs(4)
    np.testing.assert_array_equal(rows, cols)


def test_er_edges_stay_within_blocks_with_correct_frequency():
    p = partition_from_sizes([6] * 2000)
    g = sample_blockwise_er(p, 0.3, "closed", np.random.default_rng(2))
    assert np.all(p.block_of[g.edge_rows] == p.block_of[g.edge_cols])
    total = len(p.within_pairs[0])
    rate = g.edge_rows.size / total
    assert abs(rate - 0.3) < 4 * np.sqrt(0.3 * 0.7 / total)


def test_er_extremes():
    p = partition_from_sizes([3, 2])
    empty = sample_blockwise_er(p, 0.0, "closed", np.random.default_rng(0))
    full = sample_blockwise_er(p, 1.0, "closed", np.random.default_rng(0))
    np.testing.assert_array_equal(empty.neighbourhood_sizes, 1)
    np.testing.assert_array_equal(full.neighbourhood_sizes, [3, 3, 3, 2, 2])


def test_conventions_differ_by_self_inclusion():
    g_closed = InterferenceGraph(3, np.array([0]), np.array([1]), "closed")
    g_open = InterferenceGraph(3, np.array([0]), np.array([1]), "open")
    np.testing.assert_array_equal(g_closed.neighbourhood_sizes, [2, 2, 1])
    np.testing.assert_array_equal(g_open.neighbourhood_sizes, [1, 1, 0])
    z = np.array([1, 0, 1])
    np.testing.assert_allclose(g_closed.exposure(z), [0.5, 0.5, 1.0])
    # isolated unit under the open convention has no neighbours to be exposed to
    np.testing.assert_allclose(g_open.exposure(z), [0.0, 1.0, 0.0])


def test_exposure_batch_matches_single():
    p = partition_from_sizes([4, 3, 5])
    g = sample_blockwise_er(p, 0.5, "closed", np.random.default_rng(8))
    Z = np.random.default_rng(9).integers(0, 2, size=(7, p.n))
    batch = g.exposure(Z)
    for row, z in zip(batch, Z):
        np.testing.assert_allclose(row, g.exposure(z))


def test_exposure_on_empty_graph_is_own_assignment():
    g = InterferenceGraph(3, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), "closed")
    np.testing.assert_allclose(g.exposure(np.array([1, 0, 1], dtype=np.int8)), [1.0, 0.0, 1.0])


def test_edge_list_round_trip(tmp_path):
    p = partition_from_sizes([5, 5])
    g = sample_blockwise_er(p, 0.4, "closed", np.random.default_rng(1))
    path = tmp_path / "edges.txt"
    write_edge_list(path, g)
    back = read_edge_list(path, p.n)
    np.testing.assert_array_equal(back.edge_rows, g.edge_rows)
    np.testing.assert_array_equal(back.edge_cols, g.edge_cols)


def test_inverse_neighbourhood_exact_values():
    assert expected_inverse_neighbourhood(1, 0.3) == 1.0
    assert expected_inverse_neighbourhood(2, 0.5) == pytest.approx(0.75, abs=1e-15)
    with pytest.raises(InvalidProbabilityError):
        expected_inverse_neighbourhood(3, 0.0)


def _binomial_oracle(m: int, p: float) -> float:
    """E[1/(1+X)], X ~ Binomial(m-1, p), by direct summation."""
    from math import comb

    return sum(comb(m - 1, k) * p**k * (1 - p) ** (m - 1 - k) / (k + 1) for k in range(m))


@pytest.mark.parametrize("m", [1, 2, 3, 5, 10, 25])
@pytest.mark.parametrize("p", [0.05, 0.1, 0.5, 0.9])
def test_inverse_neighbourhood_matches_binomial_sum(m, p):
    assert expected_inverse_neighbourhood(m, p) == pytest.approx(_binomial_oracle(m, p), abs=1e-14)


@pytest.mark.parametrize("m, p", [(2, 0.5), (5, 0.1), (10, 0.9)])
def test_inverse_neighbourhood_simulation(m, p):
    mean, se = simulate_inverse_neighbourhood(m, p, 50_000, seed=12)
    assert abs(mean - expected_inverse_neighbourhood(m, p)) <= 3 * se
