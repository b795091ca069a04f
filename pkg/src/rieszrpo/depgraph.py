"""Block partitions, dependency graphs and blockwise Erdos-Renyi interference graphs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy import sparse

from .errors import InvalidDimensionError, InvalidProbabilityError, InvalidRateError

Convention = Literal["closed", "open"]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BlockPartition:
    n: int
    block_of: np.ndarray
    block_sizes: np.ndarray

    def __post_init__(self) -> None:
        if self.block_of.shape != (self.n,):
            raise InvalidDimensionError("block_of must have one entry per unit")
        if int(self.block_sizes.sum()) != self.n or np.any(self.block_sizes < 1):
            raise ValueError("block sizes must be positive and sum to n")
        counts = np.bincount(self.block_of, minlength=self.n_blocks)
        if not np.array_equal(counts, self.block_sizes):
            raise ValueError("block_of is inconsistent with block_sizes")

    @property
    def n_blocks(self) -> int:
        return int(self.block_sizes.shape[0])

    @cached_property
    def unit_block_size(self) -> np.ndarray:
        """m_i: size of the block containing each unit."""
        return _frozen(self.block_sizes[self.block_of])

    @cached_property
    def block_starts(self) -> np.ndarray:
        return _frozen(np.concatenate(([0], np.cumsum(self.block_sizes)[:-1])))

    @cached_property
    def within_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Unordered within-block pairs (i, j), i < j, in lexicographic order.

        Assumes contiguous blocks, as built by ``blocks_from_rate``.
        """
        rows, cols = [], []
        starts = self.block_starts
        for size in np.unique(self.block_sizes):
            if size < 2:
                continue
            r, c = np.triu_indices(int(size), k=1)
            s = starts[self.block_sizes == size]
            rows.append((s[:, None] + r[None, :]).ravel())
            cols.append((s[:, None] + c[None, :]).ravel())
        if not rows:
            empty = np.zeros(0, dtype=np.int64)
            return _frozen(empty), _frozen(empty.copy())
        rows_arr = np.concatenate(rows).astype(np.int64)
        cols_arr = np.concatenate(cols).astype(np.int64)
        order = np.lexsort((cols_arr, rows_arr))
        return _frozen(rows_arr[order]), _frozen(cols_arr[order])

    def members(self, b: int) -> np.ndarray:
        start = int(self.block_starts[b])
        return np.arange(start, start + int(self.block_sizes[b]))


@lru_cache(maxsize=256)
def blocks_from_rate(n: int, d: float) -> BlockPartition:
    """floor(n^(1-d)) contiguous blocks; the first (n mod B) take the extra unit."""
    if n < 1:
        raise InvalidDimensionError(f"n must be positive, got {n}")
    if not (0.0 <= d < 1.0):
        raise InvalidRateError(f"dependency rate d must lie in [0, 1), got {d}")
    # guard against n^(1-d) landing a hair below an exact integer
    n_blocks = max(1, math.floor(n ** (1.0 - d) + 1e-9))
    n_blocks = min(n_blocks, n)
    base, extra = divmod(n, n_blocks)
    sizes = np.full(n_blocks, base, dtype=np.int64)
    sizes[:extra] += 1
    block_of = np.repeat(np.arange(n_blocks, dtype=np.int64), sizes)
    return BlockPartition(n=n, block_of=_frozen(block_of), block_sizes=_frozen(sizes))


def partition_from_sizes(sizes: Sequence[int]) -> BlockPartition:
    sizes_arr = np.asarray(sizes, dtype=np.int64)
    block_of = np.repeat(np.arange(sizes_arr.shape[0], dtype=np.int64), sizes_arr)
    return BlockPartition(n=int(sizes_arr.sum()), block_of=_frozen(block_of), block_sizes=_frozen(sizes_arr))


@dataclass(frozen=True, eq=False)
class DependencyGraph:
    """Reflexive, symmetric dependency neighbourhoods and their ordered pair set."""

    n: int
    neighbourhoods: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.neighbourhoods) != self.n:
            raise InvalidDimensionError("need one neighbourhood per unit")
        members = [set(int(j) for j in nb) for nb in self.neighbourhoods]
        for i, nb in enumerate(members):
            if i not in nb:
                raise ValueError(f"unit {i} is missing from its own neighbourhood")
            for j in nb:
                if not (0 <= j < self.n) or i not in members[j]:
                    raise ValueError(f"neighbourhoods are not symmetric at ({i}, {j})")

    @cached_property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Ordered pairs (i, j) with j in N_i, sorted by (i, j)."""
        rows = np.concatenate([np.full(len(nb), i, dtype=np.int64) for i, nb in enumerate(self.neighbourhoods)])
        cols = np.concatenate([np.sort(np.asarray(nb, dtype=np.int64)) for nb in self.neighbourhoods])
        return _frozen(rows), _frozen(cols)

    def pair_set(self) -> frozenset[tuple[int, int]]:
        rows, cols = self.pairs
        return frozenset(zip(rows.tolist(), cols.tolist()))

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbourhoods], dtype=np.int64)


def depgraph_from_blocks(p: BlockPartition) -> DependencyGraph:
    return DependencyGraph(n=p.n, neighbourhoods=tuple(p.members(b) for b in p.block_of))


def diagonal_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(n, dtype=np.int64)
    return idx, idx.copy()


def graph_stats(g: DependencyGraph) -> tuple[int, float]:
    """(D_n, d_n): maximum and mean neighbourhood size."""
    sizes = g.sizes
    return int(sizes.max()), float(sizes.mean())


@dataclass(frozen=True, eq=False)
class InterferenceGraph:
    """Undirected graph stored as unordered edges (i < j)."""

    n: int
    edge_rows: np.ndarray
    edge_cols: np.ndarray
    convention: Convention = "closed"

    @cached_property
    def degree(self) -> np.ndarray:
        deg = np.bincount(self.edge_rows, minlength=self.n) + np.bincount(self.edge_cols, minlength=self.n)
        return _frozen(deg.astype(np.int64))

    @property
    def neighbourhood_sizes(self) -> np.ndarray:
        """|N_i(omega)|, counting i itself under the closed convention."""
        return self.degree + 1 if self.convention == "closed" else self.degree

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        ones = np.ones(self.edge_rows.shape[0])
        A = sparse.coo_matrix((ones, (self.edge_rows, self.edge_cols)), shape=(self.n, self.n))
        A = A + A.T
        if self.convention == "closed":
            A = A + sparse.identity(self.n, format="coo")
        return sparse.csr_matrix(A)

    def neighbours(self, i: int) -> np.ndarray:
        row = self.adjacency.getrow(i)
        return np.sort(row.indices)

    def exposure(self, z: np.ndarray) -> np.ndarray:
        """Fraction of treated units in each realised neighbourhood.

        ``z`` may be one assignment (n,) or a batch (rows, n).  Under the open
        convention a unit with no neighbours gets exposure zero.
        """
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            # bincount returns int64 on an empty edge list, so force float
            treated = np.bincount(self.edge_rows, weights=z[self.edge_cols], minlength=self.n).astype(float)
            treated += np.bincount(self.edge_cols, weights=z[self.edge_rows], minlength=self.n)
            if self.convention == "closed":
                treated += z
        else:
            treated = (self.adjacency @ z.T).T
        sizes = self.neighbourhood_sizes
        return np.where(sizes > 0, treated / np.maximum(sizes, 1), 0.0)


def sample_blockwise_er(
    p: BlockPartition, p_edge: float, convention: Convention, rng: np.random.Generator
) -> InterferenceGraph:
    if not (0.0 <= p_edge <= 1.0):
        raise InvalidProbabilityError(f"p_edge must lie in [0, 1], got {p_edge}")
    if convention not in ("closed", "open"):
        raise ValueError(f"unknown convention {convention!r}")
    rows, cols = p.within_pairs
    keep = rng.random(rows.shape[0]) < p_edge
    return InterferenceGraph(
        n=p.n, edge_rows=_frozen(rows[keep]), edge_cols=_frozen(cols[keep]), convention=convention
    )


def expected_inverse_neighbourhood(m: int, p_edge: float) -> float:
    """E[1/|N_i|] for a closed neighbourhood in an Erdos-Renyi block of size m.

    |N_i| = 1 + Binomial(m - 1, p), and E[1/(1+X)] = (1 - (1-p)^m) / (m p).
    """
    if m < 1:
        raise InvalidDimensionError(f"block size must be positive, got {m}")
    if not (0.0 < p_edge < 1.0):
        raise InvalidProbabilityError(f"p_edge must lie in (0, 1), got {p_edge}")
    if m == 1:
        return 1.0
    return (1.0 - (1.0 - p_edge) ** m) / (m * p_edge)


def write_edge_list(path: str | Path, g: InterferenceGraph) -> None:
    lines = [f"{i} {j}" for i, j in zip(g.edge_rows.tolist(), g.edge_cols.tolist())]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_edge_list(path: str | Path, n: int, convention: Convention = "closed") -> InterferenceGraph:
    text = Path(path).read_text(encoding="utf-8").split()
    arr = np.array(text, dtype=np.int64).reshape(-1, 2) if text else np.zeros((0, 2), dtype=np.int64)
    return InterferenceGraph(n=n, edge_rows=arr[:, 0].copy(), edge_cols=arr[:, 1].copy(), convention=convention)
