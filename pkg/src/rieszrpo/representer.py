"""Riesz representers by Gram-matrix moment matching.

Bases are functions of the assignment alone: the latent environment is held
at its realised value while the representer is built, so everything here is
an expectation over the known design.  Each basis function takes a
(rows, n) matrix of assignments and returns one value per row.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np
from scipy import linalg

from .design import RandomisationDesign, enumerate_arrays
from .errors import (
    EnumerationTooLargeError,
    InvalidDimensionError,
    InvalidProbabilityError,
    InvalidSampleSizeError,
    SingularGramError,
)
from .functionals import MAX_EXACT_N, ContrastFunctional, apply_functional_exact

RIDGE_LADDER = (1e-10, 1e-8, 1e-6)
# Relative eigenvalue floor below which a factorised system is treated as singular.
_RCOND_FLOOR = 1e-13

BasisFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BasisSet:
    functions: tuple[BasisFunction, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(self.functions) < 1:
            raise InvalidDimensionError("a basis needs at least one function")
        if self.names and len(self.names) != len(self.functions):
            raise InvalidDimensionError("names and functions differ in length")

    @property
    def m(self) -> int:
        return len(self.functions)

    def evaluate(self, k: int, a: np.ndarray) -> np.ndarray | float:
        a = np.asarray(a)
        if a.ndim == 1:
            return float(np.asarray(self.functions[k](a[None, :]), dtype=float).reshape(-1)[0])
        values = np.asarray(self.functions[k](a), dtype=float)
        return np.broadcast_to(values, (a.shape[0],)).astype(float)

    def design_matrix(self, Z: np.ndarray) -> np.ndarray:
        """Basis values as a (rows, m) matrix."""
        Z = np.atleast_2d(Z)
        return np.column_stack([self.evaluate(k, Z) for k in range(self.m)])


def constant_basis() -> BasisSet:
    return BasisSet((lambda Z: np.ones(Z.shape[0]),), ("1",))


def indicator_basis(i: int) -> BasisSet:
    """Treatment-arm indicators {1{z_i=1}, 1{z_i=0}} for unit i."""
    return BasisSet(
        (
            lambda Z: (Z[:, i] == 1).astype(float),
            lambda Z: (Z[:, i] == 0).astype(float),
        ),
        (f"1{{z_{i}=1}}", f"1{{z_{i}=0}}"),
    )


def linear_basis(i: int) -> BasisSet:
    return BasisSet((lambda Z: Z[:, i].astype(float),), (f"z_{i}",))


def saturated_basis(units: Sequence[int]) -> BasisSet:
    """One indicator per joint configuration of ``units`` (2^k functions)."""
    units = tuple(units)
    funcs = []
    names = []
    for config in itertools.product((1, 0), repeat=len(units)):

        def g(Z, config=config):
            return np.all(Z[:, units] == np.asarray(config), axis=1).astype(float)

        funcs.append(g)
        names.append("1{" + ",".join(f"z_{u}={c}" for u, c in zip(units, config)) + "}")
    return BasisSet(tuple(funcs), tuple(names))


def walsh_basis(
    units: Sequence[int], p_treat: float, max_order: int | None = None
) -> BasisSet:
    """Orthonormal Walsh system under Bernoulli(p_treat), ordered by interaction order.

    chi_S(z) = prod_{j in S} (z_j - p) / sqrt(p (1 - p)); the empty set gives the
    constant.  Truncating the sequence after m terms is the sieve used for
    infinite-dimensional model spaces.
    """
    if not (0.0 < p_treat < 1.0):
        raise InvalidProbabilityError(f"p_treat must lie in (0, 1), got {p_treat}")
    units = tuple(units)
    top = len(units) if max_order is None else min(max_order, len(units))
    scale = np.sqrt(p_treat * (1.0 - p_treat))
    funcs = []
    names = []
    for order in range(top + 1):
        for subset in itertools.combinations(units, order):

            def chi(Z, subset=subset):
                out = np.ones(Z.shape[0])
                for j in subset:
                    out = out * (Z[:, j] - p_treat) / scale
                return out

            funcs.append(chi)
            names.append("chi{" + ",".join(str(j) for j in subset) + "}")
    return BasisSet(tuple(funcs), tuple(names))


def truncate(basis: BasisSet, m: int) -> BasisSet:
    if not (1 <= m <= basis.m):
        raise InvalidDimensionError(f"cannot truncate a basis of size {basis.m} to {m}")
    names = basis.names[:m] if basis.names else ()
    return BasisSet(basis.functions[:m], names)


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray

    def __post_init__(self) -> None:
        G = np.asarray(self.entries, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise InvalidDimensionError(f"Gram matrix must be square, got {G.shape}")
        if not np.allclose(G, G.T, rtol=0.0, atol=1e-12):
            raise ValueError("Gram matrix is not symmetric")
        if np.linalg.eigvalsh(G).min() < -1e-10:
            raise ValueError("Gram matrix is not positive semidefinite")
        object.__setattr__(self, "entries", G)

    @property
    def m(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class RepresenterCoefficients:
    beta: np.ndarray
    ridge_used: float = 0.0

    def __post_init__(self) -> None:
        beta = np.asarray(self.beta, dtype=float)
        if not np.all(np.isfinite(beta)):
            raise ValueError("representer coefficients must be finite")
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class HtRepresenter:
    p_treat: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 < self.p_treat < 1.0):
            raise InvalidProbabilityError(f"p_treat must lie in (0, 1), got {self.p_treat}")


def ht_representer_value(r: HtRepresenter, z_i):
    """z/p - (1 - z)/(1 - p); accepts a scalar or an array of 0/1 values."""
    z = np.asarray(z_i, dtype=float)
    value = z / r.p_treat - (1.0 - z) / (1.0 - r.p_treat)
    return float(value) if value.ndim == 0 else value


def _sum_outer(B: np.ndarray) -> np.ndarray:
    return B.T @ B


def _mc_partition_sum(
    basis: BasisSet, design: RandomisationDesign, n: int, draws: int, seed: int, k: int
) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
    Z = (rng.random((draws, n)) < design.p_treat).astype(np.int8)
    return _sum_outer(basis.design_matrix(Z))


def gram_matrix(
    basis: BasisSet,
    design: RandomisationDesign,
    n: int,
    method: Literal["exact", "monte_carlo"] = "exact",
    *,
    draws: int = 100_000,
    seed: int = 0,
    partitions: int = 1,
    workers: int = 1,
) -> GramMatrix:
    """Gram matrix E_z[g_l g_k] by enumeration or by Monte Carlo.

    The Monte Carlo version splits ``draws`` into ``partitions`` chunks, each
    with its own child stream of ``seed``; chunk sums are reduced in chunk
    order, so the result depends on (seed, partitions) but not on ``workers``.
    """
    if method == "exact":
        if n > MAX_EXACT_N:
            raise EnumerationTooLargeError(f"exact Gram needs n <= {MAX_EXACT_N}, got {n}")
        Z, probs = enumerate_arrays(design, n)
        B = basis.design_matrix(Z)
        G = B.T @ (probs[:, None] * B)
    elif method == "monte_carlo":
        if draws < 1:
            raise InvalidSampleSizeError(f"Monte Carlo Gram needs at least one draw, got {draws}")
        if partitions < 1:
            raise InvalidSampleSizeError("partitions must be positive")
        sizes = [draws // partitions + (1 if k < draws % partitions else 0) for k in range(partitions)]
        jobs = [(k, s) for k, s in enumerate(sizes) if s > 0]
        if workers > 1 and len(jobs) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(
                    pool.map(lambda job: _mc_partition_sum(basis, design, n, job[1], seed, job[0]), jobs)
                )
        else:
            parts = [_mc_partition_sum(basis, design, n, s, seed, k) for k, s in jobs]
        total = np.zeros((basis.m, basis.m))
        for part in parts:
            total += part
        G = total / draws
    else:
        raise ValueError(f"unknown Gram method {method!r}")
    return GramMatrix(0.5 * (G + G.T))


def target_vector(
    basis: BasisSet, f: ContrastFunctional, design: RandomisationDesign, n: int
) -> np.ndarray:
    return np.array(
        [
            apply_functional_exact(f, basis.functions[k], design, n, vectorized=True)
            for k in range(basis.m)
        ]
    )


def _try_solve(G: np.ndarray, T: np.ndarray, ridge: float, scale: float) -> np.ndarray | None:
    """Cholesky solve of (G + ridge I) beta = T, or None if numerically singular.

    Singularity is judged against ``scale``, the spectral size of the
    unregularised G, so a ridge cannot make an all-zero Gram look healthy.
    """
    A = G + ridge * np.eye(G.shape[0])
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=True)
    except linalg.LinAlgError:
        return None
    if np.linalg.eigvalsh(A).min() <= _RCOND_FLOOR * scale:
        return None
    beta = linalg.cho_solve(factor, T)
    # one step of iterative refinement recovers the last bits lost in the factor
    return beta + linalg.cho_solve(factor, T - A @ beta)


def solve_representer(
    G: GramMatrix | np.ndarray, T: np.ndarray, ridge: float = 0.0
) -> RepresenterCoefficients:
    """Solve (G + ridge I) beta = T by Cholesky, escalating the ridge on failure."""
    Gm = G.entries if isinstance(G, GramMatrix) else np.asarray(G, dtype=float)
    T = np.asarray(T, dtype=float).reshape(-1)
    if Gm.ndim != 2 or Gm.shape[0] != Gm.shape[1] or Gm.shape[0] != T.shape[0]:
        raise InvalidDimensionError(f"Gram shape {Gm.shape} does not match target length {T.shape[0]}")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    Gm = 0.5 * (Gm + Gm.T)
    scale = float(np.max(np.abs(np.linalg.eigvalsh(Gm)))) if np.all(np.isfinite(Gm)) else 0.0
    if scale > 0.0:
        for r in (ridge, *[x for x in RIDGE_LADDER if x > ridge]):
            beta = _try_solve(Gm, T, r, scale)
            if beta is not None:
                return RepresenterCoefficients(beta=beta, ridge_used=r)
    cond = float(np.linalg.cond(Gm)) if scale > 0.0 else float("inf")
    raise SingularGramError(
        f"Gram matrix is numerically singular (condition number {cond:.3g}) "
        f"even with ridge {RIDGE_LADDER[-1]:g}",
        condition=cond,
    )


def evaluate_representer(
    coeffs: RepresenterCoefficients, basis: BasisSet, a: np.ndarray
) -> np.ndarray | float:
    if coeffs.beta.shape[0] != basis.m:
        raise InvalidDimensionError(
            f"{coeffs.beta.shape[0]} coefficients for a basis of size {basis.m}"
        )
    a = np.asarray(a)
    if a.ndim == 1:
        return float(basis.design_matrix(a[None, :])[0] @ coeffs.beta)
    return basis.design_matrix(a) @ coeffs.beta


@dataclass
class RepresenterFit:
    """Everything produced by one run of the moment-matching pipeline."""

    gram: GramMatrix
    target: np.ndarray
    coeffs: RepresenterCoefficients
    basis: BasisSet = field(repr=False)


def fit_representer(
    basis: BasisSet,
    f: ContrastFunctional,
    design: RandomisationDesign,
    n: int,
    method: Literal["exact", "monte_carlo"] = "exact",
    *,
    ridge: float = 0.0,
    **gram_kwargs,
) -> RepresenterFit:
    G = gram_matrix(basis, design, n, method, **gram_kwargs)
    T = target_vector(basis, f, design, n)
    return RepresenterFit(G, T, solve_representer(G, T, ridge), basis)


def _format_row(values) -> str:
    return " ".join(repr(float(v)) for v in np.atleast_1d(values))


def export_system(path: str | Path, G: GramMatrix, T: np.ndarray, coeffs: RepresenterCoefficients) -> None:
    """Write G, T and beta as plain rows of space-separated decimals."""
    lines = ["# G"]
    lines += [_format_row(row) for row in G.entries]
    lines += ["# T", _format_row(T), "# beta", _format_row(coeffs.beta)]
    lines.append(f"# ridge_used {coeffs.ridge_used!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_system(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    sections: dict[str, list[list[float]]] = {}
    current = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# ridge_used"):
            continue
        if line.startswith("#"):
            current = line[1:].strip()
            sections[current] = []
        elif line.strip() and current is not None:
            sections[current].append([float(x) for x in line.split()])
    return np.array(sections["G"]), np.array(sections["T"][0]), np.array(sections["beta"][0])
