"""Latent worlds, potential outcomes and estimands for the two simulation designs.

Baseline:  y_i = alpha_i + beta_i z_i + delta_i x_i + eps_i
Network:   y_i = alpha_i + beta_i z_i + gamma * e_i(z, omega) + eps_i

with eps_i = s_i * eta_{b(i)} + nu_i, s_i a Rademacher sign and eta a shock
shared by every unit in block b(i).  The Rademacher sign (``gamma_sign``) and
the spillover strength (``gamma_spill``) are different quantities.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

from .depgraph import (
    BlockPartition,
    Convention,
    InterferenceGraph,
    blocks_from_rate,
    expected_inverse_neighbourhood,
    sample_blockwise_er,
)
from .errors import InvalidDimensionError, InvalidProbabilityError, UnsupportedConventionError


@dataclass(frozen=True, eq=False)
class BaselineWorld:
    n: int
    alpha: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    x: np.ndarray
    eta: np.ndarray
    gamma_sign: np.ndarray
    nu: np.ndarray
    partition: BlockPartition

    @cached_property
    def epsilon(self) -> np.ndarray:
        return self.gamma_sign * self.eta[self.partition.block_of] + self.nu


@dataclass(frozen=True, eq=False)
class NetworkWorld:
    n: int
    alpha: np.ndarray
    beta: np.ndarray
    eta: np.ndarray
    gamma_sign: np.ndarray
    nu: np.ndarray
    partition: BlockPartition
    graph: InterferenceGraph
    gamma_spill: float = 0.5
    p_edge: float = 0.1

    @cached_property
    def epsilon(self) -> np.ndarray:
        return self.gamma_sign * self.eta[self.partition.block_of] + self.nu

    @property
    def convention(self) -> Convention:
        return self.graph.convention


def _rademacher(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, 2, size=n) * 2.0 - 1.0


def gen_baseline_world(n: int, d: float, rng: np.random.Generator) -> BaselineWorld:
    partition = blocks_from_rate(n, d)
    alpha = rng.standard_normal(n)
    beta = rng.normal(1.0, 1.0, n)
    delta = rng.standard_normal(n)
    x = rng.standard_normal(n)
    eta = rng.standard_normal(partition.n_blocks)
    gamma_sign = _rademacher(rng, n)
    nu = rng.standard_normal(n)
    return BaselineWorld(n, alpha, beta, delta, x, eta, gamma_sign, nu, partition)


def gen_network_world(
    n: int,
    d: float,
    p_edge: float = 0.1,
    gamma_spill: float = 0.5,
    convention: Convention = "closed",
    rng: np.random.Generator | None = None,
) -> NetworkWorld:
    if rng is None:
        raise ValueError("a pseudorandom generator is required")
    partition = blocks_from_rate(n, d)
    alpha = rng.standard_normal(n)
    beta = rng.normal(1.0, 1.0, n)
    eta = rng.standard_normal(partition.n_blocks)
    gamma_sign = _rademacher(rng, n)
    nu = rng.standard_normal(n)
    graph = sample_blockwise_er(partition, p_edge, convention, rng)
    return NetworkWorld(n, alpha, beta, eta, gamma_sign, nu, partition, graph, gamma_spill, p_edge)


def _check_assignment_shape(n: int, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.shape[-1] != n or a.ndim not in (1, 2):
        raise InvalidDimensionError(f"assignment shape {a.shape} does not match n = {n}")
    return a


def baseline_outcome(w: BaselineWorld, a: np.ndarray) -> np.ndarray:
    """Observed outcomes; ``a`` is one assignment or a (rows, n) batch."""
    z = _check_assignment_shape(w.n, a)
    return w.alpha + w.beta * z + w.delta * w.x + w.epsilon


def network_outcome(w: NetworkWorld, a: np.ndarray) -> np.ndarray:
    z = _check_assignment_shape(w.n, a)
    return w.alpha + w.beta * z + w.gamma_spill * w.graph.exposure(z) + w.epsilon


def estimand_baseline(w: BaselineWorld) -> float:
    return float(np.mean(w.beta))


def estimand_fpo_network(w: NetworkWorld) -> float:
    """Realised-graph target: mean of beta_i + gamma / |N_i(omega)|."""
    if w.convention != "closed":
        raise UnsupportedConventionError("the realised-graph estimand needs closed neighbourhoods")
    return float(np.mean(w.beta + w.gamma_spill / w.graph.neighbourhood_sizes))


def estimand_rpo_network(
    partition: BlockPartition, beta_mean_terms: np.ndarray, gamma_spill: float, p_edge: float
) -> float:
    """Mechanism-level target: graph randomness integrated out block by block."""
    if not (0.0 < p_edge < 1.0):
        raise InvalidProbabilityError(f"p_edge must lie in (0, 1), got {p_edge}")
    beta = np.asarray(beta_mean_terms, dtype=float)
    if beta.shape != (partition.n,):
        raise InvalidDimensionError("need one beta term per unit")
    inv = np.array([expected_inverse_neighbourhood(int(m), p_edge) for m in partition.block_sizes])
    return float(np.mean(beta + gamma_spill * inv[partition.block_of]))


def unit_contrasts(
    w: BaselineWorld | NetworkWorld, centring: Literal["rpo", "realised"] = "rpo"
) -> np.ndarray:
    """Per-unit contrast theta_i used to centre residuals under the sharp null.

    For the network design under the open convention a unit's exposure does
    not involve its own assignment, so the contrast reduces to beta_i.
    """
    if isinstance(w, BaselineWorld):
        return w.beta.copy()
    if w.convention == "open":
        return w.beta.copy()
    if centring == "realised":
        return w.beta + w.gamma_spill / w.graph.neighbourhood_sizes
    if centring != "rpo":
        raise ValueError(f"unknown centring {centring!r}")
    if w.p_edge <= 0.0 or w.p_edge >= 1.0:
        # p_edge at 0 or 1 makes the graph deterministic
        sizes = np.ones(w.n) if w.p_edge <= 0.0 else w.partition.unit_block_size
        return w.beta + w.gamma_spill / sizes
    inv = np.array([expected_inverse_neighbourhood(int(m), w.p_edge) for m in w.partition.block_sizes])
    return w.beta + w.gamma_spill * inv[w.partition.block_of]


def coverage_target(w: BaselineWorld | NetworkWorld) -> float:
    """tau_n used for coverage: mean beta (baseline) or the RPO estimand (network)."""
    return float(np.mean(unit_contrasts(w, "rpo")))
