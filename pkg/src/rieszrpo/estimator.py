"""Aggregate Riesz estimator, residual-based variance estimators and inference."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import InvalidDimensionError, SandwichViolationError

PairArrays = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True, eq=False)
class WeightScheme:
    nu: np.ndarray
    nu_bar: float | None = None

    def __post_init__(self) -> None:
        nu = np.asarray(self.nu, dtype=float)
        if nu.ndim != 1:
            raise InvalidDimensionError("weights must be a vector")
        if np.any(nu < 0):
            raise ValueError("weights must be nonnegative")
        if self.nu_bar is not None and nu.shape[0] * nu.max(initial=0.0) > self.nu_bar * (1 + 1e-12):
            raise ValueError(f"n * max(nu) exceeds the bound nu_bar = {self.nu_bar}")
        object.__setattr__(self, "nu", nu)

    @classmethod
    def uniform(cls, n: int) -> "WeightScheme":
        return cls(np.full(n, 1.0 / n), nu_bar=1.0)

    @property
    def is_uniform(self) -> bool:
        return bool(self.nu.size) and bool(np.all(self.nu == 1.0 / self.nu.shape[0]))

    @property
    def n(self) -> int:
        return int(self.nu.shape[0])


@dataclass(frozen=True)
class InferenceResult:
    tau_hat: float
    sigma_hat: float
    level: float
    ci_lo: float
    ci_hi: float
    z_stat: float
    reject_flags: dict[float, bool] = field(default_factory=dict)
    degenerate: bool = False


def _same_length(*arrays: np.ndarray) -> None:
    lengths = {np.shape(a)[-1] for a in arrays}
    if len(lengths) != 1:
        raise InvalidDimensionError(f"length mismatch: {sorted(lengths)}")


def aggregate_estimate(y: np.ndarray, psi_values: np.ndarray, weights: WeightScheme) -> float:
    """sum_i nu_i * y_i * psi_i."""
    y = np.asarray(y, dtype=float)
    psi = np.asarray(psi_values, dtype=float)
    _same_length(y, psi, weights.nu)
    return float(np.dot(weights.nu, y * psi))


def residuals(y: np.ndarray, psi_values: np.ndarray, theta_true: np.ndarray) -> np.ndarray:
    """zeta_i = y_i psi_i - theta_i."""
    y = np.asarray(y, dtype=float)
    psi = np.asarray(psi_values, dtype=float)
    theta = np.asarray(theta_true, dtype=float)
    _same_length(y, psi, theta)
    return y * psi - theta


def _pair_sum(zeta: np.ndarray, weights: WeightScheme, pairs: PairArrays) -> float:
    rows, cols = pairs
    zeta = np.asarray(zeta, dtype=float)
    _same_length(zeta, weights.nu)
    if weights.is_uniform:
        # factor the common 1/n^2 out of the sum
        return float(np.sum(zeta[rows] * zeta[cols]) / weights.n**2)
    wz = weights.nu * zeta
    return float(np.sum(wz[rows] * wz[cols]))


def variance_local(zeta: np.ndarray, weights: WeightScheme, pairs: PairArrays) -> float:
    """sum over dependent pairs of nu_i nu_j zeta_i zeta_j, diagonal included."""
    return _pair_sum(zeta, weights, pairs)


def variance_correlation(zeta: np.ndarray, weights: WeightScheme, corr_pairs: PairArrays) -> float:
    """Same pair sum restricted to the pairs believed to be correlated."""
    return _pair_sum(zeta, weights, corr_pairs)


def _as_set(pairs: PairArrays) -> set[tuple[int, int]]:
    return set(zip(np.asarray(pairs[0]).tolist(), np.asarray(pairs[1]).tolist()))


def variance_conservative(
    zeta: np.ndarray,
    weights: WeightScheme,
    assumed_pairs: PairArrays,
    full_pairs: PairArrays,
    corr_pairs: PairArrays,
) -> float:
    """nu' Sigma^d nu where Sigma^d keeps zeta_i zeta_j only on ``assumed_pairs``.

    The assumed set must sit between the correlated and the full dependent set.
    """
    assumed = _as_set(assumed_pairs)
    if not _as_set(corr_pairs) <= assumed:
        raise SandwichViolationError("correlated pairs are not contained in the assumed pairs")
    if not assumed <= _as_set(full_pairs):
        raise SandwichViolationError("assumed pairs are not contained in the dependency pairs")
    return _pair_sum(zeta, weights, assumed_pairs)


def block_variance(zeta: np.ndarray, weights: WeightScheme, block_of: np.ndarray, n_blocks: int) -> float:
    """Within-block pair sum computed as sum_b (sum_{i in b} nu_i zeta_i)^2.

    Algebraically equal to ``variance_local`` over the full within-block pair set.
    """
    sums = np.bincount(block_of, weights=weights.nu * zeta, minlength=n_blocks)
    return float(np.dot(sums, sums))


def variance_upper_bound(
    neigh_sizes: np.ndarray, y_norm: float, psi_norm: float, nu_bar: float, n: int
) -> float:
    """(nu_bar^2 / n^2) * sum_i |N_i| * y_norm^2 * psi_norm^2.

    Norms are caller-supplied plug-ins, so the value is a diagnostic only.
    """
    sizes = np.asarray(neigh_sizes, dtype=float)
    if np.any(sizes < 0) or y_norm < 0 or psi_norm < 0 or nu_bar < 0 or n <= 0:
        raise ValueError("variance bound inputs must be nonnegative (n positive)")
    return float(nu_bar**2 / n**2 * sizes.sum() * y_norm**2 * psi_norm**2)


@lru_cache(maxsize=64)
def normal_quantile(prob: float) -> float:
    return float(stats.norm.ppf(prob))


def make_inference(
    tau_hat: float,
    sigma2_hat: float,
    tau_null: float = 0.0,
    levels: Sequence[float] = (0.01, 0.05, 0.10),
    ci_level: float = 0.05,
) -> InferenceResult:
    """Two-sided normal test of tau = tau_null and a (1 - ci_level) interval.

    A nonpositive variance estimate is a flagged, never-rejecting outcome
    with an infinite interval.
    """
    if sigma2_hat <= 0.0 or not np.isfinite(sigma2_hat):
        return InferenceResult(
            tau_hat=tau_hat,
            sigma_hat=0.0,
            level=ci_level,
            ci_lo=-np.inf,
            ci_hi=np.inf,
            z_stat=float("nan"),
            reject_flags={lvl: False for lvl in levels},
            degenerate=True,
        )
    sigma = float(np.sqrt(sigma2_hat))
    z = (tau_hat - tau_null) / sigma
    half = normal_quantile(1.0 - ci_level / 2.0) * sigma
    flags = {lvl: bool(abs(z) > normal_quantile(1.0 - lvl / 2.0)) for lvl in levels}
    return InferenceResult(
        tau_hat=tau_hat,
        sigma_hat=sigma,
        level=ci_level,
        ci_lo=tau_hat - half,
        ci_hi=tau_hat + half,
        z_stat=z,
        reject_flags=flags,
    )
