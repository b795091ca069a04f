"""Randomisation designs: sampling and exact enumeration of assignments."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import (
    EnumerationTooLargeError,
    InvalidDimensionError,
    InvalidProbabilityError,
)

MAX_ENUMERATION_N = 20


@dataclass(frozen=True)
class RandomisationDesign:
    """Independent Bernoulli(p_treat) assignment of every unit."""

    p_treat: float = 0.5
    kind: Literal["bernoulli"] = "bernoulli"

    def __post_init__(self) -> None:
        if self.kind != "bernoulli":
            raise ValueError(f"unsupported design kind {self.kind!r}")
        if not (0.0 < self.p_treat < 1.0):
            raise InvalidProbabilityError(
                f"p_treat must lie strictly inside (0, 1), got {self.p_treat}"
            )


@dataclass(frozen=True)
class DesignAtom:
    assignment: np.ndarray
    probability: float


def check_assignment(a: np.ndarray, n: int | None = None) -> np.ndarray:
    """Validate a 0/1 assignment vector and return it as an int8 array."""
    arr = np.asarray(a)
    if arr.ndim != 1:
        raise InvalidDimensionError(f"assignment must be 1-D, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise InvalidDimensionError(f"assignment has length {arr.shape[0]}, expected {n}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("assignment entries must be exactly 0 or 1")
    return arr.astype(np.int8)


def sample_assignment(
    design: RandomisationDesign, n: int, rng: np.random.Generator
) -> np.ndarray:
    if n < 1:
        raise InvalidDimensionError(f"n must be positive, got {n}")
    return (rng.random(n) < design.p_treat).astype(np.int8)


def assignment_probability(design: RandomisationDesign, a: np.ndarray) -> float:
    a = check_assignment(a)
    treated = int(a.sum())
    p = design.p_treat
    return float(p**treated * (1.0 - p) ** (a.shape[0] - treated))


def enumerate_arrays(design: RandomisationDesign, n: int) -> tuple[np.ndarray, np.ndarray]:
    """All 2^n assignments as a (2^n, n) int8 matrix plus their probabilities.

    Row k is the binary expansion of k with unit 0 as the most significant bit.
    """
    if n < 1:
        raise InvalidDimensionError(f"n must be positive, got {n}")
    if n > MAX_ENUMERATION_N:
        raise EnumerationTooLargeError(
            f"enumeration of 2^{n} assignments exceeds the cap n <= {MAX_ENUMERATION_N}"
        )
    codes = np.arange(2**n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    Z = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.int8)
    treated = Z.sum(axis=1)
    p = design.p_treat
    probs = p**treated * (1.0 - p) ** (n - treated)
    return Z, probs


def enumerate_design(design: RandomisationDesign, n: int) -> list[DesignAtom]:
    Z, probs = enumerate_arrays(design, n)
    return [DesignAtom(assignment=z, probability=float(pr)) for z, pr in zip(Z, probs)]


def iter_assignments(n: int):
    """Plain generator over {0,1}^n in the same order as enumerate_arrays."""
    for bits in itertools.product((0, 1), repeat=n):
        yield np.array(bits, dtype=np.int8)
