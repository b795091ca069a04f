"""Treatment-effect contrasts E[u | A] - E[u | B] over the design."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .design import RandomisationDesign, enumerate_arrays
from .errors import EnumerationTooLargeError, PositivityError

MAX_EXACT_N = 12

# Predicates act on a (rows, n) matrix of assignments and return a boolean per row.
EventPredicate = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ContrastFunctional:
    unit_index: int
    set_a: EventPredicate
    set_b: EventPredicate
    label: str = ""


def unit_contrast(i: int) -> ContrastFunctional:
    """The binary contrast {z_i = 1} versus {z_i = 0} for unit i."""
    return ContrastFunctional(
        unit_index=i,
        set_a=lambda Z: Z[:, i] == 1,
        set_b=lambda Z: Z[:, i] == 0,
        label=f"z_{i}=1 vs z_{i}=0",
    )


def evaluate_outcome(outcome: Callable, Z: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        values = np.asarray(outcome(Z), dtype=float)
        return np.broadcast_to(values, (Z.shape[0],)).astype(float)
    return np.array([float(outcome(z)) for z in Z])


def event_masks(
    f: ContrastFunctional, Z: np.ndarray, probs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    in_a = np.asarray(f.set_a(Z), dtype=bool)
    in_b = np.asarray(f.set_b(Z), dtype=bool)
    if np.any(in_a & in_b):
        raise ValueError("contrast events A and B overlap")
    if probs[in_a].sum() <= 0.0:
        raise PositivityError("event A has zero probability under the design")
    if probs[in_b].sum() <= 0.0:
        raise PositivityError("event B has zero probability under the design")
    return in_a, in_b


def apply_functional_exact(
    f: ContrastFunctional,
    outcome: Callable,
    design: RandomisationDesign,
    n: int,
    *,
    vectorized: bool = False,
) -> float:
    """Evaluate the contrast on ``outcome`` by enumerating the design.

    ``outcome`` maps one assignment vector to a real number, or, with
    ``vectorized=True``, a (rows, n) matrix of assignments to a vector.
    """
    if n > MAX_EXACT_N:
        raise EnumerationTooLargeError(f"exact functionals need n <= {MAX_EXACT_N}, got {n}")
    Z, probs = enumerate_arrays(design, n)
    in_a, in_b = event_masks(f, Z, probs)
    values = evaluate_outcome(outcome, Z, vectorized)
    mean_a = np.dot(probs[in_a], values[in_a]) / probs[in_a].sum()
    mean_b = np.dot(probs[in_b], values[in_b]) / probs[in_b].sum()
    return float(mean_a - mean_b)
