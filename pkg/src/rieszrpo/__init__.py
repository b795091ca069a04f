"""Design-based inference for aggregate treatment effects with random potential outcomes.

Riesz representers for contrast functionals, the aggregate Riesz estimator,
local-dependence variance estimators and a reproducible Monte Carlo harness
for the baseline and blockwise-network simulation designs.
"""

from __future__ import annotations

from .depgraph import (
    BlockPartition,
    DependencyGraph,
    InterferenceGraph,
    blocks_from_rate,
    depgraph_from_blocks,
    expected_inverse_neighbourhood,
    sample_blockwise_er,
)
from .design import RandomisationDesign, enumerate_arrays, sample_assignment
from .estimator import (
    InferenceResult,
    WeightScheme,
    aggregate_estimate,
    make_inference,
    residuals,
    variance_local,
)
from .functionals import ContrastFunctional, unit_contrast
from .montecarlo import SimConfig, SimReport, run_oracle_suite, run_simulation
from .representer import (
    HtRepresenter,
    fit_representer,
    gram_matrix,
    indicator_basis,
    solve_representer,
    walsh_basis,
)

__version__ = "0.1.0"

__all__ = [
    "BlockPartition",
    "ContrastFunctional",
    "DependencyGraph",
    "HtRepresenter",
    "InferenceResult",
    "InterferenceGraph",
    "RandomisationDesign",
    "SimConfig",
    "SimReport",
    "WeightScheme",
    "aggregate_estimate",
    "blocks_from_rate",
    "depgraph_from_blocks",
    "enumerate_arrays",
    "expected_inverse_neighbourhood",
    "fit_representer",
    "gram_matrix",
    "indicator_basis",
    "make_inference",
    "residuals",
    "run_oracle_suite",
    "run_simulation",
    "sample_assignment",
    "sample_blockwise_er",
    "solve_representer",
    "unit_contrast",
    "variance_local",
    "walsh_basis",
]
