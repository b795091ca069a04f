from __future__ import annotations

import numpy as np
import pytest

from rieszrpo.depgraph import blocks_from_rate, depgraph_from_blocks, diagonal_pairs, partition_from_sizes
from rieszrpo.design import RandomisationDesign, enumerate_arrays, sample_assignment
from rieszrpo.dgp import (
    baseline_outcome,
    estimand_rpo_network,
    gen_baseline_world,
    gen_network_world,
    network_outcome,
)
from rieszrpo.errors import InvalidDimensionError, SandwichViolationError
from rieszrpo.estimator import (
    WeightScheme,
    aggregate_estimate,
    block_variance,
    make_inference,
    normal_quantile,
    residuals,
    variance_conservative,
    variance_correlation,
    variance_local,
    variance_upper_bound,
)
from rieszrpo.montecarlo import enumerated_mean_estimate, enumerated_unit_contrasts
from rieszrpo.representer import HtRepresenter, ht_representer_value


def _pairs(items):
    rows, cols = zip(*items)
    return np.array(rows), np.array(cols)


def test_aggregate_examples():
    assert aggregate_estimate(np.array([1.0, 1.0]), np.array([2.0, -2.0]), WeightScheme(np.array([0.5, 0.5]))) == 0.0
    assert aggregate_estimate(np.array([3.0]), np.array([2.0]), WeightScheme(np.array([1.0]))) == 6.0


def test_aggregate_dimension_mismatch():
    with pytest.raises(InvalidDimensionError):
        aggregate_estimate(np.ones(3), np.ones(2), WeightScheme.uniform(3))


def test_weight_scheme_bound():
    with pytest.raises(ValueError):
        WeightScheme(np.array([0.9, 0.1]), nu_bar=1.0)
    with pytest.raises(ValueError):
        WeightScheme(np.array([-0.1, 1.1]))


def test_aggregate_is_linear_in_outcomes():
    rng = np.random.default_rng(0)
    y1, y2, psi = rng.standard_normal((3, 50))
    w = WeightScheme.uniform(50)
    lhs = aggregate_estimate(2.5 * y1 - y2, psi, w)
    rhs = 2.5 * aggregate_estimate(y1, psi, w) - aggregate_estimate(y2, psi, w)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_residual_examples():
    np.testing.assert_allclose(residuals(np.array([1.0]), np.array([2.0]), np.array([1.5])), [0.5])
    y, psi = np.array([1.0, 2.0]), np.array([2.0, -2.0])
    np.testing.assert_array_equal(residuals(y, psi, y * psi), [0.0, 0.0])


@pytest.mark.parametrize("dgp", ["baseline", "network"])
@pytest.mark.parametrize("seed", range(4))
def test_enumeration_unbiasedness_and_centred_residuals(dgp, seed):
    n = 8
    rng = np.random.default_rng(seed)
    w = gen_baseline_world(n, 0.5, rng) if dgp == "baseline" else gen_network_world(n, 0.5, 0.5, 0.5, "closed", rng)
    design = RandomisationDesign(0.5)
    theta = enumerated_unit_contrasts(w, design)
    assert enumerated_mean_estimate(w, design) == pytest.approx(theta.mean(), abs=1e-10)
    Z, probs = enumerate_arrays(design, n)
    Y = baseline_outcome(w, Z) if dgp == "baseline" else network_outcome(w, Z)
    psi = ht_representer_value(HtRepresenter(0.5), Z)
    zeta = Y * psi - theta
    np.testing.assert_allclose(probs @ zeta, 0.0, atol=1e-12)


def test_world_average_of_enumerated_estimate_hits_rpo():
    n, worlds, p_edge = 6, 10_000, 0.4
    design = RandomisationDesign(0.5)
    diffs = np.empty(worlds)
    for k in range(worlds):
        w = gen_network_world(n, 0.4, p_edge, 0.5, "closed", np.random.default_rng([21, k]))
        diffs[k] = enumerated_mean_estimate(w, design) - estimand_rpo_network(w.partition, w.beta, 0.5, p_edge)
    assert abs(diffs.mean()) <= 3 * diffs.std(ddof=1) / np.sqrt(worlds)


def test_variance_local_examples():
    w = WeightScheme(np.array([0.5, 0.5]))
    full = depgraph_from_blocks(partition_from_sizes([2])).pairs
    assert variance_local(np.array([1.0, 1.0]), w, full) == 1.0
    assert variance_local(np.zeros(2), w, full) == 0.0


def test_diagonal_reduction_is_exact():
    rng = np.random.default_rng(2)
    zeta = rng.standard_normal(37)
    w = WeightScheme.uniform(37)
    expected = np.sum(zeta**2) / 37**2
    assert variance_local(zeta, w, diagonal_pairs(37)) == expected
    assert variance_correlation(zeta, w, diagonal_pairs(37)) == expected


def test_block_shortcut_matches_pair_sum():
    part = blocks_from_rate(200, 0.3)
    zeta = np.random.default_rng(3).standard_normal(200)
    w = WeightScheme.uniform(200)
    pairs = depgraph_from_blocks(part).pairs
    assert block_variance(zeta, w, part.block_of, part.n_blocks) == pytest.approx(
        variance_local(zeta, w, pairs), rel=1e-12
    )


def test_correlation_estimator_drops_zero_mass_cross_terms():
    """Baseline errors carry random signs, so within-block cross terms have
    mean zero and dropping them changes the mean estimate by nothing."""
    n, d, reps = 16, 0.5, 100_000
    part = blocks_from_rate(n, d)
    full = depgraph_from_blocks(part).pairs
    w = WeightScheme.uniform(n)
    design = RandomisationDesign(0.5)
    ht = HtRepresenter(0.5)
    diff = np.empty(reps)
    for r in range(reps):
        rng = np.random.default_rng([5, r])
        world = gen_baseline_world(n, d, rng)
        z = sample_assignment(design, n, rng)
        zeta = residuals(baseline_outcome(world, z), ht_representer_value(ht, z), world.beta)
        diff[r] = variance_local(zeta, w, full) - variance_correlation(zeta, w, diagonal_pairs(n))
    omitted_cross_mass = 0.0
    assert abs(diff.mean() - omitted_cross_mass) <= 3 * diff.std(ddof=1) / np.sqrt(reps)


def _three_unit_world(reps: int, rng: np.random.Generator):
    """y_i = a_i + (b_i + s_i eta) z_i + eps_i with a shared eta; theta_i = b_i.

    E[zeta_i zeta_j] = s_i s_j for i != j, so the cross mass lives only on
    pairs with both signs nonzero.
    """
    a = np.array([0.5, -1.0, 2.0])
    b = np.array([1.0, 0.0, -0.5])
    s = np.array([1.0, 1.0, 0.0])
    eta = rng.standard_normal((reps, 1))
    eps = rng.standard_normal((reps, 3))
    z = (rng.random((reps, 3)) < 0.5).astype(float)
    y = a + (b + s * eta) * z + eps
    psi = 2.0 * z - 2.0 * (1.0 - z)
    return a, b, s, y * psi - b


def _true_second_moments(a, b, s):
    """E[zeta_i zeta_j] by enumerating z_i and using eta, eps ~ N(0, 1)."""
    M = np.outer(s, s)
    for i in range(3):
        total = 0.0
        for zi, prob in ((0.0, 0.5), (1.0, 0.5)):
            psi = 2.0 if zi else -2.0
            mean_part = (a[i] + b[i] * zi) * psi - b[i]
            total += prob * (mean_part**2 + (s[i] * zi * psi) ** 2 + psi**2)
        M[i, i] = total
    return M


def test_conservative_estimator_on_strict_sandwich():
    reps = 100_000
    a, b, s, zeta = _three_unit_world(reps, np.random.default_rng(13))
    w = WeightScheme.uniform(3)
    corr = _pairs([(0, 0), (1, 1), (2, 2), (0, 1), (1, 0)])
    assumed = _pairs([(0, 0), (1, 1), (2, 2), (0, 1), (1, 0), (1, 2), (2, 1)])
    full = depgraph_from_blocks(partition_from_sizes([3])).pairs
    values = np.array([variance_conservative(zeta[r], w, assumed, full, corr) for r in range(reps)])
    M = _true_second_moments(a, b, s)
    mask = np.zeros((3, 3), dtype=bool)
    mask[assumed] = True
    true_mass = float(np.sum(M[mask]) / 9.0)
    assert abs(values.mean() - true_mass) <= 3 * values.std(ddof=1) / np.sqrt(reps)


def test_conservative_matches_endpoints():
    zeta = np.array([0.3, -1.2, 0.8])
    w = WeightScheme.uniform(3)
    corr = _pairs([(0, 0), (1, 1), (2, 2), (0, 1), (1, 0)])
    full = depgraph_from_blocks(partition_from_sizes([3])).pairs
    assert variance_conservative(zeta, w, full, full, corr) == variance_local(zeta, w, full)
    assert variance_conservative(zeta, w, corr, full, corr) == variance_correlation(zeta, w, corr)


def test_sandwich_violation():
    w = WeightScheme.uniform(3)
    corr = _pairs([(0, 0), (1, 1), (2, 2), (0, 1), (1, 0)])
    full = depgraph_from_blocks(partition_from_sizes([2, 1])).pairs
    with pytest.raises(SandwichViolationError):
        variance_conservative(np.ones(3), w, diagonal_pairs(3), full, corr)
    with pytest.raises(SandwichViolationError):
        bad = _pairs([(0, 0), (1, 1), (2, 2), (0, 1), (1, 0), (0, 2), (2, 0)])
        variance_conservative(np.ones(3), w, bad, full, corr)


def test_upper_bound_examples():
    assert variance_upper_bound(np.ones(10), 1.0, 1.0, 1.0, 10) == pytest.approx(0.1)
    assert variance_upper_bound(np.full(10, 10), 2.0, 3.0, 1.5, 10) == pytest.approx(1.5**2 * 4 * 9)
    with pytest.raises(ValueError):
        variance_upper_bound(np.ones(3), -1.0, 1.0, 1.0, 3)


def test_upper_bound_dominates_simulated_variance():
    n, d, reps = 1000, 0.2, 2000
    part = blocks_from_rate(n, d)
    sizes = part.unit_block_size
    design = RandomisationDesign(0.5)
    ht = HtRepresenter(0.5)
    w = WeightScheme.uniform(n)
    tau = np.empty(reps)
    y_sq = np.empty(reps)
    for r in range(reps):
        rng = np.random.default_rng([31, r])
        world = gen_baseline_world(n, d, rng)
        z = sample_assignment(design, n, rng)
        y = baseline_outcome(world, z)
        tau[r] = aggregate_estimate(y, ht_representer_value(ht, z), w)
        y_sq[r] = np.mean(y**2)
    # plug-in norms: root mean square outcome and ||psi|| = sqrt(E psi^2) = 2
    bound = variance_upper_bound(sizes, float(np.sqrt(y_sq.mean())), 2.0, 1.0, n)
    assert bound >= np.var(tau, ddof=1)


def test_normal_quantile_precision():
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-9)
    assert normal_quantile(0.995) == pytest.approx(2.5758293035489004, abs=1e-9)


def test_inference_examples():
    r = make_inference(0.0, 1.0, 0.0)
    assert r.z_stat == 0.0 and not any(r.reject_flags.values())
    r = make_inference(1.0, 0.25, 0.0, levels=(0.05,))
    assert r.z_stat == 2.0 and r.reject_flags[0.05]
    assert r.ci_lo <= r.tau_hat <= r.ci_hi
    assert r.ci_hi - r.ci_lo == pytest.approx(2 * 1.959963984540054 * 0.5)
    r = make_inference(5.0, -0.01, 0.0)
    assert r.degenerate and not any(r.reject_flags.values())
    assert r.ci_lo == -np.inf and r.ci_hi == np.inf
