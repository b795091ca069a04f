"""Replication loop, coverage/rejection accounting and brute-force oracle suite.

Every replication draws from its own child stream of the master seed, keyed
by the replication index, and results are reduced in index order.  A report
therefore depends only on the configuration, never on how many workers ran it.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np

from .depgraph import (
    depgraph_from_blocks,
    blocks_from_rate,
    expected_inverse_neighbourhood,
    partition_from_sizes,
    sample_blockwise_er,
)
from .design import RandomisationDesign, enumerate_arrays, sample_assignment
from .dgp import (
    BaselineWorld,
    NetworkWorld,
    baseline_outcome,
    coverage_target,
    estimand_baseline,
    estimand_fpo_network,
    estimand_rpo_network,
    gen_baseline_world,
    gen_network_world,
    network_outcome,
    unit_contrasts,
)
from .estimator import (
    WeightScheme,
    aggregate_estimate,
    make_inference,
    normal_quantile,
    residuals,
    variance_local,
)
from .functionals import apply_functional_exact, unit_contrast
from .representer import (
    HtRepresenter,
    evaluate_representer,
    fit_representer,
    ht_representer_value,
    saturated_basis,
)

DEFAULT_LEVELS = (0.01, 0.05, 0.10)
MAX_ORACLE_N = 10


@dataclass(frozen=True)
class SimConfig:
    dgp: Literal["baseline", "network"]
    n: int
    d: float
    reps: int = 2000
    levels: tuple[float, ...] = DEFAULT_LEVELS
    mode: Literal["size", "power"] = "size"
    p_edge: float = 0.1
    gamma_spill: float = 0.5
    p_treat: float = 0.5
    convention: Literal["closed", "open"] = "closed"
    centring: Literal["rpo", "realised"] = "rpo"
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.dgp not in ("baseline", "network"):
            raise ValueError(f"dgp must be 'baseline' or 'network', got {self.dgp!r}")
        if self.mode not in ("size", "power"):
            raise ValueError(f"mode must be 'size' or 'power', got {self.mode!r}")
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not (0.0 <= self.d < 1.0):
            raise ValueError(f"d must lie in [0, 1), got {self.d}")
        if self.reps < 1:
            raise ValueError(f"reps must be positive, got {self.reps}")
        object.__setattr__(self, "levels", tuple(float(x) for x in self.levels))
        if not self.levels or any(not (0.0 < x < 1.0) for x in self.levels):
            raise ValueError(f"levels must be a nonempty subset of (0, 1), got {self.levels}")
        if not (0.0 <= self.p_edge <= 1.0):
            raise ValueError(f"p_edge must lie in [0, 1], got {self.p_edge}")
        if not (0.0 < self.p_treat < 1.0):
            raise ValueError(f"p_treat must lie in (0, 1), got {self.p_treat}")
        if self.convention not in ("closed", "open"):
            raise ValueError(f"convention must be 'closed' or 'open', got {self.convention!r}")
        if self.centring not in ("rpo", "realised"):
            raise ValueError(f"centring must be 'rpo' or 'realised', got {self.centring!r}")
        if not (0 <= self.master_seed < 2**64):
            raise ValueError("master_seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class RepRecord:
    tau_hat: float
    sigma2_hat: float
    tau_target: float
    covered: bool
    reject: dict[float, bool]
    degenerate: bool


@dataclass(frozen=True)
class SimReport:
    config: SimConfig
    coverage: float
    rejection: dict[float, float]
    mean_tau_hat: float
    var_tau_hat: float
    mean_sigma2_hat: float
    degenerate_count: int
    var_tau_error: float = float("nan")


def rep_rng(master_seed: int, rep_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(rep_index,)))


@lru_cache(maxsize=64)
def _within_block_pairs(n: int, d: float) -> tuple[np.ndarray, np.ndarray]:
    return depgraph_from_blocks(blocks_from_rate(n, d)).pairs


def draw_world(cfg: SimConfig, rng: np.random.Generator) -> BaselineWorld | NetworkWorld:
    if cfg.dgp == "baseline":
        return gen_baseline_world(cfg.n, cfg.d, rng)
    return gen_network_world(cfg.n, cfg.d, cfg.p_edge, cfg.gamma_spill, cfg.convention, rng)


def outcome(world: BaselineWorld | NetworkWorld, z: np.ndarray) -> np.ndarray:
    if isinstance(world, BaselineWorld):
        return baseline_outcome(world, z)
    return network_outcome(world, z)


def run_replication(cfg: SimConfig, rep_index: int) -> RepRecord:
    rng = rep_rng(cfg.master_seed, rep_index)
    world = draw_world(cfg, rng)
    z = sample_assignment(RandomisationDesign(cfg.p_treat), cfg.n, rng)
    y = outcome(world, z)
    psi = ht_representer_value(HtRepresenter(cfg.p_treat), z)
    weights = WeightScheme.uniform(cfg.n)

    tau_hat = aggregate_estimate(y, psi, weights)
    if cfg.mode == "size":
        theta = unit_contrasts(world, cfg.centring)
    else:
        theta = np.zeros(cfg.n)
    zeta = residuals(y, psi, theta)
    sigma2 = variance_local(zeta, weights, _within_block_pairs(cfg.n, cfg.d))
    result = make_inference(tau_hat, sigma2, float(np.dot(weights.nu, theta)), cfg.levels)

    tau_target = coverage_target(world)
    covered = (not result.degenerate) and abs(tau_hat - tau_target) <= normal_quantile(0.975) * result.sigma_hat
    return RepRecord(
        tau_hat=tau_hat,
        sigma2_hat=sigma2,
        tau_target=tau_target,
        covered=bool(covered),
        reject=result.reject_flags,
        degenerate=result.degenerate,
    )


def _run_chunk(cfg: SimConfig, start: int, stop: int) -> list[RepRecord]:
    return [run_replication(cfg, r) for r in range(start, stop)]


def simulate_records(cfg: SimConfig, workers: int = 1) -> list[RepRecord]:
    if workers <= 1 or cfg.reps < 2:
        return _run_chunk(cfg, 0, cfg.reps)
    n_chunks = min(cfg.reps, workers * 4)
    bounds = np.linspace(0, cfg.reps, n_chunks + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, cfg, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
        records: list[RepRecord] = []
        for fut in futures:
            records.extend(fut.result())
    return records


def summarize(cfg: SimConfig, records: Sequence[RepRecord]) -> SimReport:
    reps = len(records)
    tau_hat = np.array([r.tau_hat for r in records])
    sigma2 = np.array([r.sigma2_hat for r in records])
    error = tau_hat - np.array([r.tau_target for r in records])
    ddof = 1 if reps > 1 else 0
    return SimReport(
        config=cfg,
        coverage=sum(r.covered for r in records) / reps,
        rejection={lvl: sum(r.reject[lvl] for r in records) / reps for lvl in cfg.levels},
        mean_tau_hat=float(np.mean(tau_hat)),
        var_tau_hat=float(np.var(tau_hat, ddof=ddof)),
        mean_sigma2_hat=float(np.mean(sigma2)),
        degenerate_count=sum(r.degenerate for r in records),
        var_tau_error=float(np.var(error, ddof=ddof)),
    )


def run_simulation(cfg: SimConfig, workers: int = 1) -> SimReport:
    return summarize(cfg, simulate_records(cfg, workers))


# --------------------------------------------------------------------------
# oracle suite


@dataclass
class OracleCheck:
    name: str
    passed: bool
    discrepancy: float
    tolerance: float
    detail: str = ""


@dataclass
class OracleReport:
    checks: list[OracleCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks]}


def enumerated_mean_estimate(world: BaselineWorld | NetworkWorld, design: RandomisationDesign) -> float:
    """E_z[tau_hat | omega] by summing over all 2^n assignments."""
    Z, probs = enumerate_arrays(design, world.n)
    Y = outcome(world, Z)
    psi = ht_representer_value(HtRepresenter(design.p_treat), Z)
    tau_hats = (Y * psi).mean(axis=1)
    return float(np.dot(probs, tau_hats))


def enumerated_unit_contrasts(world: BaselineWorld | NetworkWorld, design: RandomisationDesign) -> np.ndarray:
    """theta_i evaluated on each unit's outcome by exact contrast enumeration."""
    return np.array(
        [
            apply_functional_exact(
                unit_contrast(i), lambda Z, i=i: outcome(world, Z)[:, i], design, world.n, vectorized=True
            )
            for i in range(world.n)
        ]
    )


def check_unbiasedness(
    dgp: Literal["baseline", "network"],
    n: int,
    worlds: int,
    seed: int,
    *,
    d: float = 0.5,
    p_edge: float = 0.5,
    tolerance: float = 1e-10,
) -> OracleCheck:
    """max over worlds |E_z[tau_hat | omega] - tau_FPO(omega)|."""
    design = RandomisationDesign(0.5)
    worst = 0.0
    worst_contrast = 0.0
    for w_idx in range(worlds):
        rng = rep_rng(seed, w_idx)
        if dgp == "baseline":
            world = gen_baseline_world(n, d, rng)
            target = estimand_baseline(world)
        else:
            world = gen_network_world(n, d, p_edge, 0.5, "closed", rng)
            target = estimand_fpo_network(world)
        worst = max(worst, abs(enumerated_mean_estimate(world, design) - target))
        worst_contrast = max(worst_contrast, abs(enumerated_unit_contrasts(world, design).mean() - target))
    disc = max(worst, worst_contrast)
    return OracleCheck(
        name=f"unbiasedness[{dgp}, n={n}]",
        passed=bool(disc < tolerance),
        discrepancy=float(disc),
        tolerance=tolerance,
        detail=f"estimator vs closed form {worst:.3g}; contrast enumeration vs closed form {worst_contrast:.3g}",
    )


def simulate_inverse_neighbourhood(
    m: int, p_edge: float, graphs: int, seed: int, chunk: int = 100_000
) -> tuple[float, float]:
    """Mean and standard error of 1/|N_i| over ``graphs`` independent closed graphs.

    Each graph is one Erdos-Renyi block of size m; the per-graph statistic
    is the block average of 1/|N_i|.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(m, int(round(p_edge * 1e6)))))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < graphs:
        k = min(chunk, graphs - done)
        part = partition_from_sizes([m] * k)
        g = sample_blockwise_er(part, p_edge, "closed", rng)
        per_unit = 1.0 / g.neighbourhood_sizes
        per_graph = per_unit.reshape(k, m).mean(axis=1)
        total += per_graph.sum()
        total_sq += np.dot(per_graph, per_graph)
        done += k
    mean = total / graphs
    var = max(total_sq / graphs - mean**2, 0.0) * graphs / max(graphs - 1, 1)
    return mean, math.sqrt(var / graphs)


def check_inverse_degree(
    graphs: int,
    seed: int,
    grid_m: Sequence[int] = (1, 2, 5, 10),
    grid_p: Sequence[float] = (0.1, 0.5, 0.9),
    n_se: float = 3.0,
) -> list[OracleCheck]:
    checks = [
        OracleCheck("inverse-degree exact m=1", expected_inverse_neighbourhood(1, 0.3) == 1.0,
                    abs(expected_inverse_neighbourhood(1, 0.3) - 1.0), 0.0),
        OracleCheck("inverse-degree exact m=2,p=0.5",
                    abs(expected_inverse_neighbourhood(2, 0.5) - 0.75) < 1e-15,
                    abs(expected_inverse_neighbourhood(2, 0.5) - 0.75), 1e-15),
    ]
    for m in grid_m:
        for p in grid_p:
            closed = expected_inverse_neighbourhood(m, p)
            mean, se = simulate_inverse_neighbourhood(m, p, graphs, seed)
            disc = abs(mean - closed)
            # m = 1 is deterministic: se is zero and the match must be exact
            tol = n_se * se if se > 0 else 1e-15
            checks.append(
                OracleCheck(
                    name=f"inverse-degree m={m},p={p}",
                    passed=bool(disc <= tol),
                    discrepancy=float(disc),
                    tolerance=tol,
                    detail=f"simulated {mean:.6f} vs closed form {closed:.6f}",
                )
            )
    return checks


def check_rpo_equals_mean_fpo(
    n: int, worlds: int, seed: int, *, d: float = 0.5, p_edge: float = 0.3, n_se: float = 3.0
) -> OracleCheck:
    """Mean over worlds of tau_FPO - tau_RPO should vanish within Monte Carlo error."""
    diffs = np.empty(worlds)
    for w_idx in range(worlds):
        world = gen_network_world(n, d, p_edge, 0.5, "closed", rep_rng(seed, w_idx))
        diffs[w_idx] = estimand_fpo_network(world) - estimand_rpo_network(
            world.partition, world.beta, world.gamma_spill, p_edge
        )
    mean = float(diffs.mean())
    se = float(diffs.std(ddof=1) / math.sqrt(worlds)) if worlds > 1 else float("inf")
    return OracleCheck(
        name=f"rpo=E[fpo] n={n}",
        passed=bool(abs(mean) <= n_se * se),
        discrepancy=float(abs(mean)),
        tolerance=n_se * se,
        detail=f"{worlds} worlds",
    )


def check_representer_identity(n: int, seed: int, tolerance: float = 1e-8) -> OracleCheck:
    """E_z[u psi_hat] = theta(u) for random u in the span of a saturated basis."""
    design = RandomisationDesign(0.5)
    units = tuple(range(min(n, 3)))
    basis = saturated_basis(units)
    f = unit_contrast(0)
    fit = fit_representer(basis, f, design, n)
    Z, probs = enumerate_arrays(design, n)
    psi_hat = evaluate_representer(fit.coeffs, basis, Z)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        c = rng.standard_normal(basis.m)
        u = basis.design_matrix(Z) @ c
        lhs = float(np.dot(probs, u * psi_hat))
        rhs = apply_functional_exact(f, lambda ZZ, c=c: basis.design_matrix(ZZ) @ c, design, n, vectorized=True)
        worst = max(worst, abs(lhs - rhs))
    ht = ht_representer_value(HtRepresenter(0.5), Z[:, 0])
    worst = max(worst, float(np.max(np.abs(psi_hat - ht))))
    return OracleCheck(f"representer identity n={n}", bool(worst < tolerance), float(worst), tolerance)


def run_oracle_suite(max_n: int, worlds: int, seed: int, graphs: int = 100_000) -> OracleReport:
    if not (1 <= max_n <= MAX_ORACLE_N):
        raise ValueError(f"max_n must lie in [1, {MAX_ORACLE_N}], got {max_n}")
    if worlds < 1:
        raise ValueError("worlds must be positive")
    report = OracleReport()
    report.checks.append(check_unbiasedness("baseline", max_n, worlds, seed))
    report.checks.append(check_unbiasedness("network", max_n, worlds, seed + 1))
    report.checks.extend(check_inverse_degree(graphs, seed + 2))
    report.checks.append(check_rpo_equals_mean_fpo(max_n, max(worlds, 2) * 100, seed + 3))
    report.checks.append(check_representer_identity(max_n, seed + 4))
    return report
