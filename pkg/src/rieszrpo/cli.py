"""Command-line driver: simulation grids, the oracle suite and representer fits.

Exit codes: 0 success, 1 failed check or singular solve, 2 usage or config
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import itertools
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .design import RandomisationDesign, enumerate_arrays
from .errors import RieszError, SingularGramError
from .functionals import MAX_EXACT_N, unit_contrast
from .montecarlo import (
    MAX_ORACLE_N,
    RepRecord,
    SimConfig,
    SimReport,
    run_oracle_suite,
    simulate_records,
    summarize,
)
from .representer import (
    constant_basis,
    evaluate_representer,
    export_system,
    fit_representer,
    indicator_basis,
    saturated_basis,
    walsh_basis,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_IO = 3

SEED_ENV = "RIESZ_RPO_SEED"
RESULTS_HEADER = (
    "dgp", "n", "d", "mode", "level", "reps", "rejection_rate", "coverage",
    "mean_tau_hat", "var_tau_hat", "mean_sigma2_hat", "degenerate_count", "seed",
)
RECORD_HEADER = ("rep", "tau_hat", "sigma2_hat", "tau_target", "covered", "degenerate")

# keys a [grid:NAME] section may carry; n, d and mode are comma lists expanded into the grid
GRID_KEYS = {"dgp", "n", "d", "mode", "levels", "reps", "p_edge", "gamma_spill", "p_treat", "convention", "centring"}
RUN_KEYS = {"seed", "threads", "records"}


class UsageError(Exception):
    """Bad command line or configuration; maps to exit code 2."""


def fmt(x: float) -> str:
    return f"{x:.6g}"


# --------------------------------------------------------------------------
# configuration


@dataclass
class GridPlan:
    name: str
    values: dict[str, str]
    lines: dict[str, int] = field(default_factory=dict)


@dataclass
class RunPlan:
    run: dict[str, str]
    grids: list[GridPlan]

    def canonical(self) -> dict:
        return {"run": dict(self.run), "grids": {g.name: dict(g.values) for g in self.grids}}


def config_hash(plan: RunPlan) -> str:
    """sha256 of a canonical JSON form; independent of key and section order."""
    payload = json.dumps(plan.canonical(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Map (section, key) to its 1-based line number for diagnostics."""
    where: dict[tuple[str, str], int] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
        elif "=" in line:
            where[(section, line.split("=", 1)[0].strip().lower())] = lineno
    return where


def parse_config(text: str, source: str = "<config>") -> RunPlan:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise UsageError(f"{source}: {exc}") from exc
    lines = _key_lines(text)
    run: dict[str, str] = {}
    grids: list[GridPlan] = []
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "run":
            unknown = set(items) - RUN_KEYS
            if unknown:
                key = sorted(unknown)[0]
                raise UsageError(f"{source}:{lines.get((section, key), '?')}: unknown key {key!r} in [run]")
            run = items
        elif section.startswith("grid:") and section[5:].strip():
            unknown = set(items) - GRID_KEYS
            if unknown:
                key = sorted(unknown)[0]
                raise UsageError(f"{source}:{lines.get((section, key), '?')}: unknown key {key!r} in [{section}]")
            name = section[5:].strip()
            grids.append(GridPlan(name, items, {k: lines.get((section, k), 0) for k in items}))
        else:
            raise UsageError(f"{source}: unexpected section [{section}]; use [run] or [grid:NAME]")
    return RunPlan(run, grids)


def apply_overrides(plan: RunPlan, overrides: Sequence[str]) -> None:
    """``key=value`` sets a key in every grid; ``NAME.key=value`` targets one grid."""
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        target, _, key = key.rpartition(".")
        key = key.lower()
        if target == "run" or (not target and key in RUN_KEYS):
            if key not in RUN_KEYS:
                raise UsageError(f"--set: unknown run key {key!r}")
            plan.run[key] = value
            continue
        if key not in GRID_KEYS:
            raise UsageError(f"--set: unknown grid key {key!r}")
        grids = [g for g in plan.grids if not target or g.name == target]
        if target and not grids:
            raise UsageError(f"--set: no grid named {target!r}")
        for g in grids:
            g.values[key] = value
            g.lines[key] = 0


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.replace(";", ",").split(",") if v.strip()]


def _field_error(grid: GridPlan, key: str, message: str) -> UsageError:
    line = grid.lines.get(key, 0)
    where = f"line {line}" if line else "override"
    return UsageError(f"[grid:{grid.name}] {key} ({where}): {message}")


def _convert(grid: GridPlan, key: str, raw: str, kind):
    try:
        return kind(raw)
    except ValueError as exc:
        raise _field_error(grid, key, f"cannot parse {raw!r}") from exc


def expand_grid(grid: GridPlan, master_seed: int) -> list[SimConfig]:
    v = grid.values
    if "dgp" not in v or "n" not in v:
        missing = "dgp" if "dgp" not in v else "n"
        raise UsageError(f"[grid:{grid.name}]: missing required key {missing!r}")
    ns = [_convert(grid, "n", x, int) for x in _split(v["n"])]
    ds = [_convert(grid, "d", x, float) for x in _split(v.get("d", "0"))]
    modes = _split(v.get("mode", "size"))
    if not ns or not ds or not modes:
        raise _field_error(grid, "n" if not ns else "d" if not ds else "mode", "empty list")
    common = {"dgp": v["dgp"].strip()}
    if "levels" in v:
        common["levels"] = tuple(_convert(grid, "levels", x, float) for x in _split(v["levels"]))
    for key, kind in (("reps", int), ("p_edge", float), ("gamma_spill", float), ("p_treat", float)):
        if key in v:
            common[key] = _convert(grid, key, v[key], kind)
    for key in ("convention", "centring"):
        if key in v:
            common[key] = v[key].strip()
    configs = []
    for n, d, mode in itertools.product(ns, ds, modes):
        try:
            configs.append(SimConfig(n=n, d=d, mode=mode, master_seed=master_seed, **common))
        except ValueError as exc:
            field_name = str(exc).split()[0] if str(exc) else "value"
            key = field_name if field_name in GRID_KEYS else "dgp"
            raise _field_error(grid, key, str(exc)) from exc
    return configs


def resolve_seed(cli_seed: int | None, plan: RunPlan) -> int:
    """--seed, then the config [run] seed, then $RIESZ_RPO_SEED, then 0."""
    for source, raw in (("--seed", cli_seed), ("[run] seed", plan.run.get("seed")), (SEED_ENV, os.environ.get(SEED_ENV))):
        if raw is None or raw == "":
            continue
        try:
            seed = int(raw)
        except ValueError as exc:
            raise UsageError(f"{source}: seed must be an integer, got {raw!r}") from exc
        if not (0 <= seed < 2**64):
            raise UsageError(f"{source}: seed must be an unsigned 64-bit integer")
        return seed
    return 0


def _parse_bool(raw: str, what: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"{what}: expected a boolean, got {raw!r}")


# --------------------------------------------------------------------------
# results files


def report_rows(report: SimReport) -> list[dict[str, str]]:
    cfg = report.config
    rows = []
    for level in cfg.levels:
        rows.append(
            {
                "dgp": cfg.dgp,
                "n": str(cfg.n),
                "d": fmt(cfg.d),
                "mode": cfg.mode,
                "level": fmt(level),
                "reps": str(cfg.reps),
                "rejection_rate": fmt(report.rejection[level]),
                "coverage": fmt(report.coverage),
                "mean_tau_hat": fmt(report.mean_tau_hat),
                "var_tau_hat": fmt(report.var_tau_hat),
                "mean_sigma2_hat": fmt(report.mean_sigma2_hat),
                "degenerate_count": str(report.degenerate_count),
                "seed": str(cfg.master_seed),
            }
        )
    return rows


def render_csv(rows: Sequence[dict[str, str]], header: Sequence[str] = RESULTS_HEADER) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def read_results(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULTS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def format_summary(rows: Sequence[dict[str, str]]) -> str:
    """Human-readable summary built only from results-file fields.

    The per-row table is followed by the mean rejection rate for each
    (dgp, mode, level) across the grid, so the same text can be rebuilt
    from a saved results file.
    """
    out = [f"{'dgp':<9}{'n':>6}{'d':>7}{'mode':>7}{'level':>7}{'reject':>10}{'coverage':>10}{'degen':>7}"]
    groups: dict[tuple[str, str, str], list[float]] = {}
    for r in rows:
        out.append(
            f"{r['dgp']:<9}{r['n']:>6}{r['d']:>7}{r['mode']:>7}{r['level']:>7}"
            f"{r['rejection_rate']:>10}{r['coverage']:>10}{r['degenerate_count']:>7}"
        )
        groups.setdefault((r["dgp"], r["mode"], r["level"]), []).append(float(r["rejection_rate"]))
    out.append("mean rejection by (dgp, mode, level):")
    for (dgp, mode, level), rates in groups.items():
        out.append(f"  {dgp} {mode} {level}: {fmt(sum(rates) / len(rates))} over {len(rates)} configs")
    return "\n".join(out) + "\n"


def _write_records(path: Path, records: Sequence[RepRecord]) -> None:
    rows = [
        {
            "rep": str(i),
            "tau_hat": repr(r.tau_hat),
            "sigma2_hat": repr(r.sigma2_hat),
            "tau_target": repr(r.tau_target),
            "covered": str(int(r.covered)),
            "degenerate": str(int(r.degenerate)),
        }
        for i, r in enumerate(records)
    ]
    path.write_text(render_csv(rows, RECORD_HEADER), encoding="utf-8", newline="")


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    started = _timestamp()
    try:
        plan = parse_config(text, source=str(args.config))
        apply_overrides(plan, args.set or [])
        if not plan.grids:
            raise UsageError(f"{args.config}: no [grid:NAME] sections; nothing to run")
        seed = resolve_seed(args.seed, plan)
        threads = args.threads if args.threads is not None else int(plan.run.get("threads", "1"))
        if threads < 1:
            raise UsageError("--threads must be at least 1")
        keep_records = args.records or _parse_bool(plan.run.get("records", "false"), "[run] records")
        configs = [(g.name, cfg) for g in plan.grids for cfg in expand_grid(g, seed)]
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.out)
    results_path = out / "results.csv"
    outputs = {"results": str(results_path)}
    rows: list[dict[str, str]] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for k, (name, cfg) in enumerate(configs):
            records = simulate_records(cfg, threads)
            rows.extend(report_rows(summarize(cfg, records)))
            if keep_records:
                rec_dir = out / "records"
                rec_dir.mkdir(exist_ok=True)
                rec_path = rec_dir / f"{k:03d}_{name}_{cfg.dgp}_n{cfg.n}_d{fmt(cfg.d)}_{cfg.mode}.csv"
                _write_records(rec_path, records)
                outputs[f"records[{k}]"] = str(rec_path)
        results_path.write_text(render_csv(rows), encoding="utf-8", newline="")
        manifest = {
            "tool": "rieszrpo",
            "version": __version__,
            "config_path": str(args.config),
            "config_hash": config_hash(plan),
            "config": plan.canonical(),
            "master_seed": seed,
            "threads": threads,
            "started": started,
            "finished": _timestamp(),
            "outputs": outputs,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        summary = format_summary(read_results(results_path))
    except OSError as exc:
        print(f"error: cannot write results under {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    sys.stdout.write(summary)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    if not (1 <= args.max_n <= MAX_ORACLE_N):
        print(f"error: --max-n must lie in [1, {MAX_ORACLE_N}] (exhaustive enumeration cap)", file=sys.stderr)
        return EXIT_USAGE
    if args.worlds < 1 or args.graphs < 2:
        print("error: --worlds must be positive and --graphs at least 2", file=sys.stderr)
        return EXIT_USAGE
    seed = args.seed if args.seed is not None else int(os.environ.get(SEED_ENV, "0") or 0)
    report = run_oracle_suite(args.max_n, args.worlds, seed, graphs=args.graphs)
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {c.name}: discrepancy {c.discrepancy:.3g} (tolerance {c.tolerance:.3g}) {c.detail}".rstrip())
    exact = [c for c in report.checks if c.name.startswith("unbiasedness")]
    worst = max((c.discrepancy for c in exact), default=0.0)
    print(f"worst enumeration discrepancy: {worst:.3g}")
    print("oracle suite: " + ("all checks passed" if report.passed else "FAILED"))
    if args.json:
        try:
            Path(args.json).write_text(json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")
        except OSError as exc:
            print(f"error: cannot write {args.json}: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK if report.passed else EXIT_FAILURE


def _build_basis(args: argparse.Namespace):
    units = [int(u) for u in _split(args.units)] if args.units else list(range(args.n))
    if any(not (0 <= u < args.n) for u in units):
        raise UsageError(f"--units must lie in [0, {args.n})")
    if args.basis == "indicator":
        return indicator_basis(args.unit)
    if args.basis == "constant":
        return constant_basis()
    if args.basis == "saturated":
        return saturated_basis(units)
    return walsh_basis(units, args.p, args.max_order)


def cmd_representer(args: argparse.Namespace) -> int:
    try:
        if not (1 <= args.n <= MAX_EXACT_N):
            raise UsageError(f"--n must lie in [1, {MAX_EXACT_N}] (the target vector is enumerated exactly)")
        if not (0 <= args.unit < args.n):
            raise UsageError(f"--unit must lie in [0, {args.n})")
        design = RandomisationDesign(args.p)
        basis = _build_basis(args)
        method = "exact" if args.method == "exact" else "monte_carlo"
        gram_kwargs = {} if method == "exact" else {"draws": args.draws, "seed": args.seed, "partitions": args.partitions}
        fit = fit_representer(basis, unit_contrast(args.unit), design, args.n, method, ridge=args.ridge, **gram_kwargs)
    except SingularGramError as exc:
        print(f"error: {exc}; condition number {exc.condition:.3g}", file=sys.stderr)
        return EXIT_FAILURE
    except (UsageError, RieszError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if np.all(fit.target == 0.0):
        print(
            "warning: target vector is zero; the contrast has no component in this basis span "
            "and the fitted representer is identically zero",
            file=sys.stderr,
        )
    Z, probs = enumerate_arrays(design, args.n)
    psi = evaluate_representer(fit.coeffs, basis, Z)
    out = Path(args.out)
    table = ["assignment,probability,psi_hat"]
    table += ["".join(str(int(v)) for v in row) + f",{float(pr)!r},{float(val)!r}" for row, pr, val in zip(Z, probs, psi)]
    try:
        out.mkdir(parents=True, exist_ok=True)
        export_system(out / "system.txt", fit.gram, fit.target, fit.coeffs)
        (out / "psi_table.csv").write_text("\n".join(table) + "\n", encoding="utf-8", newline="")
    except OSError as exc:
        print(f"error: cannot write under {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    print("beta = (" + ", ".join(fmt(b) for b in fit.coeffs.beta) + ")")
    if fit.coeffs.ridge_used:
        print(f"ridge used: {fit.coeffs.ridge_used:g}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(raw: str) -> int:
    value = int(raw)
    if not (0 <= value < 2**64):
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rieszrpo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rieszrpo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a Monte Carlo grid and write results.csv + manifest.json")
    sim.add_argument("--config", required=True, help="INI file with [run] and [grid:NAME] sections")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=_u64, default=None, help=f"master seed (default: config, then ${SEED_ENV})")
    sim.add_argument("--threads", type=int, default=None, help="worker processes; results do not depend on it")
    sim.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    sim.add_argument("--records", action="store_true", help="also write per-replication records")
    sim.set_defaults(func=cmd_simulate)

    orc = sub.add_parser("oracle", help="run the exhaustive-enumeration oracle suite")
    orc.add_argument("--max-n", type=int, default=6)
    orc.add_argument("--worlds", type=int, default=100)
    orc.add_argument("--seed", type=_u64, default=None)
    orc.add_argument("--graphs", type=int, default=100_000, help="graphs per inverse-degree grid point")
    orc.add_argument("--json", default=None, help="optional path for a JSON report")
    orc.set_defaults(func=cmd_oracle)

    rep = sub.add_parser("representer", help="fit a representer by Gram-matrix moment matching")
    rep.add_argument("--basis", choices=("indicator", "constant", "saturated", "walsh"), default="indicator")
    rep.add_argument("--n", type=int, default=1)
    rep.add_argument("--p", type=float, default=0.5, help="Bernoulli treatment probability")
    rep.add_argument("--unit", type=int, default=0, help="unit whose contrast is represented")
    rep.add_argument("--units", default=None, help="comma list of units for saturated/walsh bases (default: all)")
    rep.add_argument("--max-order", type=int, default=None, help="interaction order cap for the walsh basis")
    rep.add_argument("--method", choices=("exact", "mc"), default="exact")
    rep.add_argument("--draws", type=int, default=100_000)
    rep.add_argument("--partitions", type=int, default=1)
    rep.add_argument("--seed", type=_u64, default=0)
    rep.add_argument("--ridge", type=float, default=0.0)
    rep.add_argument("--out", required=True, help="output directory for system.txt and psi_table.csv")
    rep.set_defaults(func=cmd_representer)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
