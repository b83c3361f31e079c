"""Command-line front end: single runs, convergence studies, parameter sweeps.

All outputs are deterministic CSV files: fixed column order, 17-significant-
digit floats, LF line endings, row order fixed by (run, scheme, iteration,
slot, user) indices.  See README for the documented schemas.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path as FilePath

from . import bcd, ratemodel, scene

RUNS_HEADER = ["run", "scheme", "seed", "iter", "avg_sum_rate",
               "terr_sum_rate", "sat_sum_rate"]
PATHS_HEADER = ["run", "scheme", "seed", "iter", "slot", "platform", "x", "y", "z"]
RATES_HEADER = ["run", "scheme", "seed", "iter", "slot", "user", "tier", "sinr", "rate"]
NODES_HEADER = ["run", "scheme", "seed", "kind", "index", "x", "y", "z"]
SUMMARY_HEADER = ["sweep_key", "value", "scheme", "mean", "stderr", "n_runs", "n_failed"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(path: FilePath, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def runs_rows(result: bcd.RunResult, run: int):
    for it, (r, rt, rs) in enumerate(zip(result.trace, result.terr_trace,
                                         result.sat_trace)):
        yield (run, result.scheme, result.seed, it, float(r), float(rt), float(rs))


def paths_rows(result: bcd.RunResult, run: int):
    for it, uav, hap in result.paths_history:
        for platform, pos in (("uav", uav), ("hap", hap)):
            for slot in range(pos.shape[0]):
                yield (run, result.scheme, result.seed, it, slot, platform,
                       float(pos[slot, 0]), float(pos[slot, 1]), float(pos[slot, 2]))


def nodes_rows(result: bcd.RunResult, run: int):
    scn = result.scenario
    yield (run, result.scheme, result.seed, "tbs", 0,
           float(scn.tbs_pos[0]), float(scn.tbs_pos[1]), float(scn.tbs_pos[2]))
    yield (run, result.scheme, result.seed, "sat", 0,
           float(scn.sat_pos[0]), float(scn.sat_pos[1]), float(scn.sat_pos[2]))
    for k, q in enumerate(scn.users_t):
        yield (run, result.scheme, result.seed, "terr_user", k,
               float(q[0]), float(q[1]), float(q[2]))
    for l, q in enumerate(scn.users_s):
        yield (run, result.scheme, result.seed, "sat_user", l,
               float(q[0]), float(q[1]), float(q[2]))


def _load_config(path: str) -> dict[str, str]:
    try:
        text = FilePath(path).read_text()
    except OSError as exc:
        raise scene.ConfigError(f"cannot read config '{path}': {exc}") from exc
    return scene.parse_config(text)


def _scenario(cfg: dict[str, str]) -> scene.Scenario:
    return scene.scenario_from_mapping(cfg)


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    scn = _scenario(cfg)
    out = FilePath(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = bcd.bcd_solve(scn, args.scheme, args.seed, eps=args.tol,
                           t_max=args.max_iter)
    write_csv(out / "runs.csv", RUNS_HEADER, runs_rows(result, 0))
    write_csv(out / "paths.csv", PATHS_HEADER, paths_rows(result, 0))
    write_csv(out / "rates.csv", RATES_HEADER,
              ratemodel.report_rows(result.report, 0, result.scheme,
                                    result.seed, result.n_iters))
    write_csv(out / "nodes.csv", NODES_HEADER, nodes_rows(result, 0))
    print(f"{result.scheme} seed={result.seed} final avg sum-rate: "
          f"{result.final_rate:.6f} bits/s/Hz "
          f"({'converged' if result.converged else 'max-iter'} "
          f"after {result.n_iters} iterations)")
    return 0


def cmd_convergence(args) -> int:
    cfg = _load_config(args.config)
    scn = _scenario(cfg)
    out = FilePath(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    schemes = args.scheme or ["proposed_active", "passive_ris", "random_ris", "no_ris"]
    rows = []
    for idx, tag in enumerate(schemes):
        result = bcd.bcd_solve(scn, tag, args.seed, eps=args.tol, t_max=args.max_iter)
        rows.extend(runs_rows(result, idx))
        print(f"{tag}: final {result.final_rate:.6f} bits/s/Hz")
    write_csv(out / "runs.csv", RUNS_HEADER, rows)
    return 0


@dataclass(frozen=True)
class SweepSpec:
    """One parameter sweep: swept config key, value grid, schemes, runs/point."""

    key: str
    grid: list[float]
    schemes: list[str] = field(default_factory=lambda: ["proposed_active"])
    runs_per_point: int = 5

    def __post_init__(self):
        if self.key not in scene.sweepable_keys():
            raise scene.ConfigError(f"unknown sweep key '{self.key}'")
        if not self.grid:
            raise scene.ConfigError("sweep grid must be nonempty")
        if sorted(self.grid) != list(self.grid) or len(set(self.grid)) != len(self.grid):
            raise scene.ConfigError("sweep grid must be strictly increasing")


def sweep_grid(cfg: dict[str, str], spec: SweepSpec):
    """Yield (value, Scenario) per grid point of a validated sweep."""
    for v in spec.grid:
        mod = dict(cfg)
        mod[spec.key] = _fmt(float(v))
        yield v, scene.scenario_from_mapping(mod)


def run_sweep(cfg: dict[str, str], spec: SweepSpec, base_seed: int, workers: int,
              eps: float, t_max: int):
    """Summary rows (key, value, scheme, mean, stderr, n_ok, n_failed)."""
    rows = []
    for value, scn in sweep_grid(cfg, spec):
        try:
            table = bcd.monte_carlo(scn, spec.schemes, n_runs=spec.runs_per_point,
                                    base_seed=base_seed, workers=workers,
                                    eps=eps, t_max=t_max)
        except Exception as exc:  # record per-point failure, keep sweeping
            print(f"sweep point {spec.key}={value} failed: {exc}", file=sys.stderr)
            for tag in spec.schemes:
                rows.append((spec.key, float(value), tag, float("nan"),
                             float("nan"), 0, spec.runs_per_point))
            continue
        for row in table["rows"]:
            rows.append((spec.key, float(value), row["scheme"],
                         row["mean"], row["stderr"], row["n_ok"], row["n_failed"]))
            print(f"{spec.key}={value} {row['scheme']}: "
                  f"mean {row['mean']:.6f} (n={row['n_ok']})")
    return rows


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    out = FilePath(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = SweepSpec(key=args.sweep_key,
                     grid=[float(v) for v in args.grid.split(",")],
                     schemes=args.scheme or ["proposed_active"],
                     runs_per_point=args.runs)
    rows = run_sweep(cfg, spec, args.seed, args.workers, args.tol, args.max_iter)
    write_csv(out / "summary.csv", SUMMARY_HEADER, rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arislab",
        description="Dual-aerial active-RIS NOMA network simulation lab")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, multi_scheme=False):
        p.add_argument("--config", required=True, help="scenario config file")
        if multi_scheme:
            p.add_argument("--scheme", action="append",
                           help="scheme tag (repeatable)")
        else:
            p.add_argument("--scheme", default="proposed_active",
                           help="scheme tag (default proposed_active)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--tol", type=float, default=1e-3,
                       help="outer-loop convergence threshold (bits/s/Hz)")
        p.add_argument("--max-iter", type=int, default=30)

    p_run = sub.add_parser("run", help="single optimizer run, writes CSVs")
    common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_conv = sub.add_parser("convergence", help="per-iteration traces, many schemes")
    common(p_conv, multi_scheme=True)
    p_conv.set_defaults(fn=cmd_convergence)

    p_sweep = sub.add_parser("sweep", help="parameter sweep with Monte Carlo runs")
    common(p_sweep, multi_scheme=True)
    p_sweep.add_argument("--sweep-key", required=True)
    p_sweep.add_argument("--grid", required=True, help="comma-separated values")
    p_sweep.add_argument("--runs", type=int, default=5, help="runs per grid point")
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except scene.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
