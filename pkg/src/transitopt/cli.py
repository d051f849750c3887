"""Command-line pipeline: validate, solve, evaluate, compare, oracle, export.

Exit codes are a stable contract: 0 success, 1 validation failure, 2 I/O
failure, 3 infeasible, 4 oracle mismatch. All artifacts land under --out with
fixed names; a manifest records checksums of everything written.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from .backend import SolveResult, SolverConfig, decode_plan, solve
from .evaluator import UnroutableDemandError, assign_flows, compute_metrics
from .lpio import write_lp
from .model import build_model, model_stats
from .network import Scenario, ScenarioError, load_scenario, validate_scenario
from .oracle import OracleSizeError, certify
from .plan import PlanError, ServicePlan, load_plan

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2
EXIT_INFEASIBLE = 3
EXIT_MISMATCH = 4

__all__ = ["main", "entry"]


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


class _Run:
    """Collects artifacts for one command and writes the manifest."""

    def __init__(self, args, command: str):
        self.command = command
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts: dict[str, str] = {}
        self.started = datetime.now(timezone.utc).isoformat()
        self.extra: dict = {}

    def write_text(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text)
        self.artifacts[name] = _sha256(path)
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "scenario_path": str(self.args.scenario),
            "scenario_sha256": _sha256(Path(self.args.scenario)) if Path(self.args.scenario).is_file() else None,
            "options_overrides": _override_dict(self.args),
            "solver": {
                "time_limit_s": getattr(self.args, "time_limit", None),
                "rel_gap": getattr(self.args, "gap", None),
                "seed": getattr(self.args, "seed", None),
            },
            "out_dir": str(self.out),
            "started_at": self.started,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "artifacts": self.artifacts,
        }
        manifest.update(self.extra)
        (self.out / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _override_dict(args) -> dict:
    out = {}
    if getattr(args, "no_transfers", False):
        out["allow_transfers"] = False
    if getattr(args, "symmetry", False):
        out["enforce_symmetry"] = True
    if getattr(args, "capacity", False):
        out["enforce_capacity"] = True
    if getattr(args, "full_pattern", False):
        out["require_full_pattern"] = True
    if getattr(args, "integer_fleet", False):
        out["integer_fleet"] = True
    return out


def _load_scenario(args) -> Scenario | int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    overrides = _override_dict(args)
    if overrides:
        scenario = replace(scenario, options=replace(scenario.options, **overrides))
    return scenario


def _validated(args) -> Scenario | int:
    scenario = _load_scenario(args)
    if isinstance(scenario, int):
        return scenario
    violations = validate_scenario(scenario)
    if violations:
        for v in violations:
            _err(f"invalid: {v}")
        return EXIT_INVALID
    return scenario


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        time_limit_s=args.time_limit,
        rel_gap=args.gap,
        seed=args.seed,
    )


def render_patterns(scenario: Scenario, plan: ServicePlan) -> str:
    """One line per pattern: served stops marked, skipped stops dashed."""
    lines = []
    for r, route in enumerate(scenario.routes):
        names = route.stop_names
        n = route.n_physical
        for t in range(len(scenario.periods)):
            cell = plan.cell(r, t)
            lines.append(f"route {route.id} period {t}  fleet {cell.fleet:.6g}")
            for p, pat in enumerate(cell.patterns):
                if not pat.in_service:
                    lines.append(f"  pattern {p}: out of service")
                    continue
                served = set(pat.stops)
                out_marks = " ".join(
                    f"{names[k]}{'*' if k in served else '-'}" for k in range(n))
                in_marks = " ".join(
                    f"{names[route.physical_of(k)]}{'*' if k in served else '-'}"
                    for k in range(n, 2 * n))
                lines.append(
                    f"  pattern {p} [{pat.headway:g} min] out> {out_marks} | in< {in_marks}")
    return "\n".join(lines) + "\n"


def _metrics_csv(metrics_dict: dict) -> str:
    rows = ["metric,value"]
    for key in sorted(metrics_dict):
        val = metrics_dict[key]
        if isinstance(val, dict):
            for sub in sorted(val):
                rows.append(f"{key}.{sub},{val[sub]}")
        else:
            rows.append(f"{key},{val}")
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    scenario = _load_scenario(args)
    if isinstance(scenario, int):
        return scenario
    violations = validate_scenario(scenario)
    for v in violations:
        print(str(v))
    return EXIT_OK if not violations else EXIT_INVALID


def _solve_pipeline(scenario: Scenario, args, run: _Run):
    """Shared by solve/compare: build, export, solve, decode, report."""
    model = build_model(scenario)
    run.write_json("model_stats.json", model_stats(model))
    run.write_text("model.lp", write_lp(model))
    result = solve(model, _solver_config(args))
    run.extra["solver_status"] = result.status
    run.extra["solver_wall_time_s"] = result.wall_time_s
    _err(f"solver: status={result.status} objective={result.objective} "
         f"wall={result.wall_time_s:.2f}s")
    if not result.ok:
        return result, None, None
    plan, flows = decode_plan(model, result)
    metrics = compute_metrics(flows, scenario, plan)
    return result, plan, metrics


def cmd_solve(args) -> int:
    scenario = _validated(args)
    if isinstance(scenario, int):
        return scenario
    run = _Run(args, "solve")
    result, plan, metrics = _solve_pipeline(scenario, args, run)
    if plan is None:
        run.finish()
        return EXIT_INFEASIBLE
    run.write_text("plan.json", plan.to_json())
    run.write_json("metrics.json", metrics.to_dict())
    run.write_text("metrics.csv", _metrics_csv(metrics.to_dict()))
    run.write_text("patterns.txt", render_patterns(scenario, plan))
    run.extra["objective"] = result.objective
    run.finish()
    print(f"objective {result.objective}")
    return EXIT_OK


def _load_plan_file(path: str, scenario: Scenario):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        _err(f"error: cannot read plan file {p}: {exc}")
        return EXIT_IO
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        _err(f"error: {p}: not valid JSON ({exc})")
        return EXIT_IO
    try:
        return load_plan(doc, scenario)
    except PlanError as exc:
        _err(f"invalid plan: {exc}")
        return EXIT_INVALID


def cmd_evaluate(args) -> int:
    scenario = _validated(args)
    if isinstance(scenario, int):
        return scenario
    plan = _load_plan_file(args.plan, scenario)
    if isinstance(plan, int):
        return plan
    run = _Run(args, "evaluate")
    try:
        flows = assign_flows(scenario, plan)
    except UnroutableDemandError as exc:
        _err(f"infeasible: {exc}")
        run.extra["infeasible_pair"] = {"t": exc.t, "route": exc.r, "o": exc.o, "d": exc.d}
        run.finish()
        return EXIT_INFEASIBLE
    metrics = compute_metrics(flows, scenario, plan)
    run.write_json("metrics.json", metrics.to_dict())
    run.write_text("metrics.csv", _metrics_csv(metrics.to_dict()))
    run.write_text("patterns.txt", render_patterns(scenario, plan))
    run.finish()
    print(f"objective {metrics.objective}")
    return EXIT_OK


def _percent(new: float, old: float) -> float | None:
    if old == 0:
        return None
    return (new - old) / old * 100.0


def cmd_compare(args) -> int:
    scenario = _validated(args)
    if isinstance(scenario, int):
        return scenario
    baseline_plan = _load_plan_file(args.baseline, scenario)
    if isinstance(baseline_plan, int):
        return baseline_plan
    run = _Run(args, "compare")
    try:
        base_flows = assign_flows(scenario, baseline_plan)
    except UnroutableDemandError as exc:
        _err(f"infeasible baseline: {exc}")
        run.finish()
        return EXIT_INFEASIBLE
    base_metrics = compute_metrics(base_flows, scenario, baseline_plan)
    result, plan, metrics = _solve_pipeline(scenario, args, run)
    if plan is None:
        run.finish()
        return EXIT_INFEASIBLE
    run.write_text("plan.json", plan.to_json())
    run.write_json("metrics.json", metrics.to_dict())
    run.write_text("patterns.txt", render_patterns(scenario, plan))
    base_fleet = base_metrics.fleet_by_route_period
    opt_fleet = metrics.fleet_by_route_period
    comparison = {
        "baseline": base_metrics.to_dict(),
        "optimized": metrics.to_dict(),
        "percent_change": {
            "objective": _percent(metrics.objective, base_metrics.objective),
            "avg_riding_time_min": _percent(metrics.avg_riding_min, base_metrics.avg_riding_min),
            "avg_wait_time_min": _percent(metrics.avg_waiting_min, base_metrics.avg_waiting_min),
            "number_of_transfers": _percent(metrics.transfers_count, base_metrics.transfers_count),
            "fleet_by_route_period": {
                f"route{r}_period{t}": _percent(opt_fleet[(r, t)], base_fleet[(r, t)])
                for (r, t) in sorted(opt_fleet)
            },
        },
    }
    run.write_json("comparison.json", comparison)
    run.finish()
    delta = comparison["percent_change"]["objective"]
    print(f"baseline {base_metrics.objective} optimized {metrics.objective} "
          f"delta {delta if delta is None else round(delta, 4)}%")
    return EXIT_OK


def cmd_oracle(args) -> int:
    scenario = _validated(args)
    if isinstance(scenario, int):
        return scenario
    run = _Run(args, "oracle")
    model = build_model(scenario)
    result = solve(model, _solver_config(args))
    _err(f"solver: status={result.status} objective={result.objective}")
    if not result.ok:
        run.extra["solver_status"] = result.status
        run.finish()
        return EXIT_INFEASIBLE
    try:
        report = certify(scenario, result, cross_check=args.cross_check)
    except OracleSizeError as exc:
        _err(f"invalid: {exc}")
        run.finish()
        return EXIT_INVALID
    run.write_json("oracle_report.json", report.to_dict())
    run.finish()
    print(f"oracle best {report.best_objective} solver {report.milp_objective} "
          f"verdict {report.verdict}")
    return EXIT_OK if report.verdict == "match" else EXIT_MISMATCH


def cmd_export(args) -> int:
    scenario = _validated(args)
    if isinstance(scenario, int):
        return scenario
    run = _Run(args, "export")
    model = build_model(scenario)
    run.write_text("model.lp", write_lp(model))
    run.write_json("model_stats.json", model_stats(model))
    run.finish()
    print(f"exported {len(model.variables)} variables, {len(model.rows)} rows")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, *, out_required: bool = True) -> None:
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    if out_required:
        p.add_argument("--out", required=True, help="output directory for artifacts")
    p.add_argument("--time-limit", type=float, default=600.0, help="solver time limit (s)")
    p.add_argument("--gap", type=float, default=0.0, help="relative MIP gap target")
    p.add_argument("--seed", type=int, default=None, help="backend seed hint")
    p.add_argument("--no-transfers", action="store_true", help="disable transfer flows")
    p.add_argument("--symmetry", action="store_true", help="force mirrored patterns")
    p.add_argument("--capacity", action="store_true", help="enforce vehicle capacity")
    p.add_argument("--full-pattern", action="store_true", help="pin pattern 0 to all stops")
    p.add_argument("--integer-fleet", action="store_true", help="whole vehicles per route")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transitopt",
        description="Joint service pattern, headway and fleet optimization for transit corridors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario document")
    _add_common(p, out_required=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="optimize a scenario and report the design")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="price a fixed plan with the flow evaluator")
    _add_common(p)
    p.add_argument("--plan", required=True, help="plan JSON file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="solve and compare against a baseline plan")
    _add_common(p)
    p.add_argument("--baseline", required=True, help="baseline plan JSON file")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("oracle", help="certify a toy scenario by brute force")
    _add_common(p)
    p.add_argument("--cross-check", choices=["none", "sample", "all"], default="sample")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("export", help="write the model in LP interchange format")
    _add_common(p)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
