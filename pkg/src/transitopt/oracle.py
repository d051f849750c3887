"""Brute-force certifier for desk-scale instances.

Enumerates every service design a small scenario admits (stop subsets in loop
order crossed with menu headways, deduplicated under the same ordering rule
the optimizer uses), prices each design with the independent flow evaluator,
and compares the minimum against a solver result. Designs that break the
fleet pools are skipped; designs that cannot carry some demand are counted
but never become the minimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations as subsets_of
from itertools import product
from typing import Any, Iterator

from .backend import SolveResult, SolverConfig, solve
from .evaluator import UnroutableDemandError, assign_flows, compute_metrics
from .model import build_model, fix_baseline
from .network import RouteSpec, Scenario
from .plan import PatternPlan, RoutePeriodPlan, ServicePlan, loop_arcs

__all__ = [
    "OracleSizeError",
    "InternalInconsistencyError",
    "OracleReport",
    "enumerate_plans",
    "certify",
]

REL_TOL = 1e-6
_TIE_TOL = 1e-9

MAX_PHYSICAL = 6
MAX_PATTERNS = 2
MAX_MENU = 2
MAX_DESIGNS = 200_000


class OracleSizeError(ValueError):
    """Instance too large for exhaustive enumeration."""


class InternalInconsistencyError(RuntimeError):
    """Evaluator and fixed-design solver disagree on some plan: builder bug."""


def _guard_size(scenario: Scenario) -> None:
    if len(scenario.periods) != 1:
        raise OracleSizeError("oracle handles single-period instances only")
    for route in scenario.routes:
        if route.n_physical > MAX_PHYSICAL:
            raise OracleSizeError(
                f"route {route.id} has {route.n_physical} stops; oracle limit is {MAX_PHYSICAL}")
        if route.n_patterns > MAX_PATTERNS:
            raise OracleSizeError(
                f"route {route.id} has {route.n_patterns} patterns; oracle limit is {MAX_PATTERNS}")
        if len(route.headway_menu(0)) > MAX_MENU:
            raise OracleSizeError(
                f"route {route.id} menu larger than {MAX_MENU}; too many designs")


def _served_subsets(route: RouteSpec, symmetric: bool) -> list[tuple[int, ...]]:
    """Candidate served-stop sets, as direction-stop tuples in loop order."""
    nd = route.n_dir
    n = route.n_physical
    out: list[tuple[int, ...]] = []
    if symmetric:
        for size in range(2, n + 1):
            for phys in subsets_of(range(n), size):
                stops = sorted(list(phys) + [nd - 1 - p for p in phys])
                out.append(tuple(stops))
    else:
        for size in range(2, nd + 1):
            for stops in subsets_of(range(nd), size):
                out.append(tuple(stops))
    return [s for s in out
            if all(route.arc_allowed(u, v) for u, v in loop_arcs(s))]


def _route_designs(route: RouteSpec, scenario: Scenario) -> list[tuple]:
    """Per-pattern (headway index, subset index) choices, None = off.

    Canonical ordering mirrors the optimizer's dedup rule: in-service
    patterns first, menu indices ascending, ties broken by subset.
    """
    opts = scenario.options
    menu = route.headway_menu(0)
    subsets = _served_subsets(route, opts.enforce_symmetry)
    if not subsets:
        raise OracleSizeError(f"route {route.id}: no feasible served-stop subsets")
    full = route.full_loop()
    active = [(h, s) for h in range(1, len(menu) + 1) for s in range(len(subsets))]

    designs: list[tuple] = []

    def rec(prefix: list) -> None:
        p = len(prefix)
        if p == route.n_patterns:
            if any(ch is not None for ch in prefix):
                designs.append(tuple(prefix))
            return
        if p == 0 and opts.require_full_pattern:
            if full not in subsets:
                raise OracleSizeError(
                    f"route {route.id}: full pattern required but full loop not allowed")
            full_idx = subsets.index(full)
            for h in range(1, len(menu) + 1):
                rec(prefix + [(h, full_idx)])
            return
        prev = prefix[-1] if prefix else None
        if prefix and prev is None:
            rec(prefix + [None])
            return
        rec(prefix + [None])
        for choice in active:
            if prev is not None and choice < prev:
                continue
            rec(prefix + [choice])
        return

    rec([])
    return [(design, subsets) for design in designs]


def _design_to_cell(route: RouteSpec, design: tuple, subsets: list, menu) -> RoutePeriodPlan:
    pats = []
    fleet = 0.0
    for choice in design:
        if choice is None:
            pats.append(PatternPlan(stops=(), headway=None, headway_index=0))
            continue
        h, s = choice
        pat = PatternPlan(stops=subsets[s], headway=menu[h - 1], headway_index=h)
        fleet += pat.cycle_time(route) / pat.headway
        pats.append(pat)
    return RoutePeriodPlan(patterns=tuple(pats), fleet=fleet)


def enumerate_plans(scenario: Scenario, *, max_designs: int = MAX_DESIGNS) -> Iterator[ServicePlan]:
    """Yield every distinct feasible-by-fleet design of a toy scenario."""
    _guard_size(scenario)
    per_route = [_route_designs(route, scenario) for route in scenario.routes]
    total = 1
    for designs in per_route:
        total *= len(designs)
        if total > max_designs:
            raise OracleSizeError(
                f"{total}+ designs exceed the enumeration limit of {max_designs}")

    duration = scenario.periods[0].duration_hours
    menus = [route.headway_menu(0) for route in scenario.routes]
    for combo in product(*per_route):
        cells = []
        fleet_total = 0.0
        for r, (design, subsets) in enumerate(combo):
            cell = _design_to_cell(scenario.routes[r], design, subsets, menus[r])
            fleet_total += cell.fleet
            cells.append((cell,))
        if fleet_total > scenario.fleet_cap + 1e-9:
            continue
        if duration * fleet_total > scenario.vehicle_hours_cap + 1e-9:
            continue
        yield ServicePlan(cells=tuple(cells))


@dataclass
class OracleReport:
    best_objective: float | None
    best_plans: list[ServicePlan]
    enumerated_count: int
    unroutable_count: int
    milp_objective: float | None
    verdict: str                 # "match" or "mismatch"
    delta: float | None = None
    cross_checked: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "best_objective": self.best_objective,
            "best_plans": [p.to_dict() for p in self.best_plans],
            "enumerated_count": self.enumerated_count,
            "unroutable_count": self.unroutable_count,
            "milp_objective": self.milp_objective,
            "verdict": self.verdict,
            "delta": self.delta,
            "cross_checked": self.cross_checked,
        }


def certify(scenario: Scenario, milp_result: SolveResult, *,
            cross_check: str = "sample", sample_every: int = 50,
            solver_cfg: SolverConfig | None = None) -> OracleReport:
    """Exhaustively price all designs and compare with a solver result.

    cross_check controls how many enumerated plans are additionally priced
    through the fixed-design solver path ("none", "sample", "all"); any
    disagreement beyond 1e-6 relative flags an internal inconsistency.
    """
    if cross_check not in ("none", "sample", "all"):
        raise ValueError(f"unknown cross_check mode {cross_check!r}")

    best: float | None = None
    candidates: list[tuple[float, ServicePlan]] = []
    enumerated = 0
    evaluated = 0
    unroutable = 0
    to_cross: list[tuple[ServicePlan, float]] = []

    for plan in enumerate_plans(scenario):
        enumerated += 1
        try:
            fa = assign_flows(scenario, plan)
        except UnroutableDemandError:
            unroutable += 1
            continue
        obj = compute_metrics(fa, scenario, plan).objective
        if best is None or obj < best - _TIE_TOL:
            best = obj
        if obj <= best + _TIE_TOL:
            candidates.append((obj, plan))
        if cross_check == "all" or (cross_check == "sample" and evaluated % sample_every == 0):
            to_cross.append((plan, obj))
        evaluated += 1

    best_plans = [p for o, p in candidates if best is not None and o <= best + _TIE_TOL]

    cross_checked = 0
    if cross_check != "none" and (to_cross or best_plans):
        base_model = build_model(scenario)
        cfg = solver_cfg or SolverConfig()
        if best_plans:
            to_cross.append((best_plans[0], best))
        for plan, obj in to_cross:
            fixed = fix_baseline(base_model, plan)
            res = solve(fixed, cfg)
            if not res.ok:
                raise InternalInconsistencyError(
                    f"fixed-design solve reported {res.status} on a plan the evaluator priced")
            if abs(res.objective - obj) > REL_TOL * max(1.0, abs(obj)):
                raise InternalInconsistencyError(
                    f"evaluator priced a plan at {obj}, fixed-design solver at {res.objective}")
            cross_checked += 1

    milp_obj = milp_result.objective if milp_result.ok else None
    if best is None or milp_obj is None:
        verdict = "match" if best is None and milp_obj is None else "mismatch"
        delta = None
    else:
        delta = milp_obj - best
        verdict = "match" if abs(delta) <= REL_TOL * max(1.0, abs(best)) else "mismatch"

    return OracleReport(
        best_objective=best,
        best_plans=best_plans,
        enumerated_count=enumerated,
        unroutable_count=unroutable,
        milp_objective=milp_obj,
        verdict=verdict,
        delta=delta,
        cross_checked=cross_checked,
    )
