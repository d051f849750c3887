"""Decoded service designs and passenger flow assignments.

A ServicePlan pins the design side of the problem: for every route, period,
and pattern the ordered direction stops served (a single vehicle loop) and
the headway, plus the fleet allocated per route and period. A FlowAssignment
holds the five flow families (entry, boarding, inter-stop, exit, transfer)
and the combination chosen per entry stop and destination.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .network import RouteSpec, Scenario, ScenarioError

__all__ = ["PatternPlan", "RoutePeriodPlan", "ServicePlan", "FlowAssignment",
           "PlanError", "load_plan", "loop_arcs"]

_HEADWAY_TOL = 1e-9


class PlanError(ValueError):
    """Raised for plans that do not fit their scenario."""


def loop_arcs(stops: tuple[int, ...]) -> tuple[tuple[int, int], ...]:
    """Arcs of the closed vehicle loop through ``stops`` in listed order,
    including the closure arc back to the first stop."""
    if len(stops) == 0:
        return ()
    if len(stops) == 1:
        raise PlanError(f"a loop needs at least 2 stops, got {list(stops)}")
    return tuple((stops[k], stops[(k + 1) % len(stops)]) for k in range(len(stops)))


@dataclass(frozen=True)
class PatternPlan:
    """One pattern: served direction stops in loop order, and its headway.

    ``headway`` is None and ``stops`` empty when the pattern is out of
    service. ``headway_index`` is the 1-based menu position (0 = off).
    """

    stops: tuple[int, ...]
    headway: float | None
    headway_index: int

    @property
    def in_service(self) -> bool:
        return self.headway is not None

    def arcs(self) -> tuple[tuple[int, int], ...]:
        return loop_arcs(self.stops)

    def cycle_time(self, route: RouteSpec) -> float:
        """Minutes for one full vehicle rotation around the loop."""
        if not self.in_service or not self.stops:
            return 0.0
        return sum(route.travel_time(u, v) for u, v in self.arcs())


@dataclass(frozen=True)
class RoutePeriodPlan:
    patterns: tuple[PatternPlan, ...]
    fleet: float


@dataclass(frozen=True)
class ServicePlan:
    """cells[r][t] holds the design of route r in period t."""

    cells: tuple[tuple[RoutePeriodPlan, ...], ...]

    def cell(self, r: int, t: int) -> RoutePeriodPlan:
        return self.cells[r][t]

    def to_dict(self) -> dict[str, Any]:
        return {
            "routes": [
                {
                    "route": r,
                    "periods": [
                        {
                            "period": t,
                            "fleet": cell.fleet,
                            "patterns": [
                                {
                                    "pattern": p,
                                    "headway": pat.headway,
                                    "headway_index": pat.headway_index,
                                    "stops": list(pat.stops),
                                }
                                for p, pat in enumerate(cell.patterns)
                            ],
                        }
                        for t, cell in enumerate(periods)
                    ],
                }
                for r, periods in enumerate(self.cells)
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _lookup_headway_index(menu: tuple[float, ...], value: float, where: str) -> int:
    for k, v in enumerate(menu):
        if abs(v - value) <= _HEADWAY_TOL * max(1.0, abs(v)):
            return k + 1
    raise PlanError(f"{where}: headway {value} is not on the menu {list(menu)}")


def load_plan(source: str | Path | Mapping[str, Any], scenario: Scenario) -> ServicePlan:
    """Read a plan document and bind it to a scenario.

    Headways must come from the route/period menu; served stops must be valid
    direction stops forming an allowed loop. A missing ``fleet`` defaults to
    the exact vehicle requirement of the cell's patterns.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise PlanError(f"cannot read plan file {path}: {exc}") from exc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PlanError(f"{path}: not valid JSON ({exc})") from exc
    else:
        doc = source

    routes_doc = doc.get("routes")
    if not isinstance(routes_doc, list) or len(routes_doc) != len(scenario.routes):
        raise PlanError(f"plan must describe exactly {len(scenario.routes)} route(s)")

    cells: list[tuple[RoutePeriodPlan, ...]] = []
    for r, rdoc in enumerate(routes_doc):
        route = scenario.routes[r]
        periods_doc = rdoc.get("periods")
        if not isinstance(periods_doc, list) or len(periods_doc) != len(scenario.periods):
            raise PlanError(f"plan routes[{r}] must describe exactly {len(scenario.periods)} period(s)")
        row: list[RoutePeriodPlan] = []
        for t, pdoc in enumerate(periods_doc):
            menu = route.headway_menu(t)
            pats_doc = pdoc.get("patterns", [])
            if len(pats_doc) != route.n_patterns:
                raise PlanError(
                    f"plan routes[{r}].periods[{t}] must describe exactly {route.n_patterns} pattern(s)")
            pats: list[PatternPlan] = []
            for p, pat_doc in enumerate(pats_doc):
                where = f"plan routes[{r}].periods[{t}].patterns[{p}]"
                headway = pat_doc.get("headway")
                stops = tuple(int(x) for x in pat_doc.get("stops", []))
                if headway is None:
                    if stops:
                        raise PlanError(f"{where}: out-of-service pattern must not serve stops")
                    pats.append(PatternPlan(stops=(), headway=None, headway_index=0))
                    continue
                hidx = _lookup_headway_index(menu, float(headway), where)
                _check_loop(route, stops, where)
                pats.append(PatternPlan(stops=stops, headway=float(headway), headway_index=hidx))
            fleet = pdoc.get("fleet")
            if fleet is None:
                fleet = sum(
                    pat.cycle_time(route) / pat.headway for pat in pats if pat.in_service and pat.stops
                )
            row.append(RoutePeriodPlan(patterns=tuple(pats), fleet=float(fleet)))
        cells.append(tuple(row))
    return ServicePlan(cells=tuple(cells))


def _check_loop(route: RouteSpec, stops: tuple[int, ...], where: str) -> None:
    nd = route.n_dir
    for s in stops:
        if not 0 <= s < nd:
            raise PlanError(f"{where}: direction stop {s} out of range [0, {nd})")
    if len(set(stops)) != len(stops):
        raise PlanError(f"{where}: loop visits a stop twice: {list(stops)}")
    for u, v in loop_arcs(stops):
        if not route.arc_allowed(u, v):
            raise PlanError(f"{where}: arc ({u}, {v}) is not allowed on route {route.id}")


@dataclass(frozen=True)
class FlowAssignment:
    """Sparse flow values, keyed per family.

    entry:      (t, r, d, i, c)       riders entering stop i for physical
                                      destination d under combination c
    boarding:   (t, r, d, i, c, p)    riders boarding pattern p
    inter_stop: (t, r, d, p, i, j)    riders on board between stops
    exit:       (t, r, j, p)          riders leaving the system at stop j
    transfer:   (t, r, d, i, j, p, c) riders alighting pattern p at i and
                                      re-boarding at j under combination c
    combo_choice: (t, r, i, d) -> combination index actually used
    """

    entry: dict[tuple, float] = field(default_factory=dict)
    boarding: dict[tuple, float] = field(default_factory=dict)
    inter_stop: dict[tuple, float] = field(default_factory=dict)
    exit: dict[tuple, float] = field(default_factory=dict)
    transfer: dict[tuple, float] = field(default_factory=dict)
    combo_choice: dict[tuple, int] = field(default_factory=dict)

    def total_transfers(self) -> float:
        return sum(self.transfer.values())
