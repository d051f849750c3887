"""Solver contract, the scipy/HiGHS reference backend, and solution decoding.

Backends are pluggable: anything that can take the sparse arrays of a built
model (or the exported LP text) and return variable values qualifies. The
environment variable ``TRANSITOPT_BACKEND`` selects one by name.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import coo_matrix

from .lpio import ParsedLp
from .model import MilpModel
from .network import Scenario
from .plan import FlowAssignment, PatternPlan, RoutePeriodPlan, ServicePlan

__all__ = [
    "SolverConfig",
    "SolveResult",
    "SolverError",
    "DecodeError",
    "solve",
    "solve_parsed_lp",
    "decode_plan",
    "get_backend",
    "BACKENDS",
]

BINARY_TOL = 1e-6
FLOW_CLAMP_TOL = 1e-9

BACKEND_ENV_VAR = "TRANSITOPT_BACKEND"


class SolverError(RuntimeError):
    """Backend missing or numerical failure inside the solver."""


class DecodeError(ValueError):
    """Solution violates a decoded-plan invariant (never silently repaired)."""


@dataclass(frozen=True)
class SolverConfig:
    """Backend-neutral solve parameters.

    rel_gap 0.0 asks for a proven optimum. ``threads`` and ``seed`` are hints;
    the scipy/HiGHS backend is single-threaded and deterministic and ignores
    both.
    """

    time_limit_s: float = 600.0
    rel_gap: float = 0.0
    threads: int = 0
    seed: int | None = None
    backend: str | None = None

    def __post_init__(self):
        if self.time_limit_s <= 0:
            raise ValueError("time_limit_s must be > 0")
        if not 0.0 <= self.rel_gap < 1.0:
            raise ValueError("rel_gap must lie in [0, 1)")


@dataclass(frozen=True)
class SolveResult:
    status: str                      # optimal | feasible | infeasible | timeout | error
    objective: float | None
    assignment: np.ndarray | None    # dense, indexed by variable id
    wall_time_s: float
    gap: float | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")


def _model_arrays(model: MilpModel):
    nvar = len(model.variables)
    c = np.zeros(nvar)
    for vid, coef in model.objective.items():
        c[vid] = coef
    integrality = np.zeros(nvar, dtype=np.uint8)
    lb = np.zeros(nvar)
    ub = np.full(nvar, np.inf)
    for v in model.variables:
        lb[v.id] = v.lb
        ub[v.id] = v.ub
        if v.kind != "C":
            integrality[v.id] = 1
    nrows = len(model.rows)
    nnz = sum(len(r.coeffs) for r in model.rows)
    data = np.empty(nnz)
    ri = np.empty(nnz, dtype=np.int64)
    ci = np.empty(nnz, dtype=np.int64)
    lo = np.empty(nrows)
    hi = np.empty(nrows)
    k = 0
    for ridx, row in enumerate(model.rows):
        for vid, coef in row.coeffs:
            data[k] = coef
            ri[k] = ridx
            ci[k] = vid
            k += 1
        if row.sense == "<=":
            lo[ridx], hi[ridx] = -np.inf, row.rhs
        elif row.sense == ">=":
            lo[ridx], hi[ridx] = row.rhs, np.inf
        else:
            lo[ridx] = hi[ridx] = row.rhs
    a = coo_matrix((data, (ri, ci)), shape=(nrows, nvar)).tocsr()
    return c, a, lo, hi, integrality, lb, ub


def solve_arrays(c, a, row_lo, row_hi, integrality, lb, ub, cfg: SolverConfig) -> SolveResult:
    """Run HiGHS through scipy on raw arrays."""
    start = time.perf_counter()
    options = {
        "time_limit": float(cfg.time_limit_s),
        "mip_rel_gap": float(cfg.rel_gap),
        "presolve": True,
        "disp": False,
    }
    try:
        res = milp(
            c=c,
            constraints=LinearConstraint(a, row_lo, row_hi),
            integrality=integrality,
            bounds=Bounds(lb, ub),
            options=options,
        )
    except Exception as exc:  # scipy raises on malformed inputs
        raise SolverError(f"solver failure: {exc}") from exc
    wall = time.perf_counter() - start

    gap = getattr(res, "mip_gap", None)
    if res.status == 0:
        objective = float(res.fun)
        check = float(np.dot(c, res.x))
        if abs(check - objective) > 1e-6 * max(1.0, abs(objective)):
            raise SolverError(
                f"objective recomputation mismatch: reported {objective}, recomputed {check}")
        return SolveResult("optimal", objective, np.asarray(res.x), wall, gap=gap)
    if res.status == 1:
        if res.x is not None:
            return SolveResult("feasible", float(res.fun), np.asarray(res.x), wall,
                               gap=gap, message=str(res.message))
        return SolveResult("timeout", None, None, wall, message=str(res.message))
    if res.status == 2:
        return SolveResult("infeasible", None, None, wall, message=str(res.message))
    return SolveResult("error", None, None, wall, message=str(res.message))


class ScipyHighsBackend:
    """Reference backend: HiGHS via scipy.optimize.milp."""

    name = "scipy"

    def solve(self, model: MilpModel, cfg: SolverConfig) -> SolveResult:
        return solve_arrays(*_model_arrays(model), cfg)


BACKENDS: dict[str, object] = {"scipy": ScipyHighsBackend()}


def get_backend(name: str | None = None):
    chosen = name or os.environ.get(BACKEND_ENV_VAR) or "scipy"
    if chosen not in BACKENDS:
        raise SolverError(
            f"unknown solver backend {chosen!r}; available: {sorted(BACKENDS)}")
    return BACKENDS[chosen]


def solve(model: MilpModel, cfg: SolverConfig | None = None) -> SolveResult:
    cfg = cfg or SolverConfig()
    backend = get_backend(cfg.backend)
    return backend.solve(model, cfg)


def solve_parsed_lp(parsed: ParsedLp, cfg: SolverConfig | None = None) -> SolveResult:
    """Solve a problem recovered from LP text (round-trip path)."""
    cfg = cfg or SolverConfig()
    names = parsed.var_names
    pos = {nm: k for k, nm in enumerate(names)}
    nvar = len(names)
    c = np.zeros(nvar)
    for nm, coef in parsed.objective.items():
        c[pos[nm]] = coef
    lb = np.zeros(nvar)
    ub = np.full(nvar, np.inf)
    integrality = np.zeros(nvar, dtype=np.uint8)
    for nm in parsed.binaries:
        k = pos[nm]
        integrality[k] = 1
        ub[k] = min(ub[k], 1.0)
    for nm in parsed.generals:
        integrality[pos[nm]] = 1
    for nm, (lo_b, hi_b) in parsed.bounds.items():
        k = pos[nm]
        lb[k], ub[k] = lo_b, hi_b
    data, ri, ci = [], [], []
    lo = np.empty(len(parsed.rows))
    hi = np.empty(len(parsed.rows))
    for ridx, (_, coeffs, sense, rhs) in enumerate(parsed.rows):
        for nm, coef in coeffs.items():
            data.append(coef)
            ri.append(ridx)
            ci.append(pos[nm])
        if sense == "<=":
            lo[ridx], hi[ridx] = -np.inf, rhs
        elif sense == ">=":
            lo[ridx], hi[ridx] = rhs, np.inf
        else:
            lo[ridx] = hi[ridx] = rhs
    a = coo_matrix((data, (ri, ci)), shape=(len(parsed.rows), nvar)).tocsr()
    return solve_arrays(c, a, lo, hi, integrality, lb, ub, cfg)


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------

def _binary_value(x: np.ndarray, vid: int) -> int:
    v = float(x[vid])
    r = round(v)
    if abs(v - r) > BINARY_TOL:
        raise DecodeError(f"variable {vid} should be binary, got {v}")
    return int(r)


def _trace_loop(arc_set: set[tuple[int, int]], where: str) -> tuple[int, ...]:
    """Order the arcs into the unique single cycle, or fail."""
    if not arc_set:
        return ()
    succ: dict[int, int] = {}
    indeg: dict[int, int] = {}
    for u, v in arc_set:
        if u in succ:
            raise DecodeError(f"{where}: stop {u} has two outgoing arcs")
        succ[u] = v
        indeg[v] = indeg.get(v, 0) + 1
        if indeg[v] > 1:
            raise DecodeError(f"{where}: stop {v} has two incoming arcs")
    if set(succ) != set(indeg):
        raise DecodeError(f"{where}: arcs do not balance at every stop")
    start = min(succ)
    seq = [start]
    k = succ[start]
    while k != start:
        seq.append(k)
        if len(seq) > len(succ):
            raise DecodeError(f"{where}: arcs do not close into a loop")
        k = succ[k]
    if len(seq) != len(succ):
        raise DecodeError(f"{where}: arcs split into multiple loops")
    return tuple(seq)


def decode_plan(model: MilpModel, result: SolveResult,
                scenario: Scenario | None = None) -> tuple[ServicePlan, FlowAssignment]:
    """Turn a solved assignment back into domain objects, re-verifying the
    structural invariants; any violation raises instead of being repaired."""
    if not result.ok or result.assignment is None:
        raise DecodeError(f"cannot decode a solve with status {result.status!r}")
    scenario = scenario or model.scenario
    x = result.assignment
    index = model.index

    cells: list[tuple[RoutePeriodPlan, ...]] = []
    for r, route in enumerate(scenario.routes):
        row: list[RoutePeriodPlan] = []
        for t in range(len(scenario.periods)):
            menu = route.headway_menu(t)
            pats: list[PatternPlan] = []
            chosen_idx: list[int] = []
            for p in range(route.n_patterns):
                where = f"period {t} route {r} pattern {p}"
                picks = [h for h in range(len(menu) + 1)
                         if _binary_value(x, index[("y", t, r, p, h)])]
                if len(picks) != 1:
                    raise DecodeError(f"{where}: expected exactly one headway pick, got {picks}")
                hidx = picks[0]
                chosen_idx.append(hidx)
                arc_set = set()
                for i in range(route.n_dir):
                    for j in range(route.n_dir):
                        if not route.arc_allowed(i, j):
                            continue
                        xv = _binary_value(x, index[("x", t, r, p, i, j)])
                        hsum = sum(_binary_value(x, index[("xh", t, r, p, i, j, h)])
                                   for h in range(1, len(menu) + 1))
                        if hsum != xv:
                            raise DecodeError(
                                f"{where}: arc ({i},{j}) headway products sum to {hsum}, arc is {xv}")
                        if xv:
                            arc_set.add((i, j))
                seq = _trace_loop(arc_set, where)
                if hidx == 0:
                    if seq:
                        raise DecodeError(f"{where}: out of service but serves stops {seq}")
                    pats.append(PatternPlan(stops=(), headway=None, headway_index=0))
                else:
                    pats.append(PatternPlan(stops=seq, headway=menu[hidx - 1], headway_index=hidx))
            for p1 in range(len(chosen_idx)):
                for p2 in range(p1 + 1, len(chosen_idx)):
                    h1, h2 = chosen_idx[p1], chosen_idx[p2]
                    if h2 != 0 and (h1 == 0 or h1 > h2):
                        raise DecodeError(
                            f"period {t} route {r}: headway ordering violated "
                            f"(pattern {p1} index {h1} vs pattern {p2} index {h2})")
            fleet = float(x[index[("n", r, t)]])
            row.append(RoutePeriodPlan(patterns=tuple(pats), fleet=fleet))
        cells.append(tuple(row))
    plan = ServicePlan(cells=tuple(cells))

    def flow(vid: int, key_desc: tuple) -> float:
        v = float(x[vid])
        if v < -FLOW_CLAMP_TOL:
            raise DecodeError(f"flow {key_desc} is negative beyond tolerance: {v}")
        return max(v, 0.0)

    fa = FlowAssignment()
    for v in model.variables:
        if v.family not in ("fw", "fa", "fl", "fb", "fx"):
            continue
        if v.family == "fw":
            t, r, d, i, c = v.key
            val = flow(v.id, v.key)
            if val > 0.0:
                fa.entry[(t, r, d, i, c)] = val
        elif v.family == "fa":
            t, r, d, i, c, p = v.key
            val = flow(v.id, v.key)
            if val > 0.0:
                fa.boarding[(t, r, d, i, c, p)] = val
        elif v.family == "fl":
            t, r, d, p, i, j = v.key
            val = flow(v.id, v.key)
            if val > 0.0:
                fa.inter_stop[(t, r, d, p, i, j)] = val
        elif v.family == "fb":
            t, r, j, p = v.key
            val = flow(v.id, v.key)
            if val > 0.0:
                fa.exit[(t, r, j, p)] = val
        elif v.family == "fx":
            t, r, d, i, j, p, c = v.key
            val = flow(v.id, v.key)
            if val > 0.0:
                fa.transfer[(t, r, d, i, j, p, c)] = val

    for v in model.variables:
        if v.family != "z":
            continue
        if _binary_value(x, v.id):
            t, r, i, d, c = v.key
            prior = fa.combo_choice.get((t, r, i, d))
            if prior is not None and prior != c:
                raise DecodeError(
                    f"entry stop {i} label {d}: two combinations picked ({prior} and {c})")
            fa.combo_choice[(t, r, i, d)] = c

    return plan, fa
