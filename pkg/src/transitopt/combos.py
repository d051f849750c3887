"""Headway-pattern combinations, perceived headways, and frequency shares.

Riders who can board any of several patterns experience the harmonic
combination of the pattern headways and split across patterns in proportion
to pattern frequency (inverse headway). Both quantities are pre-computed for
every combination of menu choices so the optimizer stays linear.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Iterator, Sequence

__all__ = [
    "Combination",
    "CombinationSet",
    "enumerate_combinations",
    "perceived_headway",
    "frequency_shares",
]


class CombinationError(ValueError):
    """Raised for empty menus or all-out-of-service index vectors."""


def perceived_headway(headway_indices: Sequence[int], menu: Sequence[float]) -> float:
    """Harmonic combination of the active headways (minutes).

    Index 0 marks an out-of-service pattern; at least one index must be
    nonzero. Equals the single active headway when only one pattern runs.
    """
    active: list[float] = []
    for h in headway_indices:
        if h == 0:
            continue
        if not 1 <= h <= len(menu):
            raise CombinationError(f"headway index {h} outside menu of size {len(menu)}")
        active.append(menu[h - 1])
    if not active:
        raise CombinationError("combination must have at least one in-service pattern")
    if len(active) == 1:
        return active[0]
    return 1.0 / sum(1.0 / v for v in active)


def frequency_shares(headway_indices: Sequence[int], menu: Sequence[float]) -> tuple[float, ...]:
    """Rider share per pattern under the first-vehicle boarding rule.

    Active patterns receive flow proportional to their frequency (inverse
    headway); out-of-service patterns receive 0. Shares sum to 1.
    """
    inv_total = 0.0
    invs: list[float] = []
    for h in headway_indices:
        if h == 0:
            invs.append(0.0)
            continue
        if not 1 <= h <= len(menu):
            raise CombinationError(f"headway index {h} outside menu of size {len(menu)}")
        v = 1.0 / menu[h - 1]
        invs.append(v)
        inv_total += v
    if inv_total == 0.0:
        raise CombinationError("combination must have at least one in-service pattern")
    return tuple(v / inv_total for v in invs)


@dataclass(frozen=True)
class Combination:
    """One menu-index vector across patterns with its cached rider view."""

    headway_indices: tuple[int, ...]
    perceived_headway: float
    active_patterns: tuple[int, ...]
    shares: tuple[float, ...]

    def headway_of(self, p: int, menu: Sequence[float]) -> float:
        h = self.headway_indices[p]
        if h == 0:
            raise CombinationError(f"pattern {p} is out of service in {self.headway_indices}")
        return menu[h - 1]


class CombinationSet:
    """All combinations for one (route, period) pair, in lexicographic order."""

    def __init__(self, menu: Sequence[float], combos: Sequence[Combination]):
        self.menu = tuple(menu)
        self.combos = tuple(combos)
        self._by_vector = {c.headway_indices: k for k, c in enumerate(self.combos)}

    def __len__(self) -> int:
        return len(self.combos)

    def __iter__(self) -> Iterator[Combination]:
        return iter(self.combos)

    def __getitem__(self, k: int) -> Combination:
        return self.combos[k]

    def index_of(self, headway_indices: Sequence[int]) -> int:
        key = tuple(headway_indices)
        if key not in self._by_vector:
            raise CombinationError(f"unknown combination vector {key}")
        return self._by_vector[key]

    def consistent_with(self, assigned_indices: Sequence[int]) -> list[int]:
        """Combinations whose active patterns all match the assigned menu
        indices (index 0 = pattern out of service)."""
        out = []
        for k, c in enumerate(self.combos):
            if all(assigned_indices[p] == c.headway_indices[p] for p in c.active_patterns):
                out.append(k)
        return out


@lru_cache(maxsize=None)
def _enumerate_cached(n_patterns: int, menu: tuple[float, ...]) -> CombinationSet:
    combos = []
    for vec in product(range(len(menu) + 1), repeat=n_patterns):
        if all(h == 0 for h in vec):
            continue
        combos.append(
            Combination(
                headway_indices=vec,
                perceived_headway=perceived_headway(vec, menu),
                active_patterns=tuple(p for p, h in enumerate(vec) if h != 0),
                shares=frequency_shares(vec, menu),
            )
        )
    return CombinationSet(menu, combos)


def enumerate_combinations(n_patterns: int, menu: Sequence[float]) -> CombinationSet:
    """All (|menu|+1)^n_patterns - 1 index vectors except all-out-of-service,
    in lexicographic order, each with its perceived headway pre-computed."""
    if n_patterns < 1:
        raise CombinationError(f"need at least one pattern, got {n_patterns}")
    if not menu:
        raise CombinationError("headway menu must not be empty")
    return _enumerate_cached(n_patterns, tuple(menu))
