"""Finite last-passage values and geodesics over the sampled environment.

The passage value between (m, s) <= (n, t) maximizes the total of per-level
path increments over nondecreasing jump times restricted to grid points.
Dynamic programming with a running prefix maximum gives the value in
O(levels x window); backtracking with exact floating-point tie detection
yields the leftmost and rightmost maximizers and the exact maximizer count
at grid precision.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .env import BrownianField
from .errors import ConfigurationError, InternalConsistencyError


@dataclass(frozen=True)
class LatticePoint:
    level: int
    time: float

    def __le__(self, other: "LatticePoint") -> bool:
        return self.level <= other.level and self.time <= other.time


@dataclass(frozen=True)
class JumpSequence:
    """Nondecreasing jump times (tau_{m-1}, ..., tau_n); tau_{m-1} is the start time."""

    start_level: int
    jump_times: tuple[float, ...]

    def __post_init__(self):
        ts = self.jump_times
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ConfigurationError("jump times must be nondecreasing")

    def __len__(self) -> int:
        return len(self.jump_times)


@dataclass(frozen=True)
class GeodesicReport:
    value: float
    leftmost: JumpSequence
    rightmost: JumpSequence
    count: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "value": self.value,
                "leftmost": list(self.leftmost.jump_times),
                "rightmost": list(self.rightmost.jump_times),
                "count": self.count,
            }
        )


def geodesic_count_bound(level_gap: int) -> int:
    """Maximum number of maximizers between points level_gap levels apart."""
    return 1 + 2 * level_gap + (level_gap - 1) * level_gap // 2


def _window(field: BrownianField, x: LatticePoint, y: LatticePoint):
    if not (x.level <= y.level and x.time <= y.time):
        raise ConfigurationError("need x <= y coordinatewise")
    grid = field.grid
    i_s, i_t = grid.index_of(x.time), grid.index_of(y.time)
    if x.level < field.level_lo or y.level > field.level_hi:
        raise ConfigurationError("levels outside the field range")
    rows = [field.level(r).values[i_s: i_t + 1] for r in range(x.level, y.level + 1)]
    return rows, i_s, i_t


def last_passage(field: BrownianField, x: LatticePoint, y: LatticePoint) -> float:
    """Maximal cumulative increment over up-right grid paths from x to y."""
    rows, i_s, i_t = _window(field, x, y)
    val = rows[0] - rows[0][0]
    for W in rows[1:]:
        val = W + np.maximum.accumulate(val - W)
    return float(val[-1])


def _achiever_bounds(G: np.ndarray, end: int, target: float) -> tuple[int, int]:
    eq = G[: end + 1] == target
    first = int(np.argmax(eq))
    last = end - int(np.argmax(eq[::-1]))
    return first, last


def finite_geodesics(field: BrownianField, x: LatticePoint, y: LatticePoint) -> GeodesicReport:
    """Value, leftmost/rightmost maximizers, and the exact maximizer count.

    Ties are detected by exact floating-point equality: competing candidates
    are sums of the same sampled doubles combined in a fixed order, so a tie
    is bit-reproducible rather than an epsilon call.
    """
    rows, i_s, i_t = _window(field, x, y)
    grid = field.grid
    n_lev = len(rows)
    if n_lev == 1:
        val = float(rows[0][-1] - rows[0][0])
        seq = JumpSequence(x.level, (x.time, y.time))
        return GeodesicReport(val, seq, seq, 1)

    vals = [rows[0] - rows[0][0]]
    prefs: list[np.ndarray] = [np.empty(0)]
    counts = [np.ones(len(rows[0]), dtype=np.int64)]
    bound = geodesic_count_bound(n_lev - 1)
    neg_inf = -np.inf
    for r in range(1, n_lev):
        G = vals[r - 1] - rows[r]
        P = np.maximum.accumulate(G)
        # strict records split achiever segments; within a segment P is constant
        rec = G > np.concatenate([[neg_inf], P[:-1]])
        seg = np.cumsum(rec) - 1
        contrib = np.where(G == P, counts[r - 1], 0)
        cums = np.cumsum(contrib)
        starts = np.nonzero(rec)[0]
        offset = np.where(starts > 0, cums[starts - 1], 0)
        cnt = cums - offset[seg]
        if int(cnt.max(initial=0)) > 10 * bound:
            raise InternalConsistencyError(
                f"maximizer count exploded beyond 10x the bound {bound}"
            )
        vals.append(rows[r] + P)
        prefs.append(P)
        counts.append(cnt)

    value = float(vals[-1][-1])
    count = int(counts[-1][-1])

    def backtrack(side: str) -> JumpSequence:
        e = i_t - i_s
        jumps = [y.time]
        for r in range(n_lev - 1, 0, -1):
            G = vals[r - 1] - rows[r]
            first, last = _achiever_bounds(G, e, prefs[r][e])
            e = first if side == "L" else last
            jumps.append(grid.time_at(i_s + e))
        jumps.append(x.time)
        return JumpSequence(x.level, tuple(jumps[::-1]))

    left = backtrack("L")
    right = backtrack("R")
    for a, b in zip(left.jump_times, right.jump_times):
        if a > b:
            raise InternalConsistencyError("leftmost maximizer exceeds rightmost")
    return GeodesicReport(value, left, right, count)
