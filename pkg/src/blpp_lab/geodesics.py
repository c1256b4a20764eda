"""Busemann-driven semi-infinite geodesics to finite depth, coalescence,
non-uniqueness scans, and competition interfaces.

A stack holds, for each level r and direction theta (drift lam = 1/sqrt(theta)),
the limit path h_r^theta satisfying the downward recursion
h_r = D(h_{r+1}, B_r) and v_{r+1} = Q(h_{r+1}, B_r) against the shared field.
A geodesic from (r, t) jumps at the leftmost or rightmost argmax of
B_r - h_{r+1}^theta over [previous jump, horizon], level by level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield
from typing import Literal, Sequence

import numpy as np

from .env import ROLE_SEED, BrownianField, GridSpec, RngPolicy, SampledPath, sample_brownian
from .errors import ConfigurationError, InternalConsistencyError, TruncationError
from .lpp import LatticePoint, finite_geodesics
from .queues import PathBundle, TruncationPolicy, _precheck_gap, d_map, script_d

Side = Literal["L", "R"]

DEFAULT_THETA_GRID = tuple(2.0 ** (k / 4) for k in range(-12, 13))


def _next_argmax_tables(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Leftmost/rightmost argmax of f over [j, end] for every j, in O(n).

    A[j] is the smallest k >= j attaining the max over [j, end]; P[j] the largest.
    Built from the suffix maximum: achievers are points where f meets its own
    suffix max; P jumps at strict drops of the suffix max.
    """
    M = np.maximum.accumulate(f[::-1])[::-1]
    n = len(f)
    idx = np.arange(n)
    ach = f == M
    A = np.where(ach, idx, n)
    A = np.minimum.accumulate(A[::-1])[::-1]
    drop = np.empty(n, dtype=bool)
    drop[:-1] = M[:-1] > M[1:]
    drop[-1] = True
    P = np.where(drop, idx, n)
    P = np.minimum.accumulate(P[::-1])[::-1]
    return A.astype(np.int64), P.astype(np.int64)


@dataclass
class BusemannStack:
    """Shared-field stack of limit paths for a set of directions."""

    grid: GridSpec
    base_level: int
    depth: int
    thetas: tuple[float, ...]
    field_paths: list[np.ndarray]        # B_r values, r = base..base+levels-1
    h: list[dict[float, np.ndarray]]     # h[r][lam], r = base..base+depth
    trunc: TruncationPolicy
    joint_seed: bool
    _tables: dict = dfield(default_factory=dict)

    @property
    def lams(self) -> dict[float, float]:
        return {th: 1.0 / math.sqrt(th) for th in self.thetas}

    def lam_of(self, theta: float) -> float:
        if theta not in self.thetas:
            raise ConfigurationError(f"direction {theta} not in the stack")
        return 1.0 / math.sqrt(theta)

    def f_values(self, r: int, theta: float) -> np.ndarray:
        """B_r - h_{r+1}^theta on the truncated window (local level index r)."""
        lam = self.lam_of(theta)
        hnext = self.h[r + 1][lam]
        return self.field_paths[r][: len(hnext)] - hnext

    def tables(self, r: int, theta: float) -> tuple[np.ndarray, np.ndarray]:
        key = (r, theta)
        if key not in self._tables:
            self._tables[key] = _next_argmax_tables(self.f_values(r, theta))
        return self._tables[key]

    def v_values(self, r: int, theta: float) -> np.ndarray:
        """v_{r+1}^theta = Q(h_{r+1}, B_r) on the window; exact zeros at argmaxes."""
        f = self.f_values(r, theta)
        M = np.maximum.accumulate(f[::-1])[::-1]
        return M - f

    def h_minus_b(self, r: int, theta: float) -> np.ndarray:
        lam = self.lam_of(theta)
        h = self.h[r][lam]
        return h - self.field_paths[r][: len(h)]


def build_stack(
    field: BrownianField,
    thetas: Sequence[float],
    depth: int,
    trunc: TruncationPolicy,
    policy: RngPolicy,
    trial: int = 0,
    burn_in: int = 8,
    joint_seed: bool | None = None,
) -> BusemannStack:
    """Seed limit paths above the window and evolve them down the shared field.

    The top level is seeded at depth + burn_in with the correct marginal law
    (jointly coupled across directions when the drift gaps support it,
    otherwise independently); the downward recursion is a contraction toward
    the true coupled law, so the extra burn_in levels wash out the seed.
    """
    if depth < 1:
        raise ConfigurationError("depth must be >= 1")
    thetas = tuple(sorted(thetas, reverse=True))  # ascending drift order
    lams = [1.0 / math.sqrt(th) for th in thetas]
    if len(set(lams)) != len(lams):
        raise ConfigurationError("directions must be distinct")
    n_levels = depth + burn_in
    if field.level_hi - field.level_lo + 1 < n_levels:
        raise ConfigurationError(
            f"field must span at least {n_levels} levels, has "
            f"{field.level_hi - field.level_lo + 1}"
        )
    grid = field.grid
    hi = trunc.horizon_index(grid)
    if joint_seed is None:
        joint_seed = True
        try:
            for a, b in zip(lams, lams[1:]):
                _precheck_gap(b - a, grid, hi, trunc)
        except TruncationError:
            joint_seed = False

    seeds = [
        sample_brownian(grid, lam, 1.0, policy, policy.stream_id(trial, ROLE_SEED, 32 + j))
        for j, lam in enumerate(lams)
    ]
    if joint_seed and len(lams) > 1:
        bundle = script_d(PathBundle(tuple(seeds), "Y"), trunc)
        top = {lam: p.values for lam, p in zip(lams, bundle.paths)}
    else:
        top = {lam: p.values[: hi + 1] for lam, p in zip(lams, seeds)}

    field_paths = [
        field.level(field.level_lo + r).values[: hi + 1] for r in range(n_levels)
    ]
    # evolve downward; keep h only for levels 0..depth
    h: list[dict[float, np.ndarray]] = [dict() for _ in range(depth + 1)]
    cur = top
    for r in range(n_levels - 1, -1, -1):
        B_r = SampledPath(grid.with_t_max(grid.time_at(hi)), field_paths[r])
        nxt = {}
        for lam in lams:
            Z = SampledPath(B_r.grid, cur[lam], drift_label=lam)
            nxt[lam] = d_map(Z, SampledPath(B_r.grid, field_paths[r], drift_label=0.0),
                             trunc).values
        if r + 1 <= depth:
            h[r + 1] = cur
        cur = nxt
    h[0] = cur
    return BusemannStack(
        grid=grid,
        base_level=field.level_lo,
        depth=depth,
        thetas=thetas,
        field_paths=field_paths,
        h=h,
        trunc=trunc,
        joint_seed=joint_seed,
    )


@dataclass(frozen=True)
class SemiGeodesic:
    start: LatticePoint
    theta: float
    side: Side
    jump_indices: np.ndarray   # grid indices (tau_{m-1}, ..., tau_{m+depth-1})
    jump_times: np.ndarray
    truncated: bool

    @property
    def depth(self) -> int:
        return len(self.jump_indices) - 1


def trace_geodesic(
    stack: BusemannStack,
    start: LatticePoint,
    theta: float,
    side: Side = "L",
) -> SemiGeodesic:
    """Follow leftmost (L) or rightmost (R) argmaxes level by level from start."""
    grid = stack.grid
    r0 = start.level - stack.base_level
    if not (0 <= r0 < stack.depth):
        raise ConfigurationError("start level outside the usable stack window")
    j = grid.index_of(start.time)
    hi = len(stack.h[r0 + 1][stack.lam_of(theta)]) - 1
    tail = max(1, int(math.ceil(stack.trunc.tail_fraction * hi)))
    guard_idx = hi - tail
    idxs = [j]
    truncated = False
    for r in range(r0, stack.depth):
        A, P = stack.tables(r, theta)
        j = int(A[j]) if side == "L" else int(P[j])
        if j > guard_idx:
            truncated = True
        idxs.append(j)
    idxs = np.array(idxs, dtype=np.int64)
    return SemiGeodesic(
        start=start,
        theta=theta,
        side=side,
        jump_indices=idxs,
        jump_times=grid.times()[idxs],
        truncated=truncated,
    )


@dataclass(frozen=True)
class CoalescenceResult:
    point: LatticePoint | None
    agree_after: bool


def _segment(g: SemiGeodesic, lev: int) -> tuple[int, int] | None:
    """Horizontal segment of the path at a level, as grid indices."""
    i = lev - g.start.level
    if not (0 <= i <= g.depth - 1):
        return None
    return int(g.jump_indices[i]), int(g.jump_indices[i + 1])


def coalescence(g1: SemiGeodesic, g2: SemiGeodesic) -> CoalescenceResult:
    """First common lattice point of two traces and whether they agree above it.

    Returns point=None when the paths stay disjoint inside the traced window.
    """
    m1, m2 = g1.start.level, g2.start.level
    lo = max(m1, m2)
    hi = min(m1 + g1.depth, m2 + g2.depth) - 1
    for lev in range(lo, hi + 1):
        s1, s2 = _segment(g1, lev), _segment(g2, lev)
        if s1 is None or s2 is None:
            continue
        left, right = max(s1[0], s2[0]), min(s1[1], s2[1])
        if left <= right:
            agree = True
            for lev2 in range(lev, hi + 1):
                if g1.jump_indices[lev2 - m1 + 1] != g2.jump_indices[lev2 - m2 + 1]:
                    agree = False
                    break
            g = g1 if s1[0] >= s2[0] else g2
            t = float(g.jump_times[lev - g.start.level])
            return CoalescenceResult(LatticePoint(lev, t), agree)
    return CoalescenceResult(None, False)


@dataclass(frozen=True)
class NUCandidate:
    """A start time whose first-level maximizer is (nearly) non-unique."""

    time_index: int
    time: float
    tau_left_index: int
    tau_right_index: int
    gap: float  # value gap between the argmax at the start and the later near-tie


def nu_scan(
    stack: BusemannStack,
    level: int,
    theta: float,
    tol: float | None = None,
    min_separation: float | None = None,
) -> list[NUCandidate]:
    """Start times s where B_level - h^theta attains its [s, T]-max at s and
    nearly attains it strictly later.

    Exact continuum non-uniqueness has both maxima exactly equal; on the grid
    the two evaluations sit on different sampled points, so candidates are
    reported within a tolerance calibrated to the grid increment scale
    (default sqrt(2 dt)).  Every candidate has leftmost maximizer exactly at s
    and its rightmost near-maximizer strictly later.
    """
    grid = stack.grid
    dt = grid.step
    if tol is None:
        tol = math.sqrt(2.0 * dt)
    if min_separation is None:
        min_separation = 10 * dt
    sep = max(1, int(round(min_separation / dt)))
    r = level - stack.base_level
    f = stack.f_values(r, theta)
    M = np.maximum.accumulate(f[::-1])[::-1]
    n = len(f)
    A, P = stack.tables(r, theta)
    out = []
    # s is its own leftmost argmax: f[s] >= M[s+1]; a later point comes within tol
    lead = f[:-1] >= M[1:]
    close = (f[:-1] - M[1:]) <= tol
    cand = np.nonzero(lead & close)[0]
    hi = n - 1
    tail = max(1, int(math.ceil(stack.trunc.tail_fraction * hi)))
    for s in cand:
        later = int(A[s + 1])
        if later - s < sep or later > hi - tail:
            continue
        out.append(
            NUCandidate(
                time_index=int(s),
                time=float(grid.time_at(int(s))),
                tau_left_index=int(s),
                tau_right_index=later,
                gap=float(f[s] - M[s + 1]),
            )
        )
    return out


@dataclass(frozen=True)
class CompetitionInterface:
    start: LatticePoint
    levels: np.ndarray
    sigma_left: np.ndarray
    sigma_right: np.ndarray
    theta_left: float
    theta_right: float


def _first_jump_is_vertical(field: BrownianField, start: LatticePoint,
                            level: int, t_idx: int, side: Side) -> bool:
    grid = field.grid
    y = LatticePoint(level, grid.time_at(t_idx))
    rep = finite_geodesics(field, start, y)
    seq = rep.leftmost if side == "L" else rep.rightmost
    return seq.jump_times[1] == start.time


def _sigma_level(field: BrownianField, start: LatticePoint, level: int,
                 side: Side, hi_idx: int) -> float:
    """Latest terminal time at `level` whose geodesic makes the initial vertical step."""
    grid = field.grid
    lo = grid.index_of(start.time)
    if not _first_jump_is_vertical(field, start, level, lo, side):
        return start.time
    # monotone in the terminal time: binary search for the last vertical case
    a, b = lo, hi_idx
    if _first_jump_is_vertical(field, start, level, b, side):
        return grid.time_at(b)
    while b - a > 1:
        mid = (a + b) // 2
        if _first_jump_is_vertical(field, start, level, mid, side):
            a = mid
        else:
            b = mid
    return grid.time_at(a)


def competition_interface(
    field: BrownianField,
    start: LatticePoint,
    depth: int,
    trunc: TruncationPolicy,
    policy: RngPolicy,
    theta_grid: Sequence[float] = DEFAULT_THETA_GRID,
    trial: int = 0,
    stack: BusemannStack | None = None,
    search_width: float = 20.0,
) -> CompetitionInterface:
    """Crossing times of the interface separating initially-vertical geodesics,
    plus its asymptotic directions estimated on a direction grid.

    sigma^S at each level is found by bisection over terminal times of the
    leftmost/rightmost finite-geodesic first-jump test; theta^S is the largest
    grid direction whose limit-path criterion still selects the vertical step
    at the start (equivalently whose vertical increment vanishes there).
    """
    grid = field.grid
    s_idx = grid.index_of(start.time)
    hi_idx = min(grid.n_points - 1,
                 s_idx + int(round(search_width / grid.step)))
    levels = np.arange(start.level + 1, start.level + depth + 1)
    sig_l = np.empty(len(levels))
    sig_r = np.empty(len(levels))
    for k, lev in enumerate(levels):
        sig_l[k] = _sigma_level(field, start, int(lev), "L", hi_idx)
        sig_r[k] = _sigma_level(field, start, int(lev), "R", hi_idx)

    if stack is None:
        stack = build_stack(field, theta_grid, max(1, depth), trunc, policy, trial=trial)
    r0 = start.level - stack.base_level
    theta_l = 0.0
    theta_r = 0.0
    for th in sorted(stack.thetas):
        f = stack.f_values(r0, th)
        M1 = np.max(f[s_idx + 1:]) if s_idx + 1 < len(f) else -np.inf
        if f[s_idx] >= M1:      # leftmost maximizer at the start: vertical step
            theta_l = max(theta_l, th)
        if f[s_idx] > M1:       # unique maximizer at the start
            theta_r = max(theta_r, th)
    return CompetitionInterface(
        start=start,
        levels=levels,
        sigma_left=sig_l,
        sigma_right=sig_r,
        theta_left=theta_l,
        theta_right=theta_r,
    )
