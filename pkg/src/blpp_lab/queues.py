"""Queuing transforms of sampled paths and their deterministic identities.

For an arrivals path Z and service path B (drift of Z above drift of B), the
three transforms share one suffix-maximum array M(t) = sup_{t <= s <= T} (B - Z)(s):

    Q(Z, B)(t) = M(t) - (B - Z)(t)          queue length, >= 0
    D(Z, B)(t) = B(t) + M(0) - M(t)          departures, pinned at 0
    R(Z, B)(t) = Z(t) + M(t) - M(0)          used services, pinned at 0

equivalently D = Z + Q(0) - Q and R = B + Q - Q(0).  D is computed in the
M-form so that sticking of D(Z, B) against B is an exact floating-point tie
(M is bit-constant wherever the suffix argmax lies ahead), which is what
makes jump detection tolerance-free downstream.

Suprema over [t, inf) are computed over [t, T_hi]; a TruncationPolicy guards
against horizons too short for the drift gap to dominate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal, Sequence

import numpy as np

from . import exact
from .env import GridSpec, SampledPath
from .errors import ConfigurationError, InternalConsistencyError, TruncationError

ORDERING_TOL = 1e-9  # relative slack for increment-ordering validation


@dataclass(frozen=True)
class TruncationPolicy:
    """Finite-horizon proxy for suprema over [t, inf).

    horizon: T_hi (snapped down to the grid); None means the grid's t_max.
    safety_margin: declared-drift-gap precondition, in units of
        sqrt(total_variance * T_hi).  A pair with declared gap g passes iff
        g * T_hi >= safety_margin * sqrt(2 * T_hi).
    tail_fraction: hard check share; the leftmost argmax for any trusted t
        must not fall in the last tail_fraction of [t_min, T_hi].
    interior_fraction: share excluded at each end of the window when
        reporting identities.
    alarm_exponent: sets the trusted boundary for the runtime argmax check at
        a mixing length of 4 * alarm_exponent / gap^2 before the horizon
        (false alarms ~ exp(-alarm_exponent) per supremum under the declared
        drift gap).
    """

    horizon: float | None = None
    safety_margin: float = 2.5
    tail_fraction: float = 0.01
    interior_fraction: float = 0.10
    alarm_exponent: float = 13.8

    def horizon_index(self, grid: GridSpec) -> int:
        if self.horizon is None:
            return grid.n_points - 1
        if self.horizon > grid.t_max + 1e-12:
            raise ConfigurationError(
                f"horizon {self.horizon} beyond grid t_max {grid.t_max}"
            )
        hi = int(math.floor((self.horizon - grid.t_min) / grid.step + 1e-9))
        if hi <= grid.zero_index:
            raise ConfigurationError("horizon must lie beyond t = 0")
        return hi

    def interior_window(self, grid: GridSpec) -> tuple[float, float]:
        hi = self.horizon_index(grid)
        lo_t, hi_t = grid.time_at(0), grid.time_at(hi)
        margin = self.interior_fraction * (hi_t - lo_t)
        return lo_t + margin, hi_t - margin


@dataclass(frozen=True)
class PathBundle:
    """Ordered tuple of pinned paths with ascending drift labels."""

    paths: tuple[SampledPath, ...]
    space_tag: Literal["Y", "X"] = "Y"

    def __post_init__(self):
        if not self.paths:
            raise ConfigurationError("bundle must contain at least one path")
        drifts = self.drifts
        if any(d is None for d in drifts):
            raise ConfigurationError("all bundle paths need drift labels")
        if drifts[0] < 0.0:
            raise ConfigurationError("lowest drift must be >= 0")
        for a, b in zip(drifts, drifts[1:]):
            if not (b > a):
                raise ConfigurationError(f"drifts must be strictly increasing, got {drifts}")
        for p in self.paths:
            if not p.pinned:
                raise ConfigurationError("bundle paths must be pinned at 0")

    @property
    def drifts(self) -> tuple[float, ...]:
        return tuple(p.drift_label for p in self.paths)

    @property
    def grid(self) -> GridSpec:
        return self.paths[0].grid

    def __len__(self) -> int:
        return len(self.paths)


def _precheck_gap(gap: float | None, grid: GridSpec, hi: int, trunc: TruncationPolicy) -> None:
    if gap is None:
        return
    if gap <= 0.0:
        raise ConfigurationError(f"drift gap must be positive, got {gap}")
    t_hi = grid.time_at(hi)
    # total variance of the difference of two unit-variance paths
    if gap * t_hi < trunc.safety_margin * math.sqrt(2.0 * t_hi):
        raise TruncationError(
            f"declared drift gap {gap:.4g} too small for horizon {t_hi:.4g} "
            f"at safety margin {trunc.safety_margin}"
        )


def _trusted_boundary(hi: int, step: float, trunc: TruncationPolicy,
                      gap: float | None) -> int | None:
    """Index before which suffix suprema are certified; None when the horizon
    is shorter than the drift mixing length (the precondition then governs)."""
    if gap is None:
        return 0
    mixing = int(math.ceil(4.0 * trunc.alarm_exponent / (gap * gap) / step))
    rb = hi - max(int(math.ceil(trunc.interior_fraction * hi)), mixing)
    return rb if rb > 0 else None


def _argmax_guard(W: np.ndarray, hi: int, step: float, trunc: TruncationPolicy,
                  gap: float | None = None) -> None:
    """Leftmost argmax for every trusted t must stay out of the last tail share.

    Leftmost argmaxes over nested windows [t, T] are nondecreasing in t, so
    checking the trusted boundary alone covers all smaller t.
    """
    rb = _trusted_boundary(hi, step, trunc, gap)
    if rb is None:
        return
    tail = max(1, int(math.ceil(trunc.tail_fraction * hi)))
    guard_idx = hi - tail
    a_rb = rb + int(np.argmax(W[rb: hi + 1]))
    if a_rb > guard_idx:
        raise TruncationError(
            f"supremum argmax fell in the last {trunc.tail_fraction:.0%} of the window "
            f"(index {a_rb} beyond {guard_idx}); horizon too short"
        )


def _queue_core(Z: SampledPath, B: SampledPath, trunc: TruncationPolicy):
    if Z.grid != B.grid:
        raise ConfigurationError("paths must share one grid")
    hi = trunc.horizon_index(Z.grid)
    gap = None
    if Z.drift_label is not None and B.drift_label is not None:
        gap = Z.drift_label - B.drift_label
    _precheck_gap(gap, Z.grid, hi, trunc)
    W = B.values[: hi + 1] - Z.values[: hi + 1]
    _argmax_guard(W, hi, Z.grid.step, trunc, gap)
    M = np.maximum.accumulate(W[::-1])[::-1]
    return W, M, hi


def guard_report(Z: SampledPath, B: SampledPath, trunc: TruncationPolicy) -> dict:
    """Where the suffix argmax fell relative to the trusted region, without raising."""
    hi = trunc.horizon_index(Z.grid)
    gap = None
    if Z.drift_label is not None and B.drift_label is not None:
        gap = Z.drift_label - B.drift_label
    W = B.values[: hi + 1] - Z.values[: hi + 1]
    rb = _trusted_boundary(hi, Z.grid.step, trunc, gap)
    a_rb = None if rb is None else rb + int(np.argmax(W[rb: hi + 1]))
    return {
        "horizon_index": hi,
        "trusted_boundary_index": rb,
        "boundary_argmax_index": a_rb,
        "boundary_argmax_time": None if a_rb is None else Z.grid.time_at(a_rb),
    }


def q_map(Z: SampledPath, B: SampledPath, trunc: TruncationPolicy) -> SampledPath:
    """Queue-length path; nonnegative, not pinned."""
    W, M, hi = _queue_core(Z, B, trunc)
    q = M - W
    g = Z.grid.with_t_max(Z.grid.time_at(hi))
    return SampledPath(g, q, drift_label=None)


def d_map(Z: SampledPath, B: SampledPath, trunc: TruncationPolicy) -> SampledPath:
    """Departures path; Brownian with Z's drift when inputs are Brownian.

    Computed as B + (M(0) - M): where the suffix argmax lies ahead of t the
    array M is bit-constant, so D sticks to B as an exact floating-point tie.
    """
    W, M, hi = _queue_core(Z, B, trunc)
    i0 = Z.grid.zero_index
    vals = B.values[: hi + 1] + (M[i0] - M)
    g = Z.grid.with_t_max(Z.grid.time_at(hi))
    return SampledPath(g, vals, drift_label=Z.drift_label)


def r_map(Z: SampledPath, B: SampledPath, trunc: TruncationPolicy) -> SampledPath:
    """Used-services path; Brownian with B's drift when inputs are Brownian."""
    W, M, hi = _queue_core(Z, B, trunc)
    i0 = Z.grid.zero_index
    vals = Z.values[: hi + 1] + (M - M[i0])
    g = Z.grid.with_t_max(Z.grid.time_at(hi))
    return SampledPath(g, vals, drift_label=B.drift_label)


def _restrict(p: SampledPath, hi: int) -> SampledPath:
    return p if hi == p.grid.n_points - 1 else p.restrict_to(hi)


def d_iterated(
    bundle: PathBundle,
    trunc: TruncationPolicy,
    method: Literal["recursive", "closed_form"] = "recursive",
) -> SampledPath:
    """D^(n)(Z^n, ..., Z^1) of a drift-ascending bundle [Z^1, ..., Z^n].

    The recursive route composes pairwise transforms; the closed form runs
    the layered dynamic program for
    A(t) = sup_{t <= t_1 <= ... <= t_{n-1} <= T} sum_i (Z^i - Z^{i+1})(t_i)
    and returns Z^1 + A(0) - A(t).  Both see the same horizon.
    """
    paths = bundle.paths
    if len(paths) == 1:
        return _restrict(paths[0], trunc.horizon_index(bundle.grid))
    if method == "recursive":
        cur = paths[-1]
        for p in paths[-2::-1]:
            cur = d_map(cur, _restrict(p, cur.grid.n_points - 1), trunc)
        return cur
    hi = trunc.horizon_index(bundle.grid)
    n = len(paths)
    V = None
    for j in range(n - 2, -1, -1):
        f = paths[j].values[: hi + 1] - paths[j + 1].values[: hi + 1]
        gap = paths[j + 1].drift_label - paths[j].drift_label
        _precheck_gap(gap, bundle.grid, hi, trunc)
        layer = f if V is None else f + V
        _argmax_guard(layer, hi, bundle.grid.step, trunc, gap)
        V = np.maximum.accumulate(layer[::-1])[::-1]
    i0 = bundle.grid.zero_index
    vals = paths[0].values[: hi + 1] + (V[i0] - V)
    g = bundle.grid.with_t_max(bundle.grid.time_at(hi))
    return SampledPath(g, vals, drift_label=paths[-1].drift_label)


def increment_ordering_margin(lower: SampledPath, upper: SampledPath) -> float:
    """min over grid cells of (upper increment - lower increment)."""
    d = np.diff(upper.values) - np.diff(lower.values)
    return float(d.min()) if len(d) else 0.0


def _validate_x_space(paths: Sequence[SampledPath], context: str) -> None:
    scale = max(1.0, max(float(np.abs(p.values).max()) for p in paths))
    for lo, hp in zip(paths, paths[1:]):
        margin = increment_ordering_margin(lo, hp)
        if margin < -ORDERING_TOL * scale:
            raise InternalConsistencyError(
                f"{context}: increment ordering violated by {-margin:.3e} "
                "(truncation too aggressive)"
            )


def script_d(bundle: PathBundle, trunc: TruncationPolicy) -> PathBundle:
    """Map a drift-ascending bundle to its coupled monotone representative.

    Component i is D^(i)(Z^i, ..., Z^1); the output has ordered increments
    and the same drift labels as the input.
    """
    n = len(bundle)
    hi = trunc.horizon_index(bundle.grid)
    etas = [_restrict(bundle.paths[0], hi)]
    for i in range(1, n):
        sub = PathBundle(bundle.paths[: i + 1], "Y")
        etas.append(d_iterated(sub, trunc, "recursive"))
    _validate_x_space(etas, "script_d")
    return PathBundle(tuple(etas), "X")


def multiline_step(
    bundle: PathBundle, driver: SampledPath, trunc: TruncationPolicy
) -> PathBundle:
    """One step of the coupled multi-queue evolution with a shared driver.

    The driver feeds the lowest queue; each queue's used services drive the
    next one up.  Preserves independent-drifted-Brownian inputs in law.
    """
    if bundle.space_tag != "Y":
        raise ConfigurationError("multiline step expects a Y-space bundle")
    out = []
    b = driver
    for i, Z in enumerate(bundle.paths):
        Zr = _restrict(Z, b.grid.n_points - 1)
        out.append(d_map(Zr, b, trunc))
        if i + 1 < len(bundle.paths):
            b = r_map(Zr, b, trunc)
    return PathBundle(tuple(out), "Y")


def busemann_chain_step(
    bundle: PathBundle, driver: SampledPath, trunc: TruncationPolicy
) -> PathBundle:
    """One step of the level-to-level evolution: every component against one driver."""
    if bundle.space_tag != "X":
        raise ConfigurationError("chain step expects an X-space bundle")
    out = []
    for Z in bundle.paths:
        Zr = _restrict(Z, min(driver.grid.n_points, Z.grid.n_points) - 1)
        br = _restrict(driver, Zr.grid.n_points - 1)
        out.append(d_map(Zr, br, trunc))
    _validate_x_space(out, "busemann_chain_step")
    return PathBundle(tuple(out), "X")


# ---------------------------------------------------------------------------
# deterministic identity checks (exact piecewise-linear evaluation)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IdentityReport:
    identity: str
    n: int
    max_rel_discrepancy: float
    window: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "identity": self.identity,
            "n": self.n,
            "max_rel_discrepancy": self.max_rel_discrepancy,
            "window": list(self.window),
        }


def _pl_inputs(paths: Sequence[SampledPath], trunc: TruncationPolicy):
    hi = trunc.horizon_index(paths[0].grid)
    return [exact.from_sampled(_restrict(p, hi)) for p in paths]


def _rel_discrepancy(lhs: exact.PLPath, rhs: exact.PLPath, window) -> float:
    sup = exact.sup_diff(lhs, rhs, window)
    xs = rhs.x
    sel = (xs >= window[0]) & (xs <= window[1])
    scale = max(1.0, float(np.abs(rhs.y[sel]).max()))
    return sup / scale


def exchange_identity_check(
    Z1: SampledPath, Z2: SampledPath, B1: SampledPath, trunc: TruncationPolicy
) -> IdentityReport:
    """D(D(Z2, R(Z1,B1)), D(Z1,B1)) against D(D(Z2,Z1), B1), exactly.

    Evaluated on the interior of the window; the two sides agree to
    floating-point roundoff when computed on the full piecewise-linear
    geometry.
    """
    pZ1, pZ2, pB1 = _pl_inputs([Z1, Z2, B1], trunc)
    pB2 = exact.r_map(pZ1, pB1)
    lhs = exact.d_map(exact.d_map(pZ2, pB2), exact.d_map(pZ1, pB1))
    rhs = exact.d_map(exact.d_map(pZ2, pZ1), pB1)
    window = trunc.interior_window(Z1.grid)
    return IdentityReport("exchange", 2, _rel_discrepancy(lhs, rhs, window), window)


def intertwining_check(
    B1: SampledPath, Zs: Sequence[SampledPath], trunc: TruncationPolicy
) -> IdentityReport:
    """D^(n+1)(Z^n..Z^1, B^1) against D^(n)(D(Z^n,B^n), ..., D(Z^1,B^1))."""
    n = len(Zs)
    pls = _pl_inputs([B1, *Zs], trunc)
    pB1, pZs = pls[0], pls[1:]
    lhs = exact.d_iterated([pB1] + pZs)
    bs = [pB1]
    for pz in pZs[:-1]:
        bs.append(exact.r_map(pz, bs[-1]))
    rhs = exact.d_iterated([exact.d_map(pz, pb) for pz, pb in zip(pZs, bs)])
    window = trunc.interior_window(B1.grid)
    return IdentityReport("intertwining", n, _rel_discrepancy(lhs, rhs, window), window)


def closed_form_check(bundle: PathBundle, trunc: TruncationPolicy) -> IdentityReport:
    """Recursive iterated transform against its layered-DP closed form (grid engine)."""
    rec = d_iterated(bundle, trunc, "recursive")
    clo = d_iterated(bundle, trunc, "closed_form")
    window = trunc.interior_window(bundle.grid)
    lo = rec.grid.index_of(max(rec.grid.t_min, window[0]))
    hi = rec.grid.index_of(window[1])
    diff = float(np.abs(rec.values[lo: hi + 1] - clo.values[lo: hi + 1]).max())
    scale = max(1.0, float(np.abs(clo.values[lo: hi + 1]).max()))
    return IdentityReport("closed_form", len(bundle), diff / scale, window)


def algebraic_relations_check(
    Z: SampledPath, B: SampledPath, trunc: TruncationPolicy
) -> IdentityReport:
    """Q >= 0, D(0) = R(0) = 0, and the shared-supremum algebra
    D = Z + Q(0) - Q, R = B + Q - Q(0) (one M array drives all three, so the
    residual is pure re-association roundoff)."""
    q = q_map(Z, B, trunc)
    d = d_map(Z, B, trunc)
    r = r_map(Z, B, trunc)
    i0 = q.grid.zero_index
    hi = q.grid.n_points - 1
    checks = [
        -float(q.values.min()),                      # Q >= 0
        abs(d.values[i0]),                           # D(0) = 0
        abs(r.values[i0]),                           # R(0) = 0
    ]
    zr = Z.values[: hi + 1]
    br = B.values[: hi + 1]
    checks.append(float(np.abs(d.values - (zr + (q.values[i0] - q.values))).max()))
    checks.append(float(np.abs(r.values - (br + (q.values - q.values[i0]))).max()))
    window = trunc.interior_window(Z.grid)
    scale = max(1.0, float(np.abs(d.values).max()))
    return IdentityReport("dqr_algebra", 1, max(checks) / scale, window)
