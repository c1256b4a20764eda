"""Joint sampling of the coupled drift-indexed path family on one level, and
closed-form evaluation of its one-dimensional increment law.

The family is indexed by drift lambda >= 0 (direction theta = 1/lambda^2).
At a fixed time t > 0 the map lambda -> X(lambda; t) is a nondecreasing pure
jump process with stationary increments; the increment X(lam;t) - X(0;t) has
distribution function F(z; lam, t) with an atom at zero, mean lam*t, and
expected jump count 2*(b-a)*sqrt(t/pi) on drift intervals [a, b].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erfcx, ndtr

from .env import ROLE_SEED, GridSpec, RngPolicy, SampledPath, sample_brownian
from .errors import ConfigurationError
from .queues import PathBundle, TruncationPolicy, _argmax_guard, _precheck_gap, script_d
from .stats import StatReport, ks_two_sample

SNAP_REL_TOL = 1e-9  # relative snap below which adjacent components count as stuck


def normal_cdf(x) -> np.ndarray:
    """Standard normal CDF via the complementary error function (|rel err| <~ 1e-15)."""
    return ndtr(x)


def increment_cdf(z, lam: float, t: float):
    """F(z; lam, t) = P(X(lam;t) - X(0;t) <= z) for z >= 0, lam > 0, t > 0.

    The exp(lam*z) * Phi(-(z+lam*t)/sqrt(2t)) products are evaluated through
    erfcx so the expression stays finite for large lam*z.
    """
    z = np.asarray(z, dtype=float)
    if lam <= 0.0 or t <= 0.0:
        raise ConfigurationError("increment_cdf requires lam > 0 and t > 0")
    if np.any(z < 0.0):
        raise ConfigurationError("increment_cdf requires z >= 0")
    s2t = math.sqrt(2.0 * t)
    a = (z - lam * t) / s2t
    y = (z + lam * t) / s2t
    damp = np.exp(-((z - lam * t) ** 2) / (4.0 * t))
    # exp(lam z) * Phi(-y) = 0.5 * erfcx(y/sqrt(2)) * damp ; exp(lam z)*exp(-y^2... ) = damp
    tail = 0.5 * erfcx(y / math.sqrt(2.0)) * damp
    out = ndtr(a) + (1.0 + lam * z + lam * lam * t) * tail - lam * math.sqrt(t / math.pi) * damp
    return out if out.shape else float(out)


def increment_atom(lam: float, t: float) -> float:
    """p = P(X(lam;t) = X(0;t)) = (2 + lam^2 t) Phi(-lam sqrt(t/2)) - lam sqrt(t/pi) e^{-lam^2 t/4}."""
    if t <= 0.0:
        raise ConfigurationError("increment_atom requires t > 0")
    if lam == 0.0:
        return 1.0
    return float(
        (2.0 + lam * lam * t) * ndtr(-lam * math.sqrt(t / 2.0))
        - lam * math.sqrt(t / math.pi) * math.exp(-lam * lam * t / 4.0)
    )


def increment_mgf(alpha: float, lam: float, t: float) -> float:
    """E[exp(-alpha (X(lam;t) - X(0;t)))] for alpha != lam."""
    if lam <= 0.0 or t <= 0.0:
        raise ConfigurationError("increment_mgf requires lam > 0 and t > 0")
    if abs(alpha - lam) < 1e-12 * max(1.0, abs(lam)):
        raise ConfigurationError("increment_mgf has a pole at alpha = lam")
    d = lam - alpha
    st2 = math.sqrt(t / 2.0)
    term1 = (
        math.exp(alpha * alpha * t - alpha * lam * t)
        * ndtr((lam - 2.0 * alpha) * st2)
        * (1.0 - alpha * alpha / (d * d))
    )
    term2 = ndtr(-lam * st2) * (
        1.0 + alpha * lam / (d * d) - alpha * (1.0 + lam * lam * t) / d
    )
    term3 = (lam * alpha / d) * math.sqrt(t / math.pi) * math.exp(-lam * lam * t / 4.0)
    return term1 + term2 + term3


def expected_jump_count(a: float, b: float, t: float) -> float:
    """Mean number of jumps of lambda -> X(lambda;t) with drift in [a, b]."""
    return 2.0 * (b - a) * math.sqrt(t / math.pi)


def expected_detected_jumps(drift_grid: Sequence[float], t: float) -> float:
    """Mean count of strict increases seen on a finite drift grid.

    Each cell detects a jump independently of location with probability
    1 - atom(gap, t) by increment stationarity; multiple jumps inside one
    cell collapse to a single detection (the documented grid undercount).
    """
    g = np.asarray(drift_grid, dtype=float)
    return float(sum(1.0 - increment_atom(b - a, t) for a, b in zip(g, g[1:])))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BusemannSample:
    """Coupled level sample: anchor (drift 0) plus one component per drift."""

    bundle: PathBundle
    seed: int
    trial: int

    def component(self, lam: float) -> SampledPath:
        for p in self.bundle.paths:
            if p.drift_label == lam:
                return p
        raise ConfigurationError(f"no component with drift {lam}")

    def values_at(self, t: float) -> np.ndarray:
        idx = self.bundle.grid.index_of(t)
        return np.array([p.values[idx] for p in self.bundle.paths])


def sample_busemann_level(
    drifts: Sequence[float],
    grid: GridSpec,
    trunc: TruncationPolicy,
    policy: RngPolicy,
    trial: int = 0,
) -> BusemannSample:
    """Sample (anchor, components) jointly at drifts 0 < lam_1 < ... < lam_n.

    Independent drifted Brownian paths are coupled through the iterated
    departure transform; the anchor component equals the drift-0 input path
    exactly.
    """
    lams = list(drifts)
    if any(l <= 0 for l in lams) or any(b <= a for a, b in zip(lams, lams[1:])):
        raise ConfigurationError("drifts must be strictly increasing and positive")
    inputs = [
        sample_brownian(grid, 0.0, 1.0, policy, policy.stream_id(trial, ROLE_SEED, 0))
    ]
    for j, lam in enumerate(lams, start=1):
        inputs.append(
            sample_brownian(grid, lam, 1.0, policy, policy.stream_id(trial, ROLE_SEED, j))
        )
    bundle = script_d(PathBundle(tuple(inputs), "Y"), trunc)
    return BusemannSample(bundle, policy.base_seed, trial)


def increment_horizon(lam: float, exponent: float = 60.0) -> float:
    """Horizon making the truncated supremum reliable for a drift gap lam."""
    return max(10.0, math.ceil(exponent / (lam * lam)))


def sample_increments(
    lam: float,
    ts: Sequence[float],
    n_trials: int,
    policy: RngPolicy,
    dt: float = 1e-3,
    horizon: float | None = None,
    batch: int = 256,
    trial_offset: int = 0,
) -> np.ndarray:
    """Monte Carlo draws of (X(lam;t) - X(0;t)) for each t, shape (n_trials, len(ts)).

    This is the two-component reduction of :func:`sample_busemann_level`:
    with W = anchor - drifted input, the increment equals
    M(0) - M(t) for M(t) = max_{t <= s <= T} W(s), and the atom at zero is an
    exact floating-point tie because both values come from one running-max
    array.  Trials are drawn in fixed-size batches so results are
    reproducible for a given (seed, trial_offset) regardless of threading.
    """
    ts = list(ts)
    T = increment_horizon(lam) if horizon is None else horizon
    n = int(round(T / dt))
    idx = [int(round(t / dt)) for t in ts]
    for t, i in zip(ts, idx):
        if abs(i * dt - t) > 1e-9 or i <= 0 or i > n:
            raise ConfigurationError(f"time {t} not on the increment grid")
    sd = math.sqrt(2.0 * dt)
    out = np.empty((n_trials, len(ts)))
    done = 0
    b = 0
    while done < n_trials:
        nb = min(batch, n_trials - done)
        gen = policy.generator(policy.stream_id(trial_offset + b, role=3, index=0))
        inc = gen.normal(-lam * dt, sd, size=(nb, n))
        W = np.concatenate([np.zeros((nb, 1)), np.cumsum(inc, axis=1)], axis=1)
        M = np.maximum.accumulate(W[:, ::-1], axis=1)[:, ::-1]
        for j, i in enumerate(idx):
            out[done: done + nb, j] = M[:, 0] - M[:, i]
        done += nb
        b += 1
    return out


@dataclass(frozen=True)
class JumpRecord:
    """Fixed-time scan across a drift grid."""

    t: float
    drift_grid: np.ndarray
    values: np.ndarray
    jump_locations: np.ndarray  # indices i with a strict increase on (lam_i, lam_{i+1}]

    @property
    def n_jumps(self) -> int:
        return len(self.jump_locations)


def jump_scan(
    t: float,
    a: float,
    b: float,
    n_drifts: int,
    grid: GridSpec,
    trunc: TruncationPolicy,
    policy: RngPolicy,
    trial: int = 0,
    guard: bool = True,
) -> JumpRecord:
    """Evaluate the coupled family at time t on a uniform drift grid over [a, b].

    Detection counts strict increases between consecutive grid drifts.
    Sticking between adjacent components is exact up to accumulated roundoff
    in their separate supremum chains, so increases are counted above a snap
    tolerance of SNAP_REL_TOL relative to the value scale (genuine jump sizes
    have a continuous density, so mass below the snap is negligible).
    """
    if n_drifts < 2:
        raise ConfigurationError("n_drifts must be >= 2")
    if not (0.0 <= a <= b):
        raise ConfigurationError("need 0 <= a <= b")
    lams_ab = np.linspace(a, b, n_drifts) if b > a else np.array([a])
    lams = np.unique(np.concatenate([[0.0], lams_ab]))
    hi = trunc.horizon_index(grid)
    it = grid.index_of(t)
    i0 = grid.zero_index
    if it > hi:
        raise ConfigurationError("evaluation time beyond the horizon")
    if guard:
        for lo_, hi_ in zip(lams, lams[1:]):
            _precheck_gap(hi_ - lo_, grid, hi, trunc)
    paths = [
        sample_brownian(grid, lam, 1.0, policy, policy.stream_id(trial, ROLE_SEED, j)).values[: hi + 1]
        for j, lam in enumerate(lams)
    ]
    n = len(paths)
    xs = np.empty(n)
    xs[0] = paths[0][it]
    for i in range(1, n):
        V = None
        for j in range(i - 1, -1, -1):
            f = paths[j] - paths[j + 1]
            layer = f if V is None else f + V
            if guard:
                _argmax_guard(layer, hi, grid.step, trunc, lams[j + 1] - lams[j])
            V = np.maximum.accumulate(layer[::-1])[::-1]
        xs[i] = paths[0][it] + (V[i0] - V[it])
    # separate supremum chains reround sticking blocks at the last-ulp level;
    # the running max restores exact monotonicity without touching real jumps
    xs = np.maximum.accumulate(xs)
    scale = max(1.0, float(np.abs(xs).max()))
    d = np.diff(xs)
    inside = lams[:-1] >= a - 1e-15  # only cells contained in [a, b] count
    jumps = np.nonzero((d > SNAP_REL_TOL * scale) & inside)[0]
    return JumpRecord(t, lams, xs, jumps)


def _component_draw(
    lams_req: Sequence[float],
    grid: GridSpec,
    trunc: TruncationPolicy,
    policy: RngPolicy,
    trial: int,
    t_eval: float,
) -> np.ndarray:
    """Values of the coupled components at the requested drifts and time."""
    pos = [l for l in lams_req if l > 0.0]
    if pos:
        s = sample_busemann_level(pos, grid, trunc, policy, trial)
        vals = s.values_at(t_eval)  # bundle drifts are (0, *pos)
        return np.array(
            [vals[0] if l == 0.0 else vals[1 + pos.index(l)] for l in lams_req]
        )
    p = sample_brownian(grid, 0.0, 1.0, policy, policy.stream_id(trial, ROLE_SEED, 0))
    return np.full(len(lams_req), p.value_at(t_eval))


def scaling_check(
    lams: Sequence[float],
    c: float,
    nu: float,
    grid: GridSpec,
    trunc: TruncationPolicy,
    policy: RngPolicy,
    t: float = 1.0,
    trials: int = 2000,
) -> StatReport:
    """Two-sample KS between components at time t and their rescaled law.

    Compares X-components at drifts lams against c * X~(t/c^2) - nu*t where
    X~ is sampled at drifts c*(lam + nu).  Reports the worst component KS.
    """
    if c <= 0.0:
        raise ConfigurationError("c must be positive")
    ts = t / (c * c)
    grid.index_of(ts)  # validates grid compatibility of the reparametrization
    lams = list(lams)
    lams2 = [c * (l + nu) for l in lams]
    base = np.empty((trials, len(lams)))
    resc = np.empty((trials, len(lams)))
    for k in range(trials):
        base[k] = _component_draw(lams, grid, trunc, policy, 2 * k, t)
        resc[k] = c * _component_draw(lams2, grid, trunc, policy, 2 * k + 1, ts) - nu * t
    ks = max(ks_two_sample(base[:, i], resc[:, i]) for i in range(len(lams)))
    return StatReport("scaling_check", ks, float("nan"), trials, statistic=ks)
