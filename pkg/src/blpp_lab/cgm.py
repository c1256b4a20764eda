"""Discrete exponential queue maps, the diffusive bridge to the continuous
increment law, and the reflected coupling maps with their exact identities.

The discrete departure map acts on arrival/service sequences through suffix
suprema of the service-minus-arrival walk; scaled by 1/sqrt(k) it converges
to the continuous departure transform.  The reflected maps (past suprema
instead of future suprema) reproduce the continuous transforms after the
time reversal f(t) -> -f(-t), exactly on the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env import ROLE_AUX, ROLE_SEED, GridSpec, RngPolicy, SampledPath, sample_brownian
from .errors import ConfigurationError, TruncationError
from .queues import PathBundle, TruncationPolicy, d_iterated, script_d, _restrict
from .stats import StatReport, fit_loglog_slope, ks_distance


# ---------------------------------------------------------------------------
# discrete queues
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteQueuePair:
    """Arrival increments I_k and service increments omega_k over k = 0..W-1.

    The associated walks are H (arrivals, H_{k+1} - H_k = I_k) and S
    (services, S_k - S_{k-1} = omega_k), both pinned at index 0.
    """

    arrivals: np.ndarray
    services: np.ndarray

    def __post_init__(self):
        if len(self.arrivals) != len(self.services):
            raise ConfigurationError("arrival and service windows must match")
        if np.any(self.arrivals < 0) or np.any(self.services < 0):
            raise ConfigurationError("increments must be nonnegative")

    @property
    def width(self) -> int:
        return len(self.arrivals)

    def stable(self) -> bool:
        return float(self.services.mean()) < float(self.arrivals.mean())


def _walk_diff(pair: DiscreteQueuePair) -> np.ndarray:
    """X_m = S_m - H_m for m = 0..W, with S_m = sum_{j<=m} omega_j matching
    omega index k = m and H_m = sum_{j<m} I_j."""
    W = pair.width
    X = np.empty(W + 1)
    X[0] = 0.0
    np.cumsum(pair.services - pair.arrivals, out=X[1:])
    return X


def d_discrete(
    pair: DiscreteQueuePair,
    guard_fraction: float = 0.1,
    require_stability: bool = True,
) -> np.ndarray:
    """Departure increments: I~_k = omega_k + M_k - M_{k+1} with
    M_k = sup_{m >= k} (S_m - H_m) over the finite window.

    Nonnegative by construction; raises when the suffix argmax for the first
    trusted index falls into the right guard band.
    """
    if require_stability and not pair.stable():
        raise ConfigurationError("unstable queue: mean service >= mean arrival")
    X = _walk_diff(pair)
    W = pair.width
    guard = max(1, int(math.ceil(guard_fraction * W)))
    a0 = int(np.argmax(X))
    if a0 > W - guard:
        raise TruncationError("suffix supremum driven by the window boundary")
    M = np.maximum.accumulate(X[::-1])[::-1]
    out = pair.services + (M[:-1] - M[1:])
    return out


def departures_walk(pair: DiscreteQueuePair, **kw) -> np.ndarray:
    """Walk of the departures: H~_t = sum_{k < t} I~_k, pinned at 0.

    Equals S_{t-1} - S_{-1} + M_0 - M_t in exact arithmetic, so equality of
    the walk with the arrivals walk is an exact floating-point tie through
    the shared suffix-max array.
    """
    out = np.empty(pair.width + 1)
    out[0] = 0.0
    np.cumsum(d_discrete(pair, **kw), out=out[1:])
    return out


# ---------------------------------------------------------------------------
# scaled bridge
# ---------------------------------------------------------------------------

def _scaled_walks(
    lam1: float, lam2: float, k: int, width: int, policy: RngPolicy, trial: int
) -> tuple[np.ndarray, np.ndarray]:
    """Scaled coupled walks Z^i(j) = k^{-1/2} sum_{l<=j} ((1 + lam_i/sqrt(k)) X_l - 1)
    from shared unit-exponential variates, on j = 0..width."""
    gen = policy.generator(policy.stream_id(trial, ROLE_AUX, 1))
    X1 = gen.exponential(1.0, width)
    X2 = gen.exponential(1.0, width)
    rk = math.sqrt(k)
    z1 = np.concatenate([[0.0], np.cumsum(((1.0 + lam1 / rk) * X1 - 1.0) / rk)])
    z2 = np.concatenate([[0.0], np.cumsum(((1.0 + lam2 / rk) * X2 - 1.0) / rk)])
    return z1, z2


@dataclass(frozen=True)
class ScaledPair:
    """Scaled interpolated pair: first coordinate and its departures transform."""

    k: int
    lam1: float
    lam2: float
    times: np.ndarray      # j / k
    first: np.ndarray      # Z_k^1 at the grid
    second: np.ndarray     # departures coordinate at the grid

    def increment(self, t: float) -> tuple[float, float]:
        j = int(round(t * self.k))
        return float(self.first[j]), float(self.second[j])

    def sticking_at(self, t: float) -> bool:
        """Exact tie of the two coordinates at time t (shared suffix array)."""
        j = int(round(t * self.k))
        return self.second[j] == self.first[j]


def cgm_scaled_pair(
    lam1: float,
    lam2: float,
    k: int,
    policy: RngPolicy,
    trial: int = 0,
    horizon_exponent: float = 40.0,
    guard_fraction: float = 0.05,
) -> ScaledPair:
    """Coupled pair of scaled discrete coordinates converging to the
    continuous coupled pair at drifts (lam1, lam2).

    Window length scales like k * horizon_exponent / gap^2 steps so the suffix
    suprema are drift-dominated.
    """
    if k < 100:
        raise ConfigurationError("k must be at least 100")
    if not (0.0 <= lam1 <= lam2):
        raise ConfigurationError("need 0 <= lam1 <= lam2")
    if lam1 == lam2:
        width = 4 * k
        z1, _ = _scaled_walks(lam1, lam2, k, width, policy, trial)
        times = np.arange(width + 1) / k
        return ScaledPair(k, lam1, lam2, times, z1, z1.copy())
    gap = lam2 - lam1
    width = int(math.ceil(horizon_exponent / (gap * gap)) * k)
    z1, z2 = _scaled_walks(lam1, lam2, k, width, policy, trial)
    X = z1 - z2
    guard = max(1, int(math.ceil(guard_fraction * width)))
    if int(np.argmax(X)) > width - guard:
        raise TruncationError("discrete window too short for the drift gap")
    M = np.maximum.accumulate(X[::-1])[::-1]
    second = z1 + (M[0] - M)
    times = np.arange(width + 1) / k
    return ScaledPair(k, lam1, lam2, times, z1, second)


# ---------------------------------------------------------------------------
# reflected coupling maps
# ---------------------------------------------------------------------------

def reflect_path(p: SampledPath) -> SampledPath:
    """f(t) -> -f(-t); an involution preserving the pin at 0."""
    g = p.grid
    rg = GridSpec(-g.t_max, -g.t_min, g.step)
    lbl = None if p.drift_label is None else p.drift_label
    return SampledPath(rg, -p.values[::-1], drift_label=lbl)


def phi_map(f: SampledPath, g: SampledPath, trunc: TruncationPolicy) -> SampledPath:
    """Past-supremum coupling map:
    f(t) + sup_{s <= t} (g - f)(s) - sup_{s <= 0} (g - f)(s),
    with the backward supremum truncated at the grid's left edge (the mirror
    of the forward horizon).  Pinned at 0.
    """
    if f.grid != g.grid:
        raise ConfigurationError("paths must share one grid")
    W = g.values - f.values
    n = len(W) - 1
    gap = None
    if f.drift_label is not None and g.drift_label is not None:
        gap = g.drift_label - f.drift_label
    rb = None
    if gap is None:
        rb = n
    elif gap > 0.0:
        mixing = int(math.ceil(4.0 * trunc.alarm_exponent / (gap * gap) / f.grid.step))
        rb = mixing if mixing < n else None
    else:
        raise ConfigurationError(f"drift gap must be positive, got {gap}")
    if rb is not None:
        tail = max(1, int(math.ceil(trunc.tail_fraction * n)))
        # rightmost argmax of the past window [0, rb]: mirror of the forward guard
        a_rb = rb - int(np.argmax(W[rb::-1]))
        if a_rb < tail:
            raise TruncationError(
                "past supremum argmax fell near the left boundary; window too short"
            )
    pm = np.maximum.accumulate(W)
    i0 = f.grid.zero_index
    vals = f.values + (pm - pm[i0])
    # the output tracks the coupled path's slope (mirror of the departures map)
    return SampledPath(f.grid, vals, drift_label=g.drift_label)


def phi_k(paths: Sequence[SampledPath], trunc: TruncationPolicy) -> list[SampledPath]:
    """Coupled k-tuple: component i is the nested map
    Psi^i(f_1, ..., f_i) = phi(f_1, Psi^{i-1}(f_2, ..., f_i))."""

    def psi(fs: list[SampledPath]) -> SampledPath:
        if len(fs) == 1:
            return fs[0]
        return phi_map(fs[0], psi(fs[1:]), trunc)

    return [psi(list(paths[:i])) for i in range(1, len(paths) + 1)]


def reflection_identity_check(
    Z: SampledPath, B: SampledPath, trunc: TruncationPolicy
) -> float:
    """Max relative discrepancy of -D(Z,B)(-t) against the past-sup map of the
    reflected pair; zero up to roundoff when both sides share the window."""
    from .queues import d_map

    hi = trunc.horizon_index(Z.grid)
    Zr, Br = _restrict(Z, hi), _restrict(B, hi)
    D = d_map(Zr, Br, trunc)
    phi = phi_map(reflect_path(Br), reflect_path(Zr), trunc)
    lhs = reflect_path(D)
    scale = max(1.0, float(np.abs(phi.values).max()))
    return float(np.abs(lhs.values - phi.values).max()) / scale


def rescaled_drift(alpha: float, n: float) -> float:
    """Drift of the diffusively rescaled component; converges to alpha."""
    n13 = n ** (1.0 / 3.0)
    return math.sqrt(n / (n13 - 2.0 * alpha)) - n13


@dataclass(frozen=True)
class CorrespondenceReport:
    n_components: int
    max_rel_discrepancy: float
    trials: int


def sh_correspondence_check(
    alphas: Sequence[float],
    grid: GridSpec,
    trunc: TruncationPolicy,
    policy: RngPolicy,
    trials: int = 10,
    trial_offset: int = 0,
) -> CorrespondenceReport:
    """Pathwise identity: the nested past-sup maps of reflected inputs equal
    the reflected iterated departure transforms, component by component.

    The inputs are truncated to the forward horizon before reflection so both
    sides see the same finite window.
    """
    alphas = sorted(alphas)
    worst = 0.0
    hi = trunc.horizon_index(grid)
    for trial in range(trial_offset, trial_offset + trials):
        zs = [
            _restrict(
                sample_brownian(grid, a, 1.0, policy, policy.stream_id(trial, ROLE_SEED, 8 + j)),
                hi,
            )
            for j, a in enumerate(alphas)
        ]
        bundle = script_d(PathBundle(tuple(zs), "Y"), trunc)
        fs = [reflect_path(z) for z in zs]
        gs = phi_k(fs, trunc)
        for eta, gpath in zip(bundle.paths, gs):
            refl = reflect_path(eta)       # same grid as gpath
            scale = max(1.0, float(np.abs(refl.values).max()))
            worst = max(worst, float(np.abs(gpath.values - refl.values).max()) / scale)
    return CorrespondenceReport(len(alphas), worst, trials)


def rescaled_marginal_increments(
    alpha: float,
    n: float,
    policy: RngPolicy,
    trials: int,
    t_eval: float = 1.0,
    stream: int = 0,
) -> np.ndarray:
    """Increments over [0, t_eval] of the diffusively rescaled component.

    Component marginals are exact Brownian motions, so the rescaled increment
    is drawn from its exact law N(rescaled_drift(alpha, n) * t, t); the trend
    toward N(alpha * t, t) is entirely the drift convergence.
    """
    lam_n = rescaled_drift(alpha, n)
    gen = policy.generator(policy.stream_id(stream, ROLE_AUX, 7))
    return gen.normal(lam_n * t_eval, math.sqrt(t_eval), size=trials)


def rescaled_path_drift_fit(
    alpha: float,
    n: float,
    policy: RngPolicy,
    trials: int = 64,
    span: float = 50.0,
    dt: float = 1e-2,
) -> float:
    """Fitted drift of sampled rescaled component paths (slope over [0, span])."""
    lam_n = rescaled_drift(alpha, n)
    npts = int(round(span / dt))
    slopes = np.empty(trials)
    for tr in range(trials):
        gen = policy.generator(policy.stream_id(tr, ROLE_AUX, 9))
        inc = gen.normal(lam_n * dt, math.sqrt(dt), npts)
        path = np.cumsum(inc)
        ts = dt * np.arange(1, npts + 1)
        slopes[tr] = float(np.dot(ts, path) / np.dot(ts, ts))
    return float(slopes.mean())
