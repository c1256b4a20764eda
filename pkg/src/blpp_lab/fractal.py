"""Box-counting dimension estimation for exceptional time sets.

The running-maximum set of a path (times that strictly dominate a forward
window) is the grid proxy for the exceptional initial points whose
competition interface is nontrivial; a Brownian zero set serves as the
half-dimension calibration control.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import SampledPath
from .errors import ConfigurationError
from .stats import fit_loglog_slope

MIN_DECADES = 1.5  # required log10 span of the scale range


@dataclass(frozen=True)
class PointSet1D:
    """Grid times flagged as members, plus the window width of the membership rule."""

    indices: np.ndarray
    n_grid: int
    step: float
    window: float | None = None

    def __len__(self) -> int:
        return len(self.indices)

    def times(self, t0: float = 0.0) -> np.ndarray:
        return t0 + self.indices * self.step


@dataclass(frozen=True)
class DimensionFit:
    scales: np.ndarray
    box_counts: np.ndarray
    slope: float
    r2: float

    def to_dict(self) -> dict:
        return {
            "scales": self.scales.tolist(),
            "box_counts": self.box_counts.tolist(),
            "slope": self.slope,
            "r2": self.r2,
        }


def sliding_max(a: np.ndarray, w: int) -> np.ndarray:
    """max(a[i:i+w]) for each window start, O(n) via the two-pass block trick."""
    n = len(a)
    if w <= 0 or w > n:
        raise ConfigurationError("window must satisfy 1 <= w <= len(a)")
    n_out = n - w + 1
    pad = (-n) % w
    ap = np.concatenate([a, np.full(pad, -np.inf)])
    blocks = ap.reshape(-1, w)
    pref = np.maximum.accumulate(blocks, axis=1).ravel()[:n]
    suff = np.maximum.accumulate(blocks[:, ::-1], axis=1)[:, ::-1].ravel()[:n]
    return np.maximum(suff[:n_out], pref[w - 1: w - 1 + n_out])


def left_max_set(path: SampledPath, w: float) -> PointSet1D:
    """Grid points whose value strictly dominates every value in (s, s + w]."""
    dt = path.grid.step
    if w < 10 * dt:
        raise ConfigurationError(f"window w={w} must be at least 10 grid steps")
    W = int(round(w / dt))
    v = path.values
    fut = sliding_max(v[1:], W)          # max over (s, s + w] for each start s
    members = np.nonzero(v[: len(fut)] > fut)[0]
    return PointSet1D(members, len(v), dt, window=w)


def zero_set(path: SampledPath) -> PointSet1D:
    """Grid cells where the path changes sign (box proxy for the zero set)."""
    v = path.values
    sc = np.nonzero(np.signbit(v[:-1]) != np.signbit(v[1:]))[0]
    return PointSet1D(sc, len(v), path.grid.step, window=None)


def default_scales(step: float, upper: float) -> list[float]:
    """Dyadic scales step*4*2^k capped at `upper`."""
    out = []
    d = 4.0 * step
    while d <= upper + 1e-12:
        out.append(d)
        d *= 2.0
    return out


def box_dimension(points: PointSet1D, scales=None) -> DimensionFit:
    """Least-squares slope of log N(delta) against log(1/delta)."""
    if len(points) == 0:
        raise ConfigurationError("cannot fit a dimension to an empty set")
    if scales is None:
        upper = points.window / 4.0 if points.window else points.n_grid * points.step / 64.0
        scales = default_scales(points.step, upper)
    scales = sorted(float(s) for s in scales)
    if len(scales) < 4:
        raise ConfigurationError("need at least 4 scales")
    lo, hi = scales[0], scales[-1]
    if lo < 4.0 * points.step - 1e-12:
        raise ConfigurationError("scales must be at least 4 grid steps")
    if points.window is not None and hi > points.window / 4.0 + 1e-12:
        raise ConfigurationError("scales must stay below a quarter window")
    if math.log10(hi / lo) < MIN_DECADES - 1e-9:
        raise ConfigurationError(
            f"scale range must span at least {MIN_DECADES} decades"
        )
    counts = []
    for d in scales:
        wbox = max(1, int(round(d / points.step)))
        counts.append(len(np.unique(points.indices // wbox)))
    counts = np.array(counts, dtype=float)
    slope, r2 = fit_loglog_slope(1.0 / np.array(scales), counts)
    return DimensionFit(np.array(scales)[::-1], counts[::-1].astype(int), slope, r2)
