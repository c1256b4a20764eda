"""Exact queue transforms on piecewise-linear paths.

The grid engine in :mod:`blpp_lab.queues` evaluates suprema over grid
vertices only.  That is exact for a single transform (a piecewise-linear
path attains its running supremum at a vertex), but compositions of
transforms are not: the output of one transform has genuinely off-grid
breakpoints where the running maximum peels away from the path, and the
deterministic exchange/intertwining identities hold only when the next
supremum sees those crossing points.  This module keeps the full
piecewise-linear geometry so composed identities hold to floating-point
precision.

Functions are represented by sorted breakpoint arrays ``(x, y)`` and are
linear in between.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .env import SampledPath


class PLPath(NamedTuple):
    """Piecewise-linear function on [x[0], x[-1]]."""

    x: np.ndarray
    y: np.ndarray

    def at(self, t: float) -> float:
        return float(np.interp(t, self.x, self.y))

    def negate(self) -> "PLPath":
        return PLPath(self.x, -self.y)

    def reflect(self) -> "PLPath":
        """t -> -f(-t)."""
        return PLPath(-self.x[::-1], -self.y[::-1])


def from_sampled(path: SampledPath) -> PLPath:
    return PLPath(path.grid.times(), np.asarray(path.values, dtype=float))


def merge(f: PLPath, g: PLPath) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Common breakpoint refinement of two functions on the same domain."""
    if f.x.shape == g.x.shape and np.array_equal(f.x, g.x):
        return f.x, f.y, g.y
    xs = np.union1d(f.x, g.x)
    return xs, np.interp(xs, f.x, f.y), np.interp(xs, g.x, g.y)


def suffix_max(f: PLPath) -> PLPath:
    """M(t) = sup над [t, x[-1]] of f, with peel-off crossings inserted.

    New breakpoints appear exactly in cells where the path descends through
    the level of the running maximum from the right: y[i+1] < m[i+1] < y[i].
    """
    x, y = f.x, f.y
    m = np.maximum.accumulate(y[::-1])[::-1]
    yi, yi1, mi1 = y[:-1], y[1:], m[1:]
    mask = (yi1 < mi1) & (mi1 < yi)
    idx = np.nonzero(mask)[0]
    if len(idx) == 0:
        return PLPath(x, m)
    c = x[idx] + (yi[idx] - mi1[idx]) / (yi[idx] - yi1[idx]) * (x[idx + 1] - x[idx])
    xs = np.insert(x, idx + 1, c)
    ys = np.insert(m, idx + 1, mi1[idx])
    return PLPath(xs, ys)


def d_map(Z: PLPath, B: PLPath) -> PLPath:
    """Departure transform D(Z, B)(t) = B(t) + M(0) - M(t), M(t) = sup_[t,T] (B - Z)."""
    xs, z, b = merge(Z, B)
    M = suffix_max(PLPath(xs, b - z))
    x2, b2, m2 = merge(PLPath(xs, b), M)
    return PLPath(x2, b2 + (M.at(0.0) - m2))


def r_map(Z: PLPath, B: PLPath) -> PLPath:
    """Service-output transform R(Z, B)(t) = Z(t) + M(t) - M(0)."""
    xs, z, b = merge(Z, B)
    M = suffix_max(PLPath(xs, b - z))
    x2, z2, m2 = merge(PLPath(xs, z), M)
    return PLPath(x2, z2 + (m2 - M.at(0.0)))


def d_iterated(paths: list[PLPath]) -> PLPath:
    """D^(n)(Z^n, ..., Z^1) for a drift-ascending list [Z^1, ..., Z^n]."""
    cur = paths[-1]
    for p in paths[-2::-1]:
        cur = d_map(cur, p)
    return cur


def sup_diff(f: PLPath, g: PLPath, window: tuple[float, float] | None = None) -> float:
    """sup |f - g| over a closed window (default: common domain)."""
    xs, yf, yg = merge(f, g)
    d = np.abs(yf - yg)
    if window is not None:
        lo, hi = window
        sel = (xs >= lo) & (xs <= hi)
        d = d[sel]
    return float(d.max())
