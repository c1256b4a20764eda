"""Monte Carlo summaries, goodness-of-fit distances, and trial parallelism."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class StatReport:
    """Summary emitted by every statistical verification."""

    name: str
    estimate: float
    stderr: float
    n: int
    statistic: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)

    def summary_line(self) -> str:
        s = f"{self.name}: estimate={self.estimate:.6g} stderr={self.stderr:.3g} n={self.n}"
        if np.isfinite(self.statistic):
            s += f" statistic={self.statistic:.6g}"
        return s


def mean_report(name: str, sample: np.ndarray) -> StatReport:
    sample = np.asarray(sample, dtype=float)
    n = len(sample)
    se = float(sample.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return StatReport(name, float(sample.mean()), se, n)


def ks_distance(
    sample: np.ndarray,
    cdf: Callable[[np.ndarray], np.ndarray],
    atom_at: float | None = None,
    atom_mass: float = 0.0,
) -> float:
    """sup_z |F_n(z) - F(z)| for a CDF with at most one atom.

    Repeated sample values are handled as a single ECDF jump; the lower
    comparison at an atom uses the left limit F(z-) = F(z) - mass.
    """
    s = np.sort(np.asarray(sample, dtype=float))
    n = len(s)
    uniq, first = np.unique(s, return_index=True)
    counts = np.diff(np.append(first, n))
    ec_hi = (first + counts) / n
    ec_lo = first / n
    f_hi = np.asarray(cdf(uniq), dtype=float)
    f_lo = f_hi.copy()
    if atom_at is not None:
        f_lo[uniq == atom_at] -= atom_mass
    return float(max(np.abs(ec_hi - f_hi).max(), np.abs(ec_lo - f_lo).max()))


def ks_two_sample(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov distance."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    allv = np.concatenate([a, b])
    fa = np.searchsorted(a, allv, side="right") / len(a)
    fb = np.searchsorted(b, allv, side="right") / len(b)
    return float(np.abs(fa - fb).max())


def worker_count(requested: int | None = None) -> int:
    """Worker count: explicit argument, else BLPP_LAB_THREADS, else 1."""
    if requested is not None and requested > 0:
        return requested
    env = os.environ.get("BLPP_LAB_THREADS", "")
    try:
        k = int(env)
        return k if k > 0 else 1
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    """Map preserving input order; results merged deterministically by index."""
    k = worker_count(threads)
    items = list(items)
    if k <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(fn, items))


def fit_loglog_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope and r^2 of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2
