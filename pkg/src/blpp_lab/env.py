"""Seed-reproducible sampling of pinned two-sided Brownian paths on uniform grids.

Paths are piecewise linear between grid points and carry their value arrays
directly; every sampled path has value exactly 0.0 at t = 0.  Randomness is
counter-based (Philox 4x64): a path is fully determined by
(base_seed, stream_id, half), independent of execution order, so Monte Carlo
campaigns parallelize without coordination.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class GridSpec:
    """Uniform time grid containing 0 as an exact grid point.

    Grid times are reproduced bit-exactly as ``(i - zero_index) * step``; the
    realized endpoints may differ from the requested ones by a few ulp.
    """

    t_min: float
    t_max: float
    step: float

    def __post_init__(self):
        if not (self.step > 0.0):
            raise ConfigurationError(f"step must be positive, got {self.step}")
        if not (self.t_min < 0.0 < self.t_max):
            raise ConfigurationError(
                f"grid must satisfy t_min < 0 < t_max, got [{self.t_min}, {self.t_max}]"
            )
        for name, val in (("t_min", self.t_min), ("t_max", self.t_max)):
            k = round(val / self.step)
            if abs(k * self.step - val) > 1e-9 * max(1.0, abs(val)):
                raise ConfigurationError(
                    f"{name}={val} is not an integer multiple of step={self.step}"
                )

    @property
    def zero_index(self) -> int:
        return round(-self.t_min / self.step)

    @property
    def n_points(self) -> int:
        return round((self.t_max - self.t_min) / self.step) + 1

    def times(self) -> np.ndarray:
        return (np.arange(self.n_points) - self.zero_index) * self.step

    def time_at(self, index: int) -> float:
        return (index - self.zero_index) * self.step

    def index_of(self, t: float) -> int:
        """Exact grid index of an on-grid time; raises if t is off-grid."""
        i = round((t - self.t_min) / self.step)
        if i < 0 or i >= self.n_points or abs(self.time_at(i) - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigurationError(f"time {t} is not on the grid")
        return i

    def with_t_max(self, t_max: float) -> "GridSpec":
        return replace(self, t_max=t_max)


@dataclass(frozen=True)
class RngPolicy:
    """Counter-based stream derivation: (base_seed, stream_id) -> generator.

    Streams use numpy's Philox 4x64 with the 128-bit key
    ``[base_seed, stream_id * 2 + half]``.  Identical (base_seed, stream_id)
    always yields identical output regardless of thread schedule.  The helper
    :meth:`stream_id` packs (trial, role, index) into disjoint id ranges.
    """

    base_seed: int

    # bit layout for packed stream ids: trial | role | index
    _ROLE_BITS = 8
    _INDEX_BITS = 20

    def generator(self, stream_id: int, half: int = 0) -> np.random.Generator:
        key = np.array(
            [self.base_seed & _MASK64, ((stream_id << 1) | (half & 1)) & _MASK64],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    @staticmethod
    def zigzag(level: int) -> int:
        """Map a signed level to a nonnegative index (0, -1, 1, -2, ... -> 0, 1, 2, 3)."""
        return 2 * level if level >= 0 else -2 * level - 1

    def stream_id(self, trial: int = 0, role: int = 0, index: int = 0) -> int:
        if not (0 <= role < (1 << self._ROLE_BITS)):
            raise ConfigurationError(f"role out of range: {role}")
        if not (0 <= index < (1 << self._INDEX_BITS)):
            raise ConfigurationError(f"index out of range: {index}")
        return (trial << (self._ROLE_BITS + self._INDEX_BITS)) | (role << self._INDEX_BITS) | index


# stream roles used across the package
ROLE_FIELD = 0     # environment field levels
ROLE_SEED = 1      # drifted seed paths for queue-map inputs
ROLE_DRIVER = 2    # driving paths of Markov-chain steps
ROLE_AUX = 3       # anything else (discrete walks, oracles)


@dataclass(frozen=True)
class SampledPath:
    """A real path sampled on a uniform grid, pinned at 0 unless noted."""

    grid: GridSpec
    values: np.ndarray
    drift_label: float | None = None

    def __post_init__(self):
        if len(self.values) != self.grid.n_points:
            raise ConfigurationError(
                f"value array length {len(self.values)} != grid points {self.grid.n_points}"
            )

    @property
    def pinned(self) -> bool:
        return self.values[self.grid.zero_index] == 0.0

    def value_at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])

    def increment(self, s: float, t: float) -> float:
        """f(s, t) = f(t) - f(s)."""
        return self.value_at(t) - self.value_at(s)

    def restrict_to(self, hi_index: int) -> "SampledPath":
        """Restriction to grid indices [0, hi_index]."""
        g = self.grid.with_t_max(self.grid.time_at(hi_index))
        return SampledPath(g, self.values[: hi_index + 1], self.drift_label)

    def to_csv(self, path) -> None:
        ts = self.grid.times()
        with open(path, "w", newline="") as f:
            f.write("t,value\n")
            for t, v in zip(ts, self.values):
                f.write(f"{t:.17g},{v:.17g}\n")

    @staticmethod
    def from_csv(path, drift_label: float | None = None) -> "SampledPath":
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        ts, vals = data[:, 0], data[:, 1]
        step = float(ts[1] - ts[0])
        grid = GridSpec(float(ts[0]), float(ts[-1]), step)
        return SampledPath(grid, vals, drift_label)

    def to_binary(self, path) -> None:
        """Grid header (t_min, t_max, step, n as little-endian) + raw doubles."""
        with open(path, "wb") as f:
            f.write(struct.pack("<dddq", self.grid.t_min, self.grid.t_max,
                                self.grid.step, self.grid.n_points))
            f.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @staticmethod
    def from_binary(path, drift_label: float | None = None) -> "SampledPath":
        with open(path, "rb") as f:
            t_min, t_max, step, n = struct.unpack("<dddq", f.read(32))
            vals = np.frombuffer(f.read(8 * n), dtype="<f8").astype(np.float64)
        return SampledPath(GridSpec(t_min, t_max, step), vals, drift_label)


def sample_brownian(
    grid: GridSpec,
    drift: float,
    variance: float,
    policy: RngPolicy,
    stream_id: int,
) -> SampledPath:
    """Two-sided Brownian motion with drift on the grid, pinned at 0.

    Values are cumulative sums of independent N(drift*dt, variance*dt)
    increments built outward from 0; the two halves use disjoint sub-streams.
    """
    if not (variance > 0.0):
        raise ConfigurationError(f"variance must be positive, got {variance}")
    dt = grid.step
    z = grid.zero_index
    n = grid.n_points
    sd = np.sqrt(variance * dt)
    mu = drift * dt
    values = np.empty(n)
    values[z] = 0.0
    n_pos = n - 1 - z
    if n_pos > 0:
        inc = policy.generator(stream_id, half=0).normal(mu, sd, n_pos)
        values[z + 1:] = np.cumsum(inc)
    if z > 0:
        inc = policy.generator(stream_id, half=1).normal(mu, sd, z)
        values[:z] = -np.cumsum(inc)[::-1]
    return SampledPath(grid, values, drift_label=drift)


@dataclass(frozen=True)
class BrownianField:
    """Independent two-sided Brownian motions indexed by a contiguous level range."""

    level_lo: int
    level_hi: int
    paths: tuple[SampledPath, ...]
    seed: int

    def __post_init__(self):
        if len(self.paths) != self.level_hi - self.level_lo + 1:
            raise ConfigurationError("path count does not match level range")

    @property
    def grid(self) -> GridSpec:
        return self.paths[0].grid

    def level(self, m: int) -> SampledPath:
        if not (self.level_lo <= m <= self.level_hi):
            raise ConfigurationError(f"level {m} outside [{self.level_lo}, {self.level_hi}]")
        return self.paths[m - self.level_lo]

    def levels(self) -> Iterable[int]:
        return range(self.level_lo, self.level_hi + 1)


def sample_field(
    levels: Sequence[int] | range,
    grid: GridSpec,
    policy: RngPolicy,
    trial: int = 0,
) -> BrownianField:
    """One zero-drift, unit-variance path per level, streams independent by level."""
    levels = list(levels)
    if not levels:
        raise ConfigurationError("levels must be nonempty")
    lo, hi = min(levels), max(levels)
    if set(levels) != set(range(lo, hi + 1)):
        raise ConfigurationError("levels must form a contiguous range")
    paths = tuple(
        sample_brownian(
            grid, 0.0, 1.0, policy,
            policy.stream_id(trial=trial, role=ROLE_FIELD, index=RngPolicy.zigzag(m)),
        )
        for m in range(lo, hi + 1)
    )
    return BrownianField(lo, hi, paths, policy.base_seed)
