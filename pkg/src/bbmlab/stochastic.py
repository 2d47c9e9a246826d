"""Seeded sampling primitives: exponential clocks, Brownian increments, bridges.

Random numbers come from numpy's ``Generator`` over the PCG64 bit generator.
Gaussians use numpy's ziggurat ``standard_normal`` and exponentials its
ziggurat ``standard_exponential``; both are fixed for a given numpy release,
so a fixed seed gives bitwise-identical output. The numba kernels draw from
the very same ``Generator`` object and therefore consume the same stream.

Sub-streams are derived with ``numpy.random.SeedSequence``: the entropy is the
user seed and the spawn key is the path of ``(replica, crc32(tag))`` pairs
from the root. SeedSequence hashes the pair into the PCG64 state, so streams
with distinct keys are statistically independent and do not overlap for any
practical sample count.
"""

from dataclasses import dataclass
import math
import zlib

import numpy as np

from .errors import ParameterError


def tag_key(tag):
    """Stable 32-bit integer for a purpose tag."""
    return zlib.crc32(str(tag).encode("utf-8")) & 0xFFFFFFFF


class RandomStream:
    """Single-owner random stream identified by ``(seed, spawn path)``.

    >>> a, b = RandomStream(7), RandomStream(7)
    >>> a.generator.random() == b.generator.random()
    True
    """

    def __init__(self, seed, replica=0, tag="root", *, _key=None):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.key = tuple(_key) if _key is not None else (int(replica), tag_key(tag))
        self._seq = np.random.SeedSequence(entropy=seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    def derive(self, replica, tag):
        """Independent child stream; depends only on (seed, path, replica, tag)."""
        return RandomStream(self.seed, _key=self.key + (int(replica), tag_key(tag)))

    def derive_many(self, n, tag):
        return [self.derive(i, tag) for i in range(n)]

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, key={self.key})"


def exponential_sample(stream, rate=1.0, size=None):
    """Exp(rate) sample(s); mean ``1/rate``."""
    if not rate > 0:
        raise ParameterError(f"rate must be positive, got {rate}")
    return stream.generator.standard_exponential(size) / rate


def brownian_increment(stream, dt, size=None):
    """Gaussian displacement with mean 0 and variance ``dt``."""
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    return math.sqrt(dt) * stream.generator.standard_normal(size)


@dataclass(frozen=True)
class BridgeSpec:
    """Brownian bridge of length ``t`` from ``a`` to ``b`` observed on ``grid``."""

    t: float
    a: float
    b: float
    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        object.__setattr__(self, "grid", grid)
        if not self.t > 0:
            raise ParameterError("bridge length must be positive")
        if grid.ndim != 1 or grid.size < 2:
            raise ParameterError("bridge grid needs at least two points")
        if grid[0] != 0.0 or grid[-1] != self.t:
            raise ParameterError("bridge grid must start at 0 and end at t")
        if np.any(np.diff(grid) <= 0):
            raise ParameterError("bridge grid must be strictly increasing")

    @classmethod
    def uniform(cls, t, a=0.0, b=0.0, steps=100):
        grid = np.linspace(0.0, t, steps + 1)
        grid[-1] = t
        return cls(t, a, b, grid)


def bridge_sample_paths(stream, spec, n_paths):
    """``n_paths`` bridge paths at the grid times, shape ``(n_paths, len(grid))``.

    Forward conditioning: from ``x`` at time ``s`` the value after a step ``h``
    is Gaussian with mean ``x + h (b - x) / (t - s)`` and variance
    ``h (t - s - h) / (t - s)``. This is exact in law at the grid points. The
    endpoints are assigned, not sampled, so they are exact.
    """
    grid = spec.grid
    out = np.empty((n_paths, grid.size))
    out[:, 0] = spec.a
    x = np.full(n_paths, float(spec.a))
    gen = stream.generator
    for i in range(grid.size - 2):
        rem = spec.t - grid[i]
        h = grid[i + 1] - grid[i]
        x = x + (h / rem) * (spec.b - x) + math.sqrt(h * (rem - h) / rem) * gen.standard_normal(n_paths)
        out[:, i + 1] = x
    out[:, -1] = spec.b
    return out


def bridge_sample_path(stream, spec):
    """One bridge path at the grid times."""
    return bridge_sample_paths(stream, spec, 1)[0]


def bridge_below_line_bound(z1, z2, r1, r2, t):
    """Upper bound on P[bridge_t(s) <= (1-s/t) z1 + (s/t) z2 for r1 <= s <= t-r2].

    The bridge is pinned at 0 at both ends. Returns
    ``2/(t-r1-r2) * (z(r1)+sqrt(r1)) * (z(r2)+sqrt(r2))``; the value can
    exceed 1.
    """
    if min(z1, z2, r1, r2) < 0:
        raise ParameterError("z1, z2, r1, r2 must be non-negative")
    if not t > r1 + r2:
        raise ParameterError(f"need t > r1 + r2, got t={t}, r1={r1}, r2={r2}")
    zr1 = (1.0 - r1 / t) * z1 + (r1 / t) * z2
    zr2 = (r2 / t) * z1 + (1.0 - r2 / t) * z2
    return 2.0 / (t - r1 - r2) * (zr1 + math.sqrt(r1)) * (zr2 + math.sqrt(r2))


def bridge_below_line_probability(stream, z1, z2, r1, r2, t, n_paths=100_000, steps=200, chunk=20_000):
    """Monte Carlo estimate of the probability bounded by :func:`bridge_below_line_bound`.

    The line is checked only on a uniform grid of ``steps`` intervals with the
    window ends ``r1`` and ``t - r2`` inserted, so the estimate is biased
    upwards (crossings between grid points are missed). Returns ``(p, se)``.
    """
    if not t > r1 + r2:
        raise ParameterError(f"need t > r1 + r2, got t={t}, r1={r1}, r2={r2}")
    grid = np.union1d(np.linspace(0.0, t, steps + 1), [r1, t - r2])
    grid[-1] = t
    spec = BridgeSpec(t, 0.0, 0.0, grid)
    line = (1.0 - grid / t) * z1 + (grid / t) * z2
    window = (grid >= r1) & (grid <= t - r2)
    hits = 0
    done = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        paths = bridge_sample_paths(stream, spec, m)
        ok = np.all(paths[:, window] <= line[window], axis=1)
        hits += int(ok.sum())
        done += m
    p = hits / n_paths
    se = math.sqrt(max(p * (1 - p), 0.25 / n_paths) / n_paths)
    return p, se
