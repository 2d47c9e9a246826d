"""Frontier centring, martingales, time-averaged laws of the maximum."""

from dataclasses import dataclass, replace
import math

import numpy as np

from .errors import ParameterError, StateError

SQRT2 = math.sqrt(2.0)
LOG_COEFF = 3.0 / (2.0 * SQRT2)


def front_centering(t):
    """``m(t) = sqrt2 t - 3/(2 sqrt2) ln t``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ParameterError("front centring needs t > 0")
    m = SQRT2 * t_arr - LOG_COEFF * np.log(t_arr)
    return float(m) if m.ndim == 0 else m


def relative_heights(positions, t):
    """``(y_k, z_k)`` with ``y = sqrt2 t - x`` and ``z = y exp(-sqrt2 y)``."""
    y = SQRT2 * t - np.asarray(positions, dtype=float)
    return y, y * np.exp(-SQRT2 * y)


@dataclass(frozen=True)
class MartingaleSnapshot:
    t: float
    Y: float
    Z: float
    Z2: float
    min_y: float

    COLUMNS = ("t", "Y", "Z", "Z2", "min_y")

    def as_row(self):
        return (self.t, self.Y, self.Z, self.Z2, self.min_y)


def martingale_snapshot(pop, compensated=False):
    """Additive martingale ``Y``, derivative martingale ``Z`` and ``Z2``.

    With ``compensated`` the ``Y`` and ``Z`` that pruned particles carried
    when they were removed are added back. Both are martingales, so this is
    the conditional mean of the unpruned value given the pruned history;
    without it ``Z`` misses the mass held far below the maximum.
    """
    if pop.size == 0:
        raise StateError("population is empty")
    snap = snapshot_from_positions(pop.pos, pop.time)
    if compensated:
        snap = replace(snap, Y=snap.Y + pop.pruned_Y, Z=snap.Z + pop.pruned_Z)
    return snap


def snapshot_from_positions(positions, t):
    y, z = relative_heights(positions, t)
    e = np.exp(-SQRT2 * y)
    return MartingaleSnapshot(float(t), float(e.sum()), float(z.sum()),
                              float(np.sum(y * y * e * e)), float(y.min()))


def snapshots_from_trace(trace, compensated=False):
    """Checkpoint trace rows as snapshots (see :func:`martingale_snapshot`).

    Compensation only counts removals recorded in ``trace`` itself.
    """
    tr = np.asarray(trace, dtype=float).reshape(-1, 9)
    y, z = tr[:, 2].copy(), tr[:, 3].copy()
    if compensated:
        y += np.cumsum(tr[:, 7])
        z += np.cumsum(tr[:, 8])
    return [MartingaleSnapshot(float(r[0]), float(a), float(b), float(r[4]), float(r[5]))
            for r, a, b in zip(tr, y, z)]


def max_displacement(pop):
    """``M(t) = max_k x_k(t) - m(t)``."""
    if pop.size == 0:
        raise StateError("population is empty")
    if not pop.time > 0:
        raise ParameterError("M(t) is undefined at t = 0")
    return pop.max_position() - front_centering(pop.time)


@dataclass
class EmpiricalCdf:
    """Distribution function tabulated on an increasing grid."""

    x_grid: np.ndarray
    values: np.ndarray
    n: int = 0

    def __post_init__(self):
        self.x_grid = np.asarray(self.x_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.x_grid.shape != self.values.shape or self.x_grid.ndim != 1:
            raise ParameterError("grid and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.x_grid) <= 0):
            raise ParameterError("x grid must be strictly increasing")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ParameterError("CDF values must lie in [0, 1]")
        if np.any(np.diff(self.values) < 0):
            raise ParameterError("CDF values must be non-decreasing")

    @classmethod
    def from_samples(cls, samples, x_grid, weights=None):
        s = np.asarray(samples, dtype=float)
        if s.size == 0:
            raise ParameterError("no samples")
        xg = np.asarray(x_grid, dtype=float)
        if weights is None:
            order = np.sort(s)
            vals = np.searchsorted(order, xg, side="right") / s.size
        else:
            w = np.asarray(weights, dtype=float)
            order = np.argsort(s)
            cw = np.concatenate([[0.0], np.cumsum(w[order])])
            vals = cw[np.searchsorted(s[order], xg, side="right")] / cw[-1]
        return cls(xg, np.clip(vals, 0.0, 1.0), int(s.size))

    def __call__(self, x):
        """Right-continuous step interpolation between grid points."""
        idx = np.searchsorted(self.x_grid, x, side="right") - 1
        return np.where(idx < 0, 0.0, self.values[np.clip(idx, 0, None)])

    def sup_distance(self, other):
        """Sup over this grid of the distance to a callable or another CDF."""
        if isinstance(other, EmpiricalCdf):
            if other.x_grid.shape == self.x_grid.shape and np.allclose(other.x_grid, self.x_grid):
                ref = other.values
            else:
                ref = other(self.x_grid)
        else:
            ref = np.asarray(other(self.x_grid), dtype=float)
        return float(np.max(np.abs(self.values - ref)))

    def binomial_halfwidth(self, z=1.96):
        if not self.n:
            return np.full(self.values.shape, np.nan)
        return z * np.sqrt(self.values * (1 - self.values) / self.n)


def empirical_cdf(m_path, x_grid, t_from=0.0):
    """Time-averaged law of ``M`` along one trajectory.

    ``m_path`` holds rows ``(s, M(s))`` on a uniform grid whose last row is
    the right end of the time window. Every other sample stands for the
    interval of length ``ds`` that it starts (left Riemann sum), so
    ``F(x) = (1/T') sum 1{M(s_i) <= x} ds`` where ``T'`` is the covered
    duration. Samples before ``t_from`` are dropped (the ``eps T`` cutoff).
    A single row is treated as a point mass.
    """
    path = np.asarray(m_path, dtype=float)
    if path.ndim != 2 or path.shape[0] == 0:
        raise ParameterError("empty M path")
    if path.shape[0] > 1:
        path = path[:-1]
    path = path[path[:, 0] >= t_from - 1e-9]
    if path.shape[0] == 0:
        raise ParameterError("no samples after the cutoff")
    s = path[:, 0]
    if s.size > 1:
        ds = np.diff(s)
        if np.ptp(ds) > 1e-6 * max(ds.mean(), 1e-12):
            raise ParameterError("M path must be sampled on a uniform grid")
    return EmpiricalCdf.from_samples(path[:, 1], x_grid)


@dataclass(frozen=True)
class GumbelParams:
    C: float
    Z: float

    def __post_init__(self):
        if not (self.C > 0 and self.Z > 0):
            raise ParameterError("Gumbel parameters C and Z must be positive")


def gumbel_predict(params, x):
    """``exp(-C Z exp(-sqrt2 x))``."""
    x = np.asarray(x, dtype=float)
    v = np.exp(-params.C * params.Z * np.exp(-SQRT2 * x))
    return float(v) if v.ndim == 0 else v


def _max_worker(args):
    from .engine import advance, init_population
    from .stochastic import RandomStream

    seed, key, t, law, prune, step = args
    st = RandomStream(seed, _key=key)
    pop = init_population(step, st, law)
    advance(pop, t, law, prune, st)
    return pop.max_position() - front_centering(t), pop.pruned_count, pop.pruned_mass_bound


def sample_max_displacement(t, replicas, stream, law=None, prune=None, step=1.0, tag="max",
                            threads=1, with_pruning=False):
    """``M(t)`` for ``replicas`` independent processes (one sub-stream each).

    With ``with_pruning`` also returns the summed ``(pruned_count,
    pruned_mass_bound)`` over replicas.
    """
    from ._parallel import replica_map
    from .engine import OffspringLaw, PruneConfig

    law = law or OffspringLaw.binary()
    prune = prune or PruneConfig()
    jobs = [(stream.seed, stream.derive(r, tag).key, t, law, prune, step) for r in range(replicas)]
    res = replica_map(_max_worker, jobs, threads)
    out = np.array([r[0] for r in res], dtype=float)
    if with_pruning:
        return out, (sum(r[1] for r in res), float(sum(r[2] for r in res)))
    return out


def conditional_max_cdf(early, horizon, x_grid, n_cont, stream, law=None, prune=None, return_samples=False):
    """Law of ``M(horizon)`` given the frozen population ``early``.

    Each of the ``n_cont`` continuations restarts from a copy of ``early`` with
    its own sub-stream; the CDF is the fraction whose ``M(horizon) <= x``.
    """
    from .engine import OffspringLaw, PruneConfig, advance, resample_clocks

    if not horizon > early.time:
        raise ParameterError(f"horizon {horizon} must exceed the conditioning time {early.time}")
    if n_cont < 100:
        raise ParameterError("need at least 100 continuations")
    law = law or OffspringLaw.binary()
    prune = prune or PruneConfig()
    m = front_centering(horizon)
    base = early.copy(keep_history=False)
    base.record_paths = False
    samples = np.empty(n_cont)
    for i in range(n_cont):
        st = stream.derive(i, "continuation")
        pop = resample_clocks(base.copy(keep_history=False), law, st)
        advance(pop, horizon, law, prune, st)
        samples[i] = pop.max_position() - m
    cdf = EmpiricalCdf.from_samples(samples, x_grid)
    return (cdf, samples) if return_samples else cdf
