"""Branching Brownian motion with frontier-relative pruning.

A :class:`Population` stores its particles as parallel numpy arrays
(structure of arrays). Positions are exact at every event and checkpoint
time: branch times are exponential clocks and motion between events is an
exact Gaussian increment.

Path history is optional. When enabled, each checkpoint stores the
positions of the particles alive at that time together with a back-pointer
to the ancestor's row at the previous checkpoint. A particle's checkpointed
path is recovered by following the back-pointers, which costs one record
per particle per checkpoint instead of a full path per particle.
"""

from dataclasses import dataclass, field
import math
import struct

import numpy as np

from .. import _accel
from ..errors import CapacityError, ParameterError, StateError
from . import kernels, kernels_np

DEFAULT_CHECKPOINT_STEP = 0.1
DEFAULT_WINDOW = 12.0
DEFAULT_CAP = 5_000_000


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring distribution ``p_k`` for ``k = 1..len(probs)``.

    ``rate`` is the branching rate (1 for the standard process); 0 turns
    branching off and is meant for tests.
    """

    probs: tuple
    rate: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", tuple(float(v) for v in p))
        if p.ndim != 1 or p.size == 0 or np.any(p < 0):
            raise ParameterError("offspring probabilities must be a non-empty non-negative vector")
        k = np.arange(1, p.size + 1)
        if abs(p.sum() - 1.0) > 1e-12:
            raise ParameterError(f"offspring probabilities sum to {p.sum()!r}, not 1")
        if abs((k * p).sum() - 2.0) > 1e-12:
            raise ParameterError(f"mean offspring number is {(k * p).sum()!r}, not 2")
        if self.rate < 0:
            raise ParameterError("branching rate must be non-negative")

    @classmethod
    def binary(cls, rate=1.0):
        return cls((0.0, 1.0), rate)

    @property
    def K(self):
        """Second factorial moment ``sum k (k-1) p_k``."""
        p = np.asarray(self.probs)
        k = np.arange(1, p.size + 1)
        return float((k * (k - 1) * p).sum())

    @property
    def cumulative(self):
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    @property
    def fixed_k(self):
        """The offspring number when the law is a point mass, else 0."""
        nz = np.flatnonzero(np.asarray(self.probs) > 0)
        return int(nz[0]) + 1 if nz.size == 1 else 0

    def generating(self, u):
        """``sum_k p_k u^k`` by Horner's rule."""
        acc = np.zeros_like(np.asarray(u, dtype=float))
        for p in reversed(self.probs):
            acc = (acc + p) * u
        return acc


@dataclass(frozen=True)
class PruneConfig:
    """Kill particles more than ``window`` below the current maximum."""

    window: float = DEFAULT_WINDOW
    cap: int = DEFAULT_CAP
    enabled: bool = True
    gamma: float = 1.0

    def __post_init__(self):
        if not self.window > 0:
            raise ParameterError("pruning window must be positive")
        if not self.cap > 0:
            raise ParameterError("population cap must be positive")

    @classmethod
    def off(cls, cap=DEFAULT_CAP):
        return cls(enabled=False, cap=cap)

    @property
    def effective_window(self):
        return self.window if self.enabled else math.inf


@dataclass
class Particle:
    id: int
    parent_id: int
    birth_time: float
    position: float
    next_branch_time: float
    checkpoints: list = field(default_factory=list)


@dataclass
class Population:
    time: float
    pos: np.ndarray
    next_branch: np.ndarray
    ids: np.ndarray
    parent: np.ndarray
    birth: np.ndarray
    checkpoint_step: float
    seed: int = 0
    next_id: int = 1
    grid_index: int = 0
    pruned_count: int = 0
    pruned_mass_bound: float = 0.0
    record_paths: bool = False
    anc: np.ndarray = None
    history: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    # Y and Z carried by removed particles at their removal times
    pruned_Y: float = 0.0
    pruned_Z: float = 0.0

    def __post_init__(self):
        if self.anc is None:
            self.anc = np.zeros(self.pos.size, dtype=np.int64)

    @property
    def size(self):
        return int(self.pos.size)

    def __len__(self):
        return self.size

    def copy(self, keep_history=True):
        return Population(
            self.time, self.pos.copy(), self.next_branch.copy(), self.ids.copy(),
            self.parent.copy(), self.birth.copy(), self.checkpoint_step, self.seed,
            self.next_id, self.grid_index, self.pruned_count, self.pruned_mass_bound,
            self.record_paths and keep_history, self.anc.copy(),
            list(self.history) if keep_history else [], list(self.trace),
            self.pruned_Y, self.pruned_Z,
        )

    def max_position(self):
        if self.size == 0:
            raise StateError("population is empty")
        return float(self.pos.max())

    def trace_array(self):
        """Checkpoint trace rows ``(t, max, Y, Z, Z2, min_y, n, Y_removed, Z_removed)``.

        The last two columns hold what the particles removed at that
        checkpoint contributed to ``Y`` and ``Z``.
        """
        if not self.trace:
            return np.empty((0, kernels.TRACE_WIDTH))
        return np.vstack(self.trace)

    def checkpoint_times(self):
        return np.array([h[0] for h in self.history])

    def paths(self, index=None):
        """Checkpointed paths of the selected live particles.

        Returns ``(times, positions)`` where ``positions[i, j]`` is the
        position at ``times[j]`` of the ancestor (or the particle itself) of
        the ``i``-th selected particle.
        """
        if not self.record_paths:
            raise StateError("population was created without path recording")
        rows = self.anc if index is None else self.anc[np.asarray(index)]
        rows = np.atleast_1d(rows).astype(np.int64)
        times = self.checkpoint_times()
        out = np.empty((rows.size, len(self.history)))
        for j in range(len(self.history) - 1, -1, -1):
            _, hpos, hback = self.history[j]
            out[:, j] = hpos[rows]
            rows = hback[rows]
        return times, out

    def particle(self, i):
        """Object view of particle ``i`` including its checkpoint path."""
        cps = []
        if self.record_paths and self.history:
            times, path = self.paths([i])
            cps = list(zip(times.tolist(), path[0].tolist()))
        return Particle(int(self.ids[i]), int(self.parent[i]), float(self.birth[i]),
                        float(self.pos[i]), float(self.next_branch[i]), cps)

    def particles(self):
        return [self.particle(i) for i in range(self.size)]


def init_population(checkpoint_grid_step=DEFAULT_CHECKPOINT_STEP, stream=None, law=None, record_paths=False):
    """One particle at the origin at time 0 with a fresh exponential clock."""
    if not checkpoint_grid_step > 0:
        raise ParameterError("checkpoint grid step must be positive")
    law = law or OffspringLaw.binary()
    if stream is None:
        from ..stochastic import RandomStream
        stream = RandomStream(0)
    if law.rate > 0:
        clock = stream.generator.standard_exponential() / law.rate
    else:
        clock = math.inf
    pop = Population(
        time=0.0,
        pos=np.zeros(1),
        next_branch=np.array([clock]),
        ids=np.zeros(1, dtype=np.int64),
        parent=np.full(1, -1, dtype=np.int64),
        birth=np.zeros(1),
        checkpoint_step=float(checkpoint_grid_step),
        seed=stream.seed,
        record_paths=record_paths,
    )
    if record_paths:
        pop.history.append((0.0, pop.pos.copy(), np.full(1, -1, dtype=np.int64)))
    return pop


def resample_clocks(pop, law, stream):
    """Draw fresh residual branch clocks for every live particle, in place.

    A frozen population carries its pending clocks, which are not part of
    the observed history. Each continuation of a frozen state must redraw
    them; by memorylessness the fresh clocks have the right law.
    """
    if law.rate > 0:
        pop.next_branch = pop.time + stream.generator.standard_exponential(pop.size) / law.rate
    else:
        pop.next_branch = np.full(pop.size, math.inf)
    return pop


def _schedule(pop, to_time):
    """Interval end points in ``(pop.time, to_time]`` and which are checkpoints."""
    step = pop.checkpoint_step
    times, flags = [], []
    k = pop.grid_index + 1
    while True:
        g = k * step
        if g > to_time * (1 + 1e-12) + 1e-12:
            break
        if g > pop.time + 1e-12:
            times.append(g)
            flags.append(True)
        k += 1
    if not times or abs(times[-1] - to_time) > 1e-9 * max(1.0, to_time):
        times.append(float(to_time))
        flags.append(False)
    else:
        times[-1] = float(to_time)
    return np.array(times), np.array(flags)


def _kernel_module():
    return kernels if _accel.use_numba() else kernels_np


def advance(pop, to_time, law, prune, stream):
    """Run the population forward to ``to_time`` (mutates and returns ``pop``).

    Every checkpoint time ``k * checkpoint_step`` crossed is recorded (if path
    recording is on), then particles below ``max - window`` are removed and
    the pruning bias bound ``gamma (d+1)^2 exp(-sqrt2 d)`` is added for each
    removal at depth ``d``.
    """
    if not to_time > pop.time:
        raise ParameterError(f"to_time={to_time} must exceed population time {pop.time}")
    if pop.size == 0:
        raise StateError("population is empty")
    times, flags = _schedule(pop, to_time)
    km = _kernel_module()
    cum = law.cumulative
    limit = 8 * prune.cap + 1024
    window = prune.effective_window
    gen = stream.generator

    if not pop.record_paths:
        out = km.run_intervals(
            gen, pop.pos, pop.next_branch, pop.ids, pop.parent, pop.birth, pop.anc, pop.size,
            pop.time, times, flags, window, prune.gamma, prune.cap, cum, law.fixed_k,
            law.rate, pop.next_id, limit)
        pos, nb, ids, par, birth, anc, n, next_id, pruned, bound, traces, nt, status = out
        _store(pop, pos, nb, ids, par, birth, anc, n, next_id)
        pop.pruned_count += int(pruned)
        pop.pruned_mass_bound += float(bound)
        pop.trace.extend(traces[:nt].copy())
        pop.pruned_Y += float(traces[:nt, 7].sum())
        pop.pruned_Z += float(traces[:nt, 8].sum())
        n_checkpoints = int(nt)
        if status != kernels.STATUS_OK:
            pop.grid_index += n_checkpoints
            pop.time = float(traces[nt - 1, 0]) if nt else pop.time
            _raise_capacity(pop, status, prune)
        pop.grid_index += n_checkpoints
        pop.time = float(to_time)
        return pop

    t = pop.time
    row = np.empty(kernels.TRACE_WIDTH)
    for t1, is_cp in zip(times, flags):
        pos, nb, ids, par, birth, anc, n, next_id, status = km.step_interval(
            gen, pop.pos, pop.next_branch, pop.ids, pop.parent, pop.birth, pop.anc, pop.size,
            t, t1, cum, law.fixed_k, law.rate, pop.next_id, limit)
        _store(pop, pos, nb, ids, par, birth, anc, n, next_id)
        t = float(t1)
        pop.time = t
        if status != kernels.STATUS_OK:
            _raise_capacity(pop, status, prune)
        if is_cp:
            pop.grid_index += 1
            pop.history.append((t, pop.pos.copy(), pop.anc.copy()))
            pop.anc = np.arange(pop.size, dtype=np.int64)
            n, removed, b = km.prune_and_trace(
                pop.pos, pop.next_branch, pop.ids, pop.parent, pop.birth, pop.anc, pop.size,
                t, window, prune.gamma, row)
            _truncate(pop, n)
            pop.pruned_count += int(removed)
            pop.pruned_mass_bound += float(b)
            pop.trace.append(row.copy())
            pop.pruned_Y += float(row[7])
            pop.pruned_Z += float(row[8])
            if pop.size > prune.cap:
                _raise_capacity(pop, kernels.STATUS_CAP, prune)
    pop.time = float(to_time)
    return pop


def _store(pop, pos, nb, ids, par, birth, anc, n, next_id):
    pop.pos = pos[:n].copy()
    pop.next_branch = nb[:n].copy()
    pop.ids = ids[:n].copy()
    pop.parent = par[:n].copy()
    pop.birth = birth[:n].copy()
    pop.anc = anc[:n].copy()
    pop.next_id = int(next_id)


def _truncate(pop, n):
    for name in ("pos", "next_branch", "ids", "parent", "birth", "anc"):
        setattr(pop, name, getattr(pop, name)[:n].copy())


def _raise_capacity(pop, status, prune):
    what = "after pruning" if status == kernels.STATUS_CAP else "within a checkpoint interval"
    raise CapacityError(
        f"population of {pop.size} particles exceeds cap {prune.cap} {what} at t={pop.time:.4g} "
        f"(window={prune.effective_window}, pruned so far={pop.pruned_count})",
        time=pop.time, size=pop.size, cap=prune.cap)


def snapshot_positions(pop):
    """Positions sorted in descending order."""
    if pop.size == 0:
        raise StateError("population is empty")
    return np.sort(pop.pos)[::-1].copy()


def prune_report(pop):
    """``(pruned_count, pruned_mass_bound)`` accumulated so far."""
    return pop.pruned_count, pop.pruned_mass_bound


# Binary checkpoint format, little-endian, version 2:
#   header  <4s I Q d Q Q Q Q d d d d>  magic b"BBMP", version, seed, time, n,
#           next_id, grid_index, pruned_count, pruned_mass_bound, checkpoint_step,
#           pruned_Y, pruned_Z
#   records n x <q q d d d>  id, parent_id, birth_time, position, next_branch_time
# Path history is not stored; a resumed population starts a fresh history.
DUMP_MAGIC = b"BBMP"
DUMP_VERSION = 2
_HEADER = struct.Struct("<4sIQdQQQQdddd")
_RECORD = np.dtype([("id", "<i8"), ("parent", "<i8"), ("birth", "<f8"),
                    ("position", "<f8"), ("next_branch", "<f8")])


def dump_population(pop, path):
    rec = np.empty(pop.size, dtype=_RECORD)
    rec["id"] = pop.ids
    rec["parent"] = pop.parent
    rec["birth"] = pop.birth
    rec["position"] = pop.pos
    rec["next_branch"] = pop.next_branch
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DUMP_MAGIC, DUMP_VERSION, pop.seed, pop.time, pop.size, pop.next_id,
                              pop.grid_index, pop.pruned_count, pop.pruned_mass_bound,
                              pop.checkpoint_step, pop.pruned_Y, pop.pruned_Z))
        fh.write(rec.tobytes())


def load_population(path, record_paths=False):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ParameterError(f"{path}: truncated dump header")
        magic, version, seed, time, n, next_id, gidx, pcount, pmass, step, py, pz = _HEADER.unpack(head)
        if magic != DUMP_MAGIC:
            raise ParameterError(f"{path}: not a population dump")
        if version != DUMP_VERSION:
            raise ParameterError(f"{path}: unsupported dump version {version}")
        rec = np.frombuffer(fh.read(n * _RECORD.itemsize), dtype=_RECORD)
    if rec.size != n:
        raise ParameterError(f"{path}: truncated dump ({rec.size} of {n} records)")
    pop = Population(time, rec["position"].copy(), rec["next_branch"].copy(), rec["id"].copy(),
                     rec["parent"].copy(), rec["birth"].copy(), step, seed, next_id, gidx,
                     pcount, pmass, record_paths, pruned_Y=py, pruned_Z=pz)
    if record_paths:
        pop.history.append((time, pop.pos.copy(), np.full(n, -1, dtype=np.int64)))
        pop.anc = np.arange(n, dtype=np.int64)
    return pop
