"""numba kernels for the branching engine.

Between two checkpoints the lineages of distinct particles evolve
independently, so each particle's subtree is run to the interval end with an
explicit stack before moving to the next particle. This is exact in law. The
only coupling between particles is pruning, which happens at checkpoints.
"""

import math

import numpy as np

from .._accel import njit

SQRT2 = math.sqrt(2.0)

STATUS_OK = 0
STATUS_CAP = 1
STATUS_OVERFLOW = 2

_DONE = 0
_NEED_OUT = 1
_NEED_STACK = 2

# (t, max, Y, Z, Z2, min_y, n, Y_removed, Z_removed)
TRACE_WIDTH = 9


@njit
def _grow_f(a, n):
    b = np.empty(max(2 * a.size, 16), dtype=a.dtype)
    b[:n] = a[:n]
    return b


@njit
def _grow_i(a, n):
    b = np.empty(max(2 * a.size, 16), dtype=a.dtype)
    b[:n] = a[:n]
    return b


@njit
def _offspring(rng, cum, kfixed):
    if kfixed > 0:
        return kfixed
    u = rng.random()
    k = 0
    while k < cum.size - 1 and u >= cum[k]:
        k += 1
    return k + 1


@njit
def _sweep(rng, pos, nb, ids, par, birth, anc, n, t0, t1, cum, kfixed, rate, next_id,
           o_pos, o_nb, o_ids, o_par, o_birth, o_anc, m,
           s_x, s_tx, s_tb, s_id, s_par, s_birth, s_anc, i, sp):
    # Works on fixed buffers and stops (resumably) when one of them is full.
    # Keeping reallocation out of this loop matters: rebinding arrays here
    # costs an order of magnitude in throughput.
    cap = o_pos.size
    scap = s_x.size
    kmax = kfixed if kfixed > 0 else cum.size
    while i < n:
        if sp == 0:
            s_x[0] = pos[i]
            s_tx[0] = t0
            s_tb[0] = nb[i]
            s_id[0] = ids[i]
            s_par[0] = par[i]
            s_birth[0] = birth[i]
            s_anc[0] = anc[i]
            sp = 1
        while sp > 0:
            top = sp - 1
            tb = s_tb[top]
            if tb > t1:
                if m == cap:
                    return m, next_id, i, sp, _NEED_OUT
                sp = top
                o_pos[m] = s_x[sp] + math.sqrt(t1 - s_tx[sp]) * rng.standard_normal()
                o_nb[m] = tb
                o_ids[m] = s_id[sp]
                o_par[m] = s_par[sp]
                o_birth[m] = s_birth[sp]
                o_anc[m] = s_anc[sp]
                m += 1
                continue
            # room for the largest brood is checked before any draw so that a
            # resumed call consumes the stream exactly as an uninterrupted one
            if top + kmax > scap:
                return m, next_id, i, sp, _NEED_STACK
            sp = top
            x = s_x[sp] + math.sqrt(tb - s_tx[sp]) * rng.standard_normal()
            k = _offspring(rng, cum, kfixed)
            parent = s_id[sp]
            a = s_anc[sp]
            for _ in range(k):
                s_x[sp] = x
                s_tx[sp] = tb
                if rate > 0.0:
                    s_tb[sp] = tb + rng.standard_exponential() / rate
                else:
                    s_tb[sp] = np.inf
                s_id[sp] = next_id
                next_id += 1
                s_par[sp] = parent
                s_birth[sp] = tb
                s_anc[sp] = a
                sp += 1
        i += 1
    return m, next_id, i, sp, _DONE


@njit
def step_interval(rng, pos, nb, ids, par, birth, anc, n, t0, t1, cum, kfixed, rate, next_id, limit):
    """Run all lineages from ``t0`` to ``t1``.

    Returns ``(pos, nb, ids, par, birth, anc, n_out, next_id, status)``; the
    arrays are fresh buffers whose first ``n_out`` entries are valid.
    """
    cap = max(2 * n, 16)
    o_pos = np.empty(cap)
    o_nb = np.empty(cap)
    o_ids = np.empty(cap, dtype=np.int64)
    o_par = np.empty(cap, dtype=np.int64)
    o_birth = np.empty(cap)
    o_anc = np.empty(cap, dtype=np.int64)
    scap = 64
    s_x = np.empty(scap)
    s_tx = np.empty(scap)
    s_tb = np.empty(scap)
    s_id = np.empty(scap, dtype=np.int64)
    s_par = np.empty(scap, dtype=np.int64)
    s_birth = np.empty(scap)
    s_anc = np.empty(scap, dtype=np.int64)
    m = 0
    i = 0
    sp = 0
    while True:
        m, next_id, i, sp, need = _sweep(rng, pos, nb, ids, par, birth, anc, n, t0, t1, cum, kfixed, rate,
                                         next_id, o_pos, o_nb, o_ids, o_par, o_birth, o_anc, m,
                                         s_x, s_tx, s_tb, s_id, s_par, s_birth, s_anc, i, sp)
        if need == _DONE:
            return o_pos, o_nb, o_ids, o_par, o_birth, o_anc, m, next_id, STATUS_OK
        if need == _NEED_OUT:
            if m >= limit:
                return o_pos, o_nb, o_ids, o_par, o_birth, o_anc, m, next_id, STATUS_OVERFLOW
            o_pos = _grow_f(o_pos, m)
            o_nb = _grow_f(o_nb, m)
            o_ids = _grow_i(o_ids, m)
            o_par = _grow_i(o_par, m)
            o_birth = _grow_f(o_birth, m)
            o_anc = _grow_i(o_anc, m)
        else:
            s_x = _grow_f(s_x, sp)
            s_tx = _grow_f(s_tx, sp)
            s_tb = _grow_f(s_tb, sp)
            s_id = _grow_i(s_id, sp)
            s_par = _grow_i(s_par, sp)
            s_birth = _grow_f(s_birth, sp)
            s_anc = _grow_i(s_anc, sp)


@njit
def prune_and_trace(pos, nb, ids, par, birth, anc, n, t, window, gamma, trace_row):
    """Drop particles more than ``window`` below the maximum (in place).

    Fills ``trace_row`` with ``(t, max, Y, Z, Z2, min_y, n)`` of the survivors
    followed by the ``Y`` and ``Z`` carried by the removed particles, and
    returns ``(n_kept, n_removed, removed_bound)``.
    """
    xmax = -np.inf
    for i in range(n):
        if pos[i] > xmax:
            xmax = pos[i]
    cut = xmax - window
    j = 0
    bound = 0.0
    y_cut = 0.0
    z_cut = 0.0
    front = SQRT2 * t
    for i in range(n):
        if pos[i] >= cut:
            pos[j] = pos[i]
            nb[j] = nb[i]
            ids[j] = ids[i]
            par[j] = par[i]
            birth[j] = birth[i]
            anc[j] = anc[i]
            j += 1
        else:
            d = xmax - pos[i]
            bound += gamma * (d + 1.0) ** 2 * math.exp(-SQRT2 * d)
            y = front - pos[i]
            e = math.exp(-SQRT2 * y)
            y_cut += e
            z_cut += y * e
    y_sum = 0.0
    z_sum = 0.0
    z2_sum = 0.0
    ymin = np.inf
    for i in range(j):
        y = front - pos[i]
        e = math.exp(-SQRT2 * y)
        y_sum += e
        z_sum += y * e
        z2_sum += y * y * e * e
        if y < ymin:
            ymin = y
    trace_row[0] = t
    trace_row[1] = xmax
    trace_row[2] = y_sum
    trace_row[3] = z_sum
    trace_row[4] = z2_sum
    trace_row[5] = ymin
    trace_row[6] = j
    trace_row[7] = y_cut
    trace_row[8] = z_cut
    return j, n - j, bound


@njit
def run_intervals(rng, pos, nb, ids, par, birth, anc, n, t0, times, do_prune, window, gamma,
                  cap, cum, kfixed, rate, next_id, limit):
    """Advance through the checkpoint ``times`` without storing path history.

    ``do_prune[i]`` says whether ``times[i]`` is a checkpoint (prune + trace).
    Returns ``(arrays..., n, next_id, pruned, bound, traces, n_traces, status)``.
    """
    traces = np.empty((times.size, TRACE_WIDTH))
    nt = 0
    pruned = 0
    bound = 0.0
    t = t0
    for i in range(times.size):
        t1 = times[i]
        pos, nb, ids, par, birth, anc, n, next_id, status = step_interval(
            rng, pos, nb, ids, par, birth, anc, n, t, t1, cum, kfixed, rate, next_id, limit)
        t = t1
        if status != STATUS_OK:
            return pos, nb, ids, par, birth, anc, n, next_id, pruned, bound, traces, nt, status
        if do_prune[i]:
            n, removed, b = prune_and_trace(pos, nb, ids, par, birth, anc, n, t1, window, gamma, traces[nt])
            pruned += removed
            bound += b
            nt += 1
            if n > cap:
                return pos, nb, ids, par, birth, anc, n, next_id, pruned, bound, traces, nt, STATUS_CAP
    return pos, nb, ids, par, birth, anc, n, next_id, pruned, bound, traces, nt, STATUS_OK
