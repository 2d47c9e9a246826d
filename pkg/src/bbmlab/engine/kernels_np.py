"""Pure-numpy fallbacks for :mod:`bbmlab.engine.kernels`.

Same contracts, vectorised by branching generation instead of by lineage.
Draw order differs from the numba path, so the two backends agree in law,
not bitwise.
"""

import numpy as np

from .kernels import SQRT2, STATUS_CAP, STATUS_OK, STATUS_OVERFLOW, TRACE_WIDTH


def _offspring(gen, cum, kfixed, size):
    if kfixed > 0:
        return np.full(size, kfixed, dtype=np.int64)
    u = gen.random(size)
    return np.searchsorted(cum[:-1], u, side="right").astype(np.int64) + 1


def step_interval(gen, pos, nb, ids, par, birth, anc, n, t0, t1, cum, kfixed, rate, next_id, limit):
    x = pos[:n].copy()
    tx = np.full(n, float(t0))
    tb = nb[:n].copy()
    cur = [ids[:n].copy(), par[:n].copy(), birth[:n].copy(), anc[:n].copy()]
    done = []
    total = 0
    while x.size:
        fin = tb > t1
        if fin.any():
            xf = x[fin] + np.sqrt(t1 - tx[fin]) * gen.standard_normal(int(fin.sum()))
            done.append((xf, tb[fin], *(c[fin] for c in cur)))
            total += xf.size
            if total > limit:
                return (*_concat(done), total, next_id, STATUS_OVERFLOW)
        br = ~fin
        if not br.any():
            break
        xb = x[br] + np.sqrt(tb[br] - tx[br]) * gen.standard_normal(int(br.sum()))
        tbb = tb[br]
        k = _offspring(gen, cum, kfixed, xb.size)
        m = int(k.sum())
        x = np.repeat(xb, k)
        tx = np.repeat(tbb, k)
        new_ids = next_id + np.arange(m, dtype=np.int64)
        next_id += m
        if rate > 0:
            tb = tx + gen.standard_exponential(m) / rate
        else:
            tb = np.full(m, np.inf)
        cur = [new_ids, np.repeat(cur[0][br], k), tx.copy(), np.repeat(cur[3][br], k)]
    arrays = _concat(done) if done else _empty()
    return (*arrays, total, next_id, STATUS_OK)


def _empty():
    f = np.empty(0)
    i = np.empty(0, dtype=np.int64)
    return f, f.copy(), i, i.copy(), f.copy(), i.copy()


def _concat(done):
    cols = list(zip(*done))
    xf, tb, ids, par, birth, anc = (np.concatenate(c) for c in cols)
    return xf, tb, ids, par, birth, anc


def prune_and_trace(pos, nb, ids, par, birth, anc, n, t, window, gamma, trace_row):
    p = pos[:n]
    xmax = p.max()
    keep = p >= xmax - window
    d = xmax - p[~keep]
    bound = float(np.sum(gamma * (d + 1.0) ** 2 * np.exp(-SQRT2 * d)))
    yc = SQRT2 * t - p[~keep]
    ec = np.exp(-SQRT2 * yc)
    j = int(keep.sum())
    for a in (pos, nb, ids, par, birth, anc):
        a[:j] = a[:n][keep]
    y = SQRT2 * t - pos[:j]
    e = np.exp(-SQRT2 * y)
    trace_row[:] = (t, xmax, e.sum(), (y * e).sum(), (y * y * e * e).sum(), y.min(), j,
                    ec.sum(), (yc * ec).sum())
    return j, n - j, bound


def run_intervals(gen, pos, nb, ids, par, birth, anc, n, t0, times, do_prune, window, gamma,
                  cap, cum, kfixed, rate, next_id, limit):
    traces = np.empty((times.size, TRACE_WIDTH))
    nt = 0
    pruned = 0
    bound = 0.0
    t = t0
    for i in range(times.size):
        t1 = times[i]
        pos, nb, ids, par, birth, anc, n, next_id, status = step_interval(
            gen, pos, nb, ids, par, birth, anc, n, t, t1, cum, kfixed, rate, next_id, limit)
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
