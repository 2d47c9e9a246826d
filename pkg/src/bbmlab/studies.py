"""Study drivers behind the command line subcommands.

Each ``run_*`` takes a validated :class:`~bbmlab.config.ExperimentConfig`,
a seed and a :class:`~bbmlab.io.RunManifest`, and returns an ordered
mapping ``{file stem: (table name, columns, rows)}``. Nothing here touches
the file system.
"""

import numpy as np

from . import correlation, frontier, kpp, localization
from ._parallel import replica_map
from .engine import PruneConfig, advance, init_population
from .errors import DataError
from .stochastic import RandomStream


def _simulate_worker(args):
    seed, key, t, law, prune, cp_step, series_step = args
    st = RandomStream(seed, _key=key)
    pop = init_population(cp_step, st, law)
    rows = [(0.0, 1.0, 0.0, 0.0, 0.0)]
    k = 1
    while k * series_step < t - 1e-9:
        advance(pop, k * series_step, law, prune, st)
        rows.append(frontier.martingale_snapshot(pop, compensated=True).as_row())
        k += 1
    advance(pop, t, law, prune, st)
    rows.append(frontier.martingale_snapshot(pop, compensated=True).as_row())
    return rows, frontier.max_displacement(pop), pop.size, pop.pruned_count, pop.pruned_mass_bound


def run_simulate(cfg, seed, manifest, threads=1):
    sec = cfg.simulate
    law, prune = cfg.offspring_law(), cfg.prune.build()
    root = RandomStream(seed)
    jobs = [(seed, root.derive(r, "simulate").key, sec.t, law, prune, cfg.checkpoint_step, sec.series_step)
            for r in range(sec.replicas)]
    with manifest.stage("simulate"):
        res = replica_map(_simulate_worker, jobs, threads)
    series, samples = [], []
    for r, (rows, M, n, pc, pb) in enumerate(res):
        series.extend((r,) + row for row in rows)
        samples.append((r, M, n))
        manifest.add_pruning(pc, pb)
    ms = np.array([s[1] for s in samples])
    manifest.results.update(mean_M=float(ms.mean()), median_M=float(np.median(ms)))
    return {
        "martingales": ("martingale series", ("replica",) + frontier.MartingaleSnapshot.COLUMNS, series),
        "max_samples": ("M(t) samples", ("replica", "M", "n"), samples),
    }


def _resolve_C(cfg, sec, manifest):
    if sec.C is not None:
        return float(sec.C), {"source": "config"}
    with manifest.stage("kpp"):
        sol = kpp.kpp_solve(cfg.offspring_law(), sec.kpp_T, cfg.kpp.grid(), record_every=1.0)
    c, diag = kpp.estimate_C(kpp.wave_profile(sol))
    return c, {"source": "kpp", "r2": diag["r2"], "fit_range": diag["fit_range"]}


def ergodic_run(T, epsilon, R_T, law, prune, stream, step=0.1):
    """One trajectory: unpruned up to ``R_T``, pruned after.

    Returns ``(path, Z_R, pop)`` where ``path`` has rows ``(s, M(s))`` on
    the checkpoint grid from ``R_T`` to ``T``.
    """
    pop = init_population(step, stream, law)
    advance(pop, R_T, law, PruneConfig.off(cap=prune.cap), stream)
    Z_R = frontier.martingale_snapshot(pop).Z
    advance(pop, T, law, prune, stream)
    tr = pop.trace_array()
    tr = tr[tr[:, 0] >= R_T - 1e-9]
    path = np.column_stack([tr[:, 0], tr[:, 1] - frontier.front_centering(tr[:, 0])])
    return path, Z_R, pop


def run_ergodic(cfg, seed, manifest, threads=1):
    sec = cfg.ergodic
    law, prune = cfg.offspring_law(), cfg.prune.build()
    if sec.delta is not None:
        R_T = localization.tube_schedule(sec.T, sec.delta).R_T
    else:
        R_T = sec.R_T if sec.R_T is not None else sec.epsilon * sec.T
    C, c_info = _resolve_C(cfg, sec, manifest)
    with manifest.stage("trajectory"):
        path, Z_R, pop = ergodic_run(sec.T, sec.epsilon, R_T, law, prune, RandomStream(seed).derive(0, "ergodic"),
                                     cfg.checkpoint_step)
    manifest.add_pruning(pop.pruned_count, pop.pruned_mass_bound)
    if not Z_R > 0:
        raise DataError(f"Z(R_T) = {Z_R:.4g} at R_T = {R_T:.4g} is not positive; use a larger R_T")
    xg = np.linspace(*sec.x_grid[:2], sec.x_grid[2])
    F = frontier.empirical_cdf(path, xg, t_from=sec.epsilon * sec.T)
    G = frontier.gumbel_predict(frontier.GumbelParams(C, Z_R), xg)
    dist = F.sup_distance(lambda x: frontier.gumbel_predict(frontier.GumbelParams(C, Z_R), x))
    manifest.results.update(sup_distance=dist, C=C, Z=Z_R, R_T=R_T, C_source=c_info)
    return {
        "ergodic_cdf": ("time-averaged law vs Gumbel", ("x", "F_T", "gumbel"), zip(xg, F.values, G)),
        "max_path": ("M(s) along the trajectory", ("s", "M"), path),
        "ergodic_summary": ("ergodic summary", ("T", "epsilon", "R_T", "C", "Z", "sup_distance"),
                            [(sec.T, sec.epsilon, R_T, C, Z_R, dist)]),
    }


def run_tails(cfg, seed, manifest, threads=1):
    sec = cfg.tails
    law, prune = cfg.offspring_law(), cfg.prune.build()
    with manifest.stage("replicas"):
        samples, (pc, pb) = frontier.sample_max_displacement(
            sec.t, sec.replicas, RandomStream(seed), law, prune, step=sec.step, tag="tail",
            threads=threads, with_pruning=True)
    manifest.add_pruning(pc, pb)
    xg = np.linspace(*sec.x_grid[:2], sec.x_grid[2])
    table = localization.survival_table(samples, xg, sec.t)
    slope = table.slope(*sec.fit_range)
    manifest.results.update(slope=slope)
    return {
        "tails": ("tail estimates", localization.TailTable.COLUMNS, table.rows()),
        "tails_summary": ("tail regression", ("t", "replicas", "x_lo", "x_hi", "slope"),
                          [(sec.t, sec.replicas, sec.fit_range[0], sec.fit_range[1], slope)]),
    }


def run_kpp(cfg, seed, manifest, threads=1):
    sec = cfg.kpp
    law = cfg.offspring_law()
    with manifest.stage("solve"):
        sol = kpp.kpp_solve(law, sec.T, sec.grid(), record_every=sec.record_every,
                            snapshots=[t for t in sec.profile_times if t < sec.T])
    fit = kpp.fit_front(sol.front_history, *sec.fit_window)
    prof = kpp.wave_profile(sol)
    out = {"front": ("front history", ("t", "x_front"), sol.front_history),
           "profile": ("wave profile", ("x", "w"), np.column_stack([prof.x, prof.w]))}
    summary = [("speed", fit["speed"]), ("log_coeff", fit["log_coeff"]),
               ("speed_fixed_log", fit["speed_fixed_log"])]
    if len(law.probs) == 2 and law.probs[0] == 0.0:
        x, r, sup = kpp.wave_ode_residual(prof)
        out["residual"] = ("wave equation residual", ("x", "residual"), np.column_stack([x, r]))
        summary.append(("residual_sup", sup))
    try:
        fr = tuple(sec.fit_range) if sec.fit_range else None
        c, diag = kpp.estimate_C(prof, fr)
        summary += [("C_hat", c), ("C_r2", diag["r2"])]
    except Exception as exc:  # reported, not fatal: the fit is a diagnostic here
        manifest.results["C_error"] = str(exc)
    for t in sec.profile_times:
        if t < sec.T:
            d, a = kpp.translation_distance(kpp.wave_profile(sol.at(t)), prof)
            summary.append((f"translation_distance_{t:g}", d))
    manifest.results.update(dict(summary))
    out["kpp_summary"] = ("kpp summary", ("quantity", "value"), summary)
    return out


def run_corr(cfg, seed, manifest, threads=1):
    sec = cfg.corr
    ccfg = correlation.CorrelationConfig(
        T=sec.T, epsilon=sec.epsilon, xi=sec.xi, window=tuple(sec.window), R_T=sec.R_T,
        outer_replicas=sec.outer, inner_continuations=sec.inner, prune=cfg.prune.build(),
        law=cfg.offspring_law(), step=cfg.checkpoint_step, use_localization=sec.use_localization)
    root = RandomStream(seed)
    samples = []
    for j, sep in enumerate(sec.separations):
        with manifest.stage(f"separation_{sep:g}"):
            samples.append(correlation.correlation_estimator(ccfg, sec.T - sep, sec.T, root.derive(j, "corr")))
    lyons = correlation.lyons_summability_report({sec.T: samples}, sec.epsilon, xi=sec.xi)
    manifest.results.update(lyons_term=float(lyons[0, 1]))
    return {
        "correlations": ("frontier correlations", correlation.CorrelationSample.COLUMNS,
                         [c.as_row() for c in samples]),
        "lyons": ("summability terms", ("T", "lyons_term", "partial_sum"), lyons),
    }


def run_localize(cfg, seed, manifest, threads=1):
    sec = cfg.localize
    spec = localization.EnvelopeSpec(sec.alpha, sec.beta, sec.t)
    with manifest.stage("replicas"):
        rates, inside = localization.nonlocalization_rates(
            sec.t, sec.r_values, sec.replicas, RandomStream(seed), spec, tuple(sec.window),
            cfg.offspring_law(), cfg.prune.build(), cfg.checkpoint_step)
    manifest.results.update(in_window=inside, rates=[float(r) for r in rates])
    return {
        "envelopes": ("tube envelopes", ("s", "F_alpha", "F_beta"),
                      localization.envelope_table(spec, sec.envelope_points)),
        "nonlocalization": ("nonlocalization rates", ("r", "nonlocalization_rate"),
                            zip(map(float, sec.r_values), rates)),
    }


RUNNERS = {
    "simulate": run_simulate,
    "ergodic": run_ergodic,
    "tails": run_tails,
    "kpp": run_kpp,
    "corr": run_corr,
    "localize": run_localize,
}

