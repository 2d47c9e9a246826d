"""Acceptance criteria, one test per criterion at its stated tolerance.

Each test appends a PASS/FAIL line to ``conftest.ACCEPTANCE_LINES``; the
lines are printed in the terminal summary and echoed to stdout. Criteria
that cannot be met here are strict xfails, so an unexpected pass is loud.
The reasoning behind each such case is in the project's decision ledger.
"""

import filecmp
import math
import os
import time

import numpy as np
import pytest
import yaml

from bbmlab import frontier, kpp
from bbmlab.cli import run as cli_run
from bbmlab.correlation import CorrelationConfig, correlation_estimator, direct_pair_count, sawyer_pair_expectation
from bbmlab.engine import OffspringLaw, PruneConfig, advance, init_population
from bbmlab.localization import EnvelopeSpec, nonlocalization_rates, survival_table
from bbmlab.stochastic import RandomStream, bridge_below_line_bound, bridge_below_line_probability
from bbmlab.studies import ergodic_run
from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.slow

SQRT2 = math.sqrt(2)
LOG_COEFF = -3 / (2 * SQRT2)
BINARY = OffspringLaw.binary()


def report(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def sol40():
    t0 = time.perf_counter()
    sol = kpp.kpp_solve(None, 40.0, kpp.Grid1D(dx=0.05, dt=0.001), record_every=0.1, snapshots=(30.0,))
    return sol, time.perf_counter() - t0


@pytest.fixture(scope="module")
def C_hat(sol40):
    return kpp.estimate_C(kpp.wave_profile(sol40[0]))[0]


def test_criterion_01_pde_front_law(sol40):
    sol, secs = sol40
    fit = kpp.fit_front(sol.front_history, 20.0, 40.0)
    speed_err = abs(fit["speed"] / SQRT2 - 1)
    log_err = abs(fit["log_coeff"] / LOG_COEFF - 1)
    ok = speed_err < 0.005 and log_err < 0.5 and secs < 300
    report(1, ok, f"speed {fit['speed']:.6f} (rel err {speed_err:.2e} < 5e-3), log coeff {fit['log_coeff']:.4f} "
                  f"(rel err {log_err:.2f} < 0.5), {secs:.1f} s < 300 s")
    assert ok


def test_criterion_02_mc_vs_pde(sol40):
    # w=12 cannot fit the time budget on this machine (see the next test); w=8 is
    # the widest window that does, and the law is checked at full tolerance
    sol = sol40[0].at(30.0)
    n = 5000
    t0 = time.perf_counter()
    samples = frontier.sample_max_displacement(30.0, n, RandomStream(2002), prune=PruneConfig(window=8.0), step=1.0)
    secs = time.perf_counter() - t0
    xg = np.linspace(-5.0, 4.0, 181)
    d = kpp.crosscheck_mc_vs_pde(frontier.EmpiricalCdf.from_samples(samples, xg), sol, 30.0)
    ok = d < 0.05 and secs < 900
    report(2, ok, f"w=8: sup distance {d:.4f} < 0.05 over {n} replicas, {secs:.0f} s < 900 s")
    assert ok


@pytest.mark.xfail(strict=True, reason="w=12 replicas reach 7e6 particles; 5000 of them need hours on one core")
def test_criterion_02_runtime_at_w12():
    pilot = 2
    cfg = PruneConfig(window=12.0, cap=30_000_000)
    t0 = time.perf_counter()
    frontier.sample_max_displacement(30.0, pilot, RandomStream(2012), prune=cfg, step=1.0)
    per = (time.perf_counter() - t0) / pilot
    projected = 5000 * per
    ok = projected < 900
    report(2, ok, f"w=12: {per:.1f} s per replica, projected {projected / 60:.0f} min for 5000 (< 15 min)")
    assert ok


@pytest.mark.xfail(strict=True, reason="residual is dominated by finite-t relaxation, not grid error")
def test_criterion_03_wave_ode(sol40):
    coarse = kpp.wave_ode_residual(kpp.wave_profile(sol40[0]))[2]
    fine_sol = kpp.kpp_solve(None, 40.0, kpp.Grid1D(dx=0.025, dt=0.00025), record_every=1.0)
    fine = kpp.wave_ode_residual(kpp.wave_profile(fine_sol))[2]
    ok = coarse < 0.01 and coarse / fine >= 2
    report(3, ok, f"sup residual {coarse:.5f} < 0.01 at dx=0.05; {fine:.5f} at dx=0.025, "
                  f"reduction {coarse / fine:.3f}x (need >= 2x)")
    assert ok


def test_criterion_04_martingale_limits():
    n = 500
    prune = PruneConfig(window=6.0)
    y5, y15, z20, z30 = (np.empty(n) for _ in range(4))
    for i in range(n):
        st = RandomStream(2004).derive(i, "martingale")
        pop = init_population(0.1, st)
        vals = []
        for t in (5.0, 15.0, 20.0, 30.0):
            advance(pop, t, BINARY, prune, st)
            vals.append(frontier.martingale_snapshot(pop, compensated=True))
        y5[i], y15[i], z20[i], z30[i] = vals[0].Y, vals[1].Y, vals[2].Z, vals[3].Z
    ratio = np.median(y15 / y5)
    med15 = np.median(y15)
    dz = np.median(np.abs(z30 - z20) / np.abs(z20))
    ok = ratio < 0.5 and med15 < 0.1 and dz < 0.25
    report(4, ok, f"median Y15/Y5 {ratio:.3f} < 0.5, median Y15 {med15:.4f} < 0.1, "
                  f"median |Z30-Z20|/Z20 {dz:.3f} < 0.25 ({n} replicas)")
    assert ok


def test_criterion_05_tail_form():
    n = 100_000
    samples = frontier.sample_max_displacement(30.0, n, RandomStream(2005), prune=PruneConfig(window=6.0),
                                               step=1.0, tag="tail")
    table = survival_table(samples, np.arange(1.5, 4.0001, 0.25), 30.0)
    slope = table.slope(1.5, 4.0)
    ok = abs(slope - 1) < 0.1
    report(5, ok, f"tail regression slope {slope:.4f} (need 1 +/- 0.1), {n} replicas")
    assert ok


@pytest.mark.xfail(strict=True, reason="Z(R_T) at R_T=12 is far from its limit; one T=60 path does not "
                                       "reach the Gumbel law at this tolerance")
def test_criterion_06_ergodic(C_hat):
    T, eps = 60.0, 0.2
    R_T = eps * T
    path, Z_R, _ = ergodic_run(T, eps, R_T, BINARY, PruneConfig(window=8.0), RandomStream(2006).derive(0, "ergodic"),
                               0.1)
    xg = np.linspace(-3.0, 3.0, 121)
    F = frontier.empirical_cdf(path, xg, t_from=R_T)
    d = F.sup_distance(lambda x: frontier.gumbel_predict(frontier.GumbelParams(C_hat, Z_R), x))
    ok = d < 0.15
    report(6, ok, f"sup |F_T - Gumbel| {d:.4f} (need < 0.15), C_hat {C_hat:.4f}, Z(R_T={R_T:g}) {Z_R:.4f}")
    assert ok


@pytest.mark.xfail(strict=True, reason="the exact conditional law is within 0.1 on average, but the sup over "
                                       "200-sample CDFs adds about 0.02 of noise bias")
def test_criterion_07_conditional_cdf(C_hat, sol40):
    # the Monte Carlo law is the tested quantity; the exact product law over the
    # frozen particles, prod_k u(30, m(40) + x - x_k), is reported alongside it
    xg = np.linspace(-3.0, 3.0, 121)
    u30 = sol40[0].at(30.0)
    m40 = frontier.front_centering(40.0)
    prune = PruneConfig(window=8.0)
    dists, exact_dists = [], []
    for j in range(20):
        st = RandomStream(2007).derive(j, "early")
        early = init_population(1.0, st)
        advance(early, 10.0, BINARY, PruneConfig.off(), st)
        G = frontier.gumbel_predict(frontier.GumbelParams(C_hat, frontier.martingale_snapshot(early).Z), xg)
        cdf = frontier.conditional_max_cdf(early, 40.0, xg, 200, st.derive(0, "continuations"), prune=prune)
        dists.append(float(np.max(np.abs(cdf.values - G))))
        exact = np.array([np.prod(u30.cdf(m40 + x - early.pos)) for x in xg])
        exact_dists.append(float(np.max(np.abs(exact - G))))
    mean = float(np.mean(dists))
    ok = mean < 0.1
    report(7, ok, f"mean sup distance {mean:.4f} over 20 segments (need < 0.1), range "
                  f"{min(dists):.3f}..{max(dists):.3f}; exact conditional law {np.mean(exact_dists):.4f}")
    assert ok


def test_criterion_08_bridge_bound():
    rng = np.random.default_rng(2008)
    n_paths = 100_000
    worst, below_one, fails = -math.inf, 0, 0
    for k in range(20):
        t = float(rng.uniform(10.0, 80.0))
        r1, r2 = (float(v) for v in rng.uniform(0.2, 3.0, 2))
        z1, z2 = (float(v) for v in rng.uniform(0.0, 3.0, 2))
        bound = bridge_below_line_bound(z1, z2, r1, r2, t)
        p, se = bridge_below_line_probability(RandomStream(2008).derive(k, "bridge"), z1, z2, r1, r2, t,
                                              n_paths=n_paths)
        below_one += bound < 1
        fails += p > bound + 3 * se
        worst = max(worst, (p - bound) / se)
    ok = fails == 0 and below_one >= 5
    report(8, ok, f"MC <= bound + 3 se in {20 - fails}/20 sets (worst (p-bound)/se {worst:.1f}); "
                  f"bound < 1 in {below_one} sets (need >= 5)")
    assert ok


@pytest.mark.xfail(strict=True, reason="at t=30 the tube is about 2 units wide; extremal paths leave it")
def test_criterion_09_localization():
    n = 2000
    rates, inside = nonlocalization_rates(30.0, [2.0, 4.0, 8.0], n, RandomStream(2009), EnvelopeSpec(0.4, 0.6),
                                          (-1.0, 2.0), BINARY, PruneConfig(window=6.0), step=0.1)
    mono = bool(np.all(np.diff(rates) <= 0))
    ok = mono and rates[-1] < 0.05
    report(9, ok, f"rates at r=2,4,8: {', '.join(f'{r:.4f}' for r in rates)} (nonincreasing: {mono}; "
                  f"r=8 needs < 0.05); M(t) in window for {inside:.3f} of {n}")
    assert ok


@pytest.mark.xfail(strict=True, reason="at T=40 the covariance at separation T^0.8 is still about half the "
                                       "near value; the decay is asymptotic")
def test_criterion_10_correlation_decay():
    T = 40.0
    cfg = CorrelationConfig(T=T, epsilon=0.3, R_T=10.0, outer_replicas=30, inner_continuations=80,
                            prune=PruneConfig(window=8.0), step=1.0)
    near = correlation_estimator(cfg, T - 0.2, T, RandomStream(2010).derive(0, "near"))
    far = correlation_estimator(cfg, T - T**0.8, T, RandomStream(2010).derive(1, "far"))
    # CI-aware: the 95% upper limit of |far| must sit below 0.2x the 95% lower limit of |near|
    far_hi = abs(far.estimate) + 1.96 * far.std_error
    near_lo = abs(near.estimate) - 1.96 * near.std_error
    ok = near_lo > 0 and far_hi < 0.2 * near_lo
    report(10, ok, f"near (sep 0.2) {near.estimate:.5f}+/-{near.std_error:.5f}, far (sep {T**0.8:.2f}) "
                   f"{far.estimate:.5f}+/-{far.std_error:.5f}; need {far_hi:.5f} < 0.2 x {near_lo:.5f}")
    assert ok


def test_criterion_11_pair_formula():
    # E[n(t)^2 - n(t)] for binary branching is 2(e^{2t} - e^t); it is also checked by direct counting
    lines, ok = [], True
    for t in (1.0, 2.0):
        f = sawyer_pair_expectation(t, t)
        exact = 2 * (math.exp(2 * t) - math.exp(t))
        mean, se = direct_pair_count(t, -math.inf, 100_000, RandomStream(2011).derive(int(t), "count"))
        rel = abs(f / exact - 1)
        ok &= rel < 0.01 and abs(mean - exact) < 3 * se
        lines.append(f"t={t:g}: formula {f:.4f} vs E[n^2-n]={exact:.4f} (rel {rel:.1e}), "
                     f"direct {mean:.3f}+/-{se:.3f}")
    t = 3.0
    thr = frontier.front_centering(t) - 1.0
    f = sawyer_pair_expectation(t, t, thr, thr)
    mean, se = direct_pair_count(t, thr, 100_000, RandomStream(2011).derive(3, "thresholded"))
    z = abs(f - mean) / se
    ok &= z < 3
    lines.append(f"t=3 thresholded: formula {f:.5f} vs direct {mean:.5f}+/-{se:.5f} ({z:.2f} se < 3)")
    report(11, ok, "; ".join(lines))
    assert ok


DETERMINISM_CONFIGS = {
    "simulate": {"simulate": {"t": 4.0, "replicas": 50}},
    "ergodic": {"ergodic": {"T": 20.0, "epsilon": 0.4, "C": 0.33}, "prune": {"window": 5.0}},
    "tails": {"tails": {"t": 8.0, "replicas": 1000}, "prune": {"window": 5.0}},
    "kpp": {"kpp": {"T": 10.0, "x_min": -20.0, "x_max": 25.0, "fit_window": [5.0, 10.0],
                    "profile_times": [8.0], "fit_range": [1.0, 3.0]}},
    "corr": {"corr": {"T": 10.0, "epsilon": 0.3, "R_T": 2.0, "outer": 4, "inner": 50,
                      "separations": [0.2, 5.0]}, "prune": {"window": 4.0}},
    "localize": {"localize": {"t": 10.0, "replicas": 50, "r_values": [1.0, 2.0, 4.0]},
                 "prune": {"window": 5.0}},
}


def test_criterion_12_determinism(tmp_path):
    same = []
    for cmd, data in DETERMINISM_CONFIGS.items():
        cfg = tmp_path / f"{cmd}.yaml"
        cfg.write_text(yaml.safe_dump(dict(data, seed=2012)))
        outs = []
        for k in range(2):
            out = tmp_path / f"{cmd}_{k}"
            assert cli_run([cmd, "--config", str(cfg), "--out", str(out), "--threads", "1", "--quiet"], env={}) == 0
            outs.append(out)
        names = sorted(f for f in os.listdir(outs[0]) if f.endswith(".csv"))
        _, mismatch, errors = filecmp.cmpfiles(outs[0], outs[1], names, shallow=False)
        same.append((cmd, bool(names) and not mismatch and not errors))
    ok = all(s for _, s in same)
    report(12, ok, "byte-identical reruns: " + ", ".join(f"{c}={'yes' if s else 'NO'}" for c, s in same))
    assert ok
