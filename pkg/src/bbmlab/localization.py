"""Space-time tubes around the frontier and tail bounds for the maximum.

A particle alive at time ``t`` is *localized* on ``(r, t - r)`` when its
ancestral path stays between the lower envelope ``F_beta`` and the entropic
envelope ``F_alpha``. Both envelopes hang below the chord ``(s/t) m(t)`` by
``f_{gamma,t}(s)``, a power of the distance to the nearer end point.
"""

from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np
from scipy import stats

from .errors import DataError, ParameterError, ScheduleInfeasibleError
from .frontier import SQRT2, front_centering


class Bound(NamedTuple):
    """A bound value and whether its hypotheses hold at the given inputs."""

    value: float
    valid: bool


@dataclass(frozen=True)
class EnvelopeSpec:
    alpha: float = 0.4
    beta: float = 0.6
    t: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha < 0.5 < self.beta < 1:
            raise ParameterError(f"need 0 < alpha < 1/2 < beta < 1, got alpha={self.alpha}, beta={self.beta}")
        if not self.t > 0:
            raise ParameterError("envelope horizon t must be positive")

    def at(self, t):
        return EnvelopeSpec(self.alpha, self.beta, t)


def _check_times(s, t):
    s = np.asarray(s, dtype=float)
    tol = 1e-12 * max(1.0, t)
    if np.any(s < -tol) or np.any(s > t + tol):
        raise ParameterError(f"time outside [0, {t}]")
    return np.clip(s, 0.0, t)


def f_gamma(gamma, t, s):
    """``s^gamma`` on ``[0, t/2]`` and ``(t - s)^gamma`` on ``[t/2, t]``."""
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    s = _check_times(s, t)
    v = np.minimum(s, t - s) ** gamma
    return float(v) if v.ndim == 0 else v


def entropic_envelope(spec, s):
    """``F_alpha(s) = (s/t) m(t) - f_{alpha,t}(s)``."""
    s = _check_times(s, spec.t)
    v = s / spec.t * front_centering(spec.t) - f_gamma(spec.alpha, spec.t, s)
    return float(v) if np.ndim(v) == 0 else v


def lower_envelope(spec, s):
    """``F_beta(s) = (s/t) m(t) - f_{beta,t}(s)``."""
    s = _check_times(s, spec.t)
    v = s / spec.t * front_centering(spec.t) - f_gamma(spec.beta, spec.t, s)
    return float(v) if np.ndim(v) == 0 else v


def envelope_table(spec, n=201):
    """Rows ``(s, F_alpha(s), F_beta(s))`` on ``n`` equispaced times."""
    s = np.linspace(0.0, spec.t, n)
    return np.column_stack([s, entropic_envelope(spec, s), lower_envelope(spec, s)])


def localized_mask(times, paths, spec, r):
    """Tube membership on ``(r, t - r)`` for each row of ``paths``.

    ``paths[i, j]`` is the position of path ``i`` at ``times[j]``. Only grid
    times strictly inside ``(r, t - r)`` are checked, and the grid must
    reach both ends of that interval.
    """
    times = np.asarray(times, dtype=float)
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    t = spec.t
    if r < 0 or 2 * r >= t:
        raise ParameterError(f"tube interval ({r}, {t - r}) is empty")
    eps = 1e-9 * max(1.0, t)
    if times.size == 0 or times[0] > r + eps or times[-1] < t - r - eps:
        raise DataError(f"checkpoints do not cover ({r}, {t - r})")
    inside = (times > r + eps) & (times < t - r - eps)
    if not inside.any():
        return np.ones(paths.shape[0], dtype=bool)
    s = times[inside]
    x = paths[:, inside]
    return np.all((x >= lower_envelope(spec, s)) & (x <= entropic_envelope(spec, s)), axis=1)


def is_localized(particle, spec, r):
    """Whether a particle's checkpointed path stays in the time-``t`` tube.

    ``particle`` is a :class:`~bbmlab.engine.Particle` or a ``(times,
    positions)`` pair for a single path.
    """
    if hasattr(particle, "checkpoints"):
        if not particle.checkpoints:
            raise DataError("particle carries no checkpoints")
        times, pos = zip(*particle.checkpoints)
    else:
        times, pos = particle
    return bool(localized_mask(times, [pos], spec, r)[0])


class LocalizedMax(NamedTuple):
    """``M_loc`` together with a flag for the empty localized set."""

    value: float
    empty: bool
    n_localized: int


def localized_max(pop, spec, r_T):
    """Max over localized particles of ``x_k(t) - m(t)``.

    ``spec.t`` is replaced by the population time. With no localized
    particle the result has ``empty=True`` and ``value=-inf``.
    """
    if pop.size == 0:
        raise DataError("population is empty")
    spec = spec.at(pop.time)
    times, paths = pop.paths()
    mask = localized_mask(times, paths, spec, r_T)
    k = int(mask.sum())
    if k == 0:
        return LocalizedMax(-math.inf, True, 0)
    return LocalizedMax(float(pop.pos[mask].max() - front_centering(pop.time)), False, k)


@dataclass(frozen=True)
class TubeSchedule:
    delta: float
    T: float
    r_T: float
    R_T: float


def tube_schedule(T, delta=1.0):
    """``r_T = (20 ln T)^(1/delta)`` and ``R_T = 40 r_T``; requires ``R_T < T``."""
    if not T > math.e:
        raise ParameterError("schedule needs T > e")
    if not delta > 0:
        raise ParameterError("delta must be positive")
    r = (20.0 * math.log(T)) ** (1.0 / delta)
    R = 40.0 * r
    if not R < T:
        raise ScheduleInfeasibleError(f"R_T={R:.4g} >= T={T:.4g} (delta={delta}, r_T={r:.4g})")
    return TubeSchedule(float(delta), float(T), r, R)


@dataclass(frozen=True)
class TailBoundParams:
    C: float
    gamma_r: float = 1.0
    r: float = 0.0

    def __post_init__(self):
        if not self.C > 0:
            raise ParameterError("C must be positive")
        if not self.gamma_r >= 1:
            raise ParameterError("gamma_r must be >= 1")


def tail_bound_upper(X, params):
    """``C gamma X exp(-sqrt2 X)``."""
    if not X > 0:
        raise ParameterError("X must be positive")
    return params.C * params.gamma_r * X * math.exp(-SQRT2 * X)


def tail_bound_lower(X, t, params):
    """``C X exp(-sqrt2 X) (1 - X/(t - r)) / gamma``; flagged 0 once the factor vanishes."""
    if not X > 0:
        raise ParameterError("X must be positive")
    if not t > params.r:
        raise ParameterError("need t > r")
    q = X / (t - params.r)
    if q >= 1:
        return Bound(0.0, False)
    return Bound(params.C / params.gamma_r * X * math.exp(-SQRT2 * X) * (1 - q), True)


def simple_tail_bound(y, t, gamma=1.0):
    """``gamma (y+1)^2 exp(-sqrt2 y)``, flagged outside ``0 <= y <= sqrt t``."""
    valid = bool(0 <= y <= math.sqrt(t) and t >= 2)
    return Bound(gamma * (y + 1.0) ** 2 * math.exp(-SQRT2 * y), valid)


@dataclass
class TailTable:
    """Survival estimates ``P[M(t) >= x]`` with exact binomial 95% intervals."""

    t: float
    x: np.ndarray
    p: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n: int

    COLUMNS = ("x", "p_hat", "ci_lo", "ci_hi")

    def rows(self):
        return np.column_stack([self.x, self.p, self.lo, self.hi])

    def slope(self, x_lo, x_hi):
        """Slope of ``ln p`` against ``ln x - sqrt2 x`` over ``[x_lo, x_hi]``."""
        sel = (self.x >= x_lo) & (self.x <= x_hi) & (self.p > 0)
        if sel.sum() < 3:
            raise DataError("fewer than 3 nonzero tail points in the regression range")
        feat = np.log(self.x[sel]) - SQRT2 * self.x[sel]
        return float(np.polyfit(feat, np.log(self.p[sel]), 1)[0])


def survival_table(samples, x_grid, t=math.nan):
    samples = np.sort(np.asarray(samples, dtype=float))
    x = np.asarray(x_grid, dtype=float)
    n = samples.size
    k = n - np.searchsorted(samples, x, side="left")
    lo = np.where(k > 0, stats.beta.ppf(0.025, k, n - k + 1), 0.0)
    hi = np.where(k < n, stats.beta.ppf(0.975, k + 1, n - k), 1.0)
    return TailTable(t, x, k / n, lo, hi, n)


def tail_estimate(t, x_grid, replicas, stream, law=None, prune=None, step=1.0):
    """Monte Carlo ``P[M(t) >= x]`` on ``x_grid`` over independent replicas."""
    from .frontier import sample_max_displacement

    if replicas < 1000:
        raise ParameterError("tail estimation needs at least 1000 replicas")
    m = sample_max_displacement(t, replicas, stream, law, prune, step=step, tag="tail")
    return survival_table(m, x_grid, t)


def fit_tail_gamma(table, xs, t):
    """Smallest ``gamma`` with ``P[M(t) >= y] <= gamma (y+1)^2 e^{-sqrt2 y}`` on ``xs``.

    Uses the upper ends of the confidence intervals, so the result is a
    conservative fit of the unknown constant.
    """
    worst = 0.0
    for y in xs:
        i = int(np.argmin(np.abs(table.x - y)))
        worst = max(worst, table.hi[i] / simple_tail_bound(table.x[i], t, 1.0).value)
    return worst


def nonlocalization_rates(t, r_values, replicas, stream, spec=None, window=(-1.0, 2.0),
                          law=None, prune=None, step=0.1):
    """Frequency of ``{M(t) in [d, D], M(t) != M_loc(t)}`` for each ``r``.

    All ``r`` share the same replicas, so the rates are nonincreasing in
    ``r`` by construction. Returns ``(rates, in_window)`` where
    ``in_window`` is the fraction of replicas with ``M(t)`` in the window.
    """
    from .engine import OffspringLaw, PruneConfig, advance, init_population

    law = law or OffspringLaw.binary()
    prune = prune or PruneConfig()
    spec = (spec or EnvelopeSpec()).at(t)
    d, D = window
    if not d < D:
        raise ParameterError("window needs d < D")
    r_values = np.asarray(r_values, dtype=float)
    m = front_centering(t)
    bad = np.zeros(r_values.size, dtype=np.int64)
    hits = 0
    for i in range(replicas):
        st = stream.derive(i, "localize")
        pop = init_population(step, st, law, record_paths=True)
        advance(pop, t, law, prune, st)
        k = int(np.argmax(pop.pos))
        M = pop.pos[k] - m
        if not d <= M <= D:
            continue
        hits += 1
        times, path = pop.paths([k])
        for j, r in enumerate(r_values):
            if not localized_mask(times, path, spec, r)[0]:
                bad[j] += 1
    return bad / replicas, hits / replicas
