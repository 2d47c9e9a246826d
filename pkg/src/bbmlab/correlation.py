"""Correlations of frontier indicators, Lyons-type summability and pair counts.

For a level ``D`` let ``X_s = 1{M(s) <= D} - P[M(s) <= D | F_R]`` with ``R``
the conditioning time. Its correlation ``C(s, s') = E[X_s X_s']`` equals the
mean over early histories of the conditional covariance of the two
indicators, which is what :func:`correlation_estimator` estimates by nested
Monte Carlo.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import interpolate, special

from .engine import OffspringLaw, PruneConfig, advance, init_population, resample_clocks
from .errors import AccuracyError, ParameterError, ScheduleInfeasibleError
from .frontier import front_centering
from .localization import EnvelopeSpec, localized_mask


@dataclass(frozen=True)
class CorrelationConfig:
    T: float
    epsilon: float = 0.3
    xi: float = 0.8
    window: tuple = (-1.0, 2.0)
    R_T: float = 10.0
    outer_replicas: int = 200
    inner_continuations: int = 200
    prune: PruneConfig = field(default_factory=PruneConfig)
    law: OffspringLaw = field(default_factory=OffspringLaw.binary)
    step: float = 0.1
    use_localization: bool = False
    envelope: EnvelopeSpec = field(default_factory=EnvelopeSpec)
    r: float = 2.0

    def __post_init__(self):
        if not self.T > 0:
            raise ParameterError("T must be positive")
        if not 0 < self.epsilon < 1:
            raise ParameterError("epsilon must lie in (0, 1)")
        if not 0 < self.xi < 1:
            raise ParameterError("xi must lie in (0, 1)")
        d, D = self.window
        if not d < D:
            raise ParameterError("window needs d < D")
        if self.R_T < 0:
            raise ParameterError("R_T must be nonnegative")
        if not self.epsilon * self.T > self.R_T:
            raise ScheduleInfeasibleError(
                f"epsilon*T={self.epsilon * self.T:.4g} must exceed R_T={self.R_T:.4g}")
        if self.inner_continuations < 50:
            raise ParameterError("inner_continuations must be at least 50")
        if self.outer_replicas < 2:
            raise ParameterError("outer_replicas must be at least 2")

    @property
    def separation(self):
        """The well-separation threshold ``T^xi``."""
        return self.T**self.xi


@dataclass(frozen=True)
class CorrelationSample:
    s: float
    s_prime: float
    estimate: float
    std_error: float
    n_outer: int = 0

    COLUMNS = ("s", "s_prime", "separation", "estimate", "std_error")

    def __post_init__(self):
        if not self.s < self.s_prime:
            raise ParameterError("need s < s_prime")

    def as_row(self):
        return (self.s, self.s_prime, self.s_prime - self.s, self.estimate, self.std_error)


def _below(pop, level, cfg):
    """``1{M(t) <= level}``, with ``M_loc`` in place of ``M`` if configured."""
    t = pop.time
    m = front_centering(t)
    if cfg.use_localization:
        times, paths = pop.paths()
        mask = localized_mask(times, paths, cfg.envelope.at(t), cfg.r)
        if not mask.any():
            return 1.0
        return float(pop.pos[mask].max() - m <= level)
    return float(pop.max_position() - m <= level)


def correlation_estimator(cfg, s, s_prime, stream, level=None, paired=True):
    """Nested Monte Carlo estimate of ``C(s, s')`` at ``level`` (default ``D``).

    Each outer replica draws an early history up to ``R_T``. Its
    ``inner_continuations`` continuations are run to ``s`` and then on to
    ``s'``, and the unbiased sample covariance of the two indicators is the
    outer replica's contribution. With ``paired=False`` the ``s'`` indicator
    comes from separate continuations instead, which makes the target zero.
    """
    T = cfg.T
    if not (cfg.epsilon * T - 1e-9 <= s < s_prime <= T + 1e-9):
        raise ParameterError(f"need eps*T <= s < s' <= T, got s={s}, s'={s_prime}")
    level = cfg.window[1] if level is None else level
    law, prune = cfg.law, cfg.prune
    n = cfg.inner_continuations
    covs = np.empty(cfg.outer_replicas)
    for o in range(cfg.outer_replicas):
        st = stream.derive(o, "early")
        early = init_population(cfg.step, st, law, record_paths=cfg.use_localization)
        if cfg.R_T > 0:
            advance(early, cfg.R_T, law, prune, st)
        a = np.empty(n)
        b = np.empty(n)
        for i in range(n):
            ci = st.derive(i, "continuation")
            pop = resample_clocks(early.copy(), law, ci)
            advance(pop, s, law, prune, ci)
            a[i] = _below(pop, level, cfg)
            if not paired:
                ci = st.derive(i, "independent")
                pop = resample_clocks(early.copy(), law, ci)
                advance(pop, s_prime, law, prune, ci)
            elif s_prime > s:
                advance(pop, s_prime, law, prune, ci)
            b[i] = _below(pop, level, cfg)
        covs[o] = np.cov(a, b, ddof=1)[0, 1]
    est = float(covs.mean())
    se = float(covs.std(ddof=1) / math.sqrt(covs.size))
    return CorrelationSample(float(s), float(s_prime), est, se, cfg.outer_replicas)


def _triangle_integral(f, T, epsilon, min_separation, order=48):
    """``int_{eps T}^{T} ds int_{s + sep}^{T} ds' f(s, s')`` by Gauss-Legendre."""
    lo, hi = epsilon * T, T - min_separation
    if hi <= lo:
        return 0.0
    g, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (hi - lo) * (g + 1) + lo
    ws = 0.5 * (hi - lo) * w
    total = 0.0
    for si, wi in zip(s, ws):
        a = si + min_separation
        sp = 0.5 * (T - a) * (g + 1) + a
        total += wi * 0.5 * (T - a) * float(np.dot(w, f(np.full_like(sp, si), sp)))
    return total


def _surface(samples):
    pts = np.array([(c.s, c.s_prime) for c in samples], dtype=float)
    vals = np.array([c.estimate for c in samples], dtype=float)
    if len(samples) < 3 or np.linalg.matrix_rank(np.column_stack([pts, np.ones(len(pts))])) < 3:
        c = float(vals.mean())
        return lambda s, sp: np.full(np.shape(s), c)
    lin = interpolate.LinearNDInterpolator(pts, vals)
    near = interpolate.NearestNDInterpolator(pts, vals)

    def f(s, sp):
        v = lin(s, sp)
        bad = np.isnan(v)
        if bad.any():
            v[bad] = near(s[bad], sp[bad])
        return v

    return f


def lyons_summability_report(samples_by_T, epsilon, min_separation=None, xi=None):
    """Terms ``(2/T^3) int int C_T`` over the separated region and their running sum.

    ``samples_by_T`` maps ``T`` to a list of :class:`CorrelationSample`.
    The correlation surface is interpolated linearly between samples
    (nearest sample outside their hull). The separation cut is
    ``min_separation`` if given, else ``T^xi``, else 0.
    Returns rows ``(T, term, partial_sum)`` sorted by ``T``.
    """
    rows = []
    acc = 0.0
    for T in sorted(samples_by_T):
        samples = samples_by_T[T]
        if min_separation is not None:
            sep = float(min_separation)
        elif xi is not None:
            sep = T**xi
        else:
            sep = 0.0
        if not samples:
            raise ParameterError(f"no correlation samples for T={T}")
        term = 2.0 / T**3 * _triangle_integral(_surface(samples), T, epsilon, sep)
        acc += term
        rows.append((float(T), term, acc))
    return np.array(rows)


@dataclass(frozen=True)
class PathCondition:
    """Condition on a Brownian path ending at time ``t``.

    ``threshold`` requires ``x(t) >= threshold``. ``envelope`` with ``r``
    additionally requires the path to stay in that tube on ``(r, t - r)``
    on a grid of spacing ``step``.
    """

    t: float
    threshold: float = -math.inf
    envelope: EnvelopeSpec = None
    r: float = 0.0
    step: float = 0.1

    @property
    def has_tube(self):
        return self.envelope is not None


def _endpoint_prob(cond, s, y):
    """``P[x(t) >= threshold | x(s) = y]`` in closed form."""
    if cond.threshold == -math.inf:
        return np.ones_like(y)
    tau = cond.t - s
    if tau <= 0:
        return (y >= cond.threshold).astype(float)
    return 0.5 * special.erfc((cond.threshold - y) / math.sqrt(2 * tau))


def _path_prob(cond, s, y, n_paths, gen):
    """Monte Carlo ``P[path condition on (s, t) | x(s) = y]`` for each ``y``."""
    if not cond.has_tube:
        return _endpoint_prob(cond, s, y)
    spec = cond.envelope.at(cond.t)
    k = max(1, int(math.ceil((cond.t - s) / cond.step)))
    times = np.linspace(s, cond.t, k + 1)
    out = np.empty(y.size)
    for j, y0 in enumerate(y):
        inc = gen.standard_normal((n_paths, k)) * np.sqrt(np.diff(times))
        paths = y0 + np.concatenate([np.zeros((n_paths, 1)), np.cumsum(inc, axis=1)], axis=1)
        ok = paths[:, -1] >= cond.threshold
        lo, hi = cond.r, cond.t - cond.r
        inside = (times > lo) & (times < hi)
        if inside.any():
            ts = times[inside]
            x = paths[:, inside]
            ok &= np.all((x >= _env(spec, ts, "lower")) & (x <= _env(spec, ts, "upper")), axis=1)
        out[j] = ok.mean()
    return out


def _env(spec, s, which):
    from .localization import entropic_envelope, lower_envelope

    return entropic_envelope(spec, s) if which == "upper" else lower_envelope(spec, s)


def sawyer_pair_expectation(I_T, J_T, threshold_1=-math.inf, threshold_2=-math.inf, law=None,
                            quad_points=16, bridge_mc=2000, stream=None, r_cut=0.0,
                            cond_1=None, cond_2=None, hermite_points=40, max_doublings=8, rtol=0.05):
    """Expected number of ordered pairs whose common ancestor split in ``(0, I - r_cut)``.

    Evaluates ``K e^I int_0^{I-r_cut} ds e^{J-s} int dmu_s(y) P1(y) P2(y)``
    with ``mu_s = N(0, s)``. ``P1``, ``P2`` are the probabilities that a
    Brownian path started from ``y`` at time ``s`` meets the conditions of
    particle 1 (at ``I``) and particle 2 (at ``J``). Without tube conditions
    they are Gaussian tails; with tubes they are estimated from
    ``bridge_mc`` sampled paths. The ``s``-integral is composite Simpson,
    doubled from ``quad_points`` intervals until successive values agree
    within ``rtol``.
    """
    law = law or OffspringLaw.binary()
    if not 0 < I_T <= J_T:
        raise ParameterError("need 0 < I_T <= J_T")
    if not 0 <= r_cut <= I_T:
        raise ParameterError("need 0 <= r_cut <= I_T")
    c1 = cond_1 or PathCondition(I_T, threshold_1)
    c2 = cond_2 or PathCondition(J_T, threshold_2)
    if abs(c1.t - I_T) > 1e-12 or abs(c2.t - J_T) > 1e-12:
        raise ParameterError("path conditions must end at I_T and J_T")
    K = law.K
    if K == 0:
        return 0.0
    upper = I_T - r_cut
    if upper <= 0:
        return 0.0
    gen = None
    if c1.has_tube or c2.has_tube:
        if stream is None:
            raise ParameterError("tube conditions need a random stream")
        gen = stream.generator
    nodes, weights = hermegauss(hermite_points)
    weights = weights / math.sqrt(2 * math.pi)

    def inner(s):
        y = math.sqrt(s) * nodes
        p = _path_prob(c1, s, y, bridge_mc, gen) * _path_prob(c2, s, y, bridge_mc, gen)
        return math.exp(I_T + J_T - s) * float(np.dot(weights, p))

    cache = {}

    def simpson(n):
        h = upper / n
        total = 0.0
        for i in range(n + 1):
            s = i * h
            key = round(s / upper, 14)
            if key not in cache:
                cache[key] = inner(s)
            c = 1 if i in (0, n) else (4 if i % 2 else 2)
            total += c * cache[key]
        return total * h / 3

    n = max(2, quad_points + quad_points % 2)
    prev = simpson(n)
    for _ in range(max_doublings):
        n *= 2
        cur = simpson(n)
        if abs(cur - prev) <= rtol * abs(cur):
            return K * cur
        prev = cur
    raise AccuracyError(f"s-quadrature did not settle within {rtol:.0%} after {max_doublings} doublings")


def direct_pair_count(t, threshold, replicas, stream, law=None):
    """Monte Carlo ``E[N(N-1)]`` with ``N`` the number of particles above ``threshold`` at ``t``.

    Returns ``(mean, std_error)``. No pruning.
    """
    law = law or OffspringLaw.binary()
    prune = PruneConfig.off()
    vals = np.empty(replicas)
    for i in range(replicas):
        st = stream.derive(i, "pairs")
        pop = init_population(max(t, 1.0), st, law)
        advance(pop, t, law, prune, st)
        k = float(np.count_nonzero(pop.pos >= threshold))
        vals[i] = k * (k - 1)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replicas))
