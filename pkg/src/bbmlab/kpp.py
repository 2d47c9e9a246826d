"""Explicit finite-difference solver for the KPP equation with Heaviside data.

Solves ``u_t = u_xx / 2 + sum_k p_k u^k - u`` from ``u(0, x) = 1{x >= 0}``.
``u(t, x)`` is the law of the maximal displacement of the branching process
at time ``t``, which makes this module the independent oracle for every
Monte Carlo statement about the maximum.

The grid is cell-centred (``x_i = x_min + (i + 1/2) dx``) so the initial
jump sits between two nodes. The domain is a window of fixed width that
follows the front by whole cells, and the two boundary nodes keep their
initial values (0 on the left and 1 on the right for Heaviside data).
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from . import _accel
from .errors import AccuracyError, NumericalError, ParameterError, StateError
from .frontier import front_centering

SQRT2 = math.sqrt(2.0)
LOG_COEFF = -3.0 / (2.0 * SQRT2)


@dataclass(frozen=True)
class Grid1D:
    """Initial window ``[x_min, x_max]`` with spacing ``dx`` and time step ``dt``."""

    x_min: float = -45.0
    x_max: float = 35.0
    dx: float = 0.05
    dt: float = 0.001

    def __post_init__(self):
        if not (self.dx > 0 and self.dt > 0):
            raise ParameterError("dx and dt must be positive")
        if self.dt > self.dx**2 / 2 * (1 + 1e-12):
            raise ParameterError(
                f"unstable explicit scheme: dt={self.dt} > dx^2/2={self.dx**2 / 2}")
        if not self.x_max - self.x_min > 4 * self.dx:
            raise ParameterError("grid window too small")

    @property
    def n(self):
        return int(round((self.x_max - self.x_min) / self.dx))

    def nodes(self):
        return self.x_min + (np.arange(self.n) + 0.5) * self.dx


@dataclass
class WaveSolution:
    """Field ``u`` on nodes ``x`` at time ``t`` plus the tracked front."""

    t: float
    x: np.ndarray
    u: np.ndarray
    front_history: np.ndarray
    grid: Grid1D
    law: object = None
    snapshots: dict = field(default_factory=dict)

    def at(self, t):
        """The solution frozen at snapshot time ``t`` (or the final one)."""
        if abs(t - self.t) < 1e-9:
            return self
        for ts, (x, u) in self.snapshots.items():
            if abs(ts - t) < 1e-9:
                return WaveSolution(ts, x, u, self.front_history[self.front_history[:, 0] <= ts + 1e-12],
                                    self.grid, self.law)
        raise StateError(f"no snapshot at t={t}")

    def cdf(self, xs):
        """``u(t, xs)`` by linear interpolation, constant beyond the window."""
        return np.interp(xs, self.x, self.u, left=0.0, right=1.0)


@dataclass
class Profile:
    """Wave profile on the recentred grid ``x - m(t)``."""

    x: np.ndarray
    w: np.ndarray
    t: float = math.nan

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])


# -- hot loop --------------------------------------------------------------

@_accel.njit
def _steps_numba(u, nsteps, lam, dt, probs):
    n = u.size
    new = np.empty(n)
    for _ in range(nsteps):
        new[0] = u[0]
        new[n - 1] = u[n - 1]
        for i in range(1, n - 1):
            ui = u[i]
            g = 0.0
            for k in range(probs.size - 1, -1, -1):
                g = (g + probs[k]) * ui
            new[i] = ui + lam * (u[i + 1] - 2.0 * ui + u[i - 1]) + dt * (g - ui)
        for i in range(n):
            u[i] = new[i]
    return u


def _steps_numpy(u, nsteps, lam, dt, probs):
    for _ in range(nsteps):
        ui = u[1:-1]
        g = np.zeros_like(ui)
        for p in probs[::-1]:
            g = (g + p) * ui
        inner = ui + lam * (u[2:] - 2.0 * ui + u[:-2]) + dt * (g - ui)
        u[1:-1] = inner
    return u


def _steps(u, nsteps, lam, dt, probs):
    if _accel.use_numba():
        return _steps_numba(u, nsteps, lam, dt, probs)
    return _steps_numpy(u, nsteps, lam, dt, probs)


# -- solver ----------------------------------------------------------------

def front_position(sol, level=0.5):
    """Point where ``u`` crosses ``level``, by linear interpolation."""
    return _crossing(sol.x, sol.u, level)


def _crossing(x, u, level):
    if not 0.0 < level < 1.0:
        raise ParameterError("level must lie in (0, 1)")
    idx = np.flatnonzero(u >= level)
    if idx.size == 0 or idx[0] == 0:
        raise StateError(f"field does not cross level {level}")
    i = idx[0]
    u0, u1 = u[i - 1], u[i]
    return float(x[i - 1] + (level - u0) / (u1 - u0) * (x[i] - x[i - 1]))


def kpp_solve(law, T, grid=None, *, initial=None, record_every=0.05, snapshots=(),
              check_every=100, level=0.5, track=True):
    """March the KPP equation to time ``T``.

    ``initial`` replaces the Heaviside data (a callable of the nodes or an
    array), which is how the fixed-point tests use it. ``snapshots`` lists
    intermediate times whose fields are kept.
    """
    if law is None:
        from .engine import OffspringLaw
        law = OffspringLaw.binary()
    grid = grid or Grid1D()
    if not T > 0:
        raise ParameterError("T must be positive")
    x = grid.nodes()
    if initial is None:
        u = (x >= 0.0).astype(float)
    else:
        u = np.array(initial(x) if callable(initial) else initial, dtype=float)
        if u.shape != x.shape:
            raise ParameterError("initial data does not match the grid")
    track = track and initial is None
    probs = np.asarray(law.probs, dtype=float)
    lam = 0.5 * grid.dt / grid.dx**2
    nsteps = int(round(T / grid.dt))
    if abs(nsteps * grid.dt - T) > 1e-9 * max(T, 1.0):
        raise ParameterError(f"T={T} is not a multiple of dt={grid.dt}")
    chunk = max(1, int(round(record_every / grid.dt)))
    check_every = max(1, check_every)
    snap_steps = {int(round(s / grid.dt)): float(s) for s in snapshots}
    anchor = 0.0
    shift = max(1, int(round(1.0 / grid.dx)))
    front = [(0.0, _crossing(x, u, level))] if track else []
    snaps = {}
    step = 0
    since_check = 0
    while step < nsteps:
        todo = min(chunk - step % chunk, nsteps - step)
        nxt = [s for s in snap_steps if step < s < step + todo]
        if nxt:
            todo = min(nxt) - step
        _steps(u, todo, lam, grid.dt, probs)
        step += todo
        since_check += todo
        if since_check >= check_every or step == nsteps:
            since_check = 0
            _check_field(u, step * grid.dt)
        t = step * grid.dt
        if track:
            xf = _crossing(x, u, level)
            front.append((t, xf))
            while xf - anchor >= shift * grid.dx:
                u = np.concatenate([u[shift:], np.ones(shift)])
                u[-1] = 1.0
                x = x + shift * grid.dx
                anchor += shift * grid.dx
        if step in snap_steps:
            snaps[snap_steps[step]] = (x.copy(), u.copy())
    return WaveSolution(nsteps * grid.dt, x, u, np.array(front) if front else np.empty((0, 2)),
                        grid, law, snaps)


def _check_field(u, t):
    lo, hi = u.min(), u.max()
    if lo < -1e-8 or hi > 1 + 1e-8 or not np.isfinite(lo + hi):
        raise NumericalError(f"KPP field left [0, 1] at t={t:.4g}: range [{lo:.3g}, {hi:.3g}]")
    if np.any(np.diff(u) < -1e-10):
        raise NumericalError(f"KPP field lost monotonicity at t={t:.4g}")


def fit_front(front_history, t_lo, t_hi):
    """Regression of the front on ``(t, ln t, 1)`` over ``[t_lo, t_hi]``.

    Returns ``dict(speed, log_coeff, offset, speed_fixed_log)``. The last entry
    is the slope of ``x_front - LOG_COEFF ln t`` against ``t`` alone, i.e. the
    speed with the logarithmic correction held at its theoretical value.
    """
    fh = np.asarray(front_history)
    sel = (fh[:, 0] >= t_lo) & (fh[:, 0] <= t_hi)
    t, xf = fh[sel, 0], fh[sel, 1]
    if t.size < 3:
        raise StateError("not enough front samples in the fit window")
    A = np.column_stack([t, np.log(t), np.ones_like(t)])
    (v, c, b), *_ = np.linalg.lstsq(A, xf, rcond=None)
    v1 = np.polyfit(t, xf - LOG_COEFF * np.log(t), 1)[0]
    return {"speed": float(v), "log_coeff": float(c), "offset": float(b), "speed_fixed_log": float(v1)}


def wave_profile(sol):
    """``u(t, m(t) + x)`` on the recentred nodes."""
    return Profile(sol.x - front_centering(sol.t), sol.u.copy(), sol.t)


def wave_ode_residual(profile, lo=0.01, hi=0.99):
    """Residual ``w''/2 + sqrt2 w' + w^2 - w`` by central differences.

    Returns ``(x, r, sup)`` with ``sup`` taken where ``lo <= w <= hi``. The
    nonlinearity assumes binary branching.
    """
    h = profile.dx
    if h > 0.1 * (1 + 1e-9):
        warnings.warn(f"profile spacing {h} > 0.1: residual is not resolved", RuntimeWarning)
    w = profile.w
    d1 = (w[2:] - w[:-2]) / (2 * h)
    d2 = (w[2:] - 2 * w[1:-1] + w[:-2]) / h**2
    wi = w[1:-1]
    r = 0.5 * d2 + SQRT2 * d1 + wi**2 - wi
    xi = profile.x[1:-1]
    mask = (wi >= lo) & (wi <= hi)
    sup = float(np.max(np.abs(r[mask]))) if mask.any() else 0.0
    return xi, r, sup


def translation_distance(p, q, search=2.0, n=401):
    """``min_a sup_x |p(x) - q(x - a)|`` over shifts ``|a| <= search``."""
    lo = max(p.x[0], q.x[0]) + search
    hi = min(p.x[-1], q.x[-1]) - search
    xs = np.linspace(lo, hi, 4000)
    pv = np.interp(xs, p.x, p.w)
    best = (math.inf, 0.0)
    for a in np.linspace(-search, search, n):
        d = float(np.max(np.abs(pv - np.interp(xs - a, q.x, q.w))))
        if d < best[0]:
            best = (d, float(a))
    return best


def tail_window(profile, lo=1e-6, hi=1e-2):
    """The x-range where ``1 - w`` lies in ``(lo, hi)``."""
    tail = 1.0 - profile.w
    sel = (tail > lo) & (tail < hi) & (profile.x > 0)
    if not sel.any():
        raise StateError("profile has no tail points in the requested band")
    return float(profile.x[sel].min()), float(profile.x[sel].max())


DEFAULT_FIT_WIDTH = 3.0


def estimate_C(profile, fit_range=None, min_r2=0.99, band=(1e-6, 1e-2)):
    """Fit ``ln(1 - w(x)) = ln C + ln x - sqrt2 x`` over ``fit_range``.

    The slope in front of ``ln x - sqrt2 x`` is held at 1, so ``ln C`` is the
    mean residual. ``fit_range`` must lie where ``1 - w`` is inside ``band``;
    by default it is the first ``DEFAULT_FIT_WIDTH`` units of that region,
    where the profile at finite ``t`` is closest to the limiting wave.
    Returns ``(C_hat, diagnostics)`` with ``r2`` the share of the variance of
    ``ln(1 - w)`` explained by the model and ``free_slope`` the unconstrained
    regression slope.
    """
    lo_band, hi_band = tail_window(profile, *band)
    if fit_range is None:
        fit_range = (lo_band, min(hi_band, lo_band + DEFAULT_FIT_WIDTH))
    x_lo, x_hi = fit_range
    h = profile.dx
    if x_lo < lo_band - h or x_hi > hi_band + h:
        raise ParameterError(
            f"fit range ({x_lo:.3g}, {x_hi:.3g}) leaves the tail band ({lo_band:.3g}, {hi_band:.3g})")
    tail = 1.0 - profile.w
    sel = (profile.x >= x_lo) & (profile.x <= x_hi) & (tail > 0)
    if sel.sum() < 5:
        raise StateError("fit range holds fewer than 5 profile points")
    xs = profile.x[sel]
    ys = np.log(tail[sel])
    feat = np.log(xs) - SQRT2 * xs
    logc = float(np.mean(ys - feat))
    pred = logc + feat
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    slope = float(np.polyfit(feat, ys, 1)[0])
    diag = {"r2": r2, "free_slope": slope, "n_points": int(sel.sum()), "fit_range": (float(x_lo), float(x_hi))}
    if r2 < min_r2:
        raise AccuracyError(f"poor tail fit: R^2={r2:.4f} < {min_r2}")
    return math.exp(logc), diag


def crosscheck_mc_vs_pde(mc_cdf, sol, t=None, law=None):
    """``sup_x |F_mc(x) - u(t, m(t) + x)|`` over the Monte Carlo grid."""
    if t is not None and abs(t - sol.t) > 1e-9:
        raise ParameterError(f"Monte Carlo time {t} differs from PDE time {sol.t}")
    if law is not None and sol.law is not None and tuple(law.probs) != tuple(sol.law.probs):
        raise ParameterError("Monte Carlo and PDE use different offspring laws")
    pde = sol.cdf(front_centering(sol.t) + mc_cdf.x_grid)
    return float(np.max(np.abs(mc_cdf.values - pde)))
