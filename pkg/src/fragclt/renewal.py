"""Renewal processes driven by the waiting law pi.

Besides direct simulation this module solves the renewal equation for
``h_g(t) = E g(B_t)`` (zero-delay residual lifetime), which several
estimators use in place of simulating a renewal path to the end.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from ._quad import piecewise_gl
from .dislocation import WaitingLaw, sample_waiting
from .errors import EvaluationError, FitError
from .functions import Fn, as_fn


@dataclass(frozen=True)
class RenewalState:
    """Age ``C_t`` and residual lifetime ``B_t`` at a fixed time."""

    age: float
    residual: float


# ---------------------------------------------------------------------------
# simulation


def advance(law: WaitingLaw, age, residual, t: float, rng: np.random.Generator):
    """Move states observed at time 0 forward to time ``t``.

    ``residual`` is the time to the next epoch. Returns new
    ``(age, residual)`` arrays.
    """
    age = np.array(age, dtype=float, copy=True)
    nxt = np.array(residual, dtype=float, copy=True)  # next epoch, relative to 0
    last = -age  # last epoch
    todo = np.flatnonzero(nxt <= t)
    while todo.size:
        last[todo] = nxt[todo]
        nxt[todo] += sample_waiting(law, rng, size=todo.size)
        todo = todo[nxt[todo] <= t]
    return t - last, nxt - t


def simulate_residuals(law: WaitingLaw, t: float, n: int, rng: np.random.Generator):
    """Zero-delay renewal observed at ``t``: arrays ``(age, residual)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    first = sample_waiting(law, rng, size=n)
    return advance(law, np.zeros(n), first, t, rng)


def simulate_residual(law: WaitingLaw, t: float, rng: np.random.Generator) -> RenewalState:
    """One zero-delay run ``S_0 = 0 < S_1 < ...`` stopped at the first epoch past ``t``."""
    age, res = simulate_residuals(law, t, 1, rng)
    return RenewalState(float(age[0]), float(res[0]))


def renewal_epochs(law: WaitingLaw, t: float, rng: np.random.Generator) -> np.ndarray:
    """Epochs ``S_0 = 0, S_1, ..., S_N`` with ``S_N`` the first epoch beyond ``t``."""
    out = [0.0]
    while out[-1] <= t:
        out.append(out[-1] + sample_waiting(law, rng))
    return np.asarray(out)


def sample_stationary_states(law: WaitingLaw, n: int, rng: np.random.Generator):
    """Draw ``n`` states from eta_2 as arrays ``(age, residual)``.

    The straddling length is size-biased pi (rejection from pi with
    acceptance ``x / b``), split by an independent uniform.
    """
    length = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        x = sample_waiting(law, rng, size=todo.size)
        ok = rng.random(todo.size) * law.b < x
        length[todo[ok]] = x[ok]
        todo = todo[~ok]
    u = rng.random(n)
    return length * u, length * (1.0 - u)


def sample_stationary_state(law: WaitingLaw, rng: np.random.Generator) -> RenewalState:
    age, res = sample_stationary_states(law, 1, rng)
    return RenewalState(float(age[0]), float(res[0]))


# ---------------------------------------------------------------------------
# the stationary residual law eta


@dataclass(frozen=True)
class EtaMeasure:
    """Stationary residual law with density ``(1 - F) / mu`` on ``[0, b]``."""

    law: WaitingLaw = field(repr=False)

    def density(self, x):
        x = np.asarray(x, float)
        inside = (x >= 0) & (x <= self.law.b)
        return np.where(inside, (1.0 - self.law.cdf(x)) / self.law.mu, 0.0)

    def cdf(self, x):
        x = np.clip(np.asarray(x, float), 0.0, self.law.b)
        flat = np.atleast_1d(x)
        vals = piecewise_gl(lambda y: self.density(y), np.zeros(flat.size), flat,
                            cuts=np.array([self.law.a]), n=48)
        return vals.reshape(x.shape) if x.ndim else float(vals[0])

    def integral(self, g, rel_tol: float = 1e-8) -> float:
        return eta_integral(self.law, g, rel_tol)

    def quadrature_nodes(self, n: int = 64):
        """Gauss-Legendre nodes and weights of eta on ``[0,a]`` and ``[a,b]``."""
        x, w = np.polynomial.legendre.leggauss(n)
        pts, wts = [], []
        for lo, hi in ((0.0, self.law.a), (self.law.a, self.law.b)):
            half = 0.5 * (hi - lo)
            y = lo + half * (x + 1.0)
            pts.append(y)
            wts.append(half * w * self.density(y))
        return np.concatenate(pts), np.concatenate(wts)


def eta(law: WaitingLaw) -> EtaMeasure:
    return EtaMeasure(law)


def eta_integral(law: WaitingLaw, g, rel_tol: float = 1e-8) -> float:
    """``eta(g)`` by adaptive quadrature split at ``a`` and at the breaks of ``g``."""
    g = as_fn(g)
    m = eta(law)
    pts = [0.0]
    for p in sorted({law.a, law.b, *[p for p in g.breaks if 0.0 < p < law.b]}):
        if p - pts[-1] > 1e-12:
            pts.append(p)
    total = 0.0
    pts[-1] = max(pts[-1], law.b)
    for lo, hi in zip(pts[:-1], pts[1:]):
        probe = np.linspace(lo, hi, 9)
        g.checked(probe)
        val = integrate.quad(lambda y: float(g(np.array(y))) * float(m.density(y)), lo, hi,
                             epsabs=1e-14, epsrel=rel_tol * 1e-2, limit=200)[0]
        total += val
    if not math.isfinite(total):
        raise EvaluationError(f"eta integral of {g.name} is not finite")
    return total


# ---------------------------------------------------------------------------
# renewal function h_g(t) = E g(B_t)


@dataclass
class RenewalFunction:
    """Tabulated ``t -> E g(B_t)`` for the zero-delay process.

    Beyond the grid the exact limit ``eta(g)`` is returned.
    """

    grid: np.ndarray
    values: np.ndarray
    limit: float
    name: str = "h"

    def __call__(self, t):
        t = np.asarray(t, float)
        out = np.interp(t, self.grid, self.values)
        return np.where(t > self.grid[-1], self.limit, out)


def _first_step(law: WaitingLaw, g: Fn, t: np.ndarray) -> np.ndarray:
    """``g0(t) = E[g(S_1 - t); S_1 > t]`` for grid points ``t``."""
    out = np.zeros(t.size)
    live = t < law.b
    tt = t[live]
    lo = np.maximum(tt, law.a)
    cuts = tt[:, None] + np.asarray([p for p in g.breaks], float)[None, :]
    out[live] = piecewise_gl(lambda y: g(y - tt[:, None]) * law.density(y), lo,
                             np.full(tt.size, law.b), cuts=cuts, n=32)
    return out


def _solve_grid(law: WaitingLaw, g: Fn, t_max: float, dt: float) -> np.ndarray:
    n = int(round(t_max / dt)) + 1
    grid = np.arange(n) * dt
    g0 = _first_step(law, g, grid)
    m = int(math.ceil(law.b / dt)) + 1
    edges = np.arange(m + 1) * dt
    dF = np.diff(law.cdf(edges))  # exact mass of each cell
    j0 = max(1, int(math.floor(law.a / dt)))
    dF = dF[j0:]
    h = np.zeros(n)
    mid = np.zeros(n)  # mid[i] = (h[i] + h[i-1]) / 2
    for k in range(n):
        hi = min(k - 1, m - 1)
        s = 0.0
        if hi >= j0:
            # cells j0..hi: sum_j mid[k-j] dF[j]
            seg = mid[k - hi:k - j0 + 1][::-1]
            s = float(np.dot(seg, dF[: hi - j0 + 1]))
        h[k] = g0[k] + s
        if k:
            mid[k] = 0.5 * (h[k] + h[k - 1])
    return h


_RF_CACHE: dict = {}


def renewal_function(law: WaitingLaw, g, t_max: float = 30.0, dt: float = 1e-3) -> RenewalFunction:
    """Solve ``h = g0 + h * F`` on ``[0, t_max]``.

    A Stieltjes midpoint rule with exact cell masses of F is run at
    steps ``dt`` and ``2 dt`` and combined by Richardson extrapolation,
    leaving an error far below Monte Carlo resolution. Results are
    cached per ``(law, g, t_max, dt)``.

    Parameters
    ----------
    law : WaitingLaw
    g : Fn
        Bounded function of the residual on ``[0, b]``.
    """
    g = as_fn(g)
    key = (id(law), g, float(t_max), float(dt))
    hit = _RF_CACHE.get(key)
    if hit is not None:
        return hit
    fine = _solve_grid(law, g, t_max, dt)
    coarse = _solve_grid(law, g, t_max, 2 * dt)
    k = min(coarse.size, (fine.size + 1) // 2)
    vals = (4.0 * fine[: 2 * k : 2][:k] - coarse[:k]) / 3.0
    grid = np.arange(k) * 2 * dt
    rf = RenewalFunction(grid, vals, eta_integral(law, g), name=f"h[{g.name}]")
    if len(_RF_CACHE) > 256:
        _RF_CACHE.clear()
    _RF_CACHE[key] = rf
    return rf


@dataclass
class ResidualMap:
    """``R(r) = E g(residual at 0)`` given a renewal epoch at ``r``.

    For ``r > 0`` it is ``g(r)``; for ``r <= 0`` the process has been
    running for ``-r`` units and the value is ``h_g(-r)``.
    """

    g: Fn
    h: RenewalFunction

    def __call__(self, r):
        r = np.asarray(r, float)
        return np.where(r > 0, self.g(np.clip(r, 0.0, None)), self.h(np.clip(-r, 0.0, None)))


def residual_map(law: WaitingLaw, g, t_max: float = 30.0, dt: float = 1e-3) -> ResidualMap:
    g = as_fn(g)
    return ResidualMap(g, renewal_function(law, g, t_max, dt))


# ---------------------------------------------------------------------------
# exponential convergence probe


@dataclass
class DecayRow:
    t: float
    estimate: float
    stderr: float
    used_in_fit: bool


@dataclass
class DecayReport:
    rows: list
    status: str
    slope: float = float("nan")
    intercept: float = float("nan")
    r2: float = float("nan")
    auto_centered: bool = False
    centering: float = 0.0
    estimator: str = "plain"
    replicas: int = 0
    message: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "estimate", "stderr", "used_in_fit"])
        for r in self.rows:
            w.writerow([f"{r.t:.17g}", f"{r.estimate:.17g}", f"{r.stderr:.17g}", int(r.used_in_fit)])
        return buf.getvalue()

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("rows")
        return d

    def to_json(self) -> str:
        return json.dumps({**self.summary(), "rows": [asdict(r) for r in self.rows]}, indent=2)


def conditional_residual_mean(law: WaitingLaw, g: Fn, age: np.ndarray) -> np.ndarray:
    """``E[g(W - u) | W > u]`` for ages ``u``: integrates out the final wait."""
    age = np.asarray(age, float)
    lo = np.maximum(age, law.a)
    cuts = age[:, None] + np.asarray(g.breaks, float)[None, :]
    num = piecewise_gl(lambda y: g(y - age[:, None]) * law.density(y), lo, np.full(age.size, law.b),
                       cuts=cuts, n=24)
    den = 1.0 - law.cdf(age)
    return num / den


def probe_point(law: WaitingLaw, g: Fn, t: float, n: int, rng: np.random.Generator,
                estimator: str = "plain", batch: int = 200_000):
    """Sum and sum of squares of one estimator of ``E g(B_t)`` over ``n`` replicas."""
    s1 = s2 = 0.0
    done = 0
    while done < n:
        m = min(batch, n - done)
        age, res = simulate_residuals(law, t, m, rng)
        if estimator == "plain":
            vals = g(res)
        elif estimator == "conditional":
            vals = conditional_residual_mean(law, g, age)
        else:
            raise ValueError(f"unknown estimator {estimator!r}")
        s1 += math.fsum(vals)
        s2 += math.fsum(vals * vals)
        done += m
    return s1, s2


def fit_decay(rows: list, sigmas: float = 3.0):
    """Least squares of ``log|estimate|`` on ``t`` over points beyond ``sigmas`` stderr."""
    for r in rows:
        r.used_in_fit = bool(abs(r.estimate) > sigmas * r.stderr and r.estimate != 0.0)
    used = [r for r in rows if r.used_in_fit]
    if len(used) < 2:
        return None
    t = np.array([r.t for r in used])
    y = np.log(np.abs([r.estimate for r in used]))
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def convergence_rate_probe(law: WaitingLaw, g, t_grid, replicas: int, rng: np.random.Generator,
                           estimator: str = "plain", sigmas: float = 3.0) -> DecayReport:
    """Estimate ``E g(B_t)`` on ``t_grid`` and fit its exponential decay.

    Parameters
    ----------
    g : Fn
        Residual-side test function; centered under eta automatically
        (flagged in the report) when ``|eta(g)| > 1e-8``.
    estimator : {"plain", "conditional", "exact"}
        ``plain`` averages ``g(B_t)``. ``conditional`` replaces it by its
        conditional mean given the age, which is unbiased with smaller
        variance. ``exact`` solves the renewal equation instead (no
        sampling; ``replicas`` and ``rng`` are ignored) and reports
        ``EXACT_TOL`` as the error bar.

    Returns
    -------
    DecayReport
        ``status`` is ``"ok"`` when at least two points clear the noise
        floor, else ``"noise_floor"``.
    """
    t_grid = [float(t) for t in t_grid]
    if len(t_grid) < 2:
        raise FitError("insufficient points: the t-grid needs at least two values")
    g = as_fn(g)
    shift = eta_integral(law, g)
    auto = abs(shift) > 1e-8
    if auto:
        g = g - shift
    if estimator == "exact":
        return exact_decay(law, g, t_grid, auto, shift if auto else 0.0, sigmas=sigmas)
    rows = []
    for t in t_grid:
        s1, s2 = probe_point(law, g, t, replicas, rng, estimator)
        mean = s1 / replicas
        var = max(s2 / replicas - mean * mean, 0.0) * replicas / max(replicas - 1, 1)
        rows.append(DecayRow(t, mean, math.sqrt(var / replicas), False))
    return finish_decay_report(rows, auto, shift if auto else 0.0, estimator, replicas, sigmas)


def finish_decay_report(rows, auto, shift, estimator, replicas, sigmas=3.0) -> DecayReport:
    fit = fit_decay(rows, sigmas)
    if fit is None:
        return DecayReport(rows, "noise_floor", auto_centered=auto, centering=shift, estimator=estimator,
                           replicas=replicas, message="decay below noise floor")
    slope, intercept, r2 = fit
    return DecayReport(rows, "ok", slope, intercept, r2, auto, shift, estimator, replicas)


EXACT_TOL = 5e-8  # bound on the discretisation error of renewal_function for bounded g


def exact_decay(law: WaitingLaw, g: Fn, t_grid, auto: bool = False, shift: float = 0.0,
                tol: float = EXACT_TOL, sigmas: float = 3.0) -> DecayReport:
    """Decay report from the renewal-equation solution ``h_g`` (g already centered)."""
    h = renewal_function(law, g, t_max=max(float(max(t_grid)) + 1.0, 2.0))
    rows = [DecayRow(float(t), float(h(np.array(float(t)))), tol, False) for t in t_grid]
    return finish_decay_report(rows, auto, shift, "exact", 0, sigmas)
