"""Independent reference values for rare-event probabilities.

* ``log_normal_tail``: accurate ``log P(N(0,1) >= t)``.
* ``oracle_radial``: chi quadrature for boundaries depending on ``|x|`` only.
* ``oracle_graph_mc`` / ``oracle_quadratic``: Monte Carlo over ``x`` with the
  normal direction integrated exactly (Rao-Blackwellized).
* ``oracle_low_d``: direct quadrature of ``int_D exp(-lam z)`` for ``d <= 2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import erfc, erfcx, gammaln, logsumexp

from .errors import OracleError
from .streams import map_chunks

LOG_TRUNC = 40.0
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class OracleResult:
    log_p: float
    abs_log_error_estimate: float
    method: str
    cost: int

    @property
    def p(self) -> float:
        return math.exp(self.log_p)

    def to_dict(self) -> dict:
        return {"log_p": self.log_p, "abs_log_error_estimate": self.abs_log_error_estimate,
                "method": self.method, "cost": self.cost}


def log_normal_tail(t):
    """``log P(N(0,1) >= t)``, accurate in the far tail (scaled erfc)."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t > 0
    tp = t[pos]
    out[pos] = np.log(0.5 * erfcx(tp / _SQRT2)) - 0.5 * tp * tp
    tn = t[~pos]
    out[~pos] = np.log1p(-0.5 * erfc(-tn / _SQRT2))
    return out if out.ndim else float(out)


def log_chi_density(r, d: int):
    """Log density of ``|X|`` for ``X ~ N(0, I_d)``."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        lr = np.log(r)
    base = -0.5 * r * r - (0.5 * d - 1.0) * math.log(2.0) - gammaln(0.5 * d)
    return base + (d - 1) * lr if d > 1 else base


def oracle_radial(phi: Callable[[float], float], d: int, lam: float, tol: float = 1e-10,
                  grid: int = 4001, limit: int = 400) -> OracleResult:
    """``log E[Phibar(sqrt(lam) + sqrt(lam) phi(|X|/sqrt(lam)))]``, ``X ~ N(0, I_d)``.

    ``phi`` maps the radius ``r`` to the boundary height ``psi``.  The
    integral over the chi density is done with adaptive quadrature on the
    window where the log integrand is within 40 nats of its maximum.
    """
    if d < 1 or not lam > 0:
        raise OracleError("need d >= 1 and lam > 0")
    sl = math.sqrt(lam)

    def logf(r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        h = np.array([phi(x / sl) for x in r], dtype=float)
        return log_chi_density(r, d) + log_normal_tail(sl + sl * h)

    rmax = math.sqrt(max(d - 1, 0)) + 12.0
    rs = np.linspace(0.0, rmax, grid)
    g = logf(rs)
    if not np.any(np.isfinite(g)):
        return OracleResult(-math.inf, 0.0, "radial-quadrature", grid)
    i = int(np.nanargmax(g))
    gmax = float(g[i])
    keep = np.nonzero(g > gmax - LOG_TRUNC - 5.0)[0]
    step = rs[1] - rs[0]
    lo = max(0.0, rs[keep[0]] - step)
    hi = min(rmax, rs[keep[-1]] + step)
    # polish the peak location for the breakpoint
    mode = rs[i]
    pts = [p for p in (mode,) if lo < p < hi]

    def f(r):
        return math.exp(float(logf(r)[0]) - gmax)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err, info = integrate.quad(f, lo, hi, points=pts or None, epsabs=0.0, epsrel=tol,
                                            limit=limit, full_output=1)[:3]
        except integrate.IntegrationWarning as exc:
            raise OracleError(f"radial quadrature did not converge: {exc}") from None
    if not val > 0:
        return OracleResult(-math.inf, 0.0, "radial-quadrature", grid + info["neval"])
    return OracleResult(gmax + math.log(val), err / val, "radial-quadrature", grid + info["neval"])


def oracle_graph_mc(psi: Callable[[np.ndarray], np.ndarray], d: int, lam: float, n: int = 10 ** 6,
                    seed: int = 0, threads: Optional[int] = None) -> OracleResult:
    """Rao-Blackwellized MC: ``log E[Phibar(sqrt(lam) + sqrt(lam) psi(X/sqrt(lam)))]``.

    ``psi`` is vectorized over rows of an ``(m, d)`` array.
    """
    if n < 1:
        raise OracleError("n must be positive")
    sl = math.sqrt(lam)

    def work(rng, size):
        x = rng.standard_normal((size, d))
        return log_normal_tail(sl + sl * np.asarray(psi(x / sl), dtype=float))

    logs = np.concatenate(map_chunks(work, n, seed, threads))
    return _log_mean(logs, "rb-mc")


def _log_mean(logs: np.ndarray, method: str) -> OracleResult:
    n = logs.size
    m = float(np.max(logs))
    w = np.exp(logs - m)
    mean = float(np.mean(w))
    if n > 1:
        se_rel = float(np.std(w, ddof=1)) / (math.sqrt(n) * mean)
    else:
        se_rel = math.inf
    return OracleResult(m + math.log(mean), se_rel, method, n)


def oracle_quadratic(B, d: Optional[int] = None, lam: float = 1.0, n: int = 10 ** 6, seed: int = 0,
                     threads: Optional[int] = None) -> OracleResult:
    """``log E[Phibar(sqrt(lam) + X^T B X / (2 sqrt(lam)))]`` by Rao-Blackwellized MC.

    ``X^T B X`` is evaluated in the eigenbasis of ``B`` (same distribution).
    """
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = np.diag(B)
    if d is None:
        d = B.shape[0]
    if B.shape != (d, d):
        raise OracleError("B does not match d")
    if n < 1000:
        raise OracleError("n must be at least 1000")
    b = np.linalg.eigvalsh(0.5 * (B + B.T))
    sl = math.sqrt(lam)
    if not np.any(b):
        return OracleResult(float(log_normal_tail(sl)), 0.0, "rb-mc", n)

    def work(rng, size):
        x = rng.standard_normal((size, d))
        return log_normal_tail(sl + (x * x) @ b / (2.0 * sl))

    logs = np.concatenate(map_chunks(work, n, seed, threads))
    return _log_mean(logs, "rb-mc")


def _graded_panels(lo: float, hi: float, h: float) -> np.ndarray:
    """Breakpoints ``lo, lo+h, lo+2h, lo+4h, ...`` capped at ``hi``."""
    pts = [lo]
    step = h
    while pts[-1] + step < hi:
        pts.append(pts[-1] + step)
        step *= 2.0
        if len(pts) > 200:
            break
    pts.append(hi)
    return np.array(pts)


def _gl_on(breaks: np.ndarray, nodes: np.ndarray, weights: np.ndarray):
    a, b = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (b - a)
    return (half * nodes + 0.5 * (a + b)).ravel(), (half * weights).ravel()


def oracle_low_d(z: Callable, in_D: Callable, d: int, lam: float, box: Sequence[Sequence[float]],
                 tol: float = 1e-9, order: int = 10, base_panels: int = 8, max_level: int = 7,
                 t_grid: int = 257) -> OracleResult:
    """``log int_D exp(-lam z(x, t)) dx dt`` by nested Gauss-Legendre for ``d in {1, 2}``.

    ``z(x, t)`` and ``in_D(x, t)`` are vectorized: ``x`` has shape
    ``(m, d)`` and ``t`` shape ``(m,)``.  ``box`` lists ``(lo, hi)`` for the
    ``d`` tangential coordinates and then for ``t``.  Along each ``t``-line,
    membership transitions are located by bisection and every in-set
    interval is integrated with panels graded towards its lower end.  The
    resolution doubles until successive log values differ by less than
    ``tol``; that difference is the reported error estimate.
    """
    if d not in (1, 2):
        raise OracleError("oracle_low_d supports d = 1 or 2")
    box = [tuple(map(float, b)) for b in box]
    if len(box) != d + 1:
        raise OracleError("box must have d + 1 intervals")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    tlo, thi = box[-1]
    prev, cost = None, 0
    for level in range(max_level):
        npan = base_panels * 2 ** level
        axes = [_gl_on(np.linspace(lo, hi, npan + 1), nodes, weights) for lo, hi in box[:-1]]
        if d == 1:
            xs = axes[0][0][:, None]
            wx = axes[0][1]
        else:
            g0, g1 = np.meshgrid(axes[0][0], axes[1][0], indexing="ij")
            xs = np.column_stack([g0.ravel(), g1.ravel()])
            wx = np.outer(axes[0][1], axes[1][1]).ravel()
        logval, c = _integrate_lines(z, in_D, xs, wx, lam, tlo, thi, nodes, weights,
                                     t_grid * 2 ** min(level, 3), 2.0 ** -level / (4.0 * lam))
        cost += c
        if prev is not None:
            if logval == -math.inf and prev == -math.inf:
                return OracleResult(-math.inf, 0.0, "low-d-quadrature", cost)
            diff = abs(logval - prev)
            if diff < tol:
                return OracleResult(logval, diff, "low-d-quadrature", cost)
        prev = logval
    raise OracleError(f"low-d quadrature did not converge within {max_level} refinements")


def _integrate_lines(z, in_D, xs, wx, lam, tlo, thi, nodes, weights, m, h):
    nx = xs.shape[0]
    tg = np.linspace(tlo, thi, m)
    X = np.repeat(xs, m, axis=0)
    T = np.tile(tg, nx)
    inside = np.asarray(in_D(X, T), dtype=bool).reshape(nx, m)
    cost = nx * m
    terms = []
    for i in range(nx):
        row = inside[i]
        if not row.any():
            continue
        changes = np.nonzero(row[1:] != row[:-1])[0]
        edges = [_bisect(in_D, xs[i], tg[j], tg[j + 1], row[j]) for j in changes]
        cost += 60 * len(changes)
        bounds = [tlo] + edges + [thi]
        state = row[0]
        for a, b in zip(bounds[:-1], bounds[1:]):
            if state and b > a:
                pts, pw = _gl_on(_graded_panels(a, b, h), nodes, weights)
                zz = np.asarray(z(np.repeat(xs[i][None, :], pts.size, axis=0), pts), dtype=float)
                cost += pts.size
                terms.append(np.log(wx[i]) + np.log(pw) - lam * zz)
            state = not state
    if not terms:
        return -math.inf, cost
    return float(logsumexp(np.concatenate(terms))), cost


def _bisect(in_D, x, a, b, state_a, iters=60):
    xa = x[None, :]
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if bool(np.asarray(in_D(xa, np.array([mid])))[0]) == state_a:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)
