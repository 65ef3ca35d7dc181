"""Univariate truncated jets and the explicit-remainder Watson lemma.

A jet stores derivatives at a point, ``derivs[j] = f^{(j)}(0)``
(derivative convention; the Taylor coefficient is ``derivs[j] / j!``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import minimize_scalar
from scipy.special import comb

from .errors import JetError


@dataclass(frozen=True, eq=False)
class Jet:
    derivs: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.derivs, dtype=float)).copy()
        if a.ndim != 1 or a.size == 0:
            raise JetError("a jet needs a non-empty 1-D array of derivatives")
        a.setflags(write=False)
        object.__setattr__(self, "derivs", a)

    @property
    def order(self) -> int:
        return self.derivs.size - 1

    @classmethod
    def constant(cls, c: float, order: int) -> "Jet":
        a = np.zeros(order + 1)
        a[0] = c
        return cls(a)

    @classmethod
    def variable(cls, order: int, at: float = 0.0) -> "Jet":
        a = np.zeros(order + 1)
        a[0] = at
        if order >= 1:
            a[1] = 1.0
        return cls(a)

    @classmethod
    def from_taylor(cls, coeffs) -> "Jet":
        c = np.asarray(coeffs, dtype=float)
        return cls(c * _factorials(c.size))

    @classmethod
    def from_polynomial(cls, coeffs, at: float, order: int) -> "Jet":
        """Jet at ``at`` of the polynomial ``sum_j coeffs[j] t^j``."""
        c = np.asarray(coeffs, dtype=float)
        out = np.zeros(order + 1)
        for j in range(order + 1):
            out[j] = P.polyval(at, c)
            c = P.polyder(c) if c.size > 1 else np.zeros(1)
        return cls(out)

    def taylor(self) -> np.ndarray:
        return self.derivs / _factorials(self.derivs.size)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise JetError(f"cannot raise jet order from {self.order} to {order}")
        return Jet(self.derivs[: order + 1])

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.constant(float(other), self.order)

    def __add__(self, other):
        o = self._coerce(other)
        m = min(self.order, o.order)
        return Jet(self.derivs[: m + 1] + o.derivs[: m + 1])

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.derivs)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.derivs * float(other))
        return jet_mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.derivs / float(other))
        return jet_mul(self, jet_recip(other))

    def __rtruediv__(self, other):
        return jet_mul(self._coerce(other), jet_recip(self))

    def __repr__(self) -> str:
        return f"Jet({np.array2string(self.derivs, precision=6)})"


def _factorials(n: int) -> np.ndarray:
    return np.array([math.factorial(j) for j in range(n)], dtype=float)


def _binom_row(n: int) -> np.ndarray:
    return comb(n, np.arange(n + 1), exact=False)


def jet_mul(a: Jet, b: Jet) -> Jet:
    """Leibniz product ``(ab)^(n) = sum_k C(n,k) a^(k) b^(n-k)``."""
    m = min(a.order, b.order)
    x, y = a.derivs, b.derivs
    out = np.empty(m + 1)
    for n in range(m + 1):
        out[n] = np.dot(_binom_row(n), x[: n + 1] * y[n::-1])
    return Jet(out)


def jet_recip(a: Jet) -> Jet:
    """Reciprocal jet by solving ``a r = 1`` order by order."""
    a0 = a.derivs[0]
    if a0 == 0.0:
        raise JetError("reciprocal of a jet with zero constant term")
    x = a.derivs
    r = np.empty_like(x)
    r[0] = 1.0 / a0
    for n in range(1, x.size):
        c = _binom_row(n)[1:]
        r[n] = -np.dot(c, x[1 : n + 1] * r[n - 1 :: -1]) / a0
    return Jet(r)


def jet_deriv(a: Jet) -> Jet:
    """Derivative; the order drops by one."""
    if a.order == 0:
        raise JetError("cannot differentiate an order-0 jet")
    return Jet(a.derivs[1:])


def dh_iterates(f: Jet, h: Jet, n: int) -> np.ndarray:
    """Values ``(D_h^j f)(0)`` for ``j = 0..n`` with ``D_h g = (g / h')'``."""
    if f.order < n or h.order < n + 1:
        raise JetError(f"need f of order >= {n} and h of order >= {n + 1}")
    hp = jet_deriv(h)
    if hp.derivs[0] == 0.0:
        raise JetError("h'(0) must be nonzero")
    inv = jet_recip(hp)
    g = f
    out = [g.derivs[0]]
    for _ in range(n):
        g = jet_deriv(jet_mul(g, inv))
        out.append(g.derivs[0])
    return np.array(out)


def watson_coeffs(q: Jet, w: Jet, K: int) -> np.ndarray:
    """``c_k = (D_w^{k-1} q)(0) / w'(0)`` for ``k = 1..K``."""
    if K < 1:
        raise JetError("K must be positive")
    if q.order < K - 1 or w.order < K:
        raise JetError(f"need q of order >= {K - 1} and w of order >= {K}")
    wy = w.derivs[1]
    if not wy > 0:
        raise JetError("the y-derivative of w at 0 must be positive")
    return dh_iterates(q, w, K - 1) / wy


@dataclass(frozen=True)
class WatsonBoundInputs:
    """Data for the explicit remainder of the 1-D Watson expansion.

    Attributes
    ----------
    b : float
        Lower bound on ``h'`` over ``[0, T]``.
    T : float
    lam : float
    sup_DhL_f : float
        ``sup |D_h^{L-1} f|`` over ``[0, T]``.
    boundary_vals : tuple of float
        ``|(D_h^{k-1} f)(T)|`` for ``k = 1..L-1``.
    """

    b: float
    T: float
    lam: float
    sup_DhL_f: float
    boundary_vals: tuple = ()

    def __post_init__(self):
        if not (self.b > 0 and self.T > 0 and self.lam > 0):
            raise JetError("b, T and lambda must be positive")
        if self.sup_DhL_f < 0:
            raise JetError("sup_DhL_f must be nonnegative")
        object.__setattr__(self, "boundary_vals", tuple(abs(float(v)) for v in self.boundary_vals))


def watson_remainder_bound(inp: WatsonBoundInputs, L: int) -> float:
    """``b^-1 sup|D_h^{L-1} f| lam^-L + b^-1 e^{-lam b T} sum_k lam^-k |D_h^{k-1} f(T)|``."""
    if L < 1:
        raise JetError("L must be positive")
    if len(inp.boundary_vals) < L - 1:
        raise JetError(f"need {L - 1} boundary values, got {len(inp.boundary_vals)}")
    lam, b = inp.lam, inp.b
    tail = sum(lam ** -(k + 1) * v for k, v in enumerate(inp.boundary_vals[: L - 1]))
    return inp.sup_DhL_f * lam ** -L / b + math.exp(-lam * b * inp.T) * tail / b


def watson_expand_1d(f: Jet, h: Jet, inp: WatsonBoundInputs, L: int) -> tuple[float, float]:
    """Partial Watson sum of ``int_0^T f e^{-lam h}`` and its remainder bound."""
    if h.order < 1:
        raise JetError("h must have order >= 1")
    if h.derivs[0] != 0.0:
        raise JetError("h(0) must vanish")
    if not h.derivs[1] > 0:
        raise JetError("h'(0) must be positive")
    lam = inp.lam
    value = 0.0
    if L >= 2:
        c = watson_coeffs(f, h, L - 1)
        value = float(sum(ck * lam ** -(k + 1) for k, ck in enumerate(c)))
    return value, watson_remainder_bound(inp, L)


def dh_polynomial(f_coeffs, h_coeffs, j: int):
    """``D_h^j f`` for polynomials as ``(N_j, 2j)`` with ``D_h^j f = N_j / h'^{2j}``.

    Uses ``N_{j+1} = N_j' h' - (2j + 1) N_j h''`` (coefficients low to high).
    """
    hp = P.polyder(np.asarray(h_coeffs, dtype=float))
    hpp = P.polyder(hp) if hp.size > 1 else np.zeros(1)
    N = np.asarray(f_coeffs, dtype=float)
    for k in range(j):
        dN = P.polyder(N) if N.size > 1 else np.zeros(1)
        N = P.polysub(P.polymul(dN, hp), (2 * k + 1) * P.polymul(N, hpp))
    return N, 2 * j


def polynomial_bound_inputs(f_coeffs, h_coeffs, T: float, lam: float, L: int,
                            grid: int = 4001) -> WatsonBoundInputs:
    """Evaluate the Watson bound inputs for polynomial ``f`` and ``h``.

    ``b`` is the exact minimum of ``h'`` on ``[0, T]``.  The sup of
    ``|D_h^{L-1} f|`` is located on a grid and polished with a bounded
    scalar search around the best grid point.
    """
    hc = np.asarray(h_coeffs, dtype=float)
    hp = P.polyder(hc)
    cand = [0.0, T] + [r.real for r in P.polyroots(P.polyder(hp)) if abs(r.imag) < 1e-12
                       and 0.0 <= r.real <= T] if hp.size > 1 else [0.0, T]
    b = float(min(P.polyval(c, hp) for c in cand))
    if not b > 0:
        raise JetError("h' is not bounded below by a positive constant on [0, T]")

    def dh(t, j):
        N, k = dh_polynomial(f_coeffs, hc, j)
        return P.polyval(t, N) / P.polyval(t, hp) ** k

    ts = np.linspace(0.0, T, grid)
    vals = np.abs(dh(ts, L - 1))
    i = int(np.argmax(vals))
    sup = float(vals[i])
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, grid - 1)]
    if hi > lo:
        res = minimize_scalar(lambda t: -abs(dh(t, L - 1)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        sup = max(sup, float(-res.fun))
    bvals = tuple(abs(float(dh(T, k))) for k in range(L - 1))
    return WatsonBoundInputs(b=b, T=T, lam=lam, sup_DhL_f=sup, boundary_vals=bvals)
