"""First-order asymptotic expansion of boundary-minimum Laplace integrals.

For the canonical problem

    int_D exp(-lam z) = (2 pi / lam)^{d/2} exp(-lam z(0)) / (lam sqrt(det H)) * (1 + a1 d^2/lam + Rem)

this module evaluates the leading term (in log space), the coefficient
``d^2 a1`` and remainder rates.  Remainder quantities are *rates*: the
suppressed constants are set to one, so they indicate scaling only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .errors import (ConditionFailure, DimensionError, ExpansionRegimeError, MissingBoundsError,
                     NotPositiveDefiniteError, RareTailError)
from .jets import Jet, watson_coeffs
from .problem import ConditionReport, Constants, DerivBounds, NormalizedProblem, check_conditions
from .symtensor import HMetric, as_symmetric, contract_identity3, contract_identity4, whiten

RATE_CAVEAT = "rate with unit constant; the true bound has an unknown multiplicative constant"


@dataclass(frozen=True)
class ExpansionResult:
    """Outcome of a first-order expansion.

    ``log_value`` is the log of the approximation at the requested order.
    ``log_value_first_order`` is ``None`` when ``1 + a1 d^2/lam <= 0``.
    """

    log_leading: float
    a1: float
    d2a1: float
    rem1_rate: float
    order: int
    d: int
    lam: float
    conditions: Optional[ConditionReport] = None
    log_value_first_order: Optional[float] = None
    c1: float = 1.0
    rate_caveat: str = RATE_CAVEAT

    @property
    def correction_factor(self) -> float:
        return 1.0 + self.d2a1 / (self.c1 * self.lam)

    @property
    def log_value(self) -> float:
        if self.order == 0:
            return self.log_leading + math.log(self.c1)
        if self.log_value_first_order is None:
            raise ExpansionRegimeError("first-order factor is not positive")
        return self.log_value_first_order

    def to_dict(self) -> dict:
        return {
            "log_leading": self.log_leading,
            "log_prob": self.log_value,
            "log_value_first_order": self.log_value_first_order,
            "a1": self.a1,
            "d2a1": self.d2a1,
            "rem1_rate": self.rem1_rate,
            "rate_caveat": self.rate_caveat,
            "order": self.order,
            "c1": self.c1,
            "d": self.d,
            "lambda": self.lam,
            "conditions": None if self.conditions is None else self.conditions.to_dict(),
        }


def log_leading_term(d: int, lam: float, z0: float, metric: HMetric) -> float:
    """``log[(2 pi/lam)^{d/2} e^{-lam z0} / (lam sqrt(det H))]``."""
    return 0.5 * d * math.log(2.0 * math.pi / lam) - lam * z0 - math.log(lam) - 0.5 * metric.log_det


def nu1(f0: float, f_grad_w, f_hess_w, v3, v4) -> float:
    """First Laplace correction for a prefactor ``f`` against ``exp(-lam v)``, whitened inputs.

    ``1/2 <f_xx, I> - 1/2 <v3, f_x (x) I> + f0 (|v3|_F^2/12 + |<v3, I>|^2/8 - <v4, I (x) I>/8)``.
    """
    g = np.asarray(f_grad_w, dtype=float)
    hm = np.asarray(f_hess_w, dtype=float)
    v3 = np.asarray(v3, dtype=float)
    v4 = np.asarray(v4, dtype=float)
    d = g.size
    if hm.shape != (d, d) or v3.shape != (d,) * 3 or v4.shape != (d,) * 4:
        raise DimensionError("nu1 inputs have inconsistent dimensions")
    t3 = contract_identity3(v3)
    return float(
        0.5 * np.trace(hm)
        - 0.5 * g @ t3
        + f0 * (np.sum(v3 * v3) / 12.0 + t3 @ t3 / 8.0 - contract_identity4(v4) / 8.0)
    )


def _need_w(prob: NormalizedProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    missing = [n for n in ("w_xxy", "w_xxx", "w_xxxx") if getattr(prob, n) is None]
    if missing:
        raise MissingBoundsError("problem lacks w-derivatives: " + ", ".join(missing))
    return prob.w_xxy, prob.w_xxx, prob.w_xxxx


def _cubic_quartic_block(v3: np.ndarray, v4: np.ndarray) -> float:
    t3 = contract_identity3(v3)
    return float(np.sum(v3 * v3) / 12.0 + t3 @ t3 / 8.0 - contract_identity4(v4) / 8.0)


def a1_general(prob: NormalizedProblem) -> float:
    """``d^2 a1`` for a general observable ``q`` (eight-term formula)."""
    if prob.q_data is None:
        raise MissingBoundsError("a1_general needs q_data")
    w_xxy, w_xxx, w_xxxx = _need_w(prob)
    qd, m = prob.q_data, prob.metric
    hinv = m.inverse_matrix
    q0, qx, qy, qxx = qd.q0, np.asarray(qd.q_x, float), qd.q_y, np.asarray(qd.q_xx, float)
    wxy = np.asarray(prob.w_xy, float)
    v3, v4 = whiten(w_xxx, m), whiten(w_xxxx, m)
    t3 = contract_identity3(v3)
    return float(
        qy - q0 * prob.w_yy
        + 0.5 * np.sum(qxx * hinv)
        - 0.5 * q0 * np.sum(w_xxy * hinv)
        - wxy @ hinv @ qx
        + q0 * wxy @ hinv @ wxy
        - 0.5 * t3 @ (m.inv_root @ (qx - q0 * wxy))
        + q0 * _cubic_quartic_block(v3, v4)
    )


def a1_const_g(prob: NormalizedProblem) -> float:
    """``d^2 a1`` when the observable is identically one."""
    w_xxy, w_xxx, w_xxxx = _need_w(prob)
    m = prob.metric
    hinv = m.inverse_matrix
    wxy = np.asarray(prob.w_xy, float)
    v3, v4 = whiten(w_xxx, m), whiten(w_xxxx, m)
    t3 = contract_identity3(v3)
    return float(
        -prob.w_yy
        - 0.5 * np.sum(w_xxy * hinv)
        + wxy @ hinv @ wxy
        + 0.5 * t3 @ (m.inv_root @ wxy)
        + _cubic_quartic_block(v3, v4)
    )


def a1_gauss(psi2, psi3=None, psi4=None) -> float:
    """``d^2 a1`` for a standard Gaussian event with boundary derivatives ``psi2, psi3, psi4`` at 0."""
    psi2 = np.asarray(psi2, dtype=float)
    d = psi2.shape[0]
    psi2 = as_symmetric(psi2, 2, d, "psi2")
    metric = HMetric.from_matrix(np.eye(d) + psi2)
    b = whiten(psi2, metric)
    out = -1.0 - 0.5 * np.trace(b) - np.trace(b) ** 2 / 8.0 - np.sum(b * b) / 4.0
    if psi3 is not None:
        p3 = whiten(as_symmetric(psi3, 3, d, "psi3"), metric)
        t3 = contract_identity3(p3)
        out += np.sum(p3 * p3) / 12.0 + t3 @ t3 / 8.0
    if psi4 is not None:
        out -= contract_identity4(whiten(as_symmetric(psi4, 4, d, "psi4"), metric)) / 8.0
    return float(out)


def a1_quadratic(eigenvalues) -> float:
    """Closed form of ``d^2 a1`` for ``psi(x) = x^T B x / 2`` from the eigenvalues of ``B``."""
    b = np.asarray(eigenvalues, dtype=float)
    if np.any(1.0 + b <= 0):
        raise NotPositiveDefiniteError("I + B is not positive definite")
    r = b / (1.0 + b)
    s = float(np.sum(r))
    return -1.0 - 0.5 * s - s * s / 8.0 - float(np.sum(r * r)) / 4.0


def q_derivatives(prob: NormalizedProblem):
    """``q1(0), grad q1(0), hess q1(0), q2(0)`` from the local q and w data."""
    if prob.q_data is None:
        raise MissingBoundsError("q_data is required")
    if prob.w_xxy is None:
        raise MissingBoundsError("problem lacks w_xxy")
    qd = prob.q_data
    q0 = qd.q0
    wxy = np.asarray(prob.w_xy, float)
    qx = np.asarray(qd.q_x, float)
    c = watson_coeffs(Jet([q0, qd.q_y]), Jet([0.0, 1.0, prob.w_yy]), 2)
    grad = qx - q0 * wxy
    hess = (np.asarray(qd.q_xx, float) - q0 * np.asarray(prob.w_xxy, float)
            - np.outer(qx, wxy) - np.outer(wxy, qx) + 2.0 * q0 * np.outer(wxy, wxy))
    return float(c[0]), grad, hess, float(c[1])


def assemble_c(nu_values: Mapping, m: int) -> float:
    """``c_m = sum_{k=1}^m nu_{m-k}(q_k)`` from a mapping ``(j, k) -> nu_j(q_k)``.

    Only ``m <= 2`` is supported.
    """
    if m < 1:
        raise RareTailError("m must be at least 1")
    if m > 2:
        raise RareTailError("coefficients beyond c_2 need nu_j for j >= 2, which are not available")
    try:
        return float(sum(nu_values[(m - k, k)] for k in range(1, m + 1)))
    except KeyError as exc:
        raise MissingBoundsError(f"missing nu value {exc.args[0]}") from None


def first_order_coefficients(prob: NormalizedProblem) -> tuple[float, float]:
    """``(c_1, c_2)`` via ``nu_0(q_1)``, ``nu_0(q_2)`` and ``nu_1(q_1)``; ``c_2 = d^2 a1``."""
    _, w_xxx, w_xxxx = _need_w(prob)
    q1, g, h, q2 = q_derivatives(prob)
    m = prob.metric
    nus = {
        (0, 1): q1,
        (0, 2): q2,
        (1, 1): nu1(q1, m.inv_root @ g, m.inv_root @ h @ m.inv_root, whiten(w_xxx, m), whiten(w_xxxx, m)),
    }
    return assemble_c(nus, 1), assemble_c(nus, 2)


def rem1_rate(db: DerivBounds, d: int, lam: float, M: int = 1) -> float:
    """``(w30^2 + w40) d^2/lam + (w11^2 + w21) d/lam + w02/lam + lam^-M`` (unit constant)."""
    db.require("omega_30", "omega_40_R", "omega_11", "omega_21_R", "omega_02_box")
    return float(
        (db.omega_30 ** 2 + db.omega_40_R) * d * d / lam
        + (db.omega_11 ** 2 + db.omega_21_R) * d / lam
        + db.omega_02_box / lam
        + lam ** (-M)
    )


def gauss_rem1_rate(delta2: float, delta3: float, delta4_R: float, d: int, lam: float) -> float:
    """``(delta2^2 + delta3^2 + delta4(R eps)) d^2/lam + 1/lam`` (unit constant)."""
    return float((delta2 ** 2 + delta3 ** 2 + delta4_R) * d * d / lam + 1.0 / lam)


def quadratic_rem1_rate(delta2: float, d: int, lam: float) -> float:
    """``max(delta2 d, 1)^2 / lam`` for a quadratic boundary (unit constant)."""
    return float(max(delta2 * d, 1.0) ** 2 / lam)


def first_order_log(log_leading: float, d2a1: float, lam: float, c1: float = 1.0) -> Optional[float]:
    """``log_leading + log(c1 + d2a1/lam)``, or ``None`` if the factor is not positive."""
    if c1 == 1.0:
        corr = d2a1 / lam
        return log_leading + math.log1p(corr) if 1.0 + corr > 0 else None
    f = c1 + d2a1 / lam
    return log_leading + math.log(f) if f > 0 else None


def expand(prob: NormalizedProblem, db: Optional[DerivBounds] = None, *, order: int = 1, M: int = 1,
           constants: Constants = Constants(), strict: bool = False) -> ExpansionResult:
    """First-order expansion of ``int_D g exp(-lam z)`` for a canonical problem.

    Uses ``a1_general`` when ``q_data`` is present and ``a1_const_g``
    otherwise.  With bounds, conditions and the remainder rate are attached;
    ``strict`` turns failed conditions into :class:`ConditionFailure`.
    """
    if order not in (0, 1):
        raise RareTailError("order must be 0 or 1")
    d, lam = prob.d, prob.lam
    lead = log_leading_term(d, lam, prob.z0, prob.metric)
    c1 = 1.0
    if prob.q_data is not None:
        c1 = float(prob.q_data.q0)
        if not c1 > 0:
            raise RareTailError("log-space expansion needs q(0) > 0")
        d2a1 = a1_general(prob)
    else:
        d2a1 = a1_const_g(prob)
    report, rate = None, math.nan
    if db is not None:
        report = check_conditions(prob, db, M, constants)
        rate = rem1_rate(db, d, lam, M)
        if strict and not report.overall:
            raise ConditionFailure("validity conditions failed: " + ", ".join(report.failed), report)
    lfo = first_order_log(lead, d2a1, lam, c1)
    if order == 1 and lfo is None:
        raise ExpansionRegimeError(f"first-order factor {c1 + d2a1 / lam:.4g} is not positive")
    return ExpansionResult(lead, d2a1 / (d * d), d2a1, rate, order, d, lam, report, lfo, c1)
