"""Standard Gaussian rare-event probabilities ``P(N(0, I_{d+1}) in sqrt(lam) D + (0_d, sqrt(lam)))``.

The template set ``D`` is ``{t >= psi(x)}`` near the origin with
``psi(0) = 0`` and ``grad psi(0) = 0``; only derivatives of ``psi`` at the
origin (and optional sup-bounds on balls) enter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConditionFailure, ExpansionRegimeError, ProblemError, RareTailError
from .expansion import (ExpansionResult, a1_gauss, first_order_log, gauss_rem1_rate,
                        quadratic_rem1_rate)
from .problem import PsiSupBounds, R_gauss, check_conditions_gauss
from .symtensor import HMetric, as_symmetric, h_opnorm, sym_outer

KINDS = ("flat", "quadratic", "quartic", "general")


@dataclass(frozen=True, eq=False)
class GaussBoundarySpec:
    """Boundary of the template set together with ``d`` and ``lam``.

    Use the constructors :meth:`flat`, :meth:`quadratic`, :meth:`quartic`,
    :meth:`radial_quartic` and :meth:`general`.
    """

    kind: str
    d: int
    lam: float
    psi2: np.ndarray
    psi3: Optional[np.ndarray]
    psi4: Optional[np.ndarray]
    bounds: PsiSupBounds

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ProblemError(f"unknown boundary kind {self.kind!r}")
        if self.d < 1:
            raise ProblemError("d must be positive")
        if not self.lam > 0:
            raise ProblemError("lambda must be positive")
        # raises NotPositiveDefiniteError when I + psi2 is not PD
        object.__setattr__(self, "_metric", HMetric.from_matrix(np.eye(self.d) + self.psi2))

    @property
    def metric(self) -> HMetric:
        return self._metric

    @property
    def is_quadratic(self) -> bool:
        """True when psi is (locally) exactly quadratic."""
        r = R_gauss(self.d, self.lam) * math.sqrt(self.d / self.lam)
        no3 = self.psi3 is None or not np.any(self.psi3)
        no4 = self.psi4 is None or not np.any(self.psi4)
        return no3 and no4 and self.bounds.delta3(r) == 0 and self.bounds.delta4(r) == 0

    @classmethod
    def flat(cls, d: int, lam: float) -> "GaussBoundarySpec":
        return cls("flat", d, float(lam), np.zeros((d, d)), None, None, PsiSupBounds.flat())

    @classmethod
    def quadratic(cls, B, lam: float, rho0: Optional[float] = None) -> "GaussBoundarySpec":
        """``psi(x) = x^T B x / 2``.  ``B`` may be given as a matrix or an eigenvalue list."""
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = np.diag(B)
        d = B.shape[0]
        B = as_symmetric(B, 2, d, "B")
        metric = HMetric.from_matrix(np.eye(d) + B)
        delta2 = h_opnorm(B, metric).value
        return cls("quadratic", d, float(lam), B, None, None, PsiSupBounds.quadratic(delta2, rho0))

    @classmethod
    def quartic(cls, S, lam: float, s_norm: Optional[float] = None,
                rho0: Optional[float] = None) -> "GaussBoundarySpec":
        """``psi(x) = <S, x^(x)4> / 24``; ``s_norm`` defaults to the power-iteration estimate of ``|S|``."""
        S = np.asarray(S, dtype=float)
        d = S.shape[0]
        S = as_symmetric(S, 4, d, "S")
        if s_norm is None:
            s_norm = h_opnorm(S).value
        return cls("quartic", d, float(lam), np.zeros((d, d)), None, S, PsiSupBounds.quartic(s_norm, rho0))

    @classmethod
    def radial_quartic(cls, d: int, lam: float, scale: float = 1.0,
                       rho0: Optional[float] = None) -> "GaussBoundarySpec":
        """``psi(x) = scale |x|^4 / 24``, i.e. ``S = scale Sym(I (x) I)`` with ``|S| = |scale|``."""
        return cls.quartic(scale * sym_outer(np.eye(d)), lam, s_norm=abs(scale), rho0=rho0)

    @classmethod
    def general(cls, psi2, psi3=None, psi4=None, bounds: Optional[PsiSupBounds] = None, *,
                lam: float, rho0: Optional[float] = None) -> "GaussBoundarySpec":
        """Arbitrary boundary given by its derivatives at 0.

        Without ``bounds``, constant sup-bounds from the tensors at zero are
        used, which is exact only when psi is a polynomial of degree <= 2
        (with ``psi4`` only, it is exact for the fourth derivative).
        """
        psi2 = np.asarray(psi2, dtype=float)
        d = psi2.shape[0]
        psi2 = as_symmetric(psi2, 2, d, "psi2")
        psi3 = None if psi3 is None else as_symmetric(psi3, 3, d, "psi3")
        psi4 = None if psi4 is None else as_symmetric(psi4, 4, d, "psi4")
        if bounds is None:
            metric = HMetric.from_matrix(np.eye(d) + psi2)
            n2 = h_opnorm(psi2, metric).value
            n3 = 0.0 if psi3 is None else h_opnorm(psi3, metric).value
            n4 = 0.0 if psi4 is None else h_opnorm(psi4, metric).value
            if n3 == 0 and n4 == 0:
                bounds = PsiSupBounds.quadratic(n2, rho0)
            else:
                bounds = PsiSupBounds(n2, n3, n4, math.inf if rho0 is None else rho0)
        return cls("general", d, float(lam), psi2, psi3, psi4, bounds)

    def with_lambda(self, lam: float) -> "GaussBoundarySpec":
        return GaussBoundarySpec(self.kind, self.d, float(lam), self.psi2, self.psi3, self.psi4, self.bounds)


def gauss_log_leading(lam: float, metric: HMetric) -> float:
    """``-lam/2 - log(2 pi lam)/2 - log(det H)/2``."""
    return -0.5 * lam - 0.5 * math.log(2.0 * math.pi * lam) - 0.5 * metric.log_det


def gauss_prob(spec: GaussBoundarySpec, order: int = 1, *, strict: bool = False,
               c_psi: float = 1.0) -> ExpansionResult:
    """Asymptotic approximation of the Gaussian rare-event probability.

    Conditions are always evaluated and attached; with ``strict=True`` a
    failed condition raises :class:`ConditionFailure`.  At order 1 a
    nonpositive factor ``1 + a1 d^2/lam`` raises :class:`ExpansionRegimeError`.
    """
    if order not in (0, 1):
        raise RareTailError("order must be 0 or 1")
    d, lam = spec.d, spec.lam
    lead = gauss_log_leading(lam, spec.metric)
    d2a1 = a1_gauss(spec.psi2, spec.psi3, spec.psi4)
    report = check_conditions_gauss(spec.bounds, d, lam, c_psi)
    if strict and not report.overall:
        raise ConditionFailure("validity conditions failed: " + ", ".join(report.failed), report)
    b = spec.bounds
    if spec.is_quadratic:
        rate = quadratic_rem1_rate(b.delta2(0.0), d, lam)
    else:
        re = report.R_used * math.sqrt(d / lam)
        rate = gauss_rem1_rate(b.delta2(0.0), b.delta3(0.0), b.delta4(re), d, lam)
    lfo = first_order_log(lead, d2a1, lam)
    if order == 1 and lfo is None:
        raise ExpansionRegimeError(f"1 + a1 d^2/lam = {1 + d2a1 / lam:.4g} is not positive")
    return ExpansionResult(lead, d2a1 / (d * d), d2a1, rate, order, d, lam, report, lfo)


@dataclass(frozen=True)
class TightBoundDemo:
    d: int
    lam: float
    a1: float
    d2a1: float
    lower_const_check: bool


def tight_bound_demo(d: int, lam: float = 1.0) -> TightBoundDemo:
    """For ``B = I``: ``d^2 a1 = -(d^2/32 + 5d/16 + 1)``, so ``|a1| >= 1/32``."""
    if d < 1:
        raise ProblemError("d must be positive")
    d2a1 = a1_gauss(np.eye(d))
    return TightBoundDemo(d, float(lam), d2a1 / d ** 2, d2a1, abs(d2a1) >= d * d / 32.0)
