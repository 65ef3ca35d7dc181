"""Rare-event problems in the canonical frame, derivative bounds and validity checks.

In the canonical frame the instanton is the origin of ``R^{d+1} = R^d x R``,
``grad z(0) = (0_d, 1)``, the event is locally ``{t >= psi(x)}`` and
``w(x, y) = z(x, psi(x) + y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, MissingBoundsError, ProblemError
from .symtensor import HMetric, as_symmetric, h_opnorm, sym_outer

KKT_ANGLE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class QData:
    """Local derivatives of the observable ``q(x, y) = g(x, psi(x) + y)`` at 0."""

    q0: float
    q_x: np.ndarray
    q_y: float
    q_xx: np.ndarray

    @classmethod
    def constant(cls, d: int, value: float = 1.0) -> "QData":
        return cls(float(value), np.zeros(d), 0.0, np.zeros((d, d)))


@dataclass(frozen=True, eq=False)
class GeneralProblem:
    """``int_{F >= F0} exp(-lambda_bar zbar(u)) du`` described at its instanton ``u_star``."""

    u_star: np.ndarray
    lambda_bar: float
    grad_zbar: np.ndarray
    hess_zbar: np.ndarray
    grad_F: np.ndarray
    hess_F: np.ndarray
    F0: float = 0.0
    zbar0: float = 0.0

    @property
    def dim_total(self) -> int:
        return int(np.asarray(self.u_star).size)


@dataclass(frozen=True, eq=False)
class NormalizedProblem:
    """Local data of a canonical-frame problem.

    ``w_xxy``, ``w_xxx`` and ``w_xxxx`` may be ``None`` when only second
    order information is known; formulas that need them then refuse to run.
    """

    d: int
    lam: float
    metric: HMetric
    z0: float
    psi2: np.ndarray
    w_yy: float
    w_xy: np.ndarray
    w_xxy: Optional[np.ndarray] = None
    w_xxx: Optional[np.ndarray] = None
    w_xxxx: Optional[np.ndarray] = None
    q_data: Optional[QData] = None
    basis_U1: Optional[np.ndarray] = None
    normal_n: Optional[np.ndarray] = None
    u_star: Optional[np.ndarray] = None
    psi3: Optional[np.ndarray] = None
    psi4: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.d < 1 or self.metric.dim != self.d:
            raise DimensionError("metric dimension does not match d")
        if not self.lam > 0:
            raise ProblemError("lambda must be positive")

    @property
    def epsilon(self) -> float:
        return math.sqrt(self.d / self.lam)

    def with_lambda(self, lam: float) -> "NormalizedProblem":
        return replace(self, lam=float(lam))


def _unit(v: np.ndarray, name: str) -> tuple[np.ndarray, float]:
    nrm = float(np.linalg.norm(v))
    if not nrm > 0 or not math.isfinite(nrm):
        raise ProblemError(f"{name} must be a nonzero finite vector")
    return v / nrm, nrm


def gradient_angle(a, b) -> float:
    """Angle between two nonzero vectors, accurate for nearly (anti)parallel inputs."""
    ua, _ = _unit(np.asarray(a, dtype=float), "a")
    ub, _ = _unit(np.asarray(b, dtype=float), "b")
    return 2.0 * math.atan2(float(np.linalg.norm(ua - ub)), float(np.linalg.norm(ua + ub)))


def householder_basis(n) -> np.ndarray:
    """Orthonormal ``U = (U1, n)`` obtained from a single Householder reflection.

    For ``n = e_{d+1}`` this returns the identity, so ``U1 = [I; 0]``.
    """
    n = np.asarray(n, dtype=float)
    m = n.size
    e = np.zeros(m)
    e[-1] = 1.0
    if n[-1] >= 0:
        v = n + e  # reflection maps e to -n
        sign = -1.0
    else:
        v = e - n  # reflection maps e to n
        sign = 1.0
    q = np.eye(m) - 2.0 * np.outer(v, v) / float(v @ v)
    q[:, -1] *= sign
    return q


def normalize_general(p: GeneralProblem, *, w_xxy=None, w_xxx=None, w_xxxx=None,
                      q_data: Optional[QData] = None) -> NormalizedProblem:
    """Map a general problem to the canonical frame.

    ``n = grad zbar / |grad zbar|``, ``lambda = lambda_bar |grad zbar|`` and
    ``z(x, t) = zbar(u* + U1 x + t n) / |grad zbar|``.  The boundary Hessian
    is ``psi2 = -U1^T hess(F) U1 / |grad F|`` (the event is ``F >= F0``).
    Higher-order w-derivatives, if known, are passed in the canonical frame.
    """
    u = np.asarray(p.u_star, dtype=float).ravel()
    m = u.size
    if m < 2:
        raise DimensionError("a general problem needs at least two coordinates")
    gz = np.asarray(p.grad_zbar, dtype=float).ravel()
    gf = np.asarray(p.grad_F, dtype=float).ravel()
    if gz.size != m or gf.size != m:
        raise DimensionError("gradient sizes do not match u_star")
    hz = as_symmetric(p.hess_zbar, 2, m, "hess_zbar")
    hf = as_symmetric(p.hess_F, 2, m, "hess_F")
    if not p.lambda_bar > 0:
        raise ProblemError("lambda_bar must be positive")
    n, gz_norm = _unit(gz, "grad_zbar")
    _, gf_norm = _unit(gf, "grad_F")
    angle = gradient_angle(gz, gf)
    if angle > math.pi / 2:
        raise ProblemError(
            f"grad_F is anti-parallel to grad_zbar (angle {angle:.3g} rad): the point is not a "
            "constrained minimum of zbar over {F >= F0}"
        )
    if angle > KKT_ANGLE_TOL:
        raise ProblemError(f"KKT stationarity violated: angle between gradients {angle:.3e} rad")
    U = householder_basis(n)
    U1 = U[:, :-1]
    zxx = U1.T @ hz @ U1 / gz_norm
    psi2 = -(U1.T @ hf @ U1) / gf_norm
    psi2 = 0.5 * (psi2 + psi2.T)
    metric = HMetric.from_matrix(0.5 * (zxx + zxx.T) + psi2)
    d = m - 1
    return NormalizedProblem(
        d=d,
        lam=float(p.lambda_bar) * gz_norm,
        metric=metric,
        z0=float(p.zbar0) / gz_norm,
        psi2=psi2,
        w_yy=float(n @ hz @ n) / gz_norm,
        w_xy=U1.T @ hz @ n / gz_norm,
        w_xxy=None if w_xxy is None else as_symmetric(w_xxy, 2, d, "w_xxy"),
        w_xxx=None if w_xxx is None else as_symmetric(w_xxx, 3, d, "w_xxx"),
        w_xxxx=None if w_xxxx is None else as_symmetric(w_xxxx, 4, d, "w_xxxx"),
        q_data=q_data,
        basis_U1=U1,
        normal_n=n,
        u_star=u,
    )


def _as_fn(v) -> Callable[[float], float]:
    if callable(v):
        return v
    c = float(v)
    return lambda r: c


@dataclass(frozen=True)
class PsiSupBounds:
    """Sup-bounds ``delta_l(r) = sup_{|x|_H <= r} ||grad^l psi(x)||_H`` for l = 2, 3, 4.

    Each entry is a constant or a nondecreasing callable of the radius.
    """

    delta2: Callable[[float], float]
    delta3: Callable[[float], float]
    delta4: Callable[[float], float]
    rho0: float = math.inf

    def __post_init__(self):
        for name in ("delta2", "delta3", "delta4"):
            object.__setattr__(self, name, _as_fn(getattr(self, name)))
        if not self.rho0 > 0:
            raise ProblemError("rho0 must be positive")

    @classmethod
    def flat(cls) -> "PsiSupBounds":
        return cls(0.0, 0.0, 0.0, math.inf)

    @classmethod
    def quadratic(cls, delta2: float, rho0: Optional[float] = None) -> "PsiSupBounds":
        """Globally quadratic boundary; default ``rho0 = 1/sqrt(delta2)``."""
        if rho0 is None:
            rho0 = math.inf if delta2 == 0 else 1.0 / math.sqrt(delta2)
        return cls(float(delta2), 0.0, 0.0, rho0)

    @classmethod
    def quartic(cls, s_norm: float, rho0: Optional[float] = None) -> "PsiSupBounds":
        """``psi = <S, x^4>/24``: ``delta2 = |S| r^2/2``, ``delta3 = |S| r``, ``delta4 = |S|``.

        Default ``rho0 = (1/3) / max(1, |S|)``.
        """
        s = float(s_norm)
        if rho0 is None:
            rho0 = (1.0 / 3.0) / max(1.0, s)
        return cls(lambda r: s * r * r / 2.0, lambda r: s * r, s, rho0)


_OPTIONAL_DB = ("omega_30_R", "delta_2_rho1", "delta_2_half_R")


@dataclass(frozen=True)
class DerivBounds:
    """Values of the derivative bounds at the radii used by the validity conditions.

    ``omega_21_R = omega_21(R eps, 0)``, ``omega_02_strip = omega_02(R eps, R eps)``,
    ``omega_02_box = omega_02(R eps, (R eps)^2)``, ``omega_40_R = omega_40(R eps, 0)``,
    ``omega_30_R = omega_30(R eps, 0)``; unsuffixed quantities are at radius 0.
    """

    omega_11: Optional[float] = None
    omega_21_R: Optional[float] = None
    omega_02_strip: Optional[float] = None
    omega_02_box: Optional[float] = None
    omega_30: Optional[float] = None
    omega_40_R: Optional[float] = None
    delta_2: Optional[float] = None
    delta_3: Optional[float] = None
    delta_2_R: Optional[float] = None
    delta_3_R: Optional[float] = None
    delta_4_R: Optional[float] = None
    s: Optional[float] = None
    rho0: Optional[float] = None
    rho1: Optional[float] = None
    c_min: Optional[float] = None
    convex_flag: bool = False
    omega_30_R: Optional[float] = None
    delta_2_rho1: Optional[float] = None
    delta_2_half_R: Optional[float] = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "convex_flag" or v is None:
                continue
            if not float(v) >= 0:
                raise ProblemError(f"{f.name} must be nonnegative, got {v}")
        if self.c_min is not None and not self.c_min > 0:
            raise ProblemError("c_min must be positive")
        if self.rho0 is not None and self.rho1 is not None and not self.rho1 < self.rho0:
            raise ProblemError("rho1 must be smaller than rho0")

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise MissingBoundsError("missing derivative bounds: " + ", ".join(missing))

    def get(self, name: str, default: float = 0.0) -> float:
        v = getattr(self, name)
        return default if v is None else float(v)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "DerivBounds":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ProblemError("unknown derivative-bound fields: " + ", ".join(sorted(extra)))
        return cls(**data)


@dataclass(frozen=True)
class Check:
    name: str
    lhs: float
    rhs: float
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "passed": self.passed}


def _check(name: str, lhs: float, rhs: float) -> Check:
    return Check(name, float(lhs), float(rhs), bool(lhs <= rhs))


@dataclass(frozen=True)
class ConditionReport:
    R_used: float
    M_used: int
    variant: str
    checks: tuple = ()

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "R": self.R_used,
            "M": self.M_used,
            "variant": self.variant,
            "overall": self.overall,
            "checks": [c.to_dict() for c in self.checks],
        }


@dataclass(frozen=True)
class Constants:
    """Free constants of the validity conditions (all default to 1)."""

    C34: float = 1.0
    c_psi: float = 1.0


def R_general(c_min: float, M: int, d: int, lam: float) -> float:
    return 12.0 / c_min + 2.0 * (1 + 2 * M) * math.log(lam) / d


def R_convex(M: int, d: int, lam: float) -> float:
    return 24.0 + 2.0 * (1 + 2 * M) * math.log(lam) / d


def R_gauss(d: int, lam: float) -> float:
    return 24.0 + 6.0 * math.log(lam) / d


def _safe_div(a: float, b: float) -> float:
    return math.inf if b == 0 else a / b


def check_conditions(prob: NormalizedProblem, db: DerivBounds, M: int = 1,
                     constants: Constants = Constants(), convex: Optional[bool] = None) -> ConditionReport:
    """Evaluate the validity conditions of the first-order expansion.

    The general variant uses ``R = 12/C_min + 2(1+2M) log(lam)/d``; the
    convex variant (``db.convex_flag`` or ``convex=True``) uses
    ``R = 24 + 2(1+2M) log(lam)/d``.
    """
    if M < 1:
        raise ProblemError("M must be at least 1")
    d, lam, eps = prob.d, prob.lam, prob.epsilon
    convex = db.convex_flag if convex is None else convex
    db.require("omega_11", "omega_02_strip", "omega_21_R", "omega_30", "omega_40_R", "rho0")
    checks = []
    if convex:
        R = R_convex(M, d, lam)
        re = R * eps
        d2h = db.delta_2_half_R if db.delta_2_half_R is not None else db.delta_2_R
        if d2h is None:
            raise MissingBoundsError("missing derivative bounds: delta_2_half_R (or delta_2_R)")
        db.require("omega_30_R")
        checks.append(_check("D.radius", re, min(1.0, db.rho0)))
        checks.append(_check("D.delta2", re * d2h, 2.0))
    else:
        db.require("c_min", "s", "rho1", "delta_2_rho1")
        R = R_general(db.c_min, M, d, lam)
        re = R * eps
        checks.append(_check("A.eps_le_s", eps, db.s))
        checks.append(_check("A.radius", re, min(1.0, db.rho0, 2.0 * db.rho1,
                                                 _safe_div(2.0, db.delta_2_rho1))))
    checks.append(_check("Rwc34eps.local",
                         re * (db.omega_11 + db.omega_02_strip) + re * re * db.omega_21_R, 0.5))
    checks.append(_check("Rwc34eps.C34", (db.omega_30 ** 2 + db.omega_40_R) * d * d / lam, constants.C34))
    if convex:
        checks.append(_check("convex.omega30", re * db.omega_30_R, 3.0))
    return ConditionReport(R, M, "convex" if convex else "general", tuple(checks))


def check_conditions_gauss(bounds: PsiSupBounds, d: int, lam: float, c_psi: float = 1.0) -> ConditionReport:
    """Validity conditions of the first-order Gaussian expansion, ``R = 24 + 6 log(lam)/d``."""
    R = R_gauss(d, lam)
    re = R * math.sqrt(d / lam)
    d2, d3 = bounds.delta2(0.0), bounds.delta3(0.0)
    checks = (
        _check("gauss.radius", re * max(1.0, bounds.delta2(re), bounds.delta3(re)), min(1.0 / 3.0, bounds.rho0)),
        _check("gauss.c_psi", (d2 ** 2 + d3 ** 2 + bounds.delta4(re)) * d * d / lam, c_psi),
    )
    return ConditionReport(R, 1, "gauss", checks)


def check_conditions_quadratic(delta2: float, d: int, lam: float, rho0: Optional[float] = None) -> ConditionReport:
    """The simplified quadratic-boundary conditions (with ``c_psi = 1``)."""
    if rho0 is None:
        rho0 = math.inf if delta2 == 0 else 1.0 / math.sqrt(delta2)
    R = R_gauss(d, lam)
    re = R * math.sqrt(d / lam)
    checks = (
        _check("quad.radius", re, min(1.0 / 3.0, rho0) / max(1.0, delta2)),
        _check("quad.d2", (delta2 * d) ** 2 / lam, 1.0),
    )
    return ConditionReport(R, 1, "quadratic", checks)


def gauss_compose(psi2, psi3=None, psi4=None, sup_bounds: Optional[PsiSupBounds] = None, *,
                  lam: float, M: int = 1, q_data: Optional[QData] = None) -> tuple[NormalizedProblem, DerivBounds]:
    """Canonical data for ``P(N(0, I_{d+1}) in sqrt(lam) D + (0, sqrt(lam)))``.

    Uses ``z(x, t) = |x|^2/2 + (t+1)^2/2`` so that ``w_yy = 1``, ``w_xy = 0``,
    ``w_xxy = psi2``, ``w_xxx = psi3`` and ``w_xxxx = psi4 + 3 Sym(psi2 (x) psi2)``.
    Bounds are evaluated at radius ``R eps`` with ``R = 24 + 2(1+2M) log(lam)/d``.
    If ``sup_bounds`` is omitted, constant bounds from the tensors at 0 are
    used (exact when psi is a quadratic).
    """
    psi2 = np.asarray(psi2, dtype=float)
    if psi2.ndim != 2:
        raise DimensionError("psi2 must be a matrix")
    d = psi2.shape[0]
    psi2 = as_symmetric(psi2, 2, d, "psi2")
    psi3 = np.zeros((d,) * 3) if psi3 is None else as_symmetric(psi3, 3, d, "psi3")
    psi4 = np.zeros((d,) * 4) if psi4 is None else as_symmetric(psi4, 4, d, "psi4")
    metric = HMetric.from_matrix(np.eye(d) + psi2)
    if sup_bounds is None:
        sup_bounds = PsiSupBounds(
            h_opnorm(psi2, metric).value,
            h_opnorm(psi3, metric).value if np.any(psi3) else 0.0,
            h_opnorm(psi4, metric).value if np.any(psi4) else 0.0,
        )
        if not np.any(psi3) and not np.any(psi4):
            sup_bounds = PsiSupBounds.quadratic(sup_bounds.delta2(0.0))
    prob = NormalizedProblem(
        d=d,
        lam=float(lam),
        metric=metric,
        z0=0.5,
        psi2=psi2,
        w_yy=1.0,
        w_xy=np.zeros(d),
        w_xxy=psi2.copy(),
        w_xxx=psi3,
        w_xxxx=psi4 + 3.0 * sym_outer(psi2),
        q_data=q_data if q_data is not None else QData.constant(d),
        psi3=psi3,
        psi4=psi4,
    )
    r = R_convex(M, d, lam) * prob.epsilon
    d2r, d3r, d4r = sup_bounds.delta2(r), sup_bounds.delta3(r), sup_bounds.delta4(r)
    delta0 = r * r * d2r / 2.0
    delta1 = r * d2r
    db = DerivBounds(
        omega_11=0.0,
        omega_21_R=d2r,
        omega_02_strip=1.0,
        omega_02_box=1.0,
        omega_30=sup_bounds.delta3(0.0),
        omega_40_R=d4r * (1.0 + delta0) + 2.0 * delta1 * d3r + d2r * d2r,
        delta_2=sup_bounds.delta2(0.0),
        delta_3=sup_bounds.delta3(0.0),
        delta_2_R=d2r,
        delta_3_R=d3r,
        delta_4_R=d4r,
        rho0=sup_bounds.rho0,
        convex_flag=True,
        omega_30_R=d3r * (1.0 + delta0) + 3.0 * delta1 * d2r,
        delta_2_half_R=sup_bounds.delta2(r / 2.0),
    )
    return prob, db
