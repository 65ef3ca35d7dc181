"""Sampling from the canonical approximation of a rare-event conditional density.

In the canonical frame, ``pi_hat`` is the law of ``(X, Y + X^T B X / 2)``
with ``X ~ N(0, (lam H)^{-1})`` and ``Y ~ Exp(lam)`` independent, where
``B`` is the boundary Hessian.  An optional affine frame maps canonical
points ``(x, t)`` to ``u_star + scale (U1 x + t n)``.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binomtest

from .errors import DimensionError, EstimationError, ProblemError
from .problem import DerivBounds, NormalizedProblem, R_gauss
from .streams import CHUNK, map_chunks
from .symtensor import HMetric, as_symmetric

BIN_MAGIC = b"RTSB"
BIN_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True, eq=False)
class Frame:
    """Affine map ``(x, t) -> u_star + scale (U1 x + t n)``."""

    u_star: np.ndarray
    basis_U1: np.ndarray
    normal_n: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        U1 = np.asarray(self.basis_U1, dtype=float)
        n = np.asarray(self.normal_n, dtype=float).ravel()
        m = n.size
        if U1.shape != (m, m - 1) or np.asarray(self.u_star).size != m:
            raise DimensionError("frame shapes are inconsistent")
        U = np.column_stack([U1, n])
        if np.max(np.abs(U.T @ U - np.eye(m))) > 1e-10:
            raise ProblemError("frame basis is not orthonormal")
        if not self.scale > 0:
            raise ProblemError("frame scale must be positive")

    @property
    def U(self) -> np.ndarray:
        return np.column_stack([self.basis_U1, self.normal_n])

    @classmethod
    def identity(cls, d: int) -> "Frame":
        e = np.zeros(d + 1)
        e[-1] = 1.0
        return cls(np.zeros(d + 1), np.eye(d + 1)[:, :d], e, 1.0)

    @classmethod
    def gaussian(cls, d: int, lam: float) -> "Frame":
        """``(x, t) -> sqrt(lam) (x, t) + (0_d, sqrt(lam))``."""
        sl = math.sqrt(lam)
        e = np.zeros(d + 1)
        e[-1] = 1.0
        return cls(sl * e, np.eye(d + 1)[:, :d], e, sl)

    def to_original(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        return self.u_star + self.scale * (x @ np.asarray(self.basis_U1).T + np.outer(t, self.normal_n))

    def to_canonical(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        v = (np.atleast_2d(u) - self.u_star) / self.scale
        return v @ self.basis_U1, v @ self.normal_n


@dataclass(frozen=True, eq=False)
class HatPiModel:
    d: int
    lam: float
    metric: HMetric
    psi2: np.ndarray
    frame: Optional[Frame] = None
    seed: int = 0

    def __post_init__(self):
        if self.metric.dim != self.d:
            raise DimensionError("metric does not match d")
        object.__setattr__(self, "psi2", as_symmetric(self.psi2, 2, self.d, "psi2"))
        if not self.lam > 0:
            raise ProblemError("lambda must be positive")
        if self.frame is not None and np.asarray(self.frame.normal_n).size != self.d + 1:
            raise DimensionError("frame does not match d")

    @classmethod
    def from_problem(cls, prob: NormalizedProblem, seed: int = 0) -> "HatPiModel":
        frame = None
        if prob.basis_U1 is not None:
            frame = Frame(prob.u_star, prob.basis_U1, prob.normal_n, 1.0)
        return cls(prob.d, prob.lam, prob.metric, prob.psi2, frame, seed)

    @classmethod
    def gaussian(cls, psi2, lam: float, seed: int = 0) -> "HatPiModel":
        """Model for ``N(0, I_{d+1})`` restricted to ``sqrt(lam) D + (0, sqrt(lam))``."""
        psi2 = np.asarray(psi2, dtype=float)
        d = psi2.shape[0]
        return cls(d, float(lam), HMetric.from_matrix(np.eye(d) + psi2), psi2, Frame.gaussian(d, lam), seed)

    def with_seed(self, seed: int) -> "HatPiModel":
        return HatPiModel(self.d, self.lam, self.metric, self.psi2, self.frame, seed)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Draws from ``pi_hat``.

    ``points`` are canonical ``(x, t)`` unless ``frame_applied``, in which
    case they are in the original coordinates.  ``x_part`` and ``y_part``
    always hold the canonical ingredients.
    """

    n: int
    points: np.ndarray
    x_part: np.ndarray
    y_part: np.ndarray
    seed: int
    stream_count: int
    chunk: int = CHUNK
    frame_applied: bool = False

    @property
    def d(self) -> int:
        return self.x_part.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.d)] + ["t"])
            for row in self.points:
                w.writerow([repr(float(v)) for v in row])

    def to_bytes(self) -> bytes:
        body = np.ascontiguousarray(self.points, dtype="<f8").tobytes()
        return _HEADER.pack(BIN_MAGIC, BIN_VERSION, self.n, self.d) + body

    def to_binary(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())


def read_binary(path_or_bytes) -> np.ndarray:
    """Read points written by :meth:`SampleBatch.to_binary`."""
    if isinstance(path_or_bytes, (bytes, bytearray)):
        raw = bytes(path_or_bytes)
    else:
        with open(path_or_bytes, "rb") as fh:
            raw = fh.read()
    magic, version, n, d = _HEADER.unpack_from(raw, 0)
    if magic != BIN_MAGIC or version != BIN_VERSION:
        raise ValueError("not a sample batch file")
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size, count=n * (d + 1)).reshape(n, d + 1)


def quad_form(x: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jk,ik->i", x, B, x)


def _draw(model: HatPiModel, n: int, threads: Optional[int]):
    if n < 1:
        raise ProblemError("n must be at least 1")
    d, lam = model.d, model.lam
    a = model.metric.inv_root.T / math.sqrt(lam)

    def work(rng, size):
        z = rng.standard_normal((size, d))
        u = rng.random(size)
        return z @ a, -np.log1p(-u) / lam

    parts = map_chunks(work, n, model.seed, threads)
    x = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    t = y + 0.5 * quad_form(x, model.psi2)
    return x, y, t, len(parts)


def sample(model: HatPiModel, n: int, threads: Optional[int] = None) -> SampleBatch:
    """Canonical-frame draws; deterministic in ``(seed, n)`` for the fixed chunk size."""
    x, y, t, streams = _draw(model, n, threads)
    return SampleBatch(n, np.column_stack([x, t]), x, y, model.seed, streams)


def sample_general(model: HatPiModel, n: int, threads: Optional[int] = None) -> SampleBatch:
    """Draws mapped through the model frame into the original coordinates."""
    if model.frame is None:
        raise ProblemError("model has no frame")
    x, y, t, streams = _draw(model, n, threads)
    return SampleBatch(n, model.frame.to_original(x, t), x, y, model.seed, streams, frame_applied=True)


def hatpi_logpdf(model: HatPiModel, u, original: bool = False):
    """Log density of ``pi_hat``; ``-inf`` below the quadratic boundary.

    With ``original=True`` the points are in frame coordinates and the
    Jacobian ``-(d+1) log(scale)`` is included.
    """
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    d, lam = model.d, model.lam
    if u.shape[1] != d + 1:
        raise DimensionError(f"points must have {d + 1} coordinates")
    jac = 0.0
    if original:
        if model.frame is None:
            raise ProblemError("model has no frame")
        x, t = model.frame.to_canonical(u)
        jac = -(d + 1) * math.log(model.frame.scale)
    else:
        x, t = u[:, :d], u[:, d]
    H = model.metric.matrix
    const = math.log(lam) + 0.5 * (d * math.log(lam / (2.0 * math.pi)) + model.metric.log_det)
    y = t - 0.5 * quad_form(x, model.psi2)
    val = const - lam * (0.5 * quad_form(x, H - model.psi2) + t) + jac
    val = np.where(y >= 0, val, -np.inf)
    return float(val[0]) if single else val


@dataclass(frozen=True, eq=False)
class ISEstimate:
    """Importance-sampling estimate of ``pi(D)``.

    For the self-normalized variant ``weights`` holds the in-set weights
    normalized to sum to one (invariant to rescaling the target).
    """

    log_p_hat: float
    std_err_log: float
    ess: float
    n: int
    n_in: int
    variant: str
    weights: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {"log_p_hat": self.log_p_hat, "std_err_log": self.std_err_log, "ess": self.ess,
                "n": self.n, "n_in": self.n_in, "variant": self.variant}


VARIANTS = ("standard", "self_normalized")


def is_estimate(model: HatPiModel, log_target: Callable, in_D: Callable, n: int,
                variant: str = "self_normalized", threads: Optional[int] = None) -> ISEstimate:
    """Estimate ``pi(D)`` from ``n`` draws of ``pi_hat``.

    ``log_target`` is the log of the normalized target density and ``in_D``
    the membership predicate, both vectorized over rows of points in the
    original coordinates when the model has a frame, canonical otherwise.
    The probability estimate is ``mean(1_D pi / pi_hat)``; its log
    standard error comes from the delta method.
    """
    if variant not in VARIANTS:
        raise EstimationError(f"unknown variant {variant!r}")
    batch = sample_general(model, n, threads) if model.frame is not None else sample(model, n, threads)
    pts = batch.points
    inside = np.asarray(in_D(pts), dtype=bool)
    n_in = int(np.count_nonzero(inside))
    if n_in == 0:
        raise EstimationError("no sample falls inside D; the estimate is undefined")
    sub = pts[inside]
    lw = np.asarray(log_target(sub), dtype=float) - hatpi_logpdf(model, sub, original=model.frame is not None)
    if not np.all(np.isfinite(lw)):
        raise EstimationError("log weights are not finite on D")
    m = float(np.max(lw))
    w = np.exp(lw - m)
    s1, s2 = float(np.sum(w)), float(np.sum(w * w))
    mean = s1 / n
    log_p = float(logsumexp(lw)) - math.log(n)
    if n > 1:
        var = max(s2 / n - mean * mean, 0.0) * n / (n - 1)
        se = math.sqrt(var / n) / mean
    else:
        se = math.inf
    ess = s1 * s1 / s2
    weights = w / s1 if variant == "self_normalized" else None
    return ISEstimate(log_p, se, ess, n, n_in, variant, weights)


@dataclass(frozen=True)
class Coverage:
    fraction: float
    ci_low: float
    ci_high: float
    floor: float
    n: int


def coverage_floor(d: int, lam: float) -> float:
    """``1 - 2 exp(-(R-1)^2 d / 2)`` with ``R = 24 + 6 log(lam)/d``."""
    R = R_gauss(d, lam)
    return 1.0 - 2.0 * math.exp(-(R - 1.0) ** 2 * d / 2.0)


def coverage(model: HatPiModel, in_D: Callable, n: int, threads: Optional[int] = None,
             confidence: float = 0.99) -> Coverage:
    """Empirical ``pi_hat(D)`` with a Clopper-Pearson interval and the theoretical floor."""
    batch = sample_general(model, n, threads) if model.frame is not None else sample(model, n, threads)
    k = int(np.count_nonzero(np.asarray(in_D(batch.points), dtype=bool)))
    ci = binomtest(k, n).proportion_ci(confidence_level=confidence)
    return Coverage(k / n, float(ci.low), float(ci.high), coverage_floor(model.d, model.lam), n)


def tv_rate(db: DerivBounds, d: int, lam: float, M: int = 1) -> float:
    """Total-variation rate with unit constant:

    ``(w30 + delta3) d/sqrt(lam) + w11/sqrt(lam) + (w11^2 + w21) d/lam + w02/lam
    + (w40 + delta4) d^2/lam + lam^-M``.
    """
    db.require("omega_30", "delta_3", "omega_11", "omega_21_R", "omega_02_box", "omega_40_R", "delta_4_R")
    sl = math.sqrt(lam)
    return float(
        (db.omega_30 + db.delta_3) * d / sl
        + db.omega_11 / sl
        + (db.omega_11 ** 2 + db.omega_21_R) * d / lam
        + db.omega_02_box / lam
        + (db.omega_40_R + db.delta_4_R) * d * d / lam
        + lam ** (-M)
    )


def gauss_tv_rate(delta2: float, delta3: float, delta4_R: float, d: int, lam: float) -> float:
    """``delta3 d/sqrt(lam) + (delta2^2 + delta4(R eps)) d^2/lam + 1/lam`` (unit constant)."""
    return float(delta3 * d / math.sqrt(lam) + (delta2 ** 2 + delta4_R) * d * d / lam + 1.0 / lam)
