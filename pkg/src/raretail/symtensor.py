"""Dense symmetric tensors, the H-metric and H-weighted operator norms.

Tensors are plain ``numpy`` arrays of shape ``(d,) * k``.  All operations
are pure; the metric is an immutable value.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NotPositiveDefiniteError, NotSymmetricError

PD_RTOL = 1e-10
SYM_TOL = 1e-12

_LETTERS = "abcdefgh"


@dataclass(frozen=True, eq=False)
class HMetric:
    """Symmetric positive definite metric with its symmetric square root.

    Attributes
    ----------
    dim : int
    matrix : ndarray, shape (d, d)
    root : ndarray
        Symmetric square root, ``root @ root.T == matrix``.
    inv_root : ndarray
        Inverse of ``root``.
    log_det : float
    """

    dim: int
    matrix: np.ndarray
    root: np.ndarray
    inv_root: np.ndarray
    log_det: float
    eigenvalues: np.ndarray

    @classmethod
    def from_matrix(cls, matrix) -> "HMetric":
        a = np.array(matrix, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise DimensionError(f"metric must be a non-empty square matrix, got shape {a.shape}")
        scale = max(float(np.max(np.abs(a))), np.finfo(float).tiny)
        if np.max(np.abs(a - a.T)) > SYM_TOL * scale:
            raise NotSymmetricError("metric matrix is not symmetric")
        a = 0.5 * (a + a.T)
        evals, evecs = np.linalg.eigh(a)
        lo, hi = float(evals[0]), float(evals[-1])
        if hi <= 0 or lo <= PD_RTOL * hi:
            raise NotPositiveDefiniteError(
                f"metric is not positive definite (smallest eigenvalue {lo:.3e})", min_eigenvalue=lo
            )
        sq = np.sqrt(evals)
        root = (evecs * sq) @ evecs.T
        inv_root = (evecs / sq) @ evecs.T
        for m in (a, root, inv_root, evals):
            m.setflags(write=False)
        return cls(
            dim=a.shape[0],
            matrix=a,
            root=root,
            inv_root=inv_root,
            log_det=float(np.sum(np.log(evals))),
            eigenvalues=evals,
        )

    @classmethod
    def identity(cls, d: int) -> "HMetric":
        return cls.from_matrix(np.eye(d))

    @property
    def inverse_matrix(self) -> np.ndarray:
        return self.inv_root @ self.inv_root

    def inverse(self) -> "HMetric":
        """Metric whose matrix is ``H^{-1}``."""
        return HMetric.from_matrix(self.inverse_matrix)

    def norm(self, x) -> float:
        """``||x||_H = sqrt(x^T H x)``."""
        x = np.asarray(x, dtype=float)
        return float(np.sqrt(x @ self.matrix @ x))


@dataclass(frozen=True)
class OpNorm:
    """Operator norm estimate with a certified upper bound."""

    value: float
    upper: float
    order: int
    exact: bool

    def __float__(self) -> float:
        return self.value


def _check_dims(t: np.ndarray, d: int | None = None) -> int:
    if t.ndim == 0:
        raise DimensionError("expected an array of order >= 1")
    n = t.shape[0]
    if any(s != n for s in t.shape):
        raise DimensionError(f"tensor must be cubical, got shape {t.shape}")
    if d is not None and n != d:
        raise DimensionError(f"tensor dimension {n} does not match metric dimension {d}")
    return n


def symmetrize(t) -> np.ndarray:
    """Average of ``t`` over all permutations of its axes."""
    t = np.asarray(t, dtype=float)
    _check_dims(t)
    k = t.ndim
    if k == 1:
        return t.copy()
    perms = list(itertools.permutations(range(k)))
    out = np.zeros_like(t)
    for p in perms:
        out += np.transpose(t, p)
    return out / len(perms)


def is_symmetric(t, atol: float = SYM_TOL) -> bool:
    t = np.asarray(t, dtype=float)
    if t.ndim <= 1:
        return True
    scale = max(1.0, float(np.max(np.abs(t)))) if t.size else 1.0
    for p in itertools.permutations(range(t.ndim)):
        if np.max(np.abs(t - np.transpose(t, p))) > atol * scale:
            return False
    return True


def as_symmetric(t, order: int, d: int | None = None, name: str = "tensor") -> np.ndarray:
    """Validate shape and symmetry; return a float array (a symmetrized copy)."""
    t = np.array(t, dtype=float)
    if t.ndim != order:
        raise DimensionError(f"{name} must have order {order}, got {t.ndim}")
    _check_dims(t, d)
    if not is_symmetric(t):
        raise NotSymmetricError(f"{name} is not symmetric")
    return symmetrize(t) if order > 1 else t


def multi_contract(t: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Contract every slot of ``t`` with the matrix ``m``: t[a..] m[a,i] ...."""
    k = t.ndim
    out = t
    for axis in range(k):
        out = np.tensordot(out, m, axes=([0], [0]))
    return out


def whiten(t, metric: HMetric) -> np.ndarray:
    """Apply ``H^{-1/2}`` to every slot of ``t`` (vector, matrix or tensor)."""
    t = np.asarray(t, dtype=float)
    _check_dims(t, metric.dim)
    return multi_contract(t, metric.inv_root)


def tensor_apply(t: np.ndarray, x: np.ndarray, times: int) -> np.ndarray:
    """Contract the trailing ``times`` slots of ``t`` with ``x``."""
    out = t
    for _ in range(times):
        out = out @ x
    return out


def _hopm(t: np.ndarray, rng: np.random.Generator, restarts: int, maxiter: int, tol: float) -> float:
    """Shifted symmetric higher-order power method for max |T(x,...,x)| on the sphere."""
    k, d = t.ndim, t.shape[0]
    fro = float(np.linalg.norm(t.ravel()))
    if fro == 0.0:
        return 0.0
    starts = [rng.standard_normal(d) for _ in range(restarts)]
    # deterministic extra start from the leading eigenvector of a matrix flattening
    flat = tensor_apply(t, np.ones(d) / math.sqrt(d), k - 2) if k > 2 else t
    w, v = np.linalg.eigh(0.5 * (flat + flat.T))
    starts.append(v[:, int(np.argmax(np.abs(w)))])
    signs = (1.0,) if k % 2 == 1 else (1.0, -1.0)
    alpha = (k - 1) * fro * 0.25
    best = 0.0
    for sgn in signs:
        ts = sgn * t
        for x in starts:
            x = x / np.linalg.norm(x)
            f = float(tensor_apply(ts, x, k))
            for _ in range(maxiter):
                g = tensor_apply(ts, x, k - 1) + alpha * x
                nrm = np.linalg.norm(g)
                if nrm == 0.0:
                    break
                x = g / nrm
                f_new = float(tensor_apply(ts, x, k))
                if abs(f_new - f) <= tol * max(1.0, abs(f_new)):
                    f = f_new
                    break
                f = f_new
            best = max(best, abs(f))
    return min(best, fro)


def h_opnorm(t, metric: HMetric | None = None, *, restarts: int = 8, seed: int = 0,
             maxiter: int = 2000, tol: float = 1e-14) -> OpNorm:
    """H-weighted operator norm ``sup_{||u||_H <= 1} |T(u, ..., u)|``.

    Orders 1 and 2 are exact.  For orders 3 and 4 the value is a power
    iteration estimate (a lower bound) and ``upper`` is the Frobenius norm
    of the whitened tensor.
    """
    t = np.asarray(t, dtype=float)
    k = t.ndim
    if k not in (1, 2, 3, 4):
        raise DimensionError(f"unsupported tensor order {k}")
    d = _check_dims(t, None if metric is None else metric.dim)
    if not is_symmetric(t):
        raise NotSymmetricError("operator norm requires a symmetric tensor")
    tw = t if metric is None else whiten(t, metric)
    if k == 1:
        v = float(np.linalg.norm(tw))
        return OpNorm(v, v, 1, True)
    if k == 2:
        v = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (tw + tw.T))))) if d else 0.0
        return OpNorm(v, v, 2, True)
    rng = np.random.default_rng(seed)
    v = _hopm(tw, rng, restarts, maxiter, tol)
    return OpNorm(v, float(np.linalg.norm(tw.ravel())), k, False)


def contract_identity3(t) -> np.ndarray:
    """``<T, I>``: the vector with components ``sum_j T_ijj``."""
    t = np.asarray(t, dtype=float)
    if t.ndim != 3:
        raise DimensionError("expected an order-3 tensor")
    _check_dims(t)
    return np.einsum("ijj->i", t)


def contract_identity4(t) -> float:
    """``<T, I (x) I> = sum_ij T_iijj``."""
    t = np.asarray(t, dtype=float)
    if t.ndim != 4:
        raise DimensionError("expected an order-4 tensor")
    _check_dims(t)
    return float(np.einsum("iijj->", t))


def sym_outer(a, b=None) -> np.ndarray:
    """``Sym(A (x) B)`` as an order-4 tensor (``B`` defaults to ``A``)."""
    a = np.asarray(a, dtype=float)
    b = a if b is None else np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionError("sym_outer needs two square matrices of equal shape")
    _check_dims(a)
    return symmetrize(np.multiply.outer(a, b))


def contract_AB(a, b) -> float:
    """``<Sym(A (x) A), B (x) B> = <A,B>^2/3 + 2 Tr(ABAB)/3``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionError("contract_AB needs two square matrices of equal shape")
    ab = a @ b
    return float(np.sum(a * b) ** 2 / 3.0 + 2.0 * np.trace(ab @ ab) / 3.0)


def radial_quartic_tensor(d: int, scale: float = 1.0) -> np.ndarray:
    """``scale * Sym(I (x) I)``.

    With ``psi(x) = <S, x^(x)4> / 24`` this gives ``psi(x) = scale * |x|^4 / 24``.
    """
    return scale * sym_outer(np.eye(d))
