"""Packed triangular matrices, products, substitution solves and condition numbers.

Both matrix types store only their free entries in a flat row-major array:

* ``UnitLowerTriangular.strict_lower`` holds rows ``(i, 0) .. (i, i-1)`` for
  ``i = 1 .. D-1``; the unit diagonal is implicit.
* ``UpperTriangular.upper`` holds rows ``(i, i) .. (i, D-1)`` for ``i = 0 .. D-1``.

Every vector argument may be a single vector of shape ``(D,)`` or a batch of
row vectors of shape ``(N, D)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

DIAG_EPS = 1e-12
POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000


class NearSingularDiagonal(ArithmeticError):
    """A diagonal entry of an upper-triangular factor is too close to zero."""

    def __init__(self, index: int, value: float, layer: int | None = None):
        self.index = index
        self.value = value
        self.layer = layer
        where = f"layer {layer}, " if layer is not None else ""
        super().__init__(f"near-singular diagonal at {where}index {index}: |u| = {abs(value):.3e}")


@lru_cache(maxsize=64)
def _lower_indices(dim: int) -> tuple[np.ndarray, np.ndarray]:
    return np.tril_indices(dim, -1)


@lru_cache(maxsize=64)
def _upper_indices(dim: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(dim)


@lru_cache(maxsize=64)
def upper_diag_positions(dim: int) -> np.ndarray:
    """Positions of the diagonal entries inside the packed upper storage."""
    i = np.arange(dim)
    return i * dim - i * (i - 1) // 2


def _upper_row_start(i: int, dim: int) -> int:
    return i * dim - i * (i - 1) // 2


@dataclass(frozen=True, eq=False)
class UnitLowerTriangular:
    dim: int
    strict_lower: np.ndarray

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        arr = np.asarray(self.strict_lower, dtype=np.float64)
        if arr.shape != (self.dim * (self.dim - 1) // 2,):
            raise ValueError(
                f"strict_lower must have length {self.dim * (self.dim - 1) // 2}, got shape {arr.shape}"
            )
        object.__setattr__(self, "strict_lower", arr)

    @classmethod
    def identity(cls, dim: int) -> "UnitLowerTriangular":
        return cls(dim, np.zeros(dim * (dim - 1) // 2))

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "UnitLowerTriangular":
        a = np.asarray(a, dtype=np.float64)
        return cls(a.shape[0], a[_lower_indices(a.shape[0])].copy())

    def to_dense(self) -> np.ndarray:
        out = np.eye(self.dim)
        out[_lower_indices(self.dim)] = self.strict_lower
        return out

    def row(self, i: int) -> np.ndarray:
        """Strict-lower entries ``(i, 0) .. (i, i-1)`` as a view."""
        start = i * (i - 1) // 2
        return self.strict_lower[start:start + i]


@dataclass(frozen=True, eq=False)
class UpperTriangular:
    dim: int
    upper: np.ndarray

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        arr = np.asarray(self.upper, dtype=np.float64)
        if arr.shape != (self.dim * (self.dim + 1) // 2,):
            raise ValueError(
                f"upper must have length {self.dim * (self.dim + 1) // 2}, got shape {arr.shape}"
            )
        object.__setattr__(self, "upper", arr)

    @classmethod
    def identity(cls, dim: int) -> "UpperTriangular":
        u = np.zeros(dim * (dim + 1) // 2)
        u[upper_diag_positions(dim)] = 1.0
        return cls(dim, u)

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "UpperTriangular":
        a = np.asarray(a, dtype=np.float64)
        return cls(a.shape[0], a[_upper_indices(a.shape[0])].copy())

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        out[_upper_indices(self.dim)] = self.upper
        return out

    def diagonal(self) -> np.ndarray:
        return self.upper[upper_diag_positions(self.dim)]

    def row(self, i: int) -> np.ndarray:
        """Entries ``(i, i) .. (i, D-1)`` as a view."""
        start = _upper_row_start(i, self.dim)
        return self.upper[start:start + self.dim - i]

    def check_diagonal(self, eps: float = DIAG_EPS, layer: int | None = None) -> None:
        diag = self.diagonal()
        bad = np.flatnonzero(~(np.abs(diag) >= eps))
        if bad.size:
            raise NearSingularDiagonal(int(bad[0]), float(diag[bad[0]]), layer)


def pack_lower(dense: np.ndarray) -> np.ndarray:
    """Strict lower triangle of a dense square array, packed row-major."""
    return dense[_lower_indices(dense.shape[0])]


def pack_upper(dense: np.ndarray) -> np.ndarray:
    """Upper triangle (diagonal included) of a dense square array, packed row-major."""
    return dense[_upper_indices(dense.shape[0])]


def _check_vec(dim: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != dim:
        raise ValueError(f"expected trailing dimension {dim}, got shape {x.shape}")
    return x


def matvec_unit_lower(L: UnitLowerTriangular, x) -> np.ndarray:
    x = _check_vec(L.dim, x)
    return x @ L.to_dense().T


def matvec_upper(U: UpperTriangular, x) -> np.ndarray:
    x = _check_vec(U.dim, x)
    return x @ U.to_dense().T


def rmatvec_unit_lower(L: UnitLowerTriangular, x) -> np.ndarray:
    """Product with the transpose, ``L^T x``."""
    x = _check_vec(L.dim, x)
    return x @ L.to_dense()


def rmatvec_upper(U: UpperTriangular, x) -> np.ndarray:
    """Product with the transpose, ``U^T x``."""
    x = _check_vec(U.dim, x)
    return x @ U.to_dense()


def solve_unit_lower(L: UnitLowerTriangular, rhs) -> np.ndarray:
    """Forward substitution for ``L y = rhs``."""
    rhs = _check_vec(L.dim, rhs)
    y = np.array(rhs, dtype=np.float64, copy=True)
    for i in range(1, L.dim):
        y[..., i] -= y[..., :i] @ L.row(i)
    return y


def solve_upper(U: UpperTriangular, rhs, eps: float = DIAG_EPS) -> np.ndarray:
    """Back substitution for ``U x = rhs``."""
    rhs = _check_vec(U.dim, rhs)
    U.check_diagonal(eps)
    x = np.array(rhs, dtype=np.float64, copy=True)
    d = U.dim
    for i in range(d - 1, -1, -1):
        row = U.row(i)
        if i < d - 1:
            x[..., i] -= x[..., i + 1:] @ row[1:]
        x[..., i] /= row[0]
    return x


def solve_unit_lower_transpose(L: UnitLowerTriangular, rhs) -> np.ndarray:
    """Solve ``L^T y = rhs`` by a row-oriented backward sweep."""
    rhs = _check_vec(L.dim, rhs)
    y = np.array(rhs, dtype=np.float64, copy=True)
    for j in range(L.dim - 1, 0, -1):
        y[..., :j] -= y[..., j:j + 1] * L.row(j)
    return y


def solve_upper_transpose(U: UpperTriangular, rhs, eps: float = DIAG_EPS) -> np.ndarray:
    """Solve ``U^T y = rhs`` by a row-oriented forward sweep."""
    rhs = _check_vec(U.dim, rhs)
    U.check_diagonal(eps)
    y = np.array(rhs, dtype=np.float64, copy=True)
    d = U.dim
    for j in range(d):
        row = U.row(j)
        y[..., j] /= row[0]
        if j < d - 1:
            y[..., j + 1:] -= y[..., j:j + 1] * row[1:]
    return y


def spectral_norm(
    apply: Callable[[np.ndarray], np.ndarray],
    apply_transpose: Callable[[np.ndarray], np.ndarray],
    dim: int,
    tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
    seed: int = 0,
) -> float:
    """Largest singular value of a linear operator known only through its action.

    Power iteration on ``A^T A``; the estimate is ``||A v||`` for the current
    unit vector ``v``. Iteration stops once two successive estimates agree to
    ``tol`` relative to the estimate. A ``RuntimeWarning`` is issued if
    ``max_iter`` is exhausted first.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    prev = None
    for _ in range(max_iter):
        av = apply(v)
        sigma = float(np.linalg.norm(av))
        if sigma == 0.0:
            return 0.0
        if prev is not None and abs(sigma - prev) <= tol * sigma:
            return sigma
        prev = sigma
        w = apply_transpose(av)
        v = w / np.linalg.norm(w)
    warnings.warn("spectral_norm: power iteration did not converge", RuntimeWarning, stacklevel=2)
    return sigma


def condition_number(
    A: UpperTriangular | UnitLowerTriangular,
    tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
    seed: int = 0,
) -> float:
    """``||A||_2 * ||A^{-1}||_2`` with the inverse applied by substitution only."""
    if isinstance(A, UpperTriangular):
        A.check_diagonal()
        fwd, fwd_t = (lambda v: matvec_upper(A, v)), (lambda v: rmatvec_upper(A, v))
        inv, inv_t = (lambda v: solve_upper(A, v)), (lambda v: solve_upper_transpose(A, v))
    elif isinstance(A, UnitLowerTriangular):
        fwd, fwd_t = (lambda v: matvec_unit_lower(A, v)), (lambda v: rmatvec_unit_lower(A, v))
        inv, inv_t = (lambda v: solve_unit_lower(A, v)), (lambda v: solve_unit_lower_transpose(A, v))
    else:
        raise TypeError(f"unsupported matrix type {type(A).__name__}")
    norm = spectral_norm(fwd, fwd_t, A.dim, tol, max_iter, seed)
    inv_norm = spectral_norm(inv, inv_t, A.dim, tol, max_iter, seed)
    return norm * inv_norm
