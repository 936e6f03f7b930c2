"""Finite-sum composite objectives ``g(x) + (1/n) sum_i f_i(x)``.

Component indices are 0-based throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .errors import IndexOutOfRange, NotStronglyConvex, ZeroRow

# relative threshold below which mu is treated as zero
MU_RELATIVE_FLOOR = 1e-12
# Gram matrices up to this size are eigendecomposed densely
DENSE_EIG_MAX_DIM = 2000


@dataclass(frozen=True)
class ProxOperator:
    """Proximal operator of ``g``; ``kind`` is ``"zero"`` or ``"l1"``.

    Subclass and override :meth:`__call__` and :meth:`value` for other
    regularizers.
    """

    kind: str = "zero"
    xi: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "l1"):
            raise ValueError(f"unknown prox kind {self.kind!r}")
        if self.xi < 0:
            raise ValueError("l1 weight must be nonnegative")

    def __call__(self, lam, z):
        if self.kind == "zero" or self.xi == 0.0:
            return z
        t = lam * self.xi
        return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)

    def value(self, x):
        if self.kind == "zero":
            return 0.0
        return self.xi * float(np.abs(x).sum())


def zero_prox():
    return ProxOperator("zero")


def l1_prox(xi):
    return ProxOperator("l1", float(xi))


def prox_apply(op, lam, z):
    """Evaluate ``prox_{lam g}(z)``."""
    if lam <= 0:
        raise ValueError("prox parameter must be positive")
    return op(lam, np.asarray(z, dtype=float))


class FiniteSumProblem:
    """Composite objective with per-component gradients and constants.

    ``component_gradient(i, x)`` returns the gradient of ``f_i``; the optional
    ``component_value(i, x)`` is only used for objective reporting.
    """

    def __init__(
        self,
        n: int,
        dim: int,
        component_gradient: Callable,
        lipschitz,
        mu: float,
        prox: Optional[ProxOperator] = None,
        x_star=None,
        component_value: Optional[Callable] = None,
    ):
        lipschitz = np.asarray(lipschitz, dtype=float)
        if n < 1 or dim < 1:
            raise ValueError("need n >= 1 and dim >= 1")
        if lipschitz.shape != (n,) or not np.all(lipschitz > 0):
            raise ValueError("need n positive Lipschitz constants")
        if not mu > 0:
            raise ValueError("mu must be positive")
        if mu > lipschitz.mean() * (1 + 1e-10):
            raise ValueError("mu cannot exceed the mean Lipschitz constant")
        self.n = int(n)
        self.dim = int(dim)
        self._component_gradient = component_gradient
        self._component_value = component_value
        self.lipschitz = lipschitz
        self.lipschitz.setflags(write=False)
        self.mu = float(mu)
        self.prox = prox if prox is not None else zero_prox()
        self._x_star = None if x_star is None else np.asarray(x_star, dtype=float)

    @property
    def lbar(self):
        return float(self.lipschitz.mean())

    @property
    def x_star(self):
        return self._x_star

    def _check_index(self, i):
        if not 0 <= i < self.n:
            raise IndexOutOfRange(f"component index {i} outside [0, {self.n})")

    def gradient(self, i, x):
        self._check_index(i)
        return np.asarray(self._component_gradient(i, x), dtype=float)

    def gradient_rows(self, idx, x):
        """Gradients of the components in ``idx`` stacked as rows."""
        return np.stack([self.gradient(int(i), x) for i in idx]) if len(idx) else np.zeros((0, self.dim))

    def gradients(self, x):
        return self.gradient_rows(range(self.n), x)

    def full_gradient(self, x):
        return self.gradients(x).mean(axis=0)

    def smooth_value(self, x):
        if self._component_value is None:
            return float("nan")
        return float(np.mean([self._component_value(i, x) for i in range(self.n)]))

    def objective(self, x):
        return self.smooth_value(x) + self.prox.value(x)

    # batched forms: one iterate per row of X

    def gradient_batch(self, idx, X):
        """Row ``s`` is the gradient of component ``idx[s]`` at ``X[s]``."""
        if len(idx) == 0:
            return np.zeros((0, self.dim))
        return np.stack([self.gradient(int(i), x) for i, x in zip(idx, X)])

    def gradients_batch(self, X):
        """Array of shape ``(S, n, dim)`` with every component gradient per row of X."""
        return np.stack([self.gradients(x) for x in X])

    def objective_batch(self, X):
        return np.array([self.objective(x) for x in X])


def gradient_component(p, i, x):
    return p.gradient(i, x)


def full_gradient(p, x):
    return p.full_gradient(x)


class LeastSquaresProblem(FiniteSumProblem):
    """``f_i(x) = (a_i^T x - b_i)^2`` with an optional l1 term ``xi ||x||_1``.

    ``A`` may be a dense array or any scipy sparse matrix; sparse rows are kept
    in CSR form and gradients are returned dense.
    """

    def __init__(self, A, b, xi=0.0, x_star=None):
        if sparse.issparse(A):
            A = sparse.csr_matrix(A, dtype=float)
            A.sort_indices()
            row_sq = np.asarray(A.multiply(A).sum(axis=1)).ravel()
        else:
            A = np.atleast_2d(np.asarray(A, dtype=float))
            row_sq = np.einsum("ij,ij->i", A, A)
        b = np.asarray(b, dtype=float).ravel()
        n, dim = A.shape
        if b.shape != (n,):
            raise ValueError("b must have one entry per row of A")
        zero = np.flatnonzero(row_sq == 0)
        if zero.size:
            raise ZeroRow(int(zero[0]))
        self.A = A
        self.b = b
        self._sparse = sparse.issparse(A)
        lipschitz = 2.0 * row_sq
        mu, lmax = _gram_extremes(A, n)
        if mu < MU_RELATIVE_FLOOR * lipschitz.mean():
            raise NotStronglyConvex(mu, lipschitz.mean())
        # smoothness of F itself; only the reference solver uses it
        self.lipschitz_full = lmax
        prox = l1_prox(xi) if xi > 0 else zero_prox()
        super().__init__(n, dim, None, lipschitz, mu, prox, x_star)

    def _row(self, i):
        if self._sparse:
            lo, hi = self.A.indptr[i], self.A.indptr[i + 1]
            return self.A.indices[lo:hi], self.A.data[lo:hi]
        return None, self.A[i]

    def gradient(self, i, x):
        self._check_index(i)
        idx, vals = self._row(i)
        if idx is None:
            return 2.0 * (vals @ x - self.b[i]) * vals
        g = np.zeros(self.dim)
        g[idx] = 2.0 * (vals @ x[idx] - self.b[i]) * vals
        return g

    def residuals(self, x):
        return self.A @ x - self.b

    def gradient_rows(self, idx, x):
        idx = np.asarray(idx, dtype=np.intp)
        rows = self.A[idx]
        r = rows @ x - self.b[idx]
        if self._sparse:
            return 2.0 * rows.multiply(r[:, None]).toarray()
        return 2.0 * r[:, None] * rows

    def gradients(self, x):
        r = self.residuals(x)
        if self._sparse:
            return 2.0 * self.A.multiply(r[:, None]).toarray()
        return 2.0 * r[:, None] * self.A

    def full_gradient(self, x):
        return (2.0 / self.n) * (self.A.T @ self.residuals(x))

    def smooth_value(self, x):
        r = self.residuals(x)
        return float(r @ r) / self.n

    def _residuals_batch(self, X):
        if self._sparse:
            return np.asarray(self.A @ X.T).T - self.b
        # einsum keeps each row's arithmetic independent of the batch size
        return np.einsum("ij,sj->si", self.A, X) - self.b

    def gradient_batch(self, idx, X):
        idx = np.asarray(idx, dtype=np.intp)
        if self._sparse:
            return super().gradient_batch(idx, X)
        rows = self.A[idx]
        r = np.einsum("sj,sj->s", rows, X) - self.b[idx]
        return 2.0 * r[:, None] * rows

    def gradients_batch(self, X):
        R = self._residuals_batch(X)
        dense = self.A.toarray() if self._sparse else self.A
        return 2.0 * R[:, :, None] * dense[None, :, :]

    def objective_batch(self, X):
        R = self._residuals_batch(X)
        out = np.einsum("si,si->s", R, R) / self.n
        if self.prox.kind == "l1":
            out += self.prox.xi * np.abs(X).sum(axis=1)
        return out

    @property
    def x_star(self):
        if self._x_star is None:
            if self.prox.kind == "zero":
                dense = self.A.toarray() if self._sparse else self.A
                self._x_star = np.linalg.lstsq(dense, self.b, rcond=None)[0]
            else:
                self._x_star = proximal_gradient(self, tol=1e-13)
        return self._x_star


def _gram_extremes(A, n):
    """Smallest and largest eigenvalue of ``(2/n) A^T A``."""
    dim = A.shape[1]
    if dim == 1:
        col = A.toarray().ravel() if sparse.issparse(A) else A.ravel()
        v = 2.0 * float(col @ col) / n
        return v, v
    if dim <= DENSE_EIG_MAX_DIM:
        G = A.T @ A
        G = G.toarray() if sparse.issparse(G) else G
        w = np.linalg.eigvalsh((2.0 / n) * G)
        return float(w[0]), float(w[-1])
    op = splinalg.LinearOperator(
        (dim, dim), matvec=lambda v: (2.0 / n) * (A.T @ (A @ v)), dtype=float
    )
    lo = splinalg.eigsh(op, k=1, which="SA", tol=1e-10, return_eigenvectors=False)[0]
    hi = splinalg.eigsh(op, k=1, which="LA", tol=1e-10, return_eigenvectors=False)[0]
    return float(lo), float(hi)


def build_least_squares(A, b, xi=0.0):
    return LeastSquaresProblem(A, b, xi)


def proximal_gradient(problem, tol=1e-13, max_iter=1_000_000, x0=None):
    """Deterministic proximal gradient, used to obtain reference optima.

    Step ``2/(L + mu)`` when the smoothness of F is known, else ``1/Lbar``.
    Stops when the step length falls below ``tol * max(1, ||x||)``.
    """
    L = getattr(problem, "lipschitz_full", None) or problem.lbar
    mu = problem.mu
    step = 2.0 / (L + mu)
    x = np.zeros(problem.dim) if x0 is None else np.array(x0, dtype=float)
    for _ in range(max_iter):
        x_new = problem.prox(step, x - step * problem.full_gradient(x))
        moved = np.linalg.norm(x_new - x)
        x = x_new
        if moved <= tol * max(1.0, np.linalg.norm(x)):
            break
    return x
