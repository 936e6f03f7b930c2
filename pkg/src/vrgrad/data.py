"""LibSVM ingestion and synthetic least-squares instances.

Synthetic data use numpy's ``Generator(PCG64)`` seeded with the given integer
and ``standard_normal`` (ziggurat) variates, so problems are reproducible
across platforms for a fixed numpy major version.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import sparse

from .errors import MalformedLine, Unattainable
from .problems import LeastSquaresProblem, proximal_gradient

# |x_j| below this fraction of max_j |x_j| counts as zero
SPARSITY_RTOL = 1e-8


@dataclass
class Dataset:
    """Sparse rows with 1-based feature indices, as in the LibSVM format.

    ``columns`` maps the current feature ``j`` (1-based) to the original
    column ``columns[j - 1]``; it is the identity unless columns were dropped.
    """

    indices: List[np.ndarray]
    values: List[np.ndarray]
    labels: np.ndarray
    n_features: int
    columns: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if len(self.indices) != len(self.values) or len(self.indices) != len(self.labels):
            raise ValueError("rows and labels disagree in length")
        if len(self.labels) < 1:
            raise ValueError("dataset has no rows")
        if self.columns is None:
            self.columns = np.arange(1, self.n_features + 1)

    @property
    def n(self):
        return len(self.labels)

    def to_csr(self):
        """Feature matrix with 0-based columns."""
        indptr = np.zeros(self.n + 1, dtype=np.intp)
        indptr[1:] = np.cumsum([len(r) for r in self.indices])
        idx = np.concatenate(self.indices) - 1 if indptr[-1] else np.zeros(0, dtype=np.intp)
        vals = np.concatenate(self.values) if indptr[-1] else np.zeros(0)
        return sparse.csr_matrix((vals, idx, indptr), shape=(self.n, self.n_features))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.n_features == other.n_features
            and np.array_equal(self.labels, other.labels)
            and len(self.indices) == len(other.indices)
            and all(np.array_equal(a, b) for a, b in zip(self.indices, other.indices))
            and all(np.array_equal(a, b) for a, b in zip(self.values, other.values))
        )


def _fmt(v):
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def parse_libsvm(stream, n_features=None):
    """Parse ``label index:value ...`` lines; text after ``#`` is ignored."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    indices, values, labels = [], [], []
    max_idx = 0
    for line_no, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise MalformedLine(line_no, f"bad label {tokens[0]!r}") from None
        idx = np.empty(len(tokens) - 1, dtype=np.intp)
        val = np.empty(len(tokens) - 1)
        prev = 0
        for k, tok in enumerate(tokens[1:]):
            key, sep, v = tok.partition(":")
            try:
                j = int(key)
                x = float(v)
            except ValueError:
                raise MalformedLine(line_no, f"bad feature token {tok!r}") from None
            if not sep:
                raise MalformedLine(line_no, f"bad feature token {tok!r}")
            if j <= prev:
                raise MalformedLine(line_no, "feature indices must be positive and strictly increasing")
            prev = j
            idx[k] = j
            val[k] = x
        max_idx = max(max_idx, prev)
        indices.append(idx)
        values.append(val)
        labels.append(label)
    if not labels:
        raise MalformedLine(0, "no examples found")
    if n_features is not None and n_features < max_idx:
        raise ValueError(f"declared {n_features} features but saw index {max_idx}")
    return Dataset(indices, values, np.array(labels), n_features or max_idx)


def serialize_libsvm(d):
    lines = []
    for label, idx, val in zip(d.labels, d.indices, d.values):
        parts = [_fmt(label)] + [f"{j}:{_fmt(v)}" for j, v in zip(idx, val)]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def to_csv(d):
    """Debug export: header ``label,idx:val;idx:val`` then one row per example."""
    out = ["label,idx:val;idx:val"]
    for label, idx, val in zip(d.labels, d.indices, d.values):
        out.append(_fmt(label) + "," + ";".join(f"{j}:{_fmt(v)}" for j, v in zip(idx, val)))
    return "\n".join(out) + "\n"


def drop_zero_columns(d):
    """Remove features that are never nonzero; returns ``(dataset, dropped)``.

    ``dropped`` lists 1-based column indices of the input. Explicit zero
    entries are removed from the rows as well.
    """
    used = np.zeros(d.n_features + 1, dtype=bool)
    for idx, val in zip(d.indices, d.values):
        used[idx[val != 0]] = True
    keep = np.flatnonzero(used[1:]) + 1
    dropped = [int(j) for j in range(1, d.n_features + 1) if not used[j]]
    remap = np.zeros(d.n_features + 1, dtype=np.intp)
    remap[keep] = np.arange(1, keep.size + 1)
    indices, values = [], []
    for idx, val in zip(d.indices, d.values):
        nz = val != 0
        indices.append(remap[idx[nz]])
        values.append(val[nz].copy())
    columns = np.asarray(d.columns)[keep - 1]
    return Dataset(indices, values, d.labels.copy(), int(keep.size), columns), dropped


def least_squares_from_dataset(d, xi=0.0):
    """Labels are used directly as regression targets."""
    return LeastSquaresProblem(d.to_csr(), d.labels, xi)


def generate_1d_least_squares(n=100, seed=0):
    """``(1/n) sum_i (a_i x - b_i)^2`` with standard normal ``a_i, b_i``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(n)
    b = rng.standard_normal(n)
    x_star = np.array([float(a @ b) / float(a @ a)])
    return LeastSquaresProblem(a[:, None], b, 0.0, x_star=x_star)


def synthetic_lipschitz(n, kappa, seed=0):
    """``L_i ~ U(0, 2)`` and ``mu = mean(L) / kappa``; rate-theory inputs only."""
    rng = np.random.default_rng(seed)
    L = rng.uniform(0.0, 2.0, n)
    # U(0, 2) can return exactly 0
    L[L == 0] = np.finfo(float).tiny
    return L, float(L.mean()) / kappa


def sparsity(x):
    """Fraction of coordinates that are zero relative to the largest one."""
    x = np.abs(np.asarray(x, dtype=float))
    top = x.max() if x.size else 0.0
    if top == 0:
        return 1.0
    return float(np.mean(x < SPARSITY_RTOL * top))


def tune_l1_for_sparsity(A, b, target=(0.15, 0.20), max_steps=60):
    """Bisect the l1 weight until the lasso solution has the target sparsity.

    When no multiple of ``1/dim`` lies in ``target`` the upper end is raised
    to the next attainable level. Returns ``xi``.
    """
    unreg = LeastSquaresProblem(A, b, 0.0)
    dim = unreg.dim
    lo_s, hi_s = target
    if math.floor(hi_s * dim + 1e-9) < math.ceil(lo_s * dim - 1e-9):
        hi_s = math.ceil(lo_s * dim - 1e-9) / dim
    xi_hi = float(np.max(np.abs(unreg.full_gradient(np.zeros(dim)))))
    xi_lo = 0.0
    x = None
    for _ in range(max_steps):
        xi = 0.5 * (xi_lo + xi_hi)
        prob = LeastSquaresProblem(A, b, xi)
        x = proximal_gradient(prob, tol=1e-10, x0=x)
        s = sparsity(x)
        if s < lo_s - 1e-12:
            xi_lo = xi
        elif s > hi_s + 1e-12:
            xi_hi = xi
        else:
            return xi
    raise Unattainable(f"no l1 weight gives sparsity in [{lo_s}, {hi_s}] after {max_steps} steps")
