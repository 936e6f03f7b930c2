"""Dual-update strategies and dual storage layouts.

A strategy decides which stored gradients ``y_i`` are refreshed each
iteration. Update sets are returned as sorted integer arrays.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import IncoherentUpdate

KINDS = ("saga", "lsvrg", "ilsvrg", "qsaga")
# stored-table running sums are recomputed from scratch this often
SUM_REFRESH_PERIOD = 10_000


@dataclass(frozen=True)
class DualStrategy:
    kind: str
    n: int
    q: float = 1.0
    replacement: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dual strategy {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.kind in ("lsvrg", "ilsvrg") and not 0 < self.q <= 1:
            raise ValueError("update probability q must lie in (0, 1]")
        if self.kind == "qsaga":
            if int(self.q) != self.q or not 1 <= self.q <= self.n:
                raise ValueError("q-SAGA needs an integer q in [1, n]")
            object.__setattr__(self, "q", int(self.q))

    @property
    def coherent(self):
        return self.kind == "lsvrg"

    @property
    def label(self):
        if self.kind == "saga":
            return "saga"
        if self.kind == "qsaga":
            mode = "with" if self.replacement else "without"
            return f"qsaga(q={self.q}, {mode} replacement)"
        return f"{self.kind}(q={self.q:g})"

    def eta(self, p=None):
        """Expected update frequency of every dual variable."""
        n = self.n
        if self.kind == "saga":
            if p is None:
                raise ValueError("SAGA frequencies depend on the primal sampling")
            return np.array(getattr(p, "p", p), dtype=float)
        if self.kind in ("lsvrg", "ilsvrg"):
            return np.full(n, float(self.q))
        if self.replacement:
            return np.full(n, 1.0 - (1.0 - 1.0 / n) ** self.q)
        return np.full(n, self.q / n)

    @property
    def variates_per_step(self):
        """Uniform variates consumed by one update-set draw."""
        if self.kind == "saga":
            return 0
        if self.kind == "lsvrg":
            return 1
        if self.kind == "qsaga":
            return self.q
        return self.n

    def update_set_from_uniforms(self, primal_index, u):
        """Update set determined by ``variates_per_step`` uniforms ``u``."""
        n = self.n
        if self.kind == "saga":
            return np.array([primal_index], dtype=np.intp)
        if self.kind == "lsvrg":
            return np.arange(n) if u[0] < self.q else np.empty(0, dtype=np.intp)
        if self.kind == "ilsvrg":
            return np.flatnonzero(u < self.q)
        if self.replacement:
            return np.unique(np.minimum((u * n).astype(np.intp), n - 1))
        return np.sort(_partial_shuffle(u[None, :], n)[0])

    def update_pairs_from_uniforms(self, primal_indices, U):
        """Batch form of :meth:`update_set_from_uniforms`.

        ``U`` has one row of ``variates_per_step`` uniforms per draw. Returns
        ``(rows, cols)``: draw ``rows[k]`` refreshes dual ``cols[k]``.
        """
        S, n = len(primal_indices), self.n
        if self.kind == "saga":
            return np.arange(S), np.asarray(primal_indices, dtype=np.intp)
        if self.kind == "qsaga" and not self.replacement:
            return np.repeat(np.arange(S), self.q), _partial_shuffle(U, n).ravel()
        if self.kind == "lsvrg":
            mask = np.repeat(U[:, :1] < self.q, n, axis=1)
        elif self.kind == "ilsvrg":
            mask = U < self.q
        else:
            mask = np.zeros((S, n), dtype=bool)
            mask[np.arange(S)[:, None], np.minimum((U * n).astype(np.intp), n - 1)] = True
        return np.nonzero(mask)

    def draw_update_set(self, primal_index, rng):
        m = self.variates_per_step
        u = rng.random(m) if m else None
        return self.update_set_from_uniforms(primal_index, u)

    def outcome_count(self):
        """Number of distinct (update set) outcomes per primal index."""
        n = self.n
        if self.kind == "saga":
            return 1
        if self.kind == "lsvrg":
            return 2
        if self.kind == "ilsvrg":
            return 2**n
        return n**self.q if self.replacement else math.comb(n, self.q)

    def outcomes(self, primal_index):
        """Yield ``(probability, update_set)`` pairs conditional on the primal index."""
        n = self.n
        if self.kind == "saga":
            yield 1.0, np.array([primal_index], dtype=np.intp)
        elif self.kind == "lsvrg":
            yield self.q, np.arange(n)
            if self.q < 1.0:
                yield 1.0 - self.q, np.empty(0, dtype=np.intp)
        elif self.kind == "ilsvrg":
            q = self.q
            for mask in itertools.product((False, True), repeat=n):
                m = np.array(mask)
                k = int(m.sum())
                yield q**k * (1.0 - q) ** (n - k), np.flatnonzero(m)
        elif self.replacement:
            w = 1.0 / n**self.q
            for seq in itertools.product(range(n), repeat=self.q):
                yield w, np.unique(np.array(seq, dtype=np.intp))
        else:
            w = 1.0 / math.comb(n, self.q)
            for combo in itertools.combinations(range(n), self.q):
                yield w, np.array(combo, dtype=np.intp)


def _partial_shuffle(U, n):
    """First ``q`` entries of a Fisher-Yates shuffle of ``range(n)`` per row of ``U`` (``(S, q)``)."""
    S, q = U.shape
    perm = np.tile(np.arange(n), (S, 1))
    ar = np.arange(S)
    for j in range(q):
        r = j + np.minimum((U[:, j] * (n - j)).astype(np.intp), n - j - 1)
        pj = perm[:, j].copy()
        perm[:, j] = perm[ar, r]
        perm[ar, r] = pj
    return perm[:, :q]


def saga(n):
    return DualStrategy("saga", n)


def lsvrg(n, q):
    return DualStrategy("lsvrg", n, float(q))


def ilsvrg(n, q):
    return DualStrategy("ilsvrg", n, float(q))


def qsaga(n, q, replacement=False):
    return DualStrategy("qsaga", n, int(q), bool(replacement))


def q_from_eta(eta, n):
    """Nearest non-zero integer to ``eta * n``, capped at ``n``."""
    return int(min(n, max(1, round(eta * n))))


def expected_update_frequency(s, p=None):
    return s.eta(p)


def draw_update_set(s, primal_index, rng):
    return s.draw_update_set(primal_index, rng)


class FullTable:
    """Every dual variable stored as a row of ``table`` plus their running sum."""

    layout = "full_table"

    def __init__(self, table):
        self.table = np.array(table, dtype=float)
        self.total = self.table.sum(axis=0)

    @classmethod
    def initialize(cls, problem, x):
        """Coherent start ``y_i = grad f_i(x)``; costs ``n`` evaluations."""
        return cls(problem.gradients(x)), problem.n

    def copy(self):
        other = FullTable.__new__(FullTable)
        other.table = self.table.copy()
        other.total = self.total.copy()
        return other

    def read(self, problem, i):
        return self.table[i], 0

    def values(self, problem):
        return self.table

    def refresh_sum(self):
        self.total = self.table.sum(axis=0)

    def apply(self, problem, update_set, x, cached=None):
        """Refresh the rows in ``update_set`` with gradients at ``x``.

        ``cached`` is an optional ``(index, gradient at x)`` pair that is reused
        instead of re-evaluated. Returns the number of fresh evaluations.
        """
        m = len(update_set)
        if m == 0:
            return 0
        if m == 1:
            i = int(update_set[0])
            if cached is not None and cached[0] == i:
                g, evals = cached[1], 0
            else:
                g, evals = problem.gradient(i, x), 1
            self.total += g - self.table[i]
            self.table[i] = g
            return evals
        if m == problem.n:
            new = problem.gradients(x)
        else:
            new = problem.gradient_rows(update_set, x)
        evals = m
        if cached is not None:
            pos = np.searchsorted(update_set, cached[0])
            if pos < m and update_set[pos] == cached[0]:
                new[pos] = cached[1]
                evals -= 1
        if m == problem.n:
            self.table[:] = new
            self.total = new.sum(axis=0)
        else:
            self.total += (new - self.table[update_set]).sum(axis=0)
            self.table[update_set] = new
        return evals


class Anchor:
    """Low-storage layout: the point ``x_hat`` where all duals were taken, and their sum.

    Only valid for coherent strategies; reading ``y_i`` costs one evaluation.
    """

    layout = "anchor"

    def __init__(self, x_hat, total):
        self.x_hat = np.array(x_hat, dtype=float)
        self.total = np.array(total, dtype=float)

    @classmethod
    def initialize(cls, problem, x):
        return cls(x, problem.n * problem.full_gradient(x)), problem.n

    def copy(self):
        return Anchor(self.x_hat, self.total)

    def read(self, problem, i):
        return problem.gradient(i, self.x_hat), 1

    def values(self, problem):
        return problem.gradients(self.x_hat)

    def refresh_sum(self):
        pass

    def apply(self, problem, update_set, x, cached=None):
        m = len(update_set)
        if m == 0:
            return 0
        if m != problem.n:
            raise IncoherentUpdate(f"anchor layout cannot refresh {m} of {problem.n} duals")
        self.x_hat = np.array(x, dtype=float)
        self.total = problem.n * problem.full_gradient(x)
        return problem.n


LAYOUTS = {"full_table": FullTable, "anchor": Anchor}


def init_storage(layout, problem, x):
    """Build a storage of the given layout initialized coherently at ``x``."""
    try:
        cls = LAYOUTS[layout]
    except KeyError:
        raise ValueError(f"unknown storage layout {layout!r}") from None
    return cls.initialize(problem, x)


def apply_dual_update(st, s, update_set, problem, x, cached=None):
    if st.layout == "anchor" and not s.coherent and len(update_set) not in (0, problem.n):
        raise IncoherentUpdate("anchor layout requires a coherent strategy")
    return st.apply(problem, update_set, x, cached)


def dual_read(st, problem, i):
    return st.read(problem, i)
