"""Primal sampling distributions with O(1) alias-table draws."""
from __future__ import annotations

import numpy as np

from .errors import NonPositiveConstant

LABELS = ("uniform", "lipschitz", "improved_saga", "custom")


def _alias_table(p):
    """Vose's alias construction: ``accept[k]`` and ``alias[k]`` per column."""
    n = len(p)
    scaled = np.asarray(p, dtype=float) * n
    accept = np.ones(n)
    alias = np.arange(n)
    small = [k for k in range(n) if scaled[k] < 1.0]
    large = [k for k in range(n) if scaled[k] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        accept[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            small.append(g)
        else:
            large.append(g)
    # leftovers are 1 up to rounding
    for k in small + large:
        accept[k] = 1.0
        alias[k] = k
    return accept, alias


class PrimalDistribution:
    """Probabilities ``p_i > 0`` over component indices.

    Weights are normalized on construction. :meth:`draw` uses a single uniform
    variate per sample: its integer part picks the alias column and its
    fractional part decides between the column and its alias.
    """

    def __init__(self, weights, label="custom"):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("need a nonempty 1-D weight vector")
        if not np.all(np.isfinite(w)) or not np.all(w > 0):
            raise NonPositiveConstant("sampling weights must be finite and positive")
        if label not in LABELS:
            raise ValueError(f"unknown label {label!r}")
        w = w / w.max()
        self.p = w / w.sum()
        self.p.setflags(write=False)
        self.label = label
        self.n = w.size
        self._accept, self._alias = _alias_table(self.p)

    def __repr__(self):
        return f"PrimalDistribution(label={self.label!r}, n={self.n})"

    def pick(self, u):
        """Map uniform variates in ``[0, 1)`` to indices (scalar or array)."""
        if np.ndim(u) == 0:
            v = float(u) * self.n
            k = min(int(v), self.n - 1)
            return k if v - k < self._accept[k] else int(self._alias[k])
        v = np.asarray(u, dtype=float) * self.n
        k = np.minimum(v.astype(np.intp), self.n - 1)
        return np.where(v - k < self._accept[k], k, self._alias[k])

    def draw(self, rng):
        return self.pick(rng.random())

    def draw_many(self, rng, size):
        return self.pick(rng.random(size))


def _positive(L):
    L = np.asarray(L, dtype=float)
    if L.size == 0 or not np.all(L > 0):
        raise NonPositiveConstant("constants must be positive")
    return L


def uniform(n):
    if n < 1:
        raise ValueError("n must be at least 1")
    return PrimalDistribution(np.ones(n), "uniform")


def lipschitz(L):
    return PrimalDistribution(_positive(L), "lipschitz")


def improved_saga_weights(L, mu):
    """Weights ``4 L_i + n mu + sqrt((4 L_i)^2 + (n mu)^2)``."""
    L = _positive(L)
    if not mu > 0:
        raise NonPositiveConstant("mu must be positive")
    a = 4.0 * L
    c = L.size * mu
    return a + c + np.hypot(a, c)


def improved_saga(L, mu):
    """Return the balanced SAGA sampling and its scale ``S`` (mean weight).

    The matching step-size is ``2 / S``.
    """
    w = improved_saga_weights(L, mu)
    return PrimalDistribution(w, "improved_saga"), float(w.mean())


def draw(d, rng):
    return d.draw(rng)
