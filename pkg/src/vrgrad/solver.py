"""The proximal variance-reduced stochastic gradient iteration."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dual import SUM_REFRESH_PERIOD, init_storage
from .errors import IncoherentUpdate, NonFinite


@dataclass
class LyapunovSpec:
    """Reference point and weights of ``||x - x*||^2 + sum_i w_i ||y_i - y_i*||^2``."""

    x_star: np.ndarray
    y_star: np.ndarray
    gamma_hat: np.ndarray

    @classmethod
    def from_problem(cls, problem, gamma_hat):
        x_star = problem.x_star
        return cls(x_star, problem.gradients(x_star), np.asarray(gamma_hat, dtype=float))

    def __call__(self, x, table):
        return lyapunov_value(x, table, self.x_star, self.y_star, self.gamma_hat)


def lyapunov_value(x, table, x_star, y_star, gamma_hat):
    dx = np.asarray(x) - x_star
    v = float(dx @ dx)
    w = np.asarray(gamma_hat, dtype=float)
    if np.any(w > 0):
        dy = np.asarray(table) - y_star
        v += float(w @ np.einsum("ij,ij->i", dy, dy))
    return v


@dataclass
class RunConfig:
    problem: object
    distribution: object
    strategy: object
    lam: float
    iterations: int = 0
    layout: str = "full_table"
    seed: int = 0
    record_every: int = 1
    record_lyapunov: Optional[LyapunovSpec] = None
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("step-size must be positive")
        if self.iterations < 0 or self.record_every < 1:
            raise ValueError("iterations must be >= 0 and record_every >= 1")
        if self.layout == "anchor" and not self.strategy.coherent:
            raise IncoherentUpdate("anchor layout requires a coherent dual strategy")
        n = self.problem.n
        if self.distribution.n != n or self.strategy.n != n:
            raise ValueError("problem, sampling and strategy disagree on n")


@dataclass
class SolverState:
    x: np.ndarray
    dual: object
    rng: np.random.Generator
    k: int = 0
    grad_evals: int = 0


@dataclass
class Trace:
    k: list = field(default_factory=list)
    grad_evals: list = field(default_factory=list)
    dist2: list = field(default_factory=list)
    lyapunov: list = field(default_factory=list)
    objective: list = field(default_factory=list)

    COLUMNS = ("k", "grad_evals", "dist2", "lyapunov", "objective")

    def append(self, k, evals, dist2, lyap, obj):
        self.k.append(k)
        self.grad_evals.append(evals)
        self.dist2.append(dist2)
        self.lyapunov.append(lyap)
        self.objective.append(obj)

    def __len__(self):
        return len(self.k)

    def rows(self):
        return list(zip(self.k, self.grad_evals, self.dist2, self.lyapunov, self.objective))

    def column(self, name):
        return np.asarray(getattr(self, name), dtype=float)


def init_state(cfg):
    x0 = np.zeros(cfg.problem.dim) if cfg.x0 is None else np.array(cfg.x0, dtype=float)
    dual, evals = init_storage(cfg.layout, cfg.problem, x0)
    return SolverState(x0, dual, np.random.default_rng(cfg.seed), 0, evals)


def apply_step(problem, dist, lam, x, dual, primal_index, update_set):
    """One deterministic step given the sampled primal index and update set.

    Mutates ``dual``; returns ``(x_next, gradient evaluations)``.
    """
    i = primal_index
    g = problem.gradient(i, x)
    y_i, evals = dual.read(problem, i)
    est = (g - y_i) / (problem.n * dist.p[i]) + dual.total / problem.n
    with np.errstate(over="ignore", invalid="ignore"):
        x_next = problem.prox(lam, x - lam * est)
    # the dual refresh uses gradients at the current iterate, not x_next
    evals += 1 + dual.apply(problem, update_set, x, cached=(i, g))
    return x_next, evals


def pvrsg_step(state, cfg):
    """Advance ``state`` by one iteration in place and return it."""
    i = cfg.distribution.draw(state.rng)
    update_set = cfg.strategy.draw_update_set(i, state.rng)
    x_next, evals = apply_step(
        cfg.problem, cfg.distribution, cfg.lam, state.x, state.dual, i, update_set
    )
    state.k += 1
    if not np.all(np.isfinite(x_next)):
        raise NonFinite(state.k)
    state.x = x_next
    state.grad_evals += evals
    if state.k % SUM_REFRESH_PERIOD == 0:
        state.dual.refresh_sum()
    return state


def _record(trace, state, cfg):
    problem = cfg.problem
    x_star = problem.x_star
    with np.errstate(over="ignore", invalid="ignore"):
        dist2 = float(np.sum((state.x - x_star) ** 2)) if x_star is not None else float("nan")
        lyap = float("nan")
        if cfg.record_lyapunov is not None:
            lyap = cfg.record_lyapunov(state.x, state.dual.values(problem))
        obj = problem.objective(state.x)
    trace.append(state.k, state.grad_evals, dist2, lyap, obj)


def run(cfg):
    """Run ``cfg.iterations`` steps, recording every ``cfg.record_every`` steps.

    The final iterate is always recorded. Deterministic for a fixed seed.
    """
    state = init_state(cfg)
    trace = Trace()
    _record(trace, state, cfg)
    for _ in range(cfg.iterations):
        pvrsg_step(state, cfg)
        if state.k % cfg.record_every == 0 or state.k == cfg.iterations:
            _record(trace, state, cfg)
    return trace


def estimator_values(state, cfg):
    """Row ``i`` is the gradient estimate produced when index ``i`` is drawn."""
    problem = cfg.problem
    G = problem.gradients(state.x)
    Y = state.dual.values(problem)
    scale = 1.0 / (problem.n * cfg.distribution.p)
    return (G - Y) * scale[:, None] + state.dual.total / problem.n


def estimator_variance_probe(state, cfg, samples, rng=None):
    """Empirical variance of the gradient estimate over fresh primal draws.

    Uses its own generator so the solver state is left untouched.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(0) if rng is None else rng
    est = estimator_values(state, cfg)[cfg.distribution.draw_many(rng, samples)]
    dev = est - est.mean(axis=0)
    return float(np.einsum("ij,ij->i", dev, dev).mean())


# --- many seeds at once ------------------------------------------------------

# dense working arrays per group of seeds stay below this many floats
BATCH_ELEMENT_BUDGET = 4_000_000
# uniform variates are pre-drawn per seed this many steps at a time
VARIATE_BLOCK = 512


@dataclass
class BatchTrace:
    """Traces of several seeds on a shared record grid; value arrays are ``(S, R)``."""

    seeds: list
    k: np.ndarray
    grad_evals: np.ndarray
    dist2: np.ndarray
    lyapunov: np.ndarray
    objective: np.ndarray

    def trace(self, j):
        t = Trace()
        for r in range(self.k.size):
            t.append(
                int(self.k[r]),
                int(self.grad_evals[j, r]),
                float(self.dist2[j, r]),
                float(self.lyapunov[j, r]),
                float(self.objective[j, r]),
            )
        return t

    @classmethod
    def from_traces(cls, seeds, traces):
        col = lambda name: np.array([getattr(t, name) for t in traces], dtype=float)
        return cls(
            list(seeds),
            np.asarray(traces[0].k, dtype=np.int64),
            np.array([t.grad_evals for t in traces], dtype=np.int64),
            col("dist2"),
            col("lyapunov"),
            col("objective"),
        )

    @classmethod
    def concat(cls, parts):
        return cls(
            [s for p in parts for s in p.seeds],
            parts[0].k,
            np.concatenate([p.grad_evals for p in parts]),
            np.concatenate([p.dist2 for p in parts]),
            np.concatenate([p.lyapunov for p in parts]),
            np.concatenate([p.objective for p in parts]),
        )


def _record_steps(iterations, every):
    ks = list(range(0, iterations + 1, every))
    if ks[-1] != iterations:
        ks.append(iterations)
    return np.array(ks, dtype=np.int64)


def _run_group(cfg, seeds):
    """Vectorized full-table iteration over a group of seeds.

    Every seed owns a generator and consumes exactly the variates that
    :func:`pvrsg_step` would, so trajectories match :func:`run` per seed.
    """
    problem, dist, strategy = cfg.problem, cfg.distribution, cfg.strategy
    n, lam, S = problem.n, cfg.lam, len(seeds)
    ar = np.arange(S)
    m = strategy.variates_per_step
    rngs = [np.random.default_rng(s) for s in seeds]
    x0 = np.zeros(problem.dim) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
    X = np.repeat(x0[None, :], S, axis=0)
    T = np.repeat(problem.gradients(x0)[None], S, axis=0)
    tot = T.sum(axis=1)
    evals = np.full(S, n, dtype=np.int64)
    scale = 1.0 / (n * dist.p)
    x_star = problem.x_star
    lyap = cfg.record_lyapunov

    # path choice must not depend on S so that grouping leaves results unchanged
    dense_refresh = strategy.kind == "lsvrg" or float(np.mean(strategy.eta(dist.p))) > 0.25
    ks = _record_steps(cfg.iterations, cfg.record_every)
    R = ks.size
    out_evals = np.zeros((S, R), dtype=np.int64)
    out_d2, out_ly, out_obj = (np.full((S, R), np.nan) for _ in range(3))

    def record(r):
        out_evals[:, r] = evals
        if x_star is not None:
            D = X - x_star
            out_d2[:, r] = np.einsum("sj,sj->s", D, D)
        if lyap is not None:
            D = X - lyap.x_star
            v = np.einsum("sj,sj->s", D, D)
            if np.any(lyap.gamma_hat > 0):
                dY = T - lyap.y_star[None]
                v = v + np.einsum("i,sij,sij->s", lyap.gamma_hat, dY, dY)
            out_ly[:, r] = v
        out_obj[:, r] = problem.objective_batch(X)

    record(0)
    r_next = 1
    block = None
    for k in range(1, cfg.iterations + 1):
        b = (k - 1) % VARIATE_BLOCK
        if b == 0:
            steps = min(VARIATE_BLOCK, cfg.iterations - k + 1)
            block = np.stack([g.random((steps, 1 + m)) for g in rngs])
        U = block[:, b, :]
        I = dist.pick(U[:, 0])
        g = problem.gradient_batch(I, X)
        yI = T[ar, I]
        est = (g - yI) * scale[I][:, None] + tot / n
        with np.errstate(over="ignore", invalid="ignore"):
            X_next = problem.prox(lam, X - lam * est)
        if strategy.kind == "saga":
            tot += g - yI
            T[ar, I] = g
            evals += 1
        else:
            rows, cols = strategy.update_pairs_from_uniforms(I, U[:, 1:])
            own = cols == I[rows]
            evals += 1 + np.bincount(rows, minlength=S) - np.bincount(rows[own], minlength=S)
            if not dense_refresh:
                # few refreshes: evaluate only the (seed, index) pairs involved
                G = problem.gradient_batch(cols, X[rows])
                G[own] = g[rows[own]]
                np.add.at(tot, rows, G - T[rows, cols])
                T[rows, cols] = G
            elif rows.size:
                mask = np.zeros((S, n), dtype=bool)
                mask[rows, cols] = True
                hit = np.flatnonzero(mask.any(axis=1))
                G = problem.gradients_batch(X[hit])
                G[np.arange(hit.size), I[hit]] = g[hit]
                T[hit] = np.where(mask[hit][:, :, None], G, T[hit])
                tot[hit] = T[hit].sum(axis=1)
        bad = ~np.all(np.isfinite(X_next), axis=1)
        if bad.any():
            raise NonFinite(k)
        X = X_next
        if k % SUM_REFRESH_PERIOD == 0:
            tot = T.sum(axis=1)
        if r_next < R and ks[r_next] == k:
            record(r_next)
            r_next += 1
    return BatchTrace(list(seeds), ks, out_evals, out_d2, out_ly, out_obj)


def _serial_group(cfg, seeds):
    from dataclasses import replace

    traces = [run(replace(cfg, seed=int(s))) for s in seeds]
    return BatchTrace.from_traces(seeds, traces)


def _group_worker(args):
    cfg, seeds = args
    if cfg.layout == "full_table":
        return _run_group(cfg, seeds)
    return _serial_group(cfg, seeds)


def run_seeds(cfg, seeds, threads=1):
    """Run ``cfg`` once per seed and return a :class:`BatchTrace` in seed order.

    Full-table runs are vectorized across seeds; results do not depend on
    ``threads`` or on how seeds are grouped.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    per = max(1, BATCH_ELEMENT_BUDGET // (2 * cfg.problem.n * cfg.problem.dim))
    if threads > 1:
        per = min(per, -(-len(seeds) // threads))
    groups = [seeds[i : i + per] for i in range(0, len(seeds), per)]
    jobs = [(cfg, g) for g in groups]
    if threads > 1 and len(groups) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_group_worker, jobs))
    else:
        parts = [_group_worker(j) for j in jobs]
    return BatchTrace.concat(parts)
