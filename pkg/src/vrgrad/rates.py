"""Linear-rate certificates, step-size rules and complexity estimates.

Notation used in this module:

* ``s_i = L_i / (n p_i)`` is the smoothness of component ``i`` as seen
  through the primal sampling; ``s_max >= mu`` always holds.
* ``nu`` is the effective smoothness that enters the primal contraction
  ``rho = mu * lam * (2 - nu * lam)``; it grows with the target rate ``rho``
  because faster rates demand heavier weights on the dual error.
* ``gamma_hat`` are the weights of the dual terms of the Lyapunov function
  ``||x - x*||^2 + sum_i gamma_hat_i ||y_i - y_i*||^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .dual import FullTable, q_from_eta
from .errors import NoConvergentRate, RhoTooLarge, TooManyOutcomes
from .sampling import improved_saga
from .solver import LyapunovSpec, apply_step, lyapunov_value

# s_max within this relative distance of mu counts as the degenerate case
DEGENERATE_RTOL = 1e-9
# keeps nu finite at the upper end of the rate bracket
GUARD_RTOL = 1e-12
# rate shrink factor in the degenerate incoherent branch (open rate interval)
DEGENERATE_SHRINK = 1e-9
LIMIT_FRACTION = 0.95
MAX_OUTCOMES = 10**6
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class RateInputs:
    L: np.ndarray
    mu: float
    p: np.ndarray
    eta: np.ndarray
    coherent: bool = False
    lam: Optional[float] = None

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=float)
        self.p = np.asarray(getattr(self.p, "p", self.p), dtype=float)
        n = self.L.size
        self.eta = np.broadcast_to(np.asarray(self.eta, dtype=float), (n,)).copy()
        if self.p.shape != (n,):
            raise ValueError("L and p must have the same length")
        if not (np.all(self.L > 0) and np.all(self.p > 0) and np.all(self.eta > 0)):
            raise ValueError("L, p and eta must be positive")
        if np.any(self.eta > 1):
            raise ValueError("update frequencies cannot exceed 1")
        if abs(self.p.sum() - 1.0) > 1e-12 * n:
            raise ValueError("sampling probabilities must sum to 1")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.coherent and np.ptp(self.eta) > 0:
            raise ValueError("coherent updates need a common update frequency")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("step-size must be positive")
        self.s = self.L / (n * self.p)
        s_max = float(self.s.max())
        if s_max < self.mu * (1.0 - DEGENERATE_RTOL):
            raise ValueError(
                f"max_i L_i/(n p_i) = {s_max:.6g} is below mu = {self.mu:.6g}; inconsistent constants"
            )

    @classmethod
    def from_problem(cls, problem, dist, strategy, lam=None):
        return cls(problem.lipschitz, problem.mu, dist.p, strategy.eta(dist), strategy.coherent, lam)

    @property
    def n(self):
        return self.L.size

    @property
    def s_max(self):
        return float(self.s.max())

    @property
    def degenerate(self):
        """True when every ``L_i / (n p_i)`` equals ``mu`` (to rounding)."""
        return self.s_max <= self.mu * (1.0 + DEGENERATE_RTOL)

    @property
    def eta_min(self):
        return float(self.eta.min())

    def with_lambda(self, lam):
        return RateInputs(self.L, self.mu, self.p, self.eta, self.coherent, lam)


@dataclass
class RateCertificate:
    rho: float
    lam: float
    nu: float
    delta_star: Optional[float]
    gamma_hat: np.ndarray
    rho_P: float
    rho_D: float
    limiting_side: str
    lam_max: float
    coherent: bool
    residual: float = 0.0

    def as_dict(self):
        return {
            "rho": self.rho,
            "lambda": self.lam,
            "lambda_max": self.lam_max,
            "nu": self.nu,
            "delta_star": self.delta_star,
            "rho_P": self.rho_P,
            "rho_D": self.rho_D,
            "limiting_side": self.limiting_side,
            "coherent": self.coherent,
            "residual": self.residual,
            "gamma_hat": [float(g) for g in self.gamma_hat],
        }


class StepBounds(NamedTuple):
    lam_max: float
    lam_star: float
    rho_star: float


@dataclass
class ComplexityReport:
    method: str
    eta_star: Optional[float]
    total_complexity: float
    cost_factor: float
    closed_form: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        d = {
            "method": self.method,
            "eta_star": self.eta_star,
            "total_complexity": self.total_complexity,
            "cost_factor": self.cost_factor,
            "closed_form": self.closed_form,
        }
        d.update(self.extra)
        return d


# --- effective smoothness ------------------------------------------------


def _check_rho(rho, bound):
    if rho < 0:
        raise ValueError("rate must be nonnegative")
    if rho >= bound:
        raise RhoTooLarge(f"rate {rho:.6g} must stay below the update frequency {bound:.6g}")


def _minimax_delta(a, b, mu):
    """``min_{delta>0} max_i a_i + b_i + a_i/delta + delta (b_i - mu)``.

    Needs ``max_i b_i > mu``. Returns ``(nu, delta_star)``.
    """
    c = b - mu
    top = np.flatnonzero(b == b.max())
    j = top[np.argmax(a[top])]
    if a[j] >= a.max():
        # one index dominates for every delta; the 1-D problem is explicit
        delta = math.sqrt(a[j] / c[j])
        return float(a[j] + b[j] + 2.0 * math.sqrt(a[j] * c[j])), delta

    base = a + b

    def phi(t):
        d = math.exp(t)
        return float(np.max(base + a / d + d * c))

    pos = c > 0
    cand = np.log(a[pos] / c[pos]) / 2.0
    lo, hi = float(cand.min()) - 1.0, float(cand.max()) + 1.0
    step = 1.0
    while phi(hi + step) < phi(hi):
        hi += step
        step *= 2.0
    # phi is convex in delta, hence unimodal in log(delta)
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = phi(x1), phi(x2)
    while hi - lo > 1e-12 * max(1.0, abs(lo), abs(hi)):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = phi(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = phi(x2)
    t = (lo + hi) / 2.0
    return phi(t), math.exp(t)


def nu_incoherent(inp, rho):
    """Effective smoothness for independent dual updates.

    Returns ``(nu, delta_star)``; ``delta_star`` is ``None`` in the degenerate
    case where the infimum over ``delta`` is not attained.
    """
    eta = inp.eta
    _check_rho(rho, inp.eta_min)
    ratio = eta / (eta - rho)
    if inp.degenerate:
        return float(inp.mu + inp.mu * ratio.max()), None
    return _minimax_delta(inp.s * ratio, inp.s, inp.mu)


def nu_coherent(inp, rho):
    """Effective smoothness when all duals are refreshed together."""
    if inp.degenerate:
        if rho < 0 or rho > 1:
            raise RhoTooLarge("rate must lie in [0, 1]")
        return float(inp.mu)
    eta = float(inp.eta[0])
    _check_rho(rho, eta)
    return float(inp.mu + (inp.s_max - inp.mu) * (1.0 + math.sqrt(eta / (eta - rho))) ** 2)


def effective_nu(inp, rho):
    if inp.coherent:
        return nu_coherent(inp, rho), None
    return nu_incoherent(inp, rho)


def lambda_max(inp):
    """Largest step-size with a positive certified rate: ``2 / nu(0)``."""
    return 2.0 / effective_nu(inp, 0.0)[0]


# --- Lyapunov weights ----------------------------------------------------


def lyapunov_weights_incoherent(inp, rho, delta):
    if inp.lam is None:
        raise ValueError("weights need a step-size")
    _check_rho(rho, inp.eta_min)
    factor = 1.0 if delta is None or math.isinf(delta) else 1.0 + 1.0 / delta
    if delta is not None and not delta > 0:
        raise ValueError("delta must be positive")
    n = inp.n
    return inp.lam**2 / (n**2 * inp.p) / (inp.eta - rho) * factor


def lyapunov_weights_coherent(inp, rho):
    if inp.lam is None:
        raise ValueError("weights need a step-size")
    n = inp.n
    if inp.degenerate:
        return np.zeros(n)
    eta = float(inp.eta[0])
    _check_rho(rho, eta)
    clamp = np.maximum(0.0, 1.0 - n * inp.p * inp.mu / inp.L)
    return inp.lam**2 / (n**2 * inp.p) / (eta - rho) * clamp * (1.0 + math.sqrt((eta - rho) / eta))


# --- contraction factors of the individual bounds ------------------------


def primal_contraction(inp, gamma, delta, lam):
    """Primal factor ``mu lam (2 - nu lam)`` for given meta-parameters.

    Returns ``(rho_P, nu)``.
    """
    gamma = np.asarray(gamma, dtype=float)
    s = inp.s
    nu = float(np.max((1 + 1 / delta) * s * inp.eta * gamma + (1 + delta) * s - delta * inp.mu))
    return inp.mu * lam * (2.0 - nu * lam), nu


def dual_contraction(eta, gamma):
    """Dual factor for independent updates; needs every ``gamma_i > 0``."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("independent-update dual factor needs positive gamma")
    return float(np.min(np.asarray(eta) - 1.0 / gamma))


def dual_contraction_coherent(inp, gamma):
    """Dual factor for coherent updates; ``gamma_i = 0`` only where ``s_i <= mu``."""
    gamma = np.asarray(gamma, dtype=float)
    eta = float(inp.eta[0])
    out = np.ones(inp.n)
    pos = gamma > 0
    zero_bad = (~pos) & (inp.s > inp.mu * (1.0 + DEGENERATE_RTOL))
    if np.any(zero_bad):
        raise ValueError("gamma_i = 0 is only allowed where L_i/(n p_i) <= mu")
    out[pos] = eta - (1.0 - inp.mu / inp.s[pos]) / gamma[pos]
    return float(out.min())


# --- rate solvers ----------------------------------------------------------


def _bisect(f, lo, hi):
    """Root of an increasing ``f`` with ``f(lo) < 0 < f(hi)``; returns the lower end."""
    flo = f(lo)
    if flo >= 0:
        return lo
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if fm < 0:
            lo = mid
        else:
            hi = mid
    return lo


def _rho_upper(inp):
    return min(1.0, inp.eta_min * (1.0 - GUARD_RTOL))


def _limiting_side(inp, rho, lam):
    if inp.coherent and inp.degenerate:
        return "primal"
    if rho >= LIMIT_FRACTION * inp.eta_min:
        return "dual"
    if rho >= LIMIT_FRACTION * inp.mu * lam * (2.0 - inp.s_max * lam):
        return "primal"
    return "balanced"


def _certificate(inp, lam, rho_root, lam_max):
    nu, delta = effective_nu(inp, rho_root)
    residual = rho_root - inp.mu * lam * (2.0 - nu * lam)
    rho = rho_root
    lin = inp.with_lambda(lam)
    if inp.coherent:
        gamma_hat = lyapunov_weights_coherent(lin, rho)
        if inp.degenerate:
            gamma = np.zeros(inp.n)
        else:
            eta = float(inp.eta[0])
            gamma = np.maximum(0.0, 1.0 - inp.mu / inp.s) / (eta - rho)
        rho_D = dual_contraction_coherent(inp, gamma)
    else:
        if inp.degenerate:
            rho = rho_root * (1.0 - DEGENERATE_SHRINK)
        gamma_hat = lyapunov_weights_incoherent(lin, rho, delta)
        rho_D = dual_contraction(inp.eta, 1.0 / (inp.eta - rho))
    rho_P = inp.mu * lam * (2.0 - nu * lam)
    return RateCertificate(
        rho=float(rho),
        lam=float(lam),
        nu=float(nu),
        delta_star=None if delta is None else float(delta),
        gamma_hat=gamma_hat,
        rho_P=float(rho_P),
        rho_D=float(rho_D),
        limiting_side=_limiting_side(inp, rho, lam),
        lam_max=float(lam_max),
        coherent=inp.coherent,
        residual=float(residual),
    )


def solve_rate_fixed_lambda(inp):
    """Certified rate at the step-size ``inp.lam`` (bisection on the rate)."""
    lam = inp.lam
    if lam is None:
        raise ValueError("inputs carry no step-size")
    lam_max = lambda_max(inp)
    if lam >= lam_max:
        raise NoConvergentRate(lam, lam_max)
    mu = inp.mu
    if inp.coherent and inp.degenerate:
        rho = min(1.0, 1.0 - (1.0 - mu * lam) ** 2)  # = mu lam (2 - mu lam), exact at lam = 1/mu
    else:
        rho = _bisect(lambda r: r - mu * lam * (2.0 - effective_nu(inp, r)[0] * lam), 0.0, _rho_upper(inp))
    return _certificate(inp, lam, rho, lam_max)


def solve_optimal_rate(inp):
    """Best certified rate over step-sizes; the optimum is at ``lam = 1/nu``."""
    lam_max = lambda_max(inp)
    mu = inp.mu
    if inp.coherent and inp.degenerate:
        lam = 1.0 / mu
        rho = min(1.0, 1.0 - (1.0 - mu * lam) ** 2)  # = mu lam (2 - mu lam), exact at lam = 1/mu
        return _certificate(inp, lam, rho, lam_max)
    rho = _bisect(lambda r: r - mu / effective_nu(inp, r)[0], 0.0, _rho_upper(inp))
    lam = 1.0 / effective_nu(inp, rho)[0]
    return _certificate(inp, lam, rho, lam_max)


# --- explicit step-size rules ----------------------------------------------


def _stats(L, mu):
    L = np.asarray(L, dtype=float)
    if L.size == 0 or not np.all(L > 0) or not mu > 0:
        raise ValueError("need positive constants")
    return L, L.size, float(L.mean()), float(L.max()), float(L.min())


def c_constant(mu, L_ref):
    """``2 + 2 sqrt(1 - mu / L_ref)``; lies in ``[2, 4)``."""
    return 2.0 + 2.0 * math.sqrt(max(0.0, 1.0 - mu / L_ref))


def d_constant(mu, L_ref):
    """``4 - 3 mu / L_ref``; lies in ``[1, 4)``."""
    return 4.0 - 3.0 * mu / L_ref


def _star(K, penalty):
    return 2.0 / (K + penalty + math.hypot(K, penalty))


def _bounds(K, penalty, mu):
    lam_star = _star(K, penalty)
    return StepBounds(2.0 / K, lam_star, mu * lam_star)


def saga_bounds(L, mu, sampling):
    L, n, lbar, lmax, lmin = _stats(L, mu)
    if sampling == "uniform":
        return _bounds(c_constant(mu, lmax) * lmax, n * mu, mu)
    if sampling == "lipschitz":
        p_min = lmin / (n * lbar)
        return _bounds(c_constant(mu, lbar) * lbar, mu / p_min, mu)
    raise ValueError(f"no closed-form SAGA bounds for sampling {sampling!r}")


def saga_improved(L, mu):
    """Balanced SAGA sampling with step ``2/S``; returns ``(dist, lam, rho)``."""
    dist, S = improved_saga(L, mu)
    lam = 2.0 / S
    return dist, lam, mu * lam


def lsvrg_bounds(L, mu, eta, sampling):
    L, n, lbar, lmax, _ = _stats(L, mu)
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    ref = lmax if sampling == "uniform" else lbar
    if sampling not in ("uniform", "lipschitz"):
        raise ValueError(f"unknown sampling {sampling!r}")
    return _bounds(d_constant(mu, ref) * ref, mu / eta, mu)


def qsaga_bounds(L, mu, eta, sampling):
    """Bounds shared by q-SAGA and IL-SVRG."""
    L, n, lbar, lmax, _ = _stats(L, mu)
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    ref = lmax if sampling == "uniform" else lbar
    if sampling not in ("uniform", "lipschitz"):
        raise ValueError(f"unknown sampling {sampling!r}")
    return _bounds(c_constant(mu, ref) * ref, mu / eta, mu)


ilsvrg_bounds = qsaga_bounds


# --- complexity ------------------------------------------------------------


def _cost_offset(layout):
    if layout == "full_table":
        return 1.0
    if layout == "anchor":
        return 2.0
    raise ValueError(f"unknown layout {layout!r}")


def lsvrg_complexity(L, mu, eta, layout="full_table"):
    """``(c + n eta)(D_L Lbar/mu + 1/eta)`` with ``c`` = 1 (table) or 2 (anchor)."""
    L, n, lbar, _, _ = _stats(L, mu)
    return (_cost_offset(layout) + n * eta) * (d_constant(mu, lbar) * lbar / mu + 1.0 / eta)


def qsaga_complexity(L, mu, eta):
    L, n, lbar, _, _ = _stats(L, mu)
    return (1.0 + n * eta) * (c_constant(mu, lbar) * lbar / mu + 1.0 / eta)


def lsvrg_eta_star(L, mu, layout="full_table"):
    L, n, lbar, _, _ = _stats(L, mu)
    c = _cost_offset(layout)
    D = d_constant(mu, lbar)
    eta = min(1.0, math.sqrt(c * mu / (n * D * lbar)))
    return ComplexityReport(
        method=f"lsvrg[{layout}]",
        eta_star=eta,
        total_complexity=lsvrg_complexity(L, mu, eta, layout),
        cost_factor=c + n * eta,
        closed_form=(math.sqrt(n) + math.sqrt(c * D * lbar / mu)) ** 2,
    )


def qsaga_eta_star(L, mu):
    """Frequency rule shared by q-SAGA and IL-SVRG; also reports the q-SAGA batch q."""
    L, n, lbar, _, _ = _stats(L, mu)
    C = c_constant(mu, lbar)
    eta = min(1.0, math.sqrt(mu / (n * C * lbar)))
    return ComplexityReport(
        method="qsaga/ilsvrg",
        eta_star=eta,
        total_complexity=qsaga_complexity(L, mu, eta),
        cost_factor=1.0 + n * eta,
        closed_form=(math.sqrt(n) + math.sqrt(C * lbar / mu)) ** 2,
        extra={"q": q_from_eta(eta, n)},
    )


def saga_complexity(L, mu):
    """Expected evaluations (up to ``log 1/eps``) of SAGA with the balanced sampling."""
    _, lam, rho = saga_improved(L, mu)
    return ComplexityReport(
        method="saga[improved]",
        eta_star=None,
        total_complexity=1.0 / rho,
        cost_factor=1.0,
        extra={"lambda": lam},
    )


def theorem_complexity(L, mu, eta, method, layout="full_table"):
    """Cost per iteration divided by the optimal certified rate (Lipschitz sampling)."""
    L = np.asarray(L, dtype=float)
    n = L.size
    p = L / L.sum()
    coherent = method == "lsvrg"
    if method not in ("lsvrg", "qsaga", "ilsvrg"):
        raise ValueError(f"unknown method {method!r}")
    offset = _cost_offset(layout) if coherent else 1.0
    cert = solve_optimal_rate(RateInputs(L, mu, p, eta, coherent))
    return (offset + n * eta) / cert.rho


# --- Lyapunov evaluation and brute-force checks -----------------------------


def lyapunov_eval(x, y, x_star, y_star, gamma_hat):
    return lyapunov_value(x, y, x_star, y_star, gamma_hat)


def lyapunov_terms_PDV(problem, p, eta, gamma, delta, lam, x, y):
    """The primal bound ``P(x)``, dual bound ``D(y)`` and variance term ``V(x)``.

    ``gamma_i = 0`` follows the ``gamma_i / gamma_i := 1`` convention.
    """
    p = np.asarray(getattr(p, "p", p), dtype=float)
    eta = np.asarray(eta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    n = problem.n
    xs = problem.x_star
    ys = problem.gradients(xs)
    dx = np.asarray(x, dtype=float) - xs
    dF = problem.full_gradient(x) - problem.full_gradient(xs)
    dG = problem.gradients(x) - ys
    g2 = np.einsum("ij,ij->i", dG, dG)
    V = float(np.sum((1 + delta) * (eta * gamma / delta + 1) / (n**2 * p) * g2) - delta * (dF @ dF))
    P = float(dx @ dx - 2 * lam * (dF @ dx) + lam**2 * V)
    base = (1 + 1 / delta) * lam**2 / (n**2 * p)
    gamma_hat = gamma * base
    dY = np.asarray(y, dtype=float) - ys
    y2 = np.einsum("ij,ij->i", dY, dY)
    mean_dy = dY.mean(axis=0)
    D = float(np.sum(((1 - eta) * gamma_hat + base) * y2) - (1 + 1 / delta) * lam**2 * (mean_dy @ mean_dy))
    return P, D, V


def expected_next_lyapunov(problem, dist, strategy, lam, x, y, gamma_hat):
    """Exact conditional expectation of the next Lyapunov value by enumeration."""
    total = problem.n * strategy.outcome_count()
    if total > MAX_OUTCOMES:
        raise TooManyOutcomes(f"{total} outcomes exceed the enumeration limit {MAX_OUTCOMES}")
    spec = LyapunovSpec.from_problem(problem, gamma_hat)
    base = FullTable(y)
    expect = 0.0
    for i in range(problem.n):
        for prob, update_set in strategy.outcomes(i):
            st = base.copy()
            x_next, _ = apply_step(problem, dist, lam, np.asarray(x, dtype=float), st, i, update_set)
            expect += dist.p[i] * prob * spec(x_next, st.table)
    return expect, spec


def one_step_contraction_oracle(problem, dist, strategy, lam, x, y, cert):
    """``(E[next Lyapunov], (1 - rho) * current Lyapunov)`` by exhaustive enumeration."""
    lhs, spec = expected_next_lyapunov(problem, dist, strategy, lam, x, y, cert.gamma_hat)
    return lhs, (1.0 - cert.rho) * spec(x, y)


def literature_steps(L, mu, eta=None):
    """Earlier uniform-sampling step-sizes, printed next to ours for comparison only.

    Without ``eta`` the SAGA rule is returned, otherwise the L-SVRG one with
    penalty ``mu / eta``.
    """
    L, n, _, lmax, _ = _stats(L, mu)
    penalty = n * mu if eta is None else mu / eta
    K = 4.0 * lmax
    return {"lambda_max": 1.0 / K, "lambda_star": _star(K, penalty)}
