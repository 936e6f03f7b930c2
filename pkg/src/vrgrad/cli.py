"""Command-line front end: ``vrgrad rate|tune|solve|reproduce``.

Every command is driven by a flat ``key = value`` config (file and/or
``--set`` overrides) and is deterministic given that config. Exit codes:
0 ok, 2 no convergent rate, 3 divergence, 4 input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import data, dual, rates, sampling, solver
from .errors import MissingDataset, NonFinite, NoConvergentRate, VRGradError

EXIT_OK, EXIT_RATE, EXIT_DIVERGED, EXIT_INPUT = 0, 2, 3, 4

METHODS = ("saga", "lsvrg", "ilsvrg", "qsaga")
SAMPLINGS = ("uniform", "lipschitz", "improved")
PROBLEMS = ("synthetic_1d", "synthetic_lipschitz", "libsvm")
TARGETS = ("fig3_saga", "fig3_lsvrg", "fig3_qsaga", "fig3_ilsvrg", "fig1", "fig2", "libsvm_lasso")
STAT_COLUMNS = ("grad_evals", "dist2", "lyapunov", "objective")


class ConfigError(ValueError):
    pass


# --- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    target: str = ""
    problem: str = "synthetic_1d"
    n: int = 100
    kappa: float = 10.0
    data_seed: int = 0
    libsvm_path: str = ""
    drop_zero_columns: bool = True
    xi: float = 0.0
    target_sparsity: str = ""
    method: str = "saga"
    sampling: str = "uniform"
    lam: str = "opt"
    lambdas: str = "opt,max"
    eta: str = ""
    q: str = ""
    replacement: bool = False
    layout: str = "full_table"
    seeds: int = 1
    seed: int = 0
    iterations: int = 200
    record_every: int = 1
    lyapunov: bool = True
    curve: bool = False
    curve_points: int = 50
    curve_eta_min: float = 1e-5
    curve_out: str = ""
    fig1_n: str = "50,1000"
    fig1_kappa: str = "2,5,10,30,100"
    fig2_settings: str = "10000:2,50:100"
    epochs: int = 20

    # the config key "lambda" is a Python keyword
    _ALIASES = {"lambda": "lam"}

    @classmethod
    def from_mapping(cls, mapping):
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for raw_key, raw in mapping.items():
            key = cls._ALIASES.get(raw_key, raw_key)
            if key not in kinds:
                raise ConfigError(f"unknown config key {raw_key!r}")
            values[key] = _convert(raw_key, str(raw).strip(), kinds[key])
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {', '.join(PROBLEMS)}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {', '.join(METHODS)}")
        if self.sampling not in SAMPLINGS:
            raise ConfigError(f"sampling must be one of {', '.join(SAMPLINGS)}")
        if self.layout not in ("full_table", "anchor"):
            raise ConfigError("layout must be full_table or anchor")
        if self.target and self.target not in TARGETS:
            raise ConfigError(f"unknown reproduce target {self.target!r}")
        if self.n < 1 or self.seeds < 1 or self.iterations < 0 or self.record_every < 0:
            raise ConfigError("need n >= 1, seeds >= 1, iterations >= 0, record_every >= 0")
        if self.problem == "libsvm" and not self.libsvm_path and self.target != "libsvm_lasso":
            raise ConfigError("problem = libsvm needs libsvm_path")
        parse_lambda(self.lam)

    def to_lines(self):
        out = []
        for f in fields(self):
            key = "lambda" if f.name == "lam" else f.name
            out.append(f"{key} = {_render(getattr(self, f.name))}")
        return "\n".join(sorted(out)) + "\n"


def _render(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(key, raw, kind):
    try:
        if kind in ("bool", bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None
    return raw


def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    out = {}
    for line_no, line in enumerate(p.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{line_no}: expected key = value")
        out[key.strip()] = value.strip()
    return out


_MULTIPLE_OF_MAX = re.compile(r"^([0-9.eE+-]+)\s*\*?\s*max$")


def parse_lambda(spec):
    """``opt``, ``star``, ``max``, ``<c>*max`` or a positive number."""
    s = spec.strip().lower()
    if s in ("opt", "star", "max"):
        return s, None
    m = _MULTIPLE_OF_MAX.match(s)
    try:
        if m:
            c = float(m.group(1))
            if not c > 0:
                raise ValueError
            return "multiple", c
        v = float(s)
        if not v > 0:
            raise ValueError
        return "explicit", v
    except ValueError:
        raise ConfigError(f"bad step-size choice {spec!r}") from None


def resolve_threads(flag):
    raw = flag if flag is not None else os.environ.get("VRGRAD_THREADS", "1")
    try:
        t = int(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad thread count {raw!r}") from None
    if t < 1:
        raise ConfigError("thread count must be at least 1")
    return t


# --- building blocks ----------------------------------------------------------


@dataclass
class Instance:
    """Constants and (when available) the problem behind a config."""

    L: np.ndarray
    mu: float
    problem: object = None
    info: dict = None

    @property
    def n(self):
        return self.L.size

    def stats(self):
        d = {"n": int(self.n), "mu": self.mu, "lbar": float(self.L.mean()), "lmax": float(self.L.max())}
        d["kappa"] = d["lbar"] / self.mu
        if self.problem is not None:
            d["dim"] = int(self.problem.dim)
        d.update(self.info or {})
        return d


def _load_libsvm(path, cfg):
    p = Path(path)
    if not p.is_file():
        raise MissingDataset(f"dataset {path} not found")
    with p.open() as fh:
        d = data.parse_libsvm(fh)
    info = {"dataset": p.name}
    if cfg.drop_zero_columns:
        d, dropped = data.drop_zero_columns(d)
        info["dropped_columns"] = dropped
    xi = cfg.xi
    if cfg.target_sparsity:
        lo, hi = (float(v) for v in cfg.target_sparsity.split(","))
        xi = data.tune_l1_for_sparsity(d.to_csr(), d.labels, (lo, hi))
    info["xi"] = xi
    problem = data.least_squares_from_dataset(d, xi)
    return Instance(problem.lipschitz, problem.mu, problem, info)


def build_instance(cfg, need_problem=False):
    if cfg.problem == "synthetic_lipschitz":
        if need_problem:
            raise ConfigError("synthetic_lipschitz only provides constants; use synthetic_1d or libsvm")
        L, mu = data.synthetic_lipschitz(cfg.n, cfg.kappa, cfg.data_seed)
        return Instance(L, mu)
    if cfg.problem == "libsvm":
        return _load_libsvm(cfg.libsvm_path, cfg)
    problem = data.generate_1d_least_squares(cfg.n, cfg.data_seed)
    return Instance(problem.lipschitz, problem.mu, problem)


def build_distribution(kind, L, mu):
    if kind == "uniform":
        return sampling.uniform(L.size)
    if kind == "lipschitz":
        return sampling.lipschitz(L)
    return sampling.improved_saga(L, mu)[0]


def _eta_value(cfg, n):
    if not cfg.eta:
        return 1.0 / n
    try:
        eta = float(cfg.eta)
    except ValueError:
        raise ConfigError(f"bad eta {cfg.eta!r}") from None
    if not 0 < eta <= 1:
        raise ConfigError("eta must lie in (0, 1]")
    return eta


def build_strategy(cfg, n):
    if cfg.method == "saga":
        return dual.saga(n)
    if cfg.method in ("lsvrg", "ilsvrg"):
        if cfg.q:
            raise ConfigError(f"{cfg.method} takes eta, not q")
        make = dual.lsvrg if cfg.method == "lsvrg" else dual.ilsvrg
        return make(n, _eta_value(cfg, n))
    if cfg.q:
        try:
            q = int(cfg.q)
        except ValueError:
            raise ConfigError(f"bad q {cfg.q!r}") from None
    else:
        q = dual.q_from_eta(_eta_value(cfg, n), n) if cfg.eta else 1
    if not 1 <= q <= n:
        raise ConfigError("q must lie in [1, n]")
    return dual.qsaga(n, q, cfg.replacement)


def rate_inputs(inst, dist, strategy):
    return rates.RateInputs(inst.L, inst.mu, dist.p, strategy.eta(dist), strategy.coherent)


def corollary_values(method, samp, L, mu, strategy, dist):
    """Closed-form step-sizes for the configuration, or ``None`` if there are none."""
    if method == "saga":
        if samp == "improved":
            _, lam, rho = rates.saga_improved(L, mu)
            return {"lambda_max": None, "lambda_star": lam, "rho_star": rho}
        b = rates.saga_bounds(L, mu, samp)
    elif samp == "improved":
        return None
    else:
        eta = float(strategy.eta(dist)[0])
        rule = rates.lsvrg_bounds if method == "lsvrg" else rates.qsaga_bounds
        b = rule(L, mu, eta, samp)
    return {"lambda_max": b.lam_max, "lambda_star": b.lam_star, "rho_star": b.rho_star}


def literature_values(method, samp, L, mu, strategy, dist):
    if samp != "uniform" or method in ("ilsvrg", "qsaga"):
        return None
    if method == "saga":
        return rates.literature_steps(L, mu)
    return rates.literature_steps(L, mu, float(strategy.eta(dist)[0]))


def resolve_lambda(spec, inp, corollary):
    """Return ``(lam, source)`` for a step-size choice."""
    kind, value = parse_lambda(spec)
    if kind == "explicit":
        return value, "explicit"
    if kind == "star" and corollary is not None:
        return corollary["lambda_star"], "corollary"
    if kind in ("opt", "star"):
        return rates.solve_optimal_rate(inp).lam, "theorem_optimal"
    lam_max = rates.lambda_max(inp)
    if kind == "max":
        return lam_max, "max"
    return value * lam_max, f"{value!r}*max"


def certificate_for(inp, lam, source):
    if source == "theorem_optimal":
        return rates.solve_optimal_rate(inp)
    return rates.solve_rate_fixed_lambda(inp.with_lambda(lam))


def boundary_weights(inp, lam):
    """Lyapunov weights at ``lam``; at ``lambda_max`` itself the rate-zero weights."""
    try:
        return rates.solve_rate_fixed_lambda(inp.with_lambda(lam)).gamma_hat
    except NoConvergentRate:
        if lam > rates.lambda_max(inp) * (1.0 + 1e-12):
            return None
    lin = inp.with_lambda(lam)
    if inp.coherent:
        return rates.lyapunov_weights_coherent(lin, 0.0)
    _, delta = rates.nu_incoherent(inp, 0.0)
    return rates.lyapunov_weights_incoherent(lin, 0.0, delta)


# --- output helpers ----------------------------------------------------------


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([c if isinstance(c, str) else _fmt(c) for c in row])
    return buf.getvalue()


def json_text(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def emit(text, path):
    if path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
    else:
        sys.stdout.write(text)


def trace_table(bt, predicted_rho=None):
    """Rows of a :class:`BatchTrace`; several seeds give mean and 5/95 percentiles."""
    S = len(bt.seeds)
    cols = {name: getattr(bt, name).astype(float) for name in STAT_COLUMNS}
    if S == 1:
        header = ["k", *STAT_COLUMNS]
        rows = [[int(bt.k[r]), int(bt.grad_evals[0, r])] + [cols[c][0, r] for c in STAT_COLUMNS[1:]] for r in range(bt.k.size)]
    else:
        header = ["k", "grad_evals_mean"]
        stats = [cols["grad_evals"].mean(axis=0)]
        for name in STAT_COLUMNS[1:]:
            a = cols[name]
            header += [f"{name}_mean", f"{name}_p05", f"{name}_p95"]
            stats += [a.mean(axis=0), np.percentile(a, 5, axis=0), np.percentile(a, 95, axis=0)]
        rows = [[int(bt.k[r])] + [s[r] for s in stats] for r in range(bt.k.size)]
    if predicted_rho is not None:
        header.append("predicted")
        start = cols["lyapunov"].mean(axis=0)[0]
        for r, row in enumerate(rows):
            row.append(start * (1.0 - predicted_rho) ** float(bt.k[r]))
    return header, rows


# --- commands ----------------------------------------------------------------


def cmd_rate(cfg):
    inst = build_instance(cfg)
    dist = build_distribution(cfg.sampling, inst.L, inst.mu)
    strategy = build_strategy(cfg, inst.n)
    inp = rate_inputs(inst, dist, strategy)
    cor = corollary_values(cfg.method, cfg.sampling, inst.L, inst.mu, strategy, dist)
    lam, source = resolve_lambda(cfg.lam, inp, cor)
    cert = certificate_for(inp, lam, source)
    report = {
        "method": strategy.label,
        "sampling": cfg.sampling,
        "lambda_source": source,
        "problem": inst.stats(),
        "certificate": cert.as_dict(),
        "corollary": cor,
        "literature": literature_values(cfg.method, cfg.sampling, inst.L, inst.mu, strategy, dist),
    }
    return json_text(report)


def _method_block(bounds, report, theorem):
    d = report.as_dict()
    d.update({"lambda_max": bounds.lam_max, "lambda_star": bounds.lam_star, "rho_star": bounds.rho_star})
    d["nu"] = 1.0 / bounds.lam_star
    d["theorem_complexity"] = theorem
    return d


def complexity_curve(L, mu, grid):
    """Theorem and closed-form complexities over a grid of update frequencies."""
    header = [
        "eta",
        "lsvrg_full_table",
        "lsvrg_anchor",
        "qsaga",
        "lsvrg_full_table_closed",
        "lsvrg_anchor_closed",
        "qsaga_closed",
    ]
    rows = []
    for eta in grid:
        rows.append(
            [
                float(eta),
                rates.theorem_complexity(L, mu, eta, "lsvrg", "full_table"),
                rates.theorem_complexity(L, mu, eta, "lsvrg", "anchor"),
                rates.theorem_complexity(L, mu, eta, "qsaga"),
                rates.lsvrg_complexity(L, mu, eta, "full_table"),
                rates.lsvrg_complexity(L, mu, eta, "anchor"),
                rates.qsaga_complexity(L, mu, eta),
            ]
        )
    return header, rows


def tune_report(L, mu):
    n = L.size
    improved, S = sampling.improved_saga(L, mu)
    _, lam_imp, rho_imp = rates.saga_improved(L, mu)
    saga = {s: rates.saga_bounds(L, mu, s)._asdict() for s in ("uniform", "lipschitz")}
    for s in saga.values():
        s["nu"] = 1.0 / s["lam_star"]
    saga["improved"] = {
        "lambda_star": lam_imp,
        "rho_star": rho_imp,
        "nu": 1.0 / lam_imp,
        "p_star": improved.p,
        "complexity": rates.saga_complexity(L, mu).total_complexity,
    }
    lsvrg = {}
    for layout in ("full_table", "anchor"):
        rep = rates.lsvrg_eta_star(L, mu, layout)
        b = rates.lsvrg_bounds(L, mu, rep.eta_star, "lipschitz")
        lsvrg[layout] = _method_block(b, rep, rates.theorem_complexity(L, mu, rep.eta_star, "lsvrg", layout))
    rep = rates.qsaga_eta_star(L, mu)
    b = rates.qsaga_bounds(L, mu, rep.eta_star, "lipschitz")
    qs = _method_block(b, rep, rates.theorem_complexity(L, mu, rep.eta_star, "qsaga"))
    return {"saga": saga, "lsvrg": lsvrg, "qsaga_ilsvrg": qs, "one_over_n": 1.0 / n}


def _curve_grid(cfg):
    if not 0 < cfg.curve_eta_min < 1 or cfg.curve_points < 2:
        raise ConfigError("need 0 < curve_eta_min < 1 and curve_points >= 2")
    return np.logspace(math.log10(cfg.curve_eta_min), 0.0, cfg.curve_points)


def cmd_tune(cfg, out=None):
    inst = build_instance(cfg)
    report = {"problem": inst.stats(), **tune_report(inst.L, inst.mu)}
    if cfg.curve:
        path = cfg.curve_out or (str(Path(out).with_suffix(".curve.csv")) if out else "")
        if not path:
            raise ConfigError("curve = true needs curve_out or --out")
        header, rows = complexity_curve(inst.L, inst.mu, _curve_grid(cfg))
        emit(csv_text(header, rows), path)
        report["curve_file"] = Path(path).name
    return json_text(report)


def solve_setup(cfg, inst):
    problem = inst.problem
    dist = build_distribution(cfg.sampling, inst.L, inst.mu)
    strategy = build_strategy(cfg, inst.n)
    inp = rate_inputs(inst, dist, strategy)
    cor = corollary_values(cfg.method, cfg.sampling, inst.L, inst.mu, strategy, dist)
    lam, source = resolve_lambda(cfg.lam, inp, cor)
    spec = None
    if cfg.lyapunov:
        gamma = boundary_weights(inp, lam)
        if gamma is not None:
            spec = solver.LyapunovSpec.from_problem(problem, gamma)
    run_cfg = solver.RunConfig(
        problem,
        dist,
        strategy,
        lam,
        iterations=cfg.iterations,
        layout=cfg.layout,
        record_every=cfg.record_every,
        record_lyapunov=spec,
    )
    return run_cfg, inp, lam, source


def cmd_solve(cfg, threads=1):
    inst = build_instance(cfg, need_problem=True)
    run_cfg, inp, lam, source = solve_setup(cfg, inst)
    seeds = range(cfg.seed, cfg.seed + cfg.seeds)
    bt = solver.run_seeds(run_cfg, seeds, threads)
    header, rows = trace_table(bt)
    return csv_text(header, rows)


# --- reproduce ---------------------------------------------------------------

PRESETS = {
    "fig3_saga": {"method": "saga", "sampling": "improved", "seeds": "1000", "iterations": "1000"},
    "fig3_lsvrg": {"method": "lsvrg", "sampling": "lipschitz", "seeds": "1000", "iterations": "50"},
    "fig3_qsaga": {"method": "qsaga", "sampling": "uniform", "q": "1", "seeds": "1000", "iterations": "1500"},
    "fig3_ilsvrg": {"method": "ilsvrg", "sampling": "uniform", "seeds": "1000", "iterations": "1500"},
    "fig1": {"problem": "synthetic_lipschitz"},
    "fig2": {"problem": "synthetic_lipschitz", "data_seed": "7"},
    "libsvm_lasso": {"problem": "libsvm", "target_sparsity": "0.15,0.20", "lyapunov": "false", "record_every": "0"},
}


def _lambda_tag(spec):
    return re.sub(r"[^0-9a-z.]+", "", spec.lower().replace("*", "x"))


def reproduce_fig3(cfg, threads):
    inst = build_instance(cfg, need_problem=True)
    files, summary = {}, {}
    for spec in [s.strip() for s in cfg.lambdas.split(",") if s.strip()]:
        sub = replace(cfg, lam=spec)
        run_cfg, inp, lam, source = solve_setup(sub, inst)
        try:
            rho = certificate_for(inp, lam, source).rho
        except NoConvergentRate:
            rho = None
        bt = solver.run_seeds(run_cfg, range(cfg.seed, cfg.seed + cfg.seeds), threads)
        header, rows = trace_table(bt, predicted_rho=rho)
        name = f"{cfg.target}_lambda-{_lambda_tag(spec)}.csv"
        files[name] = csv_text(header, rows)
        summary[spec] = {"lambda": lam, "lambda_source": source, "rho": rho, "file": name}
    files[f"{cfg.target}_rates.json"] = json_text({"problem": inst.stats(), "runs": summary})
    return files


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def reproduce_fig1(cfg):
    rows = []
    for n in _int_list(cfg.fig1_n):
        for kappa in _float_list(cfg.fig1_kappa):
            L, mu = data.synthetic_lipschitz(n, kappa, [cfg.data_seed, n, round(kappa * 1000)])
            eta = 1.0 / n
            cases = [("saga", s) for s in SAMPLINGS] + [("lsvrg", s) for s in ("uniform", "lipschitz")]
            for method, samp in cases:
                if method == "saga":
                    if samp == "improved":
                        dist, lam, rho_c = rates.saga_improved(L, mu)
                    else:
                        dist = build_distribution(samp, L, mu)
                        b = rates.saga_bounds(L, mu, samp)
                        lam, rho_c = b.lam_star, b.rho_star
                    inp = rates.RateInputs(L, mu, dist.p, dist.p, False, lam)
                else:
                    dist = build_distribution(samp, L, mu)
                    b = rates.lsvrg_bounds(L, mu, eta, samp)
                    lam, rho_c = b.lam_star, b.rho_star
                    inp = rates.RateInputs(L, mu, dist.p, eta, True, lam)
                rho_t = rates.solve_rate_fixed_lambda(inp).rho
                rows.append([method, n, float(kappa), samp, lam, rho_c, rho_t, (rho_t - rho_c) / rho_t])
    header = ["method", "n", "kappa", "sampling", "lambda", "rho_corollary", "rho_theorem", "rel_error"]
    return {"fig1.csv": csv_text(header, rows)}


def reproduce_fig2(cfg):
    files, markers = {}, []
    grid = _curve_grid(cfg)
    for item in cfg.fig2_settings.split(","):
        n_text, _, k_text = item.partition(":")
        n, kappa = int(n_text), float(k_text)
        L, mu = data.synthetic_lipschitz(n, kappa, cfg.data_seed)
        header, rows = complexity_curve(L, mu, grid)
        tag = f"fig2_n{n}_kappa{k_text.strip()}"
        files[f"{tag}.csv"] = csv_text(header, rows)
        curves = np.array([r[1:4] for r in rows])
        for j, (method, layout) in enumerate((("lsvrg", "full_table"), ("lsvrg", "anchor"), ("qsaga", "full_table"))):
            rep = rates.lsvrg_eta_star(L, mu, layout) if method == "lsvrg" else rates.qsaga_eta_star(L, mu)
            at = rates.theorem_complexity(L, mu, rep.eta_star, method, layout)
            best = float(curves[:, j].min())
            markers.append([n, float(kappa), f"{method}_{layout}", rep.eta_star, at, best, at / best])
    header = ["n", "kappa", "method", "eta_star", "complexity_at_eta_star", "grid_min", "ratio"]
    files["fig2_markers.csv"] = csv_text(header, markers)
    return files


LASSO_RUNS = (
    ("saga_uniform_star", {"method": "saga", "sampling": "uniform", "lam": "star"}),
    ("saga_lipschitz_star", {"method": "saga", "sampling": "lipschitz", "lam": "star"}),
    ("saga_improved_star", {"method": "saga", "sampling": "improved", "lam": "star"}),
    ("lsvrg_lipschitz_etastar", {"method": "lsvrg", "sampling": "lipschitz", "lam": "star"}),
    ("lsvrg_lipschitz_5etastar", {"method": "lsvrg", "sampling": "lipschitz", "lam": "star"}),
    ("qsaga_lipschitz_etastar", {"method": "qsaga", "sampling": "lipschitz", "lam": "star"}),
    ("ilsvrg_lipschitz_etastar", {"method": "ilsvrg", "sampling": "lipschitz", "lam": "star"}),
)


def reproduce_libsvm(cfg, threads):
    paths = [p.strip() for p in cfg.libsvm_path.split(",") if p.strip()]
    if not paths:
        raise MissingDataset("libsvm_lasso needs libsvm_path (comma-separated LibSVM files)")
    files, summary = {}, {}
    for path in paths:
        inst = _load_libsvm(path, cfg)
        n = inst.n
        stem = Path(path).stem
        eta_l = rates.lsvrg_eta_star(inst.L, inst.mu, "full_table").eta_star
        eta_q = rates.qsaga_eta_star(inst.L, inst.mu).eta_star
        iterations = cfg.epochs * n
        every = cfg.record_every or max(1, n // 10)
        runs = {}
        for name, overrides in LASSO_RUNS:
            eta = {"lsvrg": eta_l, "qsaga": eta_q, "ilsvrg": eta_q}.get(overrides["method"])
            if "5etastar" in name:
                eta = min(1.0, 5 * eta)
            sub = replace(
                cfg,
                iterations=iterations,
                record_every=every,
                eta="" if eta is None else repr(eta),
                q="",
                **overrides,
            )
            run_cfg, _, lam, source = solve_setup(sub, inst)
            bt = solver.run_seeds(run_cfg, range(cfg.seed, cfg.seed + cfg.seeds), threads)
            header, rows = trace_table(bt)
            fname = f"libsvm_{stem}_{name}.csv"
            files[fname] = csv_text(header, rows)
            runs[name] = {"lambda": lam, "lambda_source": source, "eta": eta, "file": fname}
        summary[stem] = {"problem": inst.stats(), "runs": runs}
    files["libsvm_lasso_summary.json"] = json_text(summary)
    return files


def cmd_reproduce(cfg, threads=1):
    """Return ``{file name: text}`` for the target, manifest included."""
    t = cfg.target
    if t.startswith("fig3_"):
        files = reproduce_fig3(cfg, threads)
    elif t == "fig1":
        files = reproduce_fig1(cfg)
    elif t == "fig2":
        files = reproduce_fig2(cfg)
    elif t == "libsvm_lasso":
        files = reproduce_libsvm(cfg, threads)
    else:
        raise ConfigError("reproduce needs a target")
    files["manifest.txt"] = cfg.to_lines()
    return files


# --- entry point -------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="vrgrad", description="Variance-reduced proximal gradient toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("rate", "certified linear rate as JSON"),
        ("tune", "closed-form step-sizes, samplings and update frequencies as JSON"),
        ("solve", "run the solver and write a CSV trace"),
        ("reproduce", "regenerate the data behind a figure"),
    ):
        p = sub.add_parser(name, help=help_text)
        if name == "reproduce":
            p.add_argument("target", nargs="?", choices=TARGETS)
        p.add_argument("--config", help="flat key = value file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", help="output file (directory for reproduce)")
        p.add_argument("--seeds", type=int, help="number of seeds")
        p.add_argument("--threads", help="worker processes (default: $VRGRAD_THREADS or 1)")
    return parser


def load_config(args):
    mapping = {}
    if getattr(args, "target", None):
        mapping.update(PRESETS[args.target])
        mapping["target"] = args.target
    if args.config:
        file_map = read_config(args.config)
        if "target" in file_map and args.command == "reproduce" and not getattr(args, "target", None):
            mapping.update(PRESETS.get(file_map["target"], {}))
        mapping.update(file_map)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        mapping[key.strip()] = value.strip()
    if args.seeds is not None:
        mapping["seeds"] = str(args.seeds)
    return ExperimentConfig.from_mapping(mapping)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        threads = resolve_threads(args.threads)
        if args.command == "rate":
            emit(cmd_rate(cfg), args.out)
        elif args.command == "tune":
            emit(cmd_tune(cfg, args.out), args.out)
        elif args.command == "solve":
            emit(cmd_solve(cfg, threads), args.out)
        else:
            if not cfg.target:
                raise ConfigError("reproduce needs a target (argument or config key)")
            out = Path(args.out or f"vrgrad_{cfg.target}")
            out.mkdir(parents=True, exist_ok=True)
            for name, text in cmd_reproduce(cfg, threads).items():
                (out / name).write_text(text)
            print(f"wrote {cfg.target} to {out}", file=sys.stderr)
    except NoConvergentRate as e:
        print(f"vrgrad: no convergent rate: {e}", file=sys.stderr)
        return EXIT_RATE
    except NonFinite as e:
        print(f"vrgrad: diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, VRGradError, ValueError, OSError) as e:
        print(f"vrgrad: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
