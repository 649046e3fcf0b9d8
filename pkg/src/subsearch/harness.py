"""Experiment pipeline: configs, reference optima, and CSV trace emission.

A Trace is one method run on one problem: the initial point plus one
StepRecord per iteration, with gradient norms recorded through the audit
path so instrumentation never touches the per-iteration product budget.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import logdet as _logdet
from . import matfact as _matfact
from . import network as _network
from . import optimizers as _optimizers
from .data import Dataset, gen_logistic, gen_quadratic, parse_libsvm
from .data import standardize as _standardize
from .network import NetObjective, init_params
from .objectives import LcpObjective
from .optimizers import StepRecord
from .subsolver import SubProblem, SubSolverOptions, solve

MODELS = ("logistic", "lsq", "net2", "net2_reg", "matfact", "logdet")

CSV_HEADER = ("iter,f,subopt,gnorm,products_cum,alpha1,beta1,alpha2,beta2,"
              "gamma,delta,inner_iters,elapsed_s")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: str
    method: str
    iters: int
    data: str | None = None          # libsvm path; None -> synthetic
    kind: str = "logistic"           # synthetic generator kind
    n: int = 200
    d: int = 20
    seed: int = 0
    hidden: int = 10                 # hidden units / factorization rank
    lam: str = "0"                   # "0", "1/n", or a float literal
    standardize: bool = False
    fstar: float | None = None
    out: str | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(
                f"unknown model {self.model!r}; choose from {MODELS}")
        if self.iters < 0:
            raise ConfigError("iters must be >= 0")
        self.method = canonical_method(self.method, self.model)


def methods_for_model(model: str) -> tuple[str, ...]:
    if model in ("logistic", "lsq"):
        return tuple(_optimizers.LCP_METHODS)
    if model in ("net2", "net2_reg"):
        return tuple(_network.NET_METHODS)
    if model == "matfact":
        return tuple(_matfact.MF_SCHEMES)
    return ("rank1", "rank2")


def canonical_method(name: str, model: str) -> str:
    """Resolve a method name, accepting underscore aliases (`gd+m_so`)."""
    methods = methods_for_model(model)
    if name in methods:
        return name
    if "_" in name:
        head, _, tail = name.partition("_")
        candidate = f"{head}({tail.replace('_', '+')})"
        if candidate in methods:
            return candidate
    raise ConfigError(
        f"unknown method {name!r} for model {model!r}; "
        f"choose from: {', '.join(sorted(methods))}")


def config_from_json(text: str, overrides: dict | None = None
                     ) -> ExperimentConfig:
    """Build a config from a JSON document; explicit overrides win."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"bad JSON config: {e}")
    if not isinstance(doc, dict):
        raise ConfigError("JSON config must be an object")
    if overrides:
        doc.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(doc) - set(ExperimentConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        return ExperimentConfig(**doc)
    except TypeError as e:
        raise ConfigError(str(e))


def resolve_lambda(lam: str | float, n: int) -> float:
    if isinstance(lam, (int, float)):
        value = float(lam)
    elif lam == "1/n":
        value = 1.0 / n
    else:
        try:
            value = float(lam)
        except ValueError:
            raise ConfigError(f"bad lambda {lam!r}; use 0, 1/n, or a float")
    if value < 0:
        raise ConfigError("lambda must be nonnegative")
    return value


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.data is not None:
        try:
            with open(cfg.data, "r", encoding="utf-8") as fh:
                ds = parse_libsvm(fh.read())
        except OSError as e:
            raise ConfigError(f"cannot read {cfg.data}: {e}")
    elif cfg.kind == "logistic":
        ds = gen_logistic(cfg.n, cfg.d, cfg.seed)
    elif cfg.kind == "quadratic":
        ds = gen_quadratic(cfg.n, cfg.d, cfg.seed)
    else:
        raise ConfigError(f"unknown synthetic kind {cfg.kind!r}")
    if cfg.standardize:
        ds = _standardize(ds)
    return ds


@dataclass
class Trace:
    config: ExperimentConfig
    f0: float
    gnorm0: float
    records: list[StepRecord]
    gnorms: list[float]
    fstar: float | None = None

    def __len__(self):
        return len(self.records) + 1

    def rows(self):
        """Yield one CSV row (list of cells) per iteration, 0 first."""
        def num(v):
            return "" if v is None else "%.17g" % v

        sub0 = "" if self.fstar is None else num(self.f0 - self.fstar)
        yield ["0", num(self.f0), sub0, num(self.gnorm0), "0",
               "", "", "", "", "", "", "0", "0"]
        cum = 0
        for k, (rec, gn) in enumerate(zip(self.records, self.gnorms),
                                      start=1):
            cum += rec.products
            sub = "" if self.fstar is None else num(rec.f - self.fstar)
            yield [str(k), num(rec.f), sub, num(gn), str(cum),
                   num(rec.alpha1), num(rec.beta1), num(rec.alpha2),
                   num(rec.beta2), num(rec.gamma), num(rec.delta),
                   str(rec.inner_iters), num(rec.elapsed_s)]


def emit_csv(trace: Trace) -> str:
    lines = [CSV_HEADER]
    lines.extend(",".join(row) for row in trace.rows())
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> list[dict]:
    """Inverse of emit_csv: list of dicts, empty cells -> None."""
    lines = text.strip("\n").split("\n")
    cols = lines[0].split(",")
    if cols != CSV_HEADER.split(","):
        raise ValueError("unexpected CSV header")
    out = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for name, cell in zip(cols, cells):
            if cell == "":
                row[name] = None
            elif name in ("iter", "products_cum", "inner_iters"):
                row[name] = int(cell)
            else:
                row[name] = float(cell)
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# model adapters: build the problem, report f/gradient without counters

def _net_raw_grad(Xd, y, W, v, lam):
    M = Xd @ W
    T = np.tanh(M)
    gg = 2.0 * (T @ v - y)
    gv = T.T @ gg + lam * v
    R = (gg[:, None] * (1.0 - T * T)) * v[None, :]
    gW = Xd.T @ R + lam * W
    return gW, gv


def _net_raw_value(Xd, y, W, v, lam):
    r = np.tanh(Xd @ W) @ v - y
    val = float(r @ r)
    if lam > 0:
        val += 0.5 * lam * (float(np.sum(W * W)) + float(v @ v))
    return val


def _collect(runner, cb_factory):
    gnorms = []

    def cb(k, state, rec):
        gnorms.append(cb_factory(state))
    _, records = runner(cb)
    return records, gnorms


def _run_trace(cfg: ExperimentConfig) -> Trace:
    model = cfg.model
    if model in ("logistic", "lsq"):
        ds = load_dataset(cfg)
        lam = resolve_lambda(cfg.lam, ds.n)
        loss = "logistic" if model == "logistic" else "least_squares"
        obj = LcpObjective(loss, ds, lam)
        Xd = ds.X.dense()
        f0 = obj.f_value_margin(np.zeros(ds.d), np.zeros(ds.n))
        gnorm0 = float(np.linalg.norm(Xd.T @ obj.g_grad(np.zeros(ds.n))))

        def gn(state):
            g = Xd.T @ obj.g_grad(state.m)
            if lam > 0:
                g = g + lam * state.w
            return float(np.linalg.norm(g))

        records, gnorms = _collect(
            lambda cb: _optimizers.run(cfg.method, obj, cfg.iters,
                                       callback=cb), gn)
    elif model in ("net2", "net2_reg"):
        ds = load_dataset(cfg)
        lam = resolve_lambda(cfg.lam, ds.n)
        if model == "net2_reg" and lam == 0.0:
            lam = 1.0 / ds.n
        obj = NetObjective(ds, cfg.hidden, lam)
        Xd = ds.X.dense()
        W0, v0 = init_params(ds.d, cfg.hidden, cfg.seed)
        f0 = _net_raw_value(Xd, ds.y, W0, v0, lam)
        gW0, gv0 = _net_raw_grad(Xd, ds.y, W0, v0, lam)
        gnorm0 = float(np.sqrt(np.sum(gW0 * gW0) + gv0 @ gv0))

        def gn(state):
            gW, gv = _net_raw_grad(Xd, ds.y, state.W, state.v, lam)
            return float(np.sqrt(np.sum(gW * gW) + gv @ gv))

        records, gnorms = _collect(
            lambda cb: _network.run(cfg.method, obj, cfg.iters,
                                    seed=cfg.seed, params=(W0, v0),
                                    callback=cb), gn)
    elif model == "matfact":
        ds = load_dataset(cfg)
        X = ds.X.dense()
        st0 = _matfact.init_state(X, cfg.hidden, cfg.seed)
        f0 = st0.f
        G0 = st0.M - X
        gnorm0 = float(np.sqrt(np.sum((G0 @ st0.W) ** 2)
                               + np.sum((G0.T @ st0.U) ** 2)))

        def gn(state):
            G = (state.U @ state.W.T) - state.X
            return float(np.sqrt(np.sum((G @ state.W) ** 2)
                                 + np.sum((G.T @ state.U) ** 2)))

        records, gnorms = _collect(
            lambda cb: _matfact.run(cfg.method, X, cfg.hidden, cfg.iters,
                                    seed=cfg.seed, callback=cb), gn)
    else:
        ds = load_dataset(cfg)
        Xd = ds.X.dense()
        S = (Xd.T @ Xd) / ds.n + np.eye(ds.d)
        st0 = _logdet.init_state(S)
        f0 = _logdet.f_gauss(st0)
        gnorm0 = float(np.linalg.norm(S - np.eye(ds.d)))

        def gn(state):
            return float(np.linalg.norm(state.S - np.linalg.inv(state.V)))

        rank = 1 if cfg.method == "rank1" else 2
        records, gnorms = _collect(
            lambda cb: _logdet.run(S, rank, cfg.iters, callback=cb), gn)

    return Trace(cfg, f0, gnorm0, records, gnorms, fstar=cfg.fstar)


# ---------------------------------------------------------------------------
# reference optimum: full-space non-monotone Barzilai-Borwein, 5000 iters

_REF_OPTS = SubSolverOptions(max_iters=5000, memory=10, grad_tol=1e-14,
                             theta_cap=1e12)


def compute_reference(cfg: ExperimentConfig) -> float:
    """Minimum objective seen by 5000 full-space spectral-step iterations.

    Instrumentation-free: all linear algebra runs on raw arrays.
    """
    model = cfg.model
    if model in ("logistic", "lsq"):
        ds = load_dataset(cfg)
        lam = resolve_lambda(cfg.lam, ds.n)
        loss = "logistic" if model == "logistic" else "least_squares"
        obj = LcpObjective(loss, ds, lam)
        Xd = ds.X.dense()

        def value(w):
            return obj.f_value_margin(w, Xd @ w)

        def grad(w):
            g = Xd.T @ obj.g_grad(Xd @ w)
            if lam > 0:
                g = g + lam * w
            return g

        sp = SubProblem(ds.d, value, grad)
    elif model in ("net2", "net2_reg"):
        ds = load_dataset(cfg)
        lam = resolve_lambda(cfg.lam, ds.n)
        if model == "net2_reg" and lam == 0.0:
            lam = 1.0 / ds.n
        Xd = ds.X.dense()
        W0, v0 = init_params(ds.d, cfg.hidden, cfg.seed)
        r = cfg.hidden
        nW = ds.d * r

        def unpack(t):
            return (W0 + t[:nW].reshape(ds.d, r), v0 + t[nW:])

        def value(t):
            W, v = unpack(t)
            return _net_raw_value(Xd, ds.y, W, v, lam)

        def grad(t):
            W, v = unpack(t)
            gW, gv = _net_raw_grad(Xd, ds.y, W, v, lam)
            return np.concatenate([gW.ravel(), gv])

        sp = SubProblem(nW + r, value, grad)
    elif model == "matfact":
        ds = load_dataset(cfg)
        X = ds.X.dense()
        st0 = _matfact.init_state(X, cfg.hidden, cfg.seed)
        n, d, r = X.shape[0], X.shape[1], cfg.hidden
        nU = n * r

        def unpack(t):
            return st0.U + t[:nU].reshape(n, r), st0.W + t[nU:].reshape(d, r)

        def value(t):
            U, W = unpack(t)
            return _matfact.pca_value(U @ W.T, X)

        def grad(t):
            U, W = unpack(t)
            G = U @ W.T - X
            return np.concatenate([(G @ W).ravel(), (G.T @ U).ravel()])

        sp = SubProblem(nU + d * r, value, grad)
    else:
        ds = load_dataset(cfg)
        Xd = ds.X.dense()
        S = (Xd.T @ Xd) / ds.n + np.eye(ds.d)
        d = ds.d
        eye = np.eye(d)

        def unpack(t):
            V = eye + t.reshape(d, d)
            return 0.5 * (V + V.T)

        def value(t):
            V = unpack(t)
            try:
                L = np.linalg.cholesky(V)
            except np.linalg.LinAlgError:
                return np.inf
            return float(np.sum(S * V)) - 2.0 * float(
                np.sum(np.log(np.diag(L))))

        def grad(t):
            V = unpack(t)
            g = S - np.linalg.inv(V)
            return 0.5 * (g + g.T).ravel()

        sp = SubProblem(d * d, value, grad)

    res = solve(sp, _REF_OPTS)
    if not np.isfinite(res.value):
        raise RuntimeError("reference run diverged")
    return float(res.value)


def run_experiment(cfg: ExperimentConfig) -> Trace:
    """Run one method on one problem; write CSV to cfg.out when set."""
    t0 = time.perf_counter()
    trace = _run_trace(cfg)
    trace_elapsed = time.perf_counter() - t0
    if trace.records and trace.records[-1].elapsed_s == 0.0:
        # per-step timing is filled by the step functions where available;
        # fall back to uniform attribution so the column is never all-zero
        per = trace_elapsed / len(trace.records)
        for rec in trace.records:
            if rec.elapsed_s == 0.0:
                rec.elapsed_s = per
    if cfg.out:
        try:
            with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(emit_csv(trace))
        except OSError as e:
            raise RuntimeError(f"cannot write {cfg.out}: {e}")
    return trace


def config_echo(cfg: ExperimentConfig) -> str:
    return json.dumps(asdict(cfg), sort_keys=True)


@dataclass
class _CsvConfig:
    """Minimal config stand-in for traces rebuilt from CSV files."""
    method: str
    model: str = ""
    iters: int = 0


def trace_from_csv(text: str, label: str) -> Trace:
    """Rebuild a plottable Trace from an emitted CSV document."""
    rows = parse_csv(text)
    if not rows or rows[0]["iter"] != 0:
        raise ValueError("CSV must start at iteration 0")
    records, gnorms = [], []
    for row in rows[1:]:
        records.append(StepRecord(
            method=label, f=row["f"],
            products=row["products_cum"] or 0,
            inner_iters=row["inner_iters"] or 0,
            alpha1=row["alpha1"], beta1=row["beta1"],
            alpha2=row["alpha2"], beta2=row["beta2"],
            gamma=row["gamma"], delta=row["delta"],
            elapsed_s=row["elapsed_s"] or 0.0))
        gnorms.append(row["gnorm"])
    cfg = _CsvConfig(method=label, iters=len(records))
    return Trace(cfg, rows[0]["f"], rows[0]["gnorm"], records, gnorms)
