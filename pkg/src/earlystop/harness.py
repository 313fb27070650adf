"""Seeded Monte Carlo estimation of stopping times and bound-vs-empirical reports.

An experiment is described by a JSON configuration (:class:`ExperimentConfig`).
Datasets are drawn once per experiment from stream ``(seed, SHARED_TRIAL,
DATA_NODE)``; trial ``k`` runs the algorithm on streams ``(seed, k, node)``.
Trials run sequentially in index order, so the report is a deterministic
function of the configuration and seed.
"""

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from ._random import DATA_NODE, SHARED_TRIAL, derive_seed, make_stream
from ._stats import mean_ci
from ._validation import BoundConditionError, check_int, check_points, check_positive, check_vector
from .dsgd import ConnectivityMatrix, dsgd_step_size, ifo_bound_dsgd, load_connectivity_csv, make_topology, run_dsgd, tau_bound_dsgd
from .measures import EmpiricalMeasure, load_measure_csv, sample_empirical, wasserstein
from .problems import FiniteSumObjective, make_problem, sigma2_certificate
from .records import BoundReport
from .sgd import (
    SgdConfig,
    SyntheticDriftBias,
    ZeroBias,
    ifo_bound_sgd,
    post_stationarity_bound,
    run_sgd,
    step_size_cor32,
    tau_bound_cor32,
    tau_bound_prop31,
)
from .svrg import SvrgConfig, gamma_lower_bound_check, ifo_bound_svrg, run_svrg, svrg_hyperparams, tau_bound_svrg

ALGORITHMS = ("sgd", "dsgd", "svrg")
DEFAULT_CAP = 1_000_000
CAP_FACTOR = 100


class TrialError(RuntimeError):
    """A trial raised; carries the trial index and its derived seed."""

    def __init__(self, trial, seed, cause):
        super().__init__(f"trial {trial} (stream seed {seed}) failed: {cause!r}")
        self.trial = trial
        self.seed = seed


# -- configuration -------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    Data can be given as inline point lists or CSV paths (``train``, ``val``),
    or as a population measure ``mu`` from which ``n_T`` training and ``n_V``
    validation points are drawn. Either ``eta`` or ``c`` fixes the step-size:
    ``c`` selects the theory step-size of the algorithm's bound.
    """

    algorithm: str
    epsilon: float
    problem: str = "quadratic"
    trials: int = 1
    master_seed: int = 0
    m: int | None = None
    eta: float | None = None
    c: float | None = None
    max_iters: int | None = None
    n_T: int | None = None
    n_V: int | None = None
    mu: object = None
    mu_weights: list | None = None
    train: object = None
    val: object = None
    J: float | None = None
    x0: list | None = None
    bias: dict | None = None
    topology: str | None = None
    M: int = 1
    self_weight: float | None = None
    connectivity: object = None
    label: str | None = None
    base_dir: str = field(default=".", repr=False)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.problem not in ("quadratic", "tanh_composite"):
            raise ValueError(f"unknown problem {self.problem!r}")
        check_positive(self.epsilon, "epsilon")
        self.trials = check_int(self.trials, "trials", minimum=1)
        self.master_seed = check_int(self.master_seed, "master_seed", minimum=0)
        if self.master_seed >= 1 << 64:
            raise ValueError("master_seed must fit in 64 bits")
        if self.m is not None:
            self.m = check_int(self.m, "m", minimum=1)
        elif self.algorithm != "svrg":
            raise ValueError("m is required for sgd and dsgd")
        if self.eta is not None:
            check_positive(self.eta, "eta")
        if self.c is not None and not 0 < self.c < 1:
            raise ValueError(f"c must lie in (0, 1), got {self.c}")
        if self.algorithm != "svrg" and self.eta is None and self.c is None:
            raise ValueError("give eta or c")
        if self.max_iters is not None:
            self.max_iters = check_int(self.max_iters, "max_iters", minimum=1)
        self.M = check_int(self.M, "M", minimum=1)
        for key in ("n_T", "n_V"):
            if getattr(self, key) is not None:
                setattr(self, key, check_int(getattr(self, key), key, minimum=1))
        if self.train is None and (self.mu is None or self.n_T is None):
            raise ValueError("give a training set or a population measure mu with n_T")
        for key in ("mu", "train", "val", "connectivity"):
            value = getattr(self, key)
            if isinstance(value, str) and not os.path.exists(self._path(value)):
                raise FileNotFoundError(f"{key} file not found: {self._path(value)}")
        if self.bias is not None:
            kind = self.bias.get("kind", "zero")
            if kind not in ("zero", "synthetic"):
                raise ValueError(f"unknown bias kind {kind!r}")
        if self.algorithm == "dsgd" and self.connectivity is None and self.topology is None:
            self.topology = "complete"

    def _path(self, p):
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    @classmethod
    def from_dict(cls, data, base_dir="."):
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data, base_dir=base_dir)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        return cls.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))

    def replace(self, **changes):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return ExperimentConfig(**data)


# -- experiment setup ----------------------------------------------------------


@dataclass
class Experiment:
    """Everything a trial needs, built once per configuration."""

    cfg: ExperimentConfig
    loss: object
    obj_T: FiniteSumObjective
    obj_V: FiniteSumObjective | None
    x0: np.ndarray
    d1: float
    sigma2: float
    f_gap: float
    eta: float
    m: int
    conn: ConnectivityMatrix | None
    reports: list
    cap: int

    @property
    def bound(self):
        return self.reports[0]


def _points(cfg, value, name):
    if isinstance(value, str):
        mu = load_measure_csv(cfg._path(value))
        if not mu.is_uniform:
            raise ValueError(f"{name} must be an unweighted dataset")
        return mu.points
    return check_points(value, name)


def _population(cfg):
    if cfg.mu is None:
        return None
    if isinstance(cfg.mu, str):
        return load_measure_csv(cfg._path(cfg.mu))
    return EmpiricalMeasure(cfg.mu, cfg.mu_weights)


def build_experiment(cfg):
    """Draw (or load) the datasets, certify the constants and compute the bounds."""
    mu = _population(cfg)
    data_rng = make_stream(cfg.master_seed, SHARED_TRIAL, DATA_NODE)
    if cfg.train is not None:
        Y_T = _points(cfg, cfg.train, "train")
    else:
        Y_T = sample_empirical(mu, cfg.n_T, data_rng).points
    needs_val = cfg.algorithm != "svrg" or cfg.val is not None or cfg.n_V is not None
    Y_V = None
    if needs_val:
        if cfg.val is not None:
            Y_V = _points(cfg, cfg.val, "val")
        elif mu is not None:
            Y_V = sample_empirical(mu, cfg.n_V or Y_T.shape[0], data_rng).points
        else:
            Y_V = Y_T
    support = mu.points if mu is not None else np.vstack([Y_T] + ([Y_V] if Y_V is not None else []))
    loss = make_problem(cfg.problem, support, cfg.J)
    obj_T = FiniteSumObjective(loss, Y_T)
    obj_V = FiniteSumObjective(loss, Y_V) if Y_V is not None else None
    if obj_V is not None and obj_V.dim != obj_T.dim:
        raise ValueError("training and validation points have different dimensions")
    x0 = np.zeros(obj_T.dim) if cfg.x0 is None else check_vector(cfg.x0, obj_T.dim, "x0")

    d1 = wasserstein(obj_V.measure(), obj_T.measure(), 1.0) if obj_V is not None else 0.0
    sigma2 = sigma2_certificate(obj_T, np.vstack([np.zeros((1, obj_T.dim)), x0[None, :]]))
    sigma2 = max(sigma2, sigma2_certificate(obj_T))
    f_gap = obj_T.value(x0, count=False) - loss.f_star

    conn = None
    if cfg.algorithm == "dsgd":
        if cfg.connectivity is not None:
            if isinstance(cfg.connectivity, str):
                conn = load_connectivity_csv(cfg._path(cfg.connectivity))
            else:
                conn = ConnectivityMatrix(np.asarray(cfg.connectivity, dtype=float))
        else:
            conn = make_topology(cfg.topology, cfg.M, cfg.self_weight)

    eta, m, reports = _bounds(cfg, loss, obj_T, obj_V, d1, sigma2, f_gap, conn)
    bound = reports[0]
    if cfg.max_iters is not None:
        cap = cfg.max_iters
    elif bound.valid:
        cap = int(min(math.ceil(CAP_FACTOR * bound.value), 10**12))
    else:
        cap = DEFAULT_CAP
    return Experiment(cfg, loss, obj_T, obj_V, x0, d1, sigma2, f_gap, eta, m, conn, reports, cap)


def _invalid(name, cond, params, err):
    return BoundReport(name, None, False, cond, params, {"error": str(err)})


def _bounds(cfg, loss, obj_T, obj_V, d1, sigma2, f_gap, conn):
    """Step-size, epoch length and the bound reports; the first report is the one tested."""
    L, G, eps = loss.L, loss.G, cfg.epsilon
    reports = []
    if cfg.algorithm == "svrg":
        eta0, m0 = svrg_hyperparams(obj_T.n, L)
        eta = cfg.eta if cfg.eta is not None else eta0
        m = cfg.m if cfg.m is not None else m0
        params = dict(L=L, n_T=obj_T.n, f_gap=f_gap, epsilon=eps)
        tau = tau_bound_svrg(L, obj_T.n, f_gap, eps)
        theory = eta == eta0 and m == m0
        cond = "eta = 1/(4 L n_T^(2/3)) and m = floor(4 n_T / 3)"
        if theory:
            reports.append(BoundReport("tau_svrg", tau, True, cond, params))
        else:
            reports.append(_invalid("tau_svrg", cond, params, "eta or m overridden"))
        if theory:
            reports.append(BoundReport("ifo_svrg", ifo_bound_svrg(tau, obj_T.n, m), True, cond, params))
        gamma = gamma_lower_bound_check(obj_T.n, L)
        reports.append(BoundReport("gamma_check", gamma["gamma_star"], gamma["passes"],
                                   "gamma >= 1/(40 L n^(2/3))", {"n": obj_T.n, "L": L}, gamma))
        return eta, m, reports

    m = cfg.m
    n_V = obj_V.n
    if cfg.algorithm == "sgd":
        bias = cfg.bias or {}
        alpha = float(bias.get("alpha", 0.0))
        R = float(bias.get("R", 0.0))
        if cfg.eta is not None:
            eta = cfg.eta
        else:
            eta = step_size_cor32(cfg.c, L, eps, m, G, d1, sigma2, R, alpha)
        beta = float(bias["beta"]) if "beta" in bias else eta * R
        params = dict(L=L, eta=eta, m=m, epsilon=eps, sigma2=sigma2, alpha=alpha, beta=beta,
                      G=G, d1=d1, f_gap=f_gap)
        try:
            rep = tau_bound_prop31(L, eta, m, eps, sigma2, alpha, beta, G, d1, f_gap)
        except BoundConditionError as err:
            rep = _invalid("tau_prop31", "eta <= 1/L", params, err)
        reports.append(rep)
        if rep.valid:
            reports.append(BoundReport("ifo_sgd", ifo_bound_sgd(rep.value, m, n_V), True,
                                       rep.condition, {"m": m, "n_V": n_V}))
        if cfg.c is not None and "beta" not in bias:
            try:
                reports.append(tau_bound_cor32(cfg.c, L, eps, m, G, d1, sigma2, R, alpha, f_gap))
            except BoundConditionError as err:
                reports.append(_invalid("tau_cor32", "eps > 2 G^2 d1^2", params, err))
    else:
        params = dict(L=L, epsilon=eps, m=m, G=G, d1=d1, sigma2=sigma2, rho=conn.rho, c=cfg.c,
                      f_gap=f_gap)
        cond = "eps > 2 G^2 d1^2 and c <= (1-sqrt rho)/(4 sqrt 2)"
        eta = cfg.eta
        if cfg.c is None:
            reports.append(_invalid("tau_dsgd", cond, params, "bound needs the constant c"))
        else:
            try:
                eta_c = dsgd_step_size(cfg.c, L, eps, m, G, d1, sigma2, conn.rho)
                rep = tau_bound_dsgd(L, eps, m, G, d1, sigma2, conn.rho, cfg.c, f_gap)
                if eta is not None and eta != eta_c:
                    rep = _invalid("tau_dsgd", cond, params, "eta overridden")
                eta = eta_c if eta is None else eta
            except BoundConditionError as err:
                rep = _invalid("tau_dsgd", cond, params, err)
                if eta is None:
                    raise
            reports.append(rep)
            if rep.valid:
                reports.append(BoundReport("ifo_dsgd", ifo_bound_dsgd(rep.value, m, n_V, conn.M),
                                           True, cond, {"m": m, "n_V": n_V, "M": conn.M}))
    reports.append(BoundReport("post_stationarity", post_stationarity_bound(eps, G, d1), True,
                               "normal termination", {"epsilon": eps, "G": G, "d1": d1}))
    return eta, m, reports


def _ifo_report(exp):
    for rep in exp.reports[1:]:
        if rep.name.startswith("ifo_"):
            return rep.value
    return None


def trial_seed(cfg, k):
    return derive_seed(cfg.master_seed, k, 0)


def run_trial(exp, k):
    """Run trial ``k`` of an experiment; the record carries the trial's stream seed."""
    cfg = exp.cfg
    seed = cfg.master_seed
    if cfg.algorithm == "sgd":
        bias = ZeroBias()
        if cfg.bias and cfg.bias.get("kind") == "synthetic":
            b = cfg.bias
            bias = SyntheticDriftBias(b.get("alpha", 0.0), beta=b.get("beta"),
                                      R=None if "beta" in b else b.get("R", 0.0))
        config = SgdConfig(exp.eta, exp.m, cfg.epsilon, exp.cap)
        rec = run_sgd(exp.obj_T, exp.obj_V, config, bias, make_stream(seed, k, 0), exp.x0)
    elif cfg.algorithm == "dsgd":
        config = SgdConfig(exp.eta, exp.m, cfg.epsilon, exp.cap)
        streams = [make_stream(seed, k, i) for i in range(exp.conn.M)]
        rec = run_dsgd(exp.obj_T, exp.obj_V, exp.conn, config, streams, exp.x0, audit=False)
    else:
        config = SvrgConfig(exp.eta, exp.m, cfg.epsilon, exp.cap)
        rec = run_svrg(exp.obj_T, config, make_stream(seed, k, 0), exp.x0)
    rec.seed = trial_seed(cfg, k)
    return rec


def run_trials(exp):
    records = []
    for k in range(exp.cfg.trials):
        try:
            records.append(run_trial(exp, k))
        except Exception as err:
            raise TrialError(k, trial_seed(exp.cfg, k), err) from err
    return records


def run_row(exp, rec):
    """Per-run row: seed, tau, ifo and the final squared gradient norms."""
    g_T = exp.obj_T.grad(rec.final_x, count=False)
    if exp.obj_V is not None:
        g_V = exp.obj_V.grad(rec.final_x, count=False)
        gv = float(g_V @ g_V)
    else:
        gv = None
    return {
        "seed": rec.seed,
        "tau": "cap-hit" if rec.cap_hit else rec.tau,
        "ifo": rec.ifo_count,
        "final_grad_norm_sq_V": gv,
        "final_grad_norm_sq_T": float(g_T @ g_T),
    }


# -- summaries -------------------------------------------------------------------


SUMMARY_COLUMNS = (
    "label", "algorithm", "trials", "cap_hits", "mean_tau", "ci95_tau", "mean_ifo", "ci95_ifo",
    "bound_tau", "bound_ifo", "bound_valid", "pass",
)


@dataclass
class TrialSummary:
    """Aggregate of seeded trials next to the matching theoretical bounds.

    ``pass`` holds when the bound is valid, no trial hit the safety cap and
    ``mean_tau + ci95_tau <= bound_tau`` (``ci95_tau`` is ``None`` for one trial
    and then counts as zero).
    """

    label: str
    algorithm: str
    trials: int
    cap_hits: int
    mean_tau: float
    ci95_tau: float | None
    mean_ifo: float
    ci95_ifo: float | None
    bound_tau: float | None
    bound_ifo: float | None
    bound_valid: bool
    passed: bool

    @classmethod
    def from_records(cls, records, bound_tau, bound_ifo, bound_valid, label="", algorithm=""):
        taus = [r.iterations for r in records]
        mean_tau, ci_tau = mean_ci(taus)
        mean_ifo, ci_ifo = mean_ci([r.ifo_count for r in records])
        cap_hits = sum(r.cap_hit for r in records)
        ok = bool(bound_valid) and cap_hits == 0 and mean_tau + (ci_tau or 0.0) <= bound_tau
        return cls(label, algorithm, len(records), cap_hits, mean_tau, ci_tau, mean_ifo, ci_ifo,
                   bound_tau, bound_ifo, bool(bound_valid), ok)

    def to_dict(self):
        out = {}
        for col in SUMMARY_COLUMNS:
            out[col] = getattr(self, "passed" if col == "pass" else col)
        return out

    @classmethod
    def from_dict(cls, data):
        kwargs = {("passed" if k == "pass" else k): v for k, v in data.items()}
        return cls(**kwargs)


def summarize(exp, records):
    bound = exp.bound
    return TrialSummary.from_records(
        records,
        bound.value,
        _ifo_report(exp) if bound.valid else None,
        bound.valid,
        label=exp.cfg.label or exp.cfg.algorithm,
        algorithm=exp.cfg.algorithm,
    )


def estimate_expected_tau(cfg):
    """Run ``cfg.trials`` seeded trials and compare the mean stopping time with its bound."""
    exp = build_experiment(cfg)
    return summarize(exp, run_trials(exp))


# -- optional-stopping self-test ----------------------------------------------------


def optional_stopping_selftest(trials, seed, horizon=50, variant="walk"):
    """Monte Carlo check that a stopped fair +-1 walk has mean zero.

    ``variant`` selects the increments and stopping rule: ``"walk"`` stops at
    the first +1 or at ``horizon``; ``"zero"`` uses x_t = 0; ``"single"``
    stops at tau = 1.
    """
    trials = check_int(trials, "trials", minimum=100)
    rng = make_stream(seed, SHARED_TRIAL, 0)
    if variant == "zero":
        steps = np.zeros((trials, horizon))
    else:
        steps = 2.0 * rng.integers(0, 2, size=(trials, horizon)) - 1.0
    if variant == "single":
        tau = np.ones(trials, dtype=int)
    elif variant in ("walk", "zero"):
        hit = steps > 0
        tau = np.where(hit.any(axis=1), hit.argmax(axis=1) + 1, horizon)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    stopped = np.cumsum(steps, axis=1)[np.arange(trials), tau - 1]
    mean, ci = mean_ci(stopped)
    return {"mean": mean, "ci": ci, "pass": bool(abs(mean) <= ci), "trials": trials,
            "variant": variant}


# -- serialization ---------------------------------------------------------------


def format_value(value):
    """Deterministic text for one report cell (17 significant digits for floats)."""
    if value is None:
        return "NA"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_table(rows, columns, fmt):
    """Serialize dict rows in the given column order as CSV or JSON."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c)) for c in columns])
        return buf.getvalue()
    if fmt == "json":
        ordered = [{c: _json_value(row.get(c)) for c in columns} for row in rows]
        return json.dumps(ordered, indent=2) + "\n"
    raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")


def _json_value(value):
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def report(summaries, format="csv"):
    if not summaries:
        raise ValueError("no summaries to report")
    return write_table([s.to_dict() for s in summaries], SUMMARY_COLUMNS, format)


def parse_report(text, format="json"):
    """Inverse of :func:`report` for the JSON format."""
    if format != "json":
        raise ValueError("only JSON reports can be parsed back")
    return [TrialSummary.from_dict(d) for d in json.loads(text)]
