"""Command-line entry point: ``earlystop <command> --config <path> --seed <u64>``.

Commands ``sgd``, ``dsgd`` and ``svrg`` run seeded trials and print a summary
report; with ``--out`` the per-run rows are also written next to it as
``<out>.runs.jsonl`` and ``<out>.runs.csv``. The exit code is 0 iff every pass
flag in the report is true.
"""

import argparse
import json
import os
import sys

from .generalization import TestDistribution, generalization_bound_discrete, mc_generalization_gap, sgd_runner, svrg_runner
from .harness import (
    ExperimentConfig,
    build_experiment,
    optional_stopping_selftest,
    report,
    run_row,
    run_trials,
    summarize,
    write_table,
)
from .measures import EmpiricalMeasure, load_measure_csv, optimal_coupling, wasserstein
from .problems import make_problem

RUN_COLUMNS = ("seed", "tau", "ifo", "final_grad_norm_sq_V", "final_grad_norm_sq_T")
GEN_COLUMNS = ("n_T", "trials", "epsilon", "mean_grad_sq_G", "ci95", "bound", "cap_hits", "pass")
BOUND_COLUMNS = ("name", "value", "valid", "condition")
W_COLUMNS = ("p", "n1", "n2", "distance", "pass")


def _load_json(path):
    if path is None:
        return {}, "."
    with open(path) as fh:
        return json.load(fh), os.path.dirname(os.path.abspath(path))


def _measure(value, base_dir, weights=None):
    if isinstance(value, str):
        return load_measure_csv(value if os.path.isabs(value) else os.path.join(base_dir, value))
    return EmpiricalMeasure(value, weights)


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _experiment_cfg(args):
    data, base_dir = _load_json(args.config)
    data = dict(data, algorithm=args.command) if "algorithm" not in data else data
    if data["algorithm"] != args.command:
        raise SystemExit(f"config is for {data['algorithm']!r}, not {args.command!r}")
    if args.seed is not None:
        data["master_seed"] = args.seed
    if args.trials is not None:
        data["trials"] = args.trials
    return ExperimentConfig.from_dict(data, base_dir=base_dir)


def cmd_run(args):
    exp = build_experiment(_experiment_cfg(args))
    records = run_trials(exp)
    summary = summarize(exp, records)
    _emit(report([summary], args.format), args.out)
    if args.out is not None:
        rows = [run_row(exp, r) for r in records]
        with open(args.out + ".runs.jsonl", "w") as fh:
            for rec, row in zip(records, rows):
                fh.write(json.dumps(dict(rec.to_dict(), **row)) + "\n")
        with open(args.out + ".runs.csv", "w", newline="") as fh:
            fh.write(write_table(rows, RUN_COLUMNS, "csv"))
    return summary.passed


def cmd_bounds(args):
    exp = build_experiment(_experiment_cfg(args))
    rows = [r.to_dict() for r in exp.reports]
    _emit(write_table(rows, BOUND_COLUMNS, args.format), args.out)
    return all(r.valid for r in exp.reports)


def cmd_generalize(args):
    data, base_dir = _load_json(args.config)
    mu = _measure(data["mu"], base_dir, data.get("mu_weights"))
    dist = TestDistribution(mu)
    loss = make_problem(data.get("problem", "quadratic"), mu.points, data.get("J"))
    eps = float(data["epsilon"])
    trials = args.trials if args.trials is not None else int(data.get("trials", 100))
    seed = args.seed if args.seed is not None else int(data.get("master_seed", 0))
    sizes = data["n_T"] if isinstance(data["n_T"], list) else [data["n_T"]]
    rows = []
    for n_T in sizes:
        if data.get("runner", "svrg") == "svrg":
            runner = svrg_runner(eps, data.get("x0"))
        else:
            runner = sgd_runner(float(data["eta"]), int(data["m"]), eps, data.get("x0"))
        res = mc_generalization_gap(dist, loss, runner, trials, seed, n_T, data.get("n_V"))
        bound = generalization_bound_discrete(eps, loss.G, mu.n, n_T)
        rows.append({
            "n_T": n_T, "trials": trials, "epsilon": eps,
            "mean_grad_sq_G": res["mean_grad_sq_G"], "ci95": res["ci"], "bound": bound,
            "cap_hits": res["cap_hits"],
            "pass": res["cap_hits"] == 0 and res["mean_grad_sq_G"] <= bound + res["ci"],
        })
    _emit(write_table(rows, GEN_COLUMNS, args.format), args.out)
    return all(r["pass"] for r in rows)


def cmd_wasserstein(args):
    data, base_dir = _load_json(args.config)
    mu1 = _measure(data["mu1"], base_dir, data.get("weights1"))
    mu2 = _measure(data["mu2"], base_dir, data.get("weights2"))
    rows = []
    for p in data.get("p", [1.0]) if isinstance(data.get("p"), list) else [data.get("p", 1.0)]:
        dist = wasserstein(mu1, mu2, p)
        ok = optimal_coupling(mu1, mu2, p).check_marginals(mu1, mu2)
        rows.append({"p": float(p), "n1": mu1.n, "n2": mu2.n, "distance": dist, "pass": ok})
    _emit(write_table(rows, W_COLUMNS, args.format), args.out)
    return all(r["pass"] for r in rows)


def cmd_selftest(args):
    data, _ = _load_json(args.config)
    trials = args.trials if args.trials is not None else int(data.get("trials", 100_000))
    seed = args.seed if args.seed is not None else int(data.get("master_seed", 0))
    res = optional_stopping_selftest(trials, seed, horizon=int(data.get("horizon", 50)),
                                     variant=data.get("variant", "walk"))
    cols = ("variant", "trials", "mean", "ci", "pass")
    _emit(write_table([res], cols, args.format), args.out)
    return res["pass"]


COMMANDS = {
    "sgd": cmd_run,
    "dsgd": cmd_run,
    "svrg": cmd_run,
    "bounds": cmd_bounds,
    "generalize": cmd_generalize,
    "wasserstein": cmd_wasserstein,
    "selftest": cmd_selftest,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="earlystop", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--seed", type=int, help="64-bit master seed (overrides the config)")
    parser.add_argument("--trials", type=int, help="number of trials (overrides the config)")
    parser.add_argument("--out", help="write the report here instead of stdout")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.config is None and args.command != "selftest":
        raise SystemExit(f"{args.command} needs --config")
    if args.seed is not None and not 0 <= args.seed < 1 << 64:
        raise SystemExit("--seed must be an unsigned 64-bit integer")
    handler = COMMANDS[args.command]
    if args.command == "bounds":
        # bounds takes the algorithm from the config itself
        data, _ = _load_json(args.config)
        args.command = data.get("algorithm", "sgd")
    return 0 if handler(args) else 1


if __name__ == "__main__":
    sys.exit(main())
