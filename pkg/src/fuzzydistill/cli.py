"""Command-line interface: ``fuzzydistill <command> [flags] --out DIR``.

Every command writes its outputs plus a ``manifest.json`` into ``--out``.
Exit codes: 0 success, 1 usage error, 2 data/validation/IO error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import envlab
from .baselines import tree_fit
from .dataset import Dataset, read_dataset, write_dataset
from .dtw import BOTH, dtw
from .errors import FuzzyDistillError, InvalidInputError, NumericalError
from .io import atomic_write_text, dump_json
from .linguistics import DEFAULT_SALIENCE, LabelScheme, default_scheme, export_rulebase
from .metrics import (
    DEFAULT_TAU,
    evaluate,
    fidelity_from_predictions,
    mse_from_predictions,
    paired_t_test,
    predict,
)
from .model import MembershipFamily, infer, load_model, save_model
from .training import TrainConfig, distill, split_indices

log = logging.getLogger("fuzzydistill")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
DEFAULT_SEEDS = "42..46"
THREADS_ENV = "FUZZYDISTILL_THREADS"


class UsageError(Exception):
    pass


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def parse_seeds(text: str) -> list:
    """``"42..46"`` (inclusive range), ``"1,5,9"`` or a single integer."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}; use a..b or a,b,c") from None


def parse_int_list(text: str) -> list:
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def worker_count(n_jobs: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, min(limit, n_jobs))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible packaging
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch and epoch.isdigit() else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def write_manifest(out: Path, command: str, argv: list, config: dict, seeds: list, inputs: dict, outputs: list,
                   notes: list = ()) -> None:
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seeds": list(seeds),
        "inputs": {k: {"path": str(v), "sha256": _sha256(v)} for k, v in inputs.items() if v is not None},
        "outputs": sorted(outputs),
        "tool_version": tool_version(),
        "timestamp": _timestamp(),
        "notes": list(notes),
    }
    atomic_write_text(out / "manifest.json", dump_json(manifest))


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from None
    return out


def _env_config(path) -> envlab.EnvConfig:
    return envlab.EnvConfig.from_file(path) if path else envlab.EnvConfig()


def _family(args) -> MembershipFamily:
    return MembershipFamily(args.family, args.beta)


def _csv(rows: list, header: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# --- commands ---------------------------------------------------------------


def cmd_generate(args, argv) -> int:
    cfg = _env_config(args.env_config)
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    seed = cfg.seed if args.seed is None else args.seed
    ds = envlab.generate_dataset(cfg, args.n, seed)
    out = _prepare_out(args.out)
    name = "dataset.jsonl" if args.format == "jsonl" else "dataset.csv"
    write_dataset(ds, out / name)
    write_manifest(out, "generate", argv, {"env": cfg.to_dict(), "n_samples": args.n, "format": args.format},
                   [seed], {"env_config": args.env_config}, [name, "manifest.json"])
    print(f"wrote {len(ds)} pairs in {len(ds.episode_starts)} episodes to {out / name}")
    return EXIT_OK


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(
        n_rules=args.rules, family=_family(args), lam=args.lam, seed=seed,
        kmeans_max_iter=args.kmeans_max_iter, kmeans_tol=args.kmeans_tol,
        train_fraction=args.train_fraction, standardize=not args.no_standardize,
    )


def _names_for(ds: Dataset) -> tuple:
    if ds.d == envlab.STATE_DIM and ds.m == envlab.ACTION_DIM:
        return envlab.FEATURE_NAMES, envlab.ACTION_NAMES
    return tuple(f"s{k}" for k in range(ds.d)), tuple(f"a{j}" for j in range(ds.m))


def cmd_distill(args, argv) -> int:
    ds = read_dataset(args.dataset)
    cfg = _train_config(args, args.seed)
    feats, acts = _names_for(ds)
    threads = worker_count(cfg.n_rules)
    model, split = distill(ds, cfg, feats, acts, workers=threads)
    out = _prepare_out(args.out)
    save_model(model, out / "model.json")
    val_idx = split.validation_indices or split.train_indices
    report = evaluate(model, ds.subset(val_idx), args.tau)
    train_report = evaluate(model, ds.subset(split.train_indices), args.tau)
    atomic_write_text(out / "metrics.json", dump_json({"validation": report.to_dict(), "train": train_report.to_dict()}))
    atomic_write_text(out / "metrics.csv", report.to_csv())
    atomic_write_text(out / "split.json", dump_json(split.to_dict()))
    notes = [] if split.validation_indices else ["train_fraction = 1: validation metrics use the training split"]
    write_manifest(out, "distill", argv, {"train": cfg.to_dict(), "tau": args.tau}, [args.seed],
                   {"dataset": args.dataset}, ["model.json", "metrics.json", "metrics.csv", "split.json", "manifest.json"],
                   notes)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args, argv) -> int:
    model = load_model(args.model)
    ds = read_dataset(args.dataset)
    report = evaluate(model, ds, args.tau)
    if args.out:
        out = _prepare_out(args.out)
        atomic_write_text(out / "report.json", dump_json(report.to_dict()))
        atomic_write_text(out / "report.csv", report.to_csv())
        write_manifest(out, "evaluate", argv, {"tau": args.tau}, [], {"model": args.model, "dataset": args.dataset},
                       ["report.json", "report.csv", "manifest.json"])
    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def _summary(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {"mean": float(v.mean()), "std": float(v.std()), "min": float(v.min()), "max": float(v.max())}


def cmd_rollout_compare(args, argv) -> int:
    cfg = _env_config(args.env_config)
    if args.max_steps is not None:
        cfg = cfg.replace(max_steps=args.max_steps)
    if args.rollouts < 1:
        raise UsageError("--rollouts must be >= 1")
    teacher = envlab.teacher_policy(cfg)
    if args.policy == "teacher":
        surrogate, label = teacher, "teacher"
    else:
        if not args.model:
            raise UsageError("--model is required unless --policy teacher")
        model = load_model(args.model)
        if model.d != envlab.STATE_DIM or model.m != envlab.ACTION_DIM:
            raise InvalidInputError(
                f"model has d={model.d}, m={model.m}; the lander needs d={envlab.STATE_DIM}, m={envlab.ACTION_DIM}"
            )
        surrogate, label = (lambda s: infer(model, s)[0]), "fcs"

    starts = envlab.initial_states(cfg, args.rollouts, args.seed)
    pair_rows, traj_rows = [], []
    for p, s0 in enumerate(starts):
        t_traj = envlab.rollout(teacher, cfg, s0)
        f_traj = envlab.rollout(surrogate, cfg, s0)
        z_traj = envlab.rollout(envlab.zero_policy, cfg, s0)
        d_f = dtw(t_traj, f_traj, args.dtw_use, args.dtw_normalize)
        d_z = dtw(t_traj, z_traj, args.dtw_use, args.dtw_normalize)
        # action match of the surrogate on states the teacher actually visits
        fid = fidelity_from_predictions(
            np.array([surrogate(s) for s in t_traj.states]), t_traj.actions, args.tau)
        pair_rows.append([p, len(t_traj), len(f_traj), len(z_traj), d_f.distance, d_f.normalized,
                          d_z.distance, d_z.normalized, fid,
                          int(envlab.landed(envlab.env_step(f_traj.states[-1], f_traj.actions[-1], cfg)))])
        for name, tr in (("teacher", t_traj), (label, f_traj), ("zero", z_traj)):
            for t, (s, a) in enumerate(zip(tr.states, tr.actions)):
                traj_rows.append([p, name, t, *map(float, s), *map(float, a)])

    out = _prepare_out(args.out)
    pair_header = ["pair", "teacher_steps", "surrogate_steps", "zero_steps", "dtw", "dtw_normalized",
                   "dtw_zero", "dtw_zero_normalized", "fidelity_on_teacher_states", "surrogate_landed"]
    atomic_write_text(out / "pairs.csv", _csv(pair_rows, pair_header))
    traj_header = ["pair", "policy", "t", *envlab.FEATURE_NAMES, *envlab.ACTION_NAMES]
    atomic_write_text(out / "trajectories.csv", _csv(traj_rows, traj_header))
    cols = list(zip(*pair_rows))
    summary = {
        "policy": label,
        "n_rollouts": args.rollouts,
        "dtw": _summary(cols[4]),
        "dtw_normalized": _summary(cols[5]),
        "dtw_zero": _summary(cols[6]),
        "fidelity_on_teacher_states": _summary(cols[8]),
        "surrogate_beats_zero": int(sum(f < z for f, z in zip(cols[4], cols[6]))),
        "surrogate_landed": int(sum(cols[9])),
        "dtw_use": args.dtw_use,
        "dtw_normalize": bool(args.dtw_normalize),
    }
    atomic_write_text(out / "summary.json", dump_json(summary))
    write_manifest(out, "rollout-compare", argv,
                   {"env": cfg.to_dict(), "n_rollouts": args.rollouts, "policy": args.policy, "tau": args.tau,
                    "dtw_use": args.dtw_use, "dtw_normalize": bool(args.dtw_normalize)},
                   [args.seed], {"model": args.model, "env_config": args.env_config},
                   ["pairs.csv", "trajectories.csv", "summary.json", "manifest.json"])
    print(f"DTW {label}: {summary['dtw']['mean']:.4f} +- {summary['dtw']['std']:.4f}   "
          f"zero-action: {summary['dtw_zero']['mean']:.4f} +- {summary['dtw_zero']['std']:.4f}")
    return EXIT_OK


SWEEP_METRICS = ("fidelity_percent", "mse", "mean_frad", "fsc", "asg")


def _sweep_cell(job):
    """One (family, rules, seed) cell; runs in a worker process."""
    ds, family, rules, seed, lam, beta, tau, standardize = job
    if family == "dt":
        tr, va = split_indices(len(ds), 0.8, seed)
        tree = tree_fit(ds.subset(tr), max_leaves=rules)
        val = ds.subset(va if va.size else tr)
        pred = predict(tree, val.states)
        return {"fidelity_percent": fidelity_from_predictions(pred, val.actions, tau),
                "mse": mse_from_predictions(pred, val.actions)}
    cfg = TrainConfig(n_rules=rules, family=MembershipFamily(family, beta), lam=lam, seed=seed,
                      standardize=standardize)
    model, split = distill(ds, cfg)
    val = ds.subset(split.validation_indices or split.train_indices)
    return {k: v for k, v in evaluate(model, val, tau).to_dict().items() if k in SWEEP_METRICS}


def _pair_test(a, b) -> dict:
    try:
        t, p = paired_t_test(a, b)
        return {"t": t, "p": p, "n": len(a), "error": None}
    except InvalidInputError as exc:
        return {"t": None, "p": None, "n": len(a), "error": str(exc)}


def cmd_sweep(args, argv) -> int:
    ds = read_dataset(args.dataset)
    families = [f.strip().lower() for f in args.families.split(",") if f.strip()]
    for f in families:
        if f not in ("triangular", "gaussian", "dt"):
            raise UsageError(f"unknown family {f!r} (triangular, gaussian, dt)")
    if not families or not args.rules or not args.seeds:
        raise UsageError("sweep grids must be non-empty")
    cells = [(f, r, s) for f in families for r in args.rules for s in args.seeds]
    jobs = [(ds, f, r, s, args.lam, args.beta, args.tau, not args.no_standardize) for f, r, s in cells]
    n_workers = worker_count(len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(j) for j in jobs]
    by_cell = dict(zip(cells, results))

    cell_rows = [[f, r, s, *[by_cell[(f, r, s)].get(k, "") for k in SWEEP_METRICS]] for f, r, s in cells]
    table_rows = []
    for f in families:
        for r in args.rules:
            row = [f, r, len(args.seeds)]
            for k in SWEEP_METRICS:
                vals = [by_cell[(f, r, s)][k] for s in args.seeds if k in by_cell[(f, r, s)]]
                row += [float(np.mean(vals)), float(np.std(vals))] if vals else ["", ""]
            table_rows.append(row)

    tests = []
    pairs = [("triangular", "gaussian", ("mean_frad", "fidelity_percent", "mse")),
             ("triangular", "dt", ("fidelity_percent", "mse")),
             ("gaussian", "dt", ("fidelity_percent", "mse"))]
    for fa, fb, keys in pairs:
        if fa not in families or fb not in families:
            continue
        for r in args.rules:
            for k in keys:
                a = [by_cell[(fa, r, s)][k] for s in args.seeds]
                b = [by_cell[(fb, r, s)][k] for s in args.seeds]
                tests.append({"metric": k, "rules": r, "a": fa, "b": fb, **_pair_test(a, b)})

    out = _prepare_out(args.out)
    atomic_write_text(out / "cells.csv", _csv(cell_rows, ["family", "rules", "seed", *SWEEP_METRICS]))
    header = ["family", "rules", "n_seeds"] + [f"{k}_{s}" for k in SWEEP_METRICS for s in ("mean", "std")]
    atomic_write_text(out / "table.csv", _csv(table_rows, header))
    atomic_write_text(out / "ttests.json", dump_json(tests))
    write_manifest(out, "sweep", argv,
                   {"families": families, "rules": args.rules, "lambda": args.lam, "beta": args.beta,
                    "tau": args.tau, "standardize": not args.no_standardize, "workers": n_workers},
                   args.seeds, {"dataset": args.dataset}, ["cells.csv", "table.csv", "ttests.json", "manifest.json"])
    print(_csv(table_rows, header), end="")
    return EXIT_OK


def cmd_export_rules(args, argv) -> int:
    model = load_model(args.model)
    notes = []
    if args.scheme:
        scheme = LabelScheme.from_file(args.scheme)
    else:
        scheme = default_scheme()
        notes.append("no --scheme given: built-in default label scheme used")
    doc = export_rulebase(model, scheme, args.salience)
    out = _prepare_out(args.out)
    atomic_write_text(out / "rules.txt", doc.text)
    atomic_write_text(out / "rules.json", doc.to_json())
    write_manifest(out, "export-rules", argv, {"salience_threshold": args.salience, "scheme": scheme.to_dict()},
                   [], {"model": args.model, "scheme": args.scheme}, ["rules.txt", "rules.json", "manifest.json"],
                   notes)
    print(doc.text, end="")
    return EXIT_OK


# --- argument parsing -------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fuzzydistill", description="Distil a control policy into a TSK fuzzy rule base.")
    p.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def fit_flags(sp):
        sp.add_argument("--family", choices=("gaussian", "triangular"), default="triangular")
        sp.add_argument("--rules", type=int, default=16)
        sp.add_argument("--beta", type=float, default=1.5)
        sp.add_argument("--lambda", dest="lam", type=float, default=0.1)
        sp.add_argument("--no-standardize", action="store_true",
                        help="cluster and fit in raw state units instead of z-scored units")

    g = sub.add_parser("generate", help="roll out the scripted teacher and write a dataset")
    g.add_argument("--env-config")
    g.add_argument("--n", type=int, default=5000)
    g.add_argument("--seed", type=int, default=None, help="defaults to the env config seed (42)")
    g.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("distill", help="fit a rule base and report validation metrics")
    d.add_argument("--dataset", required=True)
    fit_flags(d)
    d.add_argument("--seed", type=int, default=42)
    d.add_argument("--tau", type=float, default=DEFAULT_TAU)
    d.add_argument("--train-fraction", type=float, default=0.8)
    d.add_argument("--kmeans-max-iter", type=int, default=300)
    d.add_argument("--kmeans-tol", type=float, default=1e-6)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_distill)

    e = sub.add_parser("evaluate", help="metrics of a model on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--tau", type=float, default=DEFAULT_TAU)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("rollout-compare", help="DTW between teacher and surrogate rollouts")
    r.add_argument("--model")
    r.add_argument("--policy", choices=("model", "teacher"), default="model",
                   help="'teacher' substitutes the teacher for the surrogate (sanity check: DTW 0)")
    r.add_argument("--env-config")
    r.add_argument("--rollouts", type=int, default=10)
    r.add_argument("--seed", type=int, default=42)
    r.add_argument("--max-steps", type=int)
    r.add_argument("--tau", type=float, default=DEFAULT_TAU)
    r.add_argument("--dtw-use", choices=("both", "state", "action"), default=BOTH)
    r.add_argument("--dtw-normalize", action="store_true")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_rollout_compare)

    s = sub.add_parser("sweep", help="rule-count x family x seed grid with paired t-tests")
    s.add_argument("--dataset", required=True)
    s.add_argument("--rules", type=parse_int_list, default=[4, 8, 16], help="comma list, e.g. 4,8,16")
    s.add_argument("--families", default="triangular,gaussian,dt")
    s.add_argument("--seeds", type=parse_seeds, default=parse_seeds(DEFAULT_SEEDS))
    s.add_argument("--beta", type=float, default=1.5)
    s.add_argument("--lambda", dest="lam", type=float, default=0.1)
    s.add_argument("--tau", type=float, default=DEFAULT_TAU)
    s.add_argument("--no-standardize", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    x = sub.add_parser("export-rules", help="render the rule base as IF-THEN text and JSON")
    x.add_argument("--model", required=True)
    x.add_argument("--scheme", help="label scheme (JSON or TOML); built-in default if omitted")
    x.add_argument("--salience", type=float, default=DEFAULT_SALIENCE)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_rules)
    return p


def _fail(out, code: int, exc: BaseException) -> int:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(f"error: {exc}", file=sys.stderr)
    if out:
        # machine-readable record next to where the outputs would have gone
        try:
            out = Path(out)
            out.mkdir(parents=True, exist_ok=True)
            atomic_write_text(out / "error.json", dump_json(record))
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = getattr(args, "out", None)
    try:
        return args.func(args, argv)
    except UsageError as exc:
        return _fail(out, EXIT_USAGE, exc)
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(out, EXIT_NUMERICAL, exc)
    except (FuzzyDistillError, ValueError, OSError, KeyError) as exc:
        return _fail(out, EXIT_DATA, exc)


if __name__ == "__main__":
    sys.exit(main())
