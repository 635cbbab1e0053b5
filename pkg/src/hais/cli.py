"""Command-line entry point: ``hais {estimate,loglik,sweep,preprocess}``.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .anneal import ESTIMATORS, HaisConfig, convergence_sweep, reference_for, run_chain
from .errors import ContractViolation, InputError, NonFiniteDynamics
from .io import file_digest, load_model, read_image, read_matrix, write_matrix
from .likelihood import analysis_log_likelihood, generative_log_likelihood
from .models import BilinearGenerative, EnergyModel, LinearGenerative
from .pipeline import PatchConfig, WhitenTransform, apply_whiten, extract_patches, fit_whiten
from .svg import sweep_chart

log = logging.getLogger("hais")

# high-accuracy runs want N near 1e5; this default keeps a single run under a few seconds
DEFAULT_N = 1000

SWEEP_HEADER = ["n_distributions", "estimator", "repeat", "log_z", "std_err", "ess", "seconds"]
LOGLIK_HEADER = ["index", "log_likelihood", "std_err_logz", "ess"]


class UsageError(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=DEFAULT_N, help="intermediate distributions N")
    p.add_argument("--particles", type=int, default=200)
    p.add_argument("--epsilon", type=float, default=0.2, help="leapfrog step size")
    p.add_argument("--gamma", type=float, default=None, help="momentum refresh fraction (default 1-2^-epsilon)")
    p.add_argument("--estimator", choices=ESTIMATORS, default="hais")
    p.add_argument("--mh-sigma", type=float, default=0.1)
    p.add_argument("--schedule", choices=("linear", "sigmoid"), default="linear")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hais", description="Hamiltonian annealed importance sampling")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate log Z of an analysis model")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--particles-out", type=Path, help="write per-particle log weights here")
    _shared(p)

    p = sub.add_parser("loglik", help="average log likelihood of a dataset")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--generative", action="store_true", help="one chain per datapoint over auxiliaries")
    _shared(p)

    p = sub.add_parser("sweep", help="log Z versus N for several estimators")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--n-list", required=True, help="comma-separated N values")
    p.add_argument("--estimators", default=",".join(ESTIMATORS))
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--svg", action="store_true", help="also write sweep.svg")
    _shared(p)

    p = sub.add_parser("preprocess", help="log, PCA-project and whiten patches or matrices")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--images", nargs="+", type=Path, help="PGM images to cut patches from")
    src.add_argument("--matrix", type=Path, help="matrix file, one sample per row")
    p.add_argument("--components", type=int, help="number of PCA components M (default: all)")
    p.add_argument("--patch-edge", type=int, default=16)
    p.add_argument("--n-patches", type=int, default=10_000)
    p.add_argument("--no-log", action="store_true", help="skip the log of image patches")
    p.add_argument("--log", action="store_true", help="take the log of matrix input")
    p.add_argument("--apply-transform", type=Path, help="reuse a saved transform instead of fitting")
    p.add_argument("--binary", action="store_true", help="write the output matrix in binary form")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config(args, **overrides) -> HaisConfig:
    fields = dict(
        n_distributions=args.n,
        n_particles=args.particles,
        epsilon=args.epsilon,
        gamma=args.gamma,
        seed=args.seed,
        estimator=args.estimator,
        mh_sigma=args.mh_sigma,
        schedule=args.schedule,
    )
    fields.update(overrides)
    try:
        return HaisConfig(**fields)
    except ContractViolation as err:
        raise UsageError(str(err)) from None


def _write_manifest(out: Path, args, argv, config: dict, inputs) -> None:
    doc = {
        "command": args.command,
        "argv": list(argv),
        "config": config,
        "seed": args.seed,
        "inputs": {str(p): file_digest(p) for p in inputs},
        "version": __version__,
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows, trailer: str | None = None) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
        if trailer:
            f.write(trailer + "\n")


def _analysis_model(path: Path) -> EnergyModel:
    model = load_model(path)
    if not isinstance(model, EnergyModel):
        raise UsageError(f"{path} holds a generative model; use 'loglik --generative'")
    return model


def cmd_estimate(args, argv) -> int:
    model = _analysis_model(args.model)
    cfg = _config(args)
    est = run_chain(reference_for(model), model, cfg, threads=args.threads)
    truth = model.analytic_log_z
    print(f"log_z {fmt(est.log_z)}")
    print(f"std_err {fmt(est.std_err)}")
    print(f"ess {fmt(est.ess)}")
    if truth is not None:
        print(f"analytic_log_z {fmt(truth)}")
    args.out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        args.out / "estimate.csv",
        ["log_z", "std_err", "ess", "log_z_proposal", "analytic_log_z"],
        [[est.log_z, est.std_err, est.ess, est.log_z_proposal, "" if truth is None else truth]],
    )
    if args.particles_out:
        _write_csv(
            args.particles_out,
            ["particle", "log_weight"],
            [[i, w] for i, w in enumerate(est.particle_log_weights)],
        )
    _write_manifest(args.out, args, argv, asdict(cfg), [args.model])
    return 0


def cmd_loglik(args, argv) -> int:
    model = load_model(args.model)
    data = read_matrix(args.data)
    generative = isinstance(model, (LinearGenerative, BilinearGenerative))
    if generative != args.generative:
        raise UsageError(
            "generative models need --generative" if generative else "--generative needs a generative model"
        )
    dim = model.data_dim if generative else model.dim
    if data.shape[1] != dim:
        raise UsageError(f"data has {data.shape[1]} columns but the model has dimension {dim}")
    cfg = _config(args)
    if generative:
        report = generative_log_likelihood(model, data, cfg, threads=args.threads)
    else:
        report = analysis_log_likelihood(model, data, cfg, threads=args.threads)

    args.out.mkdir(parents=True, exist_ok=True)
    rows = [
        [i, report.per_point[i], report.logz_std_err[i], report.ess[i]] for i in range(data.shape[0])
    ]
    summary = f"# mean_ll={fmt(report.mean_ll)},std_err={fmt(report.std_err)},n={report.n_ok}"
    _write_csv(args.out / "loglik.csv", LOGLIK_HEADER, rows, summary)
    doc = {
        "mean_ll": report.mean_ll,
        "std_err": report.std_err,
        "n_points": int(data.shape[0]),
        "n_ok": report.n_ok,
        "log_z": report.log_z,
        "mean_logz_std_err": float(np.nanmean(report.logz_std_err)) if report.n_ok else None,
        "failures": {str(k): v for k, v in report.failures.items()},
    }
    (args.out / "loglik.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    _write_manifest(args.out, args, argv, {**asdict(cfg), "generative": generative}, [args.model, args.data])
    print(f"mean_ll {fmt(report.mean_ll)}")
    print(f"std_err {fmt(report.std_err)}")
    for i, msg in report.failures.items():
        print(f"datapoint {i} failed: {msg}", file=sys.stderr)
    if report.n_ok == 0:
        return 1
    return 0


def cmd_sweep(args, argv) -> int:
    model = _analysis_model(args.model)
    try:
        n_list = [int(s) for s in args.n_list.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--n-list must be comma-separated integers, got {args.n_list!r}") from None
    if not n_list or min(n_list) < 1:
        raise UsageError("--n-list needs at least one positive N")
    estimators = [s.strip() for s in args.estimators.split(",") if s.strip()]
    bad = [e for e in estimators if e not in ESTIMATORS]
    if bad or not estimators:
        raise UsageError(f"unknown estimator {', '.join(bad) or '(none)'}; valid names: {', '.join(ESTIMATORS)}")
    if args.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    cfg = _config(args)
    rows = convergence_sweep(
        reference_for(model), model, n_list, args.repeats, cfg, estimators, threads=args.threads
    )
    args.out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        args.out / "sweep.csv",
        SWEEP_HEADER,
        [[r.n_distributions, r.estimator, r.repeat, r.log_z, r.std_err, r.ess, r.seconds] for r in rows],
    )
    if args.svg:
        (args.out / "sweep.svg").write_text(sweep_chart(rows, model.analytic_log_z))
    resolved = {**asdict(cfg), "n_list": n_list, "estimators": estimators, "repeats": args.repeats}
    _write_manifest(args.out, args, argv, resolved, [args.model])
    for r in rows:
        print(f"{r.n_distributions} {r.estimator} {r.repeat} {fmt(r.log_z)} {fmt(r.std_err)}")
    return 0


def cmd_preprocess(args, argv) -> int:
    rng = np.random.default_rng(args.seed)
    if args.images:
        images = [read_image(p) for p in args.images]
        cfg = PatchConfig(args.patch_edge, args.n_patches, not args.no_log)
        data = extract_patches(images, cfg, rng, [str(p) for p in args.images])
        inputs = list(args.images)
    else:
        data = read_matrix(args.matrix)
        if args.log:
            if np.any(data <= 0):
                raise InputError(f"{args.matrix}: nonpositive entries cannot be logged")
            data = np.log(data)
        inputs = [args.matrix]

    args.out.mkdir(parents=True, exist_ok=True)
    if args.apply_transform:
        try:
            t = WhitenTransform.from_dict(json.loads(args.apply_transform.read_text()))
        except (OSError, json.JSONDecodeError) as err:
            raise InputError(f"cannot load transform {args.apply_transform}: {err}") from None
        if t.in_dim != data.shape[1]:
            raise UsageError(f"transform expects {t.in_dim} columns but the data has {data.shape[1]}")
        inputs.append(args.apply_transform)
    else:
        m = args.components or data.shape[1]
        t = fit_whiten(data, m)
        (args.out / "transform.json").write_text(json.dumps(t.to_dict()) + "\n")
    white = apply_whiten(t, data)
    name = "data.bin" if args.binary else "data.txt"
    write_matrix(args.out / name, white, binary=args.binary)
    var = white.var(axis=0) if white.shape[0] else np.zeros(white.shape[1])
    print(f"rows {white.shape[0]} components {white.shape[1]}")
    if var.size:
        print(f"variance min {fmt(var.min())} max {fmt(var.max())}")
    resolved = {
        "components": t.out_dim,
        "patch_edge": args.patch_edge,
        "n_patches": args.n_patches,
        "apply_log": bool(args.images and not args.no_log) or bool(args.log),
        "binary": args.binary,
    }
    _write_manifest(args.out, args, argv, resolved, inputs)
    return 0


COMMANDS = {
    "estimate": cmd_estimate,
    "loglik": cmd_loglik,
    "sweep": cmd_sweep,
    "preprocess": cmd_preprocess,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except (UsageError, InputError, ContractViolation) as err:
        print(f"hais {args.command}: error: {err}", file=sys.stderr)
        return 2
    except NonFiniteDynamics as err:
        print(f"hais {args.command}: numerical failure: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
