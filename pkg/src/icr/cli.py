"""Command-line entry point: ``icr {local-fit,aggregate,simulate,bench,evaluate}``.

Exit status is 0 on success, 2 for bad input and 3 for numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import bench, fileio
from .admm import SolverConfig, SolverDivergence
from .core import PenaltySpec, check_packets
from .local import LassoConfig, make_packet
from .metrics import replicate_metrics
from .selection import grid_search
from .simulate import FULL_SCALE, ScenarioSpec, generate, true_active, true_theta, truth

log = logging.getLogger("icr")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(Exception):
    pass


def _grid(text):
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("grid values must be positive")
    return vals


def _subconfig(cls, d: dict, **override):
    known = {f.name for f in fields(cls)}
    bad = set(d) - known
    if bad:
        raise InputError(f"unknown {cls.__name__} keys: {sorted(bad)}")
    return cls(**{**d, **{k: v for k, v in override.items() if v is not None}})


def _load_config(path) -> dict:
    if path is None:
        return {}
    d = fileio.read_json(path)
    if not isinstance(d, dict):
        raise InputError(f"{path}: expected a JSON object")
    return d


def _scenario(path, seed, full_scale) -> ScenarioSpec:
    spec = ScenarioSpec.from_dict(_load_config(path))
    if full_scale:
        spec = replace(spec, desk_scale=False, **FULL_SCALE[spec.example_id])
    if seed is not None:
        spec = replace(spec, seed=seed)
    return spec


def cmd_local_fit(args) -> int:
    conf = _load_config(args.config)
    kind = conf.pop("loss_kind", args.loss_kind)
    lasso = _subconfig(LassoConfig, conf, seed=args.seed)
    data = fileio.read_dataset(args.data, kind)
    pk = make_packet(data, lasso, args.client_id or Path(args.data).stem)
    d = fileio.packet_to_dict(pk)
    d["config"] = {"loss_kind": kind, **asdict(lasso)}
    fileio.write_json(d, args.out)
    return EXIT_OK


def cmd_aggregate(args) -> int:
    packets = [fileio.read_packet(f) for f in args.packets]
    check_packets(packets)
    conf = _load_config(args.spec)
    penalty = _subconfig(PenaltySpec, conf.get("penalty", {}), tau=args.tau, nu=args.nu)
    solver = _subconfig(SolverConfig, conf.get("solver", {}))
    l1 = args.lambda1_grid or conf.get("lambda1_grid")
    l2 = args.lambda2_grid or conf.get("lambda2_grid")
    result = grid_search(packets, l1, l2, penalty, solver, conf.get("mbic_mode", "values"))
    if not any(row["converged"] for row in result.table):
        log.error("no grid point converged")
        return EXIT_NUMERIC
    best = result.best
    extra = {"mbic": best.info["mbic"], "client_ids": [pk.client_id for pk in packets],
             "config": {"penalty": asdict(penalty), "solver": asdict(solver)}}
    fileio.write_json(fileio.model_to_dict(best, extra), args.out_model)
    Path(args.out_scores).write_text(result.to_csv())
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _scenario(args.scenario, args.seed, args.full_scale)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, data in enumerate(generate(spec, args.replicate)):
        fileio.write_dataset(data, out / f"client_{k:03d}.csv")
    psi, partition = truth(spec)
    fileio.write_json({
        "scenario": asdict(spec), "replicate": args.replicate, "loss_kind": spec.loss_kind,
        "psi": psi.tolist(), "partition": partition, "active": true_active(spec),
        "theta_star": true_theta(spec).tolist(),
    }, out / "truth.json")
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = _scenario(args.scenario, args.seed, args.full_scale)
    methods = tuple(m.strip() for m in args.methods.split(","))
    cfg = bench.BenchConfig(
        methods=methods, replicates=args.replicates,
        lambda1_grid=tuple(args.lambda1_grid) if args.lambda1_grid else None,
        lambda2_grid=tuple(args.lambda2_grid) if args.lambda2_grid else None,
        penalty=PenaltySpec(tau=args.tau or 3.0, nu=args.nu or 1.0),
    )
    reps = bench.run_replicates(spec, cfg, threads=args.threads)
    Path(args.out).write_text(bench.table_csv(bench.summarize(reps, list(methods))))
    if args.per_replicate:
        Path(args.per_replicate).write_text(bench.replicates_csv(reps))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = fileio.read_json(args.model)
    tr = fileio.read_json(args.truth)
    try:
        theta = np.asarray(model["theta_hat"], dtype=float)
        partition = model["partition"]
        metrics = replicate_metrics(theta, partition, np.asarray(tr["theta_star"], dtype=float),
                                    tr["partition"], tr["active"])
    except (KeyError, TypeError) as exc:
        raise InputError(f"model or truth file is missing fields: {exc}") from exc
    fileio.write_json(metrics, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="icr", description="Clustered regression from client summary statistics.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def tuning(p):
        p.add_argument("--lambda1-grid", type=_grid, help="comma-separated lambda1 values")
        p.add_argument("--lambda2-grid", type=_grid, help="comma-separated lambda2 values")
        p.add_argument("--tau", type=float, help="concavity of the penalties (default 3)")
        p.add_argument("--nu", type=float, help="augmented Lagrangian parameter (default 1)")

    p = sub.add_parser("local-fit", help="fit one client's data and write its summary packet")
    p.add_argument("data")
    p.add_argument("--config", help="JSON with loss_kind and Lasso settings")
    p.add_argument("--out", required=True)
    p.add_argument("--loss-kind", choices=("squared", "logistic"), default="squared")
    p.add_argument("--client-id")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_local_fit)

    p = sub.add_parser("aggregate", help="tune and fit the clustered model from packets")
    p.add_argument("packets", nargs="+")
    p.add_argument("--spec", help="JSON with penalty, solver and grid settings")
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-scores", required=True)
    tuning(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("simulate", help="write one replicate's client CSVs and truth file")
    p.add_argument("scenario")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--seed", type=int)
    p.add_argument("--full-scale", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="run replicates and write a metric table")
    p.add_argument("scenario")
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--methods", default="ICR,Local,Oracle")
    p.add_argument("--out", required=True)
    p.add_argument("--per-replicate")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--full-scale", action="store_true")
    tuning(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("evaluate", help="score a model file against a truth file")
    p.add_argument("model")
    p.add_argument("truth")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, fileio.FormatError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverDivergence, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
