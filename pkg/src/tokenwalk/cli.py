"""Command-line interface.

Subcommands:
  graph-info   summarize an edge-list file
  run          Monte-Carlo replica experiment, MSE series to CSV (+figure)
  theory       closed-form covariance traces over an alpha grid to CSV
  verify       run the property suite, PASS/FAIL per property
  fit          inverse-square curve fit of an (alpha, value) CSV

Exit codes: 0 success, 1 validation error, 2 numerical error. Every CSV
written by `run`/`theory`/`fit` starts with a '# key=value' echo of the
effective configuration; report figures (PNG) land next to each CSV
unless --no-figures is given.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import covariance as cov
from .engine import StepSchedule, record_grid
from .errors import NumericalError, TokenwalkError, ValidationError
from .graphs import (graph_info, largest_connected_component, load_edge_list)
from .harness import (fit_inverse_square, read_points_csv, run_replicas,
                      write_fit_csv, write_mse_csv, write_replica_csv,
                      write_theory_csv)
from .kernels import build_mhrw, lazy_transform, uniform_target
from .objectives import (assign_to_nodes, logistic_objective, make_drift,
                         make_quadratic_toy, ncreg_objective, parse_libsvm,
                         solve_theta_star)
from .spectral import decompose

CASE_PRESETS = {1: (0.8, 0.9), 2: (0.9, 0.9), 3: (1.0, 0.9)}


class _Parser(argparse.ArgumentParser):
    """argparse that reports flag problems as validation errors (exit 1)."""

    def error(self, message):
        raise ValidationError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tokenwalk",
                     description="self-repellent walk stochastic approximation")
    sub = parser.add_subparsers(dest="command")

    p_info = sub.add_parser("graph-info", help="summarize an edge list file")
    p_info.add_argument("file")

    p_run = sub.add_parser("run", help="Monte-Carlo MSE experiment")
    p_run.add_argument("--config", help="flat key=value file; flags override")
    p_run.add_argument("--graph")
    p_run.add_argument("--objective", choices=["logistic", "ncreg", "quad"])
    p_run.add_argument("--variant", choices=["sgd", "shb", "momentum"])
    p_run.add_argument("--dataset")
    p_run.add_argument("--features", type=int)
    p_run.add_argument("--kappa", type=float)
    p_run.add_argument("--centers-seed", type=int, dest="centers_seed")
    p_run.add_argument("--alpha", type=float)
    p_run.add_argument("--a", type=float)
    p_run.add_argument("--b", type=float)
    p_run.add_argument("--steps", type=int)
    p_run.add_argument("--replicas", type=int)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--record", type=int)
    p_run.add_argument("--lazy", type=float)
    p_run.add_argument("--threads", type=int)
    p_run.add_argument("--out")
    p_run.add_argument("--no-figures", action="store_true")

    p_th = sub.add_parser("theory", help="closed-form covariance traces")
    p_th.add_argument("--graph", required=True)
    p_th.add_argument("--objective", required=True,
                      choices=["logistic", "ncreg", "quad"])
    p_th.add_argument("--variant", choices=["sgd", "shb", "momentum"],
                      default="sgd")
    p_th.add_argument("--dataset")
    p_th.add_argument("--features", type=int, required=True)
    p_th.add_argument("--kappa", type=float, default=1.0)
    p_th.add_argument("--centers-seed", type=int, dest="centers_seed", default=0)
    p_th.add_argument("--alphas", required=True,
                      help="comma-separated list, e.g. 0,1,5,10")
    p_th.add_argument("--case", type=int, choices=[1, 2, 3], required=True)
    p_th.add_argument("--a", type=float)
    p_th.add_argument("--b", type=float)
    p_th.add_argument("--lazy", type=float)
    p_th.add_argument("--out", required=True)
    p_th.add_argument("--no-figures", action="store_true")

    p_ver = sub.add_parser("verify", help="run the property suite")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--quick", action="store_true",
                       help="skip the multi-minute Monte-Carlo properties")

    p_fit = sub.add_parser("fit", help="fit c1/(x+c2)^2 + c3 to CSV points")
    p_fit.add_argument("--in", dest="infile", required=True)
    p_fit.add_argument("--out", required=True)
    p_fit.add_argument("--no-figures", action="store_true")

    return parser


RUN_DEFAULTS = {
    "variant": "sgd", "a": 0.8, "b": 0.9, "seed": 0, "kappa": 1.0,
    "centers_seed": 0, "record": None, "lazy": None, "threads": None,
    "dataset": None, "no_figures": False,
}
RUN_REQUIRED = ("graph", "objective", "alpha", "steps", "replicas", "out",
                "features")
_RUN_TYPES = {
    "graph": str, "dataset": str, "objective": str, "variant": str,
    "alpha": float, "a": float, "b": float, "steps": int, "replicas": int,
    "seed": int, "record": int, "out": str, "features": int, "kappa": float,
    "centers_seed": int, "lazy": float, "threads": int,
}


def _parse_config_file(path: str) -> dict:
    """Flat key=value lines; '#' comments; keys match the run flags."""
    merged: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ValidationError(f"{path} line {lineno}: expected key=value")
        if key not in _RUN_TYPES:
            raise ValidationError(f"{path} line {lineno}: unknown key {key!r}")
        try:
            merged[key] = _RUN_TYPES[key](value.strip())
        except ValueError:
            raise ValidationError(
                f"{path} line {lineno}: bad value for {key!r}") from None
    return merged


def _load_kernel(graph_path: str, lazy: float | None):
    g = load_edge_list(Path(graph_path).read_text())
    if not g.connected:
        g = largest_connected_component(g)
    k = build_mhrw(g, uniform_target(g.n))
    if lazy is not None:
        k = lazy_transform(k, lazy)
    return g, k


def _build_objective(name: str, n_nodes: int, features: int, kappa: float,
                     dataset: str | None, centers_seed: int):
    if name == "quad":
        return make_quadratic_toy(n_nodes, dim=features, seed=centers_seed)
    if dataset is None:
        raise ValidationError(f"objective {name!r} requires --dataset")
    ds = parse_libsvm(Path(dataset).read_text(), features)
    ds = assign_to_nodes(ds, n_nodes)
    if name == "logistic":
        return logistic_objective(ds.features, ds.labels, kappa)
    return ncreg_objective(ds.features, ds.labels, kappa)


def _cmd_graph_info(args) -> int:
    g = load_edge_list(Path(args.file).read_text())
    info = graph_info(g)
    info["largest_component"] = largest_connected_component(g).n
    for key, val in info.items():
        print(f"{key}: {str(val).lower() if isinstance(val, bool) else val}")
    return 0


def _cmd_run(args) -> int:
    opts = dict(RUN_DEFAULTS)
    if args.config:
        opts.update(_parse_config_file(args.config))
    for key in _RUN_TYPES:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            opts[key] = flag_val
    if args.no_figures:
        opts["no_figures"] = True
    missing = [key for key in RUN_REQUIRED if opts.get(key) is None]
    if missing:
        raise ValidationError(f"missing required options: {', '.join(missing)}")

    g, k = _load_kernel(opts["graph"], opts["lazy"])
    obj = _build_objective(opts["objective"], g.n, opts["features"],
                           opts["kappa"], opts["dataset"], opts["centers_seed"])
    drift = make_drift(obj, opts["variant"])
    eq = solve_theta_star(obj, k.mu, variant=opts["variant"])
    schedule = StepSchedule(a=opts["a"], b=opts["b"])
    rec = (record_grid(opts["steps"], cap=opts["record"])
           if opts["record"] else None)
    result = run_replicas(k, drift, schedule, opts["alpha"], opts["steps"],
                          opts["replicas"], opts["seed"],
                          theta_target=eq.z_star[drift.theta_slice],
                          record_indices=rec, threads=opts["threads"])

    echo = {"command": "run"}
    for key in ("graph", "objective", "variant", "dataset", "features",
                "kappa", "alpha", "a", "b", "steps", "replicas", "seed",
                "record", "lazy", "out"):
        echo[key] = opts[key]
    echo["nodes"] = g.n
    echo["failed_replicas"] = result.n_failed
    echo["config_hash"] = result.batch.config_hash

    out = Path(opts["out"])
    write_mse_csv(out, result.series, echo)
    write_replica_csv(out.with_suffix(".replicas.csv"), result.batch.indices,
                      result.sq_errors, echo)
    if not opts["no_figures"]:
        from .report import save_mse_figure
        save_mse_figure({f"alpha={opts['alpha']}": result.series},
                        out.with_suffix(".png"))
    print(f"wrote {out}")
    return 0


def _parse_alphas(text: str) -> list[float]:
    try:
        alphas = [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ValidationError(f"bad --alphas list {text!r}") from None
    if not alphas:
        raise ValidationError("--alphas list is empty")
    if any(a < 0 for a in alphas):
        raise ValidationError("alphas must be non-negative")
    return alphas


def _cmd_theory(args) -> int:
    a_exp, b_exp = CASE_PRESETS[args.case]
    if args.a is not None:
        a_exp = args.a
    if args.b is not None:
        b_exp = args.b
    alphas = _parse_alphas(args.alphas)

    g, k = _load_kernel(args.graph, args.lazy)
    obj = _build_objective(args.objective, g.n, args.features, args.kappa,
                           args.dataset, args.centers_seed)
    drift = make_drift(obj, args.variant)
    eq = solve_theta_star(obj, k.mu, variant=args.variant)
    dec = decompose(k)

    rows = []
    prev_vt = None
    for alpha in alphas:
        rep = cov.covariance_report(dec, eq.drift_matrix, eq.grad_h, k, alpha,
                                    a_exp, b_exp, args.case,
                                    theta_block=drift.theta_slice)
        if prev_vt is None:
            gap = float("nan")
        else:
            gap = float(np.linalg.eigvalsh(prev_vt - rep.v_theta_matrix)[0])
        rows.append((alpha, args.case, rep.trace_v_x, rep.trace_v_theta, gap))
        prev_vt = rep.v_theta_matrix

    echo = {"command": "theory", "graph": args.graph,
            "objective": args.objective, "variant": args.variant,
            "dataset": args.dataset, "features": args.features,
            "kappa": args.kappa, "alphas": args.alphas, "case": args.case,
            "a": a_exp, "b": b_exp, "lazy": args.lazy, "nodes": g.n,
            "out": args.out}
    out = Path(args.out)
    write_theory_csv(out, rows, echo)
    if not args.no_figures:
        from .report import save_theory_figure
        save_theory_figure(rows, out.with_suffix(".png"))
    print(f"wrote {out}")
    return 0


def _cmd_verify(args) -> int:
    from .verify import run_checks
    results = run_checks(seed=args.seed, quick=args.quick)
    all_ok = True
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        all_ok &= res.passed
        print(f"{status} {res.name} ({res.detail}) [{res.seconds:.1f}s]")
    return 0 if all_ok else 1


def _cmd_fit(args) -> int:
    alphas, values = read_points_csv(args.infile)
    fit = fit_inverse_square(alphas, values)
    echo = {"command": "fit", "in": args.infile, "out": args.out,
            "points": len(alphas)}
    out = Path(args.out)
    write_fit_csv(out, fit, echo)
    if not args.no_figures:
        from .report import save_fit_figure
        save_fit_figure(alphas, values, fit, out.with_suffix(".png"))
    print(f"wrote {out}")
    return 0


_COMMANDS = {
    "graph-info": _cmd_graph_info,
    "run": _cmd_run,
    "theory": _cmd_theory,
    "verify": _cmd_verify,
    "fit": _cmd_fit,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except SystemExit as exc:        # --help
        return 0 if exc.code in (0, None) else 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except (TokenwalkError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
