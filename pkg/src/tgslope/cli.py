"""Command-line entry point: ``tgslope fit`` and ``tgslope simulate``."""

import argparse
import math
import os
import shlex
import sys

import numpy as np

from . import __version__, io, metrics
from .errors import FormatError, InvalidArgumentError, NumericalError
from .experiments import (
    METHODS,
    PRESET_VERSION,
    cv_select_lambda,
    plugin_sigma,
    preset_specs,
    run_study,
)
from .linalg import Rng
from .penalty import ChiQuantileParams, lambda_chi_sequence
from .solvers import Problem, SolverConfig, solve_pdcae, solve_tbmm, solve_tglasso, solve_tlrr

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
SPEC_FIELDS = ("n", "p", "p1", "p2", "k_rank", "s", "design", "sigma", "q")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidArgumentError(message)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _sigma(text):
    if text == "auto":
        return text
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive or 'auto', got {text}")
    return value


def build_parser():
    parser = _Parser(prog="tgslope", description="Group-SLOPE penalized CP low-rank tensor regression.")
    parser.add_argument("--version", action="version", version=f"tgslope {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit one model to a design and a response tensor")
    fit.add_argument("--config", help="JSON file with defaults for any option below")
    fit.add_argument("--x", help="design matrix CSV (n rows, p columns)")
    fit.add_argument("--y", help="response tensor .t3d with shape p1 x p2 x n")
    fit.add_argument("--k", type=_positive_int, help="CP rank K")
    fit.add_argument("--method", choices=METHODS, default="pdcae")
    fit.add_argument("--q", type=float, default=None, help="target level for the chi-quantile lambda (default 0.1)")
    fit.add_argument("--lambda-file", help="explicit lambda sequence, one value per line")
    fit.add_argument("--sigma", type=_sigma, default="auto", help="noise sd or 'auto' for the plug-in estimate")
    fit.add_argument("--eps", type=float, default=1e-6)
    fit.add_argument("--max-iter", type=_positive_int, default=5000)
    fit.add_argument("--seed", type=int, default=0, help="seed for the TgLASSO cross-validation folds")
    fit.add_argument("--timing", action="store_true", help="record wall time in diagnostics")
    fit.add_argument("--out", help="output directory")

    sim = sub.add_parser("simulate", help="run a replicated simulation preset")
    sim.add_argument("--config", help="JSON file with defaults for any option below")
    sim.add_argument("--preset", default=None, help="fdr, sparsity, size or rank")
    sim.add_argument("--scale", choices=("desk", "paper"), default="desk")
    sim.add_argument("--reps", type=_positive_int, default=None)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--methods", default=None, help="comma-separated subset of " + ",".join(METHODS))
    sim.add_argument("--threads", type=_positive_int, default=1)
    sim.add_argument("--eps", type=float, default=1e-6)
    sim.add_argument("--max-iter", type=_positive_int, default=5000)
    sim.add_argument("--timing", action="store_true", help="add a per-replication time column")
    sim.add_argument("--out", help="output directory")
    for name in ("n", "p", "p1", "p2", "k_rank", "s"):
        sim.add_argument("--" + name.replace("_", "-"), type=int, default=None, help=f"override {name}")
    sim.add_argument("--design", choices=("orthogonal", "gaussian"), default=None)
    sim.add_argument("--sigma", type=float, default=None)
    sim.add_argument("--q", type=float, default=None)
    return parser, {"fit": fit, "simulate": sim}


def _apply_config(parser, sub, argv):
    """Re-parse with defaults taken from ``--config`` so explicit flags still win."""
    args = parser.parse_args(argv)
    if args.command is None:
        raise InvalidArgumentError("a command is required: fit or simulate")
    if getattr(args, "config", None):
        allowed = {a.dest for a in sub[args.command]._actions if a.dest not in ("help", "config")}
        cfg = io.read_config(args.config, allowed)
        sub[args.command].set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _warn(message):
    print(f"tgslope: warning: {message}", file=sys.stderr)


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise InvalidArgumentError(f"--{name.replace('_', '-')} is required")


def _solver_config(args):
    return SolverConfig(epsilon=args.eps, max_iter=args.max_iter)


def _meta(args, argv):
    return {"seed": args.seed, "version": __version__, "flags": shlex.join(argv)}


def _finite_or_none(v):
    v = float(v)
    return v if math.isfinite(v) else None


def cli_fit(args, argv):
    _require(args, "x", "y", "k", "out")
    cfg = _solver_config(args)
    x = io.read_matrix_csv(args.x)
    y = io.read_t3d(args.y)
    if y.shape[2] != x.shape[0]:
        raise InvalidArgumentError(f"--y has {y.shape[2]} samples but --x has {x.shape[0]} rows")
    prob = Problem.from_tensor(x, y, args.k, np.zeros(x.shape[1]))
    diag = {"method": args.method, "k": args.k, "seed": args.seed, "version": __version__, "flags": shlex.join(argv)}

    if args.method == "tlrr":
        if args.q is not None or args.lambda_file:
            _warn("--method tlrr fits without a penalty; --q and --lambda-file are ignored")
        res = solve_tlrr(prob, cfg)
    elif args.method == "tglasso":
        if args.q is not None:
            _warn("--method tglasso selects lambda by cross-validation; --q is ignored")
        if args.lambda_file:
            lam = io.read_lambda(args.lambda_file, prob.p)
            if np.ptp(lam) != 0:
                raise InvalidArgumentError("--lambda-file for tglasso must hold a constant sequence")
            lam_value = float(lam[0])
        else:
            lam_value = cv_select_lambda(prob, rng=Rng(args.seed), cfg=cfg)
        diag["lambda_cv"] = lam_value
        res = solve_tglasso(prob, cfg, lam=lam_value)
    else:
        if args.lambda_file:
            lam = io.read_lambda(args.lambda_file, prob.p)
        else:
            q = 0.1 if args.q is None else args.q
            if args.sigma == "auto":
                sigma = plugin_sigma(prob, cfg)
                if not sigma > 0:
                    raise NumericalError("plug-in sigma is zero; pass --sigma explicitly", residual=sigma)
            else:
                sigma = args.sigma
            diag["sigma"] = sigma
            diag["q"] = q
            lam = lambda_chi_sequence(ChiQuantileParams(k_dof=args.k, q=q, sigma=sigma, p=prob.p))
        solver = solve_pdcae if args.method == "pdcae" else solve_tbmm
        res = solver(prob.with_lambda(lam), cfg)

    os.makedirs(args.out, exist_ok=True)
    io.write_t3d(os.path.join(args.out, "b_hat.t3d"), res.b_hat)
    meta = _meta(args, argv)
    io.write_matrix_csv(os.path.join(args.out, "g.csv"), res.g, meta)
    io.write_matrix_csv(os.path.join(args.out, "h.csv"), res.h, meta)
    diag.update(
        iterations=res.iterations,
        converged=bool(res.converged),
        rank_deficient=bool(res.rank_deficient),
        discovery=metrics.discovery(res.b_hat),
        final_step=_finite_or_none(res.final_step),
        lipschitz=_finite_or_none(res.lipschitz),
        objective_trace=[_finite_or_none(v) for v in res.objective_trace],
    )
    if args.timing:
        diag["elapsed"] = res.elapsed
    io.write_json(os.path.join(args.out, "diagnostics.json"), diag)
    print(f"{args.method}: discovery={diag['discovery']} iterations={res.iterations} converged={res.converged}")
    return EXIT_OK


SUMMARY_HEADER = ["grid_index", *SPEC_FIELDS, "nominal_fdr", "method", "metric", "mean", "sd", "se", "reps", "failures"]
REPS_HEADER = [
    "grid_index", "rep", "method", "fdp", "tp", "rgee", "mse", "l2_loss",
    "discovery", "iterations", "converged", "lam_cv", "error",
]


def cli_simulate(args, argv):
    _require(args, "preset", "out")
    overrides = {f: getattr(args, f) for f in SPEC_FIELDS if getattr(args, f) is not None}
    specs, methods = preset_specs(args.preset, scale=args.scale, reps=args.reps, seed=args.seed, **overrides)
    if args.methods:
        methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise InvalidArgumentError(f"--methods has unknown entries {unknown}")
    table = run_study(specs, methods, cfg=_solver_config(args), threads=args.threads)

    summary = []
    for row in table.rows:
        spec = specs[row.grid_index]
        summary.append([
            row.grid_index, *(getattr(spec, f) for f in SPEC_FIELDS), spec.nominal_fdr,
            row.method, row.metric, row.mean, row.sd, row.se, row.reps, row.failures,
        ])
    header = REPS_HEADER + (["time"] if args.timing else [])
    reps = []
    for r in table.reps:
        line = [getattr(r, name) for name in REPS_HEADER]
        if args.timing:
            line.append(r.time)
        reps.append(line)

    os.makedirs(args.out, exist_ok=True)
    meta = {**_meta(args, argv), "preset_version": PRESET_VERSION}
    io.write_table_csv(os.path.join(args.out, "summary.csv"), SUMMARY_HEADER, summary, meta)
    io.write_table_csv(os.path.join(args.out, "reps.csv"), header, reps, meta)
    for gi, spec in enumerate(specs):
        for method in methods:
            fdp = table.get(gi, method, "fdp")
            tp = table.get(gi, method, "tp")
            print(
                f"[{gi}] {method:8s} s={spec.s} p={spec.p} K={spec.k_rank} "
                f"fdp={fdp.mean:.4f}+-{fdp.se:.4f} (nominal {spec.nominal_fdr:.4f}) tp={tp.mean:.4f} "
                f"failures={fdp.failures}"
            )
    return EXIT_OK


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub = build_parser()
    try:
        args = _apply_config(parser, sub, argv)
        if args.command == "fit":
            return cli_fit(args, argv)
        return cli_simulate(args, argv)
    except (InvalidArgumentError, ValueError) as exc:
        print(f"tgslope: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (FormatError, OSError) as exc:
        print(f"tgslope: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"tgslope: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
