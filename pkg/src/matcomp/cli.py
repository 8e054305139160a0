"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .cleaning import CleaningConfig
from .experiments import (DESK_CAP, KINDS, ExperimentSpec, _histogram_rows, default_sigma,
                          model_name, run_experiment)
from .formats import (DataError, read_config, read_factors, read_mtx, write_csv,
                      write_factors, write_json, write_mtx)
from .grassmann import RescalingError
from .metrics import rmse
from .pipeline import complete, rank_sweep
from .records import RunRecord
from .sampling import RevealModel, random_low_rank, reveal
from .spectral import spectral_diagnostics, trim
from .sparsemat import top_r_svd

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("matcomp")


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    """Comma list with optional ``a-b`` ranges, e.g. ``0-4,7``."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part[1:]:
                lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers or ranges, got {text!r}")
    return out


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_common(p):
    p.add_argument("--config", help="flat key=value file; command-line flags win")
    p.add_argument("--output", default=".", help="output directory")


def _add_cleaning(p):
    g = p.add_argument_group("cleaning")
    g.add_argument("--rho", type=float)
    g.add_argument("--rho-mode", choices=("n_eps", "sigma_scaled"), default="n_eps")
    g.add_argument("--mu0", type=float, help="fixed incoherence level (default: doubling search)")
    g.add_argument("--gamma", type=float, default=math.inf)
    g.add_argument("--max-iters", type=int, default=500)
    g.add_argument("--grad-tol", type=float)
    g.add_argument("--fit-tol", type=float, default=CleaningConfig.fit_tol)
    g.add_argument("--initial-step", type=float, default=1.0)
    g.add_argument("--backtrack", type=float, default=0.5)
    g.add_argument("--armijo", type=float, default=1e-4)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="matcomp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw ground-truth factors and a revealed set")
    _add_common(p)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--sigma", type=_floats)
    p.add_argument("--model", default="uniform", choices=("uniform", "bernoulli", "heavytail"))
    p.add_argument("--num-revealed", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allow-large", action="store_true")

    p = sub.add_parser("complete", help="reconstruct a low-rank matrix from a .mtx file")
    _add_common(p)
    p.add_argument("--observed", required=True)
    p.add_argument("--r", type=int)
    p.add_argument("--rank-sweep", type=_ints, help="rmin,rmax")
    p.add_argument("--skip-clean", action="store_true")
    p.add_argument("--truth", help="ground-truth factors file for error reporting")
    p.add_argument("--seed", type=int, default=0)
    _add_cleaning(p)

    p = sub.add_parser("spectrum", help="singular values before/after trimming")
    _add_common(p)
    p.add_argument("--observed", required=True)
    p.add_argument("--truth")
    p.add_argument("--r", type=int, default=3)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--full", action="store_true", help="histogram the full dense spectrum")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("experiment", help="run an experiment grid")
    _add_common(p)
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--n", type=_ints, required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--r", type=_ints, required=True)
    b = p.add_mutually_exclusive_group()
    b.add_argument("--eps", type=_floats)
    b.add_argument("--num-revealed", type=_ints)
    b.add_argument("--nlogn", type=_floats, help="|E| = c n log n multipliers")
    p.add_argument("--seeds", type=_ints, default=[0])
    p.add_argument("--model", default="uniform", choices=("uniform", "bernoulli", "heavytail"))
    p.add_argument("--sigma", type=_floats)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--skip-clean", type=_bool, default=None)
    p.add_argument("--success-tol", type=float, default=1e-6)
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--allow-large", action="store_true")
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)  # pragma: no cover


def _scan(argv):
    """Find the subcommand and ``--config`` value without a full parse."""
    command = config = None
    for i, tok in enumerate(argv):
        if command is None and tok in COMMANDS:
            command = tok
        elif tok == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif tok.startswith("--config="):
            config = tok.split("=", 1)[1]
    return command, config


def _apply_config(parser, argv):
    """Re-parse with values from ``--config`` installed as defaults."""
    argv = list(sys.argv[1:] if argv is None else argv)
    command, config = _scan(argv)
    if command is None or config is None:
        return parser.parse_args(argv)
    sub = _subparser(parser, command)
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in read_config(config).items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            value = _bool(raw)
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}")
        else:
            value = raw
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r}: invalid choice {value!r}")
        defaults[key] = value
    sub.set_defaults(**defaults)
    for a in sub._actions:
        if a.dest in defaults:
            a.required = False
    return parser.parse_args(argv)


def _cleaning_config(args) -> CleaningConfig:
    try:
        return CleaningConfig(rho=args.rho, rho_mode=args.rho_mode, mu0=args.mu0,
                              gamma=args.gamma, max_iters=args.max_iters, grad_tol=args.grad_tol,
                              fit_tol=args.fit_tol, initial_step=args.initial_step,
                              backtrack=args.backtrack, armijo=args.armijo)
    except ValueError as exc:
        raise UsageError(str(exc))


def cmd_generate(args) -> int:
    m = args.m if args.m is not None else args.n
    n, r = args.n, args.r
    if min(m, n) < 1 or not 1 <= r <= min(m, n):
        raise UsageError("need positive dimensions and 1 <= r <= min(m, n)")
    if max(m, n) > DESK_CAP and not args.allow_large:
        raise UsageError(f"dimensions above {DESK_CAP} need --allow-large")
    sigma = args.sigma if args.sigma is not None else default_sigma(r)
    if len(sigma) != r or min(sigma) <= 0:
        raise UsageError("--sigma needs r positive values")
    kind = model_name(args.model)
    if kind == "uniform_fixed_size":
        if args.num_revealed is None and args.eps is None:
            raise UsageError("uniform model needs --num-revealed or --eps")
        count = args.num_revealed if args.num_revealed is not None \
            else int(round(args.eps * math.sqrt(m * n)))
        if count < 1 or count > m * n:
            raise UsageError(f"--num-revealed must lie in [1, m*n = {m * n}], got {count}")
        model = RevealModel(kind, count, args.seed)
    else:
        if args.eps is None or args.eps <= 0:
            raise UsageError(f"{args.model} model needs a positive --eps")
        if args.eps > math.sqrt(m * n):
            raise UsageError("--eps exceeds sqrt(m n)")
        model = RevealModel(kind, args.eps, args.seed)
    truth = random_low_rank(m, n, r, sigma, seed=args.seed)
    observed = reveal(truth, model)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_factors(out / "factors.txt", truth)
    write_mtx(out / "observed.mtx", observed)
    log.info("wrote %s and %s (|E| = %d)", out / "factors.txt", out / "observed.mtx", observed.nnz)
    return EXIT_OK


def cmd_complete(args) -> int:
    config = _cleaning_config(args)
    observed = read_mtx(args.observed)
    truth = read_factors(args.truth) if args.truth else None
    if truth is not None and truth.shape != observed.shape:
        raise DataError("truth and observed dimensions differ")
    if (args.r is None) == (args.rank_sweep is None):
        raise UsageError("give exactly one of --r and --rank-sweep")
    extra = {"observed_file": Path(args.observed).name, "num_revealed": observed.nnz,
             "eps": observed.eps}
    if args.rank_sweep is not None:
        if len(args.rank_sweep) != 2:
            raise UsageError("--rank-sweep expects rmin,rmax")
        rmin, rmax = args.rank_sweep
        if not 1 <= rmin <= rmax <= min(observed.shape):
            raise UsageError("rank range out of bounds")
        r, scores = rank_sweep(observed, rmin, rmax, config, args.skip_clean, args.seed)
        extra["rank_sweep"] = {str(k): v for k, v in scores.items()}
    else:
        r = args.r
        if not 1 <= r <= min(observed.shape):
            raise UsageError(f"--r must lie in [1, {min(observed.shape)}]")
    try:
        fit = complete(observed, r, config, skip_clean=args.skip_clean, seed=args.seed)
    except RescalingError as exc:
        raise NumericalFailure(str(exc))
    extra["r"] = r
    extra["sigma_trimmed"] = [float(v) for v in fit.svd.s]
    spec = {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v))
            for k, v in vars(args).items() if k not in ("config", "output", "observed", "truth")}
    rec = RunRecord(kind="complete", seed=args.seed, spec=spec, trim=fit.trim_report.summary(),
                    cleaning=fit.state.summary() if fit.state else None, extra=extra,
                    timings=fit.timings)
    if truth is not None:
        rec.error = rmse(truth, fit.factors, observed.nnz).to_dict()
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_factors(out / "reconstruction.txt", fit.factors)
    if fit.state is not None:
        rec.failure = fit.state.stop_reason if fit.failed else None
        write_csv(out / "trace.csv", ["iter", "F", "G", "grad_norm", "dist_to_x0", "step"],
                  [[t["iter"], t["F"], t["G"], t["grad_norm"], t["dist_to_x0"], t["step"]]
                   for t in fit.state.trace])
    rec.write(out / "run.json")
    if fit.failed:
        raise NumericalFailure(f"cleaning ended with {fit.state.stop_reason}"
                               + (" (degenerate inner solve)" if fit.state.degenerate else ""))
    return EXIT_OK


def cmd_spectrum(args) -> int:
    observed = read_mtx(args.observed)
    trimmed, report = trim(observed)
    k = min(args.top, min(observed.shape))
    if k < 1:
        raise UsageError("--top must be positive")
    before = top_r_svd(observed, k, seed=args.seed, vectors=0).s
    after = top_r_svd(trimmed, k, seed=args.seed, vectors=0).s
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sigma.csv", ["index", "before", "after"],
              [[i + 1, float(a), float(b)] for i, (a, b) in enumerate(zip(before, after))])
    hb, ha = before, after
    if args.full:
        hb = np.linalg.svd(observed.to_dense(), compute_uv=False)
        ha = np.linalg.svd(trimmed.to_dense(), compute_uv=False)
    write_csv(out / "spectrum_before.csv", ["bin_left", "bin_right", "count"], _histogram_rows(hb))
    write_csv(out / "spectrum_after.csv", ["bin_left", "bin_right", "count"], _histogram_rows(ha))
    write_csv(out / "degrees_row.csv", ["value", "count"], report.degree_histogram("row"))
    write_csv(out / "degrees_col.csv", ["value", "count"], report.degree_histogram("col"))
    result = {"trim": report.summary(), "sigma_before": [float(v) for v in before],
              "sigma_after": [float(v) for v in after]}
    if args.truth:
        truth = read_factors(args.truth)
        if truth.shape != observed.shape:
            raise DataError("truth and observed dimensions differ")
        if not 1 <= args.r < min(observed.shape):
            raise UsageError("--r out of range")
        result["diagnostics"] = spectral_diagnostics(truth, trimmed, args.r, observed.eps,
                                                     seed=args.seed).to_dict()
    write_json(out / "diagnostics.json", result)
    return EXIT_OK


def cmd_experiment(args) -> int:
    spec_kw = dict(kind=args.kind, n_grid=args.n, r_grid=args.r, seeds=args.seeds,
                   eps_grid=args.eps, num_revealed_grid=args.num_revealed, nlogn_grid=args.nlogn,
                   model=args.model, alpha=args.alpha, sigma=args.sigma, output=args.output,
                   top_k=args.top_k, skip_clean=args.skip_clean, success_tol=args.success_tol,
                   threads=args.threads, allow_large=args.allow_large)
    known = {f.name for f in fields(ExperimentSpec)}
    try:
        spec = ExperimentSpec(**{k: v for k, v in spec_kw.items() if k in known})
    except ValueError as exc:
        raise UsageError(str(exc))
    records, summary = run_experiment(spec)
    log.info("%d runs, %d failures -> %s", summary["runs"], summary["failures"], spec.output)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "complete": cmd_complete,
            "spectrum": cmd_spectrum, "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"matcomp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"matcomp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"matcomp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"matcomp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"matcomp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
