"""``fracrank`` command line.

Subcommands: ``complete`` (random completion sweeps), ``inpaint``,
``threshold-curve``, ``generate`` and ``solve``. Options may also come
from ``--config FILE`` holding ``key = value`` lines; command-line flags
win over the file, which wins over built-in defaults.

Exit codes: 0 success, 2 usage or configuration error, 3 unreadable or
malformed input, 4 numerical failure.
"""
import argparse
import csv
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import harness, inpaint
from .errors import FormatError, FracRankError
from .frac import ThresholdSpec, prox_array
from .linops import read_samples_csv, sampling_map, write_samples_csv
from .solver import (STOP_STEP, STOP_TARGET, AdaptiveLambda, ExplicitStep, FixedLambda,
                     LambdaFormula, SafeStep, SolverConfig, isvta_solve)

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# value parsers
# ---------------------------------------------------------------------------

def int_list(text):
    """``"11"``, ``"11,13,15"`` or an inclusive range ``"11-22"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                lo, hi = int(lo), int(hi)
                if hi < lo:
                    raise ValueError
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid integer list {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty integer list")
    return out


def positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be finite and > 0: {text!r}")
    return v


def mu_policy(text):
    """``safe``, ``safe:EPS`` or ``explicit:VALUE``."""
    kind, _, val = str(text).partition(":")
    try:
        if kind == "safe":
            return SafeStep(float(val)) if val else SafeStep()
        if kind == "explicit" and val:
            return ExplicitStep(float(val))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    raise argparse.ArgumentTypeError(f"expected safe[:EPS] or explicit:VALUE, got {text!r}")


def lambda_policy(text):
    """``adaptive`` (use the run's rank), ``adaptive:R`` or ``fixed:VALUE``."""
    kind, _, val = str(text).partition(":")
    try:
        if kind == "adaptive":
            return ("adaptive", int(val) if val else None)
        if kind == "fixed" and val:
            return ("fixed", FixedLambda(float(val)))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    raise argparse.ArgumentTypeError(f"expected adaptive[:R] or fixed:VALUE, got {text!r}")


def span(text):
    lo, sep, hi = str(text).partition(":")
    try:
        lo, hi = float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    if not sep or not lo < hi:
        raise argparse.ArgumentTypeError(f"expected LO:HI with LO < HI, got {text!r}")
    return lo, hi


def shape_arg(text):
    m, sep, n = str(text).lower().partition("x")
    try:
        m, n = int(m), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MxN, got {text!r}") from None
    if not sep or m < 1 or n < 1:
        raise argparse.ArgumentTypeError(f"expected MxN with positive sizes, got {text!r}")
    return m, n


def _resolve_lambda(spec, rank, formula):
    kind, val = spec
    if kind == "fixed":
        return val
    return AdaptiveLambda(val if val is not None else rank, formula)


def default_seed():
    env = os.environ.get("FRACRANK_SEED")
    if env is None or not env.strip():
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"FRACRANK_SEED must be an integer, got {env!r}") from None


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

# flag dests that differ from the flag name
_KEY_ALIASES = {"lambda": "lambda_"}
_DEST_NAMES = {v: k for k, v in _KEY_ALIASES.items()}


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key = key.strip().replace("-", "_")
            out[_KEY_ALIASES.get(key, key)] = value.strip()
    return out


def _apply_config(sub, values):
    """Install config-file values as parser defaults, converting like flags would."""
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in values.items():
        if key == "command":
            # present in echoed configs; must agree with the subcommand actually run
            if raw != sub.prog.split()[-1]:
                raise UsageError(f"config is for command {raw!r}, not {sub.prog.split()[-1]!r}")
            continue
        act = actions.get(key)
        if act is None:
            raise UsageError(f"unknown config key {key!r}")
        try:
            if isinstance(act, argparse._StoreTrueAction):
                low = raw.lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise argparse.ArgumentTypeError(f"expected a boolean, got {raw!r}")
                defaults[key] = low in ("true", "1", "yes")
            elif isinstance(act, argparse._AppendAction):
                conv = act.type or str
                defaults[key] = [conv(p.strip()) for p in raw.split(",") if p.strip()]
            else:
                defaults[key] = act.type(raw) if act.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"config key {key!r}: {exc}") from None
        act.required = False
    sub.set_defaults(**defaults)


def effective_config(args):
    """Every resolved option as ``key=value``; each value parses back through ``--config``."""
    parts = [f"command={args.command}"]
    for key in sorted(vars(args)):
        if key in ("func", "config", "command") or getattr(args, key) is None:
            continue
        parts.append(f"{_DEST_NAMES.get(key, key)}={_show(key, getattr(args, key))}")
    return " ".join(parts)


def _show(key, v):
    if isinstance(v, SafeStep):
        return f"safe:{v.epsilon!r}"
    if isinstance(v, ExplicitStep):
        return f"explicit:{v.mu!r}"
    if isinstance(v, LambdaFormula):
        return v.value
    if key == "lambda_" and isinstance(v, tuple):
        kind, val = v
        if kind == "fixed":
            return f"fixed:{val.value!r}"
        return "adaptive" if val is None else f"adaptive:{val}"
    if key == "range":
        return f"{v[0]!r}:{v[1]!r}"
    if key == "shape" and v is not None:
        return f"{v[0]}x{v[1]}"
    if isinstance(v, list):
        return ",".join(_show(None, x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_complete(args):
    specs = []
    if len(args.m) != len(args.n):
        raise UsageError("--m must be omitted or list as many sizes as --n")
    for n, m in zip(args.n, args.m):
        for rank in args.rank:
            for a in args.a:
                try:
                    specs.append(harness.ExperimentSpec(m=m, n=n, rank=rank, sr=args.sr, a=a,
                                                        seed=args.seed, trials=args.trials))
                except ValueError as exc:
                    raise UsageError(str(exc)) from None
    kind, val = args.lambda_
    policy = None
    if kind == "fixed" or val is not None:
        policy = _resolve_lambda(args.lambda_, None, args.lambda_formula)
    opts = harness.SweepOptions(method=args.method, tol=args.tol, max_iter=args.max_iter,
                                stop=args.stop, mu_policy=args.mu, lambda_policy=policy,
                                lambda_formula=args.lambda_formula)
    rows = harness.run_sweep(specs, opts, jobs=args.jobs)
    if args.average:
        rows = harness.average_trials(rows)
    if args.out:
        harness.write_csv(rows, args.out)
    sys.stdout.write(harness.format_table(rows))
    for r in rows:
        if r.error:
            print(f"warning: n={r.n} rank={r.rank} a={r.a:g} trial={r.trial}: {r.error}",
                  file=sys.stderr)
    return EXIT_OK


def _inpaint_job(job):
    image, rank, sr, method, a, seed, tol, max_iter, stop = job
    return inpaint.inpaint_run(image, rank, sr, method=method, a=a, seed=seed, tol=tol,
                               max_iter=max_iter, stop=stop)


def cmd_inpaint(args):
    if (args.image is None) == (args.synthetic is None):
        raise UsageError("give exactly one of --image or --synthetic")
    if args.image is not None:
        image = inpaint.load_image(args.image)
    elif args.synthetic.lower() in inpaint.SYNTHETIC_PRESETS:
        image = inpaint.preset_image(args.synthetic.lower(), seed=args.image_seed)
    else:
        try:
            w, h = inpaint.parse_size(args.synthetic)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        image = inpaint.synthetic_image(w, h, seed=args.image_seed)
    if not 1 <= args.rank <= min(image.height, image.width):
        raise UsageError(f"--rank must lie in [1, {min(image.height, image.width)}]")
    if not 0.0 < args.sr <= 1.0:
        raise UsageError("--sr must lie in (0, 1]")

    os.makedirs(args.out_dir, exist_ok=True)
    a_values = args.a if args.method == "isvta" else [args.a[0]]
    jobs = [(image, args.rank, args.sr, args.method, a, args.seed, args.tol, args.max_iter,
             args.stop) for a in a_values]
    n_workers = max(1, min(args.jobs, len(jobs)))
    if n_workers == 1:
        results = [_inpaint_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_inpaint_job, jobs))

    target, omega = inpaint.inpaint_problem(image, args.rank, args.sr, args.seed)
    stem = os.path.join(args.out_dir, image.name)
    inpaint.save_image(target, f"{stem}_target.png")
    inpaint.save_image(inpaint.masked_view(omega, target), f"{stem}_mask.png")
    rows = []
    for a, (recovered, metrics) in zip(a_values, results):
        tag = f"{args.method}_a{a:g}" if args.method == "isvta" else args.method
        inpaint.save_image(recovered, f"{stem}_{tag}.png")
        rows.append((image.name, metrics))
    inpaint.write_metrics_csv(rows, os.path.join(args.out_dir, "metrics.csv"))
    for _, m in rows:
        status = f"{m.re:.2e}" if m.converged else f"--- ({m.re:.2e})"
        print(f"{image.name} rank={m.rank} FR={m.fr:.4f} {m.method} a={m.a:g} RE={status} "
              f"iters={m.iterations} time={m.elapsed_seconds:.2f}s")
    return EXIT_OK


def threshold_curve(a_values, lam, mu, lo, hi, step):
    """Rows ``[gamma, prox_a1(gamma), prox_a2(gamma), ...]`` on an exact multiple-of-step grid."""
    k = np.arange(math.ceil(lo / step - 1e-9), math.floor(hi / step + 1e-9) + 1)
    gamma = k * step
    cols = [gamma]
    for a in a_values:
        cols.append(prox_array(gamma, ThresholdSpec.resolve(a, lam, mu)))
    return np.column_stack(cols)


def cmd_threshold_curve(args):
    lo, hi = args.range
    table = threshold_curve(args.a, args.lambda_, args.mu, lo, hi, args.step)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["gamma"] + [f"a={a:g}" for a in args.a])
        for row in table:
            w.writerow([repr(float(v)) for v in row])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_generate(args):
    m = args.m
    try:
        spec = harness.ExperimentSpec(m=m, n=args.n, rank=args.rank, sr=args.sr, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    M, omega = harness.generate_instance(spec, args.trial)
    write_samples_csv(omega, args.samples)
    if args.truth:
        np.save(args.truth, M)
    print(f"wrote {omega.size} samples of a {m}x{args.n} rank-{args.rank} matrix "
          f"(FR {spec.fr:.4f}) to {args.samples}")
    return EXIT_OK


def cmd_solve(args):
    omega = read_samples_csv(args.samples, shape=args.shape)
    truth = None
    if args.truth:
        try:
            truth = np.load(args.truth)
        except ValueError as exc:
            raise FormatError(f"{args.truth}: {exc}") from None
    if args.stop == STOP_TARGET and truth is None:
        raise UsageError("--stop target needs --truth")
    if args.lambda_[0] == "adaptive" and args.lambda_[1] is None and args.rank is None:
        raise UsageError("adaptive lambda needs a rank: --lambda adaptive:R or --rank R")
    policy = _resolve_lambda(args.lambda_, args.rank, args.lambda_formula)
    cfg = SolverConfig(lambda_policy=policy, a=args.a, mu_policy=args.mu, tol=args.tol,
                       max_iter=args.max_iter, stop=args.stop)
    result = isvta_solve(sampling_map(omega), omega.values, cfg, truth=truth)
    if args.out:
        np.save(args.out, result.x_opt)
    if args.trace:
        result.trace.to_csv(args.trace)
    re = "" if result.relative_error is None else f" RE={result.relative_error:.2e}"
    print(f"{result.trace.stop_reason} after {result.iterations} iterations{re}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common_solver_flags(p, stop_default):
    p.add_argument("--tol", type=positive_float, default=1e-4, help="stopping tolerance (default 1e-4)")
    p.add_argument("--max-iter", type=int, default=10000, help="iteration cap (default 10000)")
    p.add_argument("--mu", type=mu_policy, default=SafeStep(),
                   help="step size: safe[:EPS] = (1-EPS)/||A||^2, or explicit:VALUE (default safe)")
    p.add_argument("--stop", choices=[STOP_TARGET, STOP_STEP], default=stop_default,
                   help=f"'target': relative error vs ground truth <= tol; 'step': relative "
                        f"iterate change <= tol (default {stop_default})")


def _lambda_flags(p):
    p.add_argument("--lambda", dest="lambda_", metavar="LAMBDA", type=lambda_policy,
                   default=("adaptive", None),
                   help="adaptive[:R] or fixed:VALUE (default adaptive at the run's rank)")
    p.add_argument("--lambda-formula", type=LambdaFormula, default=LambdaFormula.SCALED,
                   choices=list(LambdaFormula), metavar="{scaled,unscaled}",
                   help="adaptive rule variant (default scaled)")


def build_parser():
    parser = argparse.ArgumentParser(prog="fracrank", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    cpu = os.cpu_count() or 1

    p = sub.add_parser("complete", help="random matrix completion sweeps")
    p.add_argument("--config", help="key = value file of defaults")
    p.add_argument("--n", type=int_list, required=True, help="column counts, e.g. 100 or 100,200")
    p.add_argument("--m", type=int_list, default=None, help="row counts (default: equal to --n)")
    p.add_argument("--rank", type=int_list, required=True, help="ranks, e.g. 11 or 11-22")
    p.add_argument("--sr", type=positive_float, default=0.4, help="sampling ratio (default 0.4)")
    p.add_argument("--a", type=positive_float, action="append", default=None,
                   help="fraction parameter; repeat for several (default 1)")
    p.add_argument("--seed", type=int, default=None, help="base seed (default $FRACRANK_SEED or 0)")
    p.add_argument("--trials", type=int, default=1, help="runs per setting (default 1)")
    p.add_argument("--average", action="store_true", help="report the mean over trials")
    p.add_argument("--method", choices=["isvta", "svt", "svp"], default="isvta")
    _common_solver_flags(p, STOP_TARGET)
    _lambda_flags(p)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--jobs", type=int, default=cpu, help=f"worker processes (default {cpu})")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("inpaint", help="recover a masked low-rank image")
    p.add_argument("--config", help="key = value file of defaults")
    p.add_argument("--image", help="8/16-bit P5 PGM or grayscale PNG")
    p.add_argument("--synthetic", help="WIDTHxHEIGHT or a preset name (bai, hai, ivi)")
    p.add_argument("--image-seed", type=int, default=0, help="seed of the synthetic image (default 0)")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--sr", type=positive_float, default=0.5, help="sampling ratio (default 0.5)")
    p.add_argument("--method", choices=["isvta", "svt", "svp"], default="isvta")
    p.add_argument("--a", type=positive_float, action="append", default=None,
                   help="fraction parameter; repeat for several (default 1)")
    p.add_argument("--seed", type=int, default=None, help="mask seed (default $FRACRANK_SEED or 0)")
    _common_solver_flags(p, STOP_TARGET)
    p.add_argument("--out-dir", default="inpaint_out", help="output directory (default inpaint_out)")
    p.add_argument("--jobs", type=int, default=cpu, help=f"worker processes (default {cpu})")
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("threshold-curve", help="sample the scalar threshold function")
    p.add_argument("--config", help="key = value file of defaults")
    p.add_argument("--a", type=positive_float, action="append", default=None,
                   help="fraction parameter; repeat (default 1,3,5,7,30,100)")
    p.add_argument("--lambda", dest="lambda_", metavar="LAMBDA", type=positive_float, default=0.25,
                   help="regularisation weight (default 0.25)")
    p.add_argument("--mu", type=positive_float, default=1.0, help="step size multiplying lambda (default 1)")
    p.add_argument("--range", type=span, default=(-2.0, 2.0), help="gamma interval LO:HI (default -2:2)")
    p.add_argument("--step", type=positive_float, default=0.01, help="grid spacing (default 0.01)")
    p.add_argument("--out", help="CSV path (default: standard output)")
    p.set_defaults(func=cmd_threshold_curve)

    p = sub.add_parser("generate", help="write a random completion instance")
    p.add_argument("--config", help="key = value file of defaults")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=None, help="rows (default: equal to --n)")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--sr", type=positive_float, default=0.4, help="sampling ratio (default 0.4)")
    p.add_argument("--seed", type=int, default=None, help="seed (default $FRACRANK_SEED or 0)")
    p.add_argument("--trial", type=int, default=0, help="trial index within the seed (default 0)")
    p.add_argument("--samples", required=True, help="output CSV of i,j,value")
    p.add_argument("--truth", help="output .npy of the full matrix")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="complete a matrix from a samples CSV")
    p.add_argument("--config", help="key = value file of defaults")
    p.add_argument("--samples", required=True, help="CSV with header i,j,value")
    p.add_argument("--shape", type=shape_arg, default=None, help="MxN (default: index bounding box)")
    p.add_argument("--rank", type=int, default=None, help="target rank for adaptive lambda")
    p.add_argument("--a", type=positive_float, default=1.0, help="fraction parameter (default 1)")
    _common_solver_flags(p, STOP_STEP)
    _lambda_flags(p)
    p.add_argument("--truth", help=".npy ground truth, enables relative error tracking")
    p.add_argument("--out", help="output .npy for the recovered matrix")
    p.add_argument("--trace", help="per-iteration CSV")
    p.set_defaults(func=cmd_solve)
    return parser


def _parse(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command:
        subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        sub = subs.choices.get(known.command)
        if sub is not None:
            _apply_config(sub, read_config(known.config))
    args = parser.parse_args(argv)
    if getattr(args, "a", "x") is None:
        args.a = [1.0, 3.0, 5.0, 7.0, 30.0, 100.0] if args.command == "threshold-curve" else [1.0]
    if getattr(args, "seed", "x") is None:
        args.seed = default_seed()
    if args.command in ("complete", "generate") and args.m is None:
        args.m = args.n
    if hasattr(args, "jobs") and args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return args


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        try:
            args = _parse(parser, argv)
        except SystemExit as exc:
            # argparse has already printed usage (or help)
            return exc.code if isinstance(exc.code, int) else EXIT_USAGE
        print(f"# {effective_config(args)}", file=sys.stderr)
        return args.func(args)
    except UsageError as exc:
        print(f"fracrank: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"fracrank: input error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"fracrank: I/O error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (FracRankError, ArithmeticError) as exc:
        print(f"fracrank: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"fracrank: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
