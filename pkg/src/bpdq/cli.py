"""Command-line entry point: ``bpdq <subcommand> ...``.

Exit codes: 0 on success, 2 for an invalid configuration or arguments, 3 when
decoding fails (or, for sweeps, when more trials fail than the configured
budget allows).
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments, sensing, solver, theory
from .errors import ConvergenceError, GenerationError, NumericalError
from .quantize import DEFAULT_KAPPA, epsilon_2_variance, epsilon_p, zeta_p

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3


class ConfigError(ValueError):
    pass


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, float) and not math.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    return o


def _dump(obj, path=None):
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _load_json_arg(text):
    """Inline JSON or a path to a JSON file."""
    path = Path(text)
    if not text.lstrip().startswith("{") and path.exists():
        text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc


def _spec_from_args(args, kind):
    d = {}
    if args.config:
        d = _load_json_arg(args.config)
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
    d["kind"] = kind
    for key in ("trials", "seed", "workers"):
        if getattr(args, key) is not None:
            d[key] = getattr(args, key)
    if args.p_list:
        d["p_list"] = _floats(args.p_list)
    if kind == "1d" and args.m_over_k:
        d["m_over_K"] = _floats(args.m_over_k)
    if kind == "tv" and args.side is not None:
        d["side"] = args.side
    return experiments.ExperimentSpec.from_dict(d)


def _write_sweep(result, out, prefix, raw):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{prefix}_cells.csv").write_text(result.cells_csv())
    (out / f"{prefix}_histograms.csv").write_text(result.histograms_csv())
    if raw:
        (out / f"{prefix}_trials.csv").write_text(result.trials_csv())
    _dump(result.manifest(), out / f"{prefix}_manifest.json")


def _run_sweep(args, kind):
    spec = _spec_from_args(args, kind)
    run = experiments.run_experiment_1d if kind == "1d" else experiments.run_experiment_tv
    result = run(spec)
    _write_sweep(result, args.out, "exp1d" if kind == "1d" else "exptv", args.raw)
    sys.stdout.write(result.cells_csv())
    if result.failure_fraction() > spec.failure_budget:
        print(f"error: {result.failed} of {len(result.trials)} decodes failed "
              f"(budget {spec.failure_budget:g})", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_exp1d(args):
    return _run_sweep(args, "1d")


def cmd_exptv(args):
    return _run_sweep(args, "tv")


def cmd_decode(args):
    op = sensing.operator_from_json(_load_json_arg(args.matrix_spec))
    y = np.loadtxt(args.measurements, delimiter=",", ndmin=1).ravel()
    if y.size != op.m:
        raise ConfigError(f"{y.size} measurements for an operator with m={op.m}")
    if args.epsilon is not None:
        eps = args.epsilon
    else:
        if args.alpha is None:
            raise ConfigError("--auto-epsilon needs --alpha")
        eps = epsilon_p(args.p, op.m, args.alpha, args.auto_epsilon).epsilon
    cfg = solver.DecoderConfig(p=args.p, epsilon=eps, gamma=args.gamma,
                               outer_iters=args.iters, regularizer=args.regularizer,
                               early_exit_tol=args.early_exit, inner_tol=args.inner_tol,
                               inner_cap=args.inner_cap)
    res = solver.decode(op, y, cfg)
    summary = res.summary()
    summary["config"] = cfg.to_dict()
    _dump(summary, args.out_json)
    np.savetxt(args.out_csv, res.x_hat, fmt=experiments.FLOAT_FMT)
    return EXIT_OK


def cmd_noise_bound(args):
    nb = epsilon_p(args.p, args.m, args.alpha, args.kappa)
    out = {"epsilon_p": nb.to_dict()}
    if not math.isinf(args.p):
        out["zeta_p"] = zeta_p(args.p, args.m, args.alpha)
    out["epsilon_2_variance"] = epsilon_2_variance(args.m, args.alpha, args.kappa)
    if args.p >= 2 and not math.isinf(args.p):
        try:
            out["noise_error_bound"] = theory.noise_error_bound_check(
                args.p, args.m, args.alpha, args.kappa).to_dict()
        except ValueError as exc:
            out["noise_error_bound"] = {"skipped": str(exc)}
    _dump(out)
    return EXIT_OK


def cmd_constants(args):
    out = {"p": args.p}
    if args.p >= 2 and not math.isinf(args.p):
        out["nu_p"] = theory.nu_p(args.p)
        if args.m:
            lo, hi = theory.mu_p2_bounds(args.p, args.m)
            out["mu_p2_bounds"] = {"lower": lo, "upper": hi}
    if args.deltas:
        d = _floats(args.deltas)
        if len(d) != 3:
            raise ConfigError("--deltas needs delta_K,delta_2K,delta_3K")
        profile = theory.RipProfile.assumed(args.K, *d, p=args.p)
        out["theorem2"] = theory.theorem2_constants(args.p, profile).to_dict()
        if 0 < d[1] < math.sqrt(2) - 1:
            A, B = theory.theorem1_constants(d[1])
            out["theorem1"] = {"A": A, "B": B}
    if args.delta is not None:
        m = theory.theta_bound(args.p, args.K, args.N, args.delta, args.eta, args.c)
        out["theta_bound"] = {"m": m if math.isfinite(m) else "astronomically large",
                              "c": args.c,
                              "note": "up to an unspecified absolute constant c"}
    _dump(out)
    return EXIT_OK


def cmd_rip_probe(args):
    op = sensing.operator_from_json(_load_json_arg(args.matrix_spec))
    if args.profile:
        out = theory.estimate_rip_profile(op, args.K, args.p, args.trials, args.seed).to_dict()
    else:
        out = theory.estimate_rip_radius(op, args.K, args.p, args.trials, args.seed).to_dict()
    _dump(out)
    return EXIT_OK


def cmd_gen(args):
    if args.what == "signal":
        data = experiments.gen_sparse_signal(args.N, args.K, args.seed)
    elif args.what == "angiogram":
        data = experiments.gen_angiogram(args.side, args.n_ellipses, args.seed, args.intensity)
    else:
        op = sensing.make_sgr(args.m, args.N, args.seed)
        if args.spec_only:
            print(sensing.operator_to_json(op))
            return EXIT_OK
        data = op.matrix
    out = args.out if args.out else sys.stdout
    np.savetxt(out, np.atleast_2d(data) if data.ndim == 2 else data,
               fmt=experiments.FLOAT_FMT, delimiter=",")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="bpdq", description="Dequantizing decoders for "
                                 "compressed sensing and their experiment harness.")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, kind in (("exp1d", "1d"), ("exptv", "tv")):
        sp = sub.add_parser(name, help=f"run the {kind} experiment sweep")
        sp.add_argument("--config", help="JSON file (or inline JSON) with ExperimentSpec fields")
        sp.add_argument("--trials", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--p-list", help="comma-separated moments")
        if kind == "1d":
            sp.add_argument("--m-over-k", help="comma-separated oversampling factors")
        else:
            sp.add_argument("--side", type=int)
        sp.add_argument("--out", default="results", help="output directory")
        sp.add_argument("--raw", action="store_true", help="also write per-trial CSV")
        sp.set_defaults(func=cmd_exp1d if kind == "1d" else cmd_exptv)

    sp = sub.add_parser("decode", help="decode quantized measurements")
    sp.add_argument("--matrix-spec", required=True, help="operator JSON (file or inline)")
    sp.add_argument("--measurements", required=True, help="CSV of measurements")
    sp.add_argument("--p", type=float, default=2.0)
    eps = sp.add_mutually_exclusive_group(required=True)
    eps.add_argument("--epsilon", type=float)
    eps.add_argument("--auto-epsilon", type=float, metavar="KAPPA",
                     help="radius from the uniform-noise bound with this kappa")
    sp.add_argument("--alpha", type=float, help="bin width (for --auto-epsilon)")
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--iters", type=int, default=500)
    sp.add_argument("--early-exit", type=float, default=None)
    sp.add_argument("--inner-tol", type=float, default=1e-6)
    sp.add_argument("--inner-cap", type=int, default=700)
    sp.add_argument("--regularizer", choices=solver.REGULARIZERS, default="l1")
    sp.add_argument("--out-json", default=None, help="result JSON (default: stdout)")
    sp.add_argument("--out-csv", default="x_hat.csv")
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("noise-bound", help="fidelity radii for uniform quantization noise")
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--kappa", type=float, default=DEFAULT_KAPPA)
    sp.set_defaults(func=cmd_noise_bound)

    sp = sub.add_parser("constants", help="RIP-based recovery constants")
    sp.add_argument("--p", type=float, default=2.0)
    sp.add_argument("--K", type=int, default=1)
    sp.add_argument("--N", type=int, default=1024)
    sp.add_argument("--m", type=int)
    sp.add_argument("--deltas", help="delta_K,delta_2K,delta_3K")
    sp.add_argument("--delta", type=float, help="RIP radius for the measurement bound")
    sp.add_argument("--eta", type=float, default=0.5)
    sp.add_argument("--c", type=float, default=1.0)
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("rip-probe", help="Monte-Carlo RIP radius of an operator")
    sp.add_argument("--matrix-spec", required=True)
    sp.add_argument("--K", type=int, required=True)
    sp.add_argument("--p", type=float, default=2.0)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--profile", action="store_true", help="orders K, 2K and 3K")
    sp.set_defaults(func=cmd_rip_probe)

    sp = sub.add_parser("gen", help="generate signals, angiograms or matrices as CSV")
    sp.add_argument("what", choices=("signal", "angiogram", "matrix"))
    sp.add_argument("--N", type=int, default=1024)
    sp.add_argument("--K", type=int, default=16)
    sp.add_argument("--m", type=int, default=640)
    sp.add_argument("--side", type=int, default=64)
    sp.add_argument("--n-ellipses", type=int, default=10)
    sp.add_argument("--intensity", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--spec-only", action="store_true",
                    help="for matrices, print the operator JSON instead of entries")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen)
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConvergenceError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValueError, GenerationError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
