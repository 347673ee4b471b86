"""Command-line interface: ``python -m subfbm <command> ...``.

Exit codes: 0 success, 2 bad parameters or usage, 3 failed verification.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from ._backend import BACKEND
from .approximants import ApproximantEvaluator
from .errors import DomainError, ParameterError, VerificationError
from .kernels import KernelSpec, ModelParams, validate_kernel_bounds
from .montecarlo import rate_study, run_replicas, tail_sensitivity_study
from .oracles import calibration_report, iterated_tail_oracle, lemma_bound_suite, random_path
from .paths import make_drivers, make_rng
from .stieltjes import integrate_by_parts, integrate_dZ, z3_tail_term

EXIT_OK, EXIT_PARAM, EXIT_VERIFY = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARAM, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, grid_points: int = 4, replicas: int = 1) -> None:
    p.add_argument("--hurst", type=float, default=0.7, help="Hurst index H in (0, 1), H != 1/2")
    p.add_argument("--beta", type=float, default=0.3, help="truncation exponent, |H-1/2| < beta < 1/2")
    p.add_argument("--n", type=int, default=100, help="approximation level")
    p.add_argument("--horizon", type=float, default=1.0, help="time horizon T")
    p.add_argument("--anchor-a", type=float, default=None, help="tail anchor a < -T (default -4 max(T, 1))")
    p.add_argument("--grid-points", type=int, default=grid_points)
    p.add_argument("--replicas", type=int, default=replicas)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("transport", "grid-bm"), default="transport")
    p.add_argument("--which", choices=("W", "Y", "S"), default="S")
    p.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="subfbm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="approximant paths on a uniform grid including t = 0")
    _common(p, grid_points=256)

    p = sub.add_parser("covariance", help="empirical covariance vs the exact one")
    _common(p, replicas=1000)

    p = sub.add_parser("verify", help="deterministic identity and bound suites")
    _common(p)
    p.add_argument("--trials", type=int, default=200)

    p = sub.add_parser("calibrate", help="normalization constant per H")
    p.add_argument("--hurst", type=float, nargs="+", default=[0.3, 0.7])
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)

    p = sub.add_parser("tail-study", help="discrepancy as a function of the anchor a")
    _common(p, replicas=200)
    p.add_argument("--anchors", type=float, nargs="+", default=[-2.0, -4.0, -8.0, -16.0])

    p = sub.add_parser("rate-study", help="discrepancy and cross-level gap as n grows")
    _common(p, replicas=200)
    p.set_defaults(mode="grid-bm")
    p.add_argument("--levels", type=int, nargs="+", default=[100, 1000, 10000])
    return parser


# --------------------------------------------------------------------------


def _params(args) -> ModelParams:
    return ModelParams(H=args.hurst, beta=args.beta, T=args.horizon, a=args.anchor_a, n=args.n)


def _mode(args) -> str:
    return args.mode.replace("-", "_")


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(v if isinstance(v, str) else _fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _versions() -> dict:
    return {
        "subfbm": __version__,
        "backend": BACKEND,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _emit(args, argv, text: str, manifest: dict) -> None:
    if args.out is None:
        sys.stdout.write(text)
        return
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(text)
    manifest = {"argv": list(argv), "output": args.out.name, "versions": _versions(), **manifest}
    args.out.with_name(args.out.name + ".manifest.json").write_text(_json(manifest))


def _grid(args, include_zero: bool) -> np.ndarray:
    k = args.grid_points
    if k < 1:
        raise ParameterError("--grid-points must be >= 1")
    if include_zero:
        return np.linspace(0.0, args.horizon, k) if k > 1 else np.zeros(1)
    return args.horizon * np.arange(1, k + 1) / k


# --------------------------------------------------------------------------


def cmd_simulate(args, argv) -> int:
    params = _params(args)
    grid = _grid(args, include_zero=True)
    if args.replicas < 1:
        raise ParameterError("--replicas must be >= 1")
    paths = []
    for r in range(args.replicas):
        d = make_drivers(params.n, params.T, params.a, _mode(args), args.seed, r)
        paths.append(ApproximantEvaluator(params, d).eval_grid(grid, args.which))
    fmt = args.format or "csv"
    if fmt == "json":
        text = _json({"which": args.which, "t": grid, "paths": paths})
    elif args.replicas == 1:
        text = _csv(["t", "value"], zip(grid, paths[0]))
    else:
        text = _csv(["replica", "t", "value"],
                    ((str(r), t, v) for r, p in enumerate(paths) for t, v in zip(grid, p)))
    _emit(args, argv, text, {"command": "simulate", "params": params.to_dict(), "mode": _mode(args),
                             "which": args.which, "master_seed": args.seed, "replicas": args.replicas})
    return EXIT_OK


def cmd_covariance(args, argv) -> int:
    params = _params(args)
    rep = run_replicas(params, _grid(args, include_zero=False), args.replicas, args.seed,
                       args.which, _mode(args))
    fmt = args.format or "json"
    text = rep.to_csv() if fmt == "csv" else rep.to_json(include_runtime=False) + "\n"
    _emit(args, argv, text, {"command": "covariance", "params": params.to_dict(), "mode": _mode(args),
                             "which": args.which, "master_seed": args.seed, "replicas": args.replicas})
    return EXIT_OK


def _identity_suite(params: ModelParams, trials: int, seed: int) -> list[dict]:
    """By-parts and Fubini identities on random paths."""
    rng = make_rng(seed, 11)
    H, T, a = params.H, params.T, params.a
    ibp = {"name": "by_parts", "trials": 0, "max_abs_diff": 0.0, "tol": 1e-9}
    fub = {"name": "fubini_tail", "trials": 0, "max_abs_diff": 0.0, "tol": 1e-7}
    for _ in range(trials):
        t = T * rng.uniform(0.05, 1.0)
        P = random_path(rng, a, 0.0, 0.0)
        for kind, lo, hi in (("f", a, -t), ("F", a, -t - 0.01 * t)):
            spec = KernelSpec(kind, t, H)
            diff = abs(integrate_dZ(spec, (lo, hi), P) - integrate_by_parts(spec, (lo, hi), P))
            ibp["max_abs_diff"] = max(ibp["max_abs_diff"], diff)
        ibp["trials"] += 1
        if fub["trials"] < max(1, trials // 10):
            Z3 = random_path(rng, 1.0 / a, 0.0, 0.0, max_breaks=20)
            kind = "f" if rng.random() < 0.5 else "F"
            cut = max(params.eps_n, 1.0 / a) if H > 0.5 else 0.0
            red = z3_tail_term(kind, t, H, a, cut, Z3)
            it = iterated_tail_oracle(kind, t, H, a, cut, Z3)
            fub["max_abs_diff"] = max(fub["max_abs_diff"], abs(red + it))
            fub["trials"] += 1
    for r in (ibp, fub):
        r["passed"] = r["max_abs_diff"] <= r["tol"]
    return [ibp, fub]


def cmd_verify(args, argv) -> int:
    params = _params(args)
    if args.trials < 1:
        raise ParameterError("--trials must be >= 1")
    kb = validate_kernel_bounds(params.H, params.T, params.a, trials=args.trials * 10, seed=args.seed)
    lb = lemma_bound_suite(params.H, params.beta, params.T, params.a, args.trials, args.seed)
    ids = _identity_suite(params, args.trials, args.seed)
    report = {
        "params": params.to_dict(),
        "kernel_bounds": kb,
        "lemma_bounds": lb,
        "identities": ids,
        "violations": sum(len(c["violations"]) for c in kb["checks"] + lb["checks"]),
        "passed": bool(kb["passed"] and lb["passed"] and all(r["passed"] for r in ids)),
    }
    _emit(args, argv, _json(report), {"command": "verify", "params": params.to_dict(),
                                      "master_seed": args.seed, "trials": args.trials})
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_calibrate(args, argv) -> int:
    rows = [calibration_report(H, args.tol).to_dict() for H in args.hurst]
    if (args.format or "json") == "csv":
        keys = ["H", "C", "fbm_constant", "var_S1", "var_S1_target", "discrepancy"]
        text = _csv(keys, ([r[k] for k in keys] for r in rows))
    else:
        text = _json(rows)
    _emit(args, argv, text, {"command": "calibrate", "hurst": args.hurst, "tol": args.tol})
    return EXIT_OK


def cmd_tail_study(args, argv) -> int:
    params = _params(args)
    res = tail_sensitivity_study(params, args.anchors, _grid(args, include_zero=False),
                                 args.replicas, args.seed, _mode(args))
    for row in res["rows"]:
        row.pop("runtime_s")
    _emit(args, argv, _table(args, res, ["a", "max_z", "max_rel"]),
          {"command": "tail-study", "params": params.to_dict(), "mode": _mode(args),
           "master_seed": args.seed, "replicas": args.replicas})
    return EXIT_OK


def cmd_rate_study(args, argv) -> int:
    params = _params(args)
    res = rate_study(params, args.levels, _grid(args, include_zero=False), args.replicas,
                     args.seed, _mode(args))
    _emit(args, argv, _table(args, res, ["n", "eps_n", "alpha_n", "max_z", "max_rel", "gap_to_next"]),
          {"command": "rate-study", "params": params.to_dict(), "mode": _mode(args),
           "master_seed": args.seed, "replicas": args.replicas})
    return EXIT_OK


def _table(args, res: dict, keys) -> str:
    if (args.format or "json") == "csv":
        return _csv(keys, ([r[k] for k in keys] for r in res["rows"]))
    return _json(res)


COMMANDS = {
    "simulate": cmd_simulate,
    "covariance": cmd_covariance,
    "verify": cmd_verify,
    "calibrate": cmd_calibrate,
    "tail-study": cmd_tail_study,
    "rate-study": cmd_rate_study,
}


def run_cli(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, argv)
    except (ParameterError, DomainError) as exc:
        print(f"subfbm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except VerificationError as exc:
        print(f"subfbm {args.command}: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


def main() -> None:
    sys.exit(run_cli())
