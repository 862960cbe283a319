"""Command-line interface.

Subcommands map one-to-one onto the library workloads:

* ``surface``        closed-form risk over an (n, M) grid, CSV
* ``simulate``       synthetic method comparison, CSV
* ``eval``           repeated random-split evaluation on a dataset, CSV
* ``fit``            one dataset, every requested method's weights, JSON
* ``validate-rmt``   Monte-Carlo check of the random-matrix trace limits, JSON
* ``validate-thm1``  Monte-Carlo check of the weighted-average risk limit, JSON

Exit codes: 0 success, 1 usage error (bad flags, unreadable input),
2 numerical failure during computation.

Determinism: all science parameters are explicit flags or config entries;
the only environment control is LAMA_THREADS (worker processes for
replication loops), which never changes output bytes.  BLAS pools are
pinned to one thread for the same reason.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import datasets as ds
from . import experiments as xp
from .models import Dataset, default_model_counts, fit_all, build_nested, load_csv, order_by_cp
from .risk_theory import PowerLawProfile, risk_surface

__all__ = ["main", "run"]

_WEIGHTINGS = {"equal": "equal", "varpen": "variance_penalized", "single": "single"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the contract reserves 2 for
    # numerical failures, so route parse errors through UsageError instead.
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _parse_range(text: str) -> list[int]:
    """``a:b[:step]`` inclusive of both endpoints, or a single integer."""
    parts = text.split(":")
    if len(parts) == 1:
        return [int(parts[0])]
    if len(parts) == 2:
        a, b, step = int(parts[0]), int(parts[1]), 1
    elif len(parts) == 3:
        a, b, step = int(parts[0]), int(parts[1]), int(parts[2])
    else:
        raise ValueError(f"bad range {text!r}; expected a:b[:step]")
    if step < 1 or b < a:
        raise ValueError(f"bad range {text!r}; need a <= b and step >= 1")
    return list(range(a, b + 1, step))


def _parse_int_list(text: str) -> list[int]:
    """Comma list whose items may be single integers or a:b[:step] ranges."""
    out: list[int] = []
    for piece in text.split(","):
        out.extend(_parse_range(piece.strip()))
    return out


def _parse_float_list(text: str) -> list[float]:
    return [float(piece) for piece in text.split(",")]


def _parse_methods(text: str) -> tuple[str, ...]:
    return tuple(piece.strip().lower() for piece in text.split(",") if piece.strip())


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w"), True


def _load_dataset(args) -> Dataset:
    name = args.data
    standardize = not args.no_standardize
    if name in ds.available():
        return ds.load_builtin(name, standardize=standardize)
    path = Path(name)
    if not path.exists():
        raise UsageError(f"no such dataset: {name!r} (path or one of {ds.available()})")
    if args.response is None:
        raise UsageError("--response is required for dataset files")
    data = load_csv(path, response=args.response)
    return ds.standardize_dataset(data) if standardize else data


def _profile_from(args) -> PowerLawProfile:
    if args.r2 is not None:
        alpha = 0.5 if args.alpha is None else args.alpha
        return PowerLawProfile.from_r2(args.r2, alpha, args.p)
    snr = 1.0 if args.snr is None else args.snr
    decay = 0.6 if args.decay is None else args.decay
    return PowerLawProfile.from_snr(snr, decay, sigma2=args.sigma2, truncate=args.truncate)


# ---------------------------------------------------------------------------
# Subcommand implementations


def _cmd_surface(args) -> int:
    profile = _profile_from(args)
    surf = risk_surface(
        _parse_int_list(args.n_range),
        _parse_int_list(args.m_range),
        profile,
        sigma2=args.sigma2,
        weighting=_WEIGHTINGS[args.weights],
        exclude_singular=args.exclude_singular,
    )
    fh, close = _open_out(args.out)
    try:
        surf.to_csv(fh)
    finally:
        if close:
            fh.close()
    return 0


_SIM_DEFAULTS = {
    "n_values": (25, 50, 150, 300),
    "r2_values": (0.5,),
    "alpha": 0.5,
    "p": 1000,
    "m_values": None,
    "replications": 200,
    "seed": 0,
    "methods": ("mma", "jma", "lama", "saic", "sbic"),
    "test_size": 1000,
    "exclude_boundary": False,
    "truncate_loss": None,
}

_SIM_FLAGS = {
    "n_values": "--n",
    "r2_values": "--r2",
    "alpha": "--alpha",
    "p": "--p",
    "m_values": "--m",
    "replications": "--reps",
    "seed": "--seed",
    "methods": "--methods",
    "test_size": "--test-size",
    "exclude_boundary": "--exclude-boundary",
    "truncate_loss": "--truncate-loss",
}


def _cmd_simulate(args) -> int:
    flag_vals = {
        "n_values": None if args.n is None else tuple(_parse_int_list(args.n)),
        "r2_values": None if args.r2 is None else tuple(_parse_float_list(args.r2)),
        "alpha": args.alpha,
        "p": args.p,
        "m_values": None if args.m is None else tuple(_parse_int_list(args.m)),
        "replications": args.reps,
        "seed": args.seed,
        "methods": None if args.methods is None else _parse_methods(args.methods),
        "test_size": args.test_size,
        "exclude_boundary": True if args.exclude_boundary else None,
        "truncate_loss": args.truncate_loss,
    }
    config_vals = {}
    if args.config is not None:
        with open(args.config) as fh:
            raw = json.load(fh)
        unknown = set(raw) - set(_SIM_DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config field(s): {sorted(unknown)}")
        for key, val in raw.items():
            if key in {"n_values", "m_values", "r2_values", "methods"} and val is not None:
                val = tuple(val)
            config_vals[key] = val

    merged = dict(_SIM_DEFAULTS)
    for key, val in flag_vals.items():
        if val is not None:
            merged[key] = val
    for key, val in config_vals.items():
        if key in flag_vals and flag_vals[key] is not None and flag_vals[key] != val:
            warnings.warn(
                f"{_SIM_FLAGS[key]} conflicts with config field {key!r}; config wins",
                RuntimeWarning,
            )
        merged[key] = val

    cfg = xp.SimulationConfig(**merged)
    rows = xp.run_simulation(cfg)
    fh, close = _open_out(args.out)
    try:
        xp.simulation_csv(rows, fh)
    finally:
        if close:
            fh.close()
    return 0


def _cmd_eval(args) -> int:
    data = _load_dataset(args)
    rows = xp.evaluate_real(
        data,
        n_train=args.n_train,
        reps=args.reps,
        seed=args.seed,
        methods=_parse_methods(args.methods),
        max_models=args.max_models,
    )
    fh, close = _open_out(args.out)
    try:
        xp.real_eval_csv(rows, fh)
    finally:
        if close:
            fh.close()
    return 0


def _cmd_fit(args) -> int:
    data = _load_dataset(args)
    ordering = order_by_cp(data)
    if args.n_train is not None:
        if not 2 <= args.n_train <= data.n:
            raise UsageError(f"--n-train must be in [2, {data.n}]")
        idx = xp.rng_for(args.seed, "fit-split", 0).permutation(data.n)[: args.n_train]
        data = Dataset(Y=data.Y[idx], X=data.X[idx], has_intercept=data.has_intercept,
                       column_names=data.column_names)
    m_cap = min(data.p, int(0.9 * data.n)) if args.max_models is None else args.max_models
    if not 1 <= m_cap <= data.p:
        raise UsageError(f"--max-models must be in [1, {data.p}]")
    fits = fit_all(
        Dataset(Y=data.Y, X=data.X[:, ordering], has_intercept=data.has_intercept),
        build_nested(np.arange(data.p), np.arange(1, m_cap + 1)),
    )
    records = [xp.compute_weights(fits, method).to_record() for method in _parse_methods(args.methods)]
    fh, close = _open_out(args.out)
    try:
        json.dump(records, fh, indent=2)
        fh.write("\n")
    finally:
        if close:
            fh.close()
    return 0


def _cmd_validate_rmt(args) -> int:
    theta = None if args.theta is None else np.asarray(_parse_float_list(args.theta))
    report = xp.validate_rmt(args.n, args.c, reps=args.reps, seed=args.seed, theta=theta)
    fh, close = _open_out(args.out)
    try:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    finally:
        if close:
            fh.close()
    return 0


def _cmd_validate_thm1(args) -> int:
    sizes = _parse_int_list(args.sizes)
    profile = _profile_from(args)
    theta = profile.coefficients(max(args.p, max(sizes)))
    w = None if args.weights is None else np.asarray(_parse_float_list(args.weights))
    report = xp.validate_theorem1(
        args.n, sizes, theta, sigma2=args.sigma2, reps=args.reps, seed=args.seed,
        w=w, test_size=args.test_size,
    )
    fh, close = _open_out(args.out)
    try:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    finally:
        if close:
            fh.close()
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def _add_profile_flags(sp, include_r2: bool = True):
    sp.add_argument("--snr", type=float, default=None,
                    help="signal-to-noise ratio |theta|^2/sigma^2 (default 1)")
    sp.add_argument("--decay", type=float, default=None,
                    help="power-law exponent: theta_j proportional to j^-decay (default 0.6)")
    sp.add_argument("--truncate", type=int, default=400,
                    help="coefficients are zero beyond this index (default 400)")
    if include_r2:
        sp.add_argument("--r2", type=float, default=None,
                        help="population R-squared; selects the R2/alpha parameterization instead of snr/decay")
        sp.add_argument("--alpha", type=float, default=None,
                        help="decay parameter for the R2 parameterization (default 0.5)")
        sp.add_argument("--p", type=int, default=400,
                        help="number of regressors for the R2 parameterization (default 400)")


def build_parser() -> _Parser:
    parser = _Parser(prog="lama", description="Model averaging over nested least-squares candidates")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    sp = sub.add_parser("surface", help="closed-form risk over an (n, M) grid (CSV)")
    sp.add_argument("--n-range", required=True, help="sample sizes, a:b[:step] or comma list, inclusive")
    sp.add_argument("--m-range", required=True, help="candidate counts, a:b[:step] or comma list, inclusive")
    sp.add_argument("--weights", choices=sorted(_WEIGHTINGS), default="equal",
                    help="equal | varpen (inverse limiting variance) | single (largest model alone)")
    sp.add_argument("--sigma2", type=float, default=1.0, help="noise variance (default 1.0)")
    sp.add_argument("--exclude-singular", action="store_true",
                    help="drop the k = n candidate from each cell instead of averaging over it")
    sp.add_argument("--out", default=None, help="output CSV path (default stdout)")
    _add_profile_flags(sp)
    sp.set_defaults(func=_cmd_surface)

    sp = sub.add_parser("simulate",
                        help="synthetic method comparison (CSV)")
    sp.add_argument("--config", default=None, help="JSON config; wins over flags on conflict")
    sp.add_argument("--n", default=None, help="sample sizes, comma list (default 25,50,150,300)")
    sp.add_argument("--m", default=None, help="candidate counts, comma list (default: the three standard counts per n)")
    sp.add_argument("--r2", default=None, help="population R-squared values, comma list (default 0.5)")
    sp.add_argument("--alpha", type=float, default=None, help="coefficient decay parameter (default 0.5)")
    sp.add_argument("--p", type=int, default=None, help="number of regressors (default 1000)")
    sp.add_argument("--reps", type=int, default=None, help="replications per setting (default 200)")
    sp.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    sp.add_argument("--methods", default=None,
                    help=f"comma list from {','.join(xp.ALL_METHODS)} (default mma,jma,lama,saic,sbic)")
    sp.add_argument("--test-size", type=int, default=None, help="test draws per replication (default 1000)")
    sp.add_argument("--exclude-boundary", action="store_true", default=None,
                    help="drop the k = n candidate when the grid reaches it")
    sp.add_argument("--truncate-loss", type=float, default=None,
                    help="cap per-replication relative losses at this value (default: no cap)")
    sp.add_argument("--out", default=None, help="output CSV path (default stdout)")
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("eval",
                        help="repeated random-split evaluation on a dataset (CSV)")
    sp.add_argument("--data", required=True, help=f"CSV path or builtin name {ds.available()}")
    sp.add_argument("--response", default=None, help="response column (required for CSV paths)")
    sp.add_argument("--n-train", type=int, required=True, help="training rows per split")
    sp.add_argument("--reps", type=int, default=1000, help="number of random splits (default 1000)")
    sp.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    sp.add_argument("--methods", default="mma,jma,lama", help="comma list (default mma,jma,lama)")
    sp.add_argument("--max-models", type=int, default=None,
                    help="largest candidate size (default min(p, floor(0.9 n_train)))")
    sp.add_argument("--no-standardize", action="store_true",
                    help="skip full-sample standardization of response and regressors")
    sp.add_argument("--out", default=None, help="output CSV path (default stdout)")
    sp.set_defaults(func=_cmd_eval)

    sp = sub.add_parser("fit",
                        help="fit one dataset; emit every method's weights (JSON)")
    sp.add_argument("--data", required=True, help=f"CSV path or builtin name {ds.available()}")
    sp.add_argument("--response", default=None, help="response column (required for CSV paths)")
    sp.add_argument("--n-train", type=int, default=None,
                    help="fit on a seeded random subsample of this size (default: all rows)")
    sp.add_argument("--seed", type=int, default=0, help="base seed for the subsample (default 0)")
    sp.add_argument("--methods", default="mma,jma,lama", help="comma list (default mma,jma,lama)")
    sp.add_argument("--max-models", type=int, default=None,
                    help="largest candidate size (default min(p, floor(0.9 n)))")
    sp.add_argument("--no-standardize", action="store_true",
                    help="skip full-sample standardization of response and regressors")
    sp.add_argument("--out", default=None, help="output JSON path (default stdout)")
    sp.set_defaults(func=_cmd_fit)

    sp = sub.add_parser("validate-rmt",
                        help="Monte-Carlo check of the trace limits (JSON)")
    sp.add_argument("--n", type=int, required=True, help="sample size")
    sp.add_argument("--c", type=float, required=True, help="aspect ratio k/n, away from 1")
    sp.add_argument("--reps", type=int, default=20, help="replications (default 20)")
    sp.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    sp.add_argument("--theta", default=None,
                    help="signal vector for the quadratic form, comma list (default: first basis vector)")
    sp.add_argument("--out", default=None, help="output JSON path (default stdout)")
    sp.set_defaults(func=_cmd_validate_rmt)

    sp = sub.add_parser("validate-thm1",
                        help="Monte-Carlo check of the weighted-average risk limit (JSON)")
    sp.add_argument("--n", type=int, required=True, help="sample size")
    sp.add_argument("--sizes", required=True, help="candidate sizes, comma list or a:b[:step]")
    sp.add_argument("--sigma2", type=float, default=1.0, help="noise variance (default 1.0)")
    sp.add_argument("--reps", type=int, default=100, help="replications (default 100)")
    sp.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    sp.add_argument("--test-size", type=int, default=1000, help="test draws per replication (default 1000)")
    sp.add_argument("--weights", default=None, help="weight vector, comma list (default equal)")
    sp.add_argument("--out", default=None, help="output JSON path (default stdout)")
    _add_profile_flags(sp)
    sp.set_defaults(func=_cmd_validate_thm1)

    return parser


def run(argv=None) -> int:
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=1)
    except Exception:
        pass
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_usage(sys.stderr)
            return 1
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
