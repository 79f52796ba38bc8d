"""Command line experiment harness.

Subcommands
-----------
solve
    Run the selected methods on one benchmark and write one CSV per method,
    ``summary.json`` and (unless ``--no-plot``) convergence figures.
oracle
    Write the direct solution ``X.mtx`` and its singular value profile.
verify
    Run the property suite and print a pass/fail table.
bench-export
    Write a benchmark system as MatrixMarket files plus a manifest.

Exit codes: 0 ok, 1 usage error, 2 solver failure, 3 property failure.
"""

import argparse
import dataclasses
import json
import math
import re
import sys as _sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .als import AlsConfig, als_greedy
from .benchmarks import parse_benchmark, spec_to_string
from .birka import BirkaConfig, birka
from .config import DEFAULT, Tolerances
from .core import IllPosedError, check_contraction, direct_solve, residual
from .fixed_point import FixedPointConfig, fixed_point_solve
from .galerkin import SubspaceBasis, galerkin_solve, residual_norm, svd_baseline_errors
from .report import IterRecord, SolveReport, Stopwatch, relative_error
from .rk import birka_shifts, rk_solve, variant

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_PROPERTY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad input; usage errors here are 1
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- methods


@dataclass(frozen=True)
class MethodSpec:
    """One entry of the method list.

    ``kind`` is ``ALS``, ``BIRKA``, ``FixedPoint`` or ``RK``; ``label`` is the
    RK variant letter and ``ks`` the BIRKA reduced dimensions.
    """

    kind: str
    label: str = ""
    ks: tuple = ()

    @property
    def name(self):
        if self.kind == "RK":
            return f"RK-{self.label}"
        if self.kind == "BIRKA":
            return f"BIRKA-{self.ks[0]}-{self.ks[-1]}" if len(self.ks) > 1 else f"BIRKA-{self.ks[0]}"
        return self.kind


def parse_method(text):
    """Parse ``ALS``, ``FixedPoint``, ``RK-A`` .. ``RK-F``, ``BIRKA:k`` or ``BIRKA:k1-k2``."""
    t = text.strip()
    low = t.lower()
    if low == "als":
        return MethodSpec("ALS")
    if low in ("fixedpoint", "fixed-point", "fixed_point", "fp"):
        return MethodSpec("FixedPoint")
    m = re.fullmatch(r"rk-?([a-f])", low)
    if m:
        return MethodSpec("RK", label=m.group(1).upper())
    m = re.fullmatch(r"birka(?::(\d+)(?:-(\d+))?)?", low)
    if m:
        lo = int(m.group(1) or 1)
        hi = int(m.group(2) or lo)
        if lo < 1 or hi < lo:
            raise ValueError(f"bad BIRKA range in {text!r}")
        return MethodSpec("BIRKA", ks=tuple(range(lo, hi + 1)))
    raise ValueError(f"unknown method {text!r}")


def parse_methods(value):
    items = value if isinstance(value, (list, tuple)) else str(value).split(",")
    return [parse_method(s) for s in items if str(s).strip()]


# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    """Settings of a ``solve`` run. Every field has a matching flag.

    ``oracle`` is ``"auto"`` (solve directly when n fits under the cap),
    ``True`` (required; failing to solve is an error) or ``False``.
    """

    benchmark: str = "heat2d:nx=8"
    methods: list = field(default_factory=list)
    oracle: object = "auto"
    out: str = "genlyap-out"
    seed: int = 0
    stop_tol: float = 1e-8
    max_dim: int = 40
    max_iters: int = 200
    oracle_cap: int = DEFAULT.oracle_cap
    tolerances: dict = field(default_factory=dict)
    timing: bool = True
    plot: bool = True

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def tol(self):
        tol_fields = {f.name for f in dataclasses.fields(Tolerances)}
        bad = set(self.tolerances) - tol_fields
        if bad:
            raise ValueError(f"unknown tolerance names: {sorted(bad)}")
        return DEFAULT.with_(oracle_cap=self.oracle_cap, **self.tolerances)

    def validate(self):
        specs = parse_methods(self.methods)
        if not specs:
            raise ValueError("no methods selected")
        if self.oracle not in ("auto", True, False):
            raise ValueError("oracle must be auto, true or false")
        if self.max_dim < 1 or self.max_iters < 1 or not self.stop_tol > 0:
            raise ValueError("max_dim, max_iters and stop_tol must be positive")
        parse_benchmark(self.benchmark)
        self.tol()
        return specs

    def echo(self):
        d = dataclasses.asdict(self)
        items = self.methods if isinstance(self.methods, (list, tuple)) else str(self.methods).split(",")
        d["methods"] = [str(m).strip() for m in items if str(m).strip()]
        return d


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    if low == "auto":
        return "auto"
    raise argparse.ArgumentTypeError(f"expected true/false/auto, got {text!r}")


def _parse_tol(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        num = int(value)
    except ValueError:
        num = float(value)
    return key.strip(), num


def _experiment_from_args(args):
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
    try:
        cfg = ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    overrides = {
        "benchmark": args.benchmark,
        "methods": args.method,
        "oracle": args.oracle,
        "out": args.out,
        "seed": args.seed,
        "stop_tol": args.stop_tol,
        "max_dim": args.max_dim,
        "max_iters": args.max_iters,
        "oracle_cap": args.oracle_cap,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.tol:
        cfg.tolerances = {**cfg.tolerances, **dict(args.tol)}
    if args.no_timing:
        cfg.timing = False
    if args.no_plot:
        cfg.plot = False
    return cfg


# ---------------------------------------------------------------- running


def _run_birka(system, ks, cfg, X_ref):
    report = SolveReport("BIRKA", info={"ks": f"{ks[0]}-{ks[-1]}"})
    clock = Stopwatch()
    nb = float(np.linalg.norm(system.B.T @ system.B))
    skipped = []
    for k in ks:
        if k > system.n:
            skipped.append(k)
            continue
        try:
            res = birka(system, cfg=BirkaConfig(k=k, seed=cfg.seed))
        except IllPosedError:
            skipped.append(k)
            continue
        if not res.converged:
            skipped.append(k)
            continue
        sol = galerkin_solve(system, SubspaceBasis(res.V))
        rel = residual_norm(system, sol) / nb if nb > 0 else 0.0
        err = relative_error(X_ref, sol.approximation()) if X_ref is not None else float("nan")
        report.add(IterRecord(k, rel, err, kept=k, millis=clock.millis()))
    report.status = "converged" if not skipped else ("failed" if not report.records else "partial")
    if skipped:
        report.info["skipped_ks"] = " ".join(map(str, skipped))
    return report


def run_method(spec, system, cfg, X_ref=None, f_shifts=None):
    """Run one method and return its :class:`SolveReport`."""
    if spec.kind == "ALS":
        als_cfg = AlsConfig(max_outer_ranks=cfg.max_dim, stop_tol=cfg.stop_tol, seed=cfg.seed)
        return als_greedy(system, als_cfg, X_ref=X_ref).report
    if spec.kind == "FixedPoint":
        fp_cfg = FixedPointConfig(max_iters=cfg.max_iters, stop_tol=cfg.stop_tol)
        return fixed_point_solve(system, fp_cfg, X_ref=X_ref).report
    if spec.kind == "BIRKA":
        return _run_birka(system, spec.ks, cfg, X_ref)
    shifts = None
    if spec.label == "F":
        shifts = f_shifts if f_shifts is not None else birka_shifts(system, k=10, seed=cfg.seed)[0]
    res = rk_solve(system, variant(spec.label, shifts), stop_tol=cfg.stop_tol, max_dim=cfg.max_dim, X_ref=X_ref)
    return res.report


def _clean(value):
    """JSON-safe copy: nan/inf become null, numpy scalars become Python numbers."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def _write_json(path, data):
    Path(path).write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def cmd_solve(cfg, stream=None):
    stream = stream or _sys.stdout
    try:
        specs = cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    tol = cfg.tol()
    bench = parse_benchmark(cfg.benchmark)
    system = dataclasses.replace(bench.build(), tol=tol)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = False
    summary = {"settings": cfg.echo(), "benchmark": spec_to_string(bench), "n": system.n, "m": system.m}

    try:
        summary["contraction"] = check_contraction(system, tol, seed=cfg.seed)
    except Exception as exc:
        summary["contraction"] = None
        summary["contraction_error"] = f"{type(exc).__name__}: {exc}"

    X_ref = None
    want = cfg.oracle is True or (cfg.oracle == "auto" and system.n <= tol.oracle_cap)
    if want:
        try:
            X_ref = direct_solve(system, tol)
            summary["oracle_rel_residual"] = float(np.linalg.norm(residual(system, X_ref)) / np.linalg.norm(system.BBt))
        except Exception as exc:
            summary["oracle_error"] = f"{type(exc).__name__}: {exc}"
            print(f"oracle: {summary['oracle_error']}", file=stream)
            failed = True

    reports, method_rows = [], []
    max_rank = 0
    for spec in specs:
        clock = Stopwatch()
        row = {"name": spec.name}
        try:
            report = run_method(spec, system, cfg, X_ref)
        except Exception as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
            print(f"{spec.name}: failed ({row['error']})", file=stream)
            failed = True
            method_rows.append(row)
            continue
        csv_name = f"{spec.name}.csv"
        report.to_csv(out / csv_name, timing=cfg.timing)
        row.update(report.summary(), csv=csv_name)
        if cfg.timing:
            row["seconds"] = clock.millis() / 1e3
        if spec.kind != "FixedPoint":
            max_rank = max(max_rank, max(report.dims, default=0))
        reports.append(report)
        method_rows.append(row)
        print(f"{spec.name}: {report.status}, {len(report.records)} records, "
              f"final relative residual {report.final_rel_residual:.3e}", file=stream)
    summary["methods"] = method_rows

    svd = None
    if X_ref is not None:
        ks = list(range(0, min(max(max_rank, 1), system.n) + 1))
        svd = (ks, svd_baseline_errors(X_ref, ks))
        with open(out / "svd_baseline.csv", "w") as fh:
            fh.write("rank,svd_rel_error\n")
            fh.writelines(f"{k},{float(e)!r}\n" for k, e in zip(*svd))
    if cfg.plot and reports:
        from .plots import plot_convergence

        figs = plot_convergence(reports, out, svd, title=spec_to_string(bench))
        summary["figures"] = [p.name for p in figs]
    _write_json(out / "summary.json", summary)
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_oracle(args, stream=None):
    from .io import read_matrix, write_matrix

    stream = stream or _sys.stdout
    try:
        bench = parse_benchmark(args.benchmark or "heat2d:nx=8")
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    cap = args.oracle_cap if args.oracle_cap is not None else DEFAULT.oracle_cap
    tol = DEFAULT.with_(oracle_cap=cap)
    system = dataclasses.replace(bench.build(), tol=tol)
    out = Path(args.out or "genlyap-oracle")
    out.mkdir(parents=True, exist_ok=True)
    try:
        X = direct_solve(system, tol)
    except Exception as exc:
        print(f"oracle failed: {type(exc).__name__}: {exc}", file=stream)
        return EXIT_SOLVER
    write_matrix(out / "X.mtx", X, comment=spec_to_string(bench))
    X_back = read_matrix(out / "X.mtx")
    rel = float(np.linalg.norm(residual(system, X_back)) / np.linalg.norm(system.BBt))
    s = np.linalg.svd(X_back, compute_uv=False)
    errs = svd_baseline_errors(X_back, range(len(s) + 1))
    with open(out / "singular_values.csv", "w") as fh:
        fh.write("index,sigma,svd_rel_error\n")
        # svd_rel_error at index i is the best error with the first i values kept
        fh.writelines(f"{i},{float(sig)!r},{float(errs[i])!r}\n" for i, sig in enumerate(s, start=1))
    _write_json(out / "oracle.json", {"benchmark": spec_to_string(bench), "n": system.n, "rel_residual": rel})
    if not args.no_plot:
        from .plots import plot_singular_values

        plot_singular_values(s, out / "singular_values.png")
    print(f"n={system.n} relative residual of written X: {rel:.3e}", file=stream)
    return EXIT_OK if rel <= tol.residual else EXIT_SOLVER


def cmd_verify(args, stream=None):
    from .verify import PROPERTIES, format_table, run_suite

    stream = stream or _sys.stdout
    keys = args.property or None
    if keys:
        unknown = [k for k in keys if k not in PROPERTIES]
        if unknown:
            raise UsageError(f"unknown properties {unknown}; choose from {sorted(PROPERTIES)}")
    seed0 = args.seed or 0
    timing = not args.no_timing
    pass_sets = []
    all_ok = True
    for seed in range(seed0, seed0 + args.seeds):
        results = run_suite(seed, keys)
        print(f"seed {seed}", file=stream)
        print(format_table(results, timing), file=stream)
        pass_sets.append(frozenset(r.key for r in results if r.passed))
        all_ok &= all(r.passed for r in results)
    if args.seeds > 1:
        same = len(set(pass_sets)) == 1
        print(f"pass set identical across {args.seeds} seeds: {'yes' if same else 'no'}", file=stream)
        all_ok &= same
    return EXIT_OK if all_ok else EXIT_PROPERTY


def cmd_bench_export(args, stream=None):
    from .io import write_system

    stream = stream or _sys.stdout
    if not args.benchmark:
        raise UsageError("bench-export needs --benchmark")
    try:
        bench = parse_benchmark(args.benchmark)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    system = bench.build()
    out = Path(args.out or "genlyap-system")
    path = write_system(system, out, header=spec_to_string(bench))
    print(f"wrote n={system.n} system to {path}", file=stream)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser():
    parser = _Parser(prog="genlyap", description="Generalized Lyapunov solvers and experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--benchmark", help="NAME:key=value,... e.g. heat2d:nx=8")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--oracle-cap", type=int, help="largest n the direct solver accepts")

    p = sub.add_parser("solve", help="run methods on a benchmark")
    common(p)
    p.add_argument("--config", help="JSON file with experiment settings")
    p.add_argument("--method", help="comma separated, e.g. ALS,BIRKA:1-10,FixedPoint,RK-A")
    p.add_argument("--oracle", type=_parse_bool, help="true, false or auto")
    p.add_argument("--stop-tol", type=float)
    p.add_argument("--max-dim", type=int)
    p.add_argument("--max-iters", type=int, help="fixed-point iteration limit")
    p.add_argument("--tol", type=_parse_tol, action="append", metavar="NAME=VALUE",
                   help="override one of the numerical tolerances (repeatable)")
    p.add_argument("--no-timing", action="store_true", help="write 0 in the millis column")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figures")

    p = sub.add_parser("oracle", help="direct solution and its singular values")
    common(p)
    p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("verify", help="run the property suite")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds to sweep")
    p.add_argument("--property", action="append", help="run only this property (repeatable)")
    p.add_argument("--no-timing", action="store_true")

    p = sub.add_parser("bench-export", help="write a benchmark as MatrixMarket files")
    common(p)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "solve":
            return cmd_solve(_experiment_from_args(args))
        if args.command == "oracle":
            return cmd_oracle(args)
        if args.command == "verify":
            if args.seeds < 1:
                raise UsageError("--seeds must be positive")
            return cmd_verify(args)
        return cmd_bench_export(args)
    except UsageError as exc:
        print(f"genlyap: error: {exc}", file=_sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    _sys.exit(main())
