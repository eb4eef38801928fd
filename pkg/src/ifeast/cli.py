"""Command-line interface: ``ifeast {solve,analyze,filter-plot,equivalence,intervals}``.

Every flag may also be set through an environment variable named
``IFEAST_<FLAG>`` (upper case, dashes as underscores, e.g. ``IFEAST_M0``,
``IFEAST_MAX_OUTER``). Command-line flags take precedence.

Exit codes: 0 success or convergence, 1 runtime error, 2 ``max_outer``
reached without convergence, 64 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .analysis import bracket_interval, fom_equivalence_check, verify_bound
from .contour import build_trapezoid, filter_value
from .feast import SOLVERS, IFEASTConfig, ifeast_solve
from .linalg import HermitianOperator, dense_eig
from .mmio import read_matrix_market

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_OUTER = 2
EXIT_USAGE = 64

SCHEMA_VERSION = "ifeast-manifest/1"
ENV_PREFIX = "IFEAST_"

log = logging.getLogger("ifeast")


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    matrix: str
    emin: float
    emax: float
    config: IFEASTConfig
    out_dir: str = "."
    result_file: str = "result.json"
    trace_file: str = "trace.csv"
    schema: str = SCHEMA_VERSION
    rule: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.emin < self.emax:
            raise ValueError(f"empty interval: emin={self.emin} >= emax={self.emax}")
        if not self.rule:
            self.rule = {
                "kind": "trapezoid",
                "nc_up": self.config.nc_up,
                "center": 0.5 * (self.emin + self.emax),
                "radius": 0.5 * (self.emax - self.emin),
            }

    @property
    def result_path(self):
        return Path(self.out_dir) / self.result_file

    @property
    def trace_path(self):
        return Path(self.out_dir) / self.trace_file

    def to_dict(self):
        d = asdict(self)
        d["config"] = self.config.to_dict()
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        schema = d.get("schema", SCHEMA_VERSION)
        if schema != SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema {schema!r}")
        d["config"] = IFEASTConfig.from_dict(d["config"])
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def load_operator(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"matrix file not found: {path}")
    return read_matrix_market(path)


def run_solve(manifest):
    """Run one solve and write ``result.json`` and ``trace.csv``; returns an exit code."""
    try:
        op = load_operator(manifest.matrix)
    except FileNotFoundError as exc:
        print(f"ifeast [io-cli]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"ifeast [mmio]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            result = ifeast_solve(op, manifest.emin, manifest.emax, manifest.config)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"ifeast [feast-driver]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = result.to_dict(config=manifest.config)
    payload["manifest"] = manifest.to_dict()
    manifest.result_path.write_text(json.dumps(payload, indent=2) + "\n")
    with open(manifest.trace_path, "w", newline="") as fh:
        fh.write(result.log.to_csv())
    (out / "manifest.json").write_text(manifest.to_json() + "\n")
    if result.converged:
        return EXIT_OK
    print(f"ifeast [feast-driver]: not converged after {result.iterations} outer iterations",
          file=sys.stderr)
    return EXIT_MAX_OUTER


# --- argument handling ---


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _env_default(name, cast, default):
    key = ENV_PREFIX + name.upper().replace("-", "_")
    raw = os.environ.get(key)
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError:
        raise UsageError(f"environment variable {key}={raw!r} is not a valid {cast.__name__}") from None


def _add(p, flag, cast, default=None, **kw):
    name = flag.lstrip("-")
    p.add_argument(flag, type=cast, default=_env_default(name, cast, default), **kw)


def _interval_args(p):
    _add(p, "--matrix", str, help="Matrix Market file (coordinate, symmetric/hermitian)")
    _add(p, "--emin", float, help="lower end of the search interval")
    _add(p, "--emax", float, help="upper end of the search interval")


def _solver_args(p):
    _add(p, "--m0", int, help="subspace size")
    _add(p, "--nc", int, 4, help="number of quadrature nodes in the upper half plane")
    _add(p, "--alpha", float, 0.1, help="inner tolerance factor, 0 < alpha < 1")
    _add(p, "--tol", float, 1e-10, help="outer residual tolerance")
    _add(p, "--max-outer", int, 50)
    _add(p, "--solver", str, "minres", choices=SOLVERS)
    _add(p, "--seed", int, 0)
    _add(p, "--max-inner", int, None, help="inner iteration cap (default 10 n)")
    _add(p, "--threads", int, 1, help="worker threads for shifted solves; 0 = all cores")


def build_parser():
    parser = _Parser(prog="ifeast", description="Contour-filtered subspace iteration with inexact solves.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("solve", help="compute eigenpairs in an interval")
    _interval_args(p)
    _solver_args(p)
    _add(p, "--out-dir", str, ".")
    _add(p, "--manifest", str, help="run from a manifest JSON (other flags ignored)")

    p = sub.add_parser("analyze", help="check the inexact convergence bound (small matrices)")
    _interval_args(p)
    _solver_args(p)
    _add(p, "--iters", int, 5)
    _add(p, "--out-dir", str, ".")
    _add(p, "--format", str, "csv", choices=("csv", "json"))

    p = sub.add_parser("filter-plot", help="sample the rational filter on the real axis")
    _add(p, "--emin", float)
    _add(p, "--emax", float)
    _add(p, "--nc", int, 4)
    _add(p, "--points", int, 1000)
    _add(p, "--out", str, help="CSV path (default stdout)")
    _add(p, "--nodes-out", str, help="optional CSV of quadrature nodes and weights")

    p = sub.add_parser("equivalence", help="compare block FOM filtering with V rho(H) V^H X0")
    _add(p, "--matrix", str, help="Matrix Market file; default is a random symmetric matrix")
    _add(p, "--n", int, 200)
    _add(p, "--m0", int, 6)
    _add(p, "--k", int, 10)
    _add(p, "--nc", int, 8)
    _add(p, "--emin", float)
    _add(p, "--emax", float)
    _add(p, "--seed", int, 0)

    p = sub.add_parser("intervals", help="bracket eigenvalue ranges with the dense oracle")
    _add(p, "--matrix", str)
    _add(p, "--first", int, 0, help="0-based index of the lowest wanted eigenvalue")
    _add(p, "--count", int, 20)
    _add(p, "--margin", float, 0.1)
    return parser


def _require(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m for m in missing))


def _config_from_args(args):
    try:
        return IFEASTConfig(
            m0=args.m0,
            alpha=args.alpha,
            tol_outer=args.tol,
            max_outer=args.max_outer,
            nc_up=args.nc,
            solver=args.solver,
            seed=args.seed,
            max_inner=args.max_inner,
            threads=args.threads,
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _cmd_solve(args):
    if args.manifest:
        try:
            manifest = RunManifest.from_json(Path(args.manifest).read_text())
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad manifest: {exc}") from None
    else:
        _require(args, "matrix", "emin", "emax", "m0")
        try:
            manifest = RunManifest(args.matrix, args.emin, args.emax, _config_from_args(args), args.out_dir)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return run_solve(manifest)


def _cmd_analyze(args):
    _require(args, "matrix", "emin", "emax", "m0")
    cfg = _config_from_args(args)
    if not args.emin < args.emax:
        raise UsageError("emin must be smaller than emax")
    op = load_operator(args.matrix)
    reports = verify_bound(op, args.emin, args.emax, cfg, args.iters)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [r.to_dict() for r in reports]
    if args.format == "json":
        (out / "bound.json").write_text(json.dumps(rows, indent=2) + "\n")
    else:
        buf = io.StringIO()
        names = list(rows[0]) if rows else ["iteration", "j"]
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        (out / "bound.csv").write_text(buf.getvalue())
    violations = [r for r in reports if r.condition and not r.holds]
    print(f"{len(reports)} tracked pairs, {sum(r.condition for r in reports)} with condition, "
          f"{len(violations)} violations")
    return EXIT_OK if not violations else EXIT_ERROR


def filter_table(emin, emax, nc_up, points=1000):
    """Rows ``(lam, Re rho, Im rho)`` on a grid spanning three interval widths."""
    rule = build_trapezoid(emin, emax, nc_up)
    width = emax - emin
    grid = np.linspace(emin - width, emax + width, points)
    rho = np.asarray(filter_value(rule, grid))
    return rule, grid, rho


def _cmd_filter_plot(args):
    _require(args, "emin", "emax")
    if args.points < 2:
        raise UsageError("--points must be at least 2")
    try:
        rule, grid, rho = filter_table(args.emin, args.emax, args.nc, args.points)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    lines = ["lambda,re_rho,im_rho"]
    lines += [f"{x!r},{v.real!r},{v.imag!r}" for x, v in zip(grid.tolist(), rho.tolist())]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.nodes_out:
        z, w = rule.full_nodes()
        rows = ["k,re_z,im_z,re_w,im_w"]
        rows += [f"{k + 1},{zk.real!r},{zk.imag!r},{wk.real!r},{wk.imag!r}"
                 for k, (zk, wk) in enumerate(zip(z.tolist(), w.tolist()))]
        Path(args.nodes_out).write_text("\n".join(rows) + "\n")
    return EXIT_OK


def _cmd_equivalence(args):
    rng = np.random.default_rng(args.seed)
    if args.matrix:
        op = load_operator(args.matrix)
    else:
        a = rng.standard_normal((args.n, args.n))
        op = HermitianOperator.from_dense(0.5 * (a + a.T))
    if args.emin is None or args.emax is None:
        lam, _ = dense_eig(op)
        mid = lam.size // 2
        emin, emax = bracket_interval(lam, mid - args.m0 // 2, args.m0, margin=0.5)
    else:
        emin, emax = args.emin, args.emax
    rule = build_trapezoid(emin, emax, args.nc, symmetrized=op.is_real)
    x0 = rng.uniform(-1.0, 1.0, size=(op.n, args.m0))
    dev = fom_equivalence_check(op, x0, args.k, rule)
    print(repr(dev))
    return EXIT_OK


def _cmd_intervals(args):
    _require(args, "matrix")
    op = load_operator(args.matrix)
    lam, _ = dense_eig(op)
    try:
        emin, emax = bracket_interval(lam, args.first, args.count, args.margin)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"{emin!r} {emax!r}")
    return EXIT_OK


_COMMANDS = {
    "solve": _cmd_solve,
    "analyze": _cmd_analyze,
    "filter-plot": _cmd_filter_plot,
    "equivalence": _cmd_equivalence,
    "intervals": _cmd_intervals,
}


def main(argv=None):
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ifeast: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except FileNotFoundError as exc:
        print(f"ifeast [io-cli]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - report any solver failure with its module
        mod = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"ifeast [{mod}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
