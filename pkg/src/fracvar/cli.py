"""Command line entry point: ``fracvar {check,solve,table1,fixtures}``.

Exit codes: 0 success, 1 tolerance failure, 2 configuration error,
3 evaluation error, 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import logging
import platform
import sys
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__, eulerlagrange, expansion, plotting, reduction
from .errors import (
    ConfigError,
    ConvergenceError,
    FixtureError,
    FracvarError,
    UnsupportedProblemError,
)
from .expr import parse
from .fracnum import DEFAULT_GRID, GridFunction
from .problems import (
    FIXTURE_BASE,
    FIXTURE_TEXT,
    FIXTURES,
    HOLONOMIC_VARIABLES,
    BoundarySpec,
    ConstraintSpec,
    ProblemSpec,
    builtin_fixture,
    lagrangian_variables,
)

__all__ = [
    "EXIT_CONFIG",
    "EXIT_EVALUATION",
    "EXIT_NONCONVERGENCE",
    "EXIT_OK",
    "EXIT_TOLERANCE",
    "Numerics",
    "RunConfig",
    "config_from_spec",
    "fixture_config",
    "main",
    "run_check",
    "run_solve",
    "run_table1",
    "load_config",
    "spec_from_config",
]

log = logging.getLogger("fracvar")

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_CONFIG = 2
EXIT_EVALUATION = 3
EXIT_NONCONVERGENCE = 4

SECTIONS = ("problem", "orders", "boundary", "constraint", "numerics", "output")
DEFAULT_TOL = {"check": 5e-2, "solve": 5e-2, "table1": 5e-5}


@dataclass(frozen=True)
class Numerics:
    N: int = reduction.DEFAULT_N
    grid: int = DEFAULT_GRID
    tol: float | None = None
    bvp_tol: float = 1e-6
    intervals: int = 64
    margin: int = eulerlagrange.DEFAULT_MARGIN
    multiplier_mode: str = "normal"
    extremal_threshold: float = eulerlagrange.DEFAULT_TOLERANCE
    terminal_time: float | None = None
    candidate: str | None = None
    samples: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.N) != self.N or self.N < 2:
            raise ConfigError(f"N must be an integer >= 2, got {self.N}")
        if int(self.grid) != self.grid or self.grid < 2 * self.margin + 3:
            raise ConfigError(f"grid must be an integer >= {2 * self.margin + 3}, got {self.grid}")
        if self.margin < eulerlagrange.DEFAULT_MARGIN:
            raise ConfigError(f"margin must be at least {eulerlagrange.DEFAULT_MARGIN}")
        for name in ("bvp_tol", "extremal_threshold"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.intervals < 1:
            raise ConfigError("intervals must be positive")
        if self.multiplier_mode not in ("normal", "abnormal"):
            raise ConfigError(f"multiplier_mode must be 'normal' or 'abnormal', got {self.multiplier_mode!r}")
        if self.samples < 100:
            raise ConfigError("samples must be at least 100")


@dataclass(frozen=True)
class RunConfig:
    command: str
    spec: ProblemSpec | None
    exact: tuple[Callable[[np.ndarray], np.ndarray], ...] | None
    numerics: Numerics
    out: Path
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def tol(self) -> float:
        return DEFAULT_TOL[self.command] if self.numerics.tol is None else self.numerics.tol


# {{{ config <-> ProblemSpec


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be an object")
    return sec


def _exact_functions(texts, params: dict) -> tuple[Callable, ...] | None:
    if texts is None:
        return None
    if isinstance(texts, str):
        texts = [texts]
    exprs = [parse(t, ("x",), params) for t in texts]
    return tuple((lambda e: (lambda x: e.evaluate(x=np.asarray(x, dtype=float))))(e) for e in exprs)


def _boundary_value(v, params) -> float | None:
    """Boundary values may be numbers or constant expressions such as ``1/gamma(1.5)``."""
    if v is None or isinstance(v, (int, float)):
        return v
    if isinstance(v, str):
        return parse(v, (), params).evaluate()
    raise ConfigError(f"invalid boundary value {v!r}")


def spec_from_config(cfg: dict, alpha: float | None = None, grid: int = DEFAULT_GRID):
    """Problem and optional exact solution(s) described by a config document."""
    unknown = set(cfg) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    prob = _section(cfg, "problem")
    orders = _section(cfg, "orders")
    if alpha is None:
        alpha = orders.get("alpha", 0.5 if "fixture" in prob else None)
    if alpha is None:
        raise ConfigError("orders.alpha is required")
    beta = orders.get("beta", 1.0)

    if "fixture" in prob:
        fx = builtin_fixture(prob["fixture"], float(alpha), grid)
        spec = fx.spec if beta == 1.0 else replace(fx.spec, beta=float(beta))
        return spec, (fx.exact,)

    for key in ("L", "l"):
        if not isinstance(prob.get(key), str):
            raise ConfigError(f"problem.{key} must be an expression string")
    a, b = prob.get("interval", [0.0, 1.0])
    params = {"alpha": float(alpha), "beta": float(beta), **prob.get("parameters", {})}
    bnd = _section(cfg, "boundary")
    boundary = BoundarySpec(_boundary_value(bnd.get("ya"), params), _boundary_value(bnd.get("yb"), params),
                            bool(bnd.get("terminal_time_free", False)))
    components = int(prob.get("components", 1))

    constraint = None
    con = cfg.get("constraint")
    if con:
        kind = con.get("kind")
        if kind == "isoperimetric":
            G = parse(con["G"], lagrangian_variables(components), params)
            constraint = ConstraintSpec("isoperimetric", G=G, gamma_value=float(con["gamma"]))
        elif kind == "holonomic":
            constraint = ConstraintSpec("holonomic", g=parse(con["g"], HOLONOMIC_VARIABLES, params))
        else:
            raise ConfigError(f"unknown constraint kind {kind!r}")

    spec = ProblemSpec.from_text(
        prob["L"], prob["l"], alpha=float(alpha), beta=float(beta), a=float(a), b=float(b),
        components=components, control_rhs=prob.get("control_rhs"), parameters=prob.get("parameters"),
        boundary=boundary, constraint=constraint, name=str(prob.get("name", "")),
    )
    return spec, _exact_functions(prob.get("exact"), params)


def config_from_spec(p: ProblemSpec, *, exact: str | Sequence[str] | None = None,
                     numerics: dict | None = None, output: dict | None = None) -> dict:
    """Config document for *p*; expressions are written in canonical form."""
    prob = {"name": p.name, "L": str(p.L), "l": str(p.l), "interval": [p.a, p.b]}
    if p.components != 1:
        prob["components"] = p.components
    if p.control_rhs is not None:
        prob["control_rhs"] = str(p.control_rhs)
    if exact is not None:
        prob["exact"] = exact
    constraint = None
    if p.constraint is not None and p.constraint.kind == "isoperimetric":
        constraint = {"kind": "isoperimetric", "G": str(p.constraint.G), "gamma": p.constraint.gamma_value}
    elif p.constraint is not None:
        constraint = {"kind": "holonomic", "g": str(p.constraint.g)}
    return {
        "problem": prob,
        "orders": {"alpha": p.alpha, "beta": p.beta},
        "boundary": {"ya": p.boundary.ya, "yb": p.boundary.yb,
                     "terminal_time_free": p.boundary.terminal_time_free},
        "constraint": constraint,
        "numerics": dict(numerics or {}),
        "output": dict(output or {}),
    }


def fixture_config(name: str, alpha: float = 0.5) -> dict:
    """Committed-example config of a builtin fixture, with ``alpha`` kept symbolic."""
    fx = builtin_fixture(name, alpha, 5)
    text = FIXTURE_TEXT[FIXTURE_BASE[name]]
    b = fx.spec.boundary
    return {
        "problem": {"name": name, "L": text["L"], "l": text["l"], "interval": [0.0, 1.0],
                    "exact": text["exact"]},
        "orders": {"alpha": alpha, "beta": 1.0},
        "boundary": {"ya": b.ya, "yb": None if b.yb is None else text["yb"],
                     "terminal_time_free": False},
        "constraint": None,
        "numerics": {"N": 2, "grid": DEFAULT_GRID, "tol": DEFAULT_TOL["check"]},
        "output": {"dir": f"out/{name}"},
    }

# }}}


def load_config(path: Path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def build_run_config(args: argparse.Namespace) -> RunConfig:
    cfg: dict = {}
    base = Path.cwd()
    if getattr(args, "config", None):
        cfg = load_config(Path(args.config))
        base = Path(args.config).resolve().parent
    if getattr(args, "fixture", None):
        cfg = dict(cfg, problem={"fixture": args.fixture})
        cfg.pop("boundary", None)
        cfg.pop("constraint", None)
    num = dict(_section(cfg, "numerics"))
    for flag, key in (("N", "N"), ("grid", "grid"), ("tol", "tol")):
        v = getattr(args, flag, None)
        if v is not None:
            num[key] = v
    if getattr(args, "candidate", None) is not None:
        num["candidate"] = args.candidate
    known = set(Numerics.__dataclass_fields__)
    if set(num) - known:
        raise ConfigError(f"unknown numerics keys {sorted(set(num) - known)}")
    numerics = Numerics(**num)
    out = getattr(args, "out", None) or _section(cfg, "output").get("dir") or "out"
    out_path = Path(out) if Path(out).is_absolute() or getattr(args, "out", None) else base / out

    spec = exact = None
    if args.command in ("check", "solve"):
        if not cfg.get("problem"):
            raise ConfigError("a problem is required: pass --config or --fixture")
        spec, exact = spec_from_config(cfg, args.alpha, numerics.grid)
    return RunConfig(args.command, spec, exact, numerics, out_path, base)


# {{{ outputs


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


def _write_json(path: Path, data) -> Path:
    return _write(path, json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _columns_csv(columns: dict[str, np.ndarray]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(columns))
    for row in zip(*columns.values()):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def write_metadata(out: Path, argv: Sequence[str]) -> Path:
    return _write_json(out / "run_metadata.json", {
        "argv": list(argv),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "fracvar": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    })

# }}}


# {{{ check


def _read_candidate_csv(path: Path, names: Sequence[str]) -> list[GridFunction]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read candidate {path}: {exc}") from None
    header = next(csv.reader(io.StringIO(text)), [])
    out = []
    for name in names:
        if name not in header:
            raise ConfigError(f"candidate CSV {path} lacks column {name!r}")
        try:
            out.append(GridFunction.from_csv(text, header.index(name)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return out


def _candidate(rc: RunConfig, names: Sequence[str]) -> list[GridFunction]:
    p = rc.spec
    cand = rc.numerics.candidate
    if cand is None:
        if rc.exact is None or len(rc.exact) != len(names):
            raise ConfigError("no candidate trajectory: give numerics.candidate or an exact solution")
        return [GridFunction.sample(f, p.a, p.b, rc.numerics.grid) for f in rc.exact]
    if cand.endswith(".csv"):
        path = Path(cand) if Path(cand).is_absolute() else rc.base_dir / cand
        return _read_candidate_csv(path, names)
    if len(names) != 1:
        raise ConfigError("expression candidates are supported for scalar problems only")
    f = _exact_functions(cand, {"alpha": p.alpha, "beta": p.beta})[0]
    return [GridFunction.sample(f, p.a, p.b, rc.numerics.grid)]


def run_check(rc: RunConfig) -> tuple[int, dict]:
    p, num, tol = rc.spec, rc.numerics, rc.tol
    reports: dict[str, eulerlagrange.ResidualReport] = {}
    scalars: dict[str, float] = {}
    checks: dict[str, bool] = {}
    extra: dict = {}

    if p.lagrange_form:
        y, u, pc = _candidate(rc, ("y", "u", "p")) if num.candidate else (None, None, None)
        if y is None:
            raise ConfigError("Lagrange-form checks need a candidate CSV with columns y, u, p")
        reports.update(eulerlagrange.hamiltonian_residuals(p, y, u, pc, num.margin))
        grid_x = y.x
    elif p.constraint is not None and p.constraint.kind == "holonomic":
        y1, y2 = _candidate(rc, ("y1", "y2"))
        lam, rep = eulerlagrange.holonomic_residual(p, y1, y2, num.margin)
        reports["holonomic"] = rep
        scalars["constraint_defect"] = rep.endpoint_terms["constraint_defect"]
        checks["constraint_defect"] = scalars["constraint_defect"] <= tol
        extra["lambda_mean"] = float(np.mean(lam.lambda_of_x.values))
        grid_x = y1.x
    elif p.constraint is not None:
        (y,) = _candidate(rc, ("y",))
        res = eulerlagrange.isoperimetric_residual(p, y, num.multiplier_mode, num.margin, num.extremal_threshold)
        reports["isoperimetric"] = res.residual_report
        scalars.update(lambda0=res.lambda0, **{"lambda": res.lam}, constraint_defect=res.defect)
        checks["constraint_defect"] = res.defect <= tol
        checks["identifiable"] = not res.degenerate
        if res.degenerate:
            extra["message"] = res.message
        grid_x = y.x
    else:
        (y,) = _candidate(rc, ("y",))
        reports["euler_lagrange"] = eulerlagrange.el_residual(p, y, num.margin)
        b = p.boundary
        if b.ya is None or b.yb is None or b.terminal_time_free:
            tr = eulerlagrange.transversality_residuals(p, y, num.terminal_time, num.margin)
            scalars.update({f"transversality_{k}": v for k, v in tr.items()})
            if b.ya is None:
                checks["transversality_initial"] = abs(tr["initial"]) <= tol
            if b.yb is None:
                checks["transversality_terminal"] = abs(tr["terminal"]) <= tol
            if b.terminal_time_free:
                checks["transversality_lagrangian_at_T"] = abs(tr["lagrangian_at_T"]) <= tol
        if p.components == 1:
            cert = eulerlagrange.sufficiency_certificate(p, y, num.samples, num.seed)
            extra["sufficiency"] = cert.value
            extra["sufficiency_note"] = "sampled convexity, not a proof"
        grid_x = y.x

    for name, rep in reports.items():
        checks[name] = rep.max <= tol
    passed = all(checks.values())

    rc.out.mkdir(parents=True, exist_ok=True)
    columns = {"x": grid_x, **{name: rep.residual.values for name, rep in reports.items()}}
    _write(rc.out / "residual.csv", _columns_csv(columns))
    for name, rep in reports.items():
        plotting.residual_figure(grid_x, rep.residual.values, rep.margin, rc.out / f"residual_{name}.png",
                                 f"{p.name or 'problem'}: {name} residual")
    summary = {
        "command": "check",
        "problem": p.name,
        "alpha": p.alpha,
        "grid": int(grid_x.size),
        "tol": tol,
        "passed": passed,
        "checks": checks,
        "residuals": {name: rep.norms for name, rep in reports.items()},
        "scalars": scalars,
        **extra,
    }
    _write_json(rc.out / "summary.json", summary)
    for name, rep in reports.items():
        print(f"{name}: {rep.summary_line()}")
    for k, v in scalars.items():
        print(f"{k}: {v!r}")
    print("PASS" if passed else "FAIL: " + ", ".join(k for k, ok in checks.items() if not ok))
    return (EXIT_OK if passed else EXIT_TOLERANCE), summary

# }}}


def run_solve(rc: RunConfig) -> tuple[int, dict]:
    p, num, tol = rc.spec, rc.numerics, rc.tol
    status = EXIT_OK
    try:
        rep = reduction.solve(p, num.N, num.grid, tol=num.bvp_tol, n_intervals=num.intervals)
    except ConvergenceError as exc:
        rep = exc.solution
        status = EXIT_NONCONVERGENCE
        print(f"fracvar: {exc}", file=sys.stderr)
    x = rep.y.x
    columns = {"x": x, "y_numeric": rep.y.values}
    exact = None
    if rc.exact is not None:
        exact = np.broadcast_to(rc.exact[0](x), x.shape)
        columns["y_exact"] = exact
    columns["u"] = rep.u.values
    rc.out.mkdir(parents=True, exist_ok=True)
    _write(rc.out / "trajectory.csv", _columns_csv(columns))
    title = f"{p.name or 'problem'}: alpha={p.alpha:g}, N={num.N}"
    _write(rc.out / "plot_solution.py", plotting.plot_script(title))
    plotting.solution_figure(x, rep.y.values, exact, rc.out / "solution.png", title)

    summary = {"command": "solve", "problem": p.name, "alpha": p.alpha, "N": num.N, "grid": num.grid,
               "tol": tol, **rep.summary()}
    if exact is not None:
        err = float(np.max(np.abs(rep.y.values - exact)))
        summary["max_abs_error"] = err
        if status == EXIT_OK and not err <= tol:
            status = EXIT_TOLERANCE
    summary["passed"] = status == EXIT_OK
    _write_json(rc.out / "summary.json", summary)
    print(f"J_tilde: {rep.J_tilde!r}")
    if exact is not None:
        print(f"max_abs_error: {summary['max_abs_error']!r}")
    print(f"el_residual_max: {rep.el_residual_norm!r}")
    print(f"converged: {rep.converged} ({rep.iterations} Newton iterations, {rep.solution.n_intervals} intervals)")
    print("PASS" if status == EXIT_OK else "FAIL")
    return status, summary


def run_table1(rc: RunConfig) -> tuple[int, dict]:
    tol = rc.tol
    values = expansion.table1()
    rc.out.mkdir(parents=True, exist_ok=True)
    _write(rc.out / "table1.csv", expansion.table1_csv(values))
    bad = expansion.table1_mismatches(tol)
    total = values.size
    diff = float(np.max(np.abs(values - expansion.PRINTED_TABLE1)))
    summary = {"command": "table1", "tol": tol, "matches": total - len(bad), "cells": total,
               "max_abs_deviation": diff, "mismatches": [list(c) for c in bad], "passed": not bad}
    _write_json(rc.out / "summary.json", summary)
    print(f"{total - len(bad)}/{total} entries within {tol:g} (max deviation {diff:.3e})")
    for a, n, got, printed in bad:
        print(f"mismatch alpha={a} N={n}: computed {got:.6f}, printed {printed:.4f}")
    return (EXIT_OK if not bad else EXIT_TOLERANCE), summary


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracvar", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"fracvar {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, problem: bool):
        sp.add_argument("--config", metavar="PATH", help="JSON run configuration")
        if problem:
            sp.add_argument("--fixture", metavar="NAME", help="builtin fixture instead of a config problem")
            sp.add_argument("--alpha", type=float, metavar="F", help="override the derivative order")
            sp.add_argument("--N", type=int, metavar="K", help="expansion truncation order")
            sp.add_argument("--grid", type=int, metavar="M", help="number of grid nodes")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--tol", type=float, metavar="F", help="pass/fail tolerance")
        sp.add_argument("-v", "--verbose", action="store_true", help="log solver progress")

    c = sub.add_parser("check", help="evaluate optimality-condition residuals of a candidate")
    common(c, True)
    c.add_argument("--candidate", metavar="EXPR|CSV", help="candidate y as an expression in x or a CSV file")
    s = sub.add_parser("solve", help="solve by the expansion-based reduction")
    common(s, True)
    t = sub.add_parser("table1", help="reproduce the B(alpha, N) table")
    common(t, False)
    f = sub.add_parser("fixtures", help="list builtin fixtures, optionally writing their configs")
    f.add_argument("--out", metavar="DIR", help="write one example config per fixture into DIR")
    f.add_argument("-v", "--verbose", action="store_true", help=argparse.SUPPRESS)
    return ap


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help/--version, 2 for usage errors
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    _configure_logging(args.verbose)

    if args.command == "fixtures":
        return _fixtures_command(args)

    try:
        rc = build_run_config(args)
    except (FracvarError, ValueError, KeyError, TypeError) as exc:
        print(f"fracvar: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    runner = {"check": run_check, "solve": run_solve, "table1": run_table1}[args.command]
    try:
        status, _ = runner(rc)
    except ConvergenceError as exc:
        print(f"fracvar: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ConfigError, UnsupportedProblemError, FixtureError) as exc:
        print(f"fracvar: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # every other failure is an evaluation error
        print(f"fracvar: evaluation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_EVALUATION
    write_metadata(rc.out, ["fracvar", *argv])
    return status


def _fixtures_command(args) -> int:
    for n in FIXTURES:
        note = "" if FIXTURE_BASE[n] == n else f"  functional of {FIXTURE_BASE[n]} without boundary values"
        print(f"{n}{note}")
    if args.out:
        out = Path(args.out)
        try:
            for n in FIXTURES:
                if n == "example34":  # alias
                    continue
                _write(out / f"{n}.json", json.dumps(fixture_config(n), indent=2) + "\n")
        except OSError as exc:
            print(f"fracvar: configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
