"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from _oracles import derivative_mismatches  # noqa: E402
from fracvar import bvp, eulerlagrange, expansion, fracnum, reduction  # noqa: E402
from fracvar.expr import parse  # noqa: E402
from fracvar.fracnum import GridFunction  # noqa: E402
from fracvar.problems import ConstraintSpec, ProblemSpec, builtin_fixture, lagrangian_variables  # noqa: E402


def c1_table1():
    t0 = time.perf_counter()
    values = expansion.table1()
    bad = expansion.table1_mismatches(5e-5)
    dt = time.perf_counter() - t0
    dev = float(np.max(np.abs(values - expansion.PRINTED_TABLE1)))
    return not bad and dt < 1.0, f"{values.size - len(bad)}/28 within 5e-5, max deviation {dev:.2e}, {dt:.3f} s"


def c2_caputo():
    t0 = time.perf_counter()
    worst = 0.0
    for alpha in (0.3, 0.5, 0.7):
        f = GridFunction.sample(lambda x: x ** (alpha + 1), 0.0, 1.0, 4096)
        d = fracnum.left_caputo(f, alpha)
        m = f.x >= 0.1
        worst = max(worst, float(np.max(np.abs(d.values[m] / (math.gamma(alpha + 2) * f.x[m]) - 1))))
    dt = time.perf_counter() - t0
    return worst <= 1e-3 and dt < 5.0, f"max relative error {worst:.2e} on [0.1, 1], {dt:.2f} s"


def c3_el_residual():
    parts, ok = [], True
    for name in ("example23", "example24"):
        fx = builtin_fixture(name)
        good = eulerlagrange.el_residual(fx.spec, fx.minimizer).max
        y = fx.minimizer.like(fx.minimizer.x)
        bad = eulerlagrange.el_residual(fx.spec, y).max
        ok &= good <= 5e-2 and bad >= 10 * good
        parts.append(f"{name} {good:.2e} vs y=x {bad:.2e}")
    return ok, "; ".join(parts)


def c4_transversality():
    fx = builtin_fixture("example23_freeboundary")
    tr = eulerlagrange.transversality_residuals(fx.spec, fx.minimizer)
    return abs(tr["initial"]) <= 5e-2, f"condition at a: {tr['initial']:.2e}"


def c5_end_to_end():
    parts, ok = [], True
    for name in ("example23", "example24"):
        fx = builtin_fixture(name)
        t0 = time.perf_counter()
        rep = reduction.solve(fx.spec, 2, raise_on_failure=False)
        dt = time.perf_counter() - t0
        x = rep.y.x
        err = float(np.max(np.abs(rep.y.values - fx.exact(x))))
        finer = reduction.solve(fx.spec, 2, mesh=bvp.bisect_mesh(rep.solution.x), adapt=False,
                                raise_on_failure=False)
        err2 = float(np.max(np.abs(finer.y.values - fx.exact(x))))
        ok &= rep.converged and err <= 0.05 and rep.J_tilde <= 1e-2 and err2 <= err and dt < 30
        parts.append(f"{name} err {err:.2e} (doubled {err2:.2e}) J~ {rep.J_tilde:.2e} {dt:.2f} s")
    return ok, "; ".join(parts)


IBP_PAIRS = (
    (lambda x: np.sin(x) + x**2, lambda x: (1 - x) ** 2 * np.exp(x)),
    (lambda x: np.exp(x), lambda x: np.sin(np.pi * x)),
    (lambda x: 1 + x**3, lambda x: (1 - x) * np.cos(x)),
)


def c6_integration_by_parts():
    alpha, worst = 0.5, 0.0
    for ff, gg in IBP_PAIRS:
        f = GridFunction.sample(ff, 0.0, 1.0, 4096)
        g = GridFunction.sample(gg, 0.0, 1.0, 4096)
        lhs = fracnum.integrate(g.like(g.values * fracnum.left_caputo(f, alpha).values))
        rhs = fracnum.integrate(f.like(f.values * fracnum.right_rl_derivative(g, alpha).values))
        J = fracnum.right_rl_integral(g, 1 - alpha).values
        worst = max(worst, abs(lhs - rhs - (J[-1] * f.values[-1] - J[0] * f.values[0])))
    return worst <= 5e-3, f"max quadrature residual {worst:.2e} over {len(IBP_PAIRS)} pairs"


def c7_expansion_convergence():
    f = GridFunction.sample(lambda x: x**1.5, 0.0, 1.0, 2049)
    m = f.x >= 0.1
    target = math.gamma(2.5) * f.x[m]
    errors = [float(np.max(np.abs(expansion.approximate_derivative(f, expansion.coeffs(0.5, N)).values[m] - target)))
              for N in range(4, 31)]
    ok = all(b < a for a, b in zip(errors, errors[1:]))
    return ok, f"error N=4 {errors[0]:.2e} -> N=30 {errors[-1]:.2e}, strictly decreasing: {ok}"


def c8_bvp_benchmark():
    def err(n):
        prob = bvp.BvpProblem(2, lambda x, Y: np.vstack([Y[1], -Y[0]]),
                              lambda ya, yb: np.array([ya[0], yb[0] - 1.0]), 0.0, 1.0, n_intervals=n)
        sol = bvp.solve(prob, tol=1.0, adapt=False)
        xq = np.linspace(0, 1, 1001)
        return float(np.max(np.abs(sol.sol(xq)[0] - np.sin(xq) / math.sin(1.0))))

    e64, e128 = err(64), err(128)
    return e128 <= 1e-6 and e64 / e128 >= 12, f"error at 128 intervals {e128:.2e}, halving ratio {e64 / e128:.1f}"


def c9_symbolic_differentiation():
    bad, checked = derivative_mismatches(100)
    return checked == 100 and not bad, f"{checked - len(bad)}/{checked} pairs within 1e-6 relative"


def c10_multipliers():
    alpha = 0.5
    y = GridFunction.sample(lambda x: x**1.5, 0.0, 1.0, 2049)
    G = parse("2*y + (v - gamma(alpha + 2)*x)^2", lagrangian_variables(), {"alpha": alpha})
    p = ProblemSpec.from_text("(v - gamma(alpha + 2)*x)^2 + z + 4*y", "(y - x^(alpha + 1))^2", alpha=alpha,
                              constraint=ConstraintSpec("isoperimetric", G=G, gamma_value=0.8))
    lam = eulerlagrange.isoperimetric_residual(p, y).lam

    c, k = 0.7, 3.0
    g = parse("c*y1 - y2", ("x", "y1", "y2"), {"c": c})
    q = ProblemSpec.from_text(
        "(v1 - gamma(alpha + 2)*x)^2 + (v2 - c*gamma(alpha + 2)*x)^2 - k*c*y1 + k*y2 + z",
        "(y1 - x^(alpha + 1))^2", alpha=alpha, components=2, parameters={"c": c, "k": k},
        constraint=ConstraintSpec("holonomic", g=g))
    _, rep = eulerlagrange.holonomic_residual(q, y, y.like(c * y.values))
    r2 = rep.endpoint_terms["residual_2_max"]
    ok = abs(lam - 2.0) <= 0.05 and rep.max <= 5e-2 and r2 <= 1e-12
    return ok, f"lambda {lam:.4f}; holonomic i=1 residual {rep.max:.2e}, i=2 residual {r2:.1e}"


CRITERIA = [
    ("1 B(alpha, N) table reproduction", c1_table1),
    ("2 Caputo operator accuracy", c2_caputo),
    ("3 Euler-Lagrange residual vanishing", c3_el_residual),
    ("4 Transversality check", c4_transversality),
    ("5 End-to-end solve", c5_end_to_end),
    ("6 Integration-by-parts identity", c6_integration_by_parts),
    ("7 Expansion convergence", c7_expansion_convergence),
    ("8 BVP solver benchmark", c8_bvp_benchmark),
    ("9 Symbolic differentiation", c9_symbolic_differentiation),
    ("10 Multiplier recovery", c10_multipliers),
]


def evaluate(label, check) -> tuple[bool, str]:
    passed, detail = check()
    line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
    return bool(passed), line


@pytest.mark.parametrize("label, check", CRITERIA, ids=[c[0].split()[0] for c in CRITERIA])
def test_criterion(label, check, capsys):
    passed, line = evaluate(label, check)
    with capsys.disabled():
        print("\n" + line)
    assert passed, line


if __name__ == "__main__":
    results = [evaluate(label, check) for label, check in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(p for p, _ in results) else 1)
