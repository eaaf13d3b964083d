from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import solve_bvp
from scipy.interpolate import CubicHermiteSpline

from fracvar import bvp


def sin_problem(n_intervals=64, **kw):
    # y'' = -y, y(0) = 0, y(1) = 1, exact y = sin(x)/sin(1)
    return bvp.BvpProblem(
        dimension=2,
        rhs=lambda x, Y: np.vstack([Y[1], -Y[0]]),
        boundary_residual=lambda ya, yb: np.array([ya[0], yb[0] - 1.0]),
        a=0.0, b=1.0, n_intervals=n_intervals, **kw,
    )


def sin_error(n_intervals):
    sol = bvp.solve(sin_problem(n_intervals), tol=1.0, adapt=False)
    xq = np.linspace(0, 1, 1001)
    return float(np.max(np.abs(sol.sol(xq)[0] - np.sin(xq) / math.sin(1.0))))


def test_sin_benchmark_value():
    sol = bvp.solve(sin_problem())
    assert sol.converged
    assert sol.sol([0.5])[0, 0] == pytest.approx(0.569747, abs=1e-6)
    assert sol.sol([0.5])[0, 0] == pytest.approx(math.sin(0.5) / math.sin(1.0), abs=1e-6)


def test_sin_benchmark_fourth_order():
    e64, e128 = sin_error(64), sin_error(128)
    assert e128 <= 1e-6
    assert e64 / e128 >= 12


def test_constant_problem_one_newton_step():
    c = 2.5
    prob = bvp.BvpProblem(1, lambda x, Y: np.zeros_like(Y), lambda ya, yb: np.array([ya[0] - c]), 0.0, 1.0)
    sol = bvp.solve(prob)
    assert sol.converged
    assert sol.iterations == 1
    assert np.all(sol.y == c)


def test_unsatisfiable_boundary_not_converged():
    # y' = 0 cannot meet y(0) = 0 and y(1) = 1; a passive second state fixes the count
    prob = bvp.BvpProblem(2, lambda x, Y: np.zeros_like(Y),
                          lambda ya, yb: np.array([ya[0], yb[0] - 1.0]), 0.0, 1.0)
    sol = bvp.solve(prob)
    assert not sol.converged
    assert sol.message


def test_initial_guess_examples():
    x = np.array([0.0, 0.5, 1.0])
    assert bvp.initial_guess_linear([0.0], [1.0])(x)[0, 1] == 0.5
    assert np.all(bvp.initial_guess_linear(None, None, dimension=3)(x) == 0.0)
    g = bvp.initial_guess_linear([1.0, None], [3.0, None])(x)
    np.testing.assert_array_equal(g[0], [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(g[1], 0.0)
    with pytest.raises(ValueError):
        bvp.initial_guess_linear([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        bvp.initial_guess_linear(None, None)


def test_problem_validation():
    with pytest.raises(ValueError):
        sin_problem(n_intervals=0)
    with pytest.raises(ValueError):
        bvp.BvpProblem(1, None, None, 1.0, 0.0)


def bratu(**kw):
    return bvp.BvpProblem(
        dimension=2,
        rhs=lambda x, Y: np.vstack([Y[1], -np.exp(Y[0])]),
        boundary_residual=lambda ya, yb: np.array([ya[0], yb[0]]),
        a=0.0, b=1.0, **kw,
    )


def test_defect_bounds_interpolant_violation():
    prob = bratu()
    sol = bvp.solve(prob, tol=1e-6)
    assert sol.converged
    x, h = sol.x[:-1], np.diff(sol.x)
    spline = CubicHermiteSpline(sol.x, sol.y, sol.yp, axis=1)
    spline_d = spline.derivative()
    for t in (0.3, 0.6, 0.9):
        xq = x + t * h
        S = spline(xq)
        f = prob.rhs(xq, S)
        violation = np.max(np.abs(spline_d(xq) - f) / (1 + np.abs(f)))
        assert violation <= sol.max_defect * (1 + 1e-9)


def test_nonlinear_against_scipy_oracle():
    sol = bvp.solve(bratu(), tol=1e-8)
    xs = np.linspace(0, 1, 11)
    ref = solve_bvp(lambda x, y: np.vstack([y[1], -np.exp(y[0])]),
                    lambda ya, yb: np.array([ya[0], yb[0]]), xs, np.zeros((2, xs.size)), tol=1e-10)
    assert ref.success
    xq = np.linspace(0, 1, 201)
    assert np.max(np.abs(sol.sol(xq)[0] - ref.sol(xq)[0])) <= 1e-6
    assert sol.sol([0.5])[0, 0] == pytest.approx(0.1405392, abs=1e-6)


def test_determinism():
    a, b = bvp.solve(bratu()), bvp.solve(bratu())
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert a.iterations == b.iterations


def test_adaptive_refinement_and_mesh_limit():
    # boundary layer of width eps needs a refined mesh
    eps = 1e-2
    prob = bvp.BvpProblem(
        2, lambda x, Y: np.vstack([Y[1], Y[0] / eps]),
        lambda ya, yb: np.array([ya[0] - 1.0, yb[0]]), 0.0, 1.0, n_intervals=8,
    )
    sol = bvp.solve(prob, tol=1e-6)
    assert sol.converged and sol.n_intervals > 8
    xq = np.linspace(0, 1, 401)
    r = 1 / math.sqrt(eps)
    exact = np.sinh(r * (1 - xq)) / math.sinh(r)
    assert np.max(np.abs(sol.sol(xq)[0] - exact)) <= 1e-4
    capped = bvp.solve(bvp.BvpProblem(2, prob.rhs, prob.boundary_residual, 0.0, 1.0, 8, max_intervals=10))
    assert not capped.converged and "mesh limit" in capped.message


def test_bisect_mesh():
    np.testing.assert_array_equal(bvp.bisect_mesh([0.0, 1.0, 3.0]), [0.0, 0.5, 1.0, 2.0, 3.0])


def test_rhs_shape_checked():
    prob = bvp.BvpProblem(2, lambda x, Y: Y[0], lambda ya, yb: np.array([ya[0], yb[0]]), 0.0, 1.0)
    with pytest.raises(ValueError):
        bvp.solve(prob)
