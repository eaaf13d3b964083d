from __future__ import annotations

import math

import numpy as np
import pytest

from fracvar import fracnum
from fracvar.errors import DimensionMismatchError, DomainError, FixtureError
from fracvar.fracnum import GridFunction
from fracvar.problems import (
    BoundarySpec,
    ConstraintSpec,
    ProblemSpec,
    builtin_fixture,
    cost,
    evaluate_trajectory,
)


@pytest.fixture(scope="module", params=["example23", "example24"])
def fixture(request):
    return builtin_fixture(request.param)


def test_fixture_minimizers():
    fx = builtin_fixture("example23")
    assert fx.minimizer.values[-1] == 1.0
    assert fx.minimizer.values[0] == 0.0
    np.testing.assert_allclose(fx.minimizer.values, fx.minimizer.x**1.5)
    fx = builtin_fixture("example24")
    assert fx.minimizer.values[-1] == pytest.approx(1 / math.gamma(1.5))
    assert fx.spec.boundary.yb == pytest.approx(1 / math.gamma(1.5))


def test_free_boundary_fixture_and_alias():
    fx = builtin_fixture("example23_freeboundary")
    assert fx.spec.boundary == BoundarySpec()
    assert builtin_fixture("example34").spec.L == fx.spec.L


def test_unknown_fixture():
    with pytest.raises(FixtureError):
        builtin_fixture("example99")


def test_z_vanishes_at_minimizers(fixture):
    te = evaluate_trajectory(fixture.spec, fixture.minimizer)
    assert te.z.values[0] == 0.0
    assert np.max(np.abs(te.z.values)) <= 1e-6


def test_z_of_unit_integrand_is_x_minus_a():
    p = ProblemSpec.from_text("z", "1", alpha=0.5, a=0.5, b=2.0)
    y = GridFunction.sample(np.sin, 0.5, 2.0, 301)
    te = evaluate_trajectory(p, y)
    np.testing.assert_allclose(te.z.values, y.x - 0.5, rtol=0, atol=1e-13)
    assert te.z.values[0] == 0.0


def test_z_is_nondecreasing_for_nonnegative_l(fixture):
    y = fixture.minimizer.like(fixture.minimizer.values + 0.1 * np.sin(7 * fixture.minimizer.x))
    z = evaluate_trajectory(fixture.spec, y).z.values
    assert np.all(np.diff(z) >= 0)


def test_cost_vanishes_at_minimizers(fixture):
    assert abs(cost(fixture.spec, fixture.minimizer)) <= 1e-5


def test_cost_of_unit_lagrangian():
    p = ProblemSpec.from_text("1", "y", alpha=0.5)
    assert cost(p, GridFunction.sample(np.cos, 0, 1, 17)) == 1.0


def test_cost_nonnegative_and_minimal_under_perturbations(fixture):
    rng = np.random.default_rng(7)
    y0 = fixture.minimizer
    x = y0.x
    J0 = cost(fixture.spec, y0)
    for _ in range(50):
        k = rng.integers(1, 6)
        amp = rng.uniform(-0.3, 0.3)
        bump = amp * np.sin(k * np.pi * x) * x
        J = cost(fixture.spec, y0.like(y0.values + bump))
        assert J >= 0.0
        assert J0 <= J


def test_trajectory_eval_shares_grid(fixture):
    te = evaluate_trajectory(fixture.spec, fixture.minimizer)
    for g in (te.caputo_y, te.frac_int_y, te.z):
        assert g.same_grid(te.y)


def test_domain_errors_carry_node_index():
    p = ProblemSpec.from_text("z", "ln(y)", alpha=0.5)
    y = GridFunction.sample(lambda x: x, 0, 1, 11)
    with pytest.raises(DomainError) as info:
        evaluate_trajectory(p, y)
    assert info.value.index == 0


def test_problem_validation():
    with pytest.raises(ValueError):
        ProblemSpec.from_text("v", "y", alpha=1.2)
    with pytest.raises(ValueError):
        ProblemSpec.from_text("v", "y", alpha=0.5, a=1.0, b=0.0)
    with pytest.raises(Exception):
        ProblemSpec.from_text("u", "y", alpha=0.5)  # u is not a variational variable
    p = ProblemSpec.from_text("(u - 1)^2 + z", "y", alpha=0.5, control_rhs="u")
    assert p.lagrange_form


def test_constraint_validation():
    with pytest.raises(ValueError):
        ConstraintSpec("isoperimetric")
    with pytest.raises(ValueError):
        ConstraintSpec("pointwise")
    with pytest.raises(ValueError):
        ProblemSpec.from_text("v1^2 + v2^2", "y1", alpha=0.5, components=2,
                              constraint=ConstraintSpec("isoperimetric", G=None, gamma_value=1.0))


def test_grid_mismatch_rejected(fixture):
    y = GridFunction.sample(lambda x: x, 0, 2, 11)
    with pytest.raises(DimensionMismatchError):
        evaluate_trajectory(fixture.spec, y)


def test_fractional_integral_binding():
    p = ProblemSpec.from_text("w", "0", alpha=0.5, beta=1.0)
    y = GridFunction.sample(lambda x: 1 + 0 * x, 0, 1, 101)
    # int_0^1 w dx with w = x
    assert cost(p, y) == pytest.approx(0.5, abs=1e-12)
    te = evaluate_trajectory(p, y)
    np.testing.assert_allclose(te.frac_int_y.values, fracnum.left_rl_integral(y, 1.0).values)
