r"""Fractional variational problems and the built-in worked fixtures.

A :class:`ProblemSpec` describes

.. math::

    J(y) = \int_a^b L(x, y, {}^C_aD_x^\alpha y, {}_aI_x^\beta y, z)\,dx,
    \qquad z(x) = \int_a^x l(t, y, {}^C_aD_t^\alpha y, {}_aI_t^\beta y)\,dt,

with optional boundary values, an isoperimetric or holonomic constraint,
or, in Lagrange form, a control ``u`` entering through
:math:`{}^C_aD_x^\alpha y = f(x, y, u, w, z)`.

Variable names: scalar problems use ``x, y, v, w, z`` (``v`` is the Caputo
derivative, ``w`` the fractional integral). Problems with ``components=2``
use ``y1, y2, v1, v2, w1, w2``. In Lagrange form ``L`` and ``f`` are written
in ``x, y, u, w, z``, while ``l`` still uses ``x, y, v, w``.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import fracnum
from .errors import DimensionMismatchError, DomainError, FixtureError
from .expr import Expression, parse
from .fracnum import DEFAULT_GRID, FractionalOrder, GridFunction

__all__ = [
    "BoundarySpec",
    "ConstraintSpec",
    "Fixture",
    "FIXTURES",
    "FIXTURE_BASE",
    "FIXTURE_TEXT",
    "ProblemSpec",
    "TrajectoryEval",
    "builtin_fixture",
    "cost",
    "evaluate_trajectory",
    "lagrangian_variables",
    "inner_variables",
]


def _names(prefix: str, components: int) -> tuple[str, ...]:
    if components == 1:
        return (prefix,)
    return tuple(f"{prefix}{k}" for k in range(1, components + 1))


def inner_variables(components: int = 1) -> tuple[str, ...]:
    """Variables of the inner integrand ``l``."""
    return ("x", *_names("y", components), *_names("v", components), *_names("w", components))


def lagrangian_variables(components: int = 1) -> tuple[str, ...]:
    return (*inner_variables(components), "z")


CONTROL_VARIABLES = ("x", "y", "u", "w", "z")
HOLONOMIC_VARIABLES = ("x", "y1", "y2")


@dataclass(frozen=True)
class BoundarySpec:
    """Prescribed boundary values; ``None`` switches to a natural condition."""

    ya: float | None = None
    yb: float | None = None
    terminal_time_free: bool = False


@dataclass(frozen=True)
class ConstraintSpec:
    kind: str
    G: Expression | None = None
    gamma_value: float | None = None
    g: Expression | None = None

    def __post_init__(self) -> None:
        if self.kind == "isoperimetric":
            if self.G is None or self.g is not None:
                raise ValueError("an isoperimetric constraint needs G and no g")
            if self.gamma_value is None or not math.isfinite(self.gamma_value):
                raise ValueError("an isoperimetric constraint needs a finite gamma value")
        elif self.kind == "holonomic":
            if self.g is None or self.G is not None:
                raise ValueError("a holonomic constraint needs g and no G")
        else:
            raise ValueError(f"unknown constraint kind {self.kind!r}")


@dataclass(frozen=True)
class ProblemSpec:
    alpha: float
    beta: float
    a: float
    b: float
    L: Expression
    l: Expression
    boundary: BoundarySpec = field(default_factory=BoundarySpec)
    constraint: ConstraintSpec | None = None
    control_rhs: Expression | None = None
    components: int = 1
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", FractionalOrder(self.alpha, "derivative").value)
        object.__setattr__(self, "beta", FractionalOrder(self.beta, "integral").value)
        if not self.a < self.b:
            raise ValueError(f"invalid interval [{self.a}, {self.b}]")
        if self.components not in (1, 2):
            raise ValueError("only one or two trajectory components are supported")
        lvars = CONTROL_VARIABLES if self.control_rhs is not None else lagrangian_variables(self.components)
        object.__setattr__(self, "L", self.L.with_variables(lvars))
        object.__setattr__(self, "l", self.l.with_variables(inner_variables(self.components)))
        if self.control_rhs is not None:
            if self.components != 1:
                raise ValueError("Lagrange form supports a single state")
            object.__setattr__(self, "control_rhs", self.control_rhs.with_variables(CONTROL_VARIABLES))
        c = self.constraint
        if c is not None and c.kind == "isoperimetric":
            object.__setattr__(
                self, "constraint", replace(c, G=c.G.with_variables(lagrangian_variables(self.components)))
            )
        if c is not None and c.kind == "holonomic":
            if self.components != 2:
                raise ValueError("a holonomic constraint needs two trajectory components")
            object.__setattr__(self, "constraint", replace(c, g=c.g.with_variables(HOLONOMIC_VARIABLES)))

    @classmethod
    def from_text(cls, L: str, l: str, *, alpha: float, beta: float = 1.0, a: float = 0.0,
                  b: float = 1.0, components: int = 1, control_rhs: str | None = None,
                  parameters: dict | None = None, **kwargs) -> ProblemSpec:
        """Build a problem from expression text; ``alpha``/``beta`` are available as parameters."""
        params = {"alpha": alpha, "beta": beta, **(parameters or {})}
        lvars = CONTROL_VARIABLES if control_rhs is not None else lagrangian_variables(components)
        f = parse(control_rhs, CONTROL_VARIABLES, params) if control_rhs is not None else None
        return cls(alpha, beta, a, b, parse(L, lvars, params), parse(l, inner_variables(components), params),
                   control_rhs=f, components=components, **kwargs)

    @property
    def lagrange_form(self) -> bool:
        return self.control_rhs is not None


@dataclass(frozen=True)
class TrajectoryEval:
    """A trajectory together with everything the Lagrangian reads from it."""

    ys: tuple[GridFunction, ...]
    caputo: tuple[GridFunction, ...]
    frac_int: tuple[GridFunction, ...]
    z: GridFunction

    @property
    def y(self) -> GridFunction:
        return self.ys[0]

    @property
    def caputo_y(self) -> GridFunction:
        return self.caputo[0]

    @property
    def frac_int_y(self) -> GridFunction:
        return self.frac_int[0]

    @property
    def grid(self) -> GridFunction:
        return self.ys[0]

    def bindings(self, components: int = 1, *, with_z: bool = True) -> dict[str, np.ndarray]:
        env = {"x": self.grid.x}
        for name, gs in (("y", self.ys), ("v", self.caputo), ("w", self.frac_int)):
            for key, g in zip(_names(name, components), gs):
                env[key] = g.values
        if with_z:
            env["z"] = self.z.values
        return env


def _as_tuple(y) -> tuple[GridFunction, ...]:
    if isinstance(y, GridFunction):
        return (y,)
    return tuple(y)


def _check_grid(p: ProblemSpec, ys: Sequence[GridFunction]) -> None:
    if len(ys) != p.components:
        raise DimensionMismatchError(f"expected {p.components} trajectories, got {len(ys)}")
    first = ys[0]
    for g in ys:
        if not g.same_grid(first):
            raise DimensionMismatchError("trajectories must share one grid")
    if not (math.isclose(first.a, p.a) and math.isclose(first.b, p.b)):
        raise DimensionMismatchError(f"trajectory lives on [{first.a}, {first.b}], problem on [{p.a}, {p.b}]")


def evaluate_trajectory(p: ProblemSpec, y, *, caputo_exponents: Sequence[float] | None = None) -> TrajectoryEval:
    """Compute the Caputo derivative, the fractional integral and ``z`` of *y*.

    *y* is a :class:`GridFunction` or, for two-component problems, a pair.
    Domain errors of ``l`` propagate with the offending node index.
    """
    ys = _as_tuple(y)
    _check_grid(p, ys)
    caputo = tuple(fracnum.left_caputo(g, p.alpha, caputo_exponents) for g in ys)
    frac_int = tuple(fracnum.left_rl_integral(g, p.beta) for g in ys)
    partial = TrajectoryEval(ys, caputo, frac_int, ys[0].like(0.0))
    env = partial.bindings(p.components, with_z=False)
    integrand = ys[0].like(p.l.evaluate(env))
    return TrajectoryEval(ys, caputo, frac_int, fracnum.cumulative_integral(integrand))


def lagrangian_values(p: ProblemSpec, te: TrajectoryEval, expr: Expression | None = None) -> np.ndarray:
    """Evaluate *expr* (default ``L``) along the trajectory."""
    expr = p.L if expr is None else expr
    return expr.evaluate(te.bindings(p.components))


def cost(p: ProblemSpec, y, te: TrajectoryEval | None = None) -> float:
    """Trapezoidal value of the cost functional at *y*."""
    if p.lagrange_form:
        raise ValueError("cost() takes variational problems; recast Lagrange problems first")
    te = evaluate_trajectory(p, y) if te is None else te
    return fracnum.integrate(te.grid.like(lagrangian_values(p, te)))


# {{{ fixtures


class Fixture(NamedTuple):
    spec: ProblemSpec
    minimizer: GridFunction
    exact: Callable[[np.ndarray], np.ndarray]


# source text of the fixtures; alpha is a parameter
FIXTURE_TEXT = {
    "example23": {
        "L": "(v - gamma(alpha + 2)*x)^2 + z",
        "l": "(y - x^(alpha + 1))^2",
        "exact": "x^(alpha + 1)",
        "yb": "1",
    },
    "example24": {
        "L": "(v - 1)^2 + z",
        "l": "(y - x^alpha/gamma(alpha + 1))^2",
        "exact": "x^alpha/gamma(alpha + 1)",
        "yb": "1/gamma(alpha + 1)",
    },
}


def _example23(alpha: float, n: int) -> Fixture:
    def exact(x):
        return np.asarray(x, dtype=float) ** (alpha + 1)

    text = FIXTURE_TEXT["example23"]
    p = ProblemSpec.from_text(
        text["L"],
        text["l"],
        alpha=alpha,
        boundary=BoundarySpec(ya=0.0, yb=1.0),
        name="example23",
    )
    return Fixture(p, GridFunction.sample(exact, 0.0, 1.0, n), exact)


def _ex24_exact(alpha: float):
    c = 1.0 / math.gamma(alpha + 1)

    def exact(x):
        return c * np.asarray(x, dtype=float) ** alpha

    return exact


def _example24(alpha: float, n: int) -> Fixture:
    exact = _ex24_exact(alpha)
    text = FIXTURE_TEXT["example24"]
    p = ProblemSpec.from_text(
        text["L"],
        text["l"],
        alpha=alpha,
        boundary=BoundarySpec(ya=0.0, yb=1.0 / math.gamma(alpha + 1)),
        name="example24",
    )
    return Fixture(p, GridFunction.sample(exact, 0.0, 1.0, n), exact)


def _example24_free(alpha: float, n: int) -> Fixture:
    spec, minimizer, exact = _example24(alpha, n)
    return Fixture(replace(spec, boundary=BoundarySpec(), name="example23_freeboundary"), minimizer, exact)


# example23_freeboundary drops the boundary data of the example24 functional;
# example34 is an alias under the worked-example number
FIXTURE_BASE = {"example23": "example23", "example24": "example24",
                "example23_freeboundary": "example24", "example34": "example24"}

FIXTURES: dict[str, Callable[[float, int], Fixture]] = {
    "example23": _example23,
    "example24": _example24,
    "example23_freeboundary": _example24_free,
    "example34": _example24_free,
}


def builtin_fixture(name: str, alpha: float = 0.5, n: int = DEFAULT_GRID) -> Fixture:
    """Problem spec, sampled closed-form minimizer and the minimizer itself."""
    try:
        factory = FIXTURES[name]
    except KeyError:
        raise FixtureError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
    return factory(alpha, n)

# }}}


def check_finite(values: np.ndarray, what: str) -> np.ndarray:
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise DomainError(f"{what} is not finite", int(np.flatnonzero(bad)[0]))
    return values
