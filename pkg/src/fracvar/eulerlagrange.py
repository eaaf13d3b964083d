r"""Necessary and sufficient optimality conditions evaluated as grid residuals.

The central quantity is the left-hand side of the fractional Euler-Lagrange
equation for a Lagrangian ``F`` (``L`` itself, or a multiplier combination):

.. math::

    \partial_y F + {}_xD_b^\alpha \partial_v F + {}_xI_b^\beta \partial_w F
    + T(x)\,\partial_y l + {}_xD_b^\alpha\big(T\,\partial_v l\big)
    + {}_xI_b^\beta\big(T\,\partial_w l\big),
    \qquad T(x) = \int_x^b \partial_z F\,dt .

Norms always skip ``margin`` nodes at each end of the grid, where the right
derivative of a function not vanishing at ``b`` is singular.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from . import fracnum
from .errors import (
    DimensionMismatchError,
    DomainError,
    SingularConstraintError,
    UnsupportedProblemError,
)
from .expr import Const, Expression, parse
from .fracnum import GridFunction
from .problems import (
    CONTROL_VARIABLES,
    ProblemSpec,
    TrajectoryEval,
    _names,
    evaluate_trajectory,
    lagrangian_values,
)

__all__ = [
    "Certificate",
    "DEFAULT_MARGIN",
    "DEFAULT_TOLERANCE",
    "IsoperimetricResult",
    "MultiplierFunction",
    "ResidualReport",
    "el_residual",
    "el_residual_vector",
    "hamiltonian_residuals",
    "holonomic_residual",
    "isoperimetric_residual",
    "sufficiency_certificate",
    "to_lagrange_form",
    "transversality_residuals",
]

DEFAULT_MARGIN = 2
DEFAULT_TOLERANCE = 5e-2


@dataclass(frozen=True, eq=False)
class ResidualReport:
    """A residual on the grid plus its interior norms and named endpoint quantities."""

    residual: GridFunction
    endpoint_terms: dict[str, float] = field(default_factory=dict)
    margin: int = DEFAULT_MARGIN
    terms: dict[str, GridFunction] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.margin < DEFAULT_MARGIN:
            raise ValueError(f"the interior margin must be at least {DEFAULT_MARGIN} nodes")
        if self.residual.n <= 2 * self.margin:
            raise ValueError("grid too small for the interior margin")

    @property
    def interior(self) -> np.ndarray:
        return self.residual.values[self.margin : self.residual.n - self.margin]

    @property
    def max(self) -> float:
        return float(np.max(np.abs(self.interior)))

    @property
    def l2(self) -> float:
        return float(np.sqrt(self.residual.h * np.sum(self.interior**2)))

    @property
    def norms(self) -> dict[str, float]:
        return {"max": self.max, "L2": self.l2}

    def within(self, tol: float) -> bool:
        return self.max <= tol

    def to_csv(self) -> str:
        return self.residual.to_csv(("x", "residual"))

    def summary_line(self) -> str:
        parts = [f"max={self.max!r}", f"L2={self.l2!r}"]
        parts += [f"{k}={v!r}" for k, v in sorted(self.endpoint_terms.items())]
        return ",".join(parts)


def _values(expr: Expression, env: dict[str, np.ndarray]) -> np.ndarray | None:
    """Values of *expr* on the grid, or ``None`` if it is structurally zero."""
    if isinstance(expr.root, Const) and expr.root.value == 0.0:
        return None
    return expr.evaluate(env)


def _components_residual(p: ProblemSpec, te: TrajectoryEval, F: Expression) -> list[dict[str, np.ndarray]]:
    """Euler-Lagrange terms of *F* for every trajectory component."""
    env = te.bindings(p.components)
    grid = te.grid
    n = grid.n
    zero = np.zeros(n)

    Fz = _values(F.diff("z"), env)
    tail = None if Fz is None else fracnum.tail_integral(grid.like(Fz)).values

    def right_d(vals):
        return zero if vals is None else fracnum.right_rl_derivative(grid.like(vals), p.alpha).values

    def right_i(vals):
        return zero if vals is None else fracnum.right_rl_integral(grid.like(vals), p.beta).values

    def with_tail(expr):
        if tail is None:
            return None
        vals = _values(expr, env)
        return None if vals is None else tail * vals

    out = []
    for yk, vk, wk in zip(_names("y", p.components), _names("v", p.components), _names("w", p.components)):
        Fy = _values(F.diff(yk), env)
        terms = {
            "dy": zero if Fy is None else Fy,
            "right_derivative_dv": right_d(_values(F.diff(vk), env)),
            "right_integral_dw": right_i(_values(F.diff(wk), env)),
            "tail_dly": zero if (t := with_tail(p.l.diff(yk))) is None else t,
            "right_derivative_tail_dlv": right_d(with_tail(p.l.diff(vk))),
            "right_integral_tail_dlw": right_i(with_tail(p.l.diff(wk))),
        }
        total = np.zeros(n)
        for v in terms.values():
            total = total + v
        terms["total"] = total
        out.append(terms)
    return out


def _report(grid: GridFunction, terms: dict[str, np.ndarray], margin: int, **endpoint) -> ResidualReport:
    parts = {k: grid.like(v) for k, v in terms.items() if k != "total"}
    return ResidualReport(grid.like(terms["total"], flagged=(grid.n - 1,)), dict(endpoint), margin, parts)


def el_residual(p: ProblemSpec, y: GridFunction, margin: int = DEFAULT_MARGIN,
                te: TrajectoryEval | None = None) -> ResidualReport:
    """Residual of the fractional Euler-Lagrange equation of ``p.L`` at *y*."""
    if p.components != 1:
        raise DimensionMismatchError("use el_residual_vector for multi-component problems")
    return el_residual_vector(p, [y], margin, te)[0]


def el_residual_vector(p: ProblemSpec, ys: Sequence[GridFunction], margin: int = DEFAULT_MARGIN,
                       te: TrajectoryEval | None = None) -> list[ResidualReport]:
    """One Euler-Lagrange residual per trajectory component, sharing one ``z``."""
    if len(ys) != p.components:
        raise DimensionMismatchError(f"expected {p.components} trajectories, got {len(ys)}")
    te = evaluate_trajectory(p, ys) if te is None else te
    return [_report(te.grid, t, margin) for t in _components_residual(p, te, p.L)]


def _restrict(p: ProblemSpec, y: GridFunction, T: float | None) -> tuple[ProblemSpec, GridFunction]:
    if T is None or T == p.b:
        return p, y
    if not p.a < T <= p.b:
        raise ValueError(f"terminal time {T} outside ({p.a}, {p.b}]")
    k = round((T - p.a) / y.h)
    if abs(y.x[k] - T) > 1e-9 * (p.b - p.a):
        raise ValueError(f"terminal time {T} is not a grid node")
    if k < 2 * DEFAULT_MARGIN + 1:
        raise ValueError("terminal time leaves too few grid nodes")
    return replace(p, b=float(y.x[k])), GridFunction(y.a, float(y.x[k]), y.values[: k + 1])


def transversality_residuals(p: ProblemSpec, y: GridFunction, T: float | None = None,
                             margin: int = DEFAULT_MARGIN) -> dict[str, float]:
    r"""Endpoint quantities of the natural boundary and free terminal time conditions.

    With :math:`\phi = \partial_v L + \int_x^T \partial_z L\,dt \cdot \partial_v l`
    and :math:`P = {}_xI_T^{1-\alpha}\phi`, the returned mapping holds

    ``initial``
        :math:`P` at node ``margin``, the discrete stand-in for the value at
        ``a`` (which is also reported as ``initial_exact``);
    ``terminal``
        :math:`P` at the last node before ``T``; it vanishes as the grid is
        refined and is bounded by ``terminal_bound``
        :math:`= \max|\phi|\,h^{1-\alpha}/\Gamma(2-\alpha)`;
    ``lagrangian_at_T``
        :math:`L[y](T)`, only when the terminal time is free.
    """
    if p.components != 1:
        raise DimensionMismatchError("transversality conditions are implemented for scalar problems")
    q, yq = _restrict(p, y, T)
    te = evaluate_trajectory(q, yq)
    env = te.bindings()
    grid = te.grid
    phi = np.zeros(grid.n)
    Lv = _values(q.L.diff("v"), env)
    if Lv is not None:
        phi = phi + Lv
    Lz = _values(q.L.diff("z"), env)
    lv = _values(q.l.diff("v"), env)
    if Lz is not None and lv is not None:
        phi = phi + fracnum.tail_integral(grid.like(Lz)).values * lv
    P = fracnum.right_rl_integral(grid.like(phi), 1.0 - q.alpha).values
    out = {
        "initial": float(P[margin]),
        "initial_exact": float(P[0]),
        "terminal": float(P[-2]),
        "terminal_bound": float(np.max(np.abs(phi)) * grid.h ** (1 - q.alpha) / math.gamma(2 - q.alpha)),
    }
    if p.boundary.terminal_time_free:
        out["lagrangian_at_T"] = float(lagrangian_values(q, te)[-1])
    return out


# {{{ isoperimetric problems


@dataclass(frozen=True, eq=False)
class IsoperimetricResult:
    lambda0: float
    lam: float
    residual_report: ResidualReport
    defect: float
    degenerate: bool = False
    message: str = ""


def isoperimetric_residual(p: ProblemSpec, y: GridFunction, mode: str = "normal",
                           margin: int = DEFAULT_MARGIN,
                           extremal_threshold: float = DEFAULT_TOLERANCE) -> IsoperimetricResult:
    r"""Multiplier rule for :math:`\int G = \gamma`, with :math:`K = \lambda_0 L - \lambda G`.

    The residual of ``K`` is affine in the multipliers. ``"normal"`` mode
    fixes :math:`\lambda_0 = 1` and picks the least squares :math:`\lambda`
    over the interior nodes; when the ``G`` residual is below
    *extremal_threshold* (``y`` is numerically an extremal of the
    constraint) the result is flagged ``degenerate``. ``"abnormal"`` mode
    minimizes over the unit circle and rescales so that
    :math:`\max(|\lambda_0|, |\lambda|) = 1`.
    """
    c = p.constraint
    if c is None or c.kind != "isoperimetric":
        raise UnsupportedProblemError("problem has no isoperimetric constraint")
    if p.components != 1:
        raise DimensionMismatchError("isoperimetric conditions are implemented for scalar problems")
    te = evaluate_trajectory(p, y)
    (RL,) = _components_residual(p, te, p.L)
    (RG,) = _components_residual(p, te, c.G)
    rl, rg = RL["total"], RG["total"]
    sl = slice(margin, y.n - margin)
    a, g = rl[sl], rg[sl]

    degenerate = False
    message = ""
    if mode == "normal":
        lam0 = 1.0
        gg = float(g @ g)
        lam = float(a @ g) / gg if gg > 0 else 0.0
        if np.max(np.abs(g)) <= extremal_threshold:
            degenerate = True
            message = "y is numerically an extremal of the constraint; lambda is not identifiable, use abnormal mode"
    elif mode == "abnormal":
        _, _, vt = np.linalg.svd(np.column_stack([a, -g]), full_matrices=False)
        lam0, lam = vt[-1]
        scale = max(abs(lam0), abs(lam))
        sign = -1.0 if (lam0 < 0 or (lam0 == 0 and lam < 0)) else 1.0
        lam0, lam = float(sign * lam0 / scale), float(sign * lam / scale)
    else:
        raise ValueError(f"unknown multiplier mode {mode!r}")

    terms = {"total": lam0 * rl - lam * rg}
    defect = abs(fracnum.integrate(te.grid.like(lagrangian_values(p, te, c.G))) - c.gamma_value)
    report = _report(te.grid, terms, margin, constraint_defect=defect)
    return IsoperimetricResult(lam0, lam, report, defect, degenerate, message)

# }}}


# {{{ holonomic constraints


@dataclass(frozen=True, eq=False)
class MultiplierFunction:
    lambda_of_x: GridFunction


def holonomic_residual(p: ProblemSpec, y1: GridFunction, y2: GridFunction,
                       margin: int = DEFAULT_MARGIN) -> tuple[MultiplierFunction, ResidualReport]:
    r"""Multiplier function and first-component residual for ``g(x, y1, y2) = 0``.

    :math:`\lambda(x)` is the second Euler-Lagrange expression divided by
    :math:`\partial g/\partial y_2`; the reported residual is the first
    component's equation for :math:`F = L - \lambda(x) g`. Because ``g``
    depends on ``x, y1, y2`` only, that equation is
    :math:`E_1 - \lambda\,\partial g/\partial y_1`. The second component's
    residual (zero by construction) and :math:`\max|g|` are reported as
    ``residual_2_max`` and ``constraint_defect``.
    """
    c = p.constraint
    if c is None or c.kind != "holonomic":
        raise UnsupportedProblemError("problem has no holonomic constraint")
    te = evaluate_trajectory(p, (y1, y2))
    env = te.bindings(2)
    n = y1.n
    g_y1 = np.broadcast_to(c.g.diff("y1").evaluate(env), (n,))
    g_y2 = np.broadcast_to(c.g.diff("y2").evaluate(env), (n,))
    scale = max(1.0, float(np.max(np.abs(g_y2))))
    singular = np.abs(g_y2) <= 1e-12 * scale
    if np.any(singular):
        raise SingularConstraintError("dg/dy2 vanishes", int(np.flatnonzero(singular)[0]))
    E1, E2 = (t["total"] for t in _components_residual(p, te, p.L))
    lam = E2 / g_y2
    res1 = E1 - lam * g_y1
    res2 = E2 - lam * g_y2
    defect = float(np.max(np.abs(np.broadcast_to(c.g.evaluate(env), (n,)))))
    report = _report(
        te.grid, {"total": res1}, margin,
        constraint_defect=defect,
        residual_2_max=float(np.max(np.abs(res2[margin : n - margin]))),
    )
    return MultiplierFunction(te.grid.like(lam)), report

# }}}


# {{{ Lagrange problems


def to_lagrange_form(p: ProblemSpec) -> ProblemSpec:
    r"""Recast a variational problem with the control :math:`u = {}^C_aD_x^\alpha y`."""
    if p.lagrange_form:
        return p
    if p.components != 1 or p.constraint is not None:
        raise UnsupportedProblemError("only unconstrained scalar problems can be recast")
    L = p.L.rename({"v": "u"}).with_variables(CONTROL_VARIABLES)
    return replace(p, L=L, control_rhs=parse("u", CONTROL_VARIABLES), name=p.name)


def hamiltonian_residuals(p: ProblemSpec, y: GridFunction, u: GridFunction,
                          p_costate: GridFunction, margin: int = DEFAULT_MARGIN) -> dict[str, ResidualReport]:
    r"""Defects of the Hamiltonian system for :math:`H = L + p f`.

    ``dynamics``
        :math:`{}^C_aD_x^\alpha y - \partial H/\partial p`;
    ``costate``
        :math:`{}_xD_b^\alpha p` minus
        :math:`\partial_y H + {}_xI_b^\beta \partial_w H + T\,\partial_y l
        + {}_xD_b^\alpha(T\,\partial_v l) + {}_xI_b^\beta(T\,\partial_w l)`,
        :math:`T = \int_x^b \partial_z H`;
    ``stationarity``
        :math:`\partial H/\partial u`.
    """
    if not p.lagrange_form:
        raise UnsupportedProblemError("missing control: problem is not in Lagrange form")
    if not (y.same_grid(u) and y.same_grid(p_costate)):
        raise DimensionMismatchError("y, u and p must share one grid")
    te = evaluate_trajectory(p, y)
    grid = te.grid
    n = grid.n
    env = {"x": grid.x, "y": y.values, "u": u.values, "w": te.frac_int_y.values, "z": te.z.values}
    pc = p_costate.values
    f = p.control_rhs

    def partial(name):
        Ld = _values(p.L.diff(name), env)
        fd = _values(f.diff(name), env)
        if Ld is None and fd is None:
            return None
        return (0.0 if Ld is None else Ld) + (0.0 if fd is None else pc * fd)

    zero = np.zeros(n)
    Hy, Hu, Hw, Hz = (partial(k) for k in ("y", "u", "w", "z"))
    lenv = te.bindings(with_z=False)
    tail = None if Hz is None else fracnum.tail_integral(grid.like(Hz)).values

    def with_tail(name):
        if tail is None:
            return None
        vals = _values(p.l.diff(name), lenv)
        return None if vals is None else tail * vals

    def right_d(vals):
        return zero if vals is None else fracnum.right_rl_derivative(grid.like(vals), p.alpha).values

    def right_i(vals):
        return zero if vals is None else fracnum.right_rl_integral(grid.like(vals), p.beta).values

    rhs = (
        (zero if Hy is None else Hy)
        + right_i(Hw)
        + (zero if (t := with_tail("y")) is None else t)
        + right_d(with_tail("v"))
        + right_i(with_tail("w"))
    )
    dynamics = te.caputo_y.values - np.broadcast_to(f.evaluate(env), (n,))
    costate = fracnum.right_rl_derivative(p_costate, p.alpha).values - rhs
    stationarity = zero if Hu is None else np.broadcast_to(Hu, (n,))
    return {
        "dynamics": ResidualReport(grid.like(dynamics, flagged=(0,)), {}, margin),
        "costate": ResidualReport(grid.like(costate, flagged=(n - 1,)), {}, margin),
        "stationarity": ResidualReport(grid.like(stationarity), {}, margin),
    }

# }}}


# {{{ sufficiency


class Certificate(str, enum.Enum):
    """Outcome of :func:`sufficiency_certificate`.

    The convexity hypotheses are only sampled, so a certificate means that no
    counterexample was found, not that convexity was proven.
    """

    CASE1 = "certified_case1"
    CASE2 = "certified_case2"
    INCONCLUSIVE = "inconclusive"


def _midpoint_test(expr: Expression, x, pts_p: dict, pts_q: dict, sense: float, tol: float) -> bool:
    mid = {k: 0.5 * (pts_p[k] + pts_q[k]) for k in pts_p}
    try:
        fp = expr.evaluate({"x": x, **pts_p})
        fq = expr.evaluate({"x": x, **pts_q})
        fm = expr.evaluate({"x": x, **mid})
    except DomainError:
        return False
    gap = sense * (0.5 * (fp + fq) - fm)
    return bool(np.all(gap >= -tol * (1.0 + np.abs(fp) + np.abs(fq))))


def sufficiency_certificate(p: ProblemSpec, y: GridFunction, samples: int = 200,
                            seed: int = 0, tol: float = 1e-10) -> Certificate:
    r"""Sampled check of the convexity hypotheses under which an extremal is a global minimizer.

    ``L`` must be midpoint convex in ``(y, v, w, z)`` and ``l`` convex
    (case 1, with :math:`\partial_z L[y] \ge 0`) or concave (case 2, with
    :math:`\partial_z L[y] \le 0`) in ``(y, v, w)``. Pairs of points are
    drawn in the box spanned by the trajectory's values, widened by 50%.
    When :math:`\partial_z L[y]` vanishes on the whole grid the hypothesis
    on ``l`` plays no role and case 1 is returned.
    """
    if samples < 100:
        raise ValueError("at least 100 samples are required")
    if p.components != 1 or p.lagrange_form:
        raise UnsupportedProblemError("the certificate is implemented for scalar variational problems")
    te = evaluate_trajectory(p, y)
    rng = np.random.default_rng(seed)
    columns = {"y": te.y.values, "v": te.caputo_y.values, "w": te.frac_int_y.values, "z": te.z.values}
    boxes = {}
    for k, vals in columns.items():
        lo, hi = float(np.min(vals)), float(np.max(vals))
        half = max(0.75 * (hi - lo), 1e-3 * (1.0 + abs(lo) + abs(hi)))
        mid = 0.5 * (lo + hi)
        boxes[k] = (mid - half, mid + half)

    x = rng.uniform(p.a, p.b, samples)

    def draw(keys):
        return {k: rng.uniform(*boxes[k], samples) for k in keys}

    L_pts = (draw("yvwz"), draw("yvwz"))
    l_pts = (draw("yvw"), draw("yvw"))
    if not _midpoint_test(p.L, x, *L_pts, 1.0, tol):
        return Certificate.INCONCLUSIVE

    Lz = np.broadcast_to(p.L.diff("z").evaluate(te.bindings()), (y.n,))
    if np.all(np.abs(Lz) <= tol):
        return Certificate.CASE1
    if np.all(Lz >= -tol) and _midpoint_test(p.l, x, *l_pts, 1.0, tol):
        return Certificate.CASE1
    if np.all(Lz <= tol) and _midpoint_test(p.l, x, *l_pts, -1.0, tol):
        return Certificate.CASE2
    return Certificate.INCONCLUSIVE

# }}}
