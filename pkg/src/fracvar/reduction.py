r"""Reduction of a fractional variational problem to a classical two-point BVP.

With :math:`u = {}^C_0D_x^\alpha y` (equal to the Riemann-Liouville
derivative because :math:`y(0) = 0`) the truncated moment expansion turns
the problem into optimal control of the states ``y, v_2..v_N, z``::

    y'   = -(A/B) y/x + sum_k (C_k/B) x^-k v_k + x^(alpha-1) u / B
    v_k' = (1 - k) x^(k-2) y
    z'   = l(x, y, u)

The Hamiltonian is taken as ``H = -L + p . (state rhs)``, costates obey
``p' = -dH/dstate`` and the control solves ``dH/du = 0``. This sign
convention makes the costates the negatives of those of ``H = L + p f``.
The left boundary is shifted to ``a_eff = 1e-4 (b - a)`` where the vector
field is singular.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import bvp
from .errors import ConvergenceError, UnsupportedProblemError
from .eulerlagrange import ResidualReport, el_residual, to_lagrange_form
from .expansion import ExpansionCoeffs, coeffs
from .expr import Const, Expression
from .fracnum import DEFAULT_GRID, GridFunction
from .problems import CONTROL_VARIABLES, ProblemSpec

__all__ = ["A_EFF_FRACTION", "ReducedSystem", "SolveReport", "reduce", "solve"]

log = logging.getLogger(__name__)

A_EFF_FRACTION = 1e-4
DEFAULT_N = 2
_CONTROL_NEWTON_ITERATIONS = 50


def _structurally_zero(e: Expression) -> bool:
    return isinstance(e.root, Const) and e.root.value == 0.0


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """The Hamiltonian boundary value problem of a reduced problem.

    ``rhs`` and ``control`` are vectorized like :class:`fracvar.bvp.BvpProblem`:
    nodes of shape ``(m,)``, states of shape ``(2(N+1), m)``.
    """

    N: int
    alpha: float
    coefficients: ExpansionCoeffs
    state_names: tuple[str, ...]
    rhs: Callable[[np.ndarray, np.ndarray], np.ndarray]
    boundary_residual: Callable[[np.ndarray, np.ndarray], np.ndarray]
    control: Callable[[np.ndarray, np.ndarray], np.ndarray]
    stationarity: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    a_eff: float
    b: float
    ya: float
    yb: float
    problem: ProblemSpec = field(repr=False)
    quadratic_in_u: bool = True

    @property
    def dimension(self) -> int:
        return len(self.state_names)

    def index(self, name: str) -> int:
        return self.state_names.index(name)


def _check_supported(p: ProblemSpec) -> None:
    if p.components != 1 or p.constraint is not None:
        raise UnsupportedProblemError("the reduction handles unconstrained scalar problems")
    if p.lagrange_form:
        raise UnsupportedProblemError("pass the variational form; the control is introduced by the reduction")
    if p.a != 0.0:
        raise UnsupportedProblemError("the reduction requires a = 0")
    if p.boundary.ya != 0.0 or p.boundary.yb is None:
        raise UnsupportedProblemError("the reduction requires y(0) = 0 and a prescribed y(b)")
    if p.boundary.terminal_time_free:
        raise UnsupportedProblemError("free terminal time is not part of the reduced pipeline")
    if p.L.depends_on("w") or p.l.depends_on("w"):
        raise UnsupportedProblemError("fractional-integral dependence (w) has no reduced state")


def reduce(p: ProblemSpec, N: int = DEFAULT_N) -> ReducedSystem:
    if int(N) != N or N < 2:
        raise ValueError(f"N={N} must be an integer >= 2")
    N = int(N)
    _check_supported(p)
    c = coeffs(p.alpha, N)
    A, B, C = c.A, c.B, c.C
    alpha = p.alpha
    ks = np.arange(2, N + 1)

    L = to_lagrange_form(p).L
    lu = p.l.rename({"v": "u"}).with_variables(CONTROL_VARIABLES)
    L_u, L_y, L_z = L.diff("u"), L.diff("y"), L.diff("z")
    l_u, l_y = lu.diff("u"), lu.diff("y")
    L_uu, l_uu = L_u.diff("u"), l_u.diff("u")
    if _structurally_zero(L_uu):
        raise UnsupportedProblemError("d2L/du2 vanishes identically; the control cannot be recovered")
    quadratic = not (L_uu.depends_on("u") or l_uu.depends_on("u"))

    nv = N - 1
    names = ("y", *(f"v{k}" for k in ks), "z", "p_y", *(f"p_v{k}" for k in ks), "p_z")
    iy, iz = 0, N
    ipy, ipz = N + 1, 2 * N + 1

    def env(x, S, u):
        return {"x": x, "y": S[iy], "u": u, "z": S[iz]}

    def stationarity(x, S, u):
        e = env(x, S, u)
        return -L_u.evaluate(e) + S[ipy] * x ** (alpha - 1) / B + S[ipz] * l_u.evaluate(e)

    def control(x, S):
        u = np.zeros_like(x, dtype=float)
        for _ in range(1 if quadratic else _CONTROL_NEWTON_ITERATIONS):
            e = env(x, S, u)
            g = stationarity(x, S, u)
            dg = -L_uu.evaluate(e) + S[ipz] * l_uu.evaluate(e)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(dg != 0, g / np.where(dg != 0, dg, 1.0), 0.0)
            u = u - step
            if not quadratic and np.all(np.abs(step) <= 1e-13 * (1 + np.abs(u))):
                break
        return u

    def rhs(x, S):
        x = np.asarray(x, dtype=float)
        u = control(x, S)
        e = env(x, S, u)
        y, v = S[iy], S[1 : 1 + nv]
        py, pv, pz = S[ipy], S[ipy + 1 : ipy + 1 + nv], S[ipz]
        xk = x[None, :] ** (-ks[:, None].astype(float))  # x^-k
        xk2 = x[None, :] ** (ks[:, None] - 2.0)  # x^(k-2)
        out = np.empty_like(S, dtype=float)
        out[iy] = -A / B * y / x + (C[:, None] / B * xk * v).sum(axis=0) + x ** (alpha - 1) * u / B
        out[1 : 1 + nv] = (1 - ks[:, None]) * xk2 * y
        out[iz] = lu.evaluate(e)
        dH_dy = -L_y.evaluate(e) - py * A / (B * x) + ((1 - ks[:, None]) * xk2 * pv).sum(axis=0) + pz * l_y.evaluate(e)
        out[ipy] = -dH_dy
        out[ipy + 1 : ipy + 1 + nv] = -py * (C[:, None] / B) * xk
        out[ipz] = L_z.evaluate(e)
        return out

    ya, yb = float(p.boundary.ya), float(p.boundary.yb)

    def boundary_residual(left, right):
        return np.concatenate([
            [left[iy] - ya], left[1 : 1 + nv], [left[iz]],
            [right[iy] - yb], right[ipy + 1 : ipy + 1 + nv], [right[ipz]],
        ])

    a_eff = A_EFF_FRACTION * (p.b - p.a)
    return ReducedSystem(N, alpha, c, names, rhs, boundary_residual, control, stationarity,
                         a_eff, p.b, ya, yb, p, quadratic)


@dataclass(frozen=True, eq=False)
class SolveReport:
    y: GridFunction
    u: GridFunction
    J_tilde: float
    el_residual_norm: float
    iterations: int
    converged: bool
    solution: bvp.BvpSolution = field(repr=False)
    system: ReducedSystem = field(repr=False)
    el_report: ResidualReport | None = field(default=None, repr=False)
    stationarity_max: float = 0.0
    message: str = ""

    def costate(self, name: str) -> np.ndarray:
        """Mesh values of a state or costate by name."""
        return self.solution.y[self.system.index(name)]

    def summary(self) -> dict:
        return {
            "J_tilde": self.J_tilde,
            "el_residual_max": self.el_residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "mesh_intervals": self.solution.n_intervals,
            "max_defect": self.solution.max_defect,
            "bc_norm": self.solution.bc_norm,
            "stationarity_max": self.stationarity_max,
        }


def solve(p: ProblemSpec, N: int = DEFAULT_N, grid: int = DEFAULT_GRID, *, tol: float = 1e-6,
          n_intervals: int = 64, adapt: bool = True, mesh: np.ndarray | None = None,
          raise_on_failure: bool = True) -> SolveReport:
    """Reduce, solve the boundary value problem and map the result back.

    ``y`` and ``u`` are returned on the uniform ``grid``-node grid of
    ``[a, b]``; nodes left of ``a_eff`` take the values at ``a_eff`` and
    node 0 of ``u`` is flagged. ``J_tilde`` is Simpson's rule for ``L`` on
    the solver mesh. Non-convergence raises :class:`ConvergenceError` with
    the report attached unless *raise_on_failure* is false.
    """
    rs = reduce(p, N)
    guess_a = [rs.ya] + [0.0] * (rs.dimension - 1)
    guess_b = [rs.yb] + [0.0] * (rs.dimension - 1)
    problem = bvp.BvpProblem(
        rs.dimension, rs.rhs, rs.boundary_residual, rs.a_eff, rs.b,
        n_intervals=n_intervals, guess=bvp.initial_guess_linear(guess_a, guess_b, rs.a_eff, rs.b),
    )
    sol = bvp.solve(problem, tol, adapt=adapt, mesh=mesh)

    xm = sol.x
    um = rs.control(xm, sol.y)
    Lm = to_lagrange_form(p).L.evaluate({"x": xm, "y": sol.y[0], "u": um, "z": sol.y[rs.index("z")]})
    J_tilde = float(simpson(np.broadcast_to(Lm, xm.shape), x=xm))
    stat = float(np.max(np.abs(rs.stationarity(xm, sol.y, um))))

    x = np.linspace(p.a, p.b, grid)
    xs = np.maximum(x, rs.a_eff)
    S = sol.sol(xs)
    y = GridFunction(p.a, p.b, S[0])
    u = GridFunction(p.a, p.b, rs.control(xs, S), flagged=(0,))
    el = el_residual(p, y)
    report = SolveReport(y, u, J_tilde, el.max, sol.iterations, sol.converged, sol, rs, el, stat, sol.message)
    log.info("N=%d: converged=%s on %d intervals, J~=%.3e", N, sol.converged, sol.n_intervals, J_tilde)
    if not sol.converged and raise_on_failure:
        raise ConvergenceError(f"boundary value solver failed: {sol.message}", report)
    return report
