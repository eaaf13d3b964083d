"""Two-point boundary value problems by three-stage Lobatto IIIA collocation.

The discrete unknowns are the states at the mesh nodes. On each interval the
collocation polynomial is the cubic Hermite interpolant of the nodal values
and slopes; requiring it to match the vector field at the midpoint as well
gives Simpson's rule with the Hermite midpoint value

    y_mid = (y_i + y_{i+1})/2 - h/8 (f_{i+1} - f_i),
    0 = y_{i+1} - y_i - h/6 (f_i + 4 f(x_mid, y_mid) + f_{i+1}).

The global system is solved by damped Newton with a finite difference
Jacobian of the vector field; the mesh is refined where the relative defect
of the interpolant exceeds the tolerance.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicHermiteSpline
from scipy.sparse.linalg import splu

__all__ = ["BvpProblem", "BvpSolution", "bisect_mesh", "initial_guess_linear", "solve"]

log = logging.getLogger(__name__)

Rhs = Callable[[np.ndarray, np.ndarray], np.ndarray]
BoundaryResidual = Callable[[np.ndarray, np.ndarray], np.ndarray]

# extrema of the leading defect term t(t - 1/2)(t - 1) plus a spread of
# other off-collocation points
_DEFECT_FRACTIONS = np.array([0.1, 0.2113248654051871, 0.3, 0.4, 0.6, 0.7, 0.7886751345948129, 0.9])
_ARMIJO = 1e-4
_DAMPING_FLOOR = 2.0**-10


@dataclass(frozen=True)
class BvpProblem:
    """``y' = rhs(x, y)`` on ``[a, b]`` with ``boundary_residual(y(a), y(b)) = 0``.

    ``rhs`` is vectorized: it receives nodes of shape ``(m,)`` and states of
    shape ``(d, m)`` and returns shape ``(d, m)``. ``guess`` maps nodes to
    states in the same layout.
    """

    dimension: int
    rhs: Rhs
    boundary_residual: BoundaryResidual
    a: float
    b: float
    n_intervals: int = 64
    guess: Callable[[np.ndarray], np.ndarray] | None = None
    max_intervals: int = 2048

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if not self.a < self.b:
            raise ValueError(f"invalid interval [{self.a}, {self.b}]")
        if self.n_intervals < 1 or self.max_intervals < self.n_intervals:
            raise ValueError("invalid mesh sizes")


@dataclass(frozen=True, eq=False)
class BvpSolution:
    x: np.ndarray
    y: np.ndarray
    yp: np.ndarray
    bc_norm: float
    max_defect: float
    iterations: int
    converged: bool
    message: str = ""
    defects: np.ndarray = field(default=None, repr=False)

    def sol(self, xq) -> np.ndarray:
        """Cubic Hermite interpolant of the solution, shape ``(d, len(xq))``."""
        return CubicHermiteSpline(self.x, self.y, self.yp, axis=1)(np.asarray(xq, dtype=float))

    @property
    def n_intervals(self) -> int:
        return self.x.size - 1


def initial_guess_linear(ya_values: Sequence[float | None] | None, yb_values: Sequence[float | None] | None,
                         a: float = 0.0, b: float = 1.0,
                         dimension: int | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Componentwise linear interpolation between endpoint hints.

    A missing hint (``None``, or no hint sequence at all) counts as 0.
    """
    d = dimension
    for hints in (ya_values, yb_values):
        if hints is not None:
            d = len(hints) if d is None else d
            if len(hints) != d:
                raise ValueError("hint sequences must match the dimension")
    if d is None:
        raise ValueError("dimension is required without hints")

    def vec(hints):
        if hints is None:
            return np.zeros(d)
        return np.array([0.0 if v is None else float(v) for v in hints])

    left, right = vec(ya_values), vec(yb_values)

    def guess(x):
        t = (np.asarray(x, dtype=float) - a) / (b - a)
        return left[:, None] * (1 - t) + right[:, None] * t

    return guess


def bisect_mesh(x: np.ndarray) -> np.ndarray:
    """Split every interval of *x* in half."""
    x = np.asarray(x, dtype=float)
    out = np.empty(2 * x.size - 1)
    out[::2] = x
    out[1::2] = 0.5 * (x[:-1] + x[1:])
    return out


def _rhs(problem: BvpProblem, x: np.ndarray, Y: np.ndarray) -> np.ndarray:
    F = np.asarray(problem.rhs(x, Y), dtype=float)
    if F.shape != Y.shape:
        raise ValueError(f"rhs returned shape {F.shape}, expected {Y.shape}")
    return F


def _fd_jacobian(problem: BvpProblem, x: np.ndarray, Y: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Forward differences, shape ``(m, d, d)`` with ``J[i, r, c] = df_r/dy_c``."""
    d, m = Y.shape
    J = np.empty((m, d, d))
    step = np.sqrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(Y))
    for c in range(d):
        Yp = Y.copy()
        Yp[c] += step[c]
        J[:, :, c] = ((_rhs(problem, x, Yp) - F) / step[c]).T
    return J


def _bc_jacobian(problem: BvpProblem, ya: np.ndarray, yb: np.ndarray, r0: np.ndarray):
    d = ya.size
    Ja, Jb = np.empty((d, d)), np.empty((d, d))
    for target, J in ((ya, Ja), (yb, Jb)):
        for c in range(d):
            s = np.sqrt(np.finfo(float).eps) * max(1.0, abs(target[c]))
            saved = target[c]
            target[c] = saved + s
            J[:, c] = (np.asarray(problem.boundary_residual(ya, yb), dtype=float) - r0) / s
            target[c] = saved
    return Ja, Jb


def _midpoints(x, Y, F):
    h = np.diff(x)
    xm = x[:-1] + h / 2
    Ym = 0.5 * (Y[:, :-1] + Y[:, 1:]) - h / 8 * (F[:, 1:] - F[:, :-1])
    return h, xm, Ym


def _residual(problem: BvpProblem, x: np.ndarray, Y: np.ndarray):
    F = _rhs(problem, x, Y)
    h, xm, Ym = _midpoints(x, Y, F)
    Fm = _rhs(problem, xm, Ym)
    col = Y[:, 1:] - Y[:, :-1] - h / 6 * (F[:, :-1] + 4 * Fm + F[:, 1:])
    bc = np.asarray(problem.boundary_residual(Y[:, 0].copy(), Y[:, -1].copy()), dtype=float)
    if bc.shape != (Y.shape[0],):
        raise ValueError(f"boundary residual has shape {bc.shape}, expected ({Y.shape[0]},)")
    return np.concatenate([bc, col.T.ravel()]), (F, h, xm, Ym, Fm, bc)


def _jacobian(problem: BvpProblem, x, Y, parts) -> sp.csc_matrix:
    F, h, xm, Ym, Fm, bc = parts
    d, n = Y.shape
    m = n - 1
    Jn = _fd_jacobian(problem, x, Y, F)
    Jm = _fd_jacobian(problem, xm, Ym, Fm)
    eye = np.eye(d)
    hh = h[:, None, None]
    dmid_left = 0.5 * eye + hh / 8 * Jn[:-1]
    dmid_right = 0.5 * eye - hh / 8 * Jn[1:]
    left = -eye - hh / 6 * (Jn[:-1] + 4 * Jm @ dmid_left)
    right = eye - hh / 6 * (Jn[1:] + 4 * Jm @ dmid_right)
    Ja, Jb = _bc_jacobian(problem, Y[:, 0].copy(), Y[:, -1].copy(), bc)

    r_local, c_local = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    rows, cols, vals = [], [], []

    def put(block_rows, block_cols, blocks):
        rows.append((block_rows[:, None, None] + r_local).ravel())
        cols.append((block_cols[:, None, None] + c_local).ravel())
        vals.append(blocks.ravel())

    zero = np.array([0])
    put(zero, zero, Ja[None])
    put(zero, np.array([m * d]), Jb[None])
    i = np.arange(m)
    put(d + i * d, i * d, left)
    put(d + i * d, (i + 1) * d, right)
    size = d * n
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size))


def _defects(problem: BvpProblem, x, Y, F) -> np.ndarray:
    """Largest relative defect ``|S' - f(x, S)| / (1 + |f|)`` on every interval."""
    y0, y1, f0, f1 = Y[:, :-1], Y[:, 1:], F[:, :-1], F[:, 1:]
    h = np.diff(x)
    worst = np.zeros(h.size)
    for t in _DEFECT_FRACTIONS:
        # cubic Hermite basis values and derivatives at fraction t
        h00, h10, h01, h11 = 2 * t**3 - 3 * t**2 + 1, t**3 - 2 * t**2 + t, -2 * t**3 + 3 * t**2, t**3 - t**2
        d00, d10, d01, d11 = 6 * t**2 - 6 * t, 3 * t**2 - 4 * t + 1, -6 * t**2 + 6 * t, 3 * t**2 - 2 * t
        S = h00 * y0 + h * h10 * f0 + h01 * y1 + h * h11 * f1
        dS = (d00 * y0 + d01 * y1) / h + d10 * f0 + d11 * f1
        fS = _rhs(problem, x[:-1] + t * h, S)
        rel = np.max(np.abs(dS - fS) / (1.0 + np.abs(fS)), axis=0)
        worst = np.maximum(worst, rel)
    return worst


def _newton(problem: BvpProblem, x, Y, max_iter: int, newton_tol: float):
    """Damped Newton on the collocation system. Returns ``(Y, iterations, ok, message)``."""
    R, parts = _residual(problem, x, Y)
    phi = float(R @ R)
    for it in range(1, max_iter + 1):
        J = _jacobian(problem, x, Y, parts)
        try:
            with np.errstate(all="ignore"):
                step = splu(J).solve(-R)
        except RuntimeError as exc:
            return Y, it, False, f"singular Jacobian on {x.size - 1} intervals ({exc})"
        if not np.all(np.isfinite(step)):
            return Y, it, False, f"singular Jacobian on {x.size - 1} intervals"
        dY = step.reshape(-1, Y.shape[0]).T
        lam = 1.0
        while True:
            trial = Y + lam * dY
            try:
                with np.errstate(all="ignore"):
                    Rt, parts_t = _residual(problem, x, trial)
                phi_t = float(Rt @ Rt) if np.all(np.isfinite(Rt)) else np.inf
            except (ArithmeticError, ValueError):
                phi_t = np.inf
            if phi_t <= (1 - 2 * _ARMIJO * lam) * phi or phi_t <= 1e-28:
                break
            lam /= 2
            if lam < _DAMPING_FLOOR:
                return Y, it, False, f"damping floor {_DAMPING_FLOOR} reached on {x.size - 1} intervals"
        Y, R, parts, phi = trial, Rt, parts_t, phi_t
        if lam == 1.0 and np.max(np.abs(dY)) <= newton_tol * (1.0 + np.max(np.abs(Y))):
            return Y, it, True, ""
        if np.max(np.abs(R)) <= 1e-14 * (1.0 + np.max(np.abs(Y))):
            return Y, it, True, ""
    return Y, max_iter, False, f"no Newton convergence in {max_iter} iterations"


def _refine(x: np.ndarray, defects: np.ndarray, tol: float) -> np.ndarray:
    pieces = [x[:1]]
    for i, dfc in enumerate(defects):
        k = 1 if dfc <= tol else (3 if dfc > 100 * tol else 2)
        pieces.append(np.linspace(x[i], x[i + 1], k + 1)[1:])
    return np.concatenate(pieces)


def solve(problem: BvpProblem, tol: float = 1e-6, *, max_newton: int = 50, adapt: bool = True,
          mesh: np.ndarray | None = None, newton_tol: float = 1e-10) -> BvpSolution:
    """Solve *problem*; ``converged`` implies defect and boundary norm within *tol*.

    With ``adapt=False`` the initial mesh is kept, which is what convergence
    order studies need. Failures are reported through ``converged=False``
    and ``message`` together with the last iterate.
    """
    d = problem.dimension
    x = np.linspace(problem.a, problem.b, problem.n_intervals + 1) if mesh is None else np.asarray(mesh, float)
    guess = problem.guess or initial_guess_linear(None, None, problem.a, problem.b, d)
    Y = np.array(guess(x), dtype=float).reshape(d, x.size)
    total = 0
    while True:
        Y, its, ok, message = _newton(problem, x, Y, max_newton, newton_tol)
        total += its
        F = _rhs(problem, x, Y)
        defects = _defects(problem, x, Y, F)
        bc_norm = float(np.max(np.abs(problem.boundary_residual(Y[:, 0].copy(), Y[:, -1].copy()))))
        max_defect = float(np.max(defects))
        log.debug("%d intervals: newton ok=%s, defect %.3e, bc %.3e", x.size - 1, ok, max_defect, bc_norm)
        done = ok and max_defect <= tol and bc_norm <= tol
        if done or not ok or not adapt:
            break
        new_x = _refine(x, defects, tol)
        if new_x.size - 1 > problem.max_intervals:
            message = f"mesh limit {problem.max_intervals} reached with defect {max_defect:.3e}"
            break
        spline = CubicHermiteSpline(x, Y, F, axis=1)
        x, Y = new_x, spline(new_x)
    if ok and not done and not message:
        message = f"defect {max_defect:.3e} or boundary residual {bc_norm:.3e} above tolerance {tol}"
    return BvpSolution(x, Y, F, bc_norm, max_defect, total, done, message, defects)
