r"""Fractional integrals and derivatives of functions sampled on uniform grids.

All operators use product integration: the sampled function is replaced by
a piecewise polynomial and the weakly singular kernel :math:`(x - t)^{\beta-1}`
is integrated exactly on every panel. Convolution sums are evaluated with
FFTs, so every operator costs :math:`O(n \log n)`.

Notation follows the usual conventions:

.. math::

    {}_aI_x^\beta f(x) = \frac{1}{\Gamma(\beta)} \int_a^x (x - t)^{\beta - 1} f(t) \,dt,
    \qquad
    {}_xI_b^\beta f(x) = \frac{1}{\Gamma(\beta)} \int_x^b (t - x)^{\beta - 1} f(t) \,dt,

with the left Caputo derivative :math:`{}^C_aD_x^\alpha f = {}_aI_x^{1-\alpha} f'`
and the right Riemann-Liouville derivative
:math:`{}_xD_b^\alpha f = -\frac{d}{dx}\, {}_xI_b^{1-\alpha} f`.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from .errors import GammaPoleError

__all__ = [
    "DEFAULT_GRID",
    "FractionalOrder",
    "GridFunction",
    "cumulative_integral",
    "gamma",
    "integrate",
    "left_caputo",
    "left_rl_integral",
    "right_rl_derivative",
    "right_rl_integral",
    "tail_integral",
]

DEFAULT_GRID = 2049


def gamma(x: float) -> float:
    """The Gamma function; raises :class:`GammaPoleError` at its poles."""
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise GammaPoleError(f"Gamma has a pole at {x:g}")
    return math.gamma(x)


@dataclass(frozen=True)
class FractionalOrder:
    """A validated order: ``derivative`` orders lie in (0, 1), ``integral`` orders are positive."""

    value: float
    kind: str = "derivative"

    def __post_init__(self) -> None:
        v = float(self.value)
        if self.kind == "derivative":
            if not 0.0 < v < 1.0:
                raise ValueError(f"derivative order must lie in (0, 1), got {v}")
        elif self.kind == "integral":
            if not v > 0.0 or not math.isfinite(v):
                raise ValueError(f"integral order must be positive, got {v}")
        else:
            raise ValueError(f"unknown order kind {self.kind!r}")
        object.__setattr__(self, "value", v)

    def __float__(self) -> float:
        return self.value


def _order(value, kind: str) -> float:
    if isinstance(value, FractionalOrder):
        if value.kind != kind:
            return FractionalOrder(value.value, kind).value
        return value.value
    return FractionalOrder(value, kind).value


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a function at ``n`` uniform nodes of ``[a, b]``.

    ``flagged`` lists node indices whose values come from an endpoint where
    the underlying formula is singular; they are computed but should not be
    trusted, and they are the only nodes allowed to hold NaN.
    """

    a: float
    b: float
    values: np.ndarray
    flagged: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("a grid function needs at least two samples")
        if not self.a < self.b:
            raise ValueError(f"invalid interval [{self.a}, {self.b}]")
        finite = np.isfinite(values)
        finite[[i for i in self.flagged if 0 <= i < values.size]] = True
        if not np.all(finite):
            bad = int(np.flatnonzero(~finite)[0])
            raise ValueError(f"non-finite sample at node {bad}")
        values.setflags(write=False)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "flagged", tuple(sorted(set(self.flagged))))

    @classmethod
    def sample(cls, func: Callable[[np.ndarray], np.ndarray], a: float, b: float,
               n: int = DEFAULT_GRID) -> GridFunction:
        x = np.linspace(a, b, n)
        return cls(a, b, np.broadcast_to(np.asarray(func(x), dtype=float), x.shape))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.n)

    def like(self, values, flagged: Sequence[int] = ()) -> GridFunction:
        """A grid function on the same grid with new *values*."""
        return GridFunction(self.a, self.b, np.broadcast_to(values, (self.n,)), tuple(flagged))

    def same_grid(self, other: GridFunction) -> bool:
        return self.n == other.n and self.a == other.a and self.b == other.b

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridFunction):
            return NotImplemented
        return self.same_grid(other) and np.array_equal(self.values, other.values)

    __hash__ = None

    def to_csv(self, header: tuple[str, str] = ("x", "value")) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for xi, vi in zip(self.x, self.values):
            writer.writerow((repr(float(xi)), repr(float(vi))))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, column: int = 1) -> GridFunction:
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        try:
            data = np.array([[float(c) for c in r] for r in rows[1:]])
        except ValueError as exc:
            raise ValueError(f"malformed grid CSV: {exc}") from None
        if data.ndim != 2 or data.shape[0] < 2:
            raise ValueError("grid CSV needs a header and at least two rows")
        x = data[:, 0]
        if not np.allclose(np.diff(x), (x[-1] - x[0]) / (x.size - 1), rtol=1e-8, atol=1e-12):
            raise ValueError("grid CSV nodes are not uniformly spaced")
        return cls(x[0], x[-1], data[:, column])


# {{{ quadrature helpers


def integrate(f: GridFunction) -> float:
    """Trapezoidal integral of *f* over its whole interval."""
    return float(np.trapezoid(f.values, dx=f.h))


def cumulative_integral(f: GridFunction) -> GridFunction:
    r""":math:`\int_a^{x_i} f` by the cumulative trapezoidal rule; zero at ``a``."""
    v = f.values
    out = np.concatenate(([0.0], np.cumsum(0.5 * f.h * (v[1:] + v[:-1]))))
    return f.like(out)


def tail_integral(f: GridFunction) -> GridFunction:
    r""":math:`\int_{x_i}^b f` by the reverse cumulative trapezoidal rule; zero at ``b``."""
    v = f.values[::-1]
    out = np.concatenate(([0.0], np.cumsum(0.5 * f.h * (v[1:] + v[:-1]))))
    return f.like(out[::-1])

# }}}


# {{{ Riemann-Liouville integrals


@lru_cache(maxsize=64)
def _trapezoid_weights(n: int, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit-spacing product trapezoidal weights for the left integral.

    Returns the Toeplitz weights ``w[m]`` applied to ``f[j - m]`` (``m < j``)
    and the separate weights ``w0[j]`` of the first sample ``f[0]``.
    """
    m = np.arange(n, dtype=float)
    w = np.empty(n)
    w[0] = 1.0
    w[1:] = (m[1:] + 1) ** (beta + 1) - 2 * m[1:] ** (beta + 1) + (m[1:] - 1) ** (beta + 1)
    w0 = np.zeros(n)
    w0[1:] = (m[1:] - 1) ** (beta + 1) - (m[1:] - 1 - beta) * m[1:] ** beta
    w /= math.gamma(beta + 2)
    w0 /= math.gamma(beta + 2)
    w.setflags(write=False)
    w0.setflags(write=False)
    return w, w0


def _left_integral_values(v: np.ndarray, h: float, beta: float) -> np.ndarray:
    n = v.size
    w, w0 = _trapezoid_weights(n, beta)
    tail = v.copy()
    tail[0] = 0.0
    out = fftconvolve(tail, w)[:n] + w0 * v[0]
    out[0] = 0.0
    return out * h**beta


def left_rl_integral(f: GridFunction, beta) -> GridFunction:
    r"""Left Riemann-Liouville integral :math:`{}_aI_x^\beta f` at every node.

    *f* is interpolated piecewise linearly and the kernel is integrated
    exactly, so the result is exact for linear *f*; the value at ``a`` is 0.
    """
    beta = _order(beta, "integral")
    return f.like(_left_integral_values(f.values, f.h, beta))


def right_rl_integral(f: GridFunction, beta) -> GridFunction:
    r"""Right Riemann-Liouville integral :math:`{}_xI_b^\beta f`; zero at ``b``."""
    beta = _order(beta, "integral")
    return f.like(_left_integral_values(f.values[::-1], f.h, beta)[::-1])

# }}}


# {{{ Caputo derivative


@lru_cache(maxsize=64)
def _l1_weights(n: int, alpha: float) -> np.ndarray:
    m = np.arange(1, n, dtype=float)
    b = m ** (1 - alpha) - (m - 1) ** (1 - alpha)
    b /= math.gamma(2 - alpha)
    b.setflags(write=False)
    return b


def _l1(v: np.ndarray, alpha: float) -> np.ndarray:
    """Unit-spacing product rule for the piecewise constant derivative."""
    n = v.size
    out = np.zeros(n)
    out[1:] = fftconvolve(np.diff(v), _l1_weights(n, alpha))[: n - 1]
    return out


def _power_caputo(t: np.ndarray, s: float, alpha: float) -> np.ndarray:
    return math.gamma(s + 1) / math.gamma(s + 1 - alpha) * t ** (s - alpha)


@lru_cache(maxsize=64)
def _starting_weights(n: int, alpha: float, exponents: tuple[float, ...]) -> np.ndarray:
    """Unit-spacing correction weights applied to the first samples.

    Row ``k`` multiplies ``f[k]``. They make the corrected rule exact for
    ``1``, ``t`` and ``t**s`` for every ``s`` in *exponents*, which removes
    the O(1) errors the plain rule makes near ``a`` on functions behaving
    like ``(x - a)**s`` there.
    """
    basis = (0.0, 1.0) + exponents
    m = len(basis)
    t = np.arange(n, dtype=float)
    M = np.array([[tk**s if s else 1.0 for tk in t[:m]] for s in basis])
    E = np.zeros((m, n))
    for i, s in enumerate(basis[2:], start=2):
        E[i, 1:] = _power_caputo(t[1:], s, alpha) - _l1(t**s, alpha)[1:]
    W = np.linalg.solve(M, E)
    W.setflags(write=False)
    return W


def left_caputo(f: GridFunction, alpha, singular_exponents: Sequence[float] | None = None) -> GridFunction:
    r"""Left Caputo derivative :math:`{}^C_aD_x^\alpha f` at every node.

    The derivative of the piecewise linear interpolant of *f* (forward
    differences, constant on each panel) is integrated against the kernel
    :math:`(x - t)^{-\alpha} / \Gamma(1 - \alpha)` exactly on every panel,
    giving a rule that is exact for linear *f* and annihilates constants.

    Starting weights on the first few samples additionally make the rule
    exact for :math:`(x - a)^s`, ``s`` in *singular_exponents* (default
    ``(alpha,)``, the exponent of the typical weak singularity of solutions
    of Caputo problems). Pass ``()`` to disable the correction.

    The value at ``a`` is the limit of the local model fitted to the first
    samples: :math:`\Gamma(\alpha+1)c` when the correction includes
    ``s = alpha`` and ``c`` is that term's coefficient, else 0. It is
    flagged because it rests on that model.
    """
    alpha = _order(alpha, "derivative")
    if singular_exponents is None:
        singular_exponents = (alpha,)
    exps = tuple(sorted({float(s) for s in singular_exponents if s > 0 and float(s) != 1.0}))
    v = f.values
    out = _l1(v, alpha)
    if exps and f.n > len(exps) + 2:
        W = _starting_weights(f.n, alpha, exps)
        out = out + v[: W.shape[0]] @ W
        if alpha in exps:
            m = W.shape[0]
            basis = (0.0, 1.0) + exps
            t = np.arange(m, dtype=float)
            M = np.array([[tk**s if s else 1.0 for tk in t] for s in basis])
            coef = np.linalg.solve(M.T, v[:m])
            out[0] = math.gamma(alpha + 1) * coef[2 + exps.index(alpha)]
    return f.like(out * f.h ** (-alpha), flagged=(0,))

# }}}


def right_rl_derivative(f: GridFunction, alpha) -> GridFunction:
    r"""Right Riemann-Liouville derivative :math:`{}_xD_b^\alpha f`.

    Computed as minus the derivative of :math:`{}_xI_b^{1-\alpha} f`, using
    second order central differences inside and one-sided differences at
    the ends. The value at ``b`` is flagged: it behaves like
    :math:`(b - x)^{-\alpha}` unless ``f(b) = 0``.
    """
    alpha = _order(alpha, "derivative")
    J = _left_integral_values(f.values[::-1], f.h, 1.0 - alpha)[::-1]
    return f.like(-np.gradient(J, f.h, edge_order=2), flagged=(f.n - 1,))
