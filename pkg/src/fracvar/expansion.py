r"""Truncated moment expansion of the left Riemann-Liouville derivative at 0.

For :math:`f(0) = 0` and :math:`0 < \alpha < 1`,

.. math::

    {}_0D_x^\alpha f(x) \approx A(\alpha, N) x^{-\alpha} f(x)
    + B(\alpha, N) x^{1-\alpha} f'(x)
    - \sum_{k=2}^N C(k, \alpha) x^{1-k-\alpha} v_k(x),

with moments :math:`v_k(x) = (1 - k)\int_0^x t^{k-2} f(t)\,dt`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.special import gammaln, rgamma

from .errors import BasePointError
from .fracnum import GridFunction

__all__ = [
    "ExpansionCoeffs",
    "PRINTED_TABLE1",
    "TABLE1_ALPHAS",
    "TABLE1_NS",
    "approximate_derivative",
    "coeffs",
    "moments",
    "series_partial_sum",
    "table1",
    "table1_csv",
    "table1_mismatches",
]

TABLE1_ALPHAS = (0.3, 0.5, 0.7, 0.9)
TABLE1_NS = (4, 7, 15, 30, 70, 120, 170)

# printed values, rows follow TABLE1_ALPHAS and columns TABLE1_NS
PRINTED_TABLE1 = np.array([
    [0.1357, 0.0928, 0.0549, 0.0339, 0.0188, 0.0129, 0.0101],
    [0.3085, 0.2364, 0.1630, 0.1157, 0.0760, 0.0581, 0.0488],
    [0.5519, 0.4717, 0.3783, 0.3083, 0.2396, 0.2040, 0.1838],
    [0.8470, 0.8046, 0.7481, 0.6990, 0.6428, 0.6092, 0.5884],
])
PRINTED_TABLE1.setflags(write=False)


def _ratio(k: np.ndarray, alpha: float, shift: int) -> np.ndarray:
    """``Gamma(k - 1 + alpha) / (k - shift)!`` without overflow."""
    return np.exp(gammaln(k - 1 + alpha) - gammaln(k - shift + 1))


@dataclass(frozen=True, eq=False)
class ExpansionCoeffs:
    alpha: float
    N: int
    A: float
    B: float
    C: np.ndarray  # C[k - 2] = C(k, alpha), k = 2..N

    def c(self, k: int) -> float:
        if not 2 <= k <= self.N:
            raise IndexError(f"C({k}) outside 2..{self.N}")
        return float(self.C[k - 2])


def coeffs(alpha: float, N: int) -> ExpansionCoeffs:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha={alpha} outside (0, 1]")
    if int(N) != N or N < 2:
        raise ValueError(f"N={N} must be an integer >= 2")
    N = int(N)
    g2 = math.gamma(2 - alpha)
    rg = float(rgamma(alpha - 1))  # 1/Gamma(alpha - 1), zero at alpha = 1
    C = _ratio(np.arange(2, N + 1, dtype=float), alpha, 1) * rg / g2
    A = float(rgamma(1 - alpha)) - float(np.sum(C))
    B = (1.0 + rg * float(np.sum(_ratio(np.arange(1, N + 1, dtype=float), alpha, 0)))) / g2
    C.setflags(write=False)
    return ExpansionCoeffs(float(alpha), N, A, B, C)


def series_partial_sum(alpha: float, K: int) -> float:
    """``1 + sum_{k=1}^K Gamma(k-1+alpha) / (Gamma(alpha-1) k!)``; tends to 0."""
    k = np.arange(1, K + 1, dtype=float)
    return 1.0 + float(rgamma(alpha - 1)) * float(np.sum(_ratio(k, alpha, 0)))


def moments(f: GridFunction, N: int) -> np.ndarray:
    """Rows ``k - 2`` hold :math:`v_k = (1-k)\\int_a^x t^{k-2} f(t)dt`, ``k = 2..N``."""
    x = f.x
    out = np.empty((N - 1, f.n))
    for k in range(2, N + 1):
        integrand = x ** (k - 2) * f.values
        out[k - 2] = (1 - k) * cumulative_simpson(integrand, dx=f.h, initial=0.0)
    return out


def approximate_derivative(f: GridFunction, c: ExpansionCoeffs) -> GridFunction:
    """Truncated expansion of the derivative of order ``c.alpha``.

    ``f'`` is taken by second order differences. At ``x = 0`` every term
    carries a positive power of ``x`` once ``f(0) = 0``, so the value there
    is 0; otherwise it is NaN. Node 0 is flagged either way. The sum
    cancels badly at the first few nodes once N is large.
    """
    if f.a != 0.0:
        raise BasePointError(f"the expansion is stated at 0, got a={f.a}")
    alpha = c.alpha
    x = f.x[1:]
    fv = f.values
    fp = np.gradient(fv, f.h, edge_order=2)[1:]
    v = moments(f, c.N)[:, 1:]
    k = np.arange(2, c.N + 1, dtype=float)[:, None]
    # x**(1 - k - alpha) overflows near 0 for large N while v_k underflows,
    # so the product is formed in log space
    nz = v != 0.0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        logv = np.log(np.abs(v))
        scaled = np.where(nz, np.sign(v) * np.exp(np.where(nz, logv, 0.0) + (1 - k - alpha) * np.log(x)), 0.0)
    tail = c.C @ scaled
    out = np.empty(f.n)
    out[1:] = c.A * x**-alpha * fv[1:] + c.B * x ** (1 - alpha) * fp - tail
    out[0] = 0.0 if (fv[0] == 0.0 and alpha < 1) else math.nan
    return f.like(out, flagged=(0,))


def table1(alphas=TABLE1_ALPHAS, ns=TABLE1_NS) -> np.ndarray:
    return np.array([[coeffs(a, n).B for n in ns] for a in alphas])


def table1_mismatches(tol: float = 5e-5) -> list[tuple[float, int, float, float]]:
    """Cells ``(alpha, N, computed, printed)`` that differ by more than *tol*."""
    T = table1()
    bad = []
    for i, a in enumerate(TABLE1_ALPHAS):
        for j, n in enumerate(TABLE1_NS):
            if abs(T[i, j] - PRINTED_TABLE1[i, j]) > tol:
                bad.append((a, n, float(T[i, j]), float(PRINTED_TABLE1[i, j])))
    return bad


def table1_csv(values: np.ndarray | None = None) -> str:
    values = table1() if values is None else values
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", *TABLE1_NS])
    for a, row in zip(TABLE1_ALPHAS, values):
        w.writerow([repr(a), *(f"{v:.10f}" for v in row)])
    return buf.getvalue()
