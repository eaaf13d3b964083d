"""Independent reference computations shared by the test modules."""

from __future__ import annotations

import math

import numpy as np

from fracvar.expr import parse

VARS = ("x", "y", "v", "w", "z")

_UNARY = ("sin({})", "cos({})", "exp({})", "({})^2", "({})^3", "-({})", "ln(2 + ({})^2)", "sqrt(1 + ({})^2)")
_BINARY = ("({}) + ({})", "({}) - ({})", "({}) * ({})", "({}) / (2 + ({})^2)", "(1.5 + ({})^2)^({})")


def random_expression_text(rng: np.random.Generator, depth: int = 3) -> str:
    """A smooth expression in VARS, bounded on [-1, 1]^5 and free of singularities."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.7:
            return str(rng.choice(VARS))
        return repr(round(float(rng.uniform(-2, 2)), 3))
    if rng.random() < 0.45:
        return str(rng.choice(_UNARY)).format(random_expression_text(rng, depth - 1))
    t = str(rng.choice(_BINARY))
    return t.format(random_expression_text(rng, depth - 1), random_expression_text(rng, depth - 1))


def central_difference(e, point: dict, name: str, step: float = 1e-5) -> float:
    lo, hi = dict(point), dict(point)
    lo[name] -= step
    hi[name] += step
    return (e.evaluate(hi) - e.evaluate(lo)) / (2 * step)


def derivative_mismatches(n_pairs: int = 100, seed: int = 12345, tol: float = 1e-6):
    """Random (expression, point, variable) triples whose symbolic and FD derivatives differ."""
    rng = np.random.default_rng(seed)
    bad, checked = [], 0
    while checked < n_pairs:
        text = random_expression_text(rng)
        e = parse(text, VARS)
        point = {k: float(rng.uniform(-1, 1)) for k in VARS}
        name = str(rng.choice(VARS))
        exact = e.diff(name).evaluate(point)
        fd = central_difference(e, point, name)
        checked += 1
        if not abs(exact - fd) <= tol * max(1.0, abs(exact), abs(fd)):
            bad.append((text, point, name, exact, fd))
    return bad, checked


def caputo_power(x, s: float, alpha: float):
    """Closed form Caputo derivative of x**s (s > 0) on [0, x]."""
    return math.gamma(s + 1) / math.gamma(s + 1 - alpha) * np.asarray(x, dtype=float) ** (s - alpha)
