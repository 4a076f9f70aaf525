"""Adaptive Simpson quadrature for scalar integrands on short intervals."""

from __future__ import annotations

import math

from .errors import NumericError


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 48) -> float:
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    Uses the classical recursive scheme with the Richardson correction
    ``(S2 - S1) / 15`` at each accepted panel.
    """
    if b == a:
        return 0.0
    if b < a:
        return -adaptive_simpson(f, b, a, tol, max_depth)
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    return _recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _recurse(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) * (fa + 4.0 * flm + fm) / 6.0
    right = (b - m) * (fm + 4.0 * frm + fb) / 6.0
    delta = left + right - whole
    if not math.isfinite(delta):
        raise NumericError(f"non-finite integrand on [{a}, {b}]")
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))
