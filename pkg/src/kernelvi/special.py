"""Scalar special functions needed by the Gamma-precision machinery.

Implemented from scratch (recurrence lift plus asymptotic series) so the
library does not depend on scipy for anything that sits on a gradient
path. scipy remains available to the test suite as an independent
reference.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["digamma", "trigamma"]

# Asymptotic series coefficients B_2n / (2n) for psi(x) ~ ln x - 1/(2x) - sum c_n / x^(2n).
_DIGAMMA_COEFFS = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

# B_2n for psi'(x) ~ 1/x + 1/(2x^2) + sum B_2n / x^(2n+1).
_TRIGAMMA_COEFFS = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)

_LIFT = 6.0


def _digamma_scalar(x: float) -> float:
    if x <= 0.0:
        raise ValueError(f"digamma requires x > 0, got {x}")
    acc = 0.0
    while x < _LIFT:
        acc -= 1.0 / x  # psi(x) = psi(x + 1) - 1/x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    term = inv2
    for c in _DIGAMMA_COEFFS:
        series += c * term
        term *= inv2
    return acc + math.log(x) - 0.5 / x - series


def _trigamma_scalar(x: float) -> float:
    if x <= 0.0:
        raise ValueError(f"trigamma requires x > 0, got {x}")
    acc = 0.0
    while x < _LIFT:
        acc += 1.0 / (x * x)  # psi'(x) = psi'(x + 1) + 1/x^2
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    term = inv * inv2
    for c in _TRIGAMMA_COEFFS:
        series += c * term
        term *= inv2
    return acc + inv + 0.5 * inv2 + series


def digamma(x):
    """psi(x) for x > 0; accepts scalars or arrays, elementwise."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        return _digamma_scalar(float(arr))
    out = np.empty_like(arr)
    flat_in, flat_out = arr.ravel(), out.ravel()
    for i, v in enumerate(flat_in):
        flat_out[i] = _digamma_scalar(float(v))
    return out


def trigamma(x):
    """psi'(x) for x > 0; accepts scalars or arrays, elementwise."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        return _trigamma_scalar(float(arr))
    out = np.empty_like(arr)
    flat_in, flat_out = arr.ravel(), out.ravel()
    for i, v in enumerate(flat_in):
        flat_out[i] = _trigamma_scalar(float(v))
    return out
