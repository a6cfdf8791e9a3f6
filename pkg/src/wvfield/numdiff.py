"""Central finite differences with one level of Richardson extrapolation."""

from __future__ import annotations

import numpy as np

__all__ = ["richardson_derivative", "richardson_mixed", "fit_order"]


def _central(f, h):
    return (f(h) - f(-h)) / (2 * h)


def richardson_derivative(f, h):
    """Derivative of ``f`` at 0 from central steps ``h`` and ``h/2``.

    Truncation error is O(h^4) for smooth ``f``.
    """
    d_h = _central(f, h)
    d_half = _central(f, h / 2)
    return (4 * d_half - d_h) / 3


def _mixed(f, h):
    return (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h)


def richardson_mixed(f, h):
    """Mixed second partial d^2 f / dx dy at (0, 0), Richardson-extrapolated."""
    return (4 * _mixed(f, h / 2) - _mixed(f, h)) / 3


def fit_order(steps, errors):
    """Least-squares slope of ``log|error|`` against ``log step``."""
    steps = np.asarray(steps, dtype=float)
    errors = np.abs(np.asarray(errors, dtype=float))
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])
