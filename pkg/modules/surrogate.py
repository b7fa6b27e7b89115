"""Spike nonlinearity and its surrogate derivative.

The hard spike is H(y - theta) with H(0) = 1. Backpropagation replaces its
derivative by a triangular kernel of height `slope` and half-width `width`.
The relaxed spike is a clamped ramp from 0 at theta - width to 1 at
theta + width whose derivative is surrogate_grad / (slope * width); it makes
the forward pass differentiable for finite-difference checks.
"""

import numpy as np


def surrogate_grad(y, theta, slope, width):
    """Triangular surrogate: slope * max(0, 1 - |y - theta| / width)"""
    return slope * np.maximum(0.0, 1.0 - np.abs(np.asarray(y, dtype=np.float64) - theta) / width)


def heaviside(y, theta):
    return (np.asarray(y) >= theta).astype(np.float64)


def relaxed_spike(y, theta, width):
    u = np.clip((np.asarray(y, dtype=np.float64) - theta) / width, -1.0, 1.0)
    return np.where(u < 0, 0.5 * (1 + u) ** 2, 1 - 0.5 * (1 - u) ** 2)


def relaxed_spike_grad(y, theta, width):
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(y, dtype=np.float64) - theta) / width) / width


def spike(y, params, relaxed=False):
    if relaxed:
        return relaxed_spike(y, params.theta, params.surrogate_width)
    return heaviside(y, params.theta)


def spike_grad(y, params, relaxed=False):
    if relaxed:
        return relaxed_spike_grad(y, params.theta, params.surrogate_width)
    return surrogate_grad(y, params.theta, params.surrogate_slope, params.surrogate_width)
