"""Divergence-free manufactured Stokes solution on the unit square.

u = curl(X(x) X(y)) with X(t) = t^2 (1-t)^2, p = x - 1/2,
f = -lap u + grad p. Derivatives worked out by hand.
"""

import numpy as np


def X(t):
    return t**2 * (1 - t) ** 2


def X1(t):
    return 2 * t * (1 - t) * (1 - 2 * t)


def X2(t):
    return 2 - 12 * t + 12 * t**2


def X3(t):
    return -12 + 24 * t


def velocity(x, y):
    return (X(x) * X1(y), -X1(x) * X(y))


def velocity_grad(x, y):
    return ((X1(x) * X1(y), X(x) * X2(y)), (-X2(x) * X(y), -X1(x) * X1(y)))


def pressure(x, y):
    return x - 0.5


def force(x, y):
    lap1 = X2(x) * X1(y) + X(x) * X3(y)
    lap2 = -(X3(x) * X(y) + X1(x) * X2(y))
    return (-lap1 + 1.0, -lap2 + np.zeros_like(x))
