"""Analytic test surfaces injected through the same interface as the XOR loss.

These exist to prove the band / eigenvector-following / path machinery is
potential-agnostic: nothing in the saddle code may assume the XOR loss.
"""

import numpy as np


class DoubleWell1D:
    """V(x) = a (x^2 - 1)^2 + b x; wells near +-1, barrier near 0."""

    def __init__(self, a=1.0, b=0.0):
        self.a = a
        self.b = b
        self.dim = 1

    def value(self, x):
        return float(self.a * (x[0] ** 2 - 1.0) ** 2 + self.b * x[0])

    def value_and_grad(self, x):
        g = np.array([4.0 * self.a * x[0] * (x[0] ** 2 - 1.0) + self.b])
        return self.value(x), g

    def gradient(self, x):
        return self.value_and_grad(x)[1]

    def hessian(self, x):
        return np.array([[4.0 * self.a * (3.0 * x[0] ** 2 - 1.0)]])


class MuellerBrown:
    """The standard four-Gaussian 2-D benchmark surface."""

    A = np.array([-200.0, -100.0, -170.0, 15.0])
    a = np.array([-1.0, -1.0, -6.5, 0.7])
    b = np.array([0.0, 0.0, 11.0, 0.6])
    c = np.array([-10.0, -10.0, -6.5, 0.7])
    x0 = np.array([1.0, 0.0, -0.5, -1.0])
    y0 = np.array([0.0, 0.5, 1.5, 1.0])
    dim = 2

    def _terms(self, x):
        dx = x[0] - self.x0
        dy = x[1] - self.y0
        e = self.A * np.exp(self.a * dx * dx + self.b * dx * dy + self.c * dy * dy)
        return dx, dy, e

    def value(self, x):
        return float(np.sum(self._terms(x)[2]))

    def value_and_grad(self, x):
        dx, dy, e = self._terms(x)
        gx = float(np.sum(e * (2 * self.a * dx + self.b * dy)))
        gy = float(np.sum(e * (self.b * dx + 2 * self.c * dy)))
        return float(np.sum(e)), np.array([gx, gy])

    def gradient(self, x):
        return self.value_and_grad(x)[1]

    def hessian(self, x):
        dx, dy, e = self._terms(x)
        u = 2 * self.a * dx + self.b * dy
        v = self.b * dx + 2 * self.c * dy
        hxx = float(np.sum(e * (u * u + 2 * self.a)))
        hxy = float(np.sum(e * (u * v + self.b)))
        hyy = float(np.sum(e * (v * v + 2 * self.c)))
        return np.array([[hxx, hxy], [hxy, hyy]])
