import numpy as np
from functools import lru_cache


@lru_cache(maxsize=None)
def gauss_line(n_points):
    """Gauss-Legendre rule on [0, 1]"""
    points, weights = np.polynomial.legendre.leggauss(n_points)
    return 0.5 * (points + 1.0), 0.5 * weights


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed (conical product) Gauss rule on the reference triangle.

    Exact for polynomials of total degree ``degree`` on the triangle with
    vertices (0, 0), (1, 0), (0, 1). Returns ``(points, weights)`` with
    ``points`` of shape (q, 2); the weights sum to 1/2.
    """
    n = max(1, int(np.ceil((degree + 2) / 2.0)))
    u, wu = gauss_line(n)
    v, wv = gauss_line(n)

    # Duffy map (u, v) -> (u, v(1 - u)); the Jacobian (1 - u) adds one degree in u
    xi = np.repeat(u, n)
    eta = np.tile(v, n) * (1.0 - xi)
    weights = np.outer(wu * (1.0 - u), wv).ravel()

    return np.column_stack([xi, eta]), weights


def line_rule(degree):
    """Gauss rule on [0, 1] exact for polynomials of the given degree"""
    return gauss_line(max(1, int(np.ceil((degree + 1) / 2.0))))
