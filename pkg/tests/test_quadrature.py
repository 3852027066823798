from math import factorial

import numpy as np
import pytest

from utils.quadrature import gauss_line, line_rule, triangle_rule


@pytest.mark.parametrize("degree", [1, 2, 4, 8])
def test_triangle_rule_is_exact_for_monomials(degree):
    points, weights = triangle_rule(degree)
    assert weights.sum() == pytest.approx(0.5)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            approx = np.sum(weights * points[:, 0] ** a * points[:, 1] ** b)
            assert approx == pytest.approx(exact, rel=1e-12, abs=1e-15)


def test_triangle_points_lie_inside():
    points, _ = triangle_rule(8)
    assert np.all(points >= 0)
    assert np.all(points.sum(axis=1) <= 1)


@pytest.mark.parametrize("degree", [0, 3, 7, 12])
def test_line_rule_is_exact(degree):
    t, w = line_rule(degree)
    assert np.sum(w * t ** degree) == pytest.approx(1.0 / (degree + 1), rel=1e-13)


def test_gauss_line_on_unit_interval():
    t, w = gauss_line(3)
    assert len(t) == 3
    assert np.all((t > 0) & (t < 1))
    assert w.sum() == pytest.approx(1.0)
