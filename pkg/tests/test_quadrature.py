"""Quadrature rules against closed-form monomial integrals."""

import numpy as np
import pytest

from curlcurl.quadrature import (
    MAX_DEGREE,
    edge_rule,
    simplex_monomial_integral,
    tetrahedron_rule,
    triangle_rule,
)


def test_edge_rule_monomials():
    for deg in range(MAX_DEGREE + 1):
        rule = edge_rule(deg)
        t = rule.points[:, 0]
        for a in range(deg + 1):
            exact = 1.0 / (a + 1)
            assert np.dot(rule.weights, t**a) == pytest.approx(exact, rel=1e-13)


def test_triangle_rule_monomials():
    for deg in range(0, MAX_DEGREE + 1, 3):
        rule = triangle_rule(deg)
        u, v = rule.points[:, 0], rule.points[:, 1]
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                exact = simplex_monomial_integral((a, b))
                got = np.dot(rule.weights, u**a * v**b)
                assert got == pytest.approx(exact, rel=1e-12, abs=1e-16)


def test_tetrahedron_rule_monomials():
    for deg in range(0, MAX_DEGREE + 1, 4):
        rule = tetrahedron_rule(deg)
        x, y, z = rule.points.T
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                for c in range(deg + 1 - a - b):
                    exact = simplex_monomial_integral((a, b, c))
                    got = np.dot(rule.weights, x**a * y**b * z**c)
                    assert got == pytest.approx(exact, rel=1e-12, abs=1e-16)


def test_weights_positive_and_points_inside():
    rule = tetrahedron_rule(11)
    assert np.all(rule.weights > 0)
    assert np.all(rule.points >= 0)
    assert np.all(rule.points.sum(axis=1) <= 1 + 1e-14)
    assert rule.weights.sum() == pytest.approx(1.0 / 6.0, rel=1e-14)
    tri = triangle_rule(7)
    assert np.all(tri.weights > 0)
    assert tri.weights.sum() == pytest.approx(0.5, rel=1e-14)


def test_degree_out_of_range():
    with pytest.raises(ValueError):
        tetrahedron_rule(MAX_DEGREE + 1)
    with pytest.raises(ValueError):
        edge_rule(-1)
