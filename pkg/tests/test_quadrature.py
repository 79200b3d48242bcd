import math

import numpy as np
import pytest

from pnpvem.quadrature import (QuadratureRule, triangle_rule, polygon_rule,
                               edge_rule, gauss_lobatto_interior, edge_nodes,
                               lagrange_values)


def unit_square():
    return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def test_triangle_rule_area_and_moments():
    r = triangle_rule([0, 0], [1, 0], [0, 1], 3)
    assert r.measure == pytest.approx(0.5, rel=1e-14)
    # exact on the reference triangle: int x^a y^b = a! b! / (a+b+2)!
    for a, b in [(1, 0), (2, 0), (1, 1), (3, 0), (2, 1)]:
        exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
        val = r.integrate(lambda p: p[:, 0] ** a * p[:, 1] ** b)
        assert val == pytest.approx(exact, rel=1e-13)


def test_triangle_rule_positive_weights():
    r = triangle_rule([0.2, -0.3], [1.5, 0.1], [0.4, 2.0], 8)
    assert np.all(r.weights > 0)


def test_polygon_rule_unit_square():
    r = polygon_rule(unit_square(), 2)
    assert r.measure == pytest.approx(1.0, rel=1e-13)
    assert r.integrate(lambda p: p[:, 0] ** 2) == pytest.approx(1.0 / 3.0, rel=1e-13)


def test_polygon_rule_regular_hexagon():
    ang = np.arange(6) * np.pi / 3
    hexagon = np.column_stack([np.cos(ang), np.sin(ang)])
    r = polygon_rule(hexagon, 2)
    assert r.measure == pytest.approx(1.5 * math.sqrt(3.0), rel=1e-12)


def test_polygon_rule_nonconvex_fallback():
    # centroid of this L-shape fan still works, but ear clipping must too;
    # compare against a high-degree oracle on the same region
    L = np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]], float)
    r = polygon_rule(L, 4)
    assert r.measure == pytest.approx(3.0, rel=1e-12)
    val = r.integrate(lambda p: p[:, 0] ** 2 * p[:, 1] ** 2)
    # split into [0,2]x[0,1] and [0,1]x[1,2]
    exact = (8.0 / 3.0) * (1.0 / 3.0) + (1.0 / 3.0) * (7.0 / 3.0)
    assert val == pytest.approx(exact, rel=1e-12)


def test_polygon_rule_random_polys_vs_refined_oracle():
    rng = np.random.default_rng(7)
    for _ in range(5):
        ang = np.sort(rng.uniform(0, 2 * np.pi, 6))
        rad = rng.uniform(0.5, 1.0, 6)
        verts = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        d = 5
        coef = rng.standard_normal((d + 1, d + 1))

        def f(p):
            return sum(coef[a, b] * p[:, 0] ** a * p[:, 1] ** b
                       for a in range(d + 1) for b in range(d + 1 - a))

        lo = polygon_rule(verts, d)
        hi = polygon_rule(verts, 2 * d)
        assert lo.integrate(f) == pytest.approx(hi.integrate(f), rel=1e-12)


def test_edge_rule_line_integrals():
    r = edge_rule([0, 0], [1, 0], 1)
    assert r.integrate(lambda p: p[:, 0]) == pytest.approx(0.5, rel=1e-14)
    r = edge_rule([0, 0], [0, 2], 3)
    assert r.integrate(lambda p: p[:, 1] ** 3) == pytest.approx(4.0, rel=1e-14)
    r = edge_rule([0.3, 0.4], [1.1, -0.2], 0)
    assert r.measure == pytest.approx(np.hypot(0.8, 0.6), rel=1e-14)


def test_edge_rule_zero_length_rejected():
    with pytest.raises(ValueError):
        edge_rule([1, 1], [1, 1], 2)


def test_gauss_lobatto_nodes():
    assert gauss_lobatto_interior(1) == ()
    assert gauss_lobatto_interior(2) == (0.0,)
    nodes = edge_nodes(2)
    assert np.allclose(nodes, [-1.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        gauss_lobatto_interior(7)


def test_lagrange_values_cardinal():
    nodes = edge_nodes(3)
    vals = lagrange_values(nodes, nodes)
    assert np.allclose(vals, np.eye(len(nodes)), atol=1e-13)
    # partition of unity away from nodes
    x = np.linspace(-1, 1, 11)
    assert np.allclose(lagrange_values(nodes, x).sum(axis=1), 1.0, atol=1e-13)
