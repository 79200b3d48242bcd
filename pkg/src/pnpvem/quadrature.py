"""Numerical integration on polygons (fan triangulation) and edges (Gauss-Legendre)."""

import math
from functools import lru_cache

import numpy as np

__all__ = ["QuadratureRule", "triangle_rule", "polygon_rule", "edge_rule",
           "gauss_lobatto_interior", "edge_nodes", "lagrange_values"]


class QuadratureRule:
    """Points and positive weights integrating polynomials up to ``exactness_degree``."""

    __slots__ = ("points", "weights", "exactness_degree")

    def __init__(self, points, weights, exactness_degree):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.exactness_degree = int(exactness_degree)

    @property
    def measure(self):
        return float(self.weights.sum())

    def integrate(self, f):
        vals = f(self.points)
        return float(np.dot(self.weights, vals))


@lru_cache(maxsize=None)
def _gauss01(n):
    # Gauss-Legendre on [0, 1]
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(v0, v1, v2, degree):
    """Quadrature on the triangle (v0, v1, v2), exact for polynomials of ``degree``.

    Built by collapsing a tensor Gauss rule onto the reference triangle; the
    Jacobian (1-u) raises the u-degree by one, which the point counts absorb.
    """
    degree = max(int(degree), 0)
    nu = math.ceil((degree + 2) / 2)
    nv = math.ceil((degree + 1) / 2)
    xu, wu = _gauss01(nu)
    xv, wv = _gauss01(nv)
    u = np.repeat(xu, nv)
    t = np.tile(xv, nu)
    w = np.repeat(wu, nv) * np.tile(wv, nu) * (1.0 - u)
    x_ref = u
    y_ref = t * (1.0 - u)

    v0 = np.asarray(v0, float)
    e1 = np.asarray(v1, float) - v0
    e2 = np.asarray(v2, float) - v0
    pts = v0 + np.outer(x_ref, e1) + np.outer(y_ref, e2)
    jac = e1[0] * e2[1] - e1[1] * e2[0]
    return QuadratureRule(pts, w * jac, degree)


def _point_in_polygon(point, vertices):
    # winding-number test; robust enough for centroid-in-cell checks
    x, y = point
    wn = 0
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        if y0 <= y:
            if y1 > y and (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0) > 0:
                wn += 1
        else:
            if y1 <= y and (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0) < 0:
                wn -= 1
    return wn != 0


def _ear_clip(vertices):
    """Triangulate a simple CCW polygon into index triples by ear clipping."""
    idx = list(range(len(vertices)))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10000:
            raise ValueError("ear clipping failed: polygon may be degenerate")
        n = len(idx)
        clipped = False
        for j in range(n):
            i0, i1, i2 = idx[j - 1], idx[j], idx[(j + 1) % n]
            a, b, c = vertices[i0], vertices[i1], vertices[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= 0.0:
                continue
            ear = True
            for other in idx:
                if other in (i0, i1, i2):
                    continue
                p = vertices[other]
                if _tri_contains(a, b, c, p):
                    ear = False
                    break
            if ear:
                tris.append((i0, i1, i2))
                idx.pop(j)
                clipped = True
                break
        if not clipped:
            raise ValueError("ear clipping failed: no ear found")
    tris.append(tuple(idx))
    return tris


def _tri_contains(a, b, c, p):
    d1 = (p[0] - a[0]) * (b[1] - a[1]) - (p[1] - a[1]) * (b[0] - a[0])
    d2 = (p[0] - b[0]) * (c[1] - b[1]) - (p[1] - b[1]) * (c[0] - b[0])
    d3 = (p[0] - c[0]) * (a[1] - c[1]) - (p[1] - c[1]) * (a[0] - c[0])
    return (d1 <= 0) == (d2 <= 0) == (d3 <= 0)


def polygon_rule(geom, degree):
    """Rule exact for polynomials of ``degree`` on the polygon described by ``geom``.

    ``geom`` needs ``vertices`` (CCW) and ``centroid`` attributes (see
    :class:`pnpvem.mesh.ElementGeometry`); a bare (n, 2) array also works.
    """
    if hasattr(geom, "vertices"):
        verts = np.asarray(geom.vertices, float)
        centroid = np.asarray(getattr(geom, "centroid"), float)
    else:
        verts = np.asarray(geom, float)
        centroid = verts.mean(axis=0)
    n = len(verts)
    pts = []
    wts = []
    if _point_in_polygon(centroid, verts):
        for i in range(n):
            r = triangle_rule(centroid, verts[i], verts[(i + 1) % n], degree)
            pts.append(r.points)
            wts.append(r.weights)
    else:
        for (i0, i1, i2) in _ear_clip(verts):
            r = triangle_rule(verts[i0], verts[i1], verts[i2], degree)
            pts.append(r.points)
            wts.append(r.weights)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), degree)


def edge_rule(p0, p1, degree):
    """Gauss-Legendre rule on the segment p0-p1, exact for polynomials of ``degree``."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    length = float(np.linalg.norm(p1 - p0))
    if length == 0.0:
        raise ValueError("zero-length edge")
    npts = math.ceil((degree + 1) / 2)
    t, w = _gauss01(npts)
    pts = p0 + np.outer(t, p1 - p0)
    return QuadratureRule(pts, w * length, degree)


# interior Gauss-Lobatto nodes on [-1, 1] for the edge value DOFs, per order k
_GL_INTERIOR = {
    1: (),
    2: (0.0,),
    3: (-1.0 / math.sqrt(5.0), 1.0 / math.sqrt(5.0)),
}


def gauss_lobatto_interior(k):
    """The k-1 interior Gauss-Lobatto parameters on [-1, 1]."""
    try:
        return _GL_INTERIOR[k]
    except KeyError:
        raise ValueError(f"unsupported order k={k}") from None


def edge_nodes(k):
    """All k+1 Gauss-Lobatto parameters on [-1, 1]: endpoints plus interior nodes."""
    return np.array([-1.0, *_GL_INTERIOR[k], 1.0]) if k > 1 else np.array([-1.0, 1.0])


def lagrange_values(nodes, x):
    """Values of the Lagrange basis on ``nodes`` at points ``x``; shape (len(x), len(nodes))."""
    nodes = np.asarray(nodes, float)
    x = np.asarray(x, float)
    n = len(nodes)
    out = np.ones((len(x), n))
    for i in range(n):
        for j in range(n):
            if j != i:
                out[:, i] *= (x - nodes[j]) / (nodes[i] - nodes[j])
    return out
