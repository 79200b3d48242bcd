"""Polygonal meshes: representation, generators, geometry, and regularity checks."""

import json
import math

import numpy as np
import shapely.geometry as sgeom

__all__ = ["ElementGeometry", "PolygonalMesh", "generate_rect_mesh",
           "generate_hex_mesh", "generate_graded_tri_mesh", "check_regularity",
           "load_mesh", "save_mesh", "mesh_from_selector"]

_DEGENERACY_TOL = 1e-14
_SNAP_DECIMALS = 12


class ElementGeometry:
    """Derived geometric data of a single polygonal cell."""

    __slots__ = ("vertices", "area", "centroid", "diameter",
                 "edge_lengths", "edge_normals", "edge_midpoints")

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        x, y = v[:, 0], v[:, 1]
        xs, ys = np.roll(x, -1), np.roll(y, -1)
        cross = x * ys - xs * y
        area = 0.5 * cross.sum()
        if area <= 0.0:
            raise ValueError("cell is not counter-clockwise oriented or degenerate")
        cx = ((x + xs) * cross).sum() / (6.0 * area)
        cy = ((y + ys) * cross).sum() / (6.0 * area)
        diff = v[:, None, :] - v[None, :, :]
        diameter = float(np.sqrt((diff ** 2).sum(-1)).max())
        if area < _DEGENERACY_TOL * diameter ** 2:
            raise ValueError("degenerate cell: area below tolerance")
        tangents = np.column_stack([xs - x, ys - y])
        lengths = np.linalg.norm(tangents, axis=1)
        normals = np.column_stack([tangents[:, 1], -tangents[:, 0]]) / lengths[:, None]
        self.vertices = v
        self.area = float(area)
        self.centroid = np.array([cx, cy])
        self.diameter = diameter
        self.edge_lengths = lengths
        self.edge_normals = normals
        self.edge_midpoints = 0.5 * (v + np.roll(v, -1, axis=0))

    @property
    def n_vertices(self):
        return len(self.vertices)


class PolygonalMesh:
    """Immutable polygonal mesh: vertices, CCW cells, derived edge topology.

    Edges are stored with a canonical endpoint order (lexicographic by
    coordinate) so that edge-interior DOF slots are orientation independent.
    """

    def __init__(self, vertices, cells, domain=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.cells = [list(map(int, c)) for c in cells]
        self.domain = None if domain is None else tuple(map(float, domain))
        self._build_topology()
        self._geoms = [None] * len(self.cells)

    # -- topology ---------------------------------------------------------

    def _canonical(self, a, b):
        pa, pb = self.vertices[a], self.vertices[b]
        return (a, b) if (pa[0], pa[1]) < (pb[0], pb[1]) else (b, a)

    def _build_topology(self):
        edge_index = {}
        edges = []
        cell_edges = []
        for ci, cell in enumerate(self.cells):
            if len(cell) < 3:
                raise ValueError(f"cell {ci} has fewer than 3 vertices")
            eids = []
            for j in range(len(cell)):
                a, b = cell[j], cell[(j + 1) % len(cell)]
                key = (min(a, b), max(a, b))
                if key not in edge_index:
                    edge_index[key] = len(edges)
                    edges.append(self._canonical(a, b))
                eids.append(edge_index[key])
            cell_edges.append(eids)
        self.edges = np.array(edges, dtype=int)
        self.cell_edges = cell_edges
        self.edge_cells = -np.ones((len(edges), 2), dtype=int)
        for ci, eids in enumerate(cell_edges):
            for e in eids:
                if self.edge_cells[e, 0] < 0:
                    self.edge_cells[e, 0] = ci
                elif self.edge_cells[e, 1] < 0:
                    self.edge_cells[e, 1] = ci
                else:
                    raise ValueError(f"edge {e} has more than two incident cells")
        self.boundary_edges = np.where(self.edge_cells[:, 1] < 0)[0]
        self.boundary_tags = self._tag_boundary()

    def _tag_boundary(self):
        tags = {}
        if self.domain is None:
            x0, y0 = self.vertices.min(axis=0)
            x1, y1 = self.vertices.max(axis=0)
        else:
            x0, y0, x1, y1 = self.domain
        tol = 1e-9 * max(x1 - x0, y1 - y0)
        for e in self.boundary_edges:
            a, b = self.edges[e]
            mid = 0.5 * (self.vertices[a] + self.vertices[b])
            if abs(mid[1] - y0) < tol:
                tags[int(e)] = "bottom"
            elif abs(mid[1] - y1) < tol:
                tags[int(e)] = "top"
            elif abs(mid[0] - x0) < tol:
                tags[int(e)] = "left"
            elif abs(mid[0] - x1) < tol:
                tags[int(e)] = "right"
            else:
                tags[int(e)] = "interior"
        return tags

    # -- geometry ---------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_cells(self):
        return len(self.cells)

    def geometry(self, ci):
        g = self._geoms[ci]
        if g is None:
            g = ElementGeometry(self.vertices[self.cells[ci]])
            self._geoms[ci] = g
        return g

    def total_area(self):
        return sum(self.geometry(ci).area for ci in range(self.n_cells))

    def max_diameter(self):
        return max(self.geometry(ci).diameter for ci in range(self.n_cells))


# -- generators -----------------------------------------------------------


def generate_rect_mesh(nx, ny, domain=(0.0, 0.0, 1.0, 1.0)):
    """Structured quadrilateral mesh of nx-by-ny cells on the rectangle."""
    if nx < 1 or ny < 1:
        raise ValueError("cell counts must be at least 1")
    x0, y0, x1, y1 = domain
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    verts = np.array([[x, y] for y in ys for x in xs])
    cells = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            cells.append([a, a + 1, a + nx + 2, a + nx + 1])
    return PolygonalMesh(verts, cells, domain=domain)


def generate_graded_tri_mesh(nx, ny, grading, domain=(0.0, 0.0, 1.0, 1.0)):
    """Triangular mesh with geometrically graded row heights toward y = y0.

    Row heights (top to bottom) follow the ratio ``grading``; grading < 1
    compresses rows toward the bottom boundary, grading = 1 is uniform.
    """
    if nx < 1 or ny < 1:
        raise ValueError("cell counts must be at least 1")
    if grading <= 0.0:
        raise ValueError("grading must be positive")
    x0, y0, x1, y1 = domain
    height = y1 - y0
    if abs(grading - 1.0) < 1e-14:
        heights = np.full(ny, height / ny)
    else:
        top = height * (1.0 - grading) / (1.0 - grading ** ny)
        heights = top * grading ** np.arange(ny)
    # heights[0] is the top row; accumulate downward from y1
    ylev = (y1 - np.concatenate([[0.0], np.cumsum(heights)]))[::-1]
    ylev[0] = y0
    ylev[-1] = y1
    xs = np.linspace(x0, x1, nx + 1)
    verts = np.array([[x, y] for y in ylev for x in xs])
    cells = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b = a + 1
            c = a + nx + 2
            d = a + nx + 1
            cells.append([a, b, c])
            cells.append([a, c, d])
    return PolygonalMesh(verts, cells, domain=domain)


def generate_hex_mesh(n, domain=(0.0, 0.0, 1.0, 1.0)):
    """Honeycomb tiling of the rectangle with n hexagons per row.

    The pointy-top lattice is aligned so that the rectangle sides pass exactly
    through lattice vertices; clipping then yields clean pentagons at the
    bottom/top rows and half hexagons at the left/right sides, all of which
    satisfy the usual shape-regularity assumptions.
    """
    if n < 2:
        raise ValueError("hex resolution must be at least 2")
    x0, y0, x1, y1 = domain
    w = (x1 - x0) / n
    # rows of vertical period 3h/4; choose h close to w with the lattice
    # ending exactly on the top side: (3J + 2) h / 4 = height
    nrows = max(2, round((4.0 * (y1 - y0) / w - 2.0) / 3.0))
    h = 4.0 * (y1 - y0) / (3 * nrows + 2)
    box = sgeom.box(x0, y0, x1, y1)
    hex_offsets = np.array([
        [0.0, -0.5 * h], [0.5 * w, -0.25 * h], [0.5 * w, 0.25 * h],
        [0.0, 0.5 * h], [-0.5 * w, 0.25 * h], [-0.5 * w, -0.25 * h]])

    polys = []
    r = 0.5 * max(w, h)
    for j in range(nrows + 1):
        cy = y0 + 0.75 * j * h + 0.25 * h
        if j % 2 == 0:
            centers = [x0 + (i + 0.5) * w for i in range(n)]
        else:
            centers = [x0 + i * w for i in range(n + 1)]
        for cx in centers:
            hexagon = sgeom.Polygon(hex_offsets + [cx, cy])
            clipped = hexagon.intersection(box)
            if clipped.is_empty or clipped.geom_type != "Polygon":
                continue
            if clipped.area < 1e-9 * w * h:
                continue
            polys.append(clipped)

    vert_index = {}
    verts = []
    cells = []
    min_edge = 1e-9 * r
    for poly in polys:
        coords = list(poly.exterior.coords)[:-1]
        ring = sgeom.LinearRing(coords)
        if not ring.is_ccw:
            coords = coords[::-1]
        cell = []
        for (px, py) in coords:
            key = (round(px, _SNAP_DECIMALS), round(py, _SNAP_DECIMALS))
            if key not in vert_index:
                vert_index[key] = len(verts)
                verts.append([px, py])
            vid = vert_index[key]
            if not cell or cell[-1] != vid:
                cell.append(vid)
        if cell[0] == cell[-1]:
            cell.pop()
        # drop collapsed edges introduced by clipping/snapping
        cleaned = []
        pts = np.asarray(verts)
        for vid in cell:
            if cleaned and np.linalg.norm(pts[vid] - pts[cleaned[-1]]) < min_edge:
                continue
            cleaned.append(vid)
        if len(cleaned) >= 3:
            cells.append(cleaned)
    return PolygonalMesh(np.asarray(verts), cells, domain=domain)


# -- regularity -----------------------------------------------------------


def check_regularity(mesh, rho1, rho2):
    """Report cells violating the star-shape/vertex-separation mesh assumptions.

    Returns a list of (cell_index, reason) pairs; empty means all cells pass.
    The star-shape test requires the centroid-centered ball of radius
    rho1 * h_E to lie in the kernel of the polygon (inner half-plane distances).
    """
    if not (0.0 < rho1 < 1.0 and 0.0 < rho2 < 1.0):
        raise ValueError("rho1 and rho2 must lie in (0, 1)")
    report = []
    for ci in range(mesh.n_cells):
        try:
            geom = mesh.geometry(ci)
        except ValueError as exc:
            report.append((ci, f"degenerate: {exc}"))
            continue
        h = geom.diameter
        v = geom.vertices
        diff = v[:, None, :] - v[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() < rho2 * h:
            report.append((ci, "vertex separation below rho2*h"))
            continue
        # signed distance of the centroid to each inward edge half-plane
        signed = np.einsum("ij,ij->i", geom.centroid - v, -geom.edge_normals)
        if signed.min() < rho1 * h:
            report.append((ci, "kernel ball of radius rho1*h not contained"))
    return report


# -- io -------------------------------------------------------------------


def save_mesh(mesh, path):
    doc = {
        "vertices": mesh.vertices.tolist(),
        "cells": mesh.cells,
    }
    if mesh.domain is not None:
        doc["domain"] = list(mesh.domain)
    doc["boundary_tags"] = {str(k): v for k, v in mesh.boundary_tags.items()}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_mesh(path):
    with open(path) as fh:
        doc = json.load(fh)
    domain = tuple(doc["domain"]) if "domain" in doc else None
    return PolygonalMesh(np.asarray(doc["vertices"], float), doc["cells"], domain=domain)


def mesh_from_selector(selector, domain=(0.0, 0.0, 1.0, 1.0)):
    """Build a mesh from a CLI-style selector such as ``hex:n=8`` or ``tri:nx=8,ny=4,grading=0.8``."""
    kind, _, argstr = selector.partition(":")
    args = {}
    if argstr:
        for item in argstr.split(","):
            key, _, val = item.partition("=")
            args[key.strip()] = val.strip()
    if kind == "rect":
        return generate_rect_mesh(int(args["nx"]), int(args["ny"]), domain)
    if kind == "hex":
        return generate_hex_mesh(int(args["n"]), domain)
    if kind == "tri":
        return generate_graded_tri_mesh(int(args["nx"]), int(args["ny"]),
                                        float(args.get("grading", "1.0")), domain)
    if kind == "file":
        return load_mesh(args["path"])
    raise ValueError(f"unknown mesh selector kind: {kind!r}")
