"""Scalar virtual element space of order k on one polygon.

DOFs: vertex values, k-1 Gauss-Lobatto interior points per edge, and interior
moments against scaled monomials of degree <= k-2 (scaled by 1/|E|). The local
space is the enhanced variant: moments of degree k-1 and k of a member equal
those of its H1 projection, which makes the full-order L2 projection
computable from the DOFs alone.
"""

import numpy as np

from .polyspace import ScaledMonomialBasis, n_poly
from .quadrature import polygon_rule, edge_rule, edge_nodes, lagrange_values

__all__ = ["ScalarElementSpace"]


class ScalarElementSpace:

    def __init__(self, geom, k):
        if k not in (1, 2, 3):
            raise ValueError("scalar order k must be 1, 2 or 3")
        self.geom = geom
        self.k = k
        self.n_vert = geom.n_vertices
        self.n_edge_dofs = k - 1
        self.n_moments = n_poly(k - 2)
        self.n_dofs = self.n_vert + self.n_vert * (k - 1) + self.n_moments
        self.basis = ScaledMonomialBasis(geom, k)
        self.basis_km1 = ScaledMonomialBasis(geom, k - 1)
        self.H = self.basis.mass_matrix()
        self.Hkm1 = self.H[:self.basis_km1.dim, :self.basis_km1.dim]
        self.Gt = self.basis.stiffness_matrix()
        self._edge_layout()
        self._build_projectors()
        self._T_mix = None
        self._T_km1 = None

    # -- dof layout -------------------------------------------------------

    def _edge_layout(self):
        """Edge DOF points in CCW order and boundary quadrature tables."""
        k = self.k
        geom = self.geom
        nv = self.n_vert
        nodes = edge_nodes(k)
        pts = []
        for i in range(nv):
            p0, p1 = geom.vertices[i], geom.vertices[(i + 1) % nv]
            t = 0.5 * (np.array(nodes[1:-1]) + 1.0)
            pts.append(p0 + t[:, None] * (p1 - p0) if k > 1 else np.zeros((0, 2)))
        self.edge_points = pts
        # boundary dof indices per edge: start vertex, interior slots, end vertex
        self.edge_dof_ids = []
        for i in range(nv):
            ids = [i]
            ids += [nv + i * (k - 1) + a for a in range(k - 1)]
            ids.append((i + 1) % nv)
            self.edge_dof_ids.append(ids)

    def dof_coords(self):
        """Coordinates of the pointwise DOFs (vertices then edge points)."""
        return np.vstack([self.geom.vertices] + list(self.edge_points))

    def _boundary_tables(self):
        """Per-edge quadrature with trace (Lagrange) weights on the DOFs."""
        if hasattr(self, "_bnd"):
            return self._bnd
        k = self.k
        nodes = edge_nodes(k)
        out = []
        for i in range(self.n_vert):
            p0 = self.geom.vertices[i]
            p1 = self.geom.vertices[(i + 1) % self.n_vert]
            rule = edge_rule(p0, p1, 2 * k + 2)
            length = np.linalg.norm(p1 - p0)
            # map quad points back to the reference parameter in [-1, 1]
            s = np.dot(rule.points - p0, (p1 - p0)) / length ** 2
            L = lagrange_values(nodes, 2.0 * s - 1.0)
            out.append((rule, L, self.geom.edge_normals[i]))
        self._bnd = out
        return out

    # -- projectors -------------------------------------------------------

    def _build_projectors(self):
        k = self.k
        geom = self.geom
        nk = self.basis.dim
        nd = self.n_dofs
        area = geom.area

        # D: DOFs of each monomial
        D = np.empty((nd, nk))
        D[:self.n_vert + self.n_vert * (k - 1), :] = self.basis.evaluate(self.dof_coords())
        if self.n_moments:
            D[-self.n_moments:, :] = self.H[:self.n_moments, :] / area
        self.D = D

        # B: right-hand sides of the H1 projection system,
        # integral of grad m . grad z = -integral of (Lap m) z + boundary term
        B = np.zeros((nk, nd))
        L = self.basis.laplacian_table()
        if self.n_moments:
            B[:, -self.n_moments:] -= area * L[:self.n_moments, :].T
        for i, (rule, Lag, normal) in enumerate(self._boundary_tables()):
            dn = self.basis.evaluate_gradient(rule.points) @ normal
            contrib = (dn * rule.weights[:, None]).T @ Lag
            for a, dof in enumerate(self.edge_dof_ids[i]):
                B[:, dof] += contrib[:, a]

        G = self.Gt.copy()
        if k == 1:
            per = sum(geom.edge_lengths)
            row_c = np.zeros(nk)
            row_d = np.zeros(nd)
            for i, (rule, Lag, _) in enumerate(self._boundary_tables()):
                row_c += rule.weights @ self.basis.evaluate(rule.points)
                ids = self.edge_dof_ids[i]
                w = rule.weights @ Lag
                for a, dof in enumerate(ids):
                    row_d[dof] += w[a]
            G[0, :] = row_c / per
            B[0, :] = row_d / per
        else:
            G[0, :] = self.H[0, :] / area
            B[0, :] = 0.0
            B[0, nd - self.n_moments] = 1.0
        self.PiNs = np.linalg.solve(G, B)
        self.PiNdof = D @ self.PiNs

        # L2 projection to order k via the enhancement identity
        nkm2 = self.n_moments
        C = np.empty((nk, nd))
        if nkm2:
            C[:nkm2, :] = 0.0
            C[np.arange(nkm2), nd - nkm2 + np.arange(nkm2)] = area
        C[nkm2:, :] = self.H[nkm2:, :] @ self.PiNs
        self.Pi0s = np.linalg.solve(self.H, C)
        self.Pi0dof = D @ self.Pi0s
        nk1 = self.basis_km1.dim
        self.Pi0s_km1 = np.linalg.solve(self.Hkm1, C[:nk1, :])

        # projected gradient: coefficients of the L2 projection of grad z
        Dx, Dy = self.basis_km1.grad_tables()
        rx = np.zeros((nk1, nd))
        ry = np.zeros((nk1, nd))
        if nkm2:
            rx[:, -nkm2:] -= area * Dx[:nkm2, :].T
            ry[:, -nkm2:] -= area * Dy[:nkm2, :].T
        for i, (rule, Lag, normal) in enumerate(self._boundary_tables()):
            mv = self.basis_km1.evaluate(rule.points)
            wx = (mv * (rule.weights * normal[0])[:, None]).T @ Lag
            wy = (mv * (rule.weights * normal[1])[:, None]).T @ Lag
            ids = self.edge_dof_ids[i]
            for a, dof in enumerate(ids):
                rx[:, dof] += wx[:, a]
                ry[:, dof] += wy[:, a]
        self.Gx = np.linalg.solve(self.Hkm1, rx)
        self.Gy = np.linalg.solve(self.Hkm1, ry)

    # -- interpolation ----------------------------------------------------

    def dof_vector(self, f):
        """Canonical interpolation DOFs of a pointwise-evaluable function."""
        out = np.empty(self.n_dofs)
        pts = self.dof_coords()
        out[:len(pts)] = f(pts)
        if self.n_moments:
            rule = polygon_rule(self.geom, 2 * self.k + 2)
            vals = f(rule.points)
            mono = self.basis.evaluate(rule.points)[:, :self.n_moments]
            out[-self.n_moments:] = (rule.weights * vals) @ mono / self.geom.area
        return out

    def poly_dofs(self, coeffs):
        """DOF vector of the polynomial with the given order k coefficients."""
        return self.D @ np.asarray(coeffs, float)

    # -- forms ------------------------------------------------------------

    def stabilizer_a(self):
        Q = np.eye(self.n_dofs) - self.PiNdof
        return Q.T @ Q

    def stabilizer_m(self):
        Q = np.eye(self.n_dofs) - self.Pi0dof
        return self.geom.area * (Q.T @ Q)

    def diffusion_matrix(self, lam=1.0):
        A = self.PiNs.T @ self.Gt @ self.PiNs + self.stabilizer_a()
        return lam * (0.5 * (A + A.T))

    def mass_matrix(self):
        M = self.Pi0s.T @ self.H @ self.Pi0s + self.stabilizer_m()
        return 0.5 * (M + M.T)

    # trilinear tensors on monomials, cached per element

    def tensor_km1(self):
        """T[a, b, c] = integral of m_a m_b m_c over the order k-1 basis."""
        if self._T_km1 is None:
            rule = polygon_rule(self.geom, 3 * (self.k - 1))
            v = self.basis_km1.evaluate(rule.points)
            self._T_km1 = np.einsum("q,qa,qb,qc->abc", rule.weights, v, v, v)
        return self._T_km1

    def tensor_mix(self):
        """T[a, b, c] with a, b order k and c order k-1 monomials."""
        if self._T_mix is None:
            rule = polygon_rule(self.geom, 3 * self.k)
            vk = self.basis.evaluate(rule.points)
            vk1 = self.basis_km1.evaluate(rule.points)
            self._T_mix = np.einsum("q,qa,qb,qc->abc", rule.weights, vk, vk, vk1)
        return self._T_mix

    def form_C_matrix(self, xi_dofs):
        """Matrix of the drift form with the scalar slot frozen at xi.

        Value convention: C(xi; rho, zeta) = rho^T M zeta; M is symmetric.
        """
        xi_hat = self.Pi0s_km1 @ xi_dofs
        W = np.einsum("a,abc->bc", xi_hat, self.tensor_km1())
        M = self.Gx.T @ W @ self.Gx + self.Gy.T @ W @ self.Gy
        return 0.5 * (M + M.T)

    def form_D_matrix(self, u_coeffs):
        """Matrix of the skew transport form with velocity coefficients frozen.

        ``u_coeffs`` is (2, n_k): the L2-projected velocity polynomial.
        Value convention: D(u; rho, zeta) = rho^T M zeta with M skew.
        """
        T = self.tensor_mix()
        Wx = np.einsum("a,abc->bc", u_coeffs[0], T)
        Wy = np.einsum("a,abc->bc", u_coeffs[1], T)
        M1 = self.Pi0s.T @ (Wx @ self.Gx + Wy @ self.Gy)
        return 0.5 * (M1 - M1.T)

    def local_form_C(self, xi_dofs, rho_dofs, zeta_dofs):
        return float(rho_dofs @ self.form_C_matrix(xi_dofs) @ zeta_dofs)

    def local_form_D(self, u_coeffs, rho_dofs, zeta_dofs):
        return float(rho_dofs @ self.form_D_matrix(u_coeffs) @ zeta_dofs)
