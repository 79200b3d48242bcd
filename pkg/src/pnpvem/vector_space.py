"""Divergence-preserving vector virtual element space of order k >= 2.

DOFs per element (in this order):
  - vertex values, interleaved (x, y);
  - k-1 Gauss-Lobatto interior points per edge, interleaved (x, y);
  - moments against the perp fields xhat-perp m_beta, |beta| <= k-3;
  - divergence moments (h_E/|E|) int (div v) m_alpha, 1 <= |alpha| <= k-1.

The divergence polynomial of a member is exactly recoverable from boundary
values plus the divergence moments, so the discrete pressure coupling needs no
projection. Componentwise moments up to degree k-2 are reconstructed through
the split [P_{k-2}]^2 = grad P_{k-1} + perp complement, and the enhanced-space
identity supplies the higher perp moments for the full-order L2 projection.
"""

import numpy as np

from .polyspace import ScaledMonomialBasis, monomial_exponents, n_poly
from .quadrature import polygon_rule, edge_rule, edge_nodes, lagrange_values

__all__ = ["VectorElementSpace", "PressureElementSpace"]


def _decompose(geom, r):
    """Columns of the grad/perp split of [P_r]^2 in componentwise coeffs.

    Returns (T, n_grad): T has first n_grad columns spanning grad P_{r+1}
    (non-constant monomials in graded-lex order) and then the perp columns
    xhat-perp m_beta, beta over monomial_exponents(r-1).
    """
    basis_r = ScaledMonomialBasis(geom, r)
    basis_rp1 = ScaledMonomialBasis(geom, r + 1)
    Dx, Dy = basis_rp1.grad_tables()
    T_grad = np.vstack([Dx[:, 1:], Dy[:, 1:]])
    nr = basis_r.dim
    perp_exps = monomial_exponents(r - 1)
    T_perp = np.zeros((2 * nr, len(perp_exps)))
    for j, (a, b) in enumerate(perp_exps):
        T_perp[basis_r.index((a, b + 1)), j] = 1.0
        T_perp[nr + basis_r.index((a + 1, b)), j] = -1.0
    T = np.hstack([T_grad, T_perp])
    return T, T_grad.shape[1]


class PressureElementSpace:
    """Discontinuous polynomial pressures of order k-1 in scaled monomials."""

    def __init__(self, geom, k):
        self.geom = geom
        self.basis = ScaledMonomialBasis(geom, k - 1)
        self.dim = self.basis.dim
        self.H = self.basis.mass_matrix()


class VectorElementSpace:

    def __init__(self, geom, k=2):
        if k < 2 or k > 3:
            raise ValueError("vector order k must be 2 or 3")
        self.geom = geom
        self.k = k
        self.n_vert = geom.n_vertices
        self.n_perp = n_poly(k - 3)
        self.n_div = n_poly(k - 1) - 1
        self.n_point = 2 * self.n_vert * k          # vertices + (k-1) per edge
        self.n_dofs = self.n_point + self.n_perp + self.n_div
        self.basis = ScaledMonomialBasis(geom, k)
        self.basis_km1 = ScaledMonomialBasis(geom, k - 1)
        self.basis_km2 = ScaledMonomialBasis(geom, k - 2)
        self.basis_kp1 = ScaledMonomialBasis(geom, k + 1)
        self.H = self.basis.mass_matrix()
        nk1 = self.basis_km1.dim
        self.Hkm1 = self.H[:nk1, :nk1]
        self.Hkp1 = self.basis_kp1.mass_matrix()
        self.Gt = self.basis.stiffness_matrix()
        self._edge_layout()
        self._build()
        self._T_mix = None

    # -- layout -----------------------------------------------------------

    def _edge_layout(self):
        k = self.k
        geom = self.geom
        nv = self.n_vert
        nodes = edge_nodes(k)
        self.edge_points = []
        self.edge_dof_ids = []          # per edge: [(x_id, y_id), ...] trace nodes
        for i in range(nv):
            p0, p1 = geom.vertices[i], geom.vertices[(i + 1) % nv]
            t = 0.5 * (np.array(nodes[1:-1]) + 1.0)
            self.edge_points.append(p0 + t[:, None] * (p1 - p0))
            ids = [(2 * i, 2 * i + 1)]
            base = 2 * nv + 2 * i * (k - 1)
            ids += [(base + 2 * a, base + 2 * a + 1) for a in range(k - 1)]
            j = (i + 1) % nv
            ids.append((2 * j, 2 * j + 1))
            self.edge_dof_ids.append(ids)

    def point_coords(self):
        return np.vstack([self.geom.vertices] + list(self.edge_points))

    def _boundary_tables(self):
        if hasattr(self, "_bnd"):
            return self._bnd
        k = self.k
        nodes = edge_nodes(k)
        out = []
        for i in range(self.n_vert):
            p0 = self.geom.vertices[i]
            p1 = self.geom.vertices[(i + 1) % self.n_vert]
            rule = edge_rule(p0, p1, 2 * k + 3)
            length = np.linalg.norm(p1 - p0)
            s = np.dot(rule.points - p0, (p1 - p0)) / length ** 2
            L = lagrange_values(nodes, 2.0 * s - 1.0)
            out.append((rule, L, self.geom.edge_normals[i]))
        self._bnd = out
        return out

    def _boundary_accumulate(self, fvals_per_edge):
        """Sum over edges of int_e f_row(x) v_d(x) ds as a (nrows, Nd) matrix.

        ``fvals_per_edge[i]`` is a pair (fx, fy) of (nrows, npts) arrays that
        multiply the x and y trace of v on edge i.
        """
        nrows = fvals_per_edge[0][0].shape[0]
        out = np.zeros((nrows, self.n_dofs))
        for i, (rule, Lag, _) in enumerate(self._boundary_tables()):
            fx, fy = fvals_per_edge[i]
            cx = (fx * rule.weights) @ Lag
            cy = (fy * rule.weights) @ Lag
            for a, (ix, iy) in enumerate(self.edge_dof_ids[i]):
                out[:, ix] += cx[:, a]
                out[:, iy] += cy[:, a]
        return out

    # -- construction -----------------------------------------------------

    def _build(self):
        k = self.k
        geom = self.geom
        area = geom.area
        h = geom.diameter
        nk = self.basis.dim
        nk1 = self.basis_km1.dim
        nk2 = self.basis_km2.dim
        nd = self.n_dofs
        bnd = self._boundary_tables()

        # divergence polynomial: H_{k-1} c = [boundary flux | scaled moments]
        b_div = np.zeros((nk1, nd))
        flux_rows = []
        for rule, Lag, normal in bnd:
            mv = self.basis_km1.evaluate(rule.points).T      # (nk1, npts)
            flux_rows.append((mv * normal[0], mv * normal[1]))
        bnd_flux = self._boundary_accumulate(flux_rows)
        b_div[0, :] = bnd_flux[0, :]
        for a in range(1, nk1):
            b_div[a, self.n_point + self.n_perp + a - 1] = area / h
        self.div_coeff = np.linalg.solve(self.Hkm1, b_div)
        self.div_moments = self.Hkm1 @ self.div_coeff        # rows: int (div v) m_a

        # componentwise moments up to k-2 via the grad/perp split at order k-2
        T2, n_grad2 = _decompose(geom, k - 2)
        C2 = np.zeros((2 * nk2, nd))
        grad_exp_rows = list(range(1, n_grad2 + 1))          # monomials of order k-1
        # int v . grad m_p = -int (div v) m_p + bnd (v.n) m_p
        C2[:n_grad2, :] = -self.div_moments[grad_exp_rows, :] + bnd_flux[grad_exp_rows, :]
        for j in range(self.n_perp):
            C2[n_grad2 + j, self.n_point + j] = area
        self.mom = np.linalg.solve(T2.T, C2)                 # rows: x moments, y moments

        # DOFs of each vector monomial (x block then y block of 2*nk)
        D = np.zeros((nd, 2 * nk))
        vals = self.basis.evaluate(self.point_coords())
        npts = vals.shape[0]
        xs = 2 * np.arange(npts)
        D[xs, :nk] = vals
        D[xs + 1, nk:] = vals
        perp_exps = monomial_exponents(k - 3)
        for j, (a, b) in enumerate(perp_exps):
            row = self.n_point + j
            D[row, :nk] = self.H[self.basis.index((a, b + 1)), :] / area
            D[row, nk:] = -self.H[self.basis.index((a + 1, b)), :] / area
        Dxk, Dyk = self.basis.grad_tables()
        for a in range(1, nk1):
            row = self.n_point + self.n_perp + a - 1
            D[row, :nk] = h / area * (self.Hkm1[a, :] @ Dxk)
            D[row, nk:] = h / area * (self.Hkm1[a, :] @ Dyk)
        self.D = D

        # H1 projection, componentwise right-hand side
        B = np.zeros((2 * nk, nd))
        L = self.basis.laplacian_table()                     # (nk2, nk)
        B[:nk, :] -= L.T @ self.mom[:nk2, :]
        B[nk:, :] -= L.T @ self.mom[nk2:, :]
        rows_x = []
        rows_y = []
        for rule, Lag, normal in bnd:
            dn = (self.basis.evaluate_gradient(rule.points) @ normal).T  # (nk, npts)
            zero = np.zeros_like(dn)
            rows_x.append((dn, zero))
            rows_y.append((zero, dn))
        B[:nk, :] += self._boundary_accumulate(rows_x)
        B[nk:, :] += self._boundary_accumulate(rows_y)
        G = np.zeros((2 * nk, 2 * nk))
        G[:nk, :nk] = self.Gt
        G[nk:, nk:] = self.Gt
        G[0, :nk] = self.H[0, :] / area
        G[nk, nk:] = self.H[0, :] / area
        B[0, :] = self.mom[0, :] / area
        B[nk, :] = self.mom[nk2, :] / area
        self.PiNs = np.linalg.solve(G, B)
        self.PiNdof = D @ self.PiNs

        # L2 projection at order k via the split of [P_k]^2
        Tk, n_gradk = _decompose(geom, k)
        Ck = np.zeros((2 * nk, nd))
        # gradient part: p runs over non-constant monomials of order k+1
        cross = self.Hkp1[:nk1, 1:n_gradk + 1]               # int m_a^{k-1} m_p^{k+1}
        div_term = self.div_coeff.T @ cross                  # (nd, n_gradk)
        rows_p = []
        for rule, Lag, normal in bnd:
            pv = self.basis_kp1.evaluate(rule.points)[:, 1:n_gradk + 1].T
            rows_p.append((pv * normal[0], pv * normal[1]))
        Ck[:n_gradk, :] = -div_term.T + self._boundary_accumulate(rows_p)
        # perp part: low moments from DOFs, high ones from the enhancement
        perp_all = monomial_exponents(k - 1)
        for j, (a, b) in enumerate(perp_all):
            row = n_gradk + j
            if j < self.n_perp:
                Ck[row, self.n_point + j] = area
            else:
                pair = np.zeros(2 * nk)
                pair[:nk] = self.H[self.basis.index((a, b + 1)), :]
                pair[nk:] = -self.H[self.basis.index((a + 1, b)), :]
                Ck[row, :] = pair @ self.PiNs
        b_mono = np.linalg.solve(Tk.T, Ck)
        self.Pi0s = np.empty((2 * nk, nd))
        self.Pi0s[:nk, :] = np.linalg.solve(self.H, b_mono[:nk, :])
        self.Pi0s[nk:, :] = np.linalg.solve(self.H, b_mono[nk:, :])
        self.Pi0dof = D @ self.Pi0s

        # matrix-valued projected gradient: Pi0_{k-1} of each d v_d / d x_e
        Dx1, Dy1 = self.basis_km1.grad_tables()              # (nk2, nk1)
        self.Gv = {}
        for d, mom_d in (("x", self.mom[:nk2, :]), ("y", self.mom[nk2:, :])):
            for e, Dtab, comp in (("x", Dx1, 0), ("y", Dy1, 1)):
                rhs = -Dtab.T @ mom_d
                rows = []
                for rule, Lag, normal in bnd:
                    mv = self.basis_km1.evaluate(rule.points).T * normal[comp]
                    zero = np.zeros_like(mv)
                    rows.append((mv, zero) if d == "x" else (zero, mv))
                rhs += self._boundary_accumulate(rows)
                self.Gv[d + e] = np.linalg.solve(self.Hkm1, rhs)

    # -- interpolation ----------------------------------------------------

    def poly_dofs(self, coeffs):
        """DOFs of the polynomial field with componentwise coefficients.

        ``coeffs`` is (2, n_k) or a flat length 2 n_k array (x block first).
        """
        c = np.asarray(coeffs, float).reshape(-1)
        return self.D @ c

    def dof_vector(self, f, divf=None):
        """Canonical interpolation DOFs of a vector field.

        ``f`` maps (npts, 2) points to (npts, 2) values; ``divf`` maps points
        to divergence values and is required whenever the element carries
        divergence or perp moments (it may be ``lambda p: 0`` for
        divergence-free fields).
        """
        out = np.zeros(self.n_dofs)
        pts = self.point_coords()
        vals = np.asarray(f(pts), float)
        out[0:self.n_point:2] = vals[:, 0]
        out[1:self.n_point:2] = vals[:, 1]
        if self.n_perp or self.n_div:
            rule = polygon_rule(self.geom, 2 * self.k + 2)
            fv = np.asarray(f(rule.points), float)
            if self.n_perp:
                mono = self.basis.evaluate(rule.points)
                for j, (a, b) in enumerate(monomial_exponents(self.k - 3)):
                    gx = mono[:, self.basis.index((a, b + 1))]
                    gy = -mono[:, self.basis.index((a + 1, b))]
                    out[self.n_point + j] = np.dot(
                        rule.weights, fv[:, 0] * gx + fv[:, 1] * gy) / self.geom.area
            if self.n_div:
                if divf is None:
                    raise ValueError("divergence callback required for these DOFs")
                dv = np.broadcast_to(np.asarray(divf(rule.points), float),
                                     rule.weights.shape)
                mk1 = self.basis_km1.evaluate(rule.points)
                base = self.n_point + self.n_perp
                for a in range(1, self.basis_km1.dim):
                    out[base + a - 1] = self.geom.diameter / self.geom.area * np.dot(
                        rule.weights * dv, mk1[:, a])
        return out

    # -- forms ------------------------------------------------------------

    def stiffness_matrix(self):
        Q = np.eye(self.n_dofs) - self.Pi0dof
        K = self.PiNs[:self.basis.dim].T @ self.Gt @ self.PiNs[:self.basis.dim] \
            + self.PiNs[self.basis.dim:].T @ self.Gt @ self.PiNs[self.basis.dim:] \
            + Q.T @ Q
        return 0.5 * (K + K.T)

    def mass_matrix(self):
        nk = self.basis.dim
        Q = np.eye(self.n_dofs) - self.Pi0dof
        M = self.Pi0s[:nk].T @ self.H @ self.Pi0s[:nk] \
            + self.Pi0s[nk:].T @ self.H @ self.Pi0s[nk:] \
            + self.geom.area * (Q.T @ Q)
        return 0.5 * (M + M.T)

    def divergence_matrix(self):
        """B[j, :] = int m_j^{k-1} div v, exact for every member."""
        return self.div_moments

    def tensor_mix(self):
        if self._T_mix is None:
            rule = polygon_rule(self.geom, 3 * self.k)
            vk = self.basis.evaluate(rule.points)
            vk1 = self.basis_km1.evaluate(rule.points)
            self._T_mix = np.einsum("q,qa,qb,qc->abc", rule.weights, vk, vk, vk1)
        return self._T_mix

    def form_E_matrix(self, u_coeffs):
        """Skew convection matrix with the transporting velocity frozen.

        ``u_coeffs`` is (2, n_k). Value convention: E(u; w, v) = w^T M v.
        """
        u = np.asarray(u_coeffs, float).reshape(2, -1)
        T = self.tensor_mix()
        Wx = np.einsum("a,abc->bc", u[0], T)
        Wy = np.einsum("a,abc->bc", u[1], T)
        nk = self.basis.dim
        M1 = self.Pi0s[:nk].T @ (Wx @ self.Gv["xx"] + Wy @ self.Gv["xy"]) \
            + self.Pi0s[nk:].T @ (Wx @ self.Gv["yx"] + Wy @ self.Gv["yy"])
        return 0.5 * (M1.T - M1)

    def local_form_E(self, u_coeffs, w_dofs, v_dofs):
        return float(w_dofs @ self.form_E_matrix(u_coeffs) @ v_dofs)

    def force_vector(self, charge_coeffs, gradphi_coeffs):
        """Load vector of (charge * grad phi, Pi0 v) with polynomial data.

        ``charge_coeffs``: order k coefficients of the projected net charge;
        ``gradphi_coeffs``: (2, n_{k-1}) coefficients of the projected
        potential gradient.
        """
        T = self.tensor_mix()
        q = np.asarray(charge_coeffs, float)
        g = np.asarray(gradphi_coeffs, float)
        nk = self.basis.dim
        rx = np.einsum("a,abc,c->b", q, T, g[0])
        ry = np.einsum("a,abc,c->b", q, T, g[1])
        return self.Pi0s[:nk].T @ rx + self.Pi0s[nk:].T @ ry

    def velocity_poly(self, u_dofs):
        """(2, n_k) coefficients of the L2-projected velocity."""
        return (self.Pi0s @ u_dofs).reshape(2, -1)
