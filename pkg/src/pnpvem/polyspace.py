"""Scaled monomial bases on polygonal elements and their polynomial calculus."""

import numpy as np

from .quadrature import polygon_rule

__all__ = ["n_poly", "monomial_exponents", "ScaledMonomialBasis",
           "decompose_Gk_perp"]


def n_poly(r):
    """Dimension of the polynomial space of total degree <= r in 2D."""
    return (r + 1) * (r + 2) // 2 if r >= 0 else 0


def monomial_exponents(r):
    """Exponent pairs in graded-lex order: 1, X, Y, X^2, XY, Y^2, ..."""
    out = []
    for d in range(r + 1):
        for b in range(d + 1):
            out.append((d - b, b))
    return out


class ScaledMonomialBasis:
    """Monomials ((x - x_E)/h_E)^s, |s| <= r, in graded-lex order.

    Products and derivatives of basis members stay inside higher/lower order
    bases on the same element, which the coefficient tables below exploit.
    """

    def __init__(self, geom, order):
        if order < 0:
            raise ValueError("order must be nonnegative")
        self.geom = geom
        self.order = int(order)
        self.exponents = monomial_exponents(self.order)
        self.dim = len(self.exponents)
        self._index = {s: i for i, s in enumerate(self.exponents)}
        self._H = None

    def index(self, s):
        return self._index[s]

    def evaluate(self, points):
        """Basis values at points; shape (npts, dim)."""
        pts = np.atleast_2d(np.asarray(points, float))
        xi = (pts[:, 0] - self.geom.centroid[0]) / self.geom.diameter
        eta = (pts[:, 1] - self.geom.centroid[1]) / self.geom.diameter
        xp = np.vander(xi, self.order + 1, increasing=True)
        yp = np.vander(eta, self.order + 1, increasing=True)
        out = np.empty((len(pts), self.dim))
        for j, (a, b) in enumerate(self.exponents):
            out[:, j] = xp[:, a] * yp[:, b]
        return out

    def evaluate_gradient(self, points):
        """Gradients at points; shape (npts, dim, 2)."""
        pts = np.atleast_2d(np.asarray(points, float))
        h = self.geom.diameter
        xi = (pts[:, 0] - self.geom.centroid[0]) / h
        eta = (pts[:, 1] - self.geom.centroid[1]) / h
        xp = np.vander(xi, self.order + 1, increasing=True)
        yp = np.vander(eta, self.order + 1, increasing=True)
        out = np.zeros((len(pts), self.dim, 2))
        for j, (a, b) in enumerate(self.exponents):
            if a > 0:
                out[:, j, 0] = a * xp[:, a - 1] * yp[:, b] / h
            if b > 0:
                out[:, j, 1] = b * xp[:, a] * yp[:, b - 1] / h
        return out

    def mass_matrix(self, extra_degree=0):
        """Gram matrix H_ij = integral of m_i m_j over the element."""
        if self._H is None or extra_degree > 0:
            rule = polygon_rule(self.geom, 2 * self.order + extra_degree)
            vals = self.evaluate(rule.points)
            H = (vals * rule.weights[:, None]).T @ vals
            H = 0.5 * (H + H.T)
            if extra_degree > 0:
                return H
            self._H = H
        return self._H

    def grad_tables(self):
        """Coefficient matrices Dx, Dy of shape (n_{r-1}, dim).

        Column j holds the order r-1 coefficients of the x (resp. y)
        derivative of m_j.
        """
        nm1 = n_poly(self.order - 1)
        Dx = np.zeros((nm1, self.dim))
        Dy = np.zeros((nm1, self.dim))
        h = self.geom.diameter
        for j, (a, b) in enumerate(self.exponents):
            if a > 0:
                Dx[self._index[(a - 1, b)], j] = a / h
            if b > 0:
                Dy[self._index[(a, b - 1)], j] = b / h
        return Dx, Dy

    def laplacian_table(self):
        """Coefficients (n_{r-2}, dim) of the Laplacian of each basis member."""
        nm2 = n_poly(self.order - 2)
        L = np.zeros((nm2, self.dim))
        h2 = self.geom.diameter ** 2
        for j, (a, b) in enumerate(self.exponents):
            if a > 1:
                L[self._index[(a - 2, b)], j] += a * (a - 1) / h2
            if b > 1:
                L[self._index[(a, b - 2)], j] += b * (b - 1) / h2
        return L

    def stiffness_matrix(self):
        """G_ij = integral of grad m_i . grad m_j, exact via gradient tables."""
        if self.order == 0:
            return np.zeros((1, 1))
        Dx, Dy = self.grad_tables()
        nm1 = n_poly(self.order - 1)
        Hm1 = self.mass_matrix()[:nm1, :nm1]
        G = Dx.T @ Hm1 @ Dx + Dy.T @ Hm1 @ Dy
        return 0.5 * (G + G.T)

    def shift_up(self, coeffs, target_order):
        """Re-express order ``self.order`` coefficients in a larger basis."""
        nt = n_poly(target_order)
        if nt < self.dim:
            raise ValueError("target order too small")
        out = np.zeros(nt) if np.ndim(coeffs) == 1 else np.zeros((nt,) + np.shape(coeffs)[1:])
        out[:self.dim] = coeffs
        return out


def _perp_columns(basis_k, exps_km1):
    """Columns of xhat-perp times m_beta in the componentwise order k basis.

    xhat = (x - x_E)/h_E, xhat-perp = (xhat_2, -xhat_1); each product is again
    a scaled monomial since the scaling centers coincide.
    """
    nk = basis_k.dim
    cols = np.zeros((2 * nk, len(exps_km1)))
    for j, (a, b) in enumerate(exps_km1):
        cols[basis_k.index((a, b + 1)), j] = 1.0
        cols[nk + basis_k.index((a + 1, b)), j] = -1.0
    return cols


def decompose_Gk_perp(basis_k):
    """Split [P_k]^2 into gradients of P_{k+1} and the perp complement.

    Returns (T_grad, T_perp, T): componentwise order k coefficient columns for
    the gradient part (from nonconstant order k+1 monomials) and the perp part
    (xhat-perp times order k-1 monomials), plus their concatenation T of shape
    (2 n_k, 2 n_k), which is full rank.
    """
    k = basis_k.order
    if k < 1:
        raise ValueError("decomposition needs order >= 1")
    geom = basis_k.geom
    basis_kp1 = ScaledMonomialBasis(geom, k + 1)
    Dx, Dy = basis_kp1.grad_tables()
    nk = basis_k.dim
    # drop the constant (zero-gradient) column
    T_grad = np.vstack([Dx[:, 1:], Dy[:, 1:]])
    T_perp = _perp_columns(basis_k, monomial_exponents(k - 1))
    T = np.hstack([T_grad, T_perp])
    if T.shape != (2 * nk, 2 * nk):
        raise RuntimeError("decomposition dimension mismatch")
    if np.linalg.matrix_rank(T) != 2 * nk:
        raise RuntimeError("gradient/perp decomposition is rank deficient")
    return T_grad, T_perp, T
