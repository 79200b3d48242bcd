import numpy as np
import pytest

from pnpvem.mesh import ElementGeometry, generate_hex_mesh
from pnpvem.polyspace import n_poly
from pnpvem.quadrature import polygon_rule
from pnpvem.scalar_space import ScalarElementSpace
from pnpvem.vector_space import VectorElementSpace, PressureElementSpace


def square_geom():
    return ElementGeometry([[0, 0], [1, 0], [1, 1], [0, 1]])


def hex_geom():
    m = generate_hex_mesh(4)
    for ci in range(m.n_cells):
        if len(m.cells[ci]) == 6:
            return m.geometry(ci)
    raise AssertionError


@pytest.mark.parametrize("k", [2, 3])
def test_dof_count(k):
    sp = VectorElementSpace(square_geom(), k)
    expected = 2 * 4 + 2 * (k - 1) * 4 + n_poly(k - 3) + n_poly(k - 1) - 1
    assert sp.n_dofs == expected
    if k == 2:
        assert sp.n_dofs == 4 * 4 + 2


def test_invalid_order():
    with pytest.raises(ValueError):
        VectorElementSpace(square_geom(), 1)


@pytest.mark.parametrize("geom_fn", [square_geom, hex_geom])
@pytest.mark.parametrize("k", [2, 3])
def test_projectors_reproduce_vector_polynomials(geom_fn, k):
    sp = VectorElementSpace(geom_fn(), k)
    n2 = 2 * sp.basis.dim
    for j in range(n2):
        c = np.eye(n2)[j]
        dofs = sp.poly_dofs(c)
        assert np.allclose(sp.PiNs @ dofs, c, atol=1e-12), f"PiN fails col {j}"
        assert np.allclose(sp.Pi0s @ dofs, c, atol=1e-12), f"Pi0 fails col {j}"


def test_constant_field():
    sp = VectorElementSpace(hex_geom(), 2)
    nk = sp.basis.dim
    c = np.zeros(2 * nk)
    c[0] = 1.0          # v = (1, 0)
    dofs = sp.poly_dofs(c)
    assert np.allclose(sp.div_coeff @ dofs, 0.0, atol=1e-12)
    assert np.allclose(sp.PiNs @ dofs, c, atol=1e-12)


def test_linear_field_divergence():
    geom = hex_geom()
    sp = VectorElementSpace(geom, 2)
    nk = sp.basis.dim
    c = np.zeros(2 * nk)
    c[1] = 1.0          # v_x = (x - x_E)/h
    c[nk + 2] = 1.0     # v_y = (y - y_E)/h
    dofs = sp.poly_dofs(c)
    d = sp.div_coeff @ dofs
    assert d[0] == pytest.approx(2.0 / geom.diameter, rel=1e-12)
    assert np.allclose(d[1:], 0.0, atol=1e-12)


def test_divergence_from_boundary_and_moments_only():
    """The divergence map must not touch the perp-moment DOF slots."""
    sp = VectorElementSpace(hex_geom(), 3)
    cols = sp.div_coeff[:, sp.n_point:sp.n_point + sp.n_perp]
    assert np.allclose(cols, 0.0, atol=1e-14)


def test_componentwise_moments_on_polynomials():
    geom = hex_geom()
    sp = VectorElementSpace(geom, 2)
    nk = sp.basis.dim
    rng = np.random.default_rng(2)
    c = rng.standard_normal(2 * nk)
    dofs = sp.poly_dofs(c)
    rule = polygon_rule(geom, 2 * sp.k)
    vals = sp.basis.evaluate(rule.points)
    vx = vals @ c[:nk]
    vy = vals @ c[nk:]
    m0 = np.dot(rule.weights, vx)
    assert (sp.mom @ dofs)[0] == pytest.approx(m0, rel=1e-12)
    assert (sp.mom @ dofs)[sp.basis_km2.dim] == pytest.approx(
        np.dot(rule.weights, vy), rel=1e-12)


def test_matrix_gradient_on_polynomials():
    geom = hex_geom()
    sp = VectorElementSpace(geom, 2)
    nk = sp.basis.dim
    Dx, Dy = sp.basis.grad_tables()
    for j in range(nk):
        c = np.zeros(2 * nk)
        c[j] = 1.0
        dofs = sp.poly_dofs(c)
        assert np.allclose(sp.Gv["xx"] @ dofs, Dx[:, j], atol=1e-11)
        assert np.allclose(sp.Gv["xy"] @ dofs, Dy[:, j], atol=1e-11)
        assert np.allclose(sp.Gv["yx"] @ dofs, 0.0, atol=1e-11)
        assert np.allclose(sp.Gv["yy"] @ dofs, 0.0, atol=1e-11)


def test_stiffness_kernel_and_consistency():
    geom = hex_geom()
    sp = VectorElementSpace(geom, 2)
    K = sp.stiffness_matrix()
    nk = sp.basis.dim
    for j in (0, nk):   # both constant fields
        c = np.zeros(2 * nk)
        c[j] = 1.0
        assert np.allclose(K @ sp.poly_dofs(c), 0.0, atol=1e-11)
    # k-consistency: K(q, z) equals the continuous pairing for polynomial q
    rng = np.random.default_rng(3)
    z = rng.standard_normal(sp.n_dofs)
    zc = sp.PiNs @ z
    rule = polygon_rule(geom, 2 * sp.k)
    g = sp.basis.evaluate_gradient(rule.points)
    for j in range(2 * nk):
        q = np.eye(2 * nk)[j]
        qd = sp.poly_dofs(q)
        gq = np.concatenate([np.einsum("qjd,j->qd", g, q[:nk]),
                             np.einsum("qjd,j->qd", g, q[nk:])], axis=1)
        gz = np.concatenate([np.einsum("qjd,j->qd", g, zc[:nk]),
                             np.einsum("qjd,j->qd", g, zc[nk:])], axis=1)
        oracle = np.einsum("q,qd,qd->", rule.weights, gq, gz)
        scale = max(1.0, abs(oracle))
        assert qd @ K @ z == pytest.approx(oracle, abs=1e-11 * scale)


def test_mass_matrix_consistency_and_value():
    geom = square_geom()
    sp = VectorElementSpace(geom, 2)
    M = sp.mass_matrix()
    nk = sp.basis.dim
    c = np.zeros(2 * nk)
    c[0] = 1.0
    c[nk] = 1.0         # v = (1, 1)
    dofs = sp.poly_dofs(c)
    assert dofs @ M @ dofs == pytest.approx(2.0 * geom.area, rel=1e-12)
    ev = np.linalg.eigvalsh(M)
    assert ev.min() > 0


def test_divergence_matrix_oracle():
    geom = hex_geom()
    sp = VectorElementSpace(geom, 2)
    rng = np.random.default_rng(4)
    nk = sp.basis.dim
    c = rng.standard_normal(2 * nk)
    dofs = sp.poly_dofs(c)
    rule = polygon_rule(geom, 2 * sp.k)
    g = sp.basis.evaluate_gradient(rule.points)
    divv = np.einsum("qj,j->q", g[:, :, 0], c[:nk]) \
        + np.einsum("qj,j->q", g[:, :, 1], c[nk:])
    mk1 = sp.basis_km1.evaluate(rule.points)
    oracle = (rule.weights * divv) @ mk1
    assert np.allclose(sp.divergence_matrix() @ dofs, oracle, atol=1e-12)


def test_pressure_coupling_simple():
    geom = square_geom()
    sp = VectorElementSpace(geom, 2)
    nk = sp.basis.dim
    c = np.zeros(2 * nk)
    c[1] = 1.0          # v = ((x - x_E)/h, 0)
    dofs = sp.poly_dofs(c)
    B = sp.divergence_matrix()
    assert B[0, :] @ dofs == pytest.approx(geom.area / geom.diameter, rel=1e-12)


def test_form_E_skew():
    sp = VectorElementSpace(hex_geom(), 2)
    rng = np.random.default_rng(5)
    u = rng.standard_normal((2, sp.basis.dim))
    for _ in range(20):
        v = rng.standard_normal(sp.n_dofs)
        scale = max(1.0, np.abs(u).max() * np.abs(v).max() ** 2)
        assert abs(sp.local_form_E(u, v, v)) <= 1e-13 * scale


def test_form_E_zero_cases():
    sp = VectorElementSpace(hex_geom(), 2)
    rng = np.random.default_rng(6)
    w = rng.standard_normal(sp.n_dofs)
    v = rng.standard_normal(sp.n_dofs)
    assert sp.local_form_E(np.zeros((2, sp.basis.dim)), w, v) == 0.0
    # constant w: only the antisymmetrizing term survives
    nk = sp.basis.dim
    cw = np.zeros(2 * nk)
    cw[0] = 1.0
    cw[nk] = -2.0
    u = rng.standard_normal((2, nk))
    cv = rng.standard_normal(2 * nk)
    geom = sp.geom
    rule = polygon_rule(geom, 3 * sp.k)
    vals = sp.basis.evaluate(rule.points)
    g = sp.basis.evaluate_gradient(rule.points)
    uq = vals @ u.T
    gv = np.stack([np.einsum("qjd,j->qd", g, cv[:nk]),
                   np.einsum("qjd,j->qd", g, cv[nk:])], axis=1)
    wq = np.stack([vals @ cw[:nk], vals @ cw[nk:]], axis=1)
    oracle = -0.5 * np.einsum("q,qe,qde,qd->", rule.weights, uq, gv, wq)
    assert sp.local_form_E(u, sp.poly_dofs(cw), sp.poly_dofs(cv)) == \
        pytest.approx(oracle, rel=1e-11)


def test_form_E_oracle_on_polynomials():
    geom = hex_geom()
    sp = VectorElementSpace(geom, 2)
    rng = np.random.default_rng(7)
    nk = sp.basis.dim
    u = rng.standard_normal((2, nk))
    cw = rng.standard_normal(2 * nk)
    cv = rng.standard_normal(2 * nk)
    w = sp.poly_dofs(cw)
    v = sp.poly_dofs(cv)
    rule = polygon_rule(geom, 3 * sp.k + 2)
    vals = sp.basis.evaluate(rule.points)
    g = sp.basis.evaluate_gradient(rule.points)
    uq = vals @ u.T
    wq = np.stack([vals @ cw[:nk], vals @ cw[nk:]], axis=1)
    vq = np.stack([vals @ cv[:nk], vals @ cv[nk:]], axis=1)
    gw = np.stack([np.einsum("qjd,j->qd", g, cw[:nk]),
                   np.einsum("qjd,j->qd", g, cw[nk:])], axis=1)  # (q, d, e)
    gv = np.stack([np.einsum("qjd,j->qd", g, cv[:nk]),
                   np.einsum("qjd,j->qd", g, cv[nk:])], axis=1)
    t1 = np.einsum("q,qe,qde,qd->", rule.weights, uq, gw, vq)
    t2 = np.einsum("q,qe,qde,qd->", rule.weights, uq, gv, wq)
    oracle = 0.5 * (t1 - t2)
    assert sp.local_form_E(u, w, v) == pytest.approx(oracle, rel=1e-10)


def test_force_vector_cases():
    geom = square_geom()
    sp = VectorElementSpace(geom, 2)
    ssp = ScalarElementSpace(geom, 2)
    nk = sp.basis.dim
    # zero net charge
    f = sp.force_vector(np.zeros(nk), np.ones((2, sp.basis_km1.dim)))
    assert np.allclose(f, 0.0)
    # unit charge, phi = m_(1,0): grad = (1/h, 0); test against v = (1, 0)
    charge = np.zeros(nk)
    charge[0] = 1.0
    gphi = ssp.Gx @ ssp.poly_dofs(np.eye(6)[1]), ssp.Gy @ ssp.poly_dofs(np.eye(6)[1])
    f = sp.force_vector(charge, np.stack(gphi))
    cv = np.zeros(2 * nk)
    cv[0] = 1.0
    assert sp.poly_dofs(cv) @ f == pytest.approx(geom.area / geom.diameter, rel=1e-12)


def test_velocity_poly_roundtrip():
    sp = VectorElementSpace(hex_geom(), 2)
    rng = np.random.default_rng(8)
    c = rng.standard_normal((2, sp.basis.dim))
    dofs = sp.poly_dofs(c)
    assert np.allclose(sp.velocity_poly(dofs), c, atol=1e-11)


def test_dof_vector_matches_poly_dofs():
    geom = hex_geom()
    sp = VectorElementSpace(geom, 2)
    nk = sp.basis.dim
    rng = np.random.default_rng(9)
    c = rng.standard_normal(2 * nk)

    def f(p):
        vals = sp.basis.evaluate(p)
        return np.stack([vals @ c[:nk], vals @ c[nk:]], axis=1)

    def divf(p):
        g = sp.basis.evaluate_gradient(p)
        return np.einsum("qj,j->q", g[:, :, 0], c[:nk]) \
            + np.einsum("qj,j->q", g[:, :, 1], c[nk:])

    assert np.allclose(sp.dof_vector(f, divf), sp.poly_dofs(c), atol=1e-12)


def test_pressure_space():
    p = PressureElementSpace(square_geom(), 2)
    assert p.dim == 3
    assert p.H[0, 0] == pytest.approx(1.0, rel=1e-13)
