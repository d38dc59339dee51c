import numpy as np
import pytest

from wgbakhvalov.assembly import assemble
from wgbakhvalov.analysis import project
from wgbakhvalov.fespace import (
    EDGE_NORMALS, WeakFunction, build_dof_map, element_edge_lengths, element_edge_points,
    reference_tables,
)
from wgbakhvalov.mesh import OMEGA_0, OMEGA_1, OMEGA_2, OMEGA_12, bakhvalov_tensor_mesh
from wgbakhvalov.problems import example_5_1, patch_problem
from wgbakhvalov.wgops import (
    diffusion_matrices, elements, local_load, local_mass, local_stabilizer_c,
    local_stabilizer_d, local_system, local_weak_convdiv, local_weak_gradient, penalty_weights,
    weak_convdiv_moments,
)

UNIT = elements(0.0, 1.0, 0.0, 1.0)


def const(v):
    return lambda x, y: np.full(np.broadcast(x, y).shape, float(v))


def b_x(x, y):
    return const(1.0)(x, y), const(0.0)(x, y)


def unit_local(k, interior=None, edges=None):
    t = reference_tables(k, 6)
    v = np.zeros(t.nloc)
    if interior is not None:
        v[: len(interior)] = interior
    for slot, coeffs in (edges or {}).items():
        v[t.edge_slice(slot)][: len(coeffs)] = coeffs
        v[t.n0 + slot * t.n: t.n0 + slot * t.n + len(coeffs)] = coeffs
    return v


# v = x on the unit element: interior 0.5 + 0.5 L1(xi); bottom/top edges 0.5 + 0.5 L1(s);
# right edge 1, left edge 0
X_LOCAL = unit_local(1, [0.5, 0.5, 0.0, 0.0], {0: [0.5, 0.5], 1: [1.0, 0.0], 2: [0.5, 0.5]})
ONE_ZERO = unit_local(1, [1.0, 0.0, 0.0, 0.0])


def test_weak_gradient_of_linear_function():
    Gx, Gy = local_weak_gradient(UNIT, 1)
    np.testing.assert_allclose(Gx[0] @ X_LOCAL, [1, 0, 0, 0], atol=1e-14)
    np.testing.assert_allclose(Gy[0] @ X_LOCAL, [0, 0, 0, 0], atol=1e-14)


def test_weak_gradient_of_zero():
    Gx, Gy = local_weak_gradient(UNIT, 2)
    assert np.all(Gx[0] @ np.zeros(Gx.shape[2]) == 0)


def test_weak_gradient_interior_one_boundary_zero():
    Gx, Gy = local_weak_gradient(UNIT, 1)
    # only nonzero moment: -(1, d/dx q) = -2 for q = 2x - 1, mass 1/3
    np.testing.assert_allclose(Gx[0] @ ONE_ZERO, [0, -6, 0, 0], atol=1e-13)
    np.testing.assert_allclose(Gy[0] @ ONE_ZERO, [0, 0, -6, 0], atol=1e-13)


def _brute_weak_gradient(k, x0, x1, y0, y1, v_of, vb_of, nq=12):
    """Solve the defining local system with independent quadrature (numpy leggauss)."""
    s, w = np.polynomial.legendre.leggauss(nq)
    hx, hy = x1 - x0, y1 - y0
    X = x0 + 0.5 * (s + 1) * hx
    Y = y0 + 0.5 * (s + 1) * hy
    n = k + 1
    Lx = [np.polynomial.legendre.Legendre.basis(i) for i in range(n)]

    def q(i, j, x, y):
        return Lx[i](2 * (x - x0) / hx - 1) * Lx[j](2 * (y - y0) / hy - 1)

    def dqdx(i, j, x, y):
        return Lx[i].deriv()(2 * (x - x0) / hx - 1) * 2 / hx * Lx[j](2 * (y - y0) / hy - 1)

    XX, YY = np.meshgrid(X, Y, indexing="xy")
    W = np.outer(w, w) * hx * hy / 4
    out = np.zeros(n * n)
    for j in range(n):
        for i in range(n):
            vol = -np.sum(W * v_of(XX, YY) * dqdx(i, j, XX, YY))
            edge = (np.sum(w * hy / 2 * vb_of(x1 + 0 * Y, Y) * q(i, j, x1 + 0 * Y, Y))
                    - np.sum(w * hy / 2 * vb_of(x0 + 0 * Y, Y) * q(i, j, x0 + 0 * Y, Y)))
            mass = np.sum(W * q(i, j, XX, YY) ** 2)
            out[j * n + i] = (vol + edge) / mass
    return out


def test_weak_gradient_against_brute_force():
    rng = np.random.default_rng(3)
    for k in (1, 2):
        x0, y0 = rng.uniform(0, 1, 2)
        hx, hy = rng.uniform(0.01, 0.5, 2)
        el = elements(x0, x0 + hx, y0, y0 + hy)
        t = reference_tables(k, 8)
        coef = rng.standard_normal(t.nloc)
        Gx, _ = local_weak_gradient(el, k, 8)

        def v0(x, y):
            xi, eta = 2 * (x - x0) / hx - 1, 2 * (y - y0) / hy - 1
            Px = np.polynomial.legendre.legvander(xi, k)
            Py = np.polynomial.legendre.legvander(eta, k)
            return np.einsum("...j,...i,ji->...", Py, Px, coef[: t.n0].reshape(k + 1, k + 1))

        def vb(x, y):
            # right edge (slot 1) when x == x0 + hx, left (slot 3) otherwise
            sl = np.where(np.isclose(x, x0 + hx), 1, 3)
            eta = 2 * (y - y0) / hy - 1
            P = np.polynomial.legendre.legvander(eta, k)
            c1 = coef[t.edge_slice(1)]
            c3 = coef[t.edge_slice(3)]
            return np.where(sl == 1, P @ c1, P @ c3)

        np.testing.assert_allclose(Gx[0] @ coef, _brute_weak_gradient(k, x0, x0 + hx, y0, y0 + hy,
                                                                       v0, vb), rtol=1e-10,
                                   atol=1e-10 * np.abs(Gx[0] @ coef).max())


def test_weak_convdiv_hand_examples():
    C = local_weak_convdiv(UNIT, 1, b_x, const(0.0))
    np.testing.assert_allclose(C[0] @ X_LOCAL, [1, 0, 0, 0], atol=1e-13)
    np.testing.assert_allclose(C[0] @ ONE_ZERO, [0, -6, 0, 0], atol=1e-13)
    np.testing.assert_array_equal(C[0] @ np.zeros(C.shape[2]), 0)


def test_stabilizer_d_unit_element_in_omega0():
    N = 8
    sd = local_stabilizer_d(UNIT, 1, np.full((1, 4), float(N)))
    assert ONE_ZERO @ sd[0] @ ONE_ZERO == pytest.approx(4 * N, rel=1e-14)
    assert X_LOCAL @ sd[0] @ X_LOCAL == pytest.approx(0.0, abs=1e-13)


def test_stabilizers_symmetric_psd():
    mesh = bakhvalov_tensor_mesh(4, 1e-4, 2.0, 1.0, 2.0)
    p = example_5_1(1e-4)
    for M in (local_stabilizer_d(mesh, 2, penalty_weights(mesh, 1e-4)),
              local_stabilizer_c(mesh, 2, p.b)):
        np.testing.assert_allclose(M, np.swapaxes(M, 1, 2), atol=1e-14 * np.abs(M).max())
        ev = np.linalg.eigvalsh(M)
        assert ev.min() > -1e-12 * np.abs(ev).max()


def test_stabilizer_c_inflow_edge():
    sc = local_stabilizer_c(UNIT, 1, b_x)
    # only the left edge has b.n = -1 <= 0 (top and bottom have b.n = 0 and add nothing)
    assert ONE_ZERO @ sc[0] @ ONE_ZERO == pytest.approx(1.0, rel=1e-14)
    # v0 = 1 + L1(xi) has zero trace on the left edge, so only outflow edges see a jump
    v = unit_local(1, [1.0, 1.0, 0.0, 0.0])
    assert v @ sc[0] @ v == pytest.approx(0.0, abs=1e-14)


def test_penalty_rules_case_table():
    N, eps = 8, 1e-6
    mesh = bakhvalov_tensor_mesh(N, eps, 2.0, 1.0, 2.0)
    coarse = penalty_weights(mesh, eps, "coarse-n")
    epsh = penalty_weights(mesh, eps, "eps-h")
    for region in (OMEGA_0, OMEGA_1, OMEGA_2, OMEGA_12):
        el = np.flatnonzero(mesh.region == region)[0]
        expect = [eps / mesh.hy[el], eps / mesh.hx[el], eps / mesh.hy[el], eps / mesh.hx[el]]
        np.testing.assert_allclose(epsh[el], expect, rtol=1e-15)
        if region == OMEGA_0:
            np.testing.assert_array_equal(coarse[el], [N] * 4)
        else:
            np.testing.assert_allclose(coarse[el], expect, rtol=1e-15)
    with pytest.raises(ValueError):
        penalty_weights(mesh, eps, "other")


def test_zero_load():
    assert np.all(local_load(UNIT, 2, const(0.0)) == 0)


def test_mass_default_matches_c_one():
    mesh = bakhvalov_tensor_mesh(4, 1e-3, 2.0, 1.0, 1.0)
    np.testing.assert_allclose(local_mass(mesh, 2), local_mass(mesh, 2, const(1.0)), atol=1e-15)


def test_diffusion_scales_with_eps():
    a = diffusion_matrices(UNIT, 1, 1.0)
    b = diffusion_matrices(UNIT, 1, 1e-3)
    np.testing.assert_allclose(b, 1e-3 * a)


def test_quadratic_form_for_matching_traces():
    # u = x(1-x)y(1-y) lies in Q_2 with zero trace; constant b, c = 1, div b = 0:
    # A(v, v) = eps |grad u|^2 + |u|^2 = eps/45 + 1/900
    eps = 1e-2
    p = patch_problem(eps, k=2)
    mesh = bakhvalov_tensor_mesh(4, eps, 3.0, 2.0, 3.0)
    s = assemble(mesh, p)
    v = project(p.exact_u, mesh, 2).weak.to_free(s.dof_map)
    assert v @ (s.matrix @ v) == pytest.approx(eps / 45 + 1 / 900, rel=1e-12)


def _signed_jump_form(mesh, k, b, v):
    t = reference_tables(k, 6)
    EX, EY = element_edge_points(mesh, t)
    b1, b2 = b(EX, EY)
    bn = b1 * EDGE_NORMALS[:, 0][None, :, None] + b2 * EDGE_NORMALS[:, 1][None, :, None]
    ds = 0.5 * element_edge_lengths(mesh)[:, :, None] * t.w
    jump = np.einsum("epa,la->lep", t.jump, v.local(mesh))
    return float(np.sum(ds * bn * jump**2))


def test_discrete_integration_by_parts():
    eps = 1e-4
    p = example_5_1(eps)
    mesh = bakhvalov_tensor_mesh(6, eps, 2.0, p.beta1, p.beta2)
    dm = build_dof_map(mesh, 1)
    rng = np.random.default_rng(11)
    D = weak_convdiv_moments(mesh, 1, p.b, p.div_b)
    mdiv = local_mass(mesh, 1, p.div_b)
    for _ in range(5):
        v = WeakFunction.from_free(rng.standard_normal(dm.n_free), dm)
        loc = v.local(mesh)
        lhs = float(np.einsum("la,lab,lb->", v.interior, D, loc))
        rhs = (-0.5 * float(np.einsum("la,lab,lb->", v.interior, mdiv, v.interior))
               - 0.5 * _signed_jump_form(mesh, 1, p.b, v))
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10 * abs(rhs))


def test_local_system_is_sum_of_parts():
    eps = 1e-3
    p = example_5_1(eps)
    mesh = bakhvalov_tensor_mesh(4, eps, 2.0, p.beta1, p.beta2)
    A, F = local_system(mesh, 1, p)
    th = penalty_weights(mesh, eps)
    ref = diffusion_matrices(mesh, 1, eps) + local_stabilizer_d(mesh, 1, th) \
        + local_stabilizer_c(mesh, 1, p.b)
    ref[:, :4, :] -= weak_convdiv_moments(mesh, 1, p.b, p.div_b)
    ref[:, :4, :4] += local_mass(mesh, 1, p.c)
    np.testing.assert_allclose(A, ref, rtol=1e-15, atol=1e-15)
    np.testing.assert_allclose(F[:, :4], local_load(mesh, 1, p.f))
    assert np.all(F[:, 4:] == 0)
