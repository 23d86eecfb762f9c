import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import ParameterError
from refelem import (build_reference_element, collapsed_cubature, interpolation_matrix, jacobi_gl, jacobi_gq,
                     jacobi_poly, mode_indices, simplex_basis)


# ============================================================
# One-dimensional family
# ============================================================

def test_jacobi_low_degrees():
    assert_allclose(jacobi_poly(0, 0, 0, np.array([-0.3, 0.7])), 1 / np.sqrt(2), atol=1e-14)
    assert_allclose(jacobi_poly(1, 0, 0, 1.0), np.sqrt(1.5), atol=1e-14)


def test_legendre_orthonormal_under_gauss_rule():
    x, w = jacobi_gq(0, 0, 20)
    P = np.stack([jacobi_poly(n, 0, 0, x) for n in range(9)])
    assert_allclose((P * w) @ P.T, np.eye(9), atol=1e-12)


def test_gauss_lobatto_ends_and_symmetry():
    x = jacobi_gl(0, 0, 6)
    assert x[0] == -1.0 and x[-1] == 1.0
    assert_allclose(x, -x[::-1], atol=1e-14)
    assert np.all(np.diff(x) > 0)


def test_jacobi_rejects_bad_degree():
    with pytest.raises(ParameterError):
        jacobi_poly(-1, 0, 0, 0.0)


# ============================================================
# Simplex basis and cubature
# ============================================================

def test_constant_simplex_mode():
    assert_allclose(simplex_basis(0, 0, np.array([-0.5, 0.1]), np.array([-0.2, -0.9])), 1 / np.sqrt(2))


def test_simplex_basis_orthonormal_to_order_six():
    cub = collapsed_cubature(12)
    r, s, w = cub.T
    modes = np.stack([simplex_basis(i, j, r, s) for i, j in mode_indices(6)])
    assert_allclose((modes * w) @ modes.T, np.eye(len(modes)), atol=1e-12)


def test_cubature_weights_cover_reference_area():
    for strength in (2, 7, 14):
        assert_allclose(collapsed_cubature(strength)[:, 2].sum(), 2.0, rtol=1e-14)


# ============================================================
# Reference element operators
# ============================================================

@pytest.mark.parametrize("order", [1, 3, 6, 10])
def test_derivative_rows_annihilate_constants(order):
    ref = build_reference_element(order)
    assert_allclose(ref.Dr.sum(axis=1), 0.0, atol=1e-12)
    assert_allclose(ref.Ds.sum(axis=1), 0.0, atol=1e-12)


def test_derivatives_exact_on_polynomials():
    ref = build_reference_element(4)
    r, s = ref.r, ref.s
    f = r ** 2 * s + s ** 3 - 2 * r * s ** 2
    assert_allclose(ref.Dr @ f, 2 * r * s - 2 * s ** 2, atol=1e-11)
    assert_allclose(ref.Ds @ f, r ** 2 + 3 * s ** 2 - 4 * r * s, atol=1e-11)


def test_mass_matrix_integrates_area():
    ref = build_reference_element(5)
    ones = np.ones(ref.n_ep)
    assert_allclose(ones @ ref.M @ ones, 2.0, rtol=1e-12)
    assert_allclose(ref.M, ref.M.T, atol=1e-14)


def test_face_layout():
    ref = build_reference_element(3)
    assert ref.face_nodes.shape == (3, 4)
    assert_allclose(ref.face_params, jacobi_gl(0, 0, 3), atol=1e-12)
    assert_allclose(ref.nodes[ref.vertex_nodes], [[-1, -1], [1, -1], [-1, 1]], atol=1e-12)
    assert len(ref.interior_nodes) == 1


def test_interpolation_reproduces_degree_p():
    ref = build_reference_element(3)
    points = np.array([[-0.2, -0.5], [0.1, -0.95], [-0.9, 0.3]])
    f = lambda r, s: r ** 3 - r * s + 0.5 * s ** 2
    assert_allclose(interpolation_matrix(ref, points) @ f(ref.r, ref.s), f(points[:, 0], points[:, 1]), atol=1e-12)


@pytest.mark.parametrize("order", [0, 13, 2.5])
def test_order_out_of_range(order):
    with pytest.raises(ParameterError):
        build_reference_element(order)
