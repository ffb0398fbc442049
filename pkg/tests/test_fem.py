import numpy as np
import pytest
import scipy.sparse as sp

from decoupling.fem import (CoefficientField, assemble_mass, assemble_problem, assemble_stiffness,
                            ellipticity_check, load_vector, triangulate_unit_square)


@pytest.mark.parametrize("m", [2, 4, 16])
def test_mesh_counts_and_areas(m):
    mesh = triangulate_unit_square(m)
    assert mesh.n_nodes == (m + 1) ** 2
    assert len(mesh.triangles) == 2 * m * m
    areas = mesh.signed_areas()
    np.testing.assert_allclose(areas, 1.0 / (2 * m * m), rtol=1e-14)
    assert abs(areas.sum() - 1.0) < 1e-14


@pytest.mark.parametrize("m", [3, 1, 2.5])
def test_mesh_rejects_bad_m(m):
    with pytest.raises(ValueError):
        triangulate_unit_square(m)


def test_interior_nodes_have_degree_six():
    m = 6
    mesh = triangulate_unit_square(m)
    M = assemble_mass(mesh)
    degree = np.diff(M.indptr) - 1
    ij = np.round(mesh.nodes * m).astype(int)
    interior = np.all((ij > 0) & (ij < m), axis=1)
    assert np.all(degree[interior] == 6)


def test_no_triangle_straddles_interface():
    mesh = triangulate_unit_square(8)
    y = mesh.nodes[mesh.triangles][:, :, 1]
    above = np.all(y >= 0.5 - 1e-14, axis=1)
    below = np.all(y <= 0.5 + 1e-14, axis=1)
    assert np.all(above | below)


def test_single_element_mass_matrix():
    mesh = triangulate_unit_square(2)
    M = assemble_mass(mesh).toarray()
    area = 1.0 / 8
    # node 0 (corner) belongs to the two triangles of the lower-left cell
    assert M[0, 0] == pytest.approx(2 * area * 2 / 12)
    assert M[0, 1] == pytest.approx(area / 12)  # edge shared by one triangle


@pytest.mark.parametrize("lumped", [False, True])
def test_mass_total_is_area(lumped):
    M = assemble_mass(triangulate_unit_square(16), lumped=lumped)
    one = np.ones(M.shape[0])
    assert abs(one @ M @ one - 1.0) <= 1e-14
    assert abs(M - M.T).max() == 0.0
    assert np.all(M.diagonal() > 0)


def test_stiffness_kernel_and_symmetry():
    mesh = triangulate_unit_square(16)
    K = assemble_stiffness(mesh, 1.0)
    assert np.abs(K @ np.ones(mesh.n_nodes)).max() <= 1e-13
    assert abs(K - K.T).max() <= 1e-14
    assert assemble_stiffness(mesh, 0.0).count_nonzero() == 0


def test_stiffness_energy_of_quadratic():
    mesh = triangulate_unit_square(64)
    K = assemble_stiffness(mesh, 1.0)
    u = mesh.nodes[:, 0] ** 2
    assert abs(u @ K @ u - 4.0 / 3.0) <= 0.01 * 4.0 / 3.0


def test_stiffness_exact_for_linear_function():
    mesh = triangulate_unit_square(4)
    u = 2 * mesh.nodes[:, 0] - 3 * mesh.nodes[:, 1]
    assert u @ assemble_stiffness(mesh, 1.0) @ u == pytest.approx(13.0, rel=1e-13)


def test_load_vector_midpoint_rule_is_exact_for_quadratics():
    mesh = triangulate_unit_square(4)
    f = lambda x, y: x ** 2 + x * y  # noqa: E731
    # integral of f over the square is 1/3 + 1/4
    assert load_vector(mesh, f).sum() == pytest.approx(7.0 / 12.0, rel=1e-13)
    # with f linear, load = M f_nodal exactly
    g = lambda x, y: 1 + 2 * x - y  # noqa: E731
    M = assemble_mass(mesh)
    np.testing.assert_allclose(load_vector(mesh, g), M @ g(mesh.nodes[:, 0], mesh.nodes[:, 1]),
                               atol=1e-15)


def test_ellipticity_on_default_coefficients():
    checks = ellipticity_check(CoefficientField())
    assert [c.passed for c in checks] == [True, True]
    assert [c.margin for c in checks] == [4.0, 4.0]


@pytest.mark.parametrize("upper, ok", [((1.0, 3.0, 1.0), False), ((1.0, 0.0, 2.0), True),
                                        ((-1.0, 0.0, 1.0), False)])
def test_ellipticity_cases(upper, ok):
    assert ellipticity_check(CoefficientField(upper=upper))[0].passed is ok


def test_assemble_problem_rejects_non_elliptic_data():
    with pytest.raises(ValueError, match="upper"):
        assemble_problem(triangulate_unit_square(4), CoefficientField(upper=(1.0, 3.0, 1.0)))


def test_coefficient_jump_location():
    mesh = triangulate_unit_square(4)
    vals = CoefficientField().element_values(mesh)
    upper = mesh.centroids()[:, 1] > 0.5
    assert np.all(vals[(0, 0)][upper] == 5.0) and np.all(vals[(0, 0)][~upper] == 1.0)
    assert np.array_equal(vals[(0, 1)], vals[(1, 0)])


def test_assembled_operator_structure(cross8):
    K = cross8.K
    np.testing.assert_allclose(K.block(1, 0).toarray(), K.block(0, 1).toarray().T)
    for e in cross8.nullspace:
        assert np.abs(K.apply(e).data).max() <= 1e-12


def test_operator_positive_off_kernel(cross8):
    from decoupling.blockalg import BlockVector, project_out
    rng = np.random.default_rng(0)
    for _ in range(5):
        y = BlockVector.from_flat(rng.standard_normal(cross8.K.shape[0]), cross8.K.sizes)
        y = project_out(y, cross8.nullspace, cross8.metric)
        assert y.data @ cross8.K.apply(y).data > 0


def test_projected_initial_data():
    P = assemble_problem(triangulate_unit_square(32))
    M = P.metric.matrices[0]
    one = np.ones(M.shape[0])
    for comp in P.u0.components():
        assert comp.min() >= -0.02 and comp.max() <= 1.02
    assert one @ M @ P.u0[0] == pytest.approx(0.5, abs=1e-12)
    # midpoint quadrature of 16 x^2 (1-x)^2 misses its mean 8/15 by O(h^2)
    assert one @ M @ P.u0[1] == pytest.approx(8.0 / 15.0, abs=2.0 / 32 ** 2)


def test_interpolation_transfer():
    P = assemble_problem(triangulate_unit_square(4), transfer="interpolation")
    x = P.mesh.nodes[:, 0]
    np.testing.assert_allclose(P.u0[1], 16 * x ** 2 * (1 - x) ** 2)
    with pytest.raises(ValueError):
        assemble_problem(triangulate_unit_square(4), transfer="nearest")


def test_lumped_metric_is_diagonal():
    P = assemble_problem(triangulate_unit_square(4), lumped_mass=True)
    M = P.metric.matrices[0]
    assert sp.triu(M, 1).count_nonzero() == 0
