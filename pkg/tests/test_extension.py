import numpy as np
import pytest

from polyflow import catalog
from polyflow.errors import CoverFailure, IncompatibleFamily, NotSimple
from polyflow.extension import (CompatibleFamily, CubeFamily, Field, cube_grid, ell_extend,
                                facet_extend, local_extend, local_restrict,
                                partition_of_unity, phi_recursive, restrict_to_faces,
                                smoothness_probe, theta)
from polyflow.polytope import sample_face


def poly(fn, m=1):
    return Field(lambda X: np.reshape(fn(np.atleast_2d(X)), (-1, m)), m)


def test_theta_zeroes_coordinates():
    np.testing.assert_array_equal(theta(2, {1}, [0.3, 0.7]), [0.0, 0.7])
    np.testing.assert_array_equal(theta(3, {1, 3}, [0.2, 0.5, 0.9]), [0.0, 0.5, 0.0])
    np.testing.assert_array_equal(theta(2, {1, 2}, [0.3, 0.7]), [0.0, 0.0])


def test_phi_1_is_value_at_wall():
    f1 = poly(lambda W: np.cos(W[:, 1]) + 3 * W[:, 0])
    phi = local_extend(CubeFamily(1, 1, [f1]))
    W = np.array([[0.4, 0.2], [0.9, -0.5]])
    np.testing.assert_allclose(phi(W)[:, 0], np.cos(W[:, 1]))


def test_phi_2_hand_value():
    # f1(0, x2) = x2^2, f2(x1, 0) = x1: 0.25 + 0.5 - 0
    fam = CubeFamily(2, 0, [poly(lambda W: W[:, 1] ** 2), poly(lambda W: W[:, 0])])
    assert local_extend(fam)([[0.5, 0.5]])[0, 0] == pytest.approx(0.75, abs=1e-15)


def test_phi_4_right_inverse_on_grid():
    g = poly(lambda W: W[:, 0] * W[:, 1] + W[:, 2] ** 3 - 2 * W[:, 3] * W[:, 1] + 1)
    fam = local_restrict(g, 4)
    phi = local_extend(fam)
    grid = cube_grid(4, 0, 5)
    for k in range(4):
        wall = grid.copy()
        wall[:, k] = 0.0
        assert np.abs(phi(wall) - g(wall)).max() <= 1e-12
    assert np.abs(phi(grid) - phi_recursive(fam, grid)).max() <= 1e-12


def test_local_restrict_examples():
    c = local_restrict(Field.constant([2.5]), 3)
    W = np.random.default_rng(0).uniform(0, 1, (10, 3))
    for comp in c.components:
        np.testing.assert_allclose(comp(W), 2.5)
    fam = local_restrict(poly(lambda W: W[:, 0]), 2)
    W0 = W[:, :2].copy()
    W0[:, 0] = 0
    np.testing.assert_allclose(fam.components[0](W0), 0.0)
    np.testing.assert_allclose(fam.components[1](W[:, :2])[:, 0], W[:, 0])


def test_incompatible_cube_family():
    fam = CubeFamily(2, 0, [poly(lambda W: 1 + 0 * W[:, 0]), poly(lambda W: 0 * W[:, 0])])
    with pytest.raises(IncompatibleFamily):
        local_extend(fam)


def test_segment_cover():
    P = catalog.load("segment")
    pou = partition_of_unity(P)
    assert len(pou.charts) == 3
    assert sorted(c.index for c in pou.charts) == [0, 1, 1]
    X = np.random.default_rng(1).uniform(0, 1, (100, 1))
    np.testing.assert_allclose(pou.weights(X).sum(axis=1), 1.0, atol=1e-14)


def test_square_cover_and_dropped_corner():
    P = catalog.load("square")
    pou = partition_of_unity(P)
    idx = [c.index for c in pou.charts]
    assert len(pou.charts) >= 9
    assert idx.count(2) == 4 and idx.count(1) >= 4 and idx.count(0) >= 1
    corner = idx.index(2)
    base = pou.charts[corner].base_point
    with pytest.raises(CoverFailure):
        pou.without(corner).audit(base[None])


def test_facet_extend_square_xy():
    P = catalog.load("square")
    g = poly(lambda X: X[:, 0] * X[:, 1])
    sigma = facet_extend(P, restrict_to_faces(g, P, 1))
    rng = np.random.default_rng(2)
    for F in P.lattice.of_dim(1):
        pts = sample_face(P, F, 50, rng)
        assert np.abs(sigma(pts) - g(pts)).max() <= 1e-9


def test_zero_family_extends_to_zero():
    P = catalog.load("cube3")
    sigma = ell_extend(P, 1, restrict_to_faces(Field.zero(2), P, 1))
    X = sample_face(P, P.top_face, 200, np.random.default_rng(3))
    assert np.abs(sigma(X)).max() == 0.0


def test_cube_boundary_restriction_linear_data():
    P = catalog.load("cube3")
    g = poly(lambda X: X[:, 0] + 2 * X[:, 1] + 3 * X[:, 2])
    sigma = facet_extend(P, restrict_to_faces(g, P, 2))
    rng = np.random.default_rng(4)
    pts = np.vstack([sample_face(P, F, 84, rng) for F in P.lattice.of_dim(2)])[:500]
    assert len(pts) == 500
    assert np.abs(sigma(pts) - g(pts)).max() <= 1e-9


def test_cube_edges_quadratic_data():
    P = catalog.load("cube3")
    g = poly(lambda X: X[:, 0] ** 2 + X[:, 1])
    sigma = ell_extend(P, 1, restrict_to_faces(g, P, 1))
    rng = np.random.default_rng(5)
    for F in P.lattice.of_dim(1):
        pts = sample_face(P, F, 30, rng)
        assert np.abs(sigma(pts) - g(pts)).max() <= 1e-9


def test_top_level_is_facet_extension():
    P = catalog.load("square")
    fam = restrict_to_faces(poly(lambda X: np.sin(X[:, 0]) * X[:, 1]), P, 1)
    X = sample_face(P, P.top_face, 100, np.random.default_rng(6))
    np.testing.assert_array_equal(ell_extend(P, 1, fam)(X), facet_extend(P, fam)(X))


def test_pyramid_is_refused():
    P = catalog.load("square_pyramid")
    fam = restrict_to_faces(Field.zero(1), P, 1)
    with pytest.raises(NotSimple):
        ell_extend(P, 1, fam)


def test_incompatible_face_family():
    P = catalog.load("square")
    fields = {F.id: Field.constant([float(k)]) for k, F in enumerate(P.lattice.of_dim(1))}
    with pytest.raises(IncompatibleFamily):
        ell_extend(P, 1, CompatibleFamily(1, fields))


def test_smoothness_probe_square_extension():
    P = catalog.load("square")
    g = poly(lambda X: np.exp(X[:, 0]) * X[:, 1] ** 2 - X[:, 0])
    sigma = facet_extend(P, restrict_to_faces(g, P, 1))
    rep = smoothness_probe(sigma, P, order=1, h=1e-4, rng=np.random.default_rng(7))
    assert rep.passed
    assert max(rep.discrepancies.values()) < 1e-2 * 1e-4


def test_smoothness_probe_controls():
    P = catalog.load("square")
    step = poly(lambda X: (X[:, 0] > 0.5).astype(float))
    assert not smoothness_probe(step, P, order=0).passed
    kink = poly(lambda X: np.abs(X[:, 0] - 0.43))
    assert not smoothness_probe(kink, P, order=1).passed
    rep = smoothness_probe(poly(lambda X: X[:, 0] ** 3 + X[:, 1] ** 2), P, order=2)
    assert rep.passed
    assert max(rep.discrepancies.values()) < 1e-9
