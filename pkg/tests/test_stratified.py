import numpy as np
import pytest

from polyflow import catalog
from polyflow.errors import IsSimple, NotStratified
from polyflow.extension import Field
from polyflow.polytope import sample_face
from polyflow.stratified import (FaceFieldFamily, StratifiedField, extend_fields,
                                 is_stratified, nonsimple_obstruction, restrict_fields,
                                 stratified_criterion)


def vec(fn, m=2):
    return Field(lambda X: np.column_stack(fn(np.atleast_2d(X))), m)


SQ = catalog.load("square")
Z1 = vec(lambda X: [(2 * X[:, 1] - 1) * X[:, 0] * (1 - X[:, 0]), 0 * X[:, 0]])
Z2 = vec(lambda X: [0 * X[:, 0], X[:, 1] * (X[:, 1] - 1)])


def test_square_examples():
    assert is_stratified(SQ, vec(lambda X: [X[:, 0] * (1 - X[:, 0]),
                                            X[:, 1] * (1 - X[:, 1])])).passed
    assert is_stratified(SQ, Z2).passed
    rep = is_stratified(SQ, vec(lambda X: [1 + 0 * X[:, 0], 0 * X[:, 0]]))
    assert not rep.passed
    vertical = {F.id for F in SQ.lattice.of_dim(1)
                if np.ptp(SQ.vertices[sorted(F.vertex_ids)][:, 0]) == 0}
    failing = {f for f, v in rep.per_face.items() if v > 1e-9 and SQ.faces[f].dim == 1}
    assert failing == vertical


def test_restriction_on_bottom_edge():
    X = StratifiedField(SQ, Z1 + Z2)
    fam = restrict_fields(X, 1)
    bottom = SQ.faces[SQ.lattice.face_with_vertices({0, 2}).id]
    pts = sample_face(SQ, bottom, 20, np.random.default_rng(0))
    got = fam.fields[bottom.id](pts)
    np.testing.assert_allclose(got[:, 0], -pts[:, 0] * (1 - pts[:, 0]), atol=1e-15)
    np.testing.assert_allclose(got[:, 1], 0.0, atol=1e-15)


def test_restrict_refuses_non_stratified():
    with pytest.raises(NotStratified):
        restrict_fields(StratifiedField(SQ, vec(lambda X: [1 + 0 * X[:, 0], 0 * X[:, 0]])), 1)


def test_zero_field_round_trip():
    fam = restrict_fields(StratifiedField(SQ, Field.zero(2)), 1)
    Y = extend_fields(SQ, fam)
    X = sample_face(SQ, SQ.top_face, 100, np.random.default_rng(1))
    assert np.abs(Y(X)).max() == 0.0
    assert stratified_criterion(SQ, Field.zero(2), 1).passed


def test_square_round_trip():
    X = vec(lambda X: [X[:, 0] * (1 - X[:, 0]), X[:, 1] * (X[:, 1] - 1)])
    Y = extend_fields(SQ, restrict_fields(StratifiedField(SQ, X), 1))
    rng = np.random.default_rng(2)
    for F in SQ.lattice.of_dim(1):
        pts = sample_face(SQ, F, 50, rng)
        assert np.abs(Y(pts) - X(pts)).max() <= 1e-9
    assert is_stratified(SQ, Y.field).worst <= 1e-9


def test_cube_edge_round_trip_and_criterion():
    P = catalog.load("cube3")
    V = vec(lambda X: [X[:, 0] * (1 - X[:, 0]) * (1 + X[:, 1]), X[:, 1] * (1 - X[:, 1]) * X[:, 2],
                       X[:, 2] * (1 - X[:, 2])], 3)
    Y = extend_fields(P, restrict_fields(StratifiedField(P, V), 1))
    rep = stratified_criterion(P, Y.field, 1)
    assert rep.passed and rep.full_check.passed and rep.consistent


def test_criterion_detects_span_violation():
    P = catalog.load("cube3")
    V = vec(lambda X: [X[:, 0] * (1 - X[:, 0]), X[:, 1] * (1 - X[:, 1]), X[:, 2] * (1 - X[:, 2])], 3)
    # zero on every edge, normal to the faces z = 0 and z = 1
    bad = V + vec(lambda X: [0 * X[:, 0], 0 * X[:, 0],
                             X[:, 0] * (1 - X[:, 0]) * X[:, 1] * (1 - X[:, 1])], 3)
    rep = stratified_criterion(P, bad, 1)
    assert rep.condition_a and not rep.condition_b
    assert not rep.full_check.passed
    assert rep.consistent


def test_tangency_of_face_data_is_checked():
    fam = FaceFieldFamily(1, {F.id: vec(lambda X: [1 + 0 * X[:, 0], 1 + 0 * X[:, 0]])
                              for F in SQ.lattice.of_dim(1)})
    with pytest.raises(NotStratified):
        extend_fields(SQ, fam)


@pytest.mark.parametrize("name, m", [("square_pyramid", 4), ("icosahedron", 5)])
def test_obstruction_witness(name, m):
    w = nonsimple_obstruction(catalog.load(name))
    assert (w.m, w.n) == (m, 3)
    assert w.v_norm > 0
    assert w.lambda_residual <= 1e-9
    # the forced derivative along the last edge is 0 while the data demand v
    assert w.infeasibility_residual == pytest.approx(w.v_norm, rel=1e-9)


def test_pyramid_witness_sits_at_apex():
    w = nonsimple_obstruction(catalog.load("square_pyramid"))
    assert w.point == [0.0, 0.0, 1.0]
    np.testing.assert_allclose(np.abs(w.lambdas), [1.0, 1.0, 1.0], atol=1e-12)


def test_simple_polytope_has_no_obstruction():
    with pytest.raises(IsSimple):
        nonsimple_obstruction(catalog.load("cube3"))
