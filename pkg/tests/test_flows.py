import numpy as np
import pytest

from polyflow import catalog
from polyflow.errors import BaseMismatch, ConstraintEscape, NotVanishing, PointOutside
from polyflow.extension import Field
from polyflow.flows import (boundary_identity_flow, compose, control_conditions_audit,
                            exp_field, face_invariance_audit, identity, integrate_flow,
                            pointwise_rank, reach_target)
from polyflow.stratified import StratifiedField

SQ = catalog.load("square")


def vec(fn):
    return Field(lambda X: np.column_stack(fn(np.atleast_2d(X))), 2)


Z1 = StratifiedField(SQ, vec(lambda X: [(2 * X[:, 1] - 1) * X[:, 0] * (1 - X[:, 0]),
                                        0 * X[:, 0]]))
Z2 = StratifiedField(SQ, vec(lambda X: [0 * X[:, 0], X[:, 1] * (X[:, 1] - 1)]))
RIGHT = StratifiedField(SQ, vec(lambda X: [1 + 0 * X[:, 0], 0 * X[:, 0]]))


def test_logistic_closed_form():
    r = integrate_flow(Z2, [0.3, 0.5], np.log(3.0), tol=1e-10)
    assert r.final_point[1] == pytest.approx(0.25, abs=1e-8)
    assert r.final_point[0] == 0.3


def test_edge_start_stays_on_edge():
    r = integrate_flow(Z2, [0.3, 0.0], 1.0)
    assert r.face_drift <= 1e-9
    np.testing.assert_array_equal(r.final_point, [0.3, 0.0])


def test_zero_field_is_constant():
    zero = StratifiedField(SQ, Field.zero(2))
    r = integrate_flow(zero, [0.2, 0.7], 2.0)
    assert np.all(r.trajectory == [0.2, 0.7])
    pts = np.random.default_rng(0).uniform(0, 1, (20, 2))
    np.testing.assert_array_equal(exp_field(zero)(pts), pts)


def test_exp_logistic_for_all_x():
    xs = np.linspace(0, 1, 7)
    out = exp_field(Z2, tol=1e-10)(np.column_stack([xs, np.full(7, 0.5)]))
    np.testing.assert_allclose(out[:, 0], xs, atol=0)
    np.testing.assert_allclose(out[:, 1], 0.5 / (0.5 + 0.5 * np.e), atol=1e-8)


def test_compose_order_and_inverse():
    a, b = exp_field(Z1, 0.7), exp_field(Z2, 1.3)
    pts = np.random.default_rng(1).uniform(0, 1, (30, 2))
    np.testing.assert_allclose(compose(a, b)(pts), a(b(pts)), atol=1e-12)
    d = compose(a, b)
    np.testing.assert_allclose(compose(d, d.inverse())(pts), pts, atol=1e-6)
    assert len(compose(identity(SQ), d)) == 2


def test_compose_needs_same_base():
    with pytest.raises(BaseMismatch):
        compose(exp_field(Z1), identity(catalog.load("cube3")))


def test_face_invariance():
    assert face_invariance_audit(exp_field(Z1)).passed
    assert face_invariance_audit(identity(SQ)).worst == 0.0
    rep = face_invariance_audit(exp_field(RIGHT, 0.3))
    assert not rep.passed


def test_leaving_the_square_is_reported():
    with pytest.raises(ConstraintEscape):
        integrate_flow(RIGHT, [0.5, 0.5], 1.0)
    with pytest.raises(PointOutside):
        integrate_flow(Z1, [1.5, 0.5], 1.0)


def test_boundary_identity_flow():
    B = vec(lambda X: [X[:, 0] * (1 - X[:, 0]) * X[:, 1] * (1 - X[:, 1]), 0 * X[:, 0]])
    _, rep = boundary_identity_flow(B, base=SQ, interior_point=[0.5, 0.5])
    assert rep["max_boundary_displacement"] <= 1e-9
    assert rep["interior_image"][0] > 0.5 + 1e-3
    assert rep["interior_image"][1] == 0.5
    with pytest.raises(NotVanishing):
        boundary_identity_flow(Z2)


def test_reach_trivial_and_edge():
    r = reach_target(SQ, [Z1, Z2], [0.3, 0.4], [0.3, 0.4])
    assert r.residual == 0.0 and r.evaluations == 0 and len(r.diffeo) == 0
    along = StratifiedField(SQ, vec(lambda X: [X[:, 0] * (1 - X[:, 0]), 0 * X[:, 0]]))
    r = reach_target(SQ, [along], [0.3, 0.0], [0.6, 0.0])
    assert r.residual <= 1e-3
    assert r.diffeo([[0.3, 0.0]])[0, 1] == 0.0


def test_rank_drops_on_the_midline():
    on = np.array([[0.2, 0.5], [0.7, 0.5 + 1e-10]])
    off = np.array([[0.2, 0.3], [0.7, 0.8]])
    np.testing.assert_array_equal(pointwise_rank([Z1, Z2], on), [1, 1])
    np.testing.assert_array_equal(pointwise_rank([Z1, Z2], off), [2, 2])


def test_control_audit_examples():
    rep = control_conditions_audit(SQ, [Z1, Z2])
    assert rep["condition_I"]["holds"] and rep["condition_II"]["holds"]

    only = control_conditions_audit(SQ, [Z2])
    assert not only["condition_I"]["holds"]
    ii = only["condition_II"]["per_facet"]
    vertical = {str(SQ.facet_face_ids[j]) for j in range(4) if abs(SQ.A[j][0]) > 0.5}
    assert {f for f, v in ii.items() if not v["holds"]} == vertical

    empty = control_conditions_audit(SQ, [])
    assert not empty["condition_I"]["holds"] and not empty["condition_II"]["holds"]


def test_condition_II_degenerates_at_edge_midpoint():
    # On the edge x = 0 the admissible scalings of Z1 and Z2 have inward
    # derivatives (2y - 1, 0) and (0, y(y - 1)); at y = 1/2 neither leaves the edge.
    h = 1e-6
    for f in (Z1.field, Field(lambda X: X[:, :1] * Z2.field(X), 2)):
        d = (f([[h, 0.5]]) - f([[0.0, 0.5]]))[0] / h
        assert abs(d[0]) <= 1e-9
