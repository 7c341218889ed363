from dataclasses import replace

import numpy as np
import pytest

from polyflow import catalog
from polyflow.errors import ChartViolation, NotSimple
from polyflow.simplicity import is_simple, standard_chart, verify_chart


@pytest.mark.parametrize("name", catalog.SIMPLE)
def test_simple_catalog(name):
    rep = is_simple(catalog.load(name))
    assert rep.is_simple
    assert rep.witness is None


def test_pyramid_apex_witness():
    P = catalog.load("square_pyramid")
    rep = is_simple(P)
    assert not rep.is_simple
    assert rep.witness["edge_count"] == 4
    assert rep.witness["point"] == [0.0, 0.0, 1.0]


def test_icosahedron_witness():
    rep = is_simple(catalog.load("icosahedron"))
    assert not rep.is_simple
    assert rep.witness["edge_count"] == 5


def test_corner_chart_is_scaled_identity():
    P = catalog.load("square")
    c = standard_chart(P, [0.0, 0.0])
    assert c.index == 2
    assert c.epsilon == pytest.approx(0.5)
    np.testing.assert_allclose(np.abs(c.linear_part), np.eye(2), atol=1e-12)
    assert verify_chart(P, c, samples=1000).passed


def test_edge_chart():
    P = catalog.load("square")
    c = standard_chart(P, [0.5, 0.0])
    assert c.index == 1
    assert c.epsilon == pytest.approx(0.25)
    np.testing.assert_allclose(c.forward([[0.5, 0.0]]), [[0.0, 0.0]], atol=1e-15)
    assert verify_chart(P, c, samples=100).passed


def test_dodecahedron_vertex_chart():
    P = catalog.load("dodecahedron")
    c = standard_chart(P, P.vertices[0])
    assert c.index == 3
    # the chart functionals are the three active facet functionals
    normals = P.A[list(c.facet_map)] @ P.basis.T
    np.testing.assert_allclose(c.linear_part, normals, atol=1e-10)
    assert verify_chart(P, c, samples=1000).passed


def test_corrupted_chart_is_caught():
    P = catalog.load("square")
    c = standard_chart(P, [0.0, 0.0])
    bad = replace(c, facet_map=c.facet_map[::-1])      # walls assigned to the wrong facets
    with pytest.raises(ChartViolation):
        verify_chart(P, bad, samples=200)


def test_no_chart_at_pyramid_apex():
    with pytest.raises(NotSimple):
        standard_chart(catalog.load("square_pyramid"), [0.0, 0.0, 1.0])
