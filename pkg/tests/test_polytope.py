import numpy as np
import pytest

from polyflow import catalog
from polyflow.errors import EmptyInput, ParseError
from polyflow.polytope import (boundary_stratum_samples, build_polytope, generating_face,
                               point_index, polytope_from_json)

SQUARE = [(0, 0), (0, 1), (1, 0), (1, 1)]


def f_vector(P):
    return [len(P.lattice.of_dim(d)) for d in range(P.dim + 1)]


def test_square_halfspaces_and_faces():
    P = build_polytope(SQUARE)
    assert P.dim == 2
    assert P.n_facets == 4
    assert f_vector(P) == [4, 4, 1]


def test_point_polytope():
    P = build_polytope([(0.0, 0.0)])
    assert P.dim == 0
    assert P.n_facets == 0
    assert f_vector(P) == [1]


@pytest.mark.parametrize("name, expected", [
    ("segment", [2, 1]),
    ("cube3", [8, 12, 6, 1]),
    ("cube4", [16, 32, 24, 8, 1]),
    ("simplex4", [5, 10, 10, 5, 1]),
    ("square_x_segment", [8, 12, 6, 1]),
    ("dodecahedron", [20, 30, 12, 1]),
    ("icosahedron", [12, 30, 20, 1]),
    ("square_pyramid", [5, 8, 5, 1]),
])
def test_catalog_f_vectors(name, expected):
    assert f_vector(catalog.load(name)) == expected


def test_strata_of_the_square():
    P = build_polytope(SQUARE)
    assert point_index(P, [0.5, 0.5]) == 0
    assert point_index(P, [0.5, 0.0]) == 1
    assert point_index(P, [1.0, 1.0]) == 2
    assert generating_face(P, [0.5, 0.5]) == P.top_face.id
    assert P.faces[generating_face(P, [0.0, 0.0])].vertex_ids == {0}
    assert P.faces[generating_face(P, [0.5, 0.0])].vertex_ids == {0, 2}


def test_boundary_stratum_samples():
    rng = np.random.default_rng(0)
    P = build_polytope(SQUARE)
    inner = boundary_stratum_samples(P, 0, 50, rng)
    assert np.all((inner > 0) & (inner < 1))
    corners = boundary_stratum_samples(P, 2, 20, rng)
    assert {tuple(c) for c in corners} <= {tuple(map(float, v)) for v in SQUARE}
    ends = boundary_stratum_samples(catalog.load("segment"), 1, 10, rng)
    assert set(ends.ravel()) <= {0.0, 1.0}


def test_empty_input():
    with pytest.raises(EmptyInput):
        build_polytope([])
    with pytest.raises(EmptyInput):
        polytope_from_json('{"vertices": []}')


def test_json_parse_error_position():
    with pytest.raises(ParseError) as err:
        polytope_from_json('{"vertices": [\n  [0, 0],\n  [1 1]\n]}')
    assert (err.value.line, err.value.column) == (3, 6)


def test_json_round_trip_keeps_lattice():
    P = catalog.load("dodecahedron")
    Q = polytope_from_json(P.to_json())
    assert Q.n_facets == 12
    faces = lambda R: sorted(sorted(f.vertex_ids) for f in R.faces)  # noqa: E731
    assert faces(P) == faces(Q)
