"""Convex polytopes given by vertices, their face lattices and boundary strata.

A :class:`Polytope` keeps two descriptions of the same set: the vertex list
(in the caller's ambient coordinates, ``R^N``) and an irredundant list of
facet inequalities ``lam_j(y) >= a_j`` written in an internal affine chart
``y = (x - origin) @ basis`` of ``aff(M)``, which is ``R^n``. When the
polytope is full-dimensional the chart is the identity, so ambient and chart
coordinates coincide.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateNumerics, EmptyInput, EmptyStratum, ParseError, PointOutside

#: membership / facet-activity tolerance (unit normals)
TOL = 1e-9
#: tolerance used when merging candidate hyperplanes
MERGE_TOL = 1e-8
#: largest admissible residual when refitting a facet to its vertices
FACET_RESIDUAL = 1e-6


def _affine_rank(points, tol=1e-9):
    points = np.atleast_2d(points)
    if len(points) <= 1:
        return 0
    d = points[1:] - points[0]
    s = np.linalg.svd(d, compute_uv=False)
    scale = max(1.0, np.abs(points).max())
    return int(np.sum(s > tol * scale))


def _orthonormal_span(vectors, tol=1e-9):
    """Orthonormal basis (columns) of the span of the given row vectors."""
    vectors = np.atleast_2d(vectors)
    dim = vectors.shape[1]
    if vectors.size == 0:
        return np.zeros((dim, 0))
    _, s, vt = np.linalg.svd(vectors)
    rank = int(np.sum(s > tol * max(1.0, s.max(initial=0.0))))
    return vt[:rank].T.copy()


@dataclass(frozen=True, eq=False)
class Face:
    id: int
    dim: int
    vertex_ids: frozenset
    containing_facets: frozenset
    affine_basis: np.ndarray          # (N, dim) orthonormal basis of E_F, ambient
    origin: np.ndarray                # a point of F (first vertex)
    relative_interior_point: np.ndarray

    def __repr__(self):
        return (f"Face(id={self.id}, dim={self.dim}, "
                f"vertices={sorted(self.vertex_ids)})")


@dataclass(frozen=True, eq=False)
class FaceLattice:
    faces: list
    parents: dict                     # face id -> ids of (d+1)-faces above it
    children: dict                    # face id -> ids of (d-1)-faces below it
    by_vertices: dict = field(repr=False)

    def of_dim(self, d):
        return [f for f in self.faces if f.dim == d]

    def counts(self):
        """Number of faces per dimension, as a list indexed by dimension."""
        top = max(f.dim for f in self.faces)
        return [len(self.of_dim(d)) for d in range(top + 1)]

    def face_with_vertices(self, vertex_ids):
        return self.by_vertices[frozenset(vertex_ids)]

    def subfaces(self, face_id):
        """All faces contained in the given face (including itself)."""
        verts = self.faces[face_id].vertex_ids
        return [f for f in self.faces if f.vertex_ids <= verts]

    def superfaces(self, face_id):
        verts = self.faces[face_id].vertex_ids
        return [f for f in self.faces if verts <= f.vertex_ids]

    def to_dict(self):
        return {
            "faces": [
                {"id": f.id, "dim": f.dim,
                 "vertex_ids": sorted(f.vertex_ids),
                 "containing_facets": sorted(f.containing_facets)}
                for f in self.faces
            ]
        }


class Polytope:
    """A convex polytope with matching V- and H-representations.

    Build instances with :func:`build_polytope`; the constructor trusts its
    arguments.
    """

    def __init__(self, vertices, A, b, origin, basis, facet_vertices):
        self.vertices = np.asarray(vertices, dtype=float)
        self.A = np.asarray(A, dtype=float).reshape(len(facet_vertices), basis.shape[1])
        self.b = np.asarray(b, dtype=float).reshape(-1)
        self.origin = np.asarray(origin, dtype=float)
        self.basis = np.asarray(basis, dtype=float)
        self.facet_vertices = [frozenset(v) for v in facet_vertices]

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def ambient_dim(self):
        return self.vertices.shape[1]

    @property
    def n_facets(self):
        return len(self.b)

    @property
    def affine_basis(self):
        return self.basis

    @property
    def halfspaces(self):
        """Facet inequalities ``normal . z >= offset`` in ambient coordinates."""
        normals = self.A @ self.basis.T
        offsets = self.b + normals @ self.origin
        return [(normals[j], float(offsets[j])) for j in range(self.n_facets)]

    def __repr__(self):
        return (f"Polytope(dim={self.dim}, ambient_dim={self.ambient_dim}, "
                f"vertices={len(self.vertices)}, facets={self.n_facets})")

    # coordinates -----------------------------------------------------------
    def to_chart(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return (x - self.origin) @ self.basis

    def from_chart(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return self.origin + y @ self.basis.T

    def offaffine_distance(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.linalg.norm(x - self.from_chart(self.to_chart(x)), axis=1)

    def slacks(self, x):
        """``lam_j(y) - a_j`` for every point (rows) and facet (columns)."""
        return self.to_chart(x) @ self.A.T - self.b

    def contains(self, x, tol=TOL):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ok = self.offaffine_distance(x) <= tol
        if self.n_facets:
            ok &= np.all(self.slacks(x) >= -tol, axis=1)
        return ok

    @cached_property
    def diameter(self):
        v = self.vertices
        if len(v) < 2:
            return 0.0
        return float(max(np.linalg.norm(v[i] - v[j])
                         for i in range(len(v)) for j in range(i + 1, len(v))))

    @cached_property
    def centroid(self):
        return self.vertices.mean(axis=0)

    # combinatorics ---------------------------------------------------------
    @cached_property
    def lattice(self):
        return _enumerate_faces(self)

    @property
    def faces(self):
        return self.lattice.faces

    @cached_property
    def facet_face_ids(self):
        """Map facet (halfspace) index -> face id."""
        lat = self.lattice
        return [lat.by_vertices[v].id for v in self.facet_vertices]

    @cached_property
    def top_face(self):
        return self.lattice.faces[-1]

    def face_polytope(self, face):
        """The face as a polytope of its own, plus a face-id translation table.

        Returns ``(sub, to_parent)`` where ``to_parent[k]`` is the id in this
        polytope's lattice of face ``k`` of ``sub``.
        """
        if isinstance(face, int):
            face = self.faces[face]
        vids = sorted(face.vertex_ids)
        sub = build_polytope(self.vertices[vids])
        to_parent = {}
        for f in sub.faces:
            parent_vids = frozenset(vids[k] for k in f.vertex_ids)
            to_parent[f.id] = self.lattice.by_vertices[parent_vids].id
        return sub, to_parent

    def to_json(self):
        return json.dumps({"vertices": self.vertices.tolist()})


def build_polytope(vertices) -> Polytope:
    """Convex hull of a finite point set, inside its affine hull.

    Candidate facet hyperplanes are enumerated through every affinely
    independent n-subset of the points, kept when all points lie on one side,
    merged when they coincide, and finally refitted to their incident points.
    Points that are not extreme are dropped from the vertex list.
    """
    pts = np.asarray(vertices, dtype=float)
    if pts.size == 0:
        raise EmptyInput("polytope needs at least one vertex")
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if not np.all(np.isfinite(pts)):
        raise DegenerateNumerics("non-finite vertex coordinates")

    kept = []
    for p in pts:
        if not any(np.max(np.abs(p - q)) <= 1e-12 for q in kept):
            kept.append(p)
    pts = np.array(kept)
    N = pts.shape[1]

    center = pts.mean(axis=0)
    if len(pts) > 1:
        _, s, vt = np.linalg.svd(pts - center)
        scale = max(1.0, np.abs(pts).max())
        n = int(np.sum(s > TOL * scale))
    else:
        n = 0
    if n == N:
        origin, basis = np.zeros(N), np.eye(N)
    elif n == 0:
        origin, basis = center, np.zeros((N, 0))
    else:
        origin, basis = center, vt[:n].T.copy()
    y = (pts - origin) @ basis

    if n == 0:
        return Polytope(pts[:1], np.zeros((0, 0)), np.zeros(0), origin, basis, [])

    candidates = []  # (normal, offset)
    for combo in itertools.combinations(range(len(y)), n):
        base = y[list(combo)]
        if n == 1:
            normal = np.ones(1)
        else:
            d = base[1:] - base[0]
            _, s, vt = np.linalg.svd(d)
            if s[-1] <= TOL * max(1.0, s[0]):
                continue
            normal = vt[-1]
        normal = normal / np.linalg.norm(normal)
        off = float(normal @ base[0])
        vals = y @ normal - off
        if np.all(vals >= -TOL):
            pass
        elif np.all(vals <= TOL):
            normal, off = -normal, -off
        else:
            continue
        if any(np.max(np.abs(normal - c[0])) <= MERGE_TOL and abs(off - c[1]) <= MERGE_TOL
               for c in candidates):
            continue
        candidates.append((normal, off))

    A, b, facet_sets = [], [], []
    for normal, off in candidates:
        on = np.flatnonzero(np.abs(y @ normal - off) <= TOL)
        if _affine_rank(y[on]) != n - 1:
            continue
        # refit to all incident points
        if n > 1:
            c = y[on].mean(axis=0)
            _, _, vt = np.linalg.svd(y[on] - c)
            refit = vt[-1] if vt[-1] @ normal > 0 else -vt[-1]
            refit /= np.linalg.norm(refit)
            roff = float(refit @ c)
        else:
            refit, roff = normal, off
        resid = np.max(np.abs(y[on] @ refit - roff))
        if resid > FACET_RESIDUAL:
            raise DegenerateNumerics(f"facet residual {resid:.3g} exceeds {FACET_RESIDUAL}")
        if np.min(y @ refit - roff) < -FACET_RESIDUAL:
            raise DegenerateNumerics("refitted facet cuts the point set")
        A.append(refit)
        b.append(roff)
        facet_sets.append(set(on.tolist()))

    A = np.array(A)
    b = np.array(b)
    # keep extreme points only: active normals must have full rank
    slack = y @ A.T - b
    extreme = [k for k in range(len(y))
               if np.linalg.matrix_rank(A[np.abs(slack[k]) <= TOL], tol=1e-9) == n]
    remap = {old: new for new, old in enumerate(extreme)}
    facet_vertices = [frozenset(remap[k] for k in fs if k in remap) for fs in facet_sets]
    return Polytope(pts[extreme], A, b, origin, basis, facet_vertices)


def _enumerate_faces(P: Polytope) -> FaceLattice:
    nv = len(P.vertices)
    everything = frozenset(range(nv))
    sets = set(P.facet_vertices)
    frontier = set(sets)
    while frontier:
        new = set()
        for a in frontier:
            for c in sets:
                inter = a & c
                if inter and inter not in sets:
                    new.add(inter)
        sets |= new
        frontier = new
    sets.add(everything)

    verts = P.vertices
    info = []
    for vs in sets:
        ids = sorted(vs)
        rank = _affine_rank(verts[ids])
        info.append((rank, ids, vs))
    info.sort(key=lambda t: (t[0], t[1]))

    faces = []
    by_vertices = {}
    for fid, (dim, ids, vs) in enumerate(info):
        pts = verts[ids]
        basis = _orthonormal_span(pts[1:] - pts[0]) if dim else np.zeros((P.ambient_dim, 0))
        if basis.shape[1] != dim:
            raise DegenerateNumerics("inconsistent face dimension")
        containing = frozenset(j for j, fv in enumerate(P.facet_vertices) if vs <= fv)
        face = Face(fid, dim, vs, containing, basis, pts[0].copy(), pts.mean(axis=0))
        faces.append(face)
        by_vertices[vs] = face

    parents = {f.id: [] for f in faces}
    children = {f.id: [] for f in faces}
    for f in faces:
        for g in faces:
            if g.dim == f.dim + 1 and f.vertex_ids < g.vertex_ids:
                parents[f.id].append(g.id)
                children[g.id].append(f.id)
    return FaceLattice(faces, parents, children, by_vertices)


def face_lattice(P: Polytope) -> FaceLattice:
    return P.lattice


def _active_sets(P, x, tol):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if P.dim == 0:
        if np.any(np.linalg.norm(x - P.vertices[0], axis=1) > tol):
            raise PointOutside("point differs from the single vertex")
        return [frozenset()] * len(x)
    if np.any(P.offaffine_distance(x) > tol):
        raise PointOutside("point is off the affine hull")
    s = P.slacks(x)
    bad = np.flatnonzero(np.any(s < -tol, axis=1))
    if len(bad):
        raise PointOutside(f"point {x[bad[0]].tolist()} violates a facet inequality "
                           f"by {-s[bad[0]].min():.3g}")
    return [frozenset(np.flatnonzero(row <= tol).tolist()) for row in s]


def locate(P: Polytope, x, tol=TOL):
    """Generating-face ids for an array of points."""
    lat = P.lattice
    out = []
    for active in _active_sets(P, x, tol):
        if not active:
            out.append(P.top_face.id)
            continue
        vs = frozenset.intersection(*(P.facet_vertices[j] for j in active))
        out.append(lat.by_vertices[vs].id)
    return np.array(out, dtype=int)


def generating_face(P: Polytope, x, tol=TOL) -> int:
    """Id of the smallest face containing ``x``."""
    return int(locate(P, x, tol)[0])


def point_index(P: Polytope, x, tol=TOL) -> int:
    return P.dim - P.faces[generating_face(P, x, tol)].dim


def sample_face(P: Polytope, face, count, rng, tol=TOL):
    """Uniform samples from the relative interior of a face (ambient coords)."""
    if isinstance(face, int):
        face = P.faces[face]
    if face.dim == 0 or count == 0:
        return np.repeat(face.origin[None, :], count, axis=0)
    verts = P.vertices[sorted(face.vertex_ids)]
    local = (verts - face.origin) @ face.affine_basis
    lo, hi = local.min(axis=0), local.max(axis=0)
    outside = [j for j in range(P.n_facets) if j not in face.containing_facets]
    out = []
    need = count
    while need > 0:
        batch = max(64, 4 * need)
        u = rng.uniform(lo, hi, size=(batch, face.dim))
        pts = face.origin + u @ face.affine_basis.T
        s = P.slacks(pts)
        ok = np.all(s[:, outside] > tol, axis=1) if outside else np.ones(batch, bool)
        if face.containing_facets:
            ok &= np.all(np.abs(s[:, sorted(face.containing_facets)]) <= tol, axis=1)
        good = pts[ok][:need]
        out.append(good)
        need -= len(good)
    return np.vstack(out)


def boundary_stratum_samples(P: Polytope, i, count, rng=None):
    """Random points of index ``i``: a uniformly chosen (n-i)-face, then a
    uniform point of its relative interior."""
    if rng is None:
        rng = np.random.default_rng(42)
    faces = P.lattice.of_dim(P.dim - i) if 0 <= i <= P.dim else []
    if not faces:
        raise EmptyStratum(f"no face of dimension {P.dim - i}")
    which = rng.integers(len(faces), size=count)
    pts = np.empty((count, P.ambient_dim))
    for k, f in enumerate(faces):
        sel = np.flatnonzero(which == k)
        if len(sel):
            pts[sel] = sample_face(P, f, len(sel), rng)
    return pts


def sample_faces(P: Polytope, per_face, rng, dims=None):
    """Dict face id -> samples from the relative interior of that face."""
    return {f.id: sample_face(P, f, per_face, rng) for f in P.faces
            if dims is None or f.dim in dims}


def polytope_from_json(text) -> Polytope:
    """Build from ``{"vertices": [[...], ...]}``; malformed JSON raises ParseError."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno, e.colno) from None
    if not isinstance(data, dict) or "vertices" not in data:
        raise ParseError('expected an object with a "vertices" list', 1, 1)
    return build_polytope(data["vertices"])
