"""Simplicity tests and affine standard charts of simple polytopes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ChartViolation, NotSimple
from .polytope import TOL, Polytope, generating_face, locate


@dataclass
class SimplicityReport:
    is_simple: bool
    per_vertex_edge_counts: dict
    per_vertex_facet_counts: dict
    per_face_facet_counts: dict
    criteria: dict
    witness: dict | None = None

    def to_dict(self):
        return {
            "is_simple": self.is_simple,
            "criteria": self.criteria,
            "per_vertex_edge_counts": {str(k): v for k, v in self.per_vertex_edge_counts.items()},
            "per_vertex_facet_counts": {str(k): v for k, v in self.per_vertex_facet_counts.items()},
            "per_face_facet_counts": {str(k): v for k, v in self.per_face_facet_counts.items()},
            "witness": self.witness,
        }


def is_simple(P: Polytope) -> SimplicityReport:
    """Evaluate the three equivalent simplicity criteria independently.

    (a) every vertex lies on exactly n edges, (b) every vertex lies on exactly
    n facets, (c) every k-face (k < n) lies on exactly n - k facets. The
    criteria are provably equivalent, so disagreement is an internal error.
    """
    n = P.dim
    lat = P.lattice
    vertex_faces = lat.of_dim(0)
    edges = lat.of_dim(1) if n >= 1 else []

    edge_counts = {}
    facet_counts = {}
    for v in vertex_faces:
        (vid,) = v.vertex_ids
        edge_counts[vid] = sum(1 for e in edges if vid in e.vertex_ids)
        facet_counts[vid] = len(v.containing_facets)
    face_counts = {f.id: len(f.containing_facets) for f in lat.faces if f.dim < n}

    crit_a = all(c == n for c in edge_counts.values())
    crit_b = all(c == n for c in facet_counts.values())
    crit_c = all(face_counts[f.id] == n - f.dim for f in lat.faces if f.dim < n)
    if not (crit_a == crit_b == crit_c):
        raise AssertionError(f"simplicity criteria disagree: a={crit_a} b={crit_b} c={crit_c}")

    witness = None
    if not crit_a:
        vid = next(k for k, c in sorted(edge_counts.items()) if c != n)
        witness = {
            "vertex": int(vid),
            "point": P.vertices[vid].tolist(),
            "edge_count": edge_counts[vid],
            "facet_count": facet_counts[vid],
            "dim": n,
        }
    return SimplicityReport(crit_a, edge_counts, facet_counts, face_counts,
                            {"a_vertex_edges": crit_a, "b_vertex_facets": crit_b,
                             "c_face_facets": crit_c}, witness)


@dataclass(frozen=True, eq=False)
class StandardChart:
    """Affine chart ``w = L (z - x) / eps`` onto ``[0,1)^i x (-1,1)^(n-i)``.

    ``linear_part`` acts on ambient coordinates (shape ``(n, N)``); its first
    ``i`` rows are the facet functionals active at the base point, so chart
    wall ``k`` (``w_k = 0``) is facet ``facet_map[k]``.
    """
    base_point: np.ndarray
    index: int
    linear_part: np.ndarray
    inverse_part: np.ndarray      # (N, n), right inverse of linear_part on E_M
    epsilon: float
    facet_map: tuple
    face_id: int = field(default=-1)

    @property
    def dim(self):
        return self.linear_part.shape[0]

    @property
    def translation(self):
        return -(self.linear_part @ self.base_point) / self.epsilon

    def forward(self, z):
        z = np.atleast_2d(z)
        return (z - self.base_point) @ self.linear_part.T / self.epsilon

    def inverse(self, w):
        w = np.atleast_2d(w)
        return self.base_point + self.epsilon * (w @ self.inverse_part.T)

    def in_cube(self, w, tol=0.0):
        w = np.atleast_2d(w)
        i = self.index
        ok = np.all(w[:, :i] >= -tol, axis=1) & np.all(w[:, :i] < 1 + tol, axis=1)
        ok &= np.all(np.abs(w[:, i:]) < 1 + tol, axis=1)
        return ok

    def to_dict(self):
        return {
            "base_point": self.base_point.tolist(),
            "index": self.index,
            "epsilon": self.epsilon,
            "linear_part": (self.linear_part / self.epsilon).tolist(),
            "translation": self.translation.tolist(),
            "facet_map": list(self.facet_map),
        }


def standard_chart(P: Polytope, x, face_id=None) -> StandardChart:
    """Affine standard chart around ``x``.

    Translate ``x`` to 0, take the facet functionals active at ``x`` as the
    first coordinates, complete them by an orthonormal basis of their common
    kernel, then shrink by ``eps`` so the closed chart cube stays away from
    every facet not containing ``x``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if face_id is None:
        face_id = generating_face(P, x)
    face = P.faces[face_id]
    n = P.dim
    i = n - face.dim
    active = sorted(face.containing_facets)
    if len(active) != i:
        raise NotSimple(f"{len(active)} facets meet at a point of index {i}")
    lam = P.A[active]
    if i and np.linalg.matrix_rank(lam, tol=1e-9) < i:
        raise NotSimple("active facet functionals are linearly dependent")
    # complete to a basis of (R^n)^*
    if i == 0:
        # any orthonormal frame works; aligning the first axis with the
        # nearest facet normal gives the largest admissible eps
        L = np.eye(n)
        if P.n_facets:
            y0 = P.to_chart(x)[0]
            near = int(np.argmin(P.A @ y0 - P.b))
            q, _ = np.linalg.qr(np.column_stack([P.A[near], np.eye(n)]))
            L = q[:, :n].T
    elif i < n:
        _, _, vt = np.linalg.svd(lam)
        L = np.vstack([lam, vt[i:]])
    else:
        L = lam
    Linv = np.linalg.inv(L)

    inactive = [j for j in range(P.n_facets) if j not in face.containing_facets]
    eps = 1.0
    if inactive:
        y0 = P.to_chart(x)[0]
        slack = P.A[inactive] @ y0 - P.b[inactive]
        coeff = P.A[inactive] @ Linv        # lam_j(L^-1 w)
        # worst decrease of lam_j over the closed cube [0,1]^i x [-1,1]^(n-i)
        drop = np.clip(-coeff[:, :i], 0, None).sum(axis=1) + np.abs(coeff[:, i:]).sum(axis=1)
        drop = np.maximum(drop, 1e-300)
        eps = 0.5 * float(np.min(slack / drop))
    linear = L @ P.basis.T                  # (n, N)
    inverse = P.basis @ Linv                # (N, n)
    return StandardChart(x.copy(), i, linear, inverse, eps, tuple(active), face_id)


@dataclass
class ChartReport:
    passed: bool
    samples: int
    checks: dict
    worst: dict


def verify_chart(P: Polytope, chart: StandardChart, samples=1000, rng=None,
                 tol=TOL) -> ChartReport:
    """Sample the chart cube and its walls, pulling back and pushing forward.

    Raises :class:`ChartViolation` at the first offending point.
    """
    if rng is None:
        rng = np.random.default_rng(42)
    n, i = chart.dim, chart.index
    w = np.hstack([rng.uniform(0, 1, (samples, i)), rng.uniform(-1, 1, (samples, n - i))])
    z = chart.inverse(w)
    inside = P.contains(z, tol)
    if not inside.all():
        bad = z[~inside][0]
        raise ChartViolation("chart cube point pulls back outside M", bad)
    back = chart.forward(z)
    err = float(np.max(np.abs(back - w))) if samples else 0.0
    if err > 1e-9:
        raise ChartViolation("kappa o kappa^-1 is not the identity", z[0])

    s = P.slacks(z)
    worst_wall = 0.0
    for k in range(i):
        wk = w.copy()
        wk[:, k] = 0.0
        zk = chart.inverse(wk)
        # wall k must lie on facet facet_map[k]
        dev = np.abs(P.slacks(zk)[:, chart.facet_map[k]])
        worst_wall = max(worst_wall, float(dev.max()))
        if dev.max() > tol:
            j = int(np.argmax(dev))
            raise ChartViolation(f"wall {k} does not lie on facet {chart.facet_map[k]}", zk[j])
        # points of U on facet facet_map[k] push forward into wall k
        on = np.abs(s[:, chart.facet_map[k]]) <= tol
        if on.any() and np.abs(back[on, k]).max() > 1e-9:
            raise ChartViolation(f"facet {chart.facet_map[k]} misses wall {k}", z[on][0])

    # inactive facets never meet U
    inactive = [j for j in range(P.n_facets) if j not in chart.facet_map]
    min_slack = float(s[:, inactive].min()) if inactive and samples else float("inf")
    if inactive and samples and min_slack <= tol:
        raise ChartViolation("chart domain touches a facet not containing x",
                             z[np.argmin(s[:, inactive].min(axis=1))])

    # index-1 points near x land in exactly one wall
    walls_hit = 0
    for k in range(i):
        wk = w.copy()
        wk[:, k] = 0.0
        zk = chart.inverse(wk)
        faces = locate(P, zk)
        for fid, row in zip(faces, wk):
            f = P.faces[fid]
            if P.dim - f.dim == 1:
                zero = np.flatnonzero(np.abs(row[:i]) <= 1e-12)
                if len(zero) != 1 or zero[0] != k:
                    raise ChartViolation("index-1 point on several walls", chart.inverse(row)[0])
                walls_hit += 1
    return ChartReport(True, samples,
                       {"pullback_in_M": True, "walls_on_facets": True,
                        "inactive_facets_avoided": True, "index_one_walls": walls_hit},
                       {"roundtrip": err, "wall_residual": worst_wall,
                        "min_inactive_slack": min_slack})
