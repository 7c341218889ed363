"""Stratified vector fields: fields tangent to the generating face of every point.

Restriction to l-faces and extension back (the pair R / tau), the
criterion that reduces stratification to l-faces plus a span condition,
and the obstruction that makes extension impossible on non-simple
polytopes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .errors import IncompatibleFamily, IsSimple, NotStratified, StratificationFailure
from .extension import COMPAT_TOL, CompatibleFamily, Field, bump, ell_extend, span_residual
from .polytope import Polytope, sample_face
from .simplicity import is_simple

TANGENCY_TOL = 1e-9
SPAN_TOL = 1e-8


def _normal_component(values, face):
    """Norm of the part of each row orthogonal to E_F."""
    B = face.affine_basis
    if B.shape[1] == 0:
        return np.linalg.norm(values, axis=1)
    return np.linalg.norm(values - (values @ B) @ B.T, axis=1)


def _face_points(P, face, samples, rng):
    pts = sample_face(P, face, samples, rng)
    if face.dim == 0:
        return pts[:1]
    return pts


@dataclass
class StratifiedField:
    """A vector field on ``P`` with values in the ambient space."""
    base: Polytope
    field: Field
    certified_faces: frozenset = frozenset()

    def __call__(self, points):
        return self.field(points)

    @property
    def codomain_dim(self):
        return self.field.codomain_dim

    def certify(self, samples=100, rng=None, tol=TANGENCY_TOL):
        """Run :func:`is_stratified`; return a copy with all faces certified."""
        rep = is_stratified(self.base, self.field, samples, rng, tol)
        if not rep.passed:
            raise NotStratified(f"normal component {rep.worst:.3g} on face {rep.worst_face}")
        return StratifiedField(self.base, self.field, frozenset(f.id for f in self.base.faces))


@dataclass
class FaceFieldFamily(CompatibleFamily):
    """Compatible fields on the l-faces, each tangent to its face's strata."""

    def check_tangency(self, P: Polytope, samples=50, rng=None, tol=TANGENCY_TOL):
        """Worst normal component of each member on the subfaces of its face."""
        if rng is None:
            rng = np.random.default_rng(3)
        worst = 0.0
        for fid, f in sorted(self.fields.items()):
            for G in P.lattice.subfaces(fid):
                nc = _normal_component(f(_face_points(P, G, samples, rng)), G)
                worst = max(worst, float(nc.max()))
                if nc.max() > tol:
                    raise NotStratified(f"member on face {fid} leaves face {G.id} "
                                        f"by {nc.max():.3g}")
        return worst


@dataclass
class StratificationReport:
    passed: bool
    per_face: dict
    worst: float
    worst_face: int | None
    worst_point: list | None
    tol: float

    def to_dict(self):
        return {"passed": self.passed, "worst": self.worst, "worst_face": self.worst_face,
                "worst_point": self.worst_point, "tol": self.tol,
                "per_face": {str(k): v for k, v in sorted(self.per_face.items())}}


def is_stratified(P: Polytope, X, samples=100, rng=None, tol=TANGENCY_TOL,
                  faces=None) -> StratificationReport:
    """Largest normal component of ``X`` over samples of each face's relative
    interior (vertices are evaluated once)."""
    if rng is None:
        rng = np.random.default_rng(42)
    faces = P.faces if faces is None else [P.faces[f] for f in faces]
    per_face, worst, worst_face, worst_point = {}, 0.0, None, None
    for F in faces:
        pts = _face_points(P, F, samples, rng)
        nc = _normal_component(X(pts), F)
        k = int(np.argmax(nc))
        per_face[F.id] = float(nc[k])
        if nc[k] > worst or worst_face is None:
            worst, worst_face, worst_point = float(nc[k]), F.id, pts[k].tolist()
    return StratificationReport(worst <= tol, per_face, worst, worst_face, worst_point, tol)


@dataclass
class CriterionReport:
    ell: int
    condition_a: bool
    condition_b: bool
    a_worst: float
    b_residuals: dict
    full_check: StratificationReport
    consistent: bool = field(default=True)

    @property
    def passed(self):
        return self.condition_a and self.condition_b

    def to_dict(self):
        return {"ell": self.ell, "passed": self.passed, "condition_a": self.condition_a,
                "condition_b": self.condition_b, "a_worst": self.a_worst,
                "b_residuals": {str(k): v for k, v in sorted(self.b_residuals.items())},
                "full_check": self.full_check.to_dict(), "consistent": self.consistent}


def stratified_criterion(P: Polytope, X, ell, samples=60, rng=None,
                         tol=TANGENCY_TOL, span_tol=SPAN_TOL) -> CriterionReport:
    """Check stratification through the l-face criterion.

    (a) ``X`` restricted to each l-face is stratified there, i.e. tangent to
    every subface of it; (b) on every face ``N`` of dimension above ``l`` the
    sampled values of ``X`` lie in the span of its values on the l-faces of
    ``N``. Together they imply stratification, which is cross-checked
    against :func:`is_stratified` on all of ``M``.
    """
    if rng is None:
        rng = np.random.default_rng(42)
    lat = P.lattice
    low = {g.id for F in lat.of_dim(ell) for g in lat.subfaces(F.id)}
    rep_a = is_stratified(P, X, samples, rng, tol, faces=sorted(low))

    b_res = {}
    for N in P.faces:
        if N.dim <= ell:
            continue
        ref = np.vstack([X(_face_points(P, F, samples, rng))
                         for F in lat.of_dim(ell) if F.vertex_ids <= N.vertex_ids])
        vals = X(_face_points(P, N, samples, rng))
        b_res[N.id] = span_residual(vals, ref)
    cond_b = all(r <= span_tol for r in b_res.values())

    full = is_stratified(P, X, samples, rng, tol)
    rep = CriterionReport(ell, rep_a.passed, cond_b, rep_a.worst, b_res, full)
    # the criterion is sufficient, so a pass with a failing direct check is a bug
    rep.consistent = full.passed or not rep.passed
    return rep


def restrict_fields(X, ell, samples=100, rng=None) -> FaceFieldFamily:
    """``R(X) = (X|_F)`` over the l-faces; raises NotStratified first."""
    if not isinstance(X, StratifiedField):
        raise TypeError("restrict_fields expects a StratifiedField")
    P = X.base
    if len(X.certified_faces) < len(P.faces):
        rep = is_stratified(P, X.field, samples, rng)
        if not rep.passed:
            raise NotStratified(f"normal component {rep.worst:.3g} on face {rep.worst_face}")
    return FaceFieldFamily(ell, {F.id: X.field for F in P.lattice.of_dim(ell)})


def extend_fields(P: Polytope, family: FaceFieldFamily, samples=60, rng=None,
                  verify=True) -> StratifiedField:
    """``tau(f)``: extend compatible tangent face fields to a stratified field.

    The values of the extension on a face ``N`` lie in the span of the data
    on the l-faces of ``N``, so stratification follows from the criterion.
    Both that and the round trip are verified on samples; a failure is an
    implementation error and raises StratificationFailure.
    """
    if rng is None:
        rng = np.random.default_rng(42)
    if isinstance(family, FaceFieldFamily):
        family.check_tangency(P, samples=20, rng=rng)
    g = ell_extend(P, family.ell, family)
    out = StratifiedField(P, g)
    if verify:
        rep = is_stratified(P, g, samples, rng)
        if not rep.passed:
            raise StratificationFailure(
                f"extension leaves face {rep.worst_face} by {rep.worst:.3g}")
        worst = 0.0
        for F in P.lattice.of_dim(family.ell):
            pts = sample_face(P, F, samples, rng)
            worst = max(worst, float(np.abs(g(pts) - family.fields[F.id](pts)).max()))
        if worst > COMPAT_TOL:
            raise StratificationFailure(f"restriction of the extension is off by {worst:.3g}")
        out = StratifiedField(P, g, frozenset(f.id for f in P.faces))
    return out


# ---------------------------------------------------------------------------
# obstruction for non-simple polytopes

@dataclass
class ObstructionWitness:
    vertex: int
    point: list
    n: int
    m: int
    neighbours: list
    lambdas: list
    lambda_residual: float
    v: list
    forced_derivative: list
    actual_derivative: list
    infeasibility_residual: float
    family: CompatibleFamily
    cutoff_t0: float

    @property
    def v_norm(self):
        return float(np.linalg.norm(self.v))

    def to_dict(self):
        return {
            "vertex": self.vertex, "point": self.point, "n": self.n, "m": self.m,
            "neighbours": self.neighbours, "lambdas": self.lambdas,
            "lambda_residual": self.lambda_residual, "v": self.v, "v_norm": self.v_norm,
            "forced_derivative": self.forced_derivative,
            "actual_derivative": self.actual_derivative,
            "infeasibility_residual": self.infeasibility_residual,
            "ratio": self.infeasibility_residual / self.v_norm,
            "cutoff_t0": self.cutoff_t0,
        }


def _cutoff(t, t0):
    """``t * b(t / t0)``: linear germ at 0, vanishing for ``t >= t0``."""
    return t * bump(t / t0)


def _quadratic_design(U):
    """Monomials 1, u_k, u_a u_b (a <= b) of rows of U."""
    n = U.shape[1]
    cols = [np.ones(len(U))] + [U[:, k] for k in range(n)]
    cols += [U[:, a] * U[:, b] for a in range(n) for b in range(a, n)]
    return np.column_stack(cols)


def _quadratic_directional(u_dir, n):
    """Row giving the derivative at 0 along ``u_dir`` of the quadratic model."""
    row = np.zeros(1 + n + n * (n + 1) // 2)
    row[1:1 + n] = u_dir
    return row


def nonsimple_obstruction(P: Polytope, t0=0.25, probes=12) -> ObstructionWitness:
    """Compatible edge data near a vertex with too many edges that no smooth
    field extends.

    At a vertex ``x0`` with ``m > n`` edges, some edge direction
    ``x_m - x0`` is a combination of the others. Data vanishing on all edges
    but ``[x0, x_m]``, where it is ``h(t) (x_m - x0)`` with ``h'(0) = 1``,
    forces ``dg(x0, x_j - x0) = 0`` for ``j < m`` yet ``dg(x0, x_m - x0) = v``.
    A quadratic model constrained to the zero data is fitted to show the
    mismatch numerically.
    """
    rep = is_simple(P)
    if rep.is_simple:
        raise IsSimple("every vertex lies on exactly n edges")
    n = P.dim
    vid = rep.witness["vertex"]
    x0 = P.vertices[vid]
    edges = [e for e in P.lattice.of_dim(1) if vid in e.vertex_ids]
    nbrs = [next(iter(e.vertex_ids - {vid})) for e in edges]
    D = P.to_chart(P.vertices[nbrs]) - P.to_chart(x0)     # (m, n) in the chart
    m = len(nbrs)

    # pick x_m so that the remaining directions still span
    last = next(k for k in reversed(range(m))
                if np.linalg.matrix_rank(np.delete(D, k, axis=0), tol=1e-9) == n)
    order = [k for k in range(m) if k != last] + [last]
    D = D[order]
    nbrs = [nbrs[k] for k in order]
    edges = [edges[k] for k in order]
    lam, *_ = np.linalg.lstsq(D[:-1].T, D[-1], rcond=None)
    lam_res = float(np.linalg.norm(D[:-1].T @ lam - D[-1]))

    xm = P.vertices[nbrs[-1]]
    v_amb = xm - x0
    v = D[-1]

    def edge_m(X, x0=x0, d=v_amb):
        t = (X - x0) @ d / (d @ d)
        return _cutoff(t, t0)[:, None] * d[None, :]

    fields = {e.id: Field.zero(P.ambient_dim) for e in P.lattice.of_dim(1)}
    fields[edges[-1].id] = Field(edge_m, P.ambient_dim, name="obstruction")
    family = CompatibleFamily(1, fields)
    family.check(P, tol=COMPAT_TOL)

    # quadratic fit: exact zero data on edges 1..m-1, derivative along edge m
    s = np.linspace(0.0, 0.2, probes)
    U0 = np.vstack([np.outer(s, d) for d in D[:-1]])
    A = _quadratic_design(U0)
    basis = null_space(A)
    J = _quadratic_directional(v, n) @ basis            # derivative along v
    # one ambient output component at a time; all share the same J
    target = v_amb
    resid = []
    actual = []
    for k in range(P.ambient_dim):
        if J.size and np.any(np.abs(J) > 1e-12):
            c, *_ = np.linalg.lstsq(J[None, :], [target[k]], rcond=None)
            got = float(J @ c)
        else:
            got = 0.0
        actual.append(got)
        resid.append(got - target[k])
    infeas = float(np.linalg.norm(resid))
    return ObstructionWitness(
        vertex=int(vid), point=x0.tolist(), n=n, m=m, neighbours=[int(k) for k in nbrs],
        lambdas=lam.tolist(), lambda_residual=lam_res, v=v_amb.tolist(),
        forced_derivative=[float(a) for a in actual], actual_derivative=v_amb.tolist(),
        infeasibility_residual=infeas, family=family, cutoff_t0=t0)
