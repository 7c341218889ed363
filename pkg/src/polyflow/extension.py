"""Extension of compatible face data to the whole polytope.

Three layers:

* the local inclusion-exclusion operator on half-open cubes
  ``[0,1)^i x (-1,1)^(n-i)`` (:func:`local_extend`) and the wall
  restriction it inverts (:func:`local_restrict`);
* a smooth partition of unity subordinate to standard charts, used to glue
  local extensions of facet data into a field on ``M``
  (:func:`facet_extend`);
* recursion over face dimension for data given on l-faces
  (:func:`ell_extend`).

Fields are vectorised callables: ``f(points)`` with ``points`` of shape
``(k, N)`` returns an array of shape ``(k, m)``.
"""
from __future__ import annotations

import itertools
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import CoverFailure, IncompatibleFamily, NotSimple
from .polytope import Polytope, locate, sample_face
from .simplicity import is_simple, standard_chart

COMPAT_TOL = 1e-9


class Field:
    """A vectorised map from points to ``R^m``."""

    def __init__(self, func, codomain_dim=1, derivative=None, name=None):
        self._func = func
        self.codomain_dim = codomain_dim
        self._derivative = derivative
        self.name = name

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.asarray(self._func(pts), dtype=float)
        return out.reshape(len(pts), self.codomain_dim)

    def __repr__(self):
        return f"Field({self.name or 'anonymous'}, m={self.codomain_dim})"

    def derivative(self, points, direction, step=1e-6):
        """Directional derivative; central differences unless supplied."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self._derivative is not None:
            return np.asarray(self._derivative(pts, direction)).reshape(len(pts), -1)
        d = np.asarray(direction, dtype=float)
        return (self(pts + step * d) - self(pts - step * d)) / (2 * step)

    # linear structure
    def __add__(self, other):
        return Field(lambda p: self(p) + other(p), self.codomain_dim)

    def __sub__(self, other):
        return Field(lambda p: self(p) - other(p), self.codomain_dim)

    def __rmul__(self, c):
        c = float(c)
        return Field(lambda p: c * self(p), self.codomain_dim)

    def __neg__(self):
        return (-1.0) * self

    def scaled_by(self, scalar_field):
        """Pointwise product with a scalar field."""
        return Field(lambda p: scalar_field(p)[:, :1] * self(p), self.codomain_dim)

    @classmethod
    def zero(cls, codomain_dim=1):
        return cls(lambda p: np.zeros((len(p), codomain_dim)), codomain_dim, name="0")

    @classmethod
    def constant(cls, value):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(lambda p: np.tile(value, (len(p), 1)), len(value), name=str(value.tolist()))


def bump(r):
    """``exp(1 - 1/(1 - r^2))`` on ``|r| < 1``, zero elsewhere; equals 1 at 0."""
    r = np.asarray(r, dtype=float)
    r2 = r * r
    inside = r2 < 1.0
    out = np.zeros_like(r2)
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


# ---------------------------------------------------------------------------
# half-open cubes

def theta(i, S, x, q=None):
    """Zero the coordinates listed in ``S`` (1-based) of ``x in [0,1)^i``."""
    S = set(S)
    if not S or not S <= set(range(1, i + 1)):
        raise ValueError("S must be a non-empty subset of {1, ..., i}")
    y = np.array(x, dtype=float, copy=True)
    idx = [s - 1 for s in sorted(S)]
    y[..., idx] = 0.0
    if q is None:
        return y
    return y, np.asarray(q, dtype=float)


@dataclass
class CubeFamily:
    """Components ``f_k`` on the walls ``{x_k = 0} x Q`` of ``[0,1)^i x Q``.

    Points are arrays ``(x_1..x_i, q_1..q_qdim)``; component ``k`` is only
    ever evaluated on points whose ``k``-th coordinate is zero.
    """
    i: int
    q_dim: int
    components: list

    @property
    def codomain_dim(self):
        return self.components[0].codomain_dim

    def check_compatibility(self, samples=200, rng=None, tol=COMPAT_TOL):
        """Largest ``|f_k - f_l|`` on sampled points of wall intersections."""
        if rng is None:
            rng = np.random.default_rng(0)
        worst = 0.0
        for k, l in itertools.combinations(range(self.i), 2):
            pts = _cube_points(self.i, self.q_dim, samples, rng)
            pts[:, [k, l]] = 0.0
            d = float(np.max(np.abs(self.components[k](pts) - self.components[l](pts))))
            worst = max(worst, d)
            if d > tol:
                raise IncompatibleFamily(f"walls {k + 1} and {l + 1} disagree by {d:.3g}",
                                         faces=(k + 1, l + 1), discrepancy=d)
        return worst


def _cube_points(i, q_dim, count, rng):
    return np.hstack([rng.uniform(0, 1, (count, i)), rng.uniform(-1, 1, (count, q_dim))])


def cube_grid(i, q_dim, per_axis=5):
    """Tensor grid on ``[0,1)^i x (-1,1)^q_dim`` including the walls."""
    xs = np.linspace(0.0, 0.9, per_axis)
    qs = np.linspace(-0.9, 0.9, per_axis)
    axes = [xs] * i + [qs] * q_dim
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, i + q_dim)


def _subsets(i):
    for j in range(1, i + 1):
        for S in itertools.combinations(range(i), j):
            yield j, S


def _phi_values(components, i, w):
    out = 0.0
    for j, S in _subsets(i):
        y = w.copy()
        y[:, list(S)] = 0.0
        term = components[S[0]](y)
        out = out + term if (j % 2) else out - term
    return out


def local_extend(family: CubeFamily, check=True, rng=None) -> Field:
    """Inclusion-exclusion extension of wall data to the whole cube.

    ``Phi(f)(w) = sum_j (-1)^(j-1) sum_{|S|=j} f_{min S}(theta_S(w))``.
    """
    if check:
        family.check_compatibility(rng=rng)
    comps, i = list(family.components), family.i
    return Field(lambda w: _phi_values(comps, i, np.array(w, dtype=float)),
                 family.codomain_dim, name=f"Phi_{i}")


def phi_recursive(family: CubeFamily, w):
    """Evaluate the extension through the three-term recursion in ``x_i``.

    ``Phi_i(f)(x, q) = Phi_{i-1}(f(., x_i, .))(x', q) + f_i(x', 0, q)
    - Phi_{i-1}(f(., 0, .))(x', q)``. Used as an independent evaluation path.
    """
    comps = family.components

    def rec(i, pts):
        last = pts.copy()
        last[:, i - 1] = 0.0
        if i == 1:
            return comps[0](last)
        return rec(i - 1, pts) + comps[i - 1](last) - rec(i - 1, last)

    return rec(family.i, np.atleast_2d(np.array(w, dtype=float)))


def local_restrict(f: Field, i, q_dim=0) -> CubeFamily:
    """Wall restrictions ``(f|_{x_k = 0})_k``; compatible by construction."""
    def wall(k):
        def g(w):
            y = np.array(w, dtype=float)
            y[:, k] = 0.0
            return f(y)
        return Field(g, f.codomain_dim, name=f"wall{k + 1}")
    return CubeFamily(i, q_dim, [wall(k) for k in range(i)])


# ---------------------------------------------------------------------------
# partition of unity

@dataclass(eq=False)
class PartitionOfUnity:
    """Normalised bumps ``h_z = b(|kappa_z(x)| / rho) / sum``.

    The raw bump of chart ``z`` is supported in the closed ball of radius
    ``rho < 1`` of the chart cube, whose intersection with ``M`` lies in the
    chart domain.
    """
    polytope: Polytope
    charts: list
    rho: float = 0.95
    margin: float = 0.05

    def _stack(self):
        # charts are only ever appended, so extend the cached arrays
        n = self.polytope.dim
        st = getattr(self, "_stacked", None)
        if st is None or st["count"] > len(self.charts):
            st = {"count": 0, "base": [], "fwd": [], "inv": [], "index": [],
                  "facets": [], "radius": []}
        if st["count"] < len(self.charts):
            new = self.charts[st["count"]:]
            parts = {
                "base": [c.base_point for c in new],
                "fwd": [c.linear_part / c.epsilon for c in new],
                "inv": [c.inverse_part * c.epsilon for c in new],
                "index": [c.index for c in new],
                "facets": [list(c.facet_map) + [-1] * (n - c.index) for c in new],
                # ambient radius of the support ball |w| <= rho
                "radius": [support_radius(c, self.rho) for c in new],
            }
            for key, vals in parts.items():
                arr = np.array(vals).reshape((len(new),) + np.shape(vals[0]))
                st[key] = arr if st["count"] == 0 else np.concatenate([st[key], arr])
            st["index"] = st["index"].astype(int)
            st["facets"] = st["facets"].astype(int)
            st["count"] = len(self.charts)
            self._stacked = st
        return st

    def chart_coords(self, X, which):
        st = self._stack()
        return np.einsum("pij,pj->pi", st["fwd"][which], X - st["base"][which])

    def raw_pairs(self, X):
        """Nonzero raw bumps as ``(point_idx, chart_idx, value)``.

        Candidate pairs come from KD-trees: charts are bucketed by support
        radius and each bucket is matched against the points in one pass.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        st = self._stack()
        radius = st["radius"]
        xtree = cKDTree(X)
        ps, zs = [], []
        level = np.floor(np.log(radius) / np.log(1.5))
        for lv in np.unique(level):
            ids = np.flatnonzero(level == lv)
            ctree = cKDTree(st["base"][ids])
            m = ctree.sparse_distance_matrix(xtree, radius[ids].max(), output_type="ndarray")
            zi, pi = m["i"], m["j"]
            ok = m["v"] <= radius[ids][zi]
            zs.append(ids[zi[ok]])
            ps.append(pi[ok])
        p = np.concatenate(ps) if ps else np.zeros(0, int)
        z = np.concatenate(zs) if zs else np.zeros(0, int)
        if len(p) == 0:
            return p, z, np.zeros(0)
        val = bump(np.linalg.norm(self.chart_coords(X[p], z), axis=1) / self.rho)
        keep = val > 0
        return p[keep], z[keep], val[keep]

    def raw_sum(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p, _, val = self.raw_pairs(X)
        return np.bincount(p, weights=val, minlength=len(X))

    def raw(self, X):
        """Dense raw bump values, shape ``(points, charts)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p, z, val = self.raw_pairs(X)
        out = np.zeros((len(X), len(self.charts)))
        out[p, z] = val
        return out

    def weight_pairs(self, X):
        """Normalised bumps in sparse form ``(point_idx, chart_idx, weight)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p, z, val = self.raw_pairs(X)
        total = np.bincount(p, weights=val, minlength=len(X))
        if np.any(total <= 1e-300):
            k = int(np.argmin(total))
            raise CoverFailure("point not covered by any chart", X[k])
        return p, z, val / total[p]

    def weights(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p, z, wt = self.weight_pairs(X)
        out = np.zeros((len(X), len(self.charts)))
        out[p, z] = wt
        return out

    def audit(self, points, margin=None):
        """Raise CoverFailure where the raw bump sum drops below ``margin``."""
        margin = self.margin if margin is None else margin
        total = self.raw_sum(points)
        k = int(np.argmin(total))
        if total[k] < margin:
            raise CoverFailure(f"raw bump sum {total[k]:.3g} below {margin}",
                               np.atleast_2d(points)[k])
        return float(total.min())

    def without(self, index):
        charts = [c for k, c in enumerate(self.charts) if k != index]
        return PartitionOfUnity(self.polytope, charts, self.rho, self.margin)


def support_radius(chart, rho=0.95):
    """Ambient radius of the ball ``|kappa(x)| <= rho``."""
    return rho * chart.epsilon * np.linalg.norm(chart.inverse_part, 2) * (1 + 1e-9)


def _face_grid(P, face, per_axis):
    """Grid points of a face's bounding box that lie in its relative interior."""
    verts = P.vertices[sorted(face.vertex_ids)]
    local = (verts - face.origin) @ face.affine_basis
    lo, hi = local.min(axis=0), local.max(axis=0)
    axes = [np.linspace(l, u, per_axis + 2)[1:-1] for l, u in zip(lo, hi)]
    grid = np.array(list(itertools.product(*axes))).reshape(-1, face.dim)
    pts = face.origin + grid @ face.affine_basis.T
    s = P.slacks(pts)
    outside = [j for j in range(P.n_facets) if j not in face.containing_facets]
    ok = np.all(s[:, outside] > 1e-9, axis=1) if outside else np.ones(len(pts), bool)
    return pts[ok]


def _audit_points(P, rng, budget=20000, random_per_face=200):
    pts = [P.vertices]
    for f in P.faces:
        if f.dim == 0:
            continue
        per_axis = int(min(150, max(8, budget ** (1.0 / f.dim))))
        pts.append(_face_grid(P, f, per_axis))
        pts.append(sample_face(P, f, random_per_face * f.dim, rng))
    return np.vstack(pts)


def _shell_points(P, pou, per_chart, rng):
    """Points just around each chart's support boundary, where gaps open up."""
    st = pou._stack()
    nc, N = st["base"].shape
    u = rng.normal(size=(nc, per_chart, N))
    u /= np.linalg.norm(u, axis=2, keepdims=True)
    r = st["radius"][:, None, None] * rng.uniform(0.6, 1.1, (nc, per_chart, 1))
    pts = (st["base"][:, None, :] + r * u).reshape(-1, N)
    # project onto the affine hull, keep what lies in M
    pts = P.from_chart(P.to_chart(pts))
    return pts[P.contains(pts)]


def _best_chart(P, x, rho):
    """Chart with the largest bump at ``x`` among snaps of ``x`` onto nearby faces.

    Centring a chart at a gap point close to the boundary gives a tiny
    chart, so ``x`` is also projected onto the intersection of its k nearest
    facets (k = 0..n). The largest candidate whose bump at ``x`` is at least
    ``0.5`` wins; the chart centred at ``x`` itself always qualifies.
    """
    y = P.to_chart(x)[0]
    order = np.argsort(P.slacks(x)[0])
    best = None
    for k in range(P.dim + 1):
        S = order[:k]
        z = y
        if k:
            As = P.A[S]
            try:
                z = y - As.T @ np.linalg.solve(As @ As.T, As @ y - P.b[S])
            except np.linalg.LinAlgError:
                continue
        zx = P.from_chart(z)
        if not P.contains(zx, 1e-9)[0]:
            continue
        c = standard_chart(P, zx[0])
        if c.epsilon <= 0:
            continue
        val = float(np.ravel(bump(np.linalg.norm(c.forward(x), axis=1) / rho))[0])
        if val >= 0.5 and (best is None or c.epsilon > best.epsilon):
            best = c
    return best


def build_partition_of_unity(P: Polytope, seed=7, rho=0.95, margin=0.05,
                             rounds=30, max_charts=50000) -> PartitionOfUnity:
    """Charts at one relative-interior point per face, refined on cover gaps.

    Audit points (per-face grids plus random samples) are scanned; while
    some point has raw bump sum below ``margin`` a new standard chart is
    centred at the worst one. Further rounds repeat the audit with fresh
    random points and points around every chart's support boundary, until
    two rounds in a row find nothing below ``margin / 4``.
    """
    report = is_simple(P)
    if not report.is_simple:
        raise NotSimple(f"polytope is not simple: {report.witness}")
    charts = [standard_chart(P, f.relative_interior_point, f.id) for f in P.faces]
    pou = PartitionOfUnity(P, charts, rho, margin)
    rng = np.random.default_rng(seed)
    streak = 0
    for r in range(rounds):
        if r == 0:
            pts = _audit_points(P, rng)
        else:
            pts = np.vstack([sample_face(P, f, 2000 * f.dim, rng) for f in P.faces if f.dim > 0]
                            + [_shell_points(P, pou, 24, rng)])
        total = pou.raw_sum(pts)
        clean = total.min() >= 0.25 * margin
        tree = cKDTree(pts)
        added = 0
        while total.min() < margin:
            k = int(np.argmin(total))
            c = _best_chart(P, pts[k:k + 1], rho)
            pou.charts.append(c)
            added += 1
            near = np.array(tree.query_ball_point(c.base_point, support_radius(c, rho)),
                            dtype=int)
            total[near] += bump(np.linalg.norm(c.forward(pts[near]), axis=1) / rho)
            if len(pou.charts) > max_charts:
                raise CoverFailure("chart budget exhausted while refining the cover", pts[k])
        streak = streak + 1 if (r > 0 and clean) else 0
        if streak == 2:
            break
    return pou


_POU_CACHE: "weakref.WeakKeyDictionary[Polytope, PartitionOfUnity]" = weakref.WeakKeyDictionary()


def partition_of_unity(P: Polytope) -> PartitionOfUnity:
    """Cached :func:`build_partition_of_unity` for a polytope."""
    pou = _POU_CACHE.get(P)
    if pou is None:
        pou = build_partition_of_unity(P)
        _POU_CACHE[P] = pou
    return pou


# ---------------------------------------------------------------------------
# compatible families

@dataclass
class CompatibleFamily:
    """Fields on the l-faces of a polytope (keyed by face id)."""
    ell: int
    fields: dict

    @property
    def codomain_dim(self):
        return next(iter(self.fields.values())).codomain_dim

    def check(self, P: Polytope, samples=50, rng=None, tol=COMPAT_TOL):
        """Sample every pairwise intersection; return the worst discrepancy."""
        if rng is None:
            rng = np.random.default_rng(1)
        ids = sorted(self.fields)
        expected = {f.id for f in P.lattice.of_dim(self.ell)}
        if set(ids) != expected:
            raise IncompatibleFamily(f"family must cover exactly the {self.ell}-faces",
                                     faces=tuple(sorted(expected ^ set(ids))))
        worst = 0.0
        lat = P.lattice
        for a, b in itertools.combinations(ids, 2):
            common = lat.faces[a].vertex_ids & lat.faces[b].vertex_ids
            if not common:
                continue
            face = lat.by_vertices.get(common)
            if face is None:
                raise IncompatibleFamily("face intersection is not a face", faces=(a, b))
            pts = np.vstack([P.vertices[sorted(common)], sample_face(P, face, samples, rng)])
            d = np.abs(self.fields[a](pts) - self.fields[b](pts)).max(axis=1)
            k = int(np.argmax(d))
            worst = max(worst, float(d[k]))
            if d[k] > tol:
                raise IncompatibleFamily(f"faces {a} and {b} disagree by {d[k]:.3g}",
                                         faces=(a, b), point=pts[k], discrepancy=float(d[k]))
        return worst


def restrict_to_faces(f: Field, P: Polytope, ell) -> CompatibleFamily:
    """The family ``(f|_F)`` over all l-faces; every component is ``f`` itself."""
    return CompatibleFamily(ell, {F.id: f for F in P.lattice.of_dim(ell)})


def facet_extend(P: Polytope, family: CompatibleFamily, pou=None, check=True) -> Field:
    """Glue local cube extensions of facet data with a partition of unity.

    ``sigma(f) = sum_z h_z * (Phi_{i(z)}(Xi_z f) o kappa_z)`` over charts of
    positive index; ``Xi_z`` pulls facet data back to the chart walls. The
    sum is evaluated for all charts at once, grouping the data evaluations
    by facet.
    """
    if P.dim < 1:
        raise ValueError("facet extension needs dimension >= 1")
    if check:
        if family.ell != P.dim - 1:
            raise ValueError(f"facet data must live on {P.dim - 1}-faces")
        family.check(P)
    if pou is None:
        pou = partition_of_unity(P)
    m = family.codomain_dim
    facet_fields = [family.fields[fid] for fid in P.facet_face_ids]
    st = pou._stack()

    def sigma(X):
        X = np.atleast_2d(X)
        out = np.zeros((len(X), m))
        p, z, wt = pou.weight_pairs(X)
        for i in range(1, P.dim + 1):
            sel = st["index"][z] == i
            if not sel.any():
                continue
            pp, zz, ww = p[sel], z[sel], wt[sel]
            w = pou.chart_coords(X[pp], zz)
            base, inv, fmap = st["base"][zz], st["inv"][zz], st["facets"][zz]
            for j, S in _subsets(i):
                y = w.copy()
                y[:, list(S)] = 0.0
                pts = base + np.einsum("pij,pj->pi", inv, y)
                col = fmap[:, S[0]]
                sign = 1.0 if j % 2 else -1.0
                for facet in np.unique(col):
                    mk = col == facet
                    vals = facet_fields[facet](pts[mk])
                    np.add.at(out, pp[mk], sign * ww[mk, None] * vals)
        return out

    return Field(sigma, m, name="sigma")


def ell_extend(P: Polytope, ell, family: CompatibleFamily, check=True) -> Field:
    """Extend data on l-faces by extending to (l+1)-faces first, recursively."""
    n = P.dim
    if not 1 <= ell <= n - 1:
        raise ValueError(f"l must lie in 1..{n - 1}")
    report = is_simple(P)
    if not report.is_simple:
        raise NotSimple(f"polytope is not simple: {report.witness}")
    if check:
        family.check(P)
    if ell == n - 1:
        return facet_extend(P, family, check=False)

    lifted = {}
    for N in P.lattice.of_dim(ell + 1):
        sub, to_parent = P.face_polytope(N)
        sub_fields = {fid: family.fields[to_parent[fid]]
                      for fid in (f.id for f in sub.lattice.of_dim(ell))}
        lifted[N.id] = facet_extend(sub, CompatibleFamily(ell, sub_fields), check=False)
    upper = CompatibleFamily(ell + 1, lifted)
    if check:
        upper.check(P)
    return ell_extend(P, ell + 1, upper, check=False)


# ---------------------------------------------------------------------------
# diagnostics

def span_residual(values, reference):
    """Relative least-squares residual of ``values`` (rows) against the span
    of the ``reference`` rows."""
    values = np.atleast_2d(values)
    reference = np.atleast_2d(reference)
    scale = max(np.abs(reference).max(initial=0.0), np.abs(values).max(initial=0.0), 1e-300)
    ref = reference / scale
    basis = _row_space(ref)
    v = values / scale
    if basis.shape[0] == 0:
        return float(np.abs(v).max(initial=0.0))
    proj = (v @ basis.T) @ basis
    return float(np.abs(v - proj).max(initial=0.0))


def _row_space(M, tol=1e-10):
    if M.size == 0:
        return np.zeros((0, M.shape[1]))
    _, s, vt = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(s > tol * max(s.max(initial=0.0), 1e-300)))
    return vt[:rank]


@dataclass
class SmoothnessReport:
    passed: bool
    order: int
    h: float
    discrepancies: dict
    tolerance: float
    worst_point: list | None = None

    def to_dict(self):
        return {"passed": self.passed, "order": self.order, "h": self.h,
                "tolerance": self.tolerance, "discrepancies": self.discrepancies,
                "worst_point": self.worst_point}


def _segment_derivs(f, a, u, t, h, order):
    """Values and directional derivatives (orders 0..order) along a + t u,
    by fourth-order central differences with step ``h``."""
    pts = a + t[:, None] * u
    vals = [f(pts)]
    if order >= 1:
        f1, f_1 = f(pts + h * u), f(pts - h * u)
        f2, f_2 = f(pts + 2 * h * u), f(pts - 2 * h * u)
        vals.append((-f2 + 8 * f1 - 8 * f_1 + f_2) / (12 * h))
        if order >= 2:
            vals.append((-f2 + 16 * f1 - 30 * vals[0] + 16 * f_1 - f_2) / (12 * h ** 2))
    return vals


def _richardson_scores(d, t, need, order):
    """Per sub-cell discrepancies on grids of ``2P + 1`` points per cell.

    A sub-cell spans two consecutive steps (starting at every index, so two
    staggered alignments). Its trapezoid residual minus four times the
    residuals of its halves is ``O(step^5)`` for smooth data but ``O(step)``
    across a jump of the tested derivative.
    """
    step = (t[:, 1] - t[:, 0])[:, None, None]
    out = []
    for k in range(need):
        if order == 0:
            jump = np.abs(d[0][:, 2:] - d[0][:, :-2]).max(axis=2)
        else:
            g, f = d[k + 1], d[k]
            half = (f[:, 1:] - f[:, :-1]) - 0.5 * step * (g[:, 1:] + g[:, :-1])
            full = (f[:, 2:] - f[:, :-2]) - step * (g[:, 2:] + g[:, :-2])
            jump = np.abs(full - 4 * (half[:, 1:] + half[:, :-1])).max(axis=2)
        out.append(jump)
    return out


def smoothness_probe(f: Field, P: Polytope, order=1, h=1e-4, segments=24,
                     points_per_segment=48, zoom_cells=6, rng=None) -> SmoothnessReport:
    """Look for jumps in ``f`` and its first ``order - 1`` directional
    derivatives along random segments of ``M`` and of its faces.

    Segments are scanned with the sub-cell test of :func:`_richardson_scores`
    (derivatives by fourth-order central differences with step ``h``); the worst
    sub-cells are zoomed into until they have width ``h``. The test passes
    when every final discrepancy is below ``1e-2 * h``. For ``order == 0``
    only value continuity is required: jumps over ``h`` must stay below
    ``sqrt(h)``.
    """
    if rng is None:
        rng = np.random.default_rng(11)
    segs = []
    host_faces = [F for F in P.faces if F.dim >= 1]
    for s in range(segments):
        F = host_faces[s % len(host_faces)] if s % 3 == 2 else P.top_face
        a, b = sample_face(P, F, 2, rng)
        length = np.linalg.norm(b - a)
        if length < 10 * h:
            continue
        segs.append((a, (b - a) / length, length))

    need = max(order, 1)
    K = points_per_segment
    disc = {k: 0.0 for k in range(need)}
    worst_point, worst_ratio = None, 0.0
    tol = 1e-2 * h if order >= 1 else np.sqrt(h)
    for a, u, length in segs:
        lo, hi = 2 * h, length - 2 * h
        cells = [(lo, hi, False)]
        while cells:
            t = np.array([np.linspace(c0, c1, 2 * K + 1) for c0, c1, _ in cells])
            final = np.array([fin for _, _, fin in cells])
            d = _segment_derivs(f, a, u, t.ravel(), h, need)
            d = [x.reshape(len(cells), 2 * K + 1, -1) for x in d]
            scores = _richardson_scores(d, t, need, order)
            score = np.max(scores, axis=0)
            for k, jump in enumerate(scores):
                if final.any():
                    jf = np.where(final[:, None], jump, -1.0)
                    ci, pi = np.unravel_index(np.argmax(jf), jf.shape)
                    disc[k] = max(disc[k], float(jf[ci, pi]))
                    if jf[ci, pi] / tol > worst_ratio:
                        worst_ratio = jf[ci, pi] / tol
                        worst_point = (a + t[ci, pi + 1] * u).tolist()
            new = []
            for ci in np.flatnonzero(~final):
                for pi in np.argsort(score[ci])[-zoom_cells:]:
                    c0, c1 = t[ci, pi], t[ci, pi + 2]
                    if (c1 - c0) / K > h:
                        new.append((c0, c1, False))
                    else:
                        # final grid: sub-cells of width h around the suspect
                        mid = 0.5 * (c0 + c1)
                        n0 = min(max(lo, mid - 0.5 * K * h), hi - K * h)
                        new.append((max(lo, n0), max(lo, n0) + K * h, True))
            cells = new
    passed = all(v <= tol for v in disc.values())
    return SmoothnessReport(passed, order, h, {str(k): v for k, v in disc.items()}, tol,
                            worst_point)
