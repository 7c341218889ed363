"""The acceptance battery, shared by ``polyflow suite`` and the test suite.

Each ``criterion_k(rng)`` returns a :class:`CriterionResult` holding the
measured worst cases next to their thresholds. Wall time is kept on the
result but out of :meth:`CriterionResult.to_dict`, so reports stay
byte-identical between runs.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from . import catalog
from .errors import BudgetExhausted, IsSimple
from .extension import (CubeFamily, Field, bump, cube_grid, ell_extend, local_extend,
                        phi_recursive, restrict_to_faces, smoothness_probe, span_residual)
from .flows import (boundary_identity_flow, compose, control_conditions_audit, exp_field,
                    face_drift_battery, integrate_flow, pointwise_rank, reach_target)
from .polytope import sample_face
from .simplicity import is_simple
from .stratified import (StratifiedField, extend_fields, is_stratified, nonsimple_obstruction,
                         restrict_fields, stratified_criterion)


@dataclass
class Check:
    name: str
    worst: float
    threshold: float
    kind: str = "max"          # "max": worst <= threshold, "min": worst >= threshold

    @property
    def passed(self):
        if self.kind == "max":
            return bool(self.worst <= self.threshold)
        return bool(self.worst >= self.threshold)

    def to_dict(self):
        return {"name": self.name, "status": "pass" if self.passed else "fail",
                "worst": self.worst, "threshold": self.threshold, "kind": self.kind}


@dataclass
class CriterionResult:
    number: int
    title: str
    time_limit: float
    checks: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    runtime: float = 0.0

    def add(self, name, worst, threshold, kind="max"):
        self.checks.append(Check(name, float(worst), float(threshold), kind))

    def flag(self, name, ok):
        """A boolean check, recorded as 0 (pass) or 1 (fail) against 0."""
        self.add(name, 0.0 if ok else 1.0, 0.0)

    @property
    def within_time(self):
        return self.runtime < self.time_limit

    @property
    def passed(self):
        return all(c.passed for c in self.checks) and self.within_time

    def line(self):
        failing = [c.name for c in self.checks if not c.passed]
        if not self.within_time:
            failing.append(f"runtime {self.runtime:.1f}s >= {self.time_limit:g}s")
        status = "PASS" if self.passed else "FAIL"
        extra = f" [failing: {', '.join(failing)}]" if failing else ""
        return (f"criterion {self.number} {status}: {self.title} "
                f"({self.runtime:.2f}s, limit {self.time_limit:g}s){extra}")

    def to_dict(self):
        return {"number": self.number, "title": self.title, "time_limit": self.time_limit,
                "checks": [c.to_dict() for c in self.checks],
                "checks_passed": all(c.passed for c in self.checks),
                "details": self.details}


def _timed(number, title, limit):
    def deco(fn):
        def run(rng=None, seed=42):
            if rng is None:
                rng = np.random.default_rng(seed)
            res = CriterionResult(number, title, limit)
            t0 = time.perf_counter()
            fn(res, rng)
            res.runtime = time.perf_counter() - t0
            return res
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return deco


# random test data ----------------------------------------------------------

def random_polynomial(nvars, degree, rng, outputs=None, scale=1.0):
    """Polynomial with N(0, scale^2) coefficients on all monomials up to ``degree``.

    Scalar valued by default; ``outputs=m`` gives an ``(points, m)`` map.
    """
    exps = [e for e in itertools.product(range(degree + 1), repeat=nvars) if sum(e) <= degree]
    E = np.array(exps, dtype=int).reshape(len(exps), nvars)
    c = rng.normal(0.0, scale, (len(exps), outputs or 1))

    def f(X):
        X = np.atleast_2d(X)
        mono = np.ones((len(X), len(E)))
        for k in range(nvars):
            table = X[:, k:k + 1] ** np.arange(degree + 1)     # (points, degree+1)
            mono *= table[:, E[:, k]]
        out = mono @ c
        return out if outputs else out[:, 0]
    return f


def random_cube_family(i, q_dim, rng, codomain=2, degree=3):
    """Compatible wall data ``f_k = g + prod_{j != k} x_j p_k``.

    The correction term vanishes on every wall ``x_j = 0`` with ``j != k``,
    so components agree on all wall intersections.
    """
    N = i + q_dim
    # columns: g, then p_1..p_i, from one monomial table
    gp = random_polynomial(N, degree, rng, outputs=(i + 1) * codomain)
    comps = []
    for k in range(i):
        others = [j for j in range(i) if j != k]
        cols = slice((k + 1) * codomain, (k + 2) * codomain)

        def fk(X, others=others, cols=cols):
            X = np.atleast_2d(X)
            w = np.prod(X[:, others], axis=1) if others else np.zeros(len(X))
            V = gp(X)
            return V[:, :codomain] + w[:, None] * V[:, cols]
        comps.append(Field(fk, codomain, name=f"f{k + 1}"))
    return CubeFamily(i, q_dim, comps)


def box_field(P, rng, degree=2):
    """``X_k = (x_k - lo_k)(hi_k - x_k) p_k(x)``: stratified on an axis-aligned box."""
    lo, hi = P.vertices.min(axis=0), P.vertices.max(axis=0)
    ps = [random_polynomial(P.ambient_dim, degree, rng) for _ in range(P.ambient_dim)]

    def f(X):
        X = np.atleast_2d(X)
        return np.column_stack([(X[:, k] - lo[k]) * (hi[k] - X[:, k]) * p(X)
                                for k, p in enumerate(ps)])
    return Field(f, P.ambient_dim, name="box_field")


def vertex_pull_field(P, rng):
    """``sum_v c_v (v - x) prod_{j : v not on facet j} s_j(x)``.

    At a point of a face ``F`` every term whose vertex lies outside ``F``
    carries the slack of a facet through the point, so only vertices of
    ``F`` contribute and the value is tangent to ``F``. Works on any
    polytope; scaled to unit size at the centroid.
    """
    V = P.vertices
    off = P.slacks(V) > 1e-9                     # (vertices, facets): v not on facet j
    c = rng.uniform(0.5, 1.5, len(V))

    def raw(X):
        X = np.atleast_2d(X)
        S = P.slacks(X)
        out = np.zeros_like(X, dtype=float)
        for v, mask, cv in zip(V, off, c):
            out += cv * np.prod(S[:, mask], axis=1)[:, None] * (v[None, :] - X)
        return out

    pts = np.vstack([P.centroid[None], sample_face(P, P.top_face, 50, rng)])
    scale = float(np.abs(raw(pts)).max()) or 1.0
    return Field(lambda X: raw(X) / scale, P.ambient_dim, name="vertex_pull")


def interior_vanishing_fields(P, rng):
    """Two fields zero on the boundary: slack product and an interior bump."""
    ctr = P.centroid
    v = rng.normal(size=P.ambient_dim)
    v /= np.linalg.norm(v)
    s0 = float(np.prod(P.slacks(ctr[None])[0]))
    radius = 0.5 * float(P.slacks(ctr[None]).min())

    prod = Field(lambda X: (np.prod(P.slacks(np.atleast_2d(X)), axis=1) / s0)[:, None] * v,
                 P.ambient_dim, name="slack_product")
    bmp = Field(lambda X: bump(np.linalg.norm(np.atleast_2d(X) - ctr, axis=1) / radius)[:, None]
                * v * radius, P.ambient_dim, name="interior_bump")
    return [prod, bmp]


def square_controls():
    P = catalog.load("square")
    Z1 = Field(lambda X: np.column_stack([(2 * X[:, 1] - 1) * X[:, 0] * (1 - X[:, 0]),
                                          np.zeros(len(X))]), 2, name="Z1")
    Z2 = Field(lambda X: np.column_stack([np.zeros(len(X)), X[:, 1] * (X[:, 1] - 1)]),
               2, name="Z2")
    return P, StratifiedField(P, Z1), StratifiedField(P, Z2)


# criteria ------------------------------------------------------------------

@_timed(1, "simplicity catalog", 5.0)
def criterion_1(res, rng):
    expected_witness = {"square_pyramid": 4, "icosahedron": 5}
    rows = {}
    for name in catalog.NAMES:
        rep = is_simple(catalog.load(name))
        rows[name] = rep.to_dict()
        want = name in catalog.SIMPLE
        res.flag(f"{name} simple={want}", rep.is_simple == want)
        if name in expected_witness:
            w = rep.witness or {}
            res.flag(f"{name} witness edge count {expected_witness[name]} > 3",
                     w.get("edge_count") == expected_witness[name] and w.get("dim") == 3)
    res.details["reports"] = rows


@_timed(2, "local operator identity", 30.0)
def criterion_2(res, rng):
    grid_worst, rec_worst = 0.0, 0.0
    per_case = {}
    for i, q in itertools.product(range(1, 5), (0, 1)):
        g_err = r_err = 0.0
        grid = cube_grid(i, q, 5)
        for _ in range(20):
            fam = random_cube_family(i, q, rng)
            phi = local_extend(fam, rng=rng)
            for k in range(i):
                wall = grid.copy()
                wall[:, k] = 0.0
                g_err = max(g_err, float(np.abs(phi(wall) - fam.components[k](wall)).max()))
            W = np.hstack([rng.uniform(0, 1, (1000, i)), rng.uniform(-1, 1, (1000, q))])
            r_err = max(r_err, float(np.abs(phi(W) - phi_recursive(fam, W)).max()))
        per_case[f"i={i},q={q}"] = {"grid_error": g_err, "recursion_error": r_err}
        grid_worst, rec_worst = max(grid_worst, g_err), max(rec_worst, r_err)
    res.add("restriction of Phi on 5^n grids", grid_worst, 1e-12)
    res.add("recursion identity at 1000 points", rec_worst, 1e-12)
    res.details["per_case"] = per_case


def _face_points(P, faces, total, rng):
    per = max(1, -(-total // len(faces)))
    pts, owner = [], []
    for F in faces:
        p = sample_face(P, F, per, rng)
        pts.append(p)
        owner += [F.id] * len(p)
    return np.vstack(pts), np.array(owner)


@_timed(3, "global extension", 300.0)
def criterion_3(res, rng):
    npoly = 10
    worst = {"restriction": 0.0, "linearity": 0.0, "span": 0.0}
    smooth_ratio, rows = 0.0, {}
    for name in ("square", "cube3", "dodecahedron"):
        P = catalog.load(name)
        n, N = P.dim, P.ambient_dim
        # datum k is p_k w_k1 + q_k w_k2, with (w_k1, w_k2) an orthonormal pair in R^3;
        # all 2 * npoly scalar polynomials share one monomial table
        pq = random_polynomial(N, 3, rng, outputs=2 * npoly)
        M = np.zeros((2 * npoly, 3 * npoly))
        for k in range(npoly):
            M[2 * k:2 * k + 2, 3 * k:3 * k + 3] = np.linalg.qr(rng.normal(size=(3, 2)))[0].T

        def stacked(X, pq=pq, M=M):
            return pq(X) @ M
        G = Field(stacked, 3 * npoly, name="stacked polynomials")
        for ell in sorted({1, n - 1}):
            lat = P.lattice
            sigma = ell_extend(P, ell, restrict_to_faces(G, P, ell))
            pts, _ = _face_points(P, lat.of_dim(ell), 200, rng)
            r_err = float(np.abs(sigma(pts) - G(pts)).max())

            a, b = rng.normal(size=2)
            combo = Field(lambda X: a * stacked(X)[:, :3] + b * stacked(X)[:, 3:6], 3)
            s_combo = ell_extend(P, ell, restrict_to_faces(combo, P, ell), check=False)
            inner = sample_face(P, P.top_face, 200, rng)
            S = sigma(inner)
            lin = float(np.abs(s_combo(inner) - (a * S[:, :3] + b * S[:, 3:6])).max())

            span = 0.0
            for Nf in P.faces:
                if Nf.dim <= ell:
                    continue
                subs = [F for F in lat.of_dim(ell) if F.vertex_ids <= Nf.vertex_ids]
                ref_pts, _ = _face_points(P, subs, 60, rng)
                vals_pts = sample_face(P, Nf, 40, rng)
                ref, vals = G(ref_pts), sigma(vals_pts)
                for k in range(npoly):
                    sl = slice(3 * k, 3 * k + 3)
                    span = max(span, span_residual(vals[:, sl], ref[:, sl]))

            sm = smoothness_probe(sigma, P, order=1, h=1e-4, rng=rng)
            rows[f"{name} l={ell}"] = {"restriction": r_err, "linearity": lin, "span": span,
                                       "smoothness": sm.to_dict()}
            worst["restriction"] = max(worst["restriction"], r_err)
            worst["linearity"] = max(worst["linearity"], lin)
            worst["span"] = max(worst["span"], span)
            smooth_ratio = max(smooth_ratio, max(sm.discrepancies.values()) / sm.tolerance)
    res.add("restriction identity at face samples", worst["restriction"], 1e-9)
    res.add("linearity", worst["linearity"], 1e-12)
    res.add("span condition residual", worst["span"], 1e-8)
    res.add("smoothness probe at h=1e-4: discrepancy / (1e-2 h)", smooth_ratio, 1.0)
    res.details["cases"] = rows


def _bad_field(P, base, rng, ell):
    """A stratified field plus a term that is zero on the l-faces but not tangent elsewhere."""
    lo, hi = P.vertices.min(axis=0), P.vertices.max(axis=0)
    n = P.ambient_dim
    j = int(rng.integers(n))
    others = [k for k in range(n) if k != j][: ell + 1]
    amp = rng.uniform(0.5, 2.0)

    def f(X):
        X = np.atleast_2d(X)
        w = amp * np.prod([(X[:, k] - lo[k]) * (hi[k] - X[:, k]) for k in others], axis=0)
        out = base(X).copy()
        out[:, j] += w
        return out
    return Field(f, n, name="perturbed")


@_timed(4, "stratified round trip", 300.0)
def criterion_4(res, rng):
    rt_worst, strat_worst, rows = 0.0, 0.0, {}
    for name in ("square", "cube3"):
        P = catalog.load(name)
        for ell in sorted({1, P.dim - 1}):
            X = StratifiedField(P, box_field(P, rng))
            fam = restrict_fields(X, ell, rng=rng)
            Y = extend_fields(P, fam, rng=rng)
            pts, owner = _face_points(P, P.lattice.of_dim(ell), 200, rng)
            rt = float(np.abs(Y(pts) - X(pts)).max())
            st = is_stratified(P, Y.field, rng=rng).worst
            rows[f"{name} l={ell}"] = {"round_trip": rt, "normal_component": st}
            rt_worst, strat_worst = max(rt_worst, rt), max(strat_worst, st)
    res.add("restrict o extend = id", rt_worst, 1e-9)
    res.add("normal component of extended fields", strat_worst, 1e-9)

    consistent, cases = True, []
    for case in range(20):
        name = ("square", "cube3")[case % 2]
        P = catalog.load(name)
        ell = int(rng.integers(1, P.dim))
        kind = ("stratified", "generic", "perturbed")[case % 3]
        if kind == "stratified":
            X = box_field(P, rng)
        elif kind == "generic":
            ps = [random_polynomial(P.ambient_dim, 2, rng) for _ in range(P.ambient_dim)]
            X = Field(lambda Y, ps=ps: np.column_stack([p(Y) for p in ps]), P.ambient_dim)
        else:
            X = _bad_field(P, box_field(P, rng), rng, ell)
        rep = stratified_criterion(P, X, ell, rng=rng)
        # the criterion must never pass where the direct check fails, and on
        # these families it should also agree when the field is stratified
        agree = rep.consistent and (rep.passed == rep.full_check.passed)
        consistent &= agree
        cases.append({"polytope": name,
                      "ell": ell, "kind": kind, "criterion": rep.passed,
                      "direct": rep.full_check.passed, "agree": bool(agree)})
    res.flag("criterion consistent with direct check on 20 cases", consistent)
    res.details["round_trip"] = rows
    res.details["criterion_cases"] = cases


@_timed(5, "non-simple obstruction", 10.0)
def criterion_5(res, rng):
    rows = {}
    ratio, lam = np.inf, 0.0
    for name in ("square_pyramid", "icosahedron"):
        w = nonsimple_obstruction(catalog.load(name))
        d = w.to_dict()
        d.pop("point", None)
        rows[name] = d
        ratio = min(ratio, w.infeasibility_residual / w.v_norm)
        lam = max(lam, w.lambda_residual)
    res.add("infeasibility residual / |x_m - x_0|", ratio, 0.5, kind="min")
    res.add("lambda recovery residual", lam, 1e-9)
    try:
        nonsimple_obstruction(catalog.load("cube3"))
        res.flag("simple cube has no witness", False)
    except IsSimple:
        res.flag("simple cube has no witness", True)
    res.details["witnesses"] = rows


@_timed(6, "flow fidelity", 120.0)
def criterion_6(res, rng):
    P, _, Z2 = square_controls()
    log_err = 0.0
    for y0 in (0.1, 0.3, 0.5, 0.8, 0.95):
        for T in (0.5, 1.0, np.log(3.0)):
            r = integrate_flow(Z2, [0.4, y0], T, tol=1e-10)
            exact = y0 / (y0 + (1 - y0) * np.exp(T))
            log_err = max(log_err, abs(r.final_point[1] - exact), abs(r.final_point[0] - 0.4))
    res.add("Z2 logistic closed form", log_err, 1e-8)

    drift, battery = 0.0, {}
    for name in catalog.SIMPLE:
        Q = catalog.load(name)
        X = StratifiedField(Q, vertex_pull_field(Q, rng))
        out = face_drift_battery(X, per_face=50, T=1.0, tol=1e-8, rng=rng)
        battery[name] = {"face_drift": out["worst"],
                         "max_constraint_violation": out["max_constraint_violation"]}
        drift = max(drift, out["worst"], out["max_constraint_violation"])
    res.add("face drift over the stratified battery", drift, 1e-6)

    group = inv = 0.0
    for name in ("square", "cube3", "simplex3"):
        Q = catalog.load(name)
        X = StratifiedField(Q, vertex_pull_field(Q, rng))
        pts = sample_face(Q, Q.top_face, 100, rng)
        s, t = rng.uniform(0.2, 1.0, 2)
        lhs = exp_field(X, s + t, tol=1e-10)(pts)
        rhs = compose(exp_field(X, s, tol=1e-10), exp_field(X, t, tol=1e-10))(pts)
        group = max(group, float(np.abs(lhs - rhs).max()))
        d = exp_field(X, 1.0, tol=1e-10)
        inv = max(inv, float(np.abs(compose(d.inverse(), d)(pts) - pts).max()))
    res.add("group property e^(s+t)X = e^sX o e^tX", group, 1e-6)
    res.add("inversion e^-X o e^X = id", inv, 1e-6)
    res.details["battery"] = battery


@_timed(7, "boundary-identity flows", 30.0)
def criterion_7(res, rng):
    fixed, moved, rows = 0.0, np.inf, {}
    for name in ("square", "cube3", "simplex3", "dodecahedron"):
        P = catalog.load(name)
        for X in interior_vanishing_fields(P, rng):
            _, rep = boundary_identity_flow(X, base=P, samples=200, rng=rng)
            rows[f"{name} {X.name}"] = {k: rep[k] for k in
                                        ("max_boundary_displacement", "interior_displacement")}
            fixed = max(fixed, rep["max_boundary_displacement"])
            moved = min(moved, rep["interior_displacement"])
    res.add("boundary displacement over 200 samples", fixed, 1e-9)
    res.add("interior displacement", moved, 1e-3, kind="min")
    res.details["flows"] = rows


@_timed(8, "controllability on the square", 120.0)
def criterion_8(res, rng):
    P, Z1, Z2 = square_controls()
    try:
        r = reach_target(P, [Z1, Z2], [0.3, 0.4], [0.7, 0.6], budget=10_000, tol=1e-3)
        res.add("reach residual", r.residual, 1e-3)
        res.add("flow evaluations", r.evaluations, 1e4)
        res.details["reach"] = r.to_dict()
    except BudgetExhausted as e:
        res.add("reach residual", e.residual, 1e-3)
        res.details["reach"] = {"budget_exhausted": True, "residual": e.residual}

    audit = control_conditions_audit(P, [Z1, Z2], rng=rng)
    res.flag("condition (II) on all edges", audit["condition_II"]["holds"])
    res.details["condition_II"] = audit["condition_II"]["per_facet"]
    res.details["condition_I_holds"] = audit["condition_I"]["holds"]

    xs = rng.uniform(0.0, 1.0, 40)
    on_line = np.column_stack([xs, 0.5 + rng.uniform(-1e-9, 1e-9, 40)])
    ys = np.concatenate([rng.uniform(0.05, 0.4, 20), rng.uniform(0.6, 0.95, 20)])
    off_line = np.column_stack([rng.uniform(0.05, 0.95, 40), ys])
    r_on = pointwise_rank([Z1, Z2], on_line)
    r_off = pointwise_rank([Z1, Z2], off_line)
    res.flag("rank 1 where |y - 1/2| <= 1e-9", bool(np.all(r_on == 1)))
    res.flag("rank 2 where |y - 1/2| >= 0.1", bool(np.all(r_off == 2)))
    res.details["rank_on_line"] = sorted(set(r_on.tolist()))
    res.details["rank_off_line"] = sorted(set(r_off.tolist()))


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4,
            criterion_5, criterion_6, criterion_7, criterion_8)


def run_all(seed=42, only=None, echo=None):
    """Run the battery; each criterion gets its own generator seeded from ``seed``."""
    out = []
    for k, crit in enumerate(CRITERIA, start=1):
        if only and k not in only:
            continue
        r = crit(rng=np.random.default_rng([seed, k]))
        if echo:
            echo(r.line())
        out.append(r)
    return out
