"""Flows of stratified vector fields and the diffeomorphisms they generate.

Integration uses scipy's embedded RK4(5) stepper. Every accepted step is
checked for leaving ``M`` and for drifting off the affine hull of the face
the trajectory started on; nothing is ever projected back, so a violation
points at a non-stratified field or an integrator problem.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45, OdeSolution
from scipy.optimize import minimize_scalar

from .errors import (BaseMismatch, BudgetExhausted, ConstraintEscape, NotVanishing,
                     PointOutside, StepFailure)
from .extension import Field, bump
from .polytope import Polytope, boundary_stratum_samples, locate, sample_face
from .stratified import StratifiedField

DEFAULT_TOL = 1e-9


def _evaluator(X):
    if isinstance(X, StratifiedField):
        return X.field
    return X


def _base_of(X, base):
    if base is not None:
        return base
    if isinstance(X, StratifiedField):
        return X.base
    raise ValueError("a base polytope is required for plain fields")


def _violation(P, Y):
    """Distance outside ``M`` (facet normals are unit vectors)."""
    v = P.offaffine_distance(Y)
    if P.n_facets:
        v = np.maximum(v, np.clip(-P.slacks(Y).min(axis=1), 0, None))
    return v


def _drift(P, Y, face_ids):
    """Distance of each point from the affine hull of its own face."""
    out = np.empty(len(Y))
    for fid in np.unique(face_ids):
        sel = face_ids == fid
        F = P.faces[fid]
        d = Y[sel] - F.origin
        B = F.affine_basis
        if B.shape[1] == Y.shape[1]:
            out[sel] = 0.0          # full-dimensional face: nothing to drift off
        elif B.shape[1]:
            out[sel] = np.linalg.norm(d - (d @ B) @ B.T, axis=1)
        else:
            out[sel] = np.linalg.norm(d, axis=1)
    return out


@dataclass
class _BatchResult:
    final: np.ndarray
    times: np.ndarray
    states: list
    violation: np.ndarray
    drift: np.ndarray
    nfev: int
    steps: int
    dense: OdeSolution | None = None


def _integrate_batch(P, rhs, Y0, T, tol, escape=True, record=False, max_step=None,
                     t0=0.0, dense=False):
    """Integrate ``dY/dt = rhs(t, Y)`` for a batch of points jointly.

    RK45 controls the RMS error over all components, so the tolerance is
    divided by ``sqrt(size)`` to keep each single point within ``tol``.
    """
    Y0 = np.atleast_2d(np.asarray(Y0, dtype=float))
    k, N = Y0.shape
    faces = locate(P, Y0)
    violation = _violation(P, Y0)
    drift = np.zeros(k)
    if T == 0 or k == 0:
        return _BatchResult(Y0.copy(), np.array([t0]), [Y0.copy()], violation, drift, 0, 0)
    if max_step is None:
        max_step = 1e-2 * max(P.diameter, 1e-12)
    eff = tol / np.sqrt(k * N)
    nfev = [0]

    def fun(t, y):
        nfev[0] += 1
        return np.asarray(rhs(t, y.reshape(k, N)), dtype=float).reshape(-1)

    solver = RK45(fun, t0, Y0.reshape(-1), t0 + T, rtol=eff, atol=eff, max_step=max_step)
    times, states, steps = [t0], [Y0.copy()], 0
    interps, knots = [], [t0]
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise StepFailure(f"step control failed at t={solver.t:.6g}: {msg}")
        steps += 1
        Y = solver.y.reshape(k, N)
        viol = _violation(P, Y)
        violation = np.maximum(violation, viol)
        drift = np.maximum(drift, _drift(P, Y, faces))
        if escape and viol.max() > 100 * tol:
            raise ConstraintEscape(f"trajectory left M by {viol.max():.3g} at t={solver.t:.6g}",
                                   float(viol.max()))
        if record:
            times.append(solver.t)
            states.append(Y.copy())
        if dense:
            interps.append(solver.dense_output())
            knots.append(solver.t)
    sol = OdeSolution(knots, interps) if dense else None
    return _BatchResult(solver.y.reshape(k, N).copy(), np.array(times), states, violation,
                        drift, nfev[0], steps, sol)


@dataclass
class FlowResult:
    times: np.ndarray
    trajectory: np.ndarray
    final_point: np.ndarray
    max_constraint_violation: float
    face_drift: float
    start_face: int
    evaluations: int
    steps: int

    def to_dict(self):
        return {"final_point": self.final_point.tolist(),
                "max_constraint_violation": self.max_constraint_violation,
                "face_drift": self.face_drift, "start_face": self.start_face,
                "evaluations": self.evaluations, "steps": self.steps}


def integrate_flow(X, x0, T, tol=DEFAULT_TOL, base: Polytope | None = None,
                   time_dependent=False, escape=True) -> FlowResult:
    """Trajectory of ``x0`` under ``X`` up to time ``T`` (negative allowed).

    With ``time_dependent=True`` the field is called as ``X(t, points)``,
    which integrates the evolution of a curve of fields.
    """
    P = _base_of(X, base)
    f = _evaluator(X)
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    if not P.contains(x0, 1e-9)[0]:
        raise PointOutside(f"start point {x0[0].tolist()} is not in M")
    rhs = (lambda t, Y: f(t, Y)) if time_dependent else (lambda t, Y: f(Y))
    res = _integrate_batch(P, rhs, x0, T, tol, escape=escape, record=True)
    traj = np.vstack(res.states)
    return FlowResult(res.times, traj, res.final[0], float(res.violation[0]),
                      float(res.drift[0]), int(locate(P, x0)[0]), res.nfev, res.steps)


def flow_points(X, points, T, tol=DEFAULT_TOL, base=None, escape=True):
    """Time-``T`` flow of many points at once; returns the batch result."""
    P = _base_of(X, base)
    f = _evaluator(X)
    return _integrate_batch(P, lambda t, Y: f(Y), points, T, tol, escape=escape)


def face_drift_battery(X, per_face=50, T=1.0, tol=DEFAULT_TOL, base=None, rng=None):
    """Largest drift off the starting face, per face, for ``per_face`` starts."""
    P = _base_of(X, base)
    if rng is None:
        rng = np.random.default_rng(42)
    starts, owners = [], []
    for F in P.faces:
        pts = sample_face(P, F, per_face if F.dim else 1, rng)
        starts.append(pts)
        owners += [F.id] * len(pts)
    owners = np.array(owners)
    res = flow_points(X, np.vstack(starts), T, tol, base=P)
    per_face = {int(fid): float(res.drift[owners == fid].max()) for fid in np.unique(owners)}
    return {"per_face": per_face, "worst": max(per_face.values()),
            "max_constraint_violation": float(res.violation.max())}


# ---------------------------------------------------------------------------
# compositions of flows

@dataclass
class DiffeoApprox:
    """``e^{t_1 X_1} o ... o e^{t_k X_k}``: the last generator acts first."""
    base: Polytope
    generators: list = field(default_factory=list)
    tol: float = DEFAULT_TOL

    def __call__(self, points, escape=True):
        Y = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        for X, duration in reversed(self.generators):
            if duration == 0:
                continue
            Y = flow_points(X, Y, duration, self.tol, base=self.base, escape=escape).final
        return Y

    def inverse(self):
        return DiffeoApprox(self.base, [(X, -d) for X, d in reversed(self.generators)],
                            self.tol)

    def __len__(self):
        return len(self.generators)


def identity(P: Polytope, tol=DEFAULT_TOL) -> DiffeoApprox:
    return DiffeoApprox(P, [], tol)


def exp_field(X, duration=1.0, base=None, tol=DEFAULT_TOL) -> DiffeoApprox:
    """``e^{duration X}`` as a single-generator composition."""
    return DiffeoApprox(_base_of(X, base), [(X, float(duration))], tol)


def _same_base(P, Q):
    return P is Q or (P.vertices.shape == Q.vertices.shape
                      and np.array_equal(P.vertices, Q.vertices))


def compose(d1: DiffeoApprox, d2: DiffeoApprox) -> DiffeoApprox:
    """``d1 o d2`` (``d2`` acts first)."""
    if not _same_base(d1.base, d2.base):
        raise BaseMismatch("compositions live on different polytopes")
    return DiffeoApprox(d1.base, list(d1.generators) + list(d2.generators),
                        min(d1.tol, d2.tol))


@dataclass
class AuditReport:
    passed: bool
    per_face: dict
    worst: float
    tol: float

    def to_dict(self):
        return {"passed": self.passed, "worst": self.worst, "tol": self.tol,
                "per_face": {str(k): v for k, v in sorted(self.per_face.items())}}


def face_invariance_audit(d: DiffeoApprox, samples=20, rng=None, tol=1e-6) -> AuditReport:
    """Distance of ``d(x)`` from aff(F) and from ``M`` for samples of each face."""
    P = d.base
    if rng is None:
        rng = np.random.default_rng(42)
    starts, owners = [], []
    for F in P.faces:
        pts = sample_face(P, F, samples if F.dim else 1, rng)
        starts.append(pts)
        owners += [F.id] * len(pts)
    owners = np.array(owners)
    Y = d(np.vstack(starts), escape=False)
    err = np.maximum(_drift(P, Y, owners), _violation(P, Y))
    per_face = {int(f): float(err[owners == f].max()) for f in np.unique(owners)}
    worst = max(per_face.values())
    return AuditReport(worst <= tol, per_face, worst, tol)


# ---------------------------------------------------------------------------
# boundary-fixing flows

def boundary_samples(P: Polytope, count, rng):
    """``count`` points of the boundary, spread over all strata of index >= 1."""
    idx = rng.integers(1, P.dim + 1, size=count)
    out = np.empty((count, P.ambient_dim))
    for i in range(1, P.dim + 1):
        sel = np.flatnonzero(idx == i)
        if len(sel):
            out[sel] = boundary_stratum_samples(P, i, len(sel), rng)
    return out


def boundary_identity_flow(X, base=None, samples=200, rng=None, threshold=1e-12,
                           audit_tol=1e-9, interior_point=None, tol=DEFAULT_TOL):
    """``e^X`` for a field vanishing on the boundary, with a fixing audit.

    Returns ``(diffeo, report)``. The report lists the largest boundary
    displacement and how far the interior point (default: the vertex
    centroid) moves.
    """
    P = _base_of(X, base)
    if rng is None:
        rng = np.random.default_rng(42)
    f = _evaluator(X)
    bpts = boundary_samples(P, samples, rng)
    sup = float(np.abs(f(bpts)).max())
    if sup > threshold:
        raise NotVanishing(f"field reaches {sup:.3g} on the boundary", sup)
    d = exp_field(X, base=P, tol=tol)
    moved = d(bpts)
    disp = float(np.linalg.norm(moved - bpts, axis=1).max())
    x_in = P.centroid if interior_point is None else np.asarray(interior_point, float)
    y_in = d(x_in[None])[0]
    report = {
        "boundary_sup_norm": sup,
        "boundary_samples": samples,
        "max_boundary_displacement": disp,
        "boundary_fixed": disp <= audit_tol,
        "interior_point": x_in.tolist(),
        "interior_image": y_in.tolist(),
        "interior_displacement": float(np.linalg.norm(y_in - x_in)),
    }
    return d, report


# ---------------------------------------------------------------------------
# reachability by shooting

@dataclass
class ReachResult:
    diffeo: DiffeoApprox
    residual: float
    evaluations: int
    moves: list

    def to_dict(self):
        return {"residual": self.residual, "evaluations": self.evaluations,
                "moves": self.moves}


def _scalings(P, x, width):
    """Scalar multipliers: the constant 1 and bumps in one coordinate around ``x``."""
    out = [("1", None)]
    for k in range(P.ambient_dim):
        c = float(x[k])

        def b(Y, k=k, c=c):
            return bump((Y[:, k] - c) / width)[:, None]
        out.append((f"bump(x{k + 1}-{c:.6g})", b))
    return out


def _scaled(X, s):
    f = _evaluator(X)
    if s is None:
        return f
    return Field(lambda Y: s(Y) * f(Y), f.codomain_dim)


def reach_target(P: Polytope, generators, start, target, budget=10_000, tol=1e-3,
                 max_duration=20.0, max_moves=20, bump_width=0.5,
                 flow_tol=DEFAULT_TOL) -> ReachResult:
    """Greedy shooting from ``start`` towards ``target``.

    Each move tries every generator scaled by 1 or by a one-coordinate bump.
    A candidate is integrated once forwards and once backwards over
    ``max_duration`` with dense output; the duration minimising the distance
    to the target on that interpolant is then flown exactly. The best
    candidate is kept. Every trajectory integration counts as one flow
    evaluation against ``budget``.
    """
    x = np.asarray(start, dtype=float).copy()
    target = np.asarray(target, dtype=float)
    used = [0]
    moves, gens = [], []

    def flow(Y, t, field_, dense=False):
        if used[0] >= budget:
            raise _Budget()
        used[0] += 1
        return _integrate_batch(P, lambda s, Z: field_(Z), Y[None], t, flow_tol,
                                dense=dense)

    def best_time(field_):
        best = (np.inf, 0.0)
        for sign in (1.0, -1.0):
            sol = flow(x, sign * max_duration, field_, dense=True).dense
            knots = sol.ts
            dist = np.linalg.norm(sol(knots).T - target, axis=1)
            k = int(np.argmin(dist))
            lo, hi = sorted((knots[max(k - 1, 0)], knots[min(k + 1, len(knots) - 1)]))
            opt = minimize_scalar(lambda t: np.linalg.norm(sol(t) - target),
                                  bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12})
            cand = (float(opt.fun), float(opt.x)) if opt.fun < dist[k] else \
                (float(dist[k]), float(knots[k]))
            best = min(best, cand)
        return best

    residual = float(np.linalg.norm(x - target))
    try:
        while residual > tol and len(moves) < max_moves:
            best = None
            for gi, X in enumerate(generators):
                for label, s in _scalings(P, x, bump_width):
                    Y = _scaled(X, s)
                    if np.linalg.norm(Y(x[None])) < 1e-14:
                        continue
                    dist, t = best_time(Y)
                    if best is None or dist < best[0]:
                        best = (dist, t, gi, label, Y)
            if best is None or best[0] >= residual - 1e-15:
                break
            _, t, gi, label, Y = best
            x = flow(x, t, Y).final[0]
            residual = float(np.linalg.norm(x - target))
            gens.insert(0, (Y, t))
            moves.append({"generator": gi, "scaling": label, "duration": t,
                          "residual": residual})
    except _Budget:
        pass
    d = DiffeoApprox(P, gens, flow_tol)
    if residual > tol:
        raise BudgetExhausted(f"best residual {residual:.3g} after {used[0]} flow evaluations",
                              ReachResult(d, residual, used[0], moves), residual)
    return ReachResult(d, residual, used[0], moves)


class _Budget(Exception):
    pass


# ---------------------------------------------------------------------------
# control conditions

def pointwise_rank(fields, points, face=None, atol=1e-9):
    """Rank of ``{X(x)}`` at each point, after projecting onto E_F if given."""
    points = np.atleast_2d(points)
    if not fields:
        return np.zeros(len(points), dtype=int)
    V = np.stack([_evaluator(X)(points) for X in fields], axis=1)     # (k, m, N)
    if face is not None:
        V = V @ face.affine_basis
    s = np.linalg.svd(V, compute_uv=False)
    return (s > atol).sum(axis=1)


def _orbit_points(P, fields, x, rng, count=6, duration=0.5):
    """``x`` moved by a few random short flows of the fields."""
    pts = [x]
    for _ in range(count if fields else 0):
        X = fields[rng.integers(len(fields))]
        t = rng.uniform(-duration, duration)
        pts.append(_integrate_batch(P, lambda s, Y: _evaluator(X)(Y), pts[-1][None], t,
                                    1e-8, escape=False).final[0])
    return np.array(pts)


def _facet_scalings(P):
    """Constant 1 and the facet slack functions (affine coordinate expressions)."""
    out = [("1", lambda Y: np.ones((len(Y), 1)))]
    for j in range(P.n_facets):
        out.append((f"slack{j}", lambda Y, j=j: P.slacks(Y)[:, j:j + 1]))
    return out


def control_conditions_audit(P: Polytope, fields, samples=20, rng=None, probe_points=None,
                             vanish_tol=1e-9, transversal_min=1e-6, h=1e-6,
                             neighbourhood=0.05):
    """Numerical surrogates for the two controllability conditions.

    (I) per face, the rank of field values over short orbits of interior
    samples equals the face dimension. (II) per facet, at each sampled point
    some ``f X`` (``f`` constant or a facet slack) vanishes on the facet near
    the point while its inward normal derivative has a component off the
    facet of norm at least ``transversal_min``.
    """
    if rng is None:
        rng = np.random.default_rng(42)
    cond1 = {}
    for F in P.faces:
        if F.dim == 0:
            cond1[F.id] = {"dim": 0, "orbit_rank": 0, "holds": True}
            continue
        ranks = []
        for x in sample_face(P, F, max(2, samples // 4), rng):
            orbit = _orbit_points(P, fields, x, rng)
            if fields:
                V = np.vstack([_evaluator(X)(orbit) for X in fields]) @ F.affine_basis
                s = np.linalg.svd(V, compute_uv=False)
                ranks.append(int((s > vanish_tol).sum()))
            else:
                ranks.append(0)
        cond1[F.id] = {"dim": F.dim, "orbit_rank": min(ranks), "holds": min(ranks) == F.dim}

    cond2 = {}
    scal = _facet_scalings(P)
    for j, fid in enumerate(P.facet_face_ids):
        F = P.faces[fid]
        inward = P.basis @ P.A[j]
        ok_count, worst = 0, np.inf
        pts = sample_face(P, F, samples, rng)
        for x in pts:
            near = x + neighbourhood * (sample_face(P, F, 8, rng) - x)
            best = 0.0
            for X in fields:
                f = _evaluator(X)
                for _, s in scal:
                    Z = lambda Y, f=f, s=s: s(Y) * f(Y)      # noqa: E731
                    if np.abs(Z(np.vstack([x[None], near]))).max() > vanish_tol:
                        continue
                    dZ = (-3 * Z(x[None]) + 4 * Z((x + h * inward)[None])
                          - Z((x + 2 * h * inward)[None]))[0] / (2 * h)
                    B = F.affine_basis
                    off = float(np.linalg.norm(dZ - B @ (B.T @ dZ)))
                    best = max(best, off)
            worst = min(worst, best)
            ok_count += best >= transversal_min
        cond2[fid] = {"samples": len(pts), "satisfied": ok_count,
                      "holds": ok_count == len(pts), "worst_transversal": float(worst)}

    probes = None
    if probe_points is not None:
        probe_points = np.atleast_2d(probe_points)
        probes = {"points": probe_points.tolist(),
                  "rank": pointwise_rank(fields, probe_points).tolist()}
    return {
        "condition_I": {"per_face": {str(k): v for k, v in cond1.items()},
                        "holds": all(v["holds"] for v in cond1.values())},
        "condition_II": {"per_facet": {str(k): v for k, v in cond2.items()},
                         "holds": all(v["holds"] for v in cond2.values())},
        "probes": probes,
    }
