"""``polyflow`` command-line front end.

Every command builds a report of named checks, each with a status and its
worst-case value. ``--out DIR`` writes ``report.json`` (sorted keys, no
timing, byte-identical for fixed inputs and seed), per-command CSV
files and ``timing.json``; without it the report is printed to stdout.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage
or parse errors.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, catalog
from .errors import (DegenerateNumerics, EmptyInput, ParseError, PointOutside,
                     PolyflowError)
from .expr import vector_field
from .extension import (COMPAT_TOL, CompatibleFamily, ell_extend, smoothness_probe,
                        span_residual)
from .polytope import Polytope, polytope_from_json, sample_face
from .simplicity import is_simple, standard_chart, verify_chart

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunReport:
    command: str
    inputs_digest: str
    seed: int
    checks: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    error: str | None = None
    wall_time: float = 0.0
    tables: dict = field(default_factory=dict)      # csv name -> (header, rows)
    timing: dict = field(default_factory=dict)      # extra entries for timing.json

    def check(self, name, ok, worst=None, threshold=None):
        self.checks.append({"name": name, "status": "pass" if ok else "fail",
                            "worst": worst, "threshold": threshold})

    @property
    def passed(self):
        return self.error is None and all(c["status"] == "pass" for c in self.checks)

    def to_dict(self):
        return {"command": self.command, "version": __version__,
                "inputs_digest": self.inputs_digest, "seed": self.seed,
                "passed": self.passed, "error": self.error,
                "checks": self.checks, "results": self.results}


def _plain(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


# inputs --------------------------------------------------------------------

def _read_text(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def parse_polytope(arg) -> tuple[Polytope, str]:
    """A JSON file with ``"vertices"`` or the name of a catalog polytope.

    Returns the polytope and the canonical text that identifies it.
    """
    if Path(arg).is_file():
        text = _read_text(arg)
        return polytope_from_json(text), text
    if arg in catalog.NAMES:
        return catalog.load(arg), catalog.catalog_text(arg)
    raise UsageError(f"{arg!r} is neither a file nor a catalog polytope "
                     f"({', '.join(catalog.NAMES)})")


def _load_json(text, what):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{what}: {e.msg}", e.lineno, e.colno) from None


def parse_field_arg(arg, n):
    """``"expr1; expr2"`` inline, or a JSON file holding a list of expressions."""
    if Path(arg).is_file():
        srcs = _load_json(_read_text(arg), arg)
        if isinstance(srcs, dict):
            srcs = srcs.get("field")
        if not isinstance(srcs, list) or not all(isinstance(s, str) for s in srcs):
            raise UsageError(f"{arg}: expected a list of expression strings")
        text = json.dumps(srcs)
    else:
        srcs = [s.strip() for s in arg.split(";")]
        text = arg
    if len(srcs) != n or any(not s for s in srcs):
        raise UsageError(f"a field needs {n} non-empty expressions, got {len(srcs)}")
    return vector_field(srcs, n), text


def parse_family(path, P: Polytope, ell, vector=False):
    """Face id -> expression (or list) map; the key ``"*"`` covers missing faces."""
    text = _read_text(path)
    data = _load_json(text, path)
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected an object mapping face ids to expressions")
    n = P.ambient_dim
    ids = {F.id for F in P.lattice.of_dim(ell)}
    fields, cache = {}, {}
    for key in data:
        if key != "*" and (not key.isdigit() or int(key) not in ids):
            raise UsageError(f"{path}: {key!r} is not the id of a {ell}-face")
    for fid in sorted(ids):
        src = data.get(str(fid), data.get("*"))
        if src is None:
            raise UsageError(f"{path}: no data for face {fid}")
        srcs = [src] if isinstance(src, str) else src
        if not isinstance(srcs, list) or not all(isinstance(s, str) for s in srcs):
            raise UsageError(f"{path}: face {fid} needs an expression or a list of them")
        if vector and len(srcs) != n:
            raise UsageError(f"{path}: face {fid} needs {n} components")
        key = tuple(srcs)
        if key not in cache:
            cache[key] = vector_field(srcs, n)
        fields[fid] = cache[key]
    dims = {f.codomain_dim for f in fields.values()}
    if len(dims) != 1:
        raise UsageError(f"{path}: all faces need the same number of components")
    return fields, text


def parse_point(arg, dim):
    try:
        x = np.array([float(t) for t in arg.split(",")])
    except ValueError:
        raise UsageError(f"bad point {arg!r}: expected comma-separated numbers") from None
    if len(x) != dim:
        raise UsageError(f"point {arg!r} needs {dim} coordinates")
    return x


def _digest(command, args, texts):
    h = hashlib.sha256()
    h.update(json.dumps({"command": command, "args": args}, sort_keys=True).encode())
    for t in texts:
        h.update(b"\0")
        h.update(t.encode())
    return h.hexdigest()


def _coords(k):
    return [f"x{j + 1}" for j in range(k)]


# commands ------------------------------------------------------------------

def cmd_classify(a, rng):
    P, text = parse_polytope(a.polytope)
    rep = is_simple(P)
    crit = rep.criteria
    # dump and reparse: the face lattice must survive the round trip
    Q = polytope_from_json(P.to_json())
    same = sorted(map(sorted, (f.vertex_ids for f in P.faces))) == \
        sorted(map(sorted, (f.vertex_ids for f in Q.faces)))
    out = RunReport("classify", "", a.seed)
    out.check("criteria agree", len(set(crit.values())) == 1)
    out.check("lattice survives dump/parse", same)
    out.results = {"dim": P.dim, "ambient_dim": P.ambient_dim, "n_vertices": len(P.vertices),
                   "n_facets": P.n_facets, "f_vector": [len(P.lattice.of_dim(d))
                                                        for d in range(P.dim + 1)],
                   "simplicity": rep.to_dict(), "lattice": P.lattice.to_dict()}
    out.tables["vertices.csv"] = (
        ["vertex"] + _coords(P.ambient_dim) + ["edge_count", "facet_count"],
        [[v] + P.vertices[v].tolist() + [rep.per_vertex_edge_counts[v],
                                         rep.per_vertex_facet_counts[v]]
         for v in sorted(rep.per_vertex_edge_counts)])
    return out, [text]


def cmd_chart(a, rng):
    P, text = parse_polytope(a.polytope)
    x = parse_point(a.point, P.ambient_dim)
    out = RunReport("chart", "", a.seed)
    chart = standard_chart(P, x)
    rep = verify_chart(P, chart, samples=a.samples or 1000, rng=rng)
    out.check("chart verified", rep.passed)
    out.results = {"chart": chart.to_dict(), "verification": {"samples": rep.samples,
                                                              "checks": rep.checks,
                                                              "worst": rep.worst}}
    return out, [text]


def _face_samples(P, faces, per_face, rng):
    pts, owner = [], []
    for F in faces:
        p = sample_face(P, F, per_face if F.dim else 1, rng)
        pts.append(p)
        owner += [F.id] * len(p)
    return np.vstack(pts), owner


def _extension_checks(out, P, ell, fam_fields, g, per_face, rng, tol, smooth=True):
    lat = P.lattice
    faces = lat.of_dim(ell)
    worst = 0.0
    for F in faces:
        pts = sample_face(P, F, per_face, rng)
        worst = max(worst, float(np.abs(g(pts) - fam_fields[F.id](pts)).max()))
    out.check("restriction reproduces the data", worst <= tol, worst, tol)

    span = 0.0
    for N in P.faces:
        if N.dim <= ell:
            continue
        subs = [F for F in faces if F.vertex_ids <= N.vertex_ids]
        ref = np.vstack([fam_fields[F.id](sample_face(P, F, per_face, rng)) for F in subs])
        span = max(span, span_residual(g(sample_face(P, N, per_face, rng)), ref))
    out.check("values stay in the span of the face data", span <= 1e-8, span, 1e-8)
    if smooth:
        sm = smoothness_probe(g, P, order=1, h=1e-4, rng=rng)
        out.check("smoothness probe", sm.passed, max(sm.discrepancies.values(), default=0.0),
                  sm.tolerance)
        out.results["smoothness"] = sm.to_dict()

    pts, owner = _face_samples(P, P.faces, per_face, rng)
    vals = g(pts)
    out.tables["values.csv"] = (["face"] + _coords(P.ambient_dim)
                                + [f"v{j + 1}" for j in range(vals.shape[1])],
                                [[o] + p.tolist() + v.tolist()
                                 for o, p, v in zip(owner, pts, vals)])
    return worst


def cmd_extend(a, rng):
    P, text = parse_polytope(a.polytope)
    _check_ell(P, a.l)
    fields, ftext = parse_family(a.data, P, a.l)
    family = CompatibleFamily(a.l, fields)
    out = RunReport("extend", "", a.seed)
    tol = a.tol or COMPAT_TOL
    disc = family.check(P, rng=rng, tol=np.inf)
    out.check("family compatible", disc <= tol, disc, tol)
    if disc > tol:
        return out, [text, ftext]
    g = ell_extend(P, a.l, family, check=False)
    _extension_checks(out, P, a.l, fields, g, a.samples or 20, rng, tol,
                      smooth=not a.no_smoothness)
    return out, [text, ftext]


def _check_ell(P, ell):
    if not 1 <= ell <= P.dim - 1:
        raise UsageError(f"--l must lie in 1..{P.dim - 1} for a {P.dim}-polytope")


def cmd_stratify_check(a, rng):
    from .stratified import is_stratified, stratified_criterion
    P, text = parse_polytope(a.polytope)
    X, ftext = parse_field_arg(a.field, P.ambient_dim)
    tol = a.tol or 1e-9
    samples = a.samples or 100
    out = RunReport("stratify-check", "", a.seed)
    rep = is_stratified(P, X, samples=samples, rng=rng, tol=tol)
    out.check("tangent to every face", rep.passed, rep.worst, tol)
    out.results["stratification"] = rep.to_dict()
    if a.l is not None:
        _check_ell(P, a.l)
        crit = stratified_criterion(P, X, a.l, samples=min(samples, 60), rng=rng, tol=tol)
        out.check("criterion consistent with the direct check", crit.consistent)
        out.results["criterion"] = crit.to_dict()
    out.tables["faces.csv"] = (["face", "dim", "normal_component"],
                               [[f, P.faces[f].dim, v] for f, v in sorted(rep.per_face.items())])
    return out, [text, ftext]


def cmd_extend_field(a, rng):
    from .stratified import FaceFieldFamily, extend_fields, is_stratified
    P, text = parse_polytope(a.polytope)
    _check_ell(P, a.l)
    fields, ftext = parse_family(a.data, P, a.l, vector=True)
    family = FaceFieldFamily(a.l, fields)
    out = RunReport("extend-field", "", a.seed)
    tol = a.tol or 1e-9
    disc = family.check(P, rng=rng, tol=np.inf)
    out.check("family compatible", disc <= COMPAT_TOL, disc, COMPAT_TOL)
    tang = family.check_tangency(P, rng=rng, tol=np.inf)
    out.check("face data tangent to subfaces", tang <= tol, tang, tol)
    if disc > COMPAT_TOL or tang > tol:
        return out, [text, ftext]
    Y = extend_fields(P, family, rng=rng, verify=False)
    rep = is_stratified(P, Y.field, samples=a.samples or 60, rng=rng, tol=tol)
    out.check("extension is stratified", rep.passed, rep.worst, tol)
    out.results["stratification"] = rep.to_dict()
    _extension_checks(out, P, a.l, fields, Y.field, a.samples or 20, rng, COMPAT_TOL,
                      smooth=not a.no_smoothness)
    return out, [text, ftext]


def cmd_obstruction(a, rng):
    from .stratified import nonsimple_obstruction
    P, text = parse_polytope(a.polytope)
    out = RunReport("obstruction", "", a.seed)
    w = nonsimple_obstruction(P)
    d = w.to_dict()
    out.check("edge directions dependent (lambda recovery)", w.lambda_residual <= 1e-9,
              w.lambda_residual, 1e-9)
    out.check("no degree-2 extension (residual >= |v| / 2)", d["ratio"] >= 0.5,
              d["infeasibility_residual"], 0.5 * d["v_norm"])
    out.results["witness"] = d
    return out, [text]


def cmd_flow(a, rng):
    from .flows import _violation, integrate_flow
    P, text = parse_polytope(a.polytope)
    X, ftext = parse_field_arg(a.field, P.ambient_dim)
    x0 = parse_point(a.x0, P.ambient_dim)
    tol = a.tol or 1e-9
    out = RunReport("flow", "", a.seed)
    r = integrate_flow(X, x0, a.T, tol=tol, base=P)
    out.check("stays in M", r.max_constraint_violation <= 1e-6,
              r.max_constraint_violation, 1e-6)
    out.check("stays on the starting face", r.face_drift <= 1e-6, r.face_drift, 1e-6)
    out.results = {"x0": x0, "T": a.T, "tol": tol, **r.to_dict()}
    viol = _violation(P, r.trajectory)
    out.tables["trajectory.csv"] = (["t"] + _coords(P.ambient_dim) + ["violation"],
                                    [[t] + y.tolist() + [v]
                                     for t, y, v in zip(r.times, r.trajectory, viol)])
    return out, [text, ftext]


def cmd_reach(a, rng):
    from .errors import BudgetExhausted
    from .flows import reach_target
    P, text = parse_polytope(a.polytope)
    parsed = [parse_field_arg(s, P.ambient_dim) for s in a.field]
    start = parse_point(a.start, P.ambient_dim)
    target = parse_point(a.target, P.ambient_dim)
    tol = a.tol or 1e-3
    out = RunReport("reach", "", a.seed)
    try:
        r = reach_target(P, [f for f, _ in parsed], start, target, budget=a.budget, tol=tol)
    except BudgetExhausted as e:
        r = e.best
    out.check("target reached", r.residual <= tol, r.residual, tol)
    out.check("within the evaluation budget", r.evaluations <= a.budget, r.evaluations,
              a.budget)
    out.results = {"start": start, "target": target, **r.to_dict()}
    out.tables["moves.csv"] = (["move", "generator", "scaling", "duration", "residual"],
                               [[k, m["generator"], m["scaling"], m["duration"], m["residual"]]
                                for k, m in enumerate(r.moves)])
    return out, [text] + [t for _, t in parsed]


def cmd_audit_control(a, rng):
    from .flows import control_conditions_audit
    P, text = parse_polytope(a.polytope)
    parsed = [parse_field_arg(s, P.ambient_dim) for s in a.field]
    probes = [parse_point(p, P.ambient_dim) for p in a.probe] if a.probe else None
    out = RunReport("audit-control", "", a.seed)
    rep = control_conditions_audit(P, [f for f, _ in parsed], samples=a.samples or 20,
                                   rng=rng, probe_points=probes)
    out.check("condition (I): orbit rank equals face dimension", rep["condition_I"]["holds"])
    out.check("condition (II): transversal scaling on every facet",
              rep["condition_II"]["holds"])
    out.results = rep
    rows = [["I", f, v["holds"], v["orbit_rank"], v["dim"]]
            for f, v in rep["condition_I"]["per_face"].items()]
    rows += [["II", f, v["holds"], v["satisfied"], v["samples"]]
             for f, v in rep["condition_II"]["per_facet"].items()]
    out.tables["conditions.csv"] = (["condition", "face", "holds", "value", "of"], rows)
    return out, [text] + [t for _, t in parsed]


def cmd_suite(a, rng):
    from .acceptance import run_all
    only = None
    if a.only:
        try:
            only = {int(t) for t in a.only.split(",")}
        except ValueError:
            raise UsageError("--only takes comma-separated criterion numbers") from None
    out = RunReport("suite", "", a.seed)
    echo = (lambda s: print(s, file=sys.stderr)) if a.out is None else print
    results = run_all(seed=a.seed, only=only, echo=echo)
    rows, timing = [], {}
    for r in results:
        for c in r.checks:
            out.check(f"{r.number}: {c.name}", c.passed, c.worst, c.threshold)
            rows.append([r.number, r.title, c.name, "pass" if c.passed else "fail",
                         c.worst, c.threshold])
        # the limit's verdict is part of the report; the measured time is not
        out.check(f"{r.number}: runtime under {r.time_limit:g}s", r.within_time)
        timing[f"criterion_{r.number}"] = r.runtime
    out.results = {"criteria": [r.to_dict() for r in results]}
    out.tables["criteria.csv"] = (["criterion", "title", "check", "status", "worst",
                                   "threshold"], rows)
    out.timing = timing
    return out, []


COMMANDS = {
    "classify": cmd_classify, "chart": cmd_chart, "extend": cmd_extend,
    "stratify-check": cmd_stratify_check, "extend-field": cmd_extend_field,
    "obstruction": cmd_obstruction, "flow": cmd_flow, "reach": cmd_reach,
    "audit-control": cmd_audit_control, "suite": cmd_suite,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42, help="RNG seed (default 42)")
    common.add_argument("--samples", type=int, default=None,
                        help="sample count for sampling-based checks")
    common.add_argument("--tol", type=float, default=None, help="check tolerance")
    common.add_argument("--out", type=Path, default=None,
                        help="write report.json, CSV files and timing.json here")

    p = argparse.ArgumentParser(prog="polyflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"polyflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_):
        s = sub.add_parser(name, help=help_, parents=[common])
        if name != "suite":
            s.add_argument("polytope", help="polytope JSON file or catalog name")
        return s

    add("classify", "face lattice and simplicity report")
    s = add("chart", "standard chart at a point")
    s.add_argument("--point", required=True, help="comma-separated coordinates")
    for name, help_ in (("extend", "extend function data from l-faces"),
                        ("extend-field", "extend tangent field data from l-faces")):
        s = add(name, help_)
        s.add_argument("--l", type=int, required=True, help="dimension of the data faces")
        s.add_argument("--data", required=True, help="JSON map face id -> expression(s)")
        s.add_argument("--no-smoothness", action="store_true", help="skip the smoothness probe")
    s = add("stratify-check", "is a field tangent to every face")
    s.add_argument("--field", required=True, help="'e1; e2; ...' or a JSON list file")
    s.add_argument("--l", type=int, default=None, help="also run the l-face criterion")
    add("obstruction", "extension obstruction at a non-simple vertex")
    s = add("flow", "integrate a field from a point")
    s.add_argument("--field", required=True)
    s.add_argument("--x0", required=True)
    s.add_argument("--T", type=float, default=1.0)
    s = add("reach", "steer between points with flows of the given fields")
    s.add_argument("--field", action="append", required=True, help="repeat per generator")
    s.add_argument("--start", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--budget", type=int, default=10_000, help="flow evaluations allowed")
    s = add("audit-control", "check the two controllability conditions")
    s.add_argument("--field", action="append", required=True, help="repeat per field")
    s.add_argument("--probe", action="append", default=None, help="point for a rank probe")
    s = add("suite", "run the acceptance battery on the built-in catalog")
    s.add_argument("--only", default=None, help="comma-separated criterion numbers")
    return p


def _normalised_args(a):
    skip = {"out", "command"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(a).items())
            if k not in skip}


def write_outputs(report: RunReport, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(dumps(report.to_dict()), encoding="utf-8")
    for name, (header, rows) in report.tables.items():
        with open(out_dir / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows([[repr(v) if isinstance(v, float) else v for v in _plain(r)]
                         for r in rows])
    timing = {"command": report.command, "wall_time_seconds": report.wall_time}
    timing.update(report.timing)
    (out_dir / "timing.json").write_text(dumps(timing), encoding="utf-8")


_USAGE_ERRORS = (UsageError, ParseError, EmptyInput, DegenerateNumerics, PointOutside)


def run(command, args) -> RunReport:
    """Run one command on parsed arguments; library failures become a failed report."""
    rng = np.random.default_rng(args.seed)
    t0 = time.perf_counter()
    try:
        report, texts = COMMANDS[command](args, rng)
    except _USAGE_ERRORS:
        raise
    except PolyflowError as e:
        report, texts = RunReport(command, "", args.seed), []
        report.error = f"{type(e).__name__}: {e}"
        report.check(type(e).__name__, False)
    report.inputs_digest = _digest(command, _normalised_args(args), texts)
    report.wall_time = time.perf_counter() - t0
    return report


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = run(args.command, args)
    except _USAGE_ERRORS as e:
        print(f"polyflow {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if args.out is not None:
        write_outputs(report, args.out)
        for c in report.checks:
            print(f"{c['status']:4}  {c['name']}")
        if report.error:
            print(f"error: {report.error}")
        print(f"wrote {args.out / 'report.json'}")
    else:
        sys.stdout.write(dumps(report.to_dict()))
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
