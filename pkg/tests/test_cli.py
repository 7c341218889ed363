import json

import pytest

from polyflow import catalog
from polyflow.cli import main

Z1 = "(2*x2-1)*x1*(1-x1); 0"
Z2 = "0; x2*(x2-1)"


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    report = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() \
        else None
    return code, report, out


def test_classify_cube(tmp_path):
    code, rep, out = run(tmp_path, "classify", "cube3")
    assert code == 0
    assert rep["results"]["simplicity"]["is_simple"] is True
    assert rep["results"]["f_vector"] == [8, 12, 6, 1]
    assert (out / "vertices.csv").read_text().startswith("vertex,x1,x2,x3,edge_count")
    assert "wall_time_seconds" in json.loads((out / "timing.json").read_text())
    assert "wall_time" not in (out / "report.json").read_text()


def test_classify_icosahedron_from_file(tmp_path):
    path = tmp_path / "ico.json"
    path.write_text(catalog.catalog_text("icosahedron"))
    code, rep, _ = run(tmp_path, "classify", str(path))
    assert code == 0
    assert rep["results"]["simplicity"]["is_simple"] is False
    assert rep["results"]["simplicity"]["witness"]["edge_count"] == 5


def test_reports_are_byte_identical(tmp_path):
    fam = tmp_path / "fam.json"
    fam.write_text(json.dumps({"*": "x1*x2 + 1"}))
    argv = ["extend", "square", "--l", "1", "--data", str(fam), "--seed", "7"]
    _, _, a = run(tmp_path, *argv, name="a")
    _, _, b = run(tmp_path, *argv, name="b")
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "values.csv").read_bytes() == (b / "values.csv").read_bytes()
    _, _, c = run(tmp_path, *argv[:-1], "8", name="c")
    assert (a / "report.json").read_bytes() != (c / "report.json").read_bytes()


def test_check_failures_exit_1(tmp_path):
    code, rep, _ = run(tmp_path, "stratify-check", "square", "--field", "1; 0")
    assert code == 1 and rep["passed"] is False
    code, rep, _ = run(tmp_path, "obstruction", "cube3", name="o2")
    assert code == 1 and rep["error"].startswith("IsSimple")
    code, rep, _ = run(tmp_path, "chart", "square_pyramid", "--point", "0,0,1", name="o3")
    assert code == 1 and rep["error"].startswith("NotSimple")


@pytest.mark.parametrize("argv", [
    ["classify", "no-such-polytope"],
    ["stratify-check", "square", "--field", "x3; 0"],
    ["stratify-check", "square", "--field", "x1 +; 0"],
    ["stratify-check", "square", "--field", "x1"],
    ["chart", "square", "--point", "0,a"],
    ["flow", "square", "--field", Z2, "--x0", "2,2"],
    ["extend", "square", "--l", "2", "--data", "missing.json"],
])
def test_usage_errors_exit_2(tmp_path, argv):
    assert main(argv) == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def test_bad_polytope_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"vertices": [[0, 0],\n [1, 0], ]}')
    assert main(["classify", str(path)]) == 2
    assert "line 2" in capsys.readouterr().err
    path.write_text('{"vertices": []}')
    assert main(["classify", str(path)]) == 2


def test_family_ids_and_compatibility(tmp_path):
    fam = tmp_path / "fam.json"
    fam.write_text(json.dumps({"4": "x1 + 1", "*": "x2"}))
    code, rep, _ = run(tmp_path, "extend", "square", "--l", "1", "--data", str(fam),
                       "--no-smoothness")
    assert code == 1
    assert rep["checks"][0]["name"] == "family compatible"
    fam.write_text(json.dumps({"2": "x1"}))
    assert main(["extend", "square", "--l", "1", "--data", str(fam)]) == 2


def test_extend_field_and_stratify(tmp_path):
    fam = tmp_path / "fields.json"
    fam.write_text(json.dumps({"*": ["x1*(1-x1)", "x2*(x2-1)"]}))
    code, rep, out = run(tmp_path, "extend-field", "square", "--l", "1", "--data", str(fam))
    assert code == 0
    assert all(c["status"] == "pass" for c in rep["checks"])
    assert (out / "values.csv").exists()
    code, rep, _ = run(tmp_path, "stratify-check", "square", "--field", Z1, "--l", "1",
                       name="s")
    assert code == 0 and rep["results"]["criterion"]["passed"]


def test_flow_csv(tmp_path):
    code, rep, out = run(tmp_path, "flow", "square", "--field", Z2, "--x0", "0.3,0.5",
                         "--T", "1.0986122886681098", "--tol", "1e-10")
    assert code == 0
    assert rep["results"]["final_point"][1] == pytest.approx(0.25, abs=1e-8)
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,x1,x2,violation"
    assert len(lines) > 3


def test_obstruction_pyramid(tmp_path):
    code, rep, _ = run(tmp_path, "obstruction", "square_pyramid")
    assert code == 0
    assert rep["results"]["witness"]["m"] == 4


def test_audit_control(tmp_path):
    code, rep, out = run(tmp_path, "audit-control", "square", "--field", Z1, "--field", Z2,
                         "--probe", "0.3,0.5", "--probe", "0.3,0.2")
    assert code == 0
    assert rep["results"]["probes"]["rank"] == [1, 2]
    code, _, _ = run(tmp_path, "audit-control", "square", "--field", Z2, name="b")
    assert code == 1


def test_reach_budget_too_small(tmp_path):
    code, rep, _ = run(tmp_path, "reach", "square", "--field", Z1, "--field", Z2,
                       "--start", "0.3,0.4", "--target", "0.7,0.6", "--budget", "3")
    assert code == 1
    assert rep["checks"][0]["status"] == "fail"


def test_stdout_report_without_out(capsys):
    assert main(["classify", "segment"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["command"] == "classify" and rep["passed"] is True
