import json
import subprocess
import sys

import pytest

from breuil.cli import main, run
from breuil.problem import fixture_path

FAST = {
    "s1-0.json": "build-algebra",
    "s1-1.json": "build-algebra",
    "s1-0-classify.json": "classify-module",
    "counterexample.json": "classify-module",
    "ramified-cycle-p3.json": "iterate-lattice",
    "ramified-wa-p3.json": "check-wa",
    "unit-root-trivial.json": "iterate-lattice",
    "unit-root-strong.json": "check-strong-div",
    "rank-one-N.json": "construct-N",
}


def _problem(tmp_path, task, payload, ring=None, name="problem.json"):
    ring = ring or {"p": 3, "e": 2, "E_coeffs": [-3, 0, 1], "n": 2, "N": 6}
    path = tmp_path / name
    path.write_text(json.dumps({"ring": ring, "task": task, "payload": payload}))
    return str(path)


@pytest.mark.parametrize("name,task", sorted(FAST.items()))
def test_fixtures_certify(name, task):
    code, report = run(fixture_path(name), task)
    assert code == 0, report.get("error")
    assert report["certified"]


def test_json_output_is_byte_identical(capsys):
    argv = ["iterate-lattice", fixture_path("ramified-cycle-p3.json"), "--json"]
    assert main(argv) == 0
    first = capsys.readouterr().out
    assert main(argv) == 0
    assert capsys.readouterr().out == first
    assert json.loads(first)["result"]["certificate"]["i0"] == 2


def test_iterate_text_report(capsys):
    assert main(["iterate-lattice", fixture_path("ramified-cycle-p3.json")]) == 0
    out = capsys.readouterr().out
    assert "trace of 4 steps" in out
    assert "cycle certificate: i0 = 2, C = 2" in out
    assert out.rstrip().endswith("certified")


def test_build_algebra_text(capsys):
    assert main(["build-algebra", fixture_path("s1-0.json")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "O_K = Z_p[pi]/(u^2 - 3) with p = 3, modulo pi^7" in lines
    assert "R = O_K[X1]/(X1^3 + pi^0/F(pi) * ((-1)*X1))" in lines


@pytest.mark.parametrize(
    "ring,needle",
    [({"p": 3, "e": 2, "E_coeffs": [-3, 1, 1], "n": 2, "N": 6}, "Eisenstein"),
     ({"p": 3, "e": 2, "E_coeffs": [-9, 0, 1], "n": 2, "N": 6}, "Eisenstein"),
     ({"p": 4, "e": 2, "E_coeffs": [-4, 0, 1], "n": 2, "N": 6}, "p"),
     ({"p": 3, "e": 2, "E_coeffs": [-3, 0, 1], "n": 2}, "N")],
    ids=["not-eisenstein", "constant-not-p", "p-not-prime", "missing-N"],
)
def test_bad_ring_is_an_input_error(tmp_path, ring, needle):
    path = _problem(tmp_path, "build-algebra", {"module": {"kind": "standard-S1", "index": 0}}, ring)
    code, report = run(path, "build-algebra")
    assert code == 2
    assert needle in report["error"]["message"]


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"ring": {\n  "p": 3,\n  oops}')
    code, report = run(str(path), "build-algebra")
    assert code == 2
    assert "line 3" in report["error"]["message"]


def test_task_mismatch_is_an_input_error():
    code, report = run(fixture_path("s1-0.json"), "iterate-lattice")
    assert code == 2
    assert "field task" in report["error"]["message"]


def test_budget_exhaustion_keeps_partial_trace():
    code, report = run(fixture_path("ramified-cycle-p3.json"), "iterate-lattice", budget=2)
    assert code == 3
    assert report["error"]["kind"] == "BudgetExceeded"
    assert len(report["partial_trace"]) == 3


def test_unstable_subobject_fails(tmp_path):
    data = json.loads(open(fixture_path("ramified-wa-p3.json")).read())
    data["payload"]["subobjects"] = [[[0, 1]]]
    path = tmp_path / "sub.json"
    path.write_text(json.dumps(data))
    code, report = run(str(path), "check-wa")
    assert code == 1
    assert report["error"]["kind"] == "NonStableSubobject"


def test_non_admissible_module_fails(tmp_path):
    ring = {"p": 3, "e": 1, "E_coeffs": [-3, 1], "n": 3, "N": 6}
    module = {"phi": [[1, 0], [0, 3]], "fil": [[[1, 0]]]}
    code, report = run(_problem(tmp_path, "check-wa", {"module": module}, ring), "check-wa")
    assert code == 1
    assert not report["result"]["weakly_admissible"]


def test_jobs_match_sequential(capsys):
    files = [fixture_path("s1-0.json"), fixture_path("s1-1.json")]
    assert main(["build-algebra", *files, "--json"]) == 0
    seq = capsys.readouterr().out
    assert main(["build-algebra", *files, "--json", "--jobs", "2"]) == 0
    assert capsys.readouterr().out == seq


def test_exit_code_is_the_worst_over_files(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("[")
    assert main(["build-algebra", fixture_path("s1-0.json"), str(bad)]) == 2
    capsys.readouterr()


def test_precision_bump_reported(capsys):
    assert main(["classify-module", fixture_path("counterexample.json"), "--precision-bump", "1", "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["precision_bump"]["identical"] and rep["precision_bump"]["differences"] == []


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "breuil.cli", "build-algebra", fixture_path("s1-1.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "pi^2/F(pi)" in proc.stdout
