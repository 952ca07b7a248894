import io
import json
import os

import numpy as np
import pytest

from passivity import fixtures as fx
from passivity.cli import InputError, main, parse_system
from passivity.storage import PASSIVE, lmi_feasibility_check

SYSTEMS = os.path.join(os.path.dirname(__file__), os.pardir, "systems")


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


def run_json(*argv):
    code, text = run(*argv, "--json")
    return code, json.loads(text)


def sysfile(name):
    return os.path.join(SYSTEMS, name)


def test_energy_circuit1():
    code, rep = run_json("energy", sysfile("circuit1.json"))
    assert code == 0 and rep["verdict"] == "pass"
    (term,) = rep["S_a"]["terms"]
    assert term["coefficient"] == pytest.approx(0.125)
    assert np.allclose(term["direction"], [1, 1, -1, -1])
    assert rep["bounded_above"] is False
    lam = rep["witness"]["lambda"]
    assert lam["im"] == pytest.approx(1) and abs(lam["re"]) < 1e-9


def test_energy_report_reverifies():
    _, rep = run_json("energy", sysfile("circuit1.json"))
    X = np.array(rep["X_minus"])
    assert lmi_feasibility_check(fx.circuit1(), X, PASSIVE).passed


def test_report_round_trip():
    _, rep = run_json("energy", sysfile("circuit1.json"))
    assert json.loads(json.dumps(rep)) == rep


def test_pair_gain_fails_at_c():
    code, rep = run_json("pair", sysfile("pair_s1_s1.json"))
    assert code == 1 and rep["verdict"] == "fail"
    assert rep["witness"]["condition"] == "c" and rep["witness"]["verified"]


def test_check_trivial_gain():
    code, rep = run_json("check", sysfile("trivial_gain.json"))
    assert code == 0 and np.allclose(rep["X_minus"], 0)


def test_factor_scalar_gain():
    code, rep = run_json("factor", sysfile("scalar_gain.json"))
    assert code == 0
    L, W = np.array(rep["L"]), np.array(rep["W"])
    assert L[0, 0] * W[0, 0] == pytest.approx(-1)


def test_trace_flag(tmp_path):
    f = tmp_path / "singular.json"
    f.write_text(json.dumps({"A": [[-1]], "B": [[1]], "C": [[1]], "D": [[0]], "supply": "passive"}))
    code, rep = run_json("energy", str(f), "--trace")
    assert code == 0 and rep["X_minus"] == [[pytest.approx(1.0)]]
    assert rep["trace"]["steps"][0]["kind"] == "degree-reduce"
    code, rep = run_json("energy", str(f))
    assert rep["trace"] is None


def test_feedback_and_extract():
    code, rep = run_json("feedback", sysfile("circuit2.json"))
    assert code == 0
    code, rep = run_json("extract", sysfile("circuit1.json"), "--x0", "1,0,0,0",
                         "--horizon", "30")
    assert code == 0


def test_extract_table(tmp_path):
    table = tmp_path / "run.tsv"
    code, _ = run("extract", sysfile("circuit1.json"), "--x0", "1 0 0 0", "--horizon", "1",
                  "--step", "0.01", "--table", str(table))
    assert code == 0
    assert table.read_text().splitlines()[0].startswith("t\tx1")


def test_fixtures_command():
    code, text = run("fixtures")
    assert code == 0 and "FAIL" not in text


def test_not_passive_exits_one(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text(json.dumps({"A": [[-1]], "B": [[1]], "C": [[1]], "D": [[-1]]}))
    code, rep = run_json("check", str(f))
    assert code == 1 and rep["verdict"] == "fail"


def test_malformed_json_reports_location(tmp_path):
    f = tmp_path / "broken.json"
    f.write_text('{"A": [[-1]],\n "B": [[1]] "C": 1}')
    code, rep = run_json("check", str(f))
    assert code == 2 and rep["verdict"] == "error"
    assert "line 2" in rep["error"]


def test_missing_file():
    code, rep = run_json("check", "/nonexistent/system.json")
    assert code == 2


@pytest.mark.parametrize("doc, field", [
    ({"A": [[-1]], "B": [[1]], "C": [[1]]}, "missing"),
    ({"A": [[-1, 0]], "B": [[1]], "C": [[1]], "D": [[0]]}, "A"),
    ({"A": [[-1]], "B": [[1], [2]], "C": [[1]], "D": [[0]]}, "B"),
    ({"A": [["x"]], "B": [[1]], "C": [[1]], "D": [[0]]}, "A"),
    ({"A": [[-1]], "B": [[1]], "C": [[1]], "D": [[0]], "supply": "other"}, "supply"),
    ({}, "neither"),
])
def test_parse_errors(doc, field):
    with pytest.raises(InputError, match=field):
        parse_system(doc)


def test_exact_number_parsing():
    sys_, _, _, _ = parse_system({"A": [["-1/3"]], "B": [[0.1]], "C": [[1]], "D": [[0]]})
    A, B, _, _ = sys_.exact
    assert str(A[0][0]) == "-1/3" and str(B[0][0]) == "1/10"


def test_default_supply():
    sys_, _, supply, _ = parse_system({"A": [[-1]], "B": [[1, 0]], "C": [[1]], "D": [[0, 0]]})
    assert supply is None


def test_rectangular_defaults_to_gain(tmp_path):
    f = tmp_path / "rect.json"
    f.write_text(json.dumps({"A": [[-1]], "B": [[1, 0]], "C": [[1]], "D": [[0, 0]]}))
    code, rep = run_json("check", str(f))
    assert rep["supply"] == "gain"
