import csv
import io
import json
import subprocess
import sys

import pytest

from fragdist import cli


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def test_fd_limit_example():
    code, out, _ = call("fd-limit", "--pi", '{"pi":[0.5,0.5]}', "--m", "3")
    assert code == 0
    payload = json.loads(out)
    assert payload["masses"] == {"3": pytest.approx(2 / 3, abs=1e-11), "4": pytest.approx(1 / 3, abs=1e-11)}
    assert payload["fragility_index"] == pytest.approx(10 / 3, abs=1e-11)


def test_counterexample_example():
    code, out, _ = call("counterexample", "--which", "tri2", "--depth", "40")
    assert code == 0
    assert json.loads(out)["gap"] == pytest.approx(0.0881, abs=1e-4)


def test_counterexample_csv():
    code, out, _ = call("counterexample", "--which", "r1", "--depth", "10", "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0] == ["k", "value_seqA", "value_seqB"] and len(rows) == 11


def test_tv_example():
    code, out, _ = call("tv", "--a", '{"offset":0,"probs":[1]}', "--b", '{"offset":1,"probs":[1]}')
    assert code == 0 and json.loads(out)["tv"] == 1


def test_fd_converge_csv():
    code, out, _ = call("fd-converge", "--pi", "[0.6,0.3,0.1]", "--m", "2")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0] == ["rate", "tv"] and len(rows) == 5
    tvs = [float(r[1]) for r in rows[1:]]
    assert tvs == sorted(tvs, reverse=True)


def test_stein_factors_and_sweep():
    code, out, _ = call("stein-factors", "--family", "negbin", "--params", '{"r":2,"p":0.3}', "--m", "1", "--numeric")
    assert code == 0 and set(json.loads(out)) >= {"G1", "G2", "m"}
    code, out, err = call("stein-sweep", "--family", "cp", "--params", "[0.5,0.2]", "--m-max", "4")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0] == ["m", "G1", "G2", "method"] and len(rows) == 6
    assert err == ""


def test_model_pmf_and_verify_bound():
    code, out, _ = call("model-pmf", "--model", '{"type":"tworuns","n":4,"p":0.5}')
    assert code == 0 and json.loads(out)["probs"][0] == 0.4375
    code, out, _ = call("verify-bound", "--model", '{"type":"independent","n":10,"p":0.01}')
    assert code == 0 and json.loads(out)["holds"] is True


def test_json_from_file(tmp_path):
    path = tmp_path / "model.json"
    path.write_text('{"type":"zeroinflated","n":5,"p1":0.1,"q":0.5}')
    code, out, _ = call("model-pmf", "--model", str(path))
    assert code == 0 and json.loads(out)["offset"] == 0


def test_sample_deterministic_and_header():
    argv = ("sample", "--model", '{"type":"tworuns","n":8,"p":0.4}', "--seed", "7", "--count", "50")
    a, b = call(*argv), call(*argv)
    assert a == b
    lines = a[1].splitlines()
    assert lines[0] == "count" and len(lines) == 51
    assert call(*argv, "--workers", "3")[1] == a[1]


def test_sample_needs_seed():
    code, _, err = call("sample", "--model", '{"type":"tworuns","n":8,"p":0.4}', "--count", "5")
    assert code == 2 and "usage" in err


def test_argument_errors_exit_2():
    assert call()[0] == 2
    assert call("nope")[0] == 2
    code, _, err = call("model-pmf", "--model", "{not json")
    assert code == 2 and "usage" in err
    assert call("--tol", "2", "tv", "--a", "{}", "--b", "{}")[0] == 2
    assert call("reproduce-paper", "--criteria", "99")[0] == 2


def test_domain_errors_exit_1():
    code, out, err = call("fd-limit", "--pi", "[0.5,0.5]", "--m", "0")
    assert code == 1 and out == ""
    payload = json.loads(err)
    assert set(payload) == {"code", "message"} and payload["code"] == "invalid-parameter"
    code, _, err = call("counterexample", "--which", "r1", "--depth", "60")
    assert code == 1 and json.loads(err)["code"] == "resolution-error"


def test_tol_env(monkeypatch):
    argv = ("fd-converge", "--pi", "[1]", "--m", "1", "--rates", "0.5")
    monkeypatch.setenv(cli.TOL_ENV, "1e-6")
    assert call(*argv)[0] == 0
    monkeypatch.setenv(cli.TOL_ENV, "banana")
    code, _, err = call(*argv)
    assert code == 1 and json.loads(err)["code"] == "invalid-parameter"


def test_numbers_use_twelve_digits():
    assert cli.fmt(1 / 3) == "0.333333333333"
    assert cli._round({"x": [2 / 3, float("nan")]}) == {"x": [0.666666666667, None]}


def test_reproduce_subset_exit_code():
    code, out, err = call("reproduce-paper", "--criteria", "1,10")
    payload = json.loads(out)
    assert code == 0 and payload["all_passed"] is True
    assert len(err.strip().splitlines()) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fragdist", "tv", "--a", '{"offset":0,"probs":[1]}',
                           "--b", '{"offset":0,"probs":[1]}'], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["tv"] == 0
