import json
import re

import pytest

from coalesce_bench import cli


def run(capsys, *argv):
    code = cli.dispatch(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def strip_elapsed(text):
    return re.sub(r'"elapsed_ms": [^,]*,', "", text)


def test_exact_drift_output(capsys):
    code, out, _ = run(capsys, "drift", "--model", "scheidegger", "--gaps", "2,2", "--exact")
    doc = json.loads(out)
    assert code == 0
    assert doc["drift"] == "-1" and doc["exact"] is True
    assert doc["manifest"]["subcommand"] == "drift"
    assert doc["results"][0]["drift"] == "-1"


def test_reps_zero_is_usage_error(capsys):
    code, _, err = run(capsys, "eta", "--model", "howard", "--p", "0.5", "--epsilons",
                       "0.4,0.2,0.1", "--n", "10000", "--reps", "0")
    assert code == 2
    assert "usage" in err


@pytest.mark.parametrize("argv", [
    ["collision", "--bogus"],
    ["collision", "--model", "ssrw", "--gaps", "1,2"],
    ["collision", "--p", "1.5"],
    ["generator", "--gaps", "0.2,1"],
    ["drift", "--model", "howard", "--exact"],
    [],
])
def test_bad_parameters_exit_2(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2
    assert out == ""
    assert err


def test_collision_json_schema(capsys):
    code, out, _ = run(capsys, "collision", "--model", "ssrw", "--gaps", "2,2", "--reps", "5000",
                       "--seed", "7")
    doc = json.loads(out)
    assert code == 0
    m = doc["manifest"]
    assert set(m) == {"subcommand", "params", "master_seed", "version", "elapsed_ms", "verdict"}
    assert m["master_seed"] == 7 and m["verdict"] == "pass"
    for rec in doc["results"]:
        assert {"name", "params", "n", "mean", "stderr", "ci95", "censored", "bound",
                "verdict"} <= set(rec)
    corrected = doc["results"][-1]
    assert abs(corrected["mean"] - 4) < 3 * corrected["stderr"]


def test_threads_do_not_change_output(capsys):
    argv = ["collision", "--model", "howard", "--gaps", "3,2", "--reps", "20000", "--seed", "3"]
    _, a, _ = run(capsys, *argv, "--threads", "1")
    _, b, _ = run(capsys, *argv, "--threads", "8")
    assert strip_elapsed(a) == strip_elapsed(b)


def test_csv_starts_with_manifest(capsys, tmp_path):
    path = tmp_path / "out.csv"
    code, out, _ = run(capsys, "pmf", "--reps", "20000", "--format", "csv", "--out", str(path))
    assert out == ""
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest: ")
    json.loads(lines[0][len("# manifest: "):])
    assert lines[1] == ",".join(cli.CSV_COLUMNS)
    assert code == 0


def test_floats_round_trip():
    for x in (0.1, 1 / 3, 2.0 ** -60, 1e300, 123456789.123456789):
        assert float(cli.to_json(x)) == x
    assert cli.to_json(float("nan")) == "null"
    assert cli.to_json(2.0) == "2.0"


def test_fail_exit_code(capsys):
    # a horizon of one step truncates the Scheidegger mean far below its target
    code, out, _ = run(capsys, "collision", "--model", "scheidegger", "--gaps", "2,2",
                       "--horizon", "1", "--reps", "2000")
    doc = json.loads(out)
    assert doc["results"][0]["verdict"] == "fail" and code == 1


def test_inconclusive_exit_code(capsys):
    code, out, _ = run(capsys, "entrance", "--model", "howard", "--gaps", "30,30",
                       "--horizon", "5", "--reps", "200")
    assert json.loads(out)["manifest"]["verdict"] == "inconclusive"
    assert code == 3


@pytest.mark.parametrize("argv", [
    ["brownian", "--reps", "500", "--dt", "1e-2"],
    ["poisson-tree", "--reps", "500"],
    ["martingale", "--gaps", "2,4", "--exact", "--reps", "2000"],
    ["martingale", "--model", "brownian", "--gaps", "1,2", "--reps", "2000"],
    ["eta", "--reps", "200", "--n", "400", "--epsilons", "0.8,0.4"],
    ["generator", "--reps", "2000"],
    ["forest", "--reps", "300"],
    ["entrance", "--model", "scheidegger", "--gaps", "2,2", "--reps", "300"],
])
def test_subcommands_produce_documents(capsys, argv):
    code, out, _ = run(capsys, *argv)
    doc = json.loads(out)
    assert code in (0, 1, 3)
    assert doc["results"]
    assert doc["manifest"]["subcommand"] == argv[0]
