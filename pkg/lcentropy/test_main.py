"""
End-to-end tests of the command-line runner.
"""

import csv
import json
import math

import pytest

from lcentropy.main import build_parser, collect_overrides, main


def read_csv(path):
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


def snapshot(directory):
    return {path.name: path.read_bytes() for path in sorted(directory.iterdir())}


def test_bernoulli_closed_form(capsys, tmp_path):
    code = main(["bernoulli", "--pi", "1/2,1/4,1/4", "--closed-form", "--output", str(tmp_path)])
    assert code == 0
    printed = capsys.readouterr().out.strip()
    assert printed == format(math.log(8 / 3), ".12f")
    assert float(printed) == pytest.approx(0.980829253012, abs=1e-12)


def test_grillenberger_levels(capsys, tmp_path):
    assert main(["grillenberger", "levels", "--p", "3", "--output", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "grillenberger-levels.csv")
    assert rows[0] == ["j", "l", "m", "r", "lambda"]
    assert [row[:4] for row in rows[1:4]] == [["1", "1", "3", "0"], ["2", "3", "6", "2"], ["3", "24", "720", "30"]]
    assert rows[4][1] == "18000"
    assert capsys.readouterr().out.splitlines()[2].startswith("3,24,720,30,")

    meta = json.loads((tmp_path / "grillenberger-levels.csv.meta.json").read_text())
    assert meta["command"] == "grillenberger"
    assert meta["generator"] == "PCG64"
    assert meta["params"]["p"] == 3
    assert len(meta["config_hash"]) == 64


def test_csv_uses_crlf(tmp_path):
    main(["grillenberger", "--levels", "--output", str(tmp_path)])
    assert (tmp_path / "grillenberger-levels.csv").read_bytes().startswith(b"j,l,m,r,lambda\r\n")


def test_grillenberger_dump(tmp_path):
    assert main(["grillenberger", "--dump", "--length", "30", "--output", str(tmp_path)]) == 0
    prefix = (tmp_path / "grillenberger-prefix.txt").read_text(encoding="utf-8")
    assert prefix == "012012012021102120201210012012\n"
    assert (tmp_path / "grillenberger-prefix.txt.meta.json").exists()
    assert main(["grillenberger", "--dump", "--p", "11", "--length", "5", "--output", str(tmp_path / "wide")]) == 2


def test_runs_are_byte_identical(tmp_path):
    argv = ["corrsum", "--seed", "7", "--n", "200", "--m", "1,2", "--dump-orbit", "--output", str(tmp_path)]
    assert main(argv) == 0
    first = snapshot(tmp_path)
    assert main(argv) == 0
    assert snapshot(tmp_path) == first
    assert set(first) == {"corrsum.csv", "corrsum.csv.meta.json", "orbit.csv", "orbit.csv.meta.json"}


def test_corrsum_rows(tmp_path):
    main(["corrsum", "--system", "identity", "--eps", "1/2", "--m", "1", "--n", "5", "--output", str(tmp_path)])
    rows = read_csv(tmp_path / "corrsum.csv")
    assert rows == [["eps", "m", "n", "count", "value"], ["1/2", "1", "5", "25", "1"]]


def test_config_file_and_set(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("system=tent\nx0=1/3\nn=20\nm=1\n")
    out = tmp_path / "out"
    assert main(["corrsum", "--config", str(config), "--set", "eps=1/4", "--output", str(out)]) == 0
    rows = read_csv(out / "corrsum.csv")
    assert rows[1][:3] == ["1/4", "1", "20"]


def test_unknown_key_exits_2(capsys, tmp_path):
    assert main(["graphs", "--set", "colour=red", "--output", str(tmp_path)]) == 2
    assert "colour" in capsys.readouterr().err


def test_missing_seed_exits_2(capsys, tmp_path):
    assert main(["theorem-a", "--output", str(tmp_path)]) == 2
    assert "seed: required" in capsys.readouterr().err


def test_infeasible_parameters_exit_2(tmp_path):
    assert main(["grillenberger", "--dump", "--j-max", "3", "--length", "745", "--output", str(tmp_path)]) == 2


def test_graph_check_failure_exits_1(tmp_path):
    assert main(["graphs", "verify", "--max-n", "4", "--max-k", "2", "--output", str(tmp_path)]) == 0
    assert main(["graphs", "verify", "--max-n", "4", "--max-k", "3", "--output", str(tmp_path)]) == 1
    rows = read_csv(tmp_path / "graphs.csv")
    failing = [row for row in rows[1:] if row[-1] == "false"]
    assert failing and all(row[2] != "2" for row in failing)


def test_action_flag_and_positional():
    parser = build_parser()
    args = parser.parse_args(["grillenberger", "--report"])
    assert collect_overrides(args)["action"] == "report"
    args = parser.parse_args(["grillenberger", "dump", "--set", "p=4"])
    assert collect_overrides(args) == {"p": "4", "action": "dump"}


def test_abbreviated_flags_are_rejected():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["bernoulli", "--closed"])
