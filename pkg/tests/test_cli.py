import csv
import json
import subprocess
import sys

import pytest

from pspin_replica.cli import COMMANDS, CSV_COLUMNS, SCHEMAS, main


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out)])
    return code, out


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_schemas_cover_commands():
    assert set(SCHEMAS) == set(COMMANDS) == set(CSV_COLUMNS)


def test_rs_max_high_temperature(tmp_path):
    code, out = run(tmp_path, "rs-max", "--set", "p=2", "--set", "beta=0.3", "--set", "h=0")
    assert code == 0
    rows = read_csv(out / "rs-max.csv")
    assert float(rows[0]["q0"]) == 0.0
    report = json.loads((out / "rs-max.json").read_text())
    assert set(report) == {"command", "config", "results", "margins", "timings"}
    assert "grid" in report["config"]["defaulted"]


def test_bounds_strict_instance(tmp_path):
    code, out = run(tmp_path, "bounds", "--set", "u_vec=0.5,-0.2", "--set", "h=0")
    assert code == 0
    report = json.loads((out / "bounds.json").read_text())
    assert report["results"]["strict"] is True
    assert report["results"]["holder_gap"] > 0
    assert all("value" in m and "ok" in m for m in report["margins"])


def test_oracle_overlap_rows(tmp_path):
    code, out = run(tmp_path, "oracle-overlap", "--set", "a=2", "--set", "N=100")
    assert code == 0
    rows = read_csv(out / "oracle-overlap.csv")
    assert len(rows) == 201
    assert list(rows[0]) == CSV_COLUMNS["oracle-overlap"]
    assert abs(sum(float(r["prob"]) for r in rows) - 1) <= 1e-12


def test_byte_identical_reruns(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}"
        assert main(["mc-moment", "--seed", "3", "--set", "n_samples=40", "--set", "N=8", "--out", str(out)]) == 0
        outs.append(out)
    for name in ("mc-moment.csv", "mc-moment.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_config_file_and_override_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep\np = 2\nbeta = 0.9  # hot\nh = 0.4\na = 2\n")
    code, out = run(tmp_path, "rs-max", "--config", str(cfg), "--set", "beta=0.3")
    assert code == 0
    values = json.loads((out / "rs-max.json").read_text())["config"]["values"]
    assert values["beta"] == 0.3 and values["h"] == 0.4


def test_config_errors(tmp_path, capsys):
    code, _ = run(tmp_path, "rs-max", "--set", "colour=blue")
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "ConfigError"
    assert run(tmp_path, "rs-max", "--set", "beta=-1")[0] == 2
    assert run(tmp_path, "rs-max", "--set", "grid=10")[0] == 2
    assert run(tmp_path, "chain-check", "--set", "a=3")[0] == 2
    assert run(tmp_path, "rs-max", "--seed", "4")[0] == 2


def test_budget_exit_code(tmp_path):
    assert run(tmp_path, "oracle-overlap", "--set", "N=401")[0] == 3


def test_margin_violation_exit_code(tmp_path):
    # unequal moduli but a degenerate field: the strict Hoelder gap cannot be positive
    code, out = run(tmp_path, "bounds", "--set", "beta=1e-9", "--set", "u_vec=0.5,-0.2")
    assert code == 4
    assert (out / "bounds.json").exists()


@pytest.mark.parametrize("command,extra", [
    ("crit-solve", ["--set", "h=0.1"]),
    ("oracle-moment", ["--set", "N_list=10,20", "--set", "h=0.1"]),
    ("oracle-monotone", ["--set", "N=30"]),
    ("chain-check", ["--set", "N=8"]),
    ("mc-overlap", ["--set", "n_samples=30", "--set", "N=6", "--threads", "2"]),
    ("rate", ["--set", "N_list=50,100"]),
])
def test_other_commands_run(tmp_path, command, extra):
    code, out = run(tmp_path, command, *extra)
    assert code == 0
    rows = read_csv(out / f"{command}.csv")
    assert rows and list(rows[0]) == CSV_COLUMNS[command]


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "pspin_replica", "rate", "--set", "N_list=20,40",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "rate.csv").read_text().startswith("N,k,u_N,rate\n")
