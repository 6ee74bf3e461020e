import io
import subprocess
import sys

import pytest

from tpsim.analysis import read_csv
from tpsim.cli import main


def _csv(text):
    return read_csv(io.StringIO(text))


def _invoke(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_presets(capsys):
    code, out, _ = _invoke(capsys, "presets")
    rows = _csv(out)
    assert code == 0 and len(rows) == 7
    octa = next(r for r in rows if r["name"] == "Octa")
    assert int(octa["fmax_hz"]) == 168_000_000


def test_run_default_campaign(capsys, tmp_path):
    runs_csv = tmp_path / "runs.csv"
    code, out, _ = _invoke(capsys, "run", "--preset", "octa", "--n", "256", "--runs", "100",
                           "--seed", "7", "--runs-out", str(runs_csv))
    assert code == 0
    (row,) = _csv(out)
    assert row["config"] == "Octa" and row["runs"] == "100"
    assert (row["seed_first"], row["seed_last"]) == ("7", "106")
    assert int(row["bound_violations"]) == 0
    assert int(row["max_cycles"]) <= int(row["wcet_bound"])
    per_run = read_csv(runs_csv.open())
    assert [int(r["seed"]) for r in per_run] == list(range(7, 107))


def test_run_tiny_functional(capsys, tmp_path):
    trace = tmp_path / "trace.txt"
    code, _, err = _invoke(capsys, "run", "--preset", "Dual", "--n", "4", "--runs", "1",
                           "--check-functional", "--trace", str(trace))
    assert code == 0, err
    assert trace.read_text().strip()


def test_run_time_triggered_worst_jitter(capsys):
    code, out, _ = _invoke(capsys, "run", "--preset", "Quad", "--n", "32", "--runs", "3",
                           "--mode", "timetriggered", "--jitter", "worst")
    (row,) = _csv(out)
    assert code == 0 and int(row["median_cycles"]) == int(row["wcet_bound"])


def test_unknown_preset(capsys):
    code, _, err = _invoke(capsys, "run", "--preset", "Tera", "--n", "8", "--runs", "1")
    assert code != 0
    assert "Octa" in err


def test_infeasible_plan_exits_nonzero(capsys):
    code, _, err = _invoke(capsys, "run", "--preset", "Hexadeca", "--n", "8192", "--runs", "1")
    assert code == 1 and "bytes" in err


def test_config_file(capsys, tmp_path):
    path = tmp_path / "m.ini"
    path.write_text("[arch]\npreset = Quad\nname = QuadSlowDram\n[dram]\nbase_latency_cycles = 40\n")
    code, out, _ = _invoke(capsys, "run", "--config", str(path), "--n", "16", "--runs", "2")
    (row,) = _csv(out)
    assert code == 0 and row["config"] == "QuadSlowDram" and row["dram_base_latency_cycles"] == "40"


def test_sweep_scaling(capsys):
    code, out, _ = _invoke(capsys, "sweep", "--n", "128", "--runs", "10")
    rows = _csv(out)
    assert code == 0 and [r["config"] for r in rows] == ["Dual", "Quad", "Octa", "Hexadeca"]
    medians = [int(r["median_cycles"]) for r in rows]
    assert medians[0] > medians[1] > medians[2]


def test_sweep_single_equals_run(capsys):
    _, sweep_out, _ = _invoke(capsys, "sweep", "--presets", "Quad", "--n", "32", "--runs", "5", "--seed", "3")
    _, run_out, _ = _invoke(capsys, "run", "--preset", "Quad", "--n", "32", "--runs", "5", "--seed", "3")
    assert sweep_out == run_out


def test_roofline(capsys):
    code, out, _ = _invoke(capsys, "roofline", "--clock-hz", "100e6")
    rows = _csv(out)
    assert code == 0
    peaks = {float(r["peak_ops_per_sec"]) for r in rows}
    assert len(peaks) == 1
    ridges = {r["config"]: float(r["ridge_point"]) for r in rows}
    assert ridges["Fast"] > ridges["Dual"] > ridges["Quad"] > ridges["Octa"] > ridges["Hexadeca"]
    grids = {}
    for r in rows:
        grids.setdefault(r["config"], []).append(r["operational_intensity"])
    assert len({tuple(g) for g in grids.values()}) == 1


def test_plan_output(capsys):
    code, out, _ = _invoke(capsys, "plan", "--preset", "Dual", "--n", "8", "--block-width", "4")
    assert code == 0
    assert "block_width=4 passes=1" in out


def test_reproducible_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"s{k}.csv"
        subprocess.run([sys.executable, "-m", "tpsim", "run", "--preset", "Octa", "--n", "64",
                        "--runs", "20", "--seed", "5", "--out", str(path)], check=True)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_missing_config_flag():
    with pytest.raises(SystemExit) as err:
        main(["run", "--n", "8"])
    assert err.value.code == 2
