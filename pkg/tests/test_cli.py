import csv
import json

import numpy as np
import pytest

import config
from cli import main

MARGIN_TABLE = {0.02: 0.094, 0.04: 0.185, 0.06: 0.274, 0.08: 0.358, 0.1: 0.437, 0.125: 0.527, 0.15: 0.607}
PHI_TABLE = {0.1: 0.39, 0.2: 0.30, 0.3: 0.25, 0.4: 0.21, 0.5: 0.18}

SMALL_SIM = """\
strategies: [random, llpp]
cycles: 1
pool_size: 100
holdout_size: 50
init_labeled: 20
batch: 10
training:
  epochs: 5
"""


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def test_margin_table_reproduces_reference_values(workdir):
    assert main(["margin-table", "--theta", str(config.REFERENCE_TABLE_SCALE), "--mc-samples", "20000",
                 "--out", "margin.csv"]) == 0
    rows = read_rows(workdir / "margin.csv")
    assert [float(row["delta"]) for row in rows] == config.MARGIN_DELTAS
    for row in rows:
        expected = MARGIN_TABLE[float(row["delta"])]
        assert row["closed_status"] == "ok"
        assert float(row["closed"]) == pytest.approx(expected, abs=0.002)
        assert float(row["quad"]) == pytest.approx(expected, abs=0.002)
        assert float(row["abs_closed_quad"]) <= 1e-8
        assert float(row["abs_series_quad"]) <= 1e-8
        assert float(row["mc_stderr"]) > 0
    assert "exponential_law" not in rows[0]


def test_margin_table_default_scale_is_close_to_reference(workdir):
    assert main(["margin-table", "--mc-samples", "0", "--out", "default.csv"]) == 0
    for row in read_rows(workdir / "default.csv"):
        assert float(row["quad"]) == pytest.approx(MARGIN_TABLE[float(row["delta"])], abs=0.005)


def test_margin_table_falls_back_to_series_at_large_shape(workdir, caplog):
    assert main(["margin-table", "--k", "24", "--deltas", "0.066", "0.66", "1.32",
                 "--mc-samples", "20000", "--out", "large.csv"]) == 0
    rows = read_rows(workdir / "large.csv")
    assert any(row["closed_status"] == "unstable" for row in rows)
    for row in rows:
        assert float(row["abs_series_quad"]) <= 1e-8
        if row["closed_status"] == "unstable":
            assert row["closed"] == row["abs_closed_quad"] == "nan"
        else:
            assert float(row["abs_closed_quad"]) <= 1e-8
    assert "margin closed form unavailable" in caplog.text


def test_margin_table_is_byte_deterministic(workdir):
    arguments = ["margin-table", "--mc-samples", "5000", "--deltas", "0.05", "0.1", "--seed", "3"]
    assert main(arguments + ["--out", "first.csv"]) == 0
    assert main(arguments + ["--out", "second.csv"]) == 0
    assert (workdir / "first.csv").read_bytes() == (workdir / "second.csv").read_bytes()


def test_margin_table_zero_gap_and_unit_shape(workdir):
    assert main(["margin-table", "--k", "1", "--theta", "0.5", "--deltas", "0", "0.5",
                 "--mc-samples", "5000", "--out", "unit.csv"]) == 0
    zero, half = read_rows(workdir / "unit.csv")
    assert zero["closed"] == zero["quad"] == zero["mc"] == "0"
    assert float(half["exponential_law"]) == pytest.approx(1 - np.exp(-1.0), abs=1e-6)
    assert float(half["closed"]) == pytest.approx(float(half["exponential_law"]), abs=1e-6)


def test_margin_table_without_monte_carlo(workdir):
    assert main(["margin-table", "--mc-samples", "0", "--deltas", "0.1", "--out", "plain.csv"]) == 0
    (row,) = read_rows(workdir / "plain.csv")
    assert row["mc"] == row["mc_stderr"] == "nan"


def test_failed_gate_exits_one(monkeypatch, caplog):
    monkeypatch.setattr(config, "MC_SIGMA_GATE", -1.0)
    assert main(["margin-table", "--mc-samples", "5000", "--deltas", "0.1", "--out", "gate.csv"]) == 1
    assert "Check failed" in caplog.text


def test_unsupported_shape_exits_two(caplog):
    assert main(["margin-table", "--k", "40", "--mc-samples", "0", "--out", "bad.csv"]) == 2
    assert "Error" in caplog.text


def test_phi_table_reproduces_reference_values(workdir):
    assert main(["phi-table", "--mc-samples", "0", "--out", "phi.csv"]) == 0
    rows = read_rows(workdir / "phi.csv")
    assert [float(row["delta"]) for row in rows] == config.PHI_DELTAS
    assert rows[0]["phi_quad"] == "0.5"
    assert rows[0]["closed_status"] == "limit"
    for row in rows[1:]:
        assert float(row["phi_quad"]) == pytest.approx(PHI_TABLE[float(row["delta"])], abs=0.01)
        assert float(row["coefficient"]) == pytest.approx(0.5 - float(row["phi_quad"]), abs=1e-5)
        assert row["closed_status"] in ("ok", "unstable")
        if row["closed_status"] == "ok":
            assert float(row["abs_closed_quad"]) <= 1e-4


def test_phi_table_flags_unstable_closed_form_at_large_shape(workdir, caplog):
    assert main(["phi-table", "--k", "16", "--deltas", "1.0", "--mc-samples", "0", "--out", "phi16.csv"]) == 0
    (row,) = read_rows(workdir / "phi16.csv")
    assert row["closed_status"] == "unstable"
    assert row["phi_closed"] == "nan"
    assert 0.0 < float(row["phi_quad"]) < 0.5
    assert "phi closed form unavailable" in caplog.text


def test_phi_table_with_monte_carlo(workdir):
    assert main(["phi-table", "--deltas", "0.3", "--mc-samples", "2000000", "--seed", "1",
                 "--out", "phi_mc.csv"]) == 0
    (row,) = read_rows(workdir / "phi_mc.csv")
    assert float(row["phi_mc"]) == pytest.approx(0.25, abs=0.02)
    assert float(row["phi_mc_stderr"]) > 0


def test_gradcheck(workdir):
    assert main(["gradcheck", "--trials", "50", "--out", "grad.csv"]) == 0
    rows = read_rows(workdir / "grad.csv")
    assert [row["objective"] for row in rows] == ["kl", "hinge"]
    for row in rows:
        assert row["trials"] == "50"
        assert float(row["max_relative_error"]) <= 1e-5

    assert main(["gradcheck", "--trials", "50", "--out", "again.csv"]) == 0
    assert (workdir / "again.csv").read_bytes() == (workdir / "grad.csv").read_bytes()


def test_gradcheck_without_trials(workdir):
    assert main(["gradcheck", "--trials", "0", "--out", "empty.csv"]) == 0
    assert (workdir / "empty.csv").read_text(encoding="utf-8") == "objective,trials,max_relative_error\n"


def test_fit(workdir):
    samples = np.random.default_rng(0).gamma(4, 0.066, size=20_000)
    (workdir / "losses.txt").write_text("\n".join(repr(float(x)) for x in samples) + "\n\n", encoding="utf-8")
    assert main(["fit", "--input", "losses.txt", "--k-max", "8", "--out", "fit.csv"]) == 0
    rows = read_rows(workdir / "fit.csv")
    assert [row["k"] for row in rows] == [str(k) for k in range(1, 9)]
    chosen = [row for row in rows if row["chosen"] == "yes"]
    assert len(chosen) == 1
    assert chosen[0]["k"] == "4"
    assert float(chosen[0]["theta"]) == pytest.approx(0.066, abs=0.002)


def test_fit_reports_the_bad_line(workdir, caplog):
    (workdir / "losses.txt").write_text("0.1\n0.2\nabc\n", encoding="utf-8")
    assert main(["fit", "--input", "losses.txt"]) == 2
    assert "line 3" in caplog.text


def test_fit_missing_file(caplog):
    assert main(["fit", "--input", "nowhere.txt"]) == 2
    assert "cannot read" in caplog.text


def test_simulate_writes_table_and_manifest(workdir):
    (workdir / "sim.yaml").write_text(SMALL_SIM, encoding="utf-8")
    assert main(["simulate", "--config", "sim.yaml", "--seed", "4", "--out", "run.csv"]) == 0
    rows = read_rows(workdir / "run.csv")
    assert list(rows[0]) == ["cycle", "strategy", "batch_mean_true_loss", "batch_std_true_loss",
                             "holdout_mse", "pool_corr"]
    assert [(row["cycle"], row["strategy"]) for row in rows] == [
        ("0", "random"), ("1", "random"), ("0", "llpp"), ("1", "llpp")]

    manifest = json.loads((workdir / "run.manifest.json").read_text(encoding="utf-8"))
    assert manifest["seed"] == 4
    assert manifest["seeds"] == [4]
    assert manifest["outputs"] == ["run.csv"]
    assert manifest["config"]["training"]["epochs"] == 5
    assert len(manifest["config_hash"]) == 64

    first = (workdir / "run.csv").read_bytes()
    assert main(["simulate", "--config", "sim.yaml", "--seed", "4", "--out", "run.csv"]) == 0
    assert (workdir / "run.csv").read_bytes() == first


def test_simulate_repeats(workdir):
    (workdir / "sim.yaml").write_text(SMALL_SIM, encoding="utf-8")
    assert main(["simulate", "--config", "sim.yaml", "--repeats", "2", "--out", "run.csv"]) == 0
    manifest = json.loads((workdir / "run.manifest.json").read_text(encoding="utf-8"))
    assert manifest["seeds"] == [0, 1]
    assert manifest["outputs"] == ["run.csv", "run.seed1.csv", "run.summary.csv"]
    summary = read_rows(workdir / "run.summary.csv")
    assert len(summary) == 4
    assert all(row["seeds"] == "2" for row in summary)
    assert len(read_rows(workdir / "run.seed1.csv")) == 4


def test_simulate_rejects_invalid_config(workdir, caplog):
    (workdir / "bad.yaml").write_text("training:\n  step: -1\n", encoding="utf-8")
    assert main(["simulate", "--config", "bad.yaml"]) == 2
    assert "training.step" in caplog.text
    assert not (workdir / "bad.manifest.json").exists()


def test_text_format(capsys):
    assert main(["gradcheck", "--trials", "3", "--format", "text"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["objective", "trials", "max_relative_error"]
    assert len(lines) == 3
    assert len({len(line) for line in lines}) == 1
