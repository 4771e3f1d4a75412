import csv
import json
from pathlib import Path

import pytest

from dispatchlab import experiment
from dispatchlab.cli import main
from dispatchlab.errors import ConfigError
from dispatchlab.experiment import EXIT_CONFIG, EXIT_INVARIANT, EXIT_SOLVER, load_config, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
PROVENANCE = ("policy", "sweep_point", "sigma", "scenario", "seed")
TABLES = ("loc_vs_sweep", "iso_surplus", "consumer_payment", "generator_profit", "volatility",
          "settlement_raw", "generator_raw", "prices_raw", "dispatch_raw")


def read_table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def m1_doc(**overrides):
    doc = json.loads((CONFIGS / "m1.json").read_text())
    doc.update(overrides)
    return doc


def write_doc(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2))
    return path


def test_m1_config_reproduces_hand_numbers(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(CONFIGS / "m1.json"), "--out", str(out), "--no-timestamp"]) == 0
    rows = {r["policy"]: r for r in read_table(out / "settlement_raw.csv")}
    assert float(rows["LMP"]["demand_payment"]) == pytest.approx(3500.0)
    assert float(rows["LMP"]["total_loc"]) == pytest.approx(0.0)
    assert float(rows["TLMP"]["merchandising_surplus"]) == pytest.approx(400.0)
    assert float(rows["TLMP"]["ramping_surplus"]) == pytest.approx(400.0)
    assert float(rows["TLMP"]["consumer_payment"]) == pytest.approx(3100.0)
    prices = [r for r in read_table(out / "prices_raw.csv") if r["policy"] == "TLMP" and r["who"] == "G1"]
    assert [float(r["price"]) for r in prices] == [10.0, 10.0]
    assert not (out / "PARTIAL").exists()
    assert all(line.startswith("PASS") or line.startswith("SKIP")
               for line in (out / "checks.txt").read_text().splitlines())


def test_m1_rolling_config(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(CONFIGS / "m1_rolling.json"), "--out", str(out), "--no-timestamp"]) == 0
    gen = {(r["policy"], r["generator"]): r for r in read_table(out / "generator_raw.csv")}
    assert float(gen[("LMP", "G1")]["loc"]) == pytest.approx(1600.0)
    assert float(gen[("MLMP", "G1")]["loc"]) == pytest.approx(1600.0)
    assert float(gen[("CMP", "G1")]["loc"]) == pytest.approx(1600.0)
    assert float(gen[("TLMP", "G1")]["loc"]) == pytest.approx(0.0)


def test_m2_config_congestion_rent(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(CONFIGS / "m2.json"), "--out", str(out), "--no-timestamp"]) == 0
    rows = {r["policy"]: r for r in read_table(out / "settlement_raw.csv")}
    assert float(rows["LMP"]["congestion_rent"]) == pytest.approx(1200.0)
    assert float(rows["LMP"]["merchandising_surplus"]) == pytest.approx(1200.0)


def test_every_row_carries_provenance(tmp_path):
    out = tmp_path / "out"
    doc = json.loads((CONFIGS / "single_bus_sigma.json").read_text())
    doc["scenario"]["count"] = 2
    doc["sweep"]["grid"] = [0.0, 0.06]
    assert main(["run", str(write_doc(tmp_path, doc)), "--out", str(out), "--no-timestamp"]) == 0
    for name in TABLES:
        rows = read_table(out / f"{name}.csv")
        assert rows, name
        for r in rows:
            assert all(r[k] != "" for k in PROVENANCE), (name, r)
    header = (out / "loc_vs_sweep.csv").read_text().splitlines()[0]
    assert header.startswith("# dispatchlab ") and "seed=" in header


def test_timestamp_line_present_by_default(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(CONFIGS / "m1.json"), "--out", str(out)]) == 0
    assert (out / "settlement_raw.csv").read_text().startswith("# generated ")


def test_empty_policy_list_is_config_error(tmp_path, capsys):
    path = write_doc(tmp_path, m1_doc(policies=[]))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "field 'policies'" in err and "line" in err


def test_config_error_reports_field_and_line(tmp_path):
    doc = m1_doc()
    doc["rolling"]["window"] = 0
    with pytest.raises(ConfigError) as exc:
        load_config(write_doc(tmp_path, doc))
    assert exc.value.field == "rolling.window"
    text = (tmp_path / "cfg.json").read_text().splitlines()
    assert '"window"' in text[exc.value.line - 1]


def test_malformed_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "schema": "dispatchlab-experiment/1",\n  "network": ,\n}')
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert exc.value.line == 3


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d["rolling"].update(window=3), "rolling.window"),
    (lambda d: d["generators"][0].update(bus="9"), None),
    (lambda d: d.update(policies=["LMP", "FOO"]), "policies.1"),
    (lambda d: d["scenario"].update(sigmas=[0.06]), "scenario.sigmas"),
    (lambda d: d["rolling"].update(mode="one_shot") or d.update(policies=["PMP"]), "policies"),
])
def test_invalid_configs_rejected(mutate, field):
    doc = m1_doc()
    mutate(doc)
    with pytest.raises(ConfigError) as exc:
        parse_config(doc)
    if field is not None:
        assert exc.value.field == field


def test_missing_profile_file(tmp_path):
    doc = json.loads((CONFIGS / "single_bus_sigma.json").read_text())
    doc["scenario"]["profile"] = "nowhere.csv"
    with pytest.raises(ConfigError):
        parse_config(doc, base_dir=tmp_path)


def test_profile_csv_config(tmp_path):
    (tmp_path / "p.csv").write_text("hour,bus,MW\n" + "".join(f"{h},1,{50 + h}\n" for h in range(1, 5)))
    doc = m1_doc(scenario={"profile": "p.csv", "sigmas": [0.0], "count": 2})
    doc["rolling"] = {"horizon": 4, "window": 2}
    cfg = parse_config(doc, base_dir=tmp_path)
    assert cfg.mean_profile[:, 0].tolist() == [51.0, 52.0, 53.0, 54.0]


def test_solver_failure_leaves_partial_marker(tmp_path, capsys):
    doc = m1_doc(scenario={"demand": [[100], [500]], "sigmas": [0]})
    out = tmp_path / "out"
    assert main(["run", str(write_doc(tmp_path, doc)), "--out", str(out)]) == EXIT_SOLVER
    marker = (out / "PARTIAL").read_text()
    assert "infeasible" in marker and "scenario=0" in marker


def test_invariant_failure_exit_code(tmp_path, monkeypatch):
    def failing(reports, tally):
        tally.add("tlmp_zero_loc", 1.0)

    monkeypatch.setattr(experiment, "check_rolling", failing)
    res = experiment.run(load_config(CONFIGS / "m1.json"), tmp_path / "out", timestamp=False)
    assert res.exit_code == EXIT_INVARIANT
    assert "FAIL tlmp_zero_loc" in (tmp_path / "out" / "checks.txt").read_text()


def test_print_schema(capsys):
    assert main(["print-schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert schema["properties"]["schema"]["const"] == experiment.SCHEMA_VERSION


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.json")):
        load_config(path)


@pytest.mark.parametrize("name", ["m1.json", "m2.json", "m1_rolling.json"])
def test_verify_micro_cases(name, capsys):
    assert main(["verify", str(CONFIGS / name), "--random-instances", "5"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS tlmp_zero_loc" in out


def test_parallel_run_matches_serial(tmp_path):
    doc = json.loads((CONFIGS / "single_bus_revelation_g2.json").read_text())
    doc["scenario"]["count"] = 2
    doc["sweep"]["grid"] = doc["sweep"]["grid"][:2]
    path = write_doc(tmp_path, doc)
    for jobs in ("1", "2"):
        assert main(["run", str(path), "--out", str(tmp_path / jobs), "--no-timestamp", "--jobs", jobs]) == 0
    for name in TABLES:
        assert (tmp_path / "1" / f"{name}.csv").read_bytes() == (tmp_path / "2" / f"{name}.csv").read_bytes()


def test_seed_override_changes_outputs(tmp_path):
    doc = json.loads((CONFIGS / "single_bus_sigma.json").read_text())
    doc["scenario"]["count"] = 2
    doc["sweep"]["grid"] = [0.06]
    path = write_doc(tmp_path, doc)
    main(["run", str(path), "--out", str(tmp_path / "a"), "--no-timestamp", "--seed", "1"])
    main(["run", str(path), "--out", str(tmp_path / "b"), "--no-timestamp", "--seed", "2"])
    a = (tmp_path / "a" / "settlement_raw.csv").read_text()
    b = (tmp_path / "b" / "settlement_raw.csv").read_text()
    assert a != b and "seed=1" in a and "seed=2" in b
