import json

import pytest
import yaml

from storage_sharing.cli import main
from storage_sharing.ingest import synthetic_meter_frame
from storage_sharing.scenario import load_scenario

UNIFORM_PAIR = {
    "tariff": {"pi_h": 1.0, "pi_l": 0.0, "pi_s": 0.3},
    "demand": {
        "coupling": "independent",
        "marginals": [{"kind": "uniform", "a": 0.0, "b": 1.0}, {"kind": "uniform", "a": 0.0, "b": 1.0}],
    },
    "monte_carlo": {"days": 20000, "seed": 3},
    "analysis": {
        "gamma_sweep": [0.2, 0.5, 0.8],
        "stability_partitions": [[[0], [1]]],
        "join_entrant": {"kind": "uniform"},
    },
}


def _scenario(tmp_path, data=UNIFORM_PAIR, name="s.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_standalone_json(tmp_path, capsys):
    code, out, _ = _run(capsys, "standalone", "--scenario", _scenario(tmp_path))
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == "1" and doc["command"] == "standalone"
    assert len(doc["scenario_hash"]) == 64
    firms = doc["result"]["firms"]
    assert firms[0]["C_o"] == pytest.approx(0.7)
    sweep = {row["gamma"]: row for row in doc["result"]["gamma_sweep"]}
    assert sweep[0.5]["C_c"] == pytest.approx(sweep[0.5]["D_o"], abs=1e-9)
    assert sweep[0.2]["D_o"] > sweep[0.2]["C_c"]


def test_nash_is_deterministic(tmp_path, capsys):
    s = _scenario(tmp_path)
    _, a, _ = _run(capsys, "nash", "--scenario", s, "--threads", "1")
    _, b, _ = _run(capsys, "nash", "--scenario", s, "--threads", "3")
    assert a == b
    doc = json.loads(a)["result"]
    assert set(doc["Q"]) == {"estimate", "stderr", "days", "seed"}
    assert doc["stability"][0]["stable"]


def test_seed_and_days_override(tmp_path, capsys):
    s = _scenario(tmp_path)
    _, out, err = _run(capsys, "nash", "--scenario", s, "--seed", "9", "--days", "5000")
    q = json.loads(out)["result"]["Q"]
    assert q["seed"] == 9 and q["days"] == 5000
    assert "warning" in err


def test_too_few_days_rejected(tmp_path, capsys):
    code, _, err = _run(capsys, "nash", "--scenario", _scenario(tmp_path), "--days", "500")
    assert code == 2 and "minimum" in err


def test_no_arbitrage_exit(tmp_path, capsys):
    data = dict(UNIFORM_PAIR, tariff={"pi_h": 1.0, "pi_l": 0.0, "pi_s": 1.0})
    code, _, err = _run(capsys, "standalone", "--scenario", _scenario(tmp_path, data))
    assert code == 2 and "no arbitrage" in err


def test_validation_error_path(tmp_path, capsys):
    data = dict(UNIFORM_PAIR, demand={"coupling": "independent", "marginals": [{"kind": "uniform", "z": 1}]})
    code, _, err = _run(capsys, "standalone", "--scenario", _scenario(tmp_path, data))
    assert code == 2 and "demand.marginals.0.uniform.z" in err


def test_simulate_writes_ledger(tmp_path, capsys):
    out = tmp_path / "out"
    code, _, _ = _run(
        capsys, "simulate", "--scenario", _scenario(tmp_path), "--days", "1000", "--allocation", "standalone", "--out", out
    )
    assert code == 0
    assert (out / "ledger.csv").read_text().count("\n") == 2001
    summary = json.loads((out / "summary.json").read_text())
    assert summary["capacities"] == pytest.approx([0.7, 0.7], abs=0.05)


def test_simulate_allocation_file(tmp_path, capsys):
    alloc = tmp_path / "a.json"
    alloc.write_text(json.dumps([0.1, 0.2]))
    code, out, _ = _run(capsys, "simulate", "--scenario", _scenario(tmp_path), "--days", "1000", "--allocation", alloc)
    assert code == 0
    assert json.loads(out)["result"]["capacities"] == [0.1, 0.2]


def test_verify_exit_codes(tmp_path, capsys):
    s = _scenario(tmp_path)
    assert _run(capsys, "verify", "--scenario", s)[0] == 0
    assert _run(capsys, "verify", "--scenario", s, "--allocation", "zero")[0] == 3


def test_join_and_savings(tmp_path, capsys):
    s = _scenario(tmp_path)
    code, out, _ = _run(capsys, "join", "--scenario", s)
    assert code == 0
    doc = json.loads(out)["result"]
    assert doc["q_after"]["estimate"] > doc["q_before"]["estimate"]
    code, out, _ = _run(capsys, "savings", "--scenario", s)
    doc = json.loads(out)["result"]
    assert doc["mean_delta_s"] >= doc["mean_delta_ns"]


def test_ingest_then_nash(tmp_path, capsys):
    meter = tmp_path / "meter.csv"
    synthetic_meter_frame(3, days=90, seed=4).to_csv(meter, index=False)
    out = tmp_path / "cohort"
    code, stdout, _ = _run(capsys, "ingest", "--data", meter, "--out", out, "--window", "12:00-18:00")
    assert code == 0
    assert (out / "demand_matrix.csv").exists() and (out / "ingest.json").exists()
    scenario = {
        "tariff": {"pi_h": 54.0, "pi_l": 21.5, "pi_s": 10.0},
        "demand": {"coupling": "paired-empirical", "data": {"matrix": "cohort/demand_matrix.csv"}},
        "analysis": {"alignment": False},
    }
    code, stdout, _ = _run(capsys, "nash", "--scenario", _scenario(tmp_path, scenario))
    assert code == 0
    assert json.loads(stdout)["result"]["Q"]["days"] == 90


def test_ingest_bad_file(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,firm_id,kw\n2024-01-01 00:00,a,-1\n2024-01-01 00:15,a,1\n")
    code, _, err = _run(capsys, "ingest", "--data", bad)
    assert code == 2 and "line(s) 2" in err


def test_scenario_hash_changes_with_seed(tmp_path):
    s = _scenario(tmp_path)
    assert load_scenario(s).digest() != load_scenario(s, seed=4).digest()
    assert load_scenario(s).digest() == load_scenario(s).digest()


def test_scenario_requires_one_source(tmp_path):
    from pydantic import ValidationError

    data = dict(UNIFORM_PAIR, demand={"coupling": "transform", "marginals": [{"kind": "uniform"}]})
    with pytest.raises(ValidationError):
        load_scenario(_scenario(tmp_path, data))
