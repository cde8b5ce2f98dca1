import json

import pytest

from certlab.cli import main


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"n": 4, "T": 400, "seeds": 2, "runs_per_seed": 2,
                                "policies": ["single_stage", "sample_split"],
                                "sweep_axis": "T", "sweep_values": [400, 800]}))
    return path


def test_simulate_csv(config, tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert main(["simulate", "--config", str(config), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("policy,sweep_axis") and len(lines) == 5


def test_simulate_json_stdout(config, capsys):
    assert main(["simulate", "--config", str(config), "--format", "json", "--master-seed", "7"]) == 0
    assert len(json.loads(capsys.readouterr().out)) == 4


def test_simulate_raw(config, capsys):
    assert main(["simulate", "--config", str(config), "--raw"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 1 + 2 * 2 * 2 * 2


def test_master_seed_override(config, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["simulate", "--config", str(config), "--out", str(a), "--master-seed", "1"])
    main(["simulate", "--config", str(config), "--out", str(b), "--master-seed", "2"])
    assert a.read_text() != b.read_text()


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seeds": 0}')
    assert main(["simulate", "--config", str(bad)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["figure", "fig99", "--out", str(tmp_path)]) == 2


def test_verify_instance(tmp_path, capsys):
    inst = tmp_path / "i.json"
    inst.write_text(json.dumps({"means": [0.7, 0.4], "pulls_per_arm": 2, "s2": 20}))
    assert main(["verify", "--instance", str(inst)]) == 0
    reports = json.loads(capsys.readouterr().out)
    assert {r["claim"] for r in reports} == {"lemma2_top_k_counterpart", "theorem1_top_k_optimal"}
    assert all(r["verdict"] == "pass" for r in reports)


def test_verify_failure_exit_3(tmp_path, monkeypatch, capsys):
    from certlab import verification
    monkeypatch.setattr(verification, "instance_reports",
                        lambda inst: [verification.BoundReport.make("x", 1.0, 0.0)])
    inst = tmp_path / "i.json"
    inst.write_text(json.dumps({"means": [0.7], "pulls_per_arm": 1, "s2": 5}))
    assert main(["verify", "--instance", str(inst)]) == 3


def test_figure_writes_table(tmp_path, monkeypatch, capsys):
    from certlab import harness
    real = harness.figure_presets

    def tiny():
        import dataclasses
        return {k: [dataclasses.replace(c, seeds=1, runs_per_seed=2) for c in v]
                for k, v in real().items()}
    monkeypatch.setattr(harness, "figure_presets", tiny)
    assert main(["figure", "fig_box", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "fig_box.csv").exists()
    assert len((tmp_path / "fig_box_raw.csv").read_text().splitlines()) == 1 + 3 * 2
