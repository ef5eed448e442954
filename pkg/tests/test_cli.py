import json
import os
from pathlib import Path

import pytest

from fwgraph.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from fwgraph.config import ConfigError, config_from_json, config_to_json, load_config

CONFIGS = sorted(Path(__file__).resolve().parent.parent.joinpath("configs").glob("*.json"))


def _walsh_doc():
    return json.loads(Path(CONFIGS[0].parent, "star_walsh.json").read_text())


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(p)


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_validate(path, capsys):
    assert main(["validate", "--config", str(path)]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "ok"


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_config_round_trip(path):
    cfg = load_config(str(path))
    doc = config_to_json(cfg)
    again = config_to_json(config_from_json(json.loads(json.dumps(doc))))
    assert again == doc


def test_pure_jump_vertex_is_invalid(tmp_path, capsys):
    doc = _walsh_doc()
    doc["boundary"]["v"] = {"p1": 1.0, "p2": {}, "p3": 0, "p4": []}
    assert main(["validate", "--config", _write(tmp_path, doc)]) == EXIT_INVALID
    assert "pure-jump vertex unsupported" in capsys.readouterr().out


def test_unnormalized_data_is_invalid(tmp_path, capsys):
    doc = _walsh_doc()
    doc["boundary"]["v"]["p2"]["a"] = 0.6
    assert main(["validate", "--config", _write(tmp_path, doc)]) == EXIT_INVALID
    assert "invalid:" in capsys.readouterr().out


def test_bad_json_reports_line_and_column(tmp_path, capsys):
    path = _write(tmp_path, '{\n  "graph": {,\n}')
    assert main(["validate", "--config", path]) == EXIT_INVALID
    assert f"{path}:2:" in capsys.readouterr().err


def test_unknown_section_and_missing_file(tmp_path, capsys):
    doc = _walsh_doc()
    doc["extra"] = {}
    assert main(["validate", "--config", _write(tmp_path, doc)]) == EXIT_INVALID
    assert main(["validate", "--config", str(tmp_path / "nope.json")]) == EXIT_INVALID
    err = capsys.readouterr().err
    assert "unknown sections" in err and "cannot read" in err
    with pytest.raises(ConfigError):
        config_from_json([])


def test_simulate_with_zero_horizon_writes_start_only_paths(tmp_path):
    out = tmp_path / "out"
    rc = main(["simulate", "--config", str(CONFIGS[0].parent / "star_walsh.json"), "--backend", "direct",
               "--paths", "3", "--horizon", "0", "--out", str(out)])
    assert rc == EXIT_OK
    files = sorted((out / "direct").glob("path_*.csv"))
    assert len(files) == 3
    for f in files:
        rows = f.read_text().splitlines()
        assert [r.split(",")[1] for r in rows[1:]] == ["start"]
    summary = json.loads((out / "direct" / "summary.json").read_text())
    assert summary["status_counts"] == {"horizon": 3} and summary["mean_lifetime"] is None


def test_simulate_both_backends_writes_a_manifest(tmp_path):
    out = tmp_path / "out"
    rc = main(["simulate", "--config", str(CONFIGS[0].parent / "two_vertex.json"), "--paths", "4",
               "--horizon", "0.5", "--backend", "both", "--out", str(out)])
    assert rc == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["backends"]) == {"direct", "pipeline"}
    assert len(manifest["pairs"]) == 4
    for pair in manifest["pairs"]:
        assert all((out / p).is_file() for p in pair)


def test_simulate_requires_a_seed(tmp_path, capsys):
    doc = _walsh_doc()
    del doc["run"]["seed"]
    assert main(["simulate", "--config", _write(tmp_path, doc), "--paths", "2",
                 "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert "seed" in capsys.readouterr().err


def test_bad_overrides_are_invalid(tmp_path):
    cfg = str(CONFIGS[0].parent / "star_walsh.json")
    assert main(["validate", "--config", cfg, "--paths", "0"]) == EXIT_INVALID
    assert main(["validate", "--config", cfg, "--epsilon", "0.6"]) == EXIT_OK  # rays have no length limit


def test_epsilon_too_large_on_fig1(capsys):
    assert main(["validate", "--config", str(CONFIGS[0].parent / "fig1.json"), "--epsilon", "0.3"]) == EXIT_INVALID
    assert "invalid:" in capsys.readouterr().out


def test_verify_flags_the_corrupted_star(tmp_path, capsys):
    out = tmp_path / "v"
    rc = main(["verify", "--config", str(CONFIGS[0].parent / "star_walsh_corrupted.json"), "--paths", "4000",
               "--out", str(out)])
    assert rc == EXIT_RUNTIME
    reports = [json.loads(line) for line in (out / "reports.jsonl").read_text().splitlines()]
    cats = [r for r in reports if r["name"] == "direct:exit_law[v].categories"]
    assert cats and not cats[0]["passed"]
    assert all("runtime" not in r for r in reports)
    assert "FAIL" in capsys.readouterr().out


def test_verify_timings_flag(tmp_path):
    out = tmp_path / "v"
    main(["verify", "--config", str(CONFIGS[0].parent / "star_walsh.json"), "--backend", "direct",
          "--paths", "500", "--out", str(out), "--timings"])
    reports = [json.loads(line) for line in (out / "reports.jsonl").read_text().splitlines()]
    assert all("runtime" in r for r in reports)


def test_fw_trace_writes_all_stages(tmp_path):
    out = tmp_path / "t"
    assert main(["fw-trace", "--config", str(CONFIGS[0].parent / "fig1.json"), "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "trace.json").read_text())
    assert [s["stage"] for s in doc["stages"]] == ["split", "fake_cemetery", "glued", "killed", "revived", "final"]
    assert doc["final_equals_input"] is True


def test_decompose_default_and_minus(capsys):
    cfg = str(CONFIGS[0].parent / "fig1.json")
    assert main(["decompose", "--config", cfg]) == EXIT_OK
    default = json.loads(capsys.readouterr().out)
    assert main(["decompose", "--config", cfg, "--minus", "v1,v2,v3"]) == EXIT_OK
    split = json.loads(capsys.readouterr().out)
    assert default != split
    assert main(["decompose", "--config", cfg, "--minus", "v1,zz"]) == EXIT_INVALID


def test_workers_do_not_change_output(tmp_path):
    cfg = str(CONFIGS[0].parent / "jump_star.json")
    outs = []
    for w in ("1", "2"):
        out = tmp_path / f"w{w}"
        main(["simulate", "--config", cfg, "--backend", "direct", "--paths", "6", "--horizon", "1",
              "--workers", w, "--out", str(out)])
        outs.append({f.name: f.read_bytes() for f in sorted((out / "direct").iterdir())})
    assert outs[0] == outs[1]
    assert os.path.exists(tmp_path / "w1" / "direct" / "summary.json")
