import json

import pytest

from ris_resilience.cli import build_parser, load_spec, main, parse_seed_list
from ris_resilience.config import ConfigError


def test_parse_seed_list_forms():
    assert parse_seed_list("0-3") == (0, 1, 2, 3)
    assert parse_seed_list("1,4,7") == (1, 4, 7)
    assert parse_seed_list("5") == (5,)
    assert parse_seed_list("0-2,9") == (0, 1, 2, 9)
    with pytest.raises(ConfigError):
        parse_seed_list(",")


def test_load_spec_from_json(tmp_path, monkeypatch):
    monkeypatch.delenv("RIS_RESILIENCE_SEEDS", raising=False)
    monkeypatch.delenv("RIS_RESILIENCE_OUT", raising=False)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "system": {"num_ris_elements": 16, "qos_rate_bps": 4e6},
        "experiment": {"num_blockages": 2, "seeds": [3, 4]},
    }))
    args = build_parser().parse_args(["adapt", "--config", str(cfg),
                                      "--method", "baseline", "--out", "somewhere"])
    spec = load_spec(args)
    assert spec.system.num_ris_elements == 16
    assert spec.num_blockages == 2
    assert spec.seeds == (3, 4)
    assert spec.methods == ("baseline",)
    assert spec.out_dir == "somewhere"


def test_load_spec_from_toml(tmp_path, monkeypatch):
    monkeypatch.delenv("RIS_RESILIENCE_SEEDS", raising=False)
    monkeypatch.delenv("RIS_RESILIENCE_OUT", raising=False)
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('[system]\nnum_ris_elements = 25\n\n'
                   '[experiment]\nmethods = ["proposed"]\n')
    args = build_parser().parse_args(["scale", "--config", str(cfg),
                                      "--seeds", "0-1", "--out", "o"])
    spec = load_spec(args)
    assert spec.system.num_ris_elements == 25
    assert spec.methods == ("proposed",)
    assert spec.seeds == (0, 1)


def test_env_overrides_win(tmp_path, monkeypatch):
    monkeypatch.setenv("RIS_RESILIENCE_SEEDS", "7,8")
    monkeypatch.setenv("RIS_RESILIENCE_OUT", str(tmp_path / "env_out"))
    args = build_parser().parse_args(["adapt", "--seeds", "0-5", "--out", "cli_out"])
    spec = load_spec(args)
    assert spec.seeds == (7, 8)
    assert spec.out_dir.endswith("env_out")


def test_config_error_exit_code(tmp_path, monkeypatch):
    monkeypatch.delenv("RIS_RESILIENCE_SEEDS", raising=False)
    monkeypatch.delenv("RIS_RESILIENCE_OUT", raising=False)
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"system": {"num_ris_elements": 12}}))  # not square
    assert main(["adapt", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_verify_manifest_missing_file():
    assert main(["verify-manifest", "/nonexistent/manifest.json"]) == 2
