import json

import pytest

from har_guard.cli import COMMANDS, main


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"styles": ["IMUGPT2"], "attacks": [{"id": "prompt_concatenation"}, {"id": "drift"}],
                                "trials_per_cell": 2, "seed": 3, "bootstrap_n": 12}))
    return path


def test_eval_writes_three_reports(tmp_path, config):
    out = tmp_path / "out"
    assert main(["eval", "--config", str(config), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["report.csv", "report.json", "report.md"]


def test_eval_twice_is_byte_identical(tmp_path, config):
    for name in ("a", "b"):
        assert main(["eval", "--config", str(config), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_missing_config_is_usage_error(tmp_path, capsys):
    assert main(["eval", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    assert "usage error" in capsys.readouterr().err


@pytest.mark.parametrize("command", COMMANDS)
def test_help_exits_zero(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    assert "--out" in capsys.readouterr().out


def test_bad_flag_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--bogus"])
    assert exc.value.code == 2


def test_http_without_token_is_runtime_error(tmp_path, config, monkeypatch, capsys):
    monkeypatch.delenv("HG_CLI_TOKEN", raising=False)
    monkeypatch.setenv("HAR_GUARD_ENDPOINT", "http://127.0.0.1:9/v1/chat")
    rc = main(["eval", "--config", str(config), "--out", str(tmp_path / "o"), "--backend", "http",
               "--auth-env", "HG_CLI_TOKEN"])
    assert rc == 1
    assert "HG_CLI_TOKEN" in capsys.readouterr().err


def test_gen_attack_defend_report_pipeline(tmp_path, config):
    out = tmp_path / "o"
    args = ["--config", str(config), "--out", str(out)]
    assert main(["gen", *args]) == 0
    assert main(["attack", *args]) == 0
    corpus = [json.loads(l) for l in (out / "corpus.jsonl").read_text().splitlines()]
    assert len(corpus) == 4 and all(r["was_attacked"] for r in corpus)
    assert main(["defend", *args, "--corpus", str(out / "corpus.jsonl")]) == 0
    assert set(json.loads((out / "timing.json").read_text())) >= {"Sanitizer", "Planning"}
    assert main(["eval", *args]) == 0
    rep = tmp_path / "rep"
    assert main(["report", "--records", str(out / "report.json"), "--out", str(rep), "--format", "md"]) == 0
    assert [p.name for p in rep.iterdir()] == ["report.md"]


def test_set_override_changes_trials(tmp_path, config):
    out = tmp_path / "o"
    assert main(["eval", "--config", str(config), "--out", str(out), "--set", "trials_per_cell=1"]) == 0
    assert len(json.loads((out / "report.json").read_text())["records"]) == 2
