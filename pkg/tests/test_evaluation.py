import json

import pytest
from hypothesis import given, settings, strategies as st

from har_guard.attacks import AttackId, AttackSpec
from har_guard.backends import MockBackend
from har_guard.errors import ParameterError
from har_guard.evaluation import (NA, CampaignConfig, HazardMatrix, TrialRecord, attack_success_rate, category_hs,
                                  compute_metrics, detection_accuracy, emit_report, load_records, parse_csv,
                                  recovery_rate, render_csv, render_md, run_campaign)


def _rec(trial, attacked_pred, defended_pred, detected, attack="prompt_concatenation", category="prompt",
         true="walk", benign="walk", style="LLaSA"):
    hs = None if defended_pred == true else HazardMatrix()(true, defended_pred)
    return TrialRecord(style, attack, category, trial, true, benign, attacked_pred, defended_pred, detected,
                       False, True, hs)


FOUR = [
    _rec(0, "walk", "walk", False),
    _rec(1, "sit", "walk", True),
    _rec(2, "run", "walk", True),
    _rec(3, "walk", "walk", False),
]


def test_four_record_fixture():
    assert detection_accuracy(FOUR) == pytest.approx(0.75)
    assert detection_accuracy(FOUR, "adversarial_only") == pytest.approx(0.5)
    assert attack_success_rate(FOUR, defended=False) == pytest.approx(0.5)
    assert attack_success_rate(FOUR, defended=True) == 0.0
    assert recovery_rate(FOUR) == 1.0


def test_no_successful_attack_leaves_rr_undefined():
    recs = [_rec(i, "walk", "walk", False) for i in range(3)]
    assert attack_success_rate(recs, defended=False) == 0.0
    assert recovery_rate(recs) is None
    assert compute_metrics(recs)["overall"]["RR"] is None
    assert f",{NA}," in render_csv(compute_metrics(recs))


def test_hazard_defaults_and_validation():
    m = HazardMatrix()
    assert m("walk", "walk") == 1 and m("sit", "stand") == 2
    assert m("walk", "run") == 3 and m("walk", "sit") == 4
    assert m("walk", "a poem") == 4
    assert HazardMatrix(overrides={"walk->run": 5})("walk", "run") == 5
    with pytest.raises(ParameterError):
        HazardMatrix(overrides={"walk->walk": 3})
    with pytest.raises(ParameterError):
        HazardMatrix(overrides={"walk->run": 6})


def test_category_hs_is_mean_of_attack_means():
    assert category_hs([2.0, 4.0, None]) == 3.0
    assert category_hs([None]) is None


@settings(max_examples=30, deadline=None)
@given(st.permutations(FOUR + [_rec(4, "sit", "sit", False, attack="drift", category="signal")]))
def test_metrics_are_permutation_invariant(records):
    base = FOUR + [_rec(4, "sit", "sit", False, attack="drift", category="signal")]
    assert compute_metrics(records) == compute_metrics(base)


def test_csv_round_trip_matches_json_metrics(tmp_path):
    metrics = compute_metrics(FOUR)
    rows = parse_csv(render_csv(metrics))
    for row, cell in zip(rows, metrics["cells"]):
        assert row == {k: cell[k] for k in row}
    emit_report(FOUR, metrics, tmp_path)
    assert load_records(tmp_path / "report.json") == FOUR
    assert json.loads((tmp_path / "report.json").read_text())["metrics"] == json.loads(json.dumps(metrics))


def test_markdown_uses_arrow_and_omits_empty_sections():
    md = render_md(compute_metrics(FOUR))
    assert "| 50.0% → 0.0% |" in md
    assert "## Per category" in md and "| prompt |" in md
    assert "| signal |" not in md


def test_unknown_report_format_is_rejected(tmp_path):
    with pytest.raises(ParameterError):
        emit_report(FOUR, compute_metrics(FOUR), tmp_path, formats=("xml",))
    assert not list(tmp_path.iterdir())


def test_config_validation():
    with pytest.raises(ParameterError):
        CampaignConfig.from_dict({"styles": ["LLaSA"], "attacks": "all"})
    with pytest.raises(ParameterError):
        CampaignConfig.from_dict({"styles": ["LLaSA"], "attacks": "all", "seed": 0, "colour": "red"})
    with pytest.raises(ParameterError):
        CampaignConfig(["LLaSA"], [], seed=0)
    with pytest.raises(ParameterError):
        CampaignConfig(["llasa"], [AttackSpec(AttackId.DRIFT)])
    with pytest.raises(ParameterError):
        CampaignConfig(["LLaSA"], [AttackSpec(AttackId.DRIFT)], trials_per_cell=0)
    cfg = CampaignConfig.from_dict({"styles": ["LLaSA"], "attacks": "all", "seed": 3})
    assert len(cfg.attacks) == 15
    assert CampaignConfig.from_dict(cfg.to_dict()) == cfg


@pytest.fixture(scope="module")
def small_campaign():
    cfg = CampaignConfig(["IMUGPT2"], [AttackSpec(AttackId.PROMPT_CONCATENATION)], trials_per_cell=3, seed=5,
                         bootstrap_n=12)
    return cfg, run_campaign(cfg, MockBackend())


def test_one_cell_three_trials(small_campaign):
    cfg, records = small_campaign
    assert len(records) == 3
    assert [r.trial for r in records] == [0, 1, 2]
    assert all(r.was_attacked for r in records)


def test_campaign_is_deterministic(small_campaign):
    cfg, records = small_campaign
    assert run_campaign(cfg, MockBackend(), jobs=3) == records
