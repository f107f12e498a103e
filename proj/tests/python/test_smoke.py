import json
import math
import os
from pathlib import Path

import pytest

import rlff

FIXTURES = Path(os.environ.get("RLFF_FIXTURES", Path(__file__).resolve().parents[1] / "fixtures"))
SMOKE = Path(__file__).resolve().parents[2] / "configs" / "smoke.json"


def test_format_and_parse():
    text = "<think>plan</think> <response>I am here.</response>"
    assert rlff.format_reward(text) == 1
    assert rlff.parse_tagged(text) == ("plan", "I am here.")
    assert rlff.format_reward("I am here.") == 0
    assert rlff.parse_tagged("<response>x</response>") is None


def test_reward_arithmetic():
    assert rlff.combined_reward(0.9, 1) == pytest.approx(1.4)
    assert rlff.future_oriented_reward(0.8, 3) == pytest.approx((0.8 + 1 / 3) / 2)
    assert rlff.binarize_reward(0.5, 0.5) == 0
    with pytest.raises(rlff.InvalidValue):
        rlff.combined_reward(1.5, 1)


def test_advantages_and_kl():
    assert rlff.group_advantages([1, 0, 0, 1]) == [1, -1, -1, 1]
    assert rlff.group_advantages([2, 2]) == [0, 0]
    with pytest.raises(rlff.GroupTooSmall):
        rlff.group_advantages([1.0])
    d = -0.2
    assert rlff.kl_estimate([-1.0], [-1.2]) == pytest.approx(math.exp(d) - d - 1)


def test_critic_and_metrics():
    assert rlff.critic_scalar("Moderately Better") == 0.5
    assert rlff.critic_scalar("no idea") is None
    rep = rlff.compute_metrics([(True, 4), (False, 8)], 8)
    assert rep["success_rate"] == pytest.approx(50.0)
    assert rep["average_turns"] == pytest.approx(6.0)
    rows = rlff.threshold_sweep([0.5, 0.6, 0.4], [(0.5, "strict"), (0.5, "lenient")])
    assert [r[2] for r in rows] == pytest.approx([100 / 3, 200 / 3])


def test_loaders():
    dialogues = rlff.load_esconv(FIXTURES / "esconv_train.json")
    assert len(dialogues) == 2
    assert dialogues[0]["emotion_type"] == "anxiety"
    assert dialogues[0]["turns"][0][0] == "user"
    splits = rlff.load_extes(FIXTURES / "extes_small.json")
    assert [len(splits[k]) for k in ("train", "dev", "test")] == [8, 1, 1]
    assert rlff.extes_split_sizes(11177) == (8941, 1118, 1118)


def test_train_scorer(tmp_path):
    pairs = [(f"calm {i}", 1) for i in range(5)] + [(f"angry {i}", 0) for i in range(5)]
    s = rlff.train_scorer(pairs, learning_rate=5.0, epochs=200, batch_size=10, grad_accum_steps=1, shuffle=False)
    assert s.final_loss < 0.1
    assert s.predict("calm 9") > s.predict("angry 9")
    s.save(tmp_path / "scorer.json")
    back = rlff.load_scorer(tmp_path / "scorer.json")
    assert back.predict("calm 1") == s.predict("calm 1")
    with pytest.raises(rlff.DegenerateLabels):
        rlff.train_scorer([("a", 1), ("b", 1)])


def test_cli_simulate(tmp_path):
    cfg = json.loads(SMOKE.read_text())
    cfg["data"]["train"] = str(FIXTURES / "esconv_train.json")
    cfg["data"]["test"] = str(FIXTURES / "esconv_test.json")
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    code, out, err = rlff.run_cli(["--config", str(path), "--out", str(tmp_path / "sim"), "simulate"])
    assert code == 0, err
    rows = (tmp_path / "sim" / "d_r.jsonl").read_text().splitlines()
    assert len(rows) == 8
    code, _, _ = rlff.run_cli(["--config", str(path), "--out", str(tmp_path / "sim"), "simulate"])
    assert code == 3
