import json

import numpy as np
import pytest

from dvdkit.core import Rng
from dvdkit.errors import InvalidInput
from dvdkit.rl import PreferencePair, RolloutGroup, ToyPolicy, filter_rollouts
from dvdkit.rl.fixtures import read_fixtures, read_records, record_accuracy, write_fixtures


def test_round_trip(tmp_path):
    pol = ToyPolicy.random(Rng(0))
    group = RolloutGroup.from_policy(1, [(1, 2), (3,), (0, 0, 4)], [1.0, 0.0, 1.0], pol)
    pair = PreferencePair((1, 2), (2,), -1.0, -2.0, -1.5, -1.5, query_id=2)
    path = tmp_path / "fx.jsonl"
    write_fixtures(path, [group, pair])
    lines = path.read_text().splitlines()
    assert [json.loads(x)["kind"] for x in lines] == ["rollout", "preference"]
    groups, pairs = read_fixtures(path)
    assert groups[0].responses == group.responses
    np.testing.assert_array_equal(groups[0].rewards, group.rewards)
    for a, b in zip(groups[0].old_logprobs, group.old_logprobs):
        np.testing.assert_array_equal(a, b)
    assert pairs == [pair]


def test_accuracy_from_rewards_or_field(tmp_path):
    path = tmp_path / "acc.jsonl"
    recs = [
        {"kind": "rollout", "query_id": 0, "responses": [[1], [2]], "rewards": [1, 0], "old_logprobs": [[-1], [-1]]},
        {"kind": "rollout", "query_id": 1, "responses": [[1], [2]], "rewards": [1, 1], "old_logprobs": [[-1], [-1]],
         "accuracy": 0.9},
    ]
    write_fixtures(path, recs)
    got = read_records(path)
    assert [record_accuracy(r) for r in got] == [0.5, 0.9]
    assert filter_rollouts(got, key=record_accuracy) == got[:1]


def test_bad_records(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"kind": "rollout"\n')
    with pytest.raises(InvalidInput):
        read_records(path)
    path.write_text('{"kind": "other"}\n')
    with pytest.raises(InvalidInput):
        read_fixtures(path)
