"""Line-delimited JSON fixtures for rollout groups and preference pairs.

One record per line; see docs/fixtures.md for the schema.
"""
from __future__ import annotations

import json
from pathlib import Path

from ..errors import InvalidInput
from .gspo import RolloutGroup, query_accuracy
from .losses import PreferencePair


def rollout_to_record(group: RolloutGroup, accuracy: float | None = None) -> dict:
    rec = {
        "kind": "rollout",
        "query_id": group.query_id,
        "responses": [list(r) for r in group.responses],
        "rewards": group.rewards.tolist(),
        "old_logprobs": [lp.tolist() for lp in group.old_logprobs],
    }
    if accuracy is not None:
        rec["accuracy"] = accuracy
    return rec


def preference_to_record(pair: PreferencePair) -> dict:
    return {
        "kind": "preference",
        "query_id": pair.query_id,
        "chosen": list(pair.chosen),
        "rejected": list(pair.rejected),
        "policy_logprob_chosen": pair.policy_logprob_chosen,
        "policy_logprob_rejected": pair.policy_logprob_rejected,
        "ref_logprob_chosen": pair.ref_logprob_chosen,
        "ref_logprob_rejected": pair.ref_logprob_rejected,
    }


def record_to_object(rec: dict):
    kind = rec.get("kind")
    if kind == "rollout":
        return RolloutGroup(rec["query_id"], rec["responses"], rec["rewards"], rec["old_logprobs"])
    if kind == "preference":
        return PreferencePair(
            rec["chosen"],
            rec["rejected"],
            rec.get("policy_logprob_chosen", 0.0),
            rec.get("policy_logprob_rejected", 0.0),
            rec.get("ref_logprob_chosen", 0.0),
            rec.get("ref_logprob_rejected", 0.0),
            rec.get("query_id", 0),
        )
    raise InvalidInput(f"unknown record kind {kind!r}")


def record_accuracy(rec: dict) -> float:
    if "accuracy" in rec:
        return float(rec["accuracy"])
    return query_accuracy(rec["rewards"])


def write_fixtures(path, objects) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objects:
            if isinstance(obj, RolloutGroup):
                rec = rollout_to_record(obj)
            elif isinstance(obj, PreferencePair):
                rec = preference_to_record(obj)
            else:
                rec = obj
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_records(path) -> list[dict]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"{path}:{lineno}: {exc}") from exc
    return records


def read_fixtures(path) -> tuple[list[RolloutGroup], list[PreferencePair]]:
    groups, pairs = [], []
    for rec in read_records(path):
        obj = record_to_object(rec)
        (groups if isinstance(obj, RolloutGroup) else pairs).append(obj)
    return groups, pairs

