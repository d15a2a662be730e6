"""Execution trace: JSON Lines records with a global sequence number."""

from __future__ import annotations

import json
from pathlib import Path

KINDS = ("deliver", "fire", "emit", "guarantee", "status")


class Trace:
    def __init__(self):
        self.records: list[dict] = []

    def record(self, kind: str, **fields) -> dict:
        if kind not in KINDS:
            raise ValueError(f"unknown trace kind {kind!r}")
        rec = {"seq": len(self.records), "kind": kind, **fields}
        self.records.append(rec)
        return rec

    def of_kind(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["kind"] == kind]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def read_trace(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line]
