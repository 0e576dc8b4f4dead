"""JSON-lines persistence for trial records."""

from __future__ import annotations

import json

from .trial import TrialRecord


def dumps_record(record: TrialRecord) -> str:
    return json.dumps(record.to_dict(), sort_keys=True, allow_nan=False)


def write_records(records, path, append=False):
    with open(path, "a" if append else "w") as fh:
        for record in records:
            fh.write(dumps_record(record) + "\n")


def read_records(path):
    with open(path) as fh:
        return [TrialRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
