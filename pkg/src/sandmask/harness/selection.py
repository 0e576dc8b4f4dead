"""Model selection and mean ± standard-error tables."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from enum import Enum

import numpy as np

from .trial import TrialError, TrialRecord

METHOD_LABELS = {"none": "ERM", "and_mask": "AND-mask", "sand_mask": "SAND-mask"}


class SelectionScheme(str, Enum):
    TRAINING_DOMAIN_VALIDATION = "training_domain_validation"
    TEST_DOMAIN_ORACLE = "test_domain_oracle"

    @classmethod
    def parse(cls, value):
        aliases = {"trainval": cls.TRAINING_DOMAIN_VALIDATION, "oracle": cls.TEST_DOMAIN_ORACLE}
        if isinstance(value, cls):
            return value
        if value in aliases:
            return aliases[value]
        try:
            return cls(value)
        except ValueError:
            raise TrialError(f"unknown selection scheme {value!r}; expected trainval or oracle") from None


def _score(record: TrialRecord, scheme, audit):
    name = "val_acc" if scheme is SelectionScheme.TRAINING_DOMAIN_VALIDATION else "test_acc"
    if audit is not None:
        audit.append((record.config_id, record.seed, name))
    if record.failed:
        return 0.0
    value = getattr(record, name)
    if value is None:
        raise TrialError(f"record config {record.config_id} seed {record.seed} has no {name}")
    return float(value)


def select_model(records, scheme, audit=None):
    """Pick one record by the scheme's score; ties go to the lower config index.

    If ``audit`` is a list, every metric read is appended to it as
    ``(config_id, seed, field)``.
    """
    scheme = SelectionScheme.parse(scheme)
    records = list(records)
    if not records:
        raise TrialError("cannot select from an empty record list")
    envs = {r.test_env for r in records}
    if len(envs) > 1:
        raise TrialError(f"records mix test environments {sorted(map(str, envs))}")
    scored = [(-_score(r, scheme, audit), r.config_id, i) for i, r in enumerate(records)]
    best = min(scored)
    chosen = records[best[2]]
    summary = {
        "scheme": scheme.value,
        "candidates": len(records),
        "config_id": chosen.config_id,
        "seed": chosen.seed,
        "test_env": chosen.test_env,
        "score": -best[0],
    }
    return chosen, summary


def select_per_group(records, scheme):
    """Select within every (method, test env, seed) group."""
    groups = defaultdict(list)
    for r in records:
        groups[(r.config["method"], r.test_env, r.seed)].append(r)
    return [select_model(groups[key], scheme)[0] for key in sorted(groups, key=lambda k: (k[0], str(k[1]), k[2]))]


def mean_stderr(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise TrialError("standard error needs at least 2 seeds")
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def format_cell(mean, stderr):
    """Accuracy fractions rendered as ``xx.x ± y.y`` percentages."""
    return f"{100 * mean:.1f} ± {100 * stderr:.1f}"


def _env_order(env_ids):
    def key(e):
        try:
            return (0, float(e), e)
        except ValueError:
            return (1, 0.0, e)
    return sorted(env_ids, key=key)


def aggregate(selected):
    """Rows of mean ± stderr over seeds, one column per test env plus ``Avg``.

    ``Avg`` is the across-seed mean and stderr of each seed's average over
    test environments, so every seed must cover every test environment.
    """
    by_method = defaultdict(lambda: defaultdict(dict))
    for r in selected:
        acc = 0.0 if r.failed else r.test_acc
        by_method[r.config["method"]][r.test_env][r.seed] = acc
    envs = _env_order({e for per_env in by_method.values() for e in per_env})
    header = ["method"] + [str(e) for e in envs] + ["Avg"]
    rows = []
    for method in sorted(by_method, key=lambda m: list(METHOD_LABELS).index(m)):
        per_env = by_method[method]
        row = {"method": METHOD_LABELS[method]}
        seeds = None
        for e in envs:
            if e not in per_env:
                row[str(e)] = ""
                continue
            row[str(e)] = format_cell(*mean_stderr([per_env[e][s] for s in sorted(per_env[e])]))
            seeds = set(per_env[e]) if seeds is None else seeds & set(per_env[e])
        complete = all(e in per_env and set(per_env[e]) == seeds for e in envs)
        if not complete:
            raise TrialError(f"{METHOD_LABELS[method]}: every seed must cover every test environment")
        avg = [np.mean([per_env[e][s] for e in envs]) for s in sorted(seeds)]
        row["Avg"] = format_cell(*mean_stderr(avg))
        rows.append(row)
    return header, rows


def report_table(records, scheme):
    return aggregate(select_per_group(records, scheme))


def table_csv(header, rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
