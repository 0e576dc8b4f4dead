"""Random search and one-knob sweeps, run on a pool of workers."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from scipy.stats import spearmanr

from ..datasets import generate
from .space import sample_configs
from .trial import TrialConfig, TrialError, canonical_method, run_trial

SWEEP_KINDS = {"momentum": "momentum", "noise": "invariant_noise_std", "init": "init_scale", "init_scale": "init_scale"}


def _run(job):
    return run_trial(**job)


def run_jobs(jobs, workers=1):
    """Run ``run_trial`` keyword dicts; results come back in job order."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [_run(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run, jobs))


def _seed_list(seeds):
    return list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]


def run_search(dataset, method, test_envs, n_configs, seeds, steps, space=None, hparams_seed=0,
               workers=1, configs=None):
    """Every (config, seed, test env) trial of a random search.

    ``configs`` overrides sampling with explicit hyperparameter dicts.
    """
    name = dataset.provenance.get("generator")
    if configs is None:
        if name is None:
            raise TrialError("cannot sample hyperparameters for a dataset without a generator name")
        configs = sample_configs(name, n_configs, hparams_seed, space)
    method = canonical_method(method)
    jobs = []
    for cid, hp in enumerate(configs):
        cfg = TrialConfig.from_dict({**hp, "method": method})
        for env in test_envs:
            for seed in _seed_list(seeds):
                jobs.append(dict(config=cfg, dataset=dataset, test_env=env, steps=steps, seed=seed, config_id=cid))
    return run_jobs(jobs, workers)


@dataclass
class SweepResult:
    kind: str
    values: list
    rows: list = field(default_factory=list)
    rho: float | None = None
    p_value: float | None = None

    def accuracies(self, value):
        return [r["test_acc"] for r in self.rows if r["value"] == value]


def run_sweep(kind, values, base_config, dataset_config=None, seeds=20, steps=3000, test_env="0",
              dataset="spirals", data_seed=0, workers=1):
    """Train every value x seed and report the Spearman trend of test accuracy."""
    if kind not in SWEEP_KINDS:
        raise TrialError(f"unknown sweep kind {kind!r}; expected momentum, noise or init")
    knob = SWEEP_KINDS[kind]
    values = [float(v) for v in values]
    seeds = _seed_list(seeds)
    dataset_config = dict(dataset_config or {})
    base = TrialConfig.from_dict(dict(base_config)).to_dict()
    jobs, cache = [], {}
    for value in values:
        hp, dcfg = dict(base), dict(dataset_config)
        if knob == "invariant_noise_std":
            dcfg[knob] = value
        else:
            hp[knob] = value
        key = tuple(sorted(dcfg.items()))
        if key not in cache:
            cache[key] = generate(dataset, dcfg, data_seed)
        for seed in seeds:
            jobs.append(dict(config=TrialConfig.from_dict(hp), dataset=cache[key], test_env=test_env,
                             steps=steps, seed=seed))
    records = run_jobs(jobs, workers)
    result = SweepResult(kind, values)
    pairs = zip([v for v in values for _ in seeds], [s for _ in values for s in seeds], records)
    for value, seed, rec in pairs:
        result.rows.append({"kind": kind, "value": value, "seed": seed,
                            "test_acc": 0.0 if rec.failed else rec.test_acc,
                            "val_acc": 0.0 if rec.failed else rec.val_acc, "failed": rec.failed})
    xs = [r["value"] for r in result.rows]
    ys = [r["test_acc"] for r in result.rows]
    if len(set(xs)) > 1 and len(set(ys)) > 1:
        rho, p = spearmanr(xs, ys)
        result.rho, result.p_value = float(rho), float(p)
    return result


def sweep_csv_rows(result: SweepResult):
    trend = "" if result.rho is None or math.isnan(result.rho) else result.rho
    p = "" if result.p_value is None else result.p_value
    return [dict(row, rho=trend, p_value=p) for row in result.rows]
