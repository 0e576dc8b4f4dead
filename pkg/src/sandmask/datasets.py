"""Synthetic multi-environment datasets and environment-wise splits.

Two generators are provided:

* ``gen_spirals``: two interleaved spirals in two invariant dimensions, plus one
  shortcut block per environment that encodes the label only inside its own
  environment and is standard-normal noise everywhere else.
* ``gen_synthetic_cmnist``: a feature-vector stand-in for Colored MNIST. A core
  vector determines the clean label, 25% label noise is applied, and a colour
  block agrees with the observed label with an environment-specific rate.

Datasets round-trip through a directory of ``env_<id>.csv`` files plus a
``manifest.json``.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import InitVar, asdict, dataclass, field

import numpy as np

SHORTCUT_JITTER = 0.1


class DatasetError(ValueError):
    pass


@dataclass
class Environment:
    env_id: str
    features: np.ndarray
    labels: np.ndarray


@dataclass
class EnvDataset:
    environments: list
    feature_dim: int
    num_classes: int
    provenance: dict = field(default_factory=dict)
    check: InitVar[bool] = True

    def __post_init__(self, check):
        if not check:
            return
        for env in self.environments:
            env.features = np.asarray(env.features, dtype=np.float64)
            env.labels = np.asarray(env.labels, dtype=np.int64)
            if env.features.ndim != 2 or env.features.shape[1] != self.feature_dim:
                raise DatasetError(f"env {env.env_id}: features must be (N, {self.feature_dim})")
            if env.labels.shape != (env.features.shape[0],):
                raise DatasetError(f"env {env.env_id}: label count does not match feature rows")
            if not np.all(np.isfinite(env.features)):
                raise DatasetError(f"env {env.env_id}: non-finite features")
            if env.labels.size and (env.labels.min() < 0 or env.labels.max() >= self.num_classes):
                raise DatasetError(f"env {env.env_id}: labels outside [0, {self.num_classes})")
            if np.unique(env.labels).size != self.num_classes:
                raise DatasetError(f"env {env.env_id}: every class needs at least one sample")

    @property
    def env_ids(self):
        return [env.env_id for env in self.environments]

    def env(self, env_id):
        for env in self.environments:
            if env.env_id == str(env_id):
                return env
        raise DatasetError(f"unknown environment {env_id!r}; known: {self.env_ids}")

    def subset(self, env_ids):
        wanted = [str(e) for e in env_ids]
        # environments were validated on the way in; re-checking would touch their data
        return EnvDataset([self.env(e) for e in wanted], self.feature_dim, self.num_classes,
                          dict(self.provenance), check=False)


@dataclass(frozen=True)
class SpiralsConfig:
    num_envs: int = 16
    samples_per_env: int = 512
    spiral_turns: float = 1.5
    invariant_noise_std: float = 0.0
    shortcut_dims_per_env: int = 1
    shortcut_flip_prob_train: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_envs < 2:
            raise DatasetError("spirals need at least 2 environments")
        if self.samples_per_env < 2:
            raise DatasetError("each environment needs at least one sample per class")
        if self.invariant_noise_std < 0:
            raise DatasetError("invariant_noise_std must be nonnegative")
        if self.shortcut_dims_per_env < 1:
            raise DatasetError("shortcut_dims_per_env must be at least 1")
        if not 0.0 <= self.shortcut_flip_prob_train <= 1.0:
            raise DatasetError("shortcut_flip_prob_train must lie in [0, 1]")
        if self.spiral_turns <= 0:
            raise DatasetError("spiral_turns must be positive")


@dataclass(frozen=True)
class SyntheticCmnistConfig:
    env_label_color_corr: tuple = (0.9, 0.8, -0.9)
    label_noise: float = 0.25
    core_feature_dim: int = 8
    samples_per_env: int = 2500
    margin: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "env_label_color_corr", tuple(float(c) for c in self.env_label_color_corr))
        if len(self.env_label_color_corr) < 1:
            raise DatasetError("need at least one environment")
        if any(abs(c) > 1 for c in self.env_label_color_corr):
            raise DatasetError("colour correlations must lie in [-1, 1]")
        if not 0.0 <= self.label_noise < 0.5:
            raise DatasetError("label_noise must lie in [0, 0.5)")
        if self.core_feature_dim < 1 or self.samples_per_env < 2:
            raise DatasetError("core_feature_dim and samples_per_env must be positive")


def _balanced_labels(n, rng):
    labels = np.arange(n) % 2
    rng.shuffle(labels)
    return labels


def spiral_points(labels, t, turns):
    """Two-arm spiral: radius grows with ``t`` and arm 1 is arm 0 rotated by pi."""
    angle = 2.0 * np.pi * turns * t + np.pi * labels
    radius = 0.2 + t
    return np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)


def gen_spirals(cfg: SpiralsConfig) -> EnvDataset:
    rng = np.random.default_rng(cfg.seed)
    k = cfg.shortcut_dims_per_env
    dim = 2 + cfg.num_envs * k
    envs = []
    for e in range(cfg.num_envs):
        n = cfg.samples_per_env
        labels = _balanced_labels(n, rng)
        t = rng.uniform(0.0, 1.0, size=n)
        spiral = spiral_points(labels, t, cfg.spiral_turns)
        spiral += cfg.invariant_noise_std * rng.standard_normal(spiral.shape)
        shortcut = rng.standard_normal((n, cfg.num_envs * k))
        flipped = rng.random(n) < cfg.shortcut_flip_prob_train
        code = np.where(flipped, 1 - labels, labels) * 2.0 - 1.0
        shortcut[:, e * k:(e + 1) * k] = code[:, None] + SHORTCUT_JITTER * rng.standard_normal((n, k))
        envs.append(Environment(str(e), np.hstack([spiral, shortcut]), labels))
    return EnvDataset(envs, dim, 2, {"generator": "spirals", "config": asdict(cfg), "seed": cfg.seed})


def gen_synthetic_cmnist(cfg: SyntheticCmnistConfig) -> EnvDataset:
    rng = np.random.default_rng(cfg.seed)
    direction = rng.standard_normal(cfg.core_feature_dim)
    direction /= np.linalg.norm(direction)
    envs = []
    for corr in cfg.env_label_color_corr:
        n = cfg.samples_per_env
        clean = _balanced_labels(n, rng)
        # push every core vector at least `margin` away from the decision plane
        core = rng.standard_normal((n, cfg.core_feature_dim))
        along = core @ direction
        target = (cfg.margin + np.abs(along)) * (2.0 * clean - 1.0)
        core += np.outer(target - along, direction)
        noisy = rng.random(n) < cfg.label_noise
        labels = np.where(noisy, 1 - clean, clean)
        agree = rng.random(n) < (1.0 + corr) / 2.0
        color = np.where(agree, labels, 1 - labels)
        sign = 2.0 * color - 1.0
        color_block = np.stack([sign, -sign], axis=1) + SHORTCUT_JITTER * rng.standard_normal((n, 2))
        envs.append(Environment(_corr_label(corr), np.hstack([core, color_block]), labels))
    provenance = {"generator": "cmnist", "config": asdict(cfg), "seed": cfg.seed, "core_direction": direction.tolist()}
    return EnvDataset(envs, cfg.core_feature_dim + 2, 2, provenance)


def _corr_label(corr):
    return f"{corr:+.2f}"


def color_bits(ds: EnvDataset, env_id):
    """Colour bit of every sample of a synthetic CMNIST environment."""
    return (ds.env(env_id).features[:, -2] > 0).astype(np.int64)


def env_split(ds: EnvDataset, holdout_fraction: float, seed: int):
    """Stratified per-environment split into ``(train, heldout)`` datasets."""
    if not 0.0 < holdout_fraction < 1.0:
        raise DatasetError("holdout_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train, held = [], []
    for env in ds.environments:
        train_idx, held_idx = [], []
        for cls in range(ds.num_classes):
            idx = np.flatnonzero(env.labels == cls)
            if idx.size == 0:
                continue
            n_held = int(round(holdout_fraction * idx.size))
            if idx.size >= 2 and not 0 < n_held < idx.size:
                n_held = min(max(n_held, 1), idx.size - 1)
            if idx.size < 2:
                raise DatasetError(f"env {env.env_id}: class {cls} has too few samples to stratify")
            idx = rng.permutation(idx)
            held_idx.append(idx[:n_held])
            train_idx.append(idx[n_held:])
        train_idx = np.sort(np.concatenate(train_idx))
        held_idx = np.sort(np.concatenate(held_idx))
        train.append(Environment(env.env_id, env.features[train_idx], env.labels[train_idx]))
        held.append(Environment(env.env_id, env.features[held_idx], env.labels[held_idx]))
    meta = dict(ds.provenance, split={"holdout_fraction": holdout_fraction, "seed": seed})
    return (EnvDataset(train, ds.feature_dim, ds.num_classes, meta),
            EnvDataset(held, ds.feature_dim, ds.num_classes, meta))


def leave_one_env_out(ds: EnvDataset, test_env):
    if len(ds.environments) < 3:
        raise DatasetError("leave-one-environment-out needs at least 3 environments")
    test = ds.env(test_env)
    train_ids = [e for e in ds.env_ids if e != test.env_id]
    return ds.subset(train_ids), ds.subset([test.env_id])


def save_dataset(ds: EnvDataset, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    header = [f"f{i}" for i in range(ds.feature_dim)] + ["label"]
    for env in ds.environments:
        with open(os.path.join(out_dir, f"env_{env.env_id}.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row, label in zip(env.features, env.labels):
                writer.writerow([repr(float(v)) for v in row] + [int(label)])
    manifest = {
        "format_version": 1,
        "env_ids": ds.env_ids,
        "feature_dim": ds.feature_dim,
        "num_classes": ds.num_classes,
        "provenance": ds.provenance,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


def load_dataset(in_dir) -> EnvDataset:
    with open(os.path.join(in_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    envs = []
    for env_id in manifest["env_ids"]:
        data = np.loadtxt(os.path.join(in_dir, f"env_{env_id}.csv"), delimiter=",", skiprows=1, ndmin=2)
        envs.append(Environment(env_id, data[:, :-1], data[:, -1].astype(np.int64)))
    return EnvDataset(envs, manifest["feature_dim"], manifest["num_classes"], manifest["provenance"])


def generate(name, config=None, seed=0):
    """Build a dataset by generator name from a plain config mapping."""
    config = dict(config or {})
    config["seed"] = seed
    if name == "spirals":
        return gen_spirals(SpiralsConfig(**config))
    if name == "cmnist":
        return gen_synthetic_cmnist(SyntheticCmnistConfig(**config))
    raise DatasetError(f"unknown dataset {name!r}; expected 'spirals' or 'cmnist'")
