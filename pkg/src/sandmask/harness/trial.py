"""Training one (config, seed, held-out environment) trial."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..autodiff import AutodiffError, MlpSpec, init_params, loss_and_grad, predict
from ..datasets import EnvDataset, env_split, generate, leave_one_env_out
from ..masking import MaskConfig, MaskingError, masked_update_gradient
from ..optim import MomentumState, OptimConfig, OptimError, step

SCHEMA_VERSION = 1

# CLI-facing method names and their masking counterparts
METHOD_ALIASES = {"erm": "none", "and": "and_mask", "sand": "sand_mask"}


class TrialError(ValueError):
    pass


def canonical_method(name):
    name = METHOD_ALIASES.get(name, name)
    if name not in METHOD_ALIASES.values():
        raise TrialError(f"unknown method {name!r}; expected erm, and or sand")
    return name


@dataclass(frozen=True)
class TrialConfig:
    method: str = "and_mask"
    lr: float = 0.01
    batch_size: int = 512
    weight_decay: float = 0.0
    depth: int = 3
    width: int = 256
    tau: float = 1.0
    dropout: float = 0.0
    momentum: float = 0.9
    optimizer: str = "sgd_momentum"
    init_scale: float = 1.0
    activation: str = "relu"
    averaging: str = "arithmetic"
    holdout_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "method", canonical_method(self.method))
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise TrialError(f"batch_size must be a positive integer, got {self.batch_size!r}")
        if not self.init_scale > 0:
            raise TrialError("init_scale must be positive")
        # the module configs carry their own checks
        try:
            self.mask_config()
            self.optim_config()
        except (MaskingError, OptimError) as err:
            raise TrialError(str(err)) from err

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise TrialError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)

    def mask_config(self):
        return MaskConfig(method=self.method, tau=self.tau, averaging=self.averaging)

    def optim_config(self):
        return OptimConfig(learning_rate=self.lr, momentum=self.momentum,
                           weight_decay=self.weight_decay, optimizer=self.optimizer)

    def mlp_spec(self, input_dim, num_classes):
        return MlpSpec(input_dim=input_dim, depth=self.depth, width=self.width, output_dim=num_classes,
                       activation=self.activation, dropout_rate=self.dropout)


@dataclass
class TrialRecord:
    config: dict
    seed: int
    test_env: str | None
    steps: int
    dataset: dict = field(default_factory=dict)
    config_id: int = 0
    log: dict = field(default_factory=dict)
    train_acc: float = 0.0
    val_acc: float = 0.0
    test_acc: float | None = None
    failed: bool = False
    failure: str | None = None
    wall_time: float = 0.0
    schema_version: int = SCHEMA_VERSION

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        if data.get("schema_version") != SCHEMA_VERSION:
            raise TrialError(f"unsupported record schema {data.get('schema_version')!r}")
        return cls(**data)

    def outcome(self):
        """Everything except wall time, for replay comparisons."""
        out = self.to_dict()
        out.pop("wall_time")
        return out


def _accuracy(spec, theta_params, ds: EnvDataset):
    accs = [float(np.mean(predict(spec, theta_params, env.features) == env.labels)) for env in ds.environments]
    return float(np.mean(accs))


def _env_update(grads, cfg: MaskConfig):
    if grads.shape[0] == 1:
        ones = np.ones(grads.shape[1])
        return grads[0], ones, ones
    update, mask, stats = masked_update_gradient(grads, cfg)
    return update, mask, stats.agreement


def run_trial(config, dataset: EnvDataset, test_env, steps: int, seed: int, config_id: int = 0, on_step=None):
    """Train with per-environment minibatches and return a ``TrialRecord``.

    ``test_env=None`` trains on every environment and skips test evaluation.
    ``on_step(k)`` is called before each step and once more with ``k == steps``
    when training ends; tests use it to audit data access.
    Divergence marks the record failed instead of raising.
    """
    cfg = config if isinstance(config, TrialConfig) else TrialConfig.from_dict(dict(config))
    if steps < 1:
        raise TrialError("steps must be at least 1")
    started = time.perf_counter()
    if test_env is None:
        train_ds, test_ds = dataset, None
    else:
        train_ds, test_ds = leave_one_env_out(dataset, test_env)
        test_env = test_ds.env_ids[0]
    fit, held = env_split(train_ds, cfg.holdout_fraction, seed)

    init_seq, batch_seq, drop_seq = np.random.SeedSequence(seed).spawn(3)
    batch_rng, drop_rng = np.random.default_rng(batch_seq), np.random.default_rng(drop_seq)
    spec = cfg.mlp_spec(dataset.feature_dim, dataset.num_classes)
    params = init_params(spec, np.random.default_rng(init_seq), cfg.init_scale)
    mask_cfg, opt_cfg = cfg.mask_config(), cfg.optim_config()
    state = MomentumState.zeros(len(params), opt_cfg)
    theta = params.values

    feats = [env.features for env in fit.environments]
    labels = [env.labels for env in fit.environments]
    batch = min(int(cfg.batch_size), min(len(y) for y in labels))
    mode = "train" if cfg.dropout > 0 else "eval"

    log = {"loss": [None] * steps, "mask_density": [None] * steps, "agreement": [None] * steps}
    failure = None
    for k in range(steps):
        if on_step is not None:
            on_step(k)
        picks = [batch_rng.choice(len(y), size=batch, replace=False) for y in labels]
        xb = np.stack([x[p] for x, p in zip(feats, picks)])
        yb = np.stack([y[p] for y, p in zip(labels, picks)])
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = loss_and_grad(spec, params.with_values(theta), xb, yb, mode=mode, rng=drop_rng)
            if not np.all(np.isfinite(loss)) or not np.all(np.isfinite(grads)):
                raise FloatingPointError("non-finite loss or gradient")
            update, mask, agreement = _env_update(grads, mask_cfg)
            theta, state = step(theta, update, state, opt_cfg)
        except (AutodiffError, MaskingError, OptimError, FloatingPointError, ValueError) as err:
            failure = f"step {k}: {err}"
            break
        log["loss"][k] = float(np.mean(loss))
        log["mask_density"][k] = float(np.mean(mask))
        log["agreement"][k] = float(np.mean(agreement))

    if on_step is not None:
        on_step(steps)
    record = TrialRecord(config=cfg.to_dict(), seed=int(seed), test_env=test_env, steps=int(steps),
                         dataset=dict(dataset.provenance), config_id=int(config_id), log=log)
    if failure is not None:
        record.failed, record.failure = True, failure
        record.test_acc = 0.0 if test_ds is not None else None
    else:
        final = params.with_values(theta)
        record.train_acc = _accuracy(spec, final, fit)
        record.val_acc = _accuracy(spec, final, held)
        if test_ds is not None:
            # the only read of held-out environment data
            record.test_acc = _accuracy(spec, final, test_ds)
    record.wall_time = time.perf_counter() - started
    return record


def dataset_from_provenance(provenance):
    gen = provenance.get("generator")
    if gen is None:
        raise TrialError("dataset provenance has no generator; pass the dataset explicitly")
    config = {k: v for k, v in provenance["config"].items() if k != "seed"}
    return generate(gen, config, provenance["seed"])


def replay(record: TrialRecord, dataset: EnvDataset | None = None):
    """Re-run a record from its embedded config and seeds."""
    dataset = dataset if dataset is not None else dataset_from_provenance(record.dataset)
    return run_trial(record.config, dataset, record.test_env, record.steps, record.seed, record.config_id)
