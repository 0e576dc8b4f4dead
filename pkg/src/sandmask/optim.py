"""Optimizers fed with already-masked update gradients.

The mask is applied before the gradient reaches the optimizer; the momentum
buffer itself is never masked. A coordinate whose update is zeroed therefore
keeps moving by ``-lr * momentum * M`` until its velocity decays.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

OPTIMIZERS = ("sgd_momentum", "adam")


class OptimError(ValueError):
    pass


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    optimizer: str = "sgd_momentum"
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise OptimError(f"learning_rate must be positive, got {self.learning_rate!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise OptimError(f"momentum must lie in [0, 1), got {self.momentum!r}")
        if self.weight_decay < 0:
            raise OptimError("weight_decay must be nonnegative")
        if self.optimizer not in OPTIMIZERS:
            raise OptimError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")


@dataclass
class MomentumState:
    velocity: np.ndarray
    step_count: int = 0
    second_moment: np.ndarray = field(default=None)

    @classmethod
    def zeros(cls, n, cfg=None):
        second = np.zeros(n) if cfg is not None and cfg.optimizer == "adam" else None
        return cls(np.zeros(n), 0, second)


def _check(params, update, state):
    params = np.asarray(params, dtype=np.float64)
    update = np.asarray(update, dtype=np.float64)
    if update.shape != params.shape:
        raise OptimError(f"update shape {update.shape} does not match parameters {params.shape}")
    if state.velocity.shape != params.shape:
        raise OptimError(f"state length {state.velocity.shape} does not match parameters {params.shape}")
    if not np.all(np.isfinite(update)):
        raise OptimError("update contains non-finite values")
    return params, update


def sgd_momentum_step(params, update, state: MomentumState, cfg: OptimConfig):
    """``M' = beta*M + update + wd*theta``; ``theta' = theta - lr*M'``."""
    theta, update = _check(params, update, state)
    velocity = cfg.momentum * state.velocity + update + cfg.weight_decay * theta
    new_theta = theta - cfg.learning_rate * velocity
    return new_theta, replace(state, velocity=velocity, step_count=state.step_count + 1)


def adam_step(params, update, state: MomentumState, cfg: OptimConfig):
    theta, update = _check(params, update, state)
    beta1, beta2 = cfg.adam_betas
    g = update + cfg.weight_decay * theta
    second = state.second_moment if state.second_moment is not None else np.zeros_like(theta)
    k = state.step_count + 1
    m = beta1 * state.velocity + (1 - beta1) * g
    v = beta2 * second + (1 - beta2) * g * g
    m_hat = m / (1 - beta1**k)
    v_hat = v / (1 - beta2**k)
    new_theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return new_theta, MomentumState(m, k, v)


def step(params, update, state, cfg):
    if cfg.optimizer == "adam":
        return adam_step(params, update, state, cfg)
    return sgd_momentum_step(params, update, state, cfg)
