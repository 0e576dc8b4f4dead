"""Gradient-agreement masks over per-environment gradients.

All functions take an ``(d, n)`` array whose row ``e`` is the gradient of
environment ``e``'s loss. The agreement of parameter ``j`` is the normalised
sign consensus ``a_j = |mean_e sign(g[e, j])|`` with ``sign(0) = 0``; both the
AND-mask and SAND-mask threshold it against the same ``tau``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

METHODS = ("none", "and_mask", "sand_mask")
AVERAGING = ("arithmetic", "geometric")


class MaskingError(ValueError):
    pass


@dataclass(frozen=True)
class MaskConfig:
    method: str = "and_mask"
    tau: float = 1.0
    eps_avg: float = 1e-12
    eps_var: float = 1e-12
    averaging: str = "arithmetic"

    def __post_init__(self):
        if self.method not in METHODS:
            raise MaskingError(f"unknown masking method {self.method!r}; expected one of {METHODS}")
        if self.averaging not in AVERAGING:
            raise MaskingError(f"unknown averaging {self.averaging!r}; expected one of {AVERAGING}")
        if not 0.0 <= self.tau <= 1.0:
            raise MaskingError(f"tau must lie in [0, 1], got {self.tau!r}")
        if not (self.eps_avg > 0 and self.eps_var > 0):
            raise MaskingError("eps_avg and eps_var must be positive")


class MaskStats(NamedTuple):
    agreement: np.ndarray
    sigma2: np.ndarray


def as_env_grads(grads, min_envs=2):
    """Validate and return ``grads`` as a float64 ``(d, n)`` array."""
    g = np.asarray(grads, dtype=np.float64)
    if g.ndim == 1:
        g = g[:, None]
    if g.ndim != 2:
        raise MaskingError(f"expected a (num_envs, num_params) array, got shape {g.shape}")
    if g.shape[0] < min_envs:
        raise MaskingError(f"need at least {min_envs} environments, got {g.shape[0]}")
    bad = ~np.isfinite(g)
    if bad.any():
        env, param = map(int, np.argwhere(bad)[0])
        raise MaskingError(f"non-finite gradient at env {env}, param {param}")
    return g


def sign_agreement(grads):
    g = as_env_grads(grads)
    return np.abs(np.sign(g).mean(axis=0))


def dispersion(grads, eps_avg=1e-12, eps_var=1e-12):
    """Variance over squared mean of each column (population variance).

    A vanishing mean with non-vanishing variance yields ``inf``; if both vanish
    the column counts as perfectly consistent and yields 0.
    """
    g = as_env_grads(grads)
    avg2 = g.mean(axis=0) ** 2
    var = g.var(axis=0)
    small_avg = avg2 < eps_avg
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma2 = var / avg2
    sigma2[small_avg & (var >= eps_var)] = np.inf
    sigma2[small_avg & (var < eps_var)] = 0.0
    return sigma2


def and_mask(agreement, tau):
    return (np.asarray(agreement, dtype=np.float64) >= tau).astype(np.float64)


def sand_mask(agreement, sigma2, tau):
    """``max(0, tanh((a - tau) / sigma2))`` with the limits at 0 and infinity."""
    a = np.asarray(agreement, dtype=np.float64)
    s2 = np.asarray(sigma2, dtype=np.float64)
    if a.shape != s2.shape:
        raise MaskingError(f"agreement and sigma2 shapes differ: {a.shape} vs {s2.shape}")
    margin = a - tau
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.tanh(margin / s2)
    m = np.where(s2 == 0, (margin > 0).astype(np.float64), m)
    m = np.where(np.isinf(s2), 0.0, m)
    return np.maximum(m, 0.0)


def arithmetic_mean_grad(grads):
    return as_env_grads(grads, min_envs=1).mean(axis=0)


def geometric_mean_grad(grads):
    """Signed geometric mean of each column, or 0 where signs are not unanimous."""
    g = as_env_grads(grads, min_envs=1)
    signs = np.sign(g)
    unanimous = np.all(signs == signs[0], axis=0) & (signs[0] != 0)
    with np.errstate(divide="ignore"):
        log_mag = np.log(np.abs(g)).mean(axis=0)
    return np.where(unanimous, signs[0] * np.exp(np.where(unanimous, log_mag, 0.0)), 0.0)


def masked_update_gradient(grads, cfg: MaskConfig):
    """Return ``(update, mask, stats)`` with ``update = mask * mean_grad``."""
    g = as_env_grads(grads)
    agreement = sign_agreement(g)
    sigma2 = dispersion(g, cfg.eps_avg, cfg.eps_var)
    if cfg.method == "and_mask":
        mask = and_mask(agreement, cfg.tau)
    elif cfg.method == "sand_mask":
        mask = sand_mask(agreement, sigma2, cfg.tau)
    else:
        mask = np.ones(g.shape[1])
    mean = arithmetic_mean_grad(g) if cfg.averaging == "arithmetic" else geometric_mean_grad(g)
    return mask * mean, mask, MaskStats(agreement, sigma2)


def mask_shape_curve(tau, sigma2_list, a_grid):
    """Tabulate the SAND weight over agreement levels, one curve per sigma2."""
    a_grid = np.asarray(a_grid, dtype=np.float64)
    if a_grid.size == 0:
        raise MaskingError("agreement grid is empty")
    rows = []
    for s2 in sigma2_list:
        weights = sand_mask(a_grid, np.full_like(a_grid, float(s2)), tau)
        rows.extend((float(a), float(s2), float(m)) for a, m in zip(a_grid, weights))
    return rows


def write_curve_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["a", "sigma2", "mask"])
        for a, s2, m in rows:
            writer.writerow([repr(a), repr(s2), repr(m)])
