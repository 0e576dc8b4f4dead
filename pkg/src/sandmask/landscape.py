"""Analytic two-dimensional loss landscapes for studying masked gradient fields.

Each environment is a sum of isotropic Gaussian terms; a negative amplitude is a
well, a positive one a bump. ``compute_field`` evaluates every environment's
gradient on a grid and pushes the per-cell gradients through the same masking
code used for training, so the exported vectors are exactly what a masked
optimizer would follow.

The diagonal-quadratic helpers check the Hessian-mean algebra: with shared
optimum and diagonal Hessians, the geometric mean of the Hessians applied to
``theta - theta*`` equals the coordinatewise geometric mean of the gradients.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .masking import MaskConfig, masked_update_gradient


class LandscapeError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianTerm:
    center: tuple
    amplitude: float
    width: float


@dataclass(frozen=True)
class LandscapeSpec:
    terms: tuple

    def __post_init__(self):
        terms = tuple(t if isinstance(t, GaussianTerm) else GaussianTerm(*t) for t in self.terms)
        if not terms:
            raise LandscapeError("a landscape needs at least one term")
        if any(t.width <= 0 for t in terms):
            raise LandscapeError("Gaussian widths must be positive")
        object.__setattr__(self, "terms", terms)


def make_fig1_pair():
    """Two environments sharing a shallow well at (1, 1).

    A has a deep well at (-1, -1) where B has a bump, and the arithmetic
    average of the two still has a minimum of depth -0.5 there.
    """
    shared = GaussianTerm((1.0, 1.0), -0.5, 0.5)
    env_a = LandscapeSpec((shared, GaussianTerm((-1.0, -1.0), -2.0, 0.5)))
    env_b = LandscapeSpec((shared, GaussianTerm((-1.0, -1.0), 1.0, 0.5)))
    return env_a, env_b


def average_landscape(envs):
    """Landscape whose value is the mean of the given environments."""
    n = len(envs)
    return LandscapeSpec(tuple(
        GaussianTerm(t.center, t.amplitude / n, t.width) for spec in envs for t in spec.terms
    ))


def eval_grad(spec: LandscapeSpec, point):
    """Value and analytic gradient at ``point``; broadcasts over leading axes."""
    p = np.asarray(point, dtype=np.float64)
    x, y = p[..., 0], p[..., 1]
    value = np.zeros_like(x)
    gx = np.zeros_like(x)
    gy = np.zeros_like(x)
    for t in spec.terms:
        dx, dy = x - t.center[0], y - t.center[1]
        bump = t.amplitude * np.exp(-(dx * dx + dy * dy) / (2.0 * t.width**2))
        value = value + bump
        gx = gx - bump * dx / t.width**2
        gy = gy - bump * dy / t.width**2
    return value, np.stack([gx, gy], axis=-1)


@dataclass
class FieldGrid:
    xs: np.ndarray
    ys: np.ndarray
    env_grads: np.ndarray  # (ny, nx, n_envs, 2)
    agreement: np.ndarray  # (ny, nx, 2)
    mask: np.ndarray  # (ny, nx, 2)
    mean_grad: np.ndarray  # (ny, nx, 2)
    update: np.ndarray  # (ny, nx, 2)


def compute_field(envs, cfg: MaskConfig, x_range=(-2.5, 2.5), y_range=(-2.5, 2.5), resolution=(101, 101)):
    if len(envs) < 2:
        raise LandscapeError("a masked field needs at least two environments")
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    if nx < 2 or ny < 2:
        raise LandscapeError("grid resolution must be at least 2 per axis")
    xs = np.linspace(*x_range, nx)
    ys = np.linspace(*y_range, ny)
    pts = np.stack(np.meshgrid(xs, ys), axis=-1)
    grads = np.stack([eval_grad(spec, pts)[1] for spec in envs], axis=-2)
    # every cell is an independent (n_envs, 2) gradient set; flatten cells into columns
    flat = np.moveaxis(grads.reshape(ny * nx, len(envs), 2), 1, 0).reshape(len(envs), ny * nx * 2)
    update, mask, stats = masked_update_gradient(flat, cfg)
    shape = (ny, nx, 2)
    return FieldGrid(
        xs, ys, grads,
        stats.agreement.reshape(shape), mask.reshape(shape),
        flat.mean(axis=0).reshape(shape), update.reshape(shape),
    )


def dead_zone_map(field: FieldGrid, atol=0.0):
    """Cells where the masked update vanishes although the plain average does not."""
    masked_zero = np.all(np.abs(field.update) <= atol, axis=-1)
    plain_nonzero = np.any(np.abs(field.mean_grad) > atol, axis=-1)
    dead = masked_zero & plain_nonzero
    return dead, float(dead.mean())


FIELD_COLUMNS = ("x", "y", "gxA", "gyA", "gxB", "gyB", "mask_x", "mask_y", "ux", "uy", "dead")


def field_rows(field: FieldGrid):
    """One row per grid cell, in ``FIELD_COLUMNS`` order, x varying fastest."""
    if field.env_grads.shape[2] != 2:
        raise LandscapeError("field rows expect exactly two environments")
    dead, _ = dead_zone_map(field)
    rows = []
    for iy, y in enumerate(field.ys):
        for ix, x in enumerate(field.xs):
            g = field.env_grads[iy, ix]
            values = (x, y, g[0, 0], g[0, 1], g[1, 0], g[1, 1], *field.mask[iy, ix], *field.update[iy, ix])
            rows.append([float(v) for v in values] + [int(dead[iy, ix])])
    return rows


def write_field_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FIELD_COLUMNS)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row[:-1]] + [int(row[-1])])


def export_field_csv(field: FieldGrid, path):
    write_field_csv(field_rows(field), path)


def grid_local_minima(values):
    """Indices of interior grid cells strictly below all eight neighbours."""
    v = np.asarray(values)
    core = v[1:-1, 1:-1]
    is_min = np.ones_like(core, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx or dy:
                is_min &= core < v[1 + dy:v.shape[0] - 1 + dy, 1 + dx:v.shape[1] - 1 + dx]
    return [(iy + 1, ix + 1) for iy, ix in np.argwhere(is_min)]


def grid_descent(values, start):
    """Follow steepest 8-neighbour descent on a grid until no neighbour is lower."""
    v = np.asarray(values)
    iy, ix = start
    while True:
        best = (v[iy, ix], iy, ix)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                jy, jx = iy + dy, ix + dx
                if 0 <= jy < v.shape[0] and 0 <= jx < v.shape[1] and v[jy, jx] < best[0]:
                    best = (v[jy, jx], jy, jx)
        if best[1:] == (iy, ix):
            return iy, ix
        iy, ix = best[1:]


def orthant_dead_fraction(n_env: int, trials: int, rng):
    """Analytic and sampled probability that ``n_env`` random signs are not unanimous."""
    if n_env < 1 or trials < 1:
        raise LandscapeError("n_env and trials must be at least 1")
    if n_env > 62:
        raise LandscapeError("n_env above 62 overflows the orthant count")
    analytic = (2**n_env - 2) / 2**n_env
    grads = rng.standard_normal((trials, n_env))
    signs = np.sign(grads)
    unanimous = np.abs(signs.sum(axis=1)) == n_env
    return analytic, float(1.0 - unanimous.mean())


@dataclass(frozen=True)
class QuadraticEnvSpec:
    eigenvalues: tuple
    optimum: tuple

    def __post_init__(self):
        lam = tuple(float(v) for v in self.eigenvalues)
        opt = tuple(float(v) for v in self.optimum)
        if len(lam) != len(opt):
            raise LandscapeError("eigenvalues and optimum must have the same dimension")
        if any(not v > 0 for v in lam):
            raise LandscapeError("Hessian eigenvalues must be positive")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "optimum", opt)

    def grad(self, theta):
        return np.asarray(self.eigenvalues) * (np.asarray(theta, dtype=np.float64) - np.asarray(self.optimum))


def hessian_means(envs):
    """Coordinatewise geometric and arithmetic means of the diagonal Hessians."""
    if not envs:
        raise LandscapeError("need at least one environment")
    lam = np.array([env.eigenvalues for env in envs], dtype=np.float64)
    if lam.ndim != 2:
        raise LandscapeError("all environments must share one dimension")
    if np.any(lam <= 0):
        raise LandscapeError("Hessian eigenvalues must be positive")
    return np.exp(np.log(lam).mean(axis=0)), lam.mean(axis=0)


def quadratic_grad_identity_check(envs, theta):
    """Compare ``H_geo (theta - theta*)`` with the geometric mean of the gradients."""
    optimum = np.asarray(envs[0].optimum)
    if any(not np.array_equal(np.asarray(env.optimum), optimum) for env in envs):
        raise LandscapeError("environments must share their optimum")
    delta = np.asarray(theta, dtype=np.float64) - optimum
    if np.any(delta == 0):
        raise LandscapeError("theta must differ from the optimum in every coordinate")
    h_geo, _ = hessian_means(envs)
    lhs = h_geo * delta
    grads = np.array([env.grad(theta) for env in envs])
    rhs = np.sign(delta) * np.exp(np.log(np.abs(grads)).mean(axis=0))
    rel = np.abs(lhs - rhs) / np.abs(lhs)
    return {"lhs": lhs, "rhs": rhs, "max_rel_error": float(rel.max())}
