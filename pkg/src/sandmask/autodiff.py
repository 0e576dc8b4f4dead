"""Tiny reverse-mode differentiation for multilayer perceptrons.

Everything runs in float64 on numpy arrays. A forward pass records the
intermediates it needs on a :class:`GradTape`; :func:`mlp_backward` walks the
tape in reverse and returns the flat parameter gradient.

Batches may carry a leading environment axis, ``(E, B, D)``. The weights are
shared, but the backward pass then returns one gradient row per environment,
shape ``(E, n)``, which is exactly what the masking code consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ACTIVATIONS = ("relu", "tanh")


class AutodiffError(ValueError):
    """Raised for shape mismatches, non-finite values and tape misuse."""

    def __init__(self, message, layer=None):
        if layer is not None:
            message = f"layer {layer!r}: {message}"
        super().__init__(message)
        self.layer = layer


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    depth: int
    width: int
    output_dim: int = 2
    activation: str = "relu"
    dropout_rate: float = 0.0

    def __post_init__(self):
        for name in ("input_dim", "depth", "width", "output_dim"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate!r}")

    @property
    def layer_sizes(self):
        return [self.input_dim] + [self.width] * self.depth + [self.output_dim]

    def layout(self):
        """Ordered ``(layer_id, shape)`` records for every parameter tensor."""
        sizes = self.layer_sizes
        records = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            records.append((f"W{i}", (fan_in, fan_out)))
            records.append((f"b{i}", (fan_out,)))
        return tuple(records)

    @property
    def num_params(self):
        return sum(int(np.prod(shape)) for _, shape in self.layout())


@dataclass(frozen=True)
class ParamVector:
    """Flat parameter array plus the layout that slices it into layers."""

    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("parameter values must be a flat array")
        expected = sum(int(np.prod(shape)) for _, shape in self.layout)
        if values.size != expected:
            raise ValueError(f"layout describes {expected} parameters, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("parameter values must be finite")
        object.__setattr__(self, "layout", tuple((name, tuple(shape)) for name, shape in self.layout))
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def tensors(self, flat=None):
        """Return ``{layer_id: view}`` into ``flat`` (defaults to the values)."""
        flat = self.values if flat is None else flat
        out, offset = {}, 0
        for name, shape in self.layout:
            size = int(np.prod(shape))
            out[name] = flat[..., offset:offset + size].reshape(flat.shape[:-1] + shape)
            offset += size
        return out

    def with_values(self, values):
        return ParamVector(np.array(values, dtype=np.float64), self.layout)


def init_params(spec: MlpSpec, rng: np.random.Generator, init_scale_multiplier: float = 1.0) -> ParamVector:
    """Glorot-uniform weights scaled by ``init_scale_multiplier``; zero biases."""
    if init_scale_multiplier < 0:
        raise ValueError("init_scale_multiplier must be nonnegative")
    chunks = []
    for name, shape in spec.layout():
        if name.startswith("W"):
            limit = init_scale_multiplier * np.sqrt(6.0 / (shape[0] + shape[1]))
            chunks.append(rng.uniform(-limit, limit, size=shape).ravel())
        else:
            chunks.append(np.zeros(shape))
    return ParamVector(np.concatenate(chunks), spec.layout())


@dataclass
class GradTape:
    """Saved intermediates of one forward pass. Consumed by one backward pass."""

    params: ParamVector
    records: list = field(default_factory=list)
    consumed: bool = False


def _check_finite(array, layer):
    if not np.all(np.isfinite(array)):
        raise AutodiffError("non-finite intermediate values", layer=layer)


def mlp_forward(spec: MlpSpec, params: ParamVector, batch, mode: str = "eval", rng=None):
    """Run the MLP on ``batch`` and return ``(logits, tape)``.

    ``batch`` is ``(B, input_dim)`` or ``(E, B, input_dim)``. In ``train`` mode
    inverted dropout is applied after every hidden activation, with masks drawn
    from ``rng``.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise AutodiffError(f"batch must be 2-D or 3-D, got shape {x.shape}", layer="input")
    if x.shape[-1] != spec.input_dim:
        raise AutodiffError(f"expected {spec.input_dim} input columns, got {x.shape[-1]}", layer="W0")
    if not np.all(np.isfinite(x)):
        raise AutodiffError("batch contains non-finite values", layer="input")
    if tuple(params.layout) != spec.layout():
        raise AutodiffError("parameter layout does not match the MLP spec", layer="params")
    use_dropout = mode == "train" and spec.dropout_rate > 0
    if use_dropout and rng is None:
        raise ValueError("train mode with dropout needs an rng")

    tensors = params.tensors()
    tape = GradTape(params)
    h = x
    n_layers = spec.depth + 1
    for i in range(n_layers):
        W, b = tensors[f"W{i}"], tensors[f"b{i}"]
        with np.errstate(over="ignore", invalid="ignore"):
            z = h @ W + b
        _check_finite(z, f"W{i}")
        tape.records.append(("linear", i, h))
        h = z
        if i == n_layers - 1:
            break
        if spec.activation == "relu":
            h = np.maximum(z, 0.0)
            tape.records.append(("relu", i, z > 0))
        else:
            h = np.tanh(z)
            tape.records.append(("tanh", i, h))
        if use_dropout:
            keep = 1.0 - spec.dropout_rate
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
            tape.records.append(("dropout", i, mask))
    return h, tape


def mlp_backward(tape: GradTape, loss_grad) -> np.ndarray:
    """Gradient of the loss w.r.t. every parameter, in ``ParamVector`` layout.

    ``loss_grad`` is dLoss/dlogits. With an environment axis on the batch the
    result has shape ``(E, n)``: row ``e`` holds the gradient contributed by the
    samples of environment ``e`` alone.
    """
    if tape.consumed:
        raise AutodiffError("tape was already used by a backward pass", layer="tape")
    tape.consumed = True
    g = np.asarray(loss_grad, dtype=np.float64)
    params = tape.params
    lead = g.shape[:-2]
    grad = np.zeros(lead + (len(params),))
    views = params.tensors(grad)
    weights = params.tensors()
    for kind, i, saved in reversed(tape.records):
        if kind == "linear":
            W = weights[f"W{i}"]
            # batched outer products; sums over the sample axis only
            views[f"W{i}"][...] = np.swapaxes(saved, -1, -2) @ g
            views[f"b{i}"][...] = g.sum(axis=-2)
            _check_finite(views[f"W{i}"], f"W{i}")
            if i > 0:
                g = g @ W.T
        elif kind == "relu":
            g = g * saved
        elif kind == "tanh":
            g = g * (1.0 - saved**2)
        else:
            g = g * saved
    return grad


def softmax_cross_entropy(logits, labels):
    """Mean softmax cross-entropy over the sample axis and its logit gradient.

    With an environment axis the loss is a per-environment array and each
    environment's gradient is normalised by its own batch size.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_norm
    picked = np.take_along_axis(log_probs, labels[..., None], axis=-1)[..., 0]
    batch = logits.shape[-2]
    loss = -picked.mean(axis=-1)
    dlogits = np.exp(log_probs)
    np.put_along_axis(dlogits, labels[..., None], np.take_along_axis(dlogits, labels[..., None], axis=-1) - 1.0, axis=-1)
    return loss, dlogits / batch


def loss_and_grad(spec, params, batch, labels, mode="eval", rng=None):
    logits, tape = mlp_forward(spec, params, batch, mode=mode, rng=rng)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    return loss, mlp_backward(tape, dlogits)


def predict(spec, params, features):
    logits, _ = mlp_forward(spec, params, features, mode="eval")
    return logits.argmax(axis=-1)


@dataclass
class FiniteDifference:
    gradient: np.ndarray
    underflow: bool


def central_difference(f: Callable[[np.ndarray], float], theta, h: float = 1e-5) -> FiniteDifference:
    """``(f(θ + h e_i) - f(θ - h e_i)) / 2h`` for every coordinate ``i``.

    ``underflow`` is set when ``h`` vanishes against some coordinate, i.e. the
    perturbed point rounds back to the original one.
    """
    if not h > 0:
        raise ValueError("step size h must be positive")
    theta = np.array(theta, dtype=np.float64).ravel()
    grad = np.empty_like(theta)
    underflow = False
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + h
        up, hi = f(theta.copy()), theta[i]
        theta[i] = orig - h
        down, lo = f(theta.copy()), theta[i]
        theta[i] = orig
        if hi == lo:
            underflow = True
        grad[i] = (up - down) / (2.0 * h)
    return FiniteDifference(grad, underflow)


def finite_difference_gradient(spec: MlpSpec, params: ParamVector, batch, loss_fn, h: float = 1e-5) -> FiniteDifference:
    """Central-difference gradient of ``loss_fn(logits)`` in eval mode."""

    def objective(theta):
        logits, _ = mlp_forward(spec, params.with_values(theta), batch, mode="eval")
        return float(loss_fn(logits))

    return central_difference(objective, params.values, h)

