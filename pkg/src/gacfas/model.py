"""Small feed-forward classifier with hand-written exact gradients.

The network is a plain MLP: affine layers with relu or tanh on the hidden
layers and raw logits at the output, trained with mean softmax cross-entropy.
Reverse accumulation is written out by hand for this fixed architecture; the
finite-difference oracle below is the independent check on it.

Parameters live in a single flat Vec64 with a block layout (one weight matrix
and one bias vector per layer) so the optimizers can treat theta as opaque
storage while landscape tooling can still address individual blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import numerics

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths (input dim, hidden dims..., class count) and hidden activation."""

    layer_sizes: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("layer_sizes needs at least input and output layers")
        if any(n < 1 for n in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] < 2:
            raise ValueError(f"output dim must be >= 2 classes, got {sizes[-1]}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def param_count(self) -> int:
        sizes = self.layer_sizes
        return sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))


@dataclass(frozen=True)
class Block:
    """One contiguous slice of theta: a weight matrix or a bias vector."""

    name: str
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def view(self, theta: np.ndarray) -> np.ndarray:
        return theta[self.offset : self.offset + self.size].reshape(self.shape)


def layout_for(spec: MlpSpec) -> tuple[Block, ...]:
    """Weight and bias blocks per layer, in forward order, covering theta exactly."""
    blocks = []
    offset = 0
    sizes = spec.layer_sizes
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        blocks.append(Block(f"w{i}", offset, (fan_in, fan_out)))
        offset += fan_in * fan_out
        blocks.append(Block(f"b{i}", offset, (fan_out,)))
        offset += fan_out
    return tuple(blocks)


@dataclass(frozen=True)
class ParamVector:
    """Flat float64 parameter vector plus its block layout.

    Treated as immutable: optimizer steps return fresh vectors and never
    write through an existing theta.
    """

    theta: np.ndarray
    layout: tuple[Block, ...]

    def __post_init__(self):
        object.__setattr__(self, "theta", numerics.as_vec64(self.theta))
        covered = 0
        for block in self.layout:
            if block.offset != covered:
                raise ValueError(f"layout block {block.name} starts at {block.offset}, expected {covered}")
            covered += block.size
        if covered != self.theta.shape[0]:
            raise ValueError(f"layout covers {covered} entries, theta has {self.theta.shape[0]}")

    def with_theta(self, theta: np.ndarray) -> "ParamVector":
        return replace(self, theta=theta)

    @staticmethod
    def from_flat(theta) -> "ParamVector":
        """Wrap a bare vector as a single unnamed block (scalar test models)."""
        vec = numerics.as_vec64(theta)
        return ParamVector(vec, (Block("theta", 0, (vec.shape[0],)),))


@dataclass(frozen=True)
class Batch:
    """Inputs, class labels, and domain ids of equal length n >= 1."""

    inputs: np.ndarray
    labels: np.ndarray
    domain_ids: np.ndarray

    def __post_init__(self):
        inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        domain_ids = np.ascontiguousarray(self.domain_ids, dtype=np.int64)
        if inputs.ndim != 2:
            raise ValueError(f"inputs must be an n x d matrix, got shape {inputs.shape}")
        n = inputs.shape[0]
        if n < 1:
            raise ValueError("batch must contain at least one sample")
        if labels.shape != (n,) or domain_ids.shape != (n,):
            raise ValueError(
                f"labels/domain_ids must have length {n}, got {labels.shape} and {domain_ids.shape}"
            )
        if labels.min() < 0:
            raise ValueError("labels must be non-negative class indices")
        if domain_ids.min() < 0:
            raise ValueError("domain_ids must be non-negative")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "domain_ids", domain_ids)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(self.inputs[idx], self.labels[idx], self.domain_ids[idx])


def domain_slices(batch: Batch) -> list[tuple[int, np.ndarray]]:
    """(domain_id, row indices) pairs in ascending domain-id order."""
    out = []
    for dom in np.unique(batch.domain_ids):
        out.append((int(dom), np.flatnonzero(batch.domain_ids == dom)))
    return out


def init_params(spec: MlpSpec, prng: numerics.Prng) -> ParamVector:
    """He-scaled gaussian weights (std sqrt(2/fan_in)) and zero biases."""
    layout = layout_for(spec)
    theta = numerics.zeros(spec.param_count())
    sizes = spec.layer_sizes
    for i, block in enumerate(layout):
        if block.name.startswith("w"):
            fan_in = sizes[i // 2]
            draws = numerics.gaussian(prng, block.size)
            theta[block.offset : block.offset + block.size] = draws * math.sqrt(2.0 / fan_in)
    return ParamVector(theta, layout)


def _check_inputs(spec: MlpSpec, inputs: np.ndarray) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != spec.input_dim:
        raise ValueError(f"inputs must be n x {spec.input_dim}, got shape {inputs.shape}")
    return inputs


def _forward_cached(spec: MlpSpec, theta: np.ndarray, inputs: np.ndarray):
    """Logits plus the per-layer pre-activations/outputs needed for backward."""
    layout = layout_for(spec)
    n_layers = len(spec.layer_sizes) - 1
    h = inputs
    hiddens = [h]
    pre_acts = []
    for i in range(n_layers):
        w = layout[2 * i].view(theta)
        b = layout[2 * i + 1].view(theta)
        z = h @ w + b
        if i < n_layers - 1:
            pre_acts.append(z)
            h = np.maximum(z, 0.0) if spec.activation == "relu" else np.tanh(z)
            hiddens.append(h)
        else:
            logits = z
    return logits, hiddens, pre_acts


def forward(spec: MlpSpec, params: ParamVector, inputs) -> np.ndarray:
    """Row i of the result holds the C logits for sample i."""
    inputs = _check_inputs(spec, inputs)
    logits, _, _ = _forward_cached(spec, params.theta, inputs)
    return logits


def _softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and d(loss)/d(logits), max-subtracted for stability."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    total = exps.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(total)
    n = logits.shape[0]
    rows = np.arange(n)
    loss = float(-log_probs[rows, labels].mean())
    dlogits = exps / total
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    return loss, dlogits


def mean_loss(spec: MlpSpec, theta: np.ndarray, inputs, labels) -> float:
    """Mean softmax cross-entropy over the given samples."""
    inputs = _check_inputs(spec, inputs)
    labels = np.asarray(labels, dtype=np.int64)
    if inputs.shape[0] == 0:
        raise ValueError("cannot evaluate loss on an empty batch")
    if labels.max() >= spec.n_classes:
        raise ValueError(f"label {labels.max()} out of range for {spec.n_classes} classes")
    logits, _, _ = _forward_cached(spec, theta, inputs)
    loss, _ = _softmax_cross_entropy(logits, labels)
    return loss


def mean_loss_and_grad(spec: MlpSpec, theta: np.ndarray, inputs, labels):
    """Mean cross-entropy and its exact gradient w.r.t. every theta entry."""
    inputs = _check_inputs(spec, inputs)
    labels = np.asarray(labels, dtype=np.int64)
    if inputs.shape[0] == 0:
        raise ValueError("cannot evaluate loss on an empty batch")
    if labels.max() >= spec.n_classes:
        raise ValueError(f"label {labels.max()} out of range for {spec.n_classes} classes")

    layout = layout_for(spec)
    n_layers = len(spec.layer_sizes) - 1
    logits, hiddens, pre_acts = _forward_cached(spec, theta, inputs)
    loss, delta = _softmax_cross_entropy(logits, labels)

    grad = numerics.zeros(theta.shape[0])
    for i in range(n_layers - 1, -1, -1):
        w_block, b_block = layout[2 * i], layout[2 * i + 1]
        h_in = hiddens[i]
        grad[w_block.offset : w_block.offset + w_block.size] = (h_in.T @ delta).ravel()
        grad[b_block.offset : b_block.offset + b_block.size] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ w_block.view(theta).T
            z = pre_acts[i - 1]
            if spec.activation == "relu":
                delta = np.where(z > 0.0, delta, 0.0)
            else:
                delta = delta * (1.0 - np.tanh(z) ** 2)
    return loss, grad


def loss_and_grad(spec: MlpSpec, params: ParamVector, batch: Batch):
    """Mean batch loss and analytic gradient (reverse accumulation)."""
    return mean_loss_and_grad(spec, params.theta, batch.inputs, batch.labels)


def finite_diff_grad(spec: MlpSpec, params: ParamVector, batch: Batch, h: float) -> np.ndarray:
    """Central-difference gradient (loss(theta + h e_j) - loss(theta - h e_j)) / 2h."""
    if h <= 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    if batch.n < 1:
        raise ValueError("cannot difference an empty batch")
    theta = params.theta
    grad = numerics.zeros(theta.shape[0])
    for j in range(theta.shape[0]):
        bumped = theta.copy()
        bumped[j] = theta[j] + h
        up = mean_loss(spec, bumped, batch.inputs, batch.labels)
        bumped[j] = theta[j] - h
        down = mean_loss(spec, bumped, batch.inputs, batch.labels)
        grad[j] = (up - down) / (2.0 * h)
    return grad
