"""Trainable 1-D convolutional classifier over raw waveforms.

Plain numpy, float64 end to end: forward pass, exact backpropagation,
SGD with momentum, step learning-rate schedules, per-layer freeze
policies, and a binary checkpoint format.  Small enough to gradient-check
against finite differences, deterministic enough to reproduce byte for
byte from a seed.
"""

from __future__ import annotations

import copy
import json
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ContractError, ShapeError

CONV = "conv1d"
RELU = "relu"
MAXPOOL = "maxpool"
GAP = "global_avg_pool"
DENSE = "dense"
SOFTMAX = "softmax"

LAYER_KINDS = (CONV, RELU, MAXPOOL, GAP, DENSE, SOFTMAX)

CE = "CE"
KLD = "KLD"


@dataclass(frozen=True)
class LayerSpec:
    """One layer in the block chain. Unused fields stay at their defaults."""

    kind: str
    kernel: int = 1
    filters: int = 0
    stride: int = 1
    units: int = 0

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise ShapeError(f"unknown layer kind {self.kind!r}")
        if self.kernel < 1 or self.stride < 1:
            raise ShapeError(f"{self.kind}: kernel and stride must be >= 1")
        if self.kind == CONV and self.filters < 1:
            raise ShapeError("conv1d: filters must be >= 1")
        if self.kind == DENSE and self.units < 1:
            raise ShapeError("dense: units must be >= 1")


def conv1d(kernel: int, filters: int, stride: int = 1) -> LayerSpec:
    return LayerSpec(CONV, kernel=kernel, filters=filters, stride=stride)


def relu() -> LayerSpec:
    return LayerSpec(RELU)


def maxpool(kernel: int, stride: int | None = None) -> LayerSpec:
    return LayerSpec(MAXPOOL, kernel=kernel, stride=kernel if stride is None else stride)


def global_avg_pool() -> LayerSpec:
    return LayerSpec(GAP)


def dense(units: int) -> LayerSpec:
    return LayerSpec(DENSE, units=units)


def softmax_layer() -> LayerSpec:
    return LayerSpec(SOFTMAX)


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: waveform in, class logits out."""

    input_length: int
    num_classes: int
    blocks: tuple[LayerSpec, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if self.num_classes < 2:
            raise ShapeError("num_classes must be >= 2")
        if self.input_length < 1:
            raise ShapeError("input_length must be >= 1")
        trace_shapes(self)


def trace_shapes(spec: NetworkSpec) -> list[tuple[int | None, int]]:
    """Walk the block chain and return (length, channels) after each layer.

    Length is None once the time axis has been pooled away.  Raises
    ShapeError naming the offending layer index when the chain is
    inconsistent.  The enforced chain is
    [conv/relu/maxpool]* ending in one global_avg_pool, one dense,
    one softmax, with at least one conv before the pooling.
    """
    length: int | None = spec.input_length
    channels = 1
    shapes: list[tuple[int | None, int]] = []
    saw_conv = False
    saw_gap = False
    saw_dense = False
    for i, layer in enumerate(spec.blocks):
        if layer.kind in (CONV, MAXPOOL):
            if length is None:
                raise ShapeError(f"layer {i}: {layer.kind} after global_avg_pool")
            if length < layer.kernel:
                raise ShapeError(
                    f"layer {i}: kernel {layer.kernel} exceeds input length {length}"
                )
            length = (length - layer.kernel) // layer.stride + 1
            if layer.kind == CONV:
                channels = layer.filters
                saw_conv = True
        elif layer.kind == RELU:
            pass
        elif layer.kind == GAP:
            if length is None:
                raise ShapeError(f"layer {i}: duplicate global_avg_pool")
            if not saw_conv:
                raise ShapeError(f"layer {i}: global_avg_pool requires a conv before it")
            length = None
            saw_gap = True
        elif layer.kind == DENSE:
            if not saw_gap:
                raise ShapeError(f"layer {i}: dense before global_avg_pool")
            if saw_dense:
                raise ShapeError(f"layer {i}: only one dense layer is supported")
            channels = layer.units
            saw_dense = True
        elif layer.kind == SOFTMAX:
            if i != len(spec.blocks) - 1:
                raise ShapeError(f"layer {i}: softmax must be the final layer")
        shapes.append((length, channels))
    if not spec.blocks or spec.blocks[-1].kind != SOFTMAX:
        raise ShapeError("block chain must end with softmax")
    if not saw_dense:
        raise ShapeError("block chain must contain a dense layer")
    if channels != spec.num_classes:
        raise ShapeError(
            f"dense layer units {channels} != num_classes {spec.num_classes}"
        )
    return shapes


def last_conv_index(spec: NetworkSpec) -> int:
    idx = [i for i, b in enumerate(spec.blocks) if b.kind == CONV]
    if not idx:
        raise ContractError("network has no conv layer")
    return idx[-1]


@dataclass
class LayerParams:
    weight: np.ndarray
    bias: np.ndarray

    def copy(self) -> "LayerParams":
        return LayerParams(self.weight.copy(), self.bias.copy())


@dataclass
class NetworkState:
    """Parameters, momentum buffers, and freeze mask for one network.

    ``revision`` counts completed fine-tuning rounds and versions the
    feature cache downstream.
    """

    spec: NetworkSpec
    params: list[LayerParams | None]
    velocity: list[LayerParams | None]
    freeze_mask: np.ndarray
    revision: int = 0

    def clone(self) -> "NetworkState":
        return NetworkState(
            spec=self.spec,
            params=[p.copy() if p is not None else None for p in self.params],
            velocity=[v.copy() if v is not None else None for v in self.velocity],
            freeze_mask=self.freeze_mask.copy(),
            revision=self.revision,
        )

    def param_layer_indices(self) -> list[int]:
        return [i for i, p in enumerate(self.params) if p is not None]

    def num_params(self) -> int:
        return sum(p.weight.size + p.bias.size for p in self.params if p is not None)

    def params_digest(self) -> bytes:
        import hashlib

        h = hashlib.sha256()
        for p in self.params:
            if p is not None:
                h.update(p.weight.tobytes())
                h.update(p.bias.tobytes())
        return h.digest()


def _init_layer(layer: LayerSpec, in_channels: int, rng: np.random.Generator) -> LayerParams:
    # Uniform Glorot-style bound, biases zero.
    if layer.kind == CONV:
        fan_in = in_channels * layer.kernel
        fan_out = layer.filters * layer.kernel
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(in_channels, layer.kernel, layer.filters))
        b = np.zeros(layer.filters)
    else:  # dense
        bound = math.sqrt(6.0 / (in_channels + layer.units))
        w = rng.uniform(-bound, bound, size=(in_channels, layer.units))
        b = np.zeros(layer.units)
    return LayerParams(w.astype(np.float64), b)


def build_network(spec: NetworkSpec) -> NetworkState:
    """Initialize parameters deterministically from ``spec.seed``."""
    trace_shapes(spec)
    rng = np.random.default_rng(spec.seed)
    params: list[LayerParams | None] = []
    channels = 1
    for layer in spec.blocks:
        if layer.kind == CONV:
            params.append(_init_layer(layer, channels, rng))
            channels = layer.filters
        elif layer.kind == DENSE:
            params.append(_init_layer(layer, channels, rng))
            channels = layer.units
        else:
            params.append(None)
    velocity = [
        LayerParams(np.zeros_like(p.weight), np.zeros_like(p.bias)) if p is not None else None
        for p in params
    ]
    return NetworkState(
        spec=spec,
        params=params,
        velocity=velocity,
        freeze_mask=np.zeros(len(spec.blocks), dtype=bool),
    )


# ---------------------------------------------------------------------------
# Forward / backward


@dataclass
class Trace:
    """Per-layer caches required by backprop plus the tagged feature vector."""

    caches: list[dict]
    penultimate: np.ndarray | None = None


def _as_batch(batch: np.ndarray, input_length: int) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != input_length:
        raise ShapeError(
            f"expected waveforms of length {input_length}, got shape {x.shape}"
        )
    return x[:, :, None]  # (B, L, 1)


def _conv_cols(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=1)
    return win[:, ::stride]  # (B, Lout, C, k)


def forward(net: NetworkState, batch: np.ndarray) -> tuple[np.ndarray, Trace]:
    """Run the network, returning logits (B, C) and the activation trace.

    The output of global average pooling over the last conv activation is
    tagged ``penultimate`` on the trace; it doubles as the fixed-dimension
    feature vector of each waveform.
    """
    x = _as_batch(batch, net.spec.input_length)
    caches: list[dict] = []
    penultimate = None
    for layer, p in zip(net.spec.blocks, net.params):
        if layer.kind == CONV:
            cols = _conv_cols(x, layer.kernel, layer.stride)
            b_, lout, cin, k = cols.shape
            flat = cols.reshape(b_, lout, cin * k)
            x = flat @ p.weight.reshape(cin * k, -1) + p.bias
            caches.append({"cols": flat})
        elif layer.kind == RELU:
            caches.append({"mask": x > 0})
            x = np.maximum(x, 0.0)
        elif layer.kind == MAXPOOL:
            win = _conv_cols(x, layer.kernel, layer.stride)
            arg = win.argmax(axis=3)
            caches.append({"arg": arg, "in_len": x.shape[1]})
            x = np.take_along_axis(win, arg[..., None], axis=3)[..., 0]
        elif layer.kind == GAP:
            caches.append({"in_len": x.shape[1]})
            x = x.mean(axis=1)
            penultimate = x
        elif layer.kind == DENSE:
            caches.append({"input": x})
            x = x @ p.weight + p.bias
        else:  # softmax marker: loss and prediction work on raw logits
            caches.append({})
    return x, Trace(caches=caches, penultimate=penultimate)


# Conv backward needs the pre-conv input length; recover it from spec walk.
def _layer_input_lengths(spec: NetworkSpec) -> list[int | None]:
    lengths: list[int | None] = []
    length: int | None = spec.input_length
    for layer in spec.blocks:
        lengths.append(length)
        if layer.kind in (CONV, MAXPOOL):
            length = (length - layer.kernel) // layer.stride + 1
        elif layer.kind == GAP:
            length = None
    return lengths


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_grad(
    logits: np.ndarray, targets: np.ndarray, loss: str = KLD
) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient w.r.t. the logits.

    KLD and CE share the gradient (softmax(logits) - t) / batch; they
    differ by the target entropy, a constant in the logits.  Rows of
    ``targets`` are probability distributions; 0 * log 0 is taken as 0.
    """
    if loss not in (CE, KLD):
        raise ContractError(f"unknown loss {loss!r}")
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.shape:
        raise ShapeError(f"targets shape {t.shape} != logits shape {logits.shape}")
    sums = t.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ContractError(f"target row {bad} sums to {sums[bad]!r}, expected 1")
    batch = logits.shape[0]
    logp = _log_softmax(logits)
    ce_rows = -(t * logp).sum(axis=1)
    if loss == CE:
        value = ce_rows.mean()
    else:
        ent = np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0).sum(axis=1)
        value = (ce_rows + ent).mean()
    grad = (softmax(logits) - t) / batch
    return float(value), grad


@dataclass
class Gradients:
    """Per-layer (dW, db) aligned with the block chain.

    ``droppable`` mirrors the freeze mask at computation time: gradients
    of frozen layers are still exact but may be discarded by the caller.
    """

    layers: list[LayerParams | None]
    droppable: list[bool]


def backprop(
    net: NetworkState, batch: np.ndarray, targets: np.ndarray, loss: str = KLD
) -> Gradients:
    """Exact parameter gradients of the mean loss over the batch."""
    logits, trace = forward(net, batch)
    _, dy = loss_and_grad(logits, targets, loss)
    in_lengths = _layer_input_lengths(net.spec)
    grads: list[LayerParams | None] = [None] * len(net.spec.blocks)
    for i in range(len(net.spec.blocks) - 1, -1, -1):
        layer = net.spec.blocks[i]
        p = net.params[i]
        cache = trace.caches[i]
        if layer.kind == SOFTMAX:
            continue
        if layer.kind == DENSE:
            xin = cache["input"]
            grads[i] = LayerParams(xin.T @ dy, dy.sum(axis=0))
            dy = dy @ p.weight.T
        elif layer.kind == GAP:
            l_in = cache["in_len"]
            dy = np.broadcast_to(dy[:, None, :] / l_in, (dy.shape[0], l_in, dy.shape[1]))
        elif layer.kind == MAXPOOL:
            arg = cache["arg"]
            b_, lout, c = dy.shape
            dx = np.zeros((b_, cache["in_len"], c))
            for j in range(layer.kernel):
                sel = arg == j
                dx[:, j : j + layer.stride * lout : layer.stride, :] += np.where(sel, dy, 0.0)
            dy = dx
        elif layer.kind == RELU:
            dy = dy * cache["mask"]
        elif layer.kind == CONV:
            flat = cache["cols"]  # (B, Lout, Cin*k)
            b_, lout, _ = flat.shape
            cin, k, f = p.weight.shape
            dw = flat.reshape(-1, cin * k).T @ dy.reshape(-1, f)
            db = dy.sum(axis=(0, 1))
            grads[i] = LayerParams(dw.reshape(cin, k, f), db)
            dcols = (dy @ p.weight.reshape(cin * k, f).T).reshape(b_, lout, cin, k)
            dx = np.zeros((b_, in_lengths[i], cin))
            for j in range(k):
                dx[:, j : j + layer.stride * lout : layer.stride, :] += dcols[:, :, :, j]
            dy = dx
    return Gradients(layers=grads, droppable=list(net.freeze_mask))


def sgd_update(
    net: NetworkState, grads: Gradients, lr: float, momentum: float = 0.0
) -> NetworkState:
    """In-place momentum SGD step; frozen layers stay bit-identical."""
    if lr <= 0:
        raise ContractError("lr must be > 0")
    for i in net.param_layer_indices():
        g = grads.layers[i]
        if g is None:
            raise ShapeError(f"layer {i}: missing gradient")
        p, v = net.params[i], net.velocity[i]
        if g.weight.shape != p.weight.shape or g.bias.shape != p.bias.shape:
            raise ShapeError(f"layer {i}: gradient shape mismatch")
        if net.freeze_mask[i]:
            continue
        v.weight *= momentum
        v.weight -= lr * g.weight
        v.bias *= momentum
        v.bias -= lr * g.bias
        p.weight += v.weight
        p.bias += v.bias
    return net


# ---------------------------------------------------------------------------
# Training configuration and schedules


@dataclass(frozen=True)
class TrainConfig:
    """Epoch budget, LR schedule, and optimizer settings.

    ``schedule`` entries below 1 are fractions of the epoch budget
    (resolved to floor(fraction * epochs)); entries >= 1 are absolute
    epoch indices.  At each resolved marker the learning rate drops by
    ``lr_factor``.
    """

    epochs: int
    base_lr: float = 0.1
    schedule: tuple[float, ...] = ()
    lr_factor: float = 0.1
    momentum: float = 0.9
    batch_size: int = 16
    loss: str = CE
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "schedule", tuple(self.schedule))
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")
        if self.base_lr <= 0:
            raise ContractError("base_lr must be > 0")
        if not 0 < self.lr_factor < 1:
            raise ContractError("lr_factor must be in (0, 1)")
        if not 0 <= self.momentum < 1:
            raise ContractError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if self.loss not in (CE, KLD):
            raise ContractError(f"unknown loss {self.loss!r}")
        if any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ContractError("schedule markers must be strictly increasing")
        for m in self.schedule:
            if m <= 0:
                raise ContractError("schedule markers must be positive")
            if m >= 1 and self.epochs > 0 and m >= self.epochs:
                raise ContractError(f"absolute marker {m} must be < epochs")


def _resolved_markers(config: TrainConfig) -> list[int]:
    return [
        int(m * config.epochs) if m < 1 else int(m) for m in config.schedule
    ]


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Step schedule: base_lr * lr_factor^(markers at or before epoch)."""
    if not 0 <= epoch < max(config.epochs, 1):
        raise ContractError(f"epoch {epoch} outside [0, {config.epochs})")
    drops = sum(1 for m in _resolved_markers(config) if m <= epoch)
    return config.base_lr * config.lr_factor**drops


NO_FREEZE = "no_freeze"
FIXED_FREEZE = "fixed_freeze"
SCHEDULED_FREEZE = "scheduled_freeze"


@dataclass(frozen=True)
class FreezePolicy:
    """Which parameterized layers may update during fine-tuning."""

    kind: str = NO_FREEZE
    tail_layers: int = 3
    stage_epochs: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "stage_epochs", tuple(self.stage_epochs))
        if self.kind not in (NO_FREEZE, FIXED_FREEZE, SCHEDULED_FREEZE):
            raise ContractError(f"unknown freeze policy {self.kind!r}")
        if self.tail_layers < 1:
            raise ContractError("tail_layers must be >= 1")
        if self.kind == SCHEDULED_FREEZE and not self.stage_epochs:
            raise ContractError("scheduled_freeze needs stage_epochs")


def apply_freeze_policy(
    net: NetworkState, policy: FreezePolicy, epoch: int
) -> np.ndarray:
    """Freeze mask for the given epoch.

    fixed_freeze keeps only the trailing ``tail_layers`` parameterized
    layers trainable.  scheduled_freeze widens the trainable tail from 3
    to 5 to 7 layers as the cumulative stage lengths pass; epochs beyond
    the last stage clamp to the final stage.
    """
    mask = np.zeros(len(net.spec.blocks), dtype=bool)
    plist = net.param_layer_indices()
    if policy.kind == NO_FREEZE:
        return mask
    if policy.kind == FIXED_FREEZE:
        if policy.tail_layers > len(plist):
            raise ContractError(
                f"tail_layers {policy.tail_layers} exceeds {len(plist)} parameterized layers"
            )
        tail = policy.tail_layers
    else:
        cum = np.cumsum(policy.stage_epochs)
        stage = int(np.searchsorted(cum, epoch, side="right"))
        stage = min(stage, len(cum) - 1)
        tail = min(3 + 2 * stage, len(plist))
    for i in plist[: len(plist) - tail]:
        mask[i] = True
    return mask


# ---------------------------------------------------------------------------
# Training and evaluation


def _one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    out = np.zeros((y.shape[0], num_classes))
    out[np.arange(y.shape[0]), y] = 1.0
    return out


def predict_logits(net: NetworkState, x: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Forward pass without keeping traces; chunked for memory."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    outs = [forward(net, x[i : i + chunk])[0] for i in range(0, x.shape[0], chunk)]
    return np.concatenate(outs, axis=0)


def evaluate(net: NetworkState, dataset: tuple[np.ndarray, np.ndarray]) -> float:
    """Exact-match accuracy; argmax ties break to the lowest class index."""
    x, y = dataset
    if len(x) == 0:
        raise ContractError("evaluate: empty dataset")
    preds = predict_logits(net, x).argmax(axis=1)
    return float((preds == np.asarray(y)).mean())


def train(
    net: NetworkState,
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
    policy: FreezePolicy | None = None,
) -> tuple[NetworkState, float]:
    """Mini-batch SGD for ``config.epochs`` epochs; keep the best epoch.

    Batches are drawn from a fresh permutation each epoch, seeded by
    ``config.rng_seed``.  After every epoch the validation accuracy is
    measured and the checkpoint with the highest value is returned (ties
    resolve to the earliest epoch).  The input net is never mutated.
    """
    x_tr, y_tr = train_set
    if len(x_tr) == 0 or len(val_set[0]) == 0:
        raise ContractError("train: empty training or validation set")
    policy = policy or FreezePolicy(NO_FREEZE)
    work = net.clone()
    if config.epochs == 0:
        return work, evaluate(work, val_set)
    rng = np.random.default_rng(config.rng_seed)
    targets = _one_hot(np.asarray(y_tr), net.spec.num_classes)
    x_tr = np.asarray(x_tr, dtype=np.float64)
    n = x_tr.shape[0]
    best_net: NetworkState | None = None
    best_val = -1.0
    for epoch in range(config.epochs):
        work.freeze_mask = apply_freeze_policy(work, policy, epoch)
        lr = lr_at(config, epoch)
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            grads = backprop(work, x_tr[idx], targets[idx], config.loss)
            sgd_update(work, grads, lr, config.momentum)
        val_acc = evaluate(work, val_set)
        if val_acc > best_val:
            best_val = val_acc
            best_net = work.clone()
    assert best_net is not None
    return best_net, best_val


def prepare_for_dafl(
    net: NetworkState,
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
) -> NetworkState:
    """Rebuild the last conv with 5*num_classes filters, then train.

    The rebuilt conv and the downstream dense layer get fresh seeded
    initializations; all other layers keep their current parameters.
    """
    lconv = last_conv_index(net.spec)
    c = net.spec.num_classes
    blocks = list(net.spec.blocks)
    blocks[lconv] = replace(blocks[lconv], filters=5 * c)
    new_spec = NetworkSpec(
        input_length=net.spec.input_length,
        num_classes=c,
        blocks=tuple(blocks),
        seed=net.spec.seed,
    )
    fresh = build_network(new_spec)
    rebuilt = fresh.param_layer_indices()
    for i in rebuilt:
        if i != lconv and new_spec.blocks[i].kind != DENSE:
            fresh.params[i] = net.params[i].copy()
    # the single dense layer always reshapes with the new feature width
    fresh.revision = net.revision
    best, _ = train(fresh, train_set, val_set, config)
    return best


# ---------------------------------------------------------------------------
# Checkpoint I/O

_MAGIC = b"DAFLNET1"


def save_network(net: NetworkState, path) -> None:
    """Binary checkpoint: magic, length-prefixed spec JSON, raw float64 arrays."""
    doc = {
        "input_length": net.spec.input_length,
        "num_classes": net.spec.num_classes,
        "seed": net.spec.seed,
        "blocks": [
            {
                "kind": b.kind,
                "kernel": b.kernel,
                "filters": b.filters,
                "stride": b.stride,
                "units": b.units,
            }
            for b in net.spec.blocks
        ],
    }
    header = json.dumps(doc, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for p in net.params:
            if p is not None:
                fh.write(np.ascontiguousarray(p.weight, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(p.bias, dtype="<f8").tobytes())


def load_network(path) -> NetworkState:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ContractError(f"{path}: not a network checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        doc = json.loads(fh.read(hlen).decode("utf-8"))
        spec = NetworkSpec(
            input_length=doc["input_length"],
            num_classes=doc["num_classes"],
            blocks=tuple(LayerSpec(**b) for b in doc["blocks"]),
            seed=doc["seed"],
        )
        net = build_network(spec)
        for p in net.params:
            if p is None:
                continue
            for arr in (p.weight, p.bias):
                raw = fh.read(arr.size * 8)
                if len(raw) != arr.size * 8:
                    raise ContractError(f"{path}: truncated checkpoint")
                arr[...] = np.frombuffer(raw, dtype="<f8").reshape(arr.shape)
    return net
