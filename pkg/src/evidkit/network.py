"""Feature extractor, evidence head, and the SGD trainer.

The desk-scale backbone is a fully connected ReLU network on vector
inputs (a pooling op is provided so channel/height/width feature maps can
be fed through the same path). The evidence head is a single affine layer
from the C-dimensional feature vector to 2K outputs, passed through ReLU
so evidence is non-negative by construction; outputs are laid out as
[e_1_pos, e_1_neg, e_2_pos, e_2_neg, ...].

Everything runs in float64 and is deterministic given the seed: parameter
init and minibatch shuffling come from one seeded generator, and all
reductions have a fixed order. Returned parameter sets should be treated
as immutable; the trainer never mutates its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .base_rates import CIWTable, adjust_base_rates
from .errors import ConfigError, DataFormatError, TrainingDiverged
from .losses import batch_nll, batch_nll_grad
from .opinions import DEFAULT_PRIOR_WEIGHT

CHECKPOINT_MAGIC = "#evidkit-model"
CHECKPOINT_VERSION = "v1"

DEFAULT_HIDDEN = (64, 64)
DEFAULT_FEATURE_DIM = 32


@dataclass
class MlpParams:
    """Dense ReLU layers; layers[i] is (weight (out, in), bias (out,))."""

    layers: list[tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        prev_out = None
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if prev_out is not None and w.shape[1] != prev_out:
                raise ValueError(
                    f"layer {i}: input dim {w.shape[1]} != previous output dim {prev_out}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i}: non-finite parameters")
            prev_out = w.shape[0]

    @property
    def dim_in(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.layers[-1][0].shape[0]


@dataclass
class EvidenceHeadParams:
    """Affine evidence head: weight (C, 2K), bias (2K,)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("head weight must be 2-D and bias 1-D")
        if self.weight.shape[1] != self.bias.shape[0]:
            raise ValueError(
                f"head weight {self.weight.shape} and bias {self.bias.shape} disagree"
            )
        if self.weight.shape[1] % 2 != 0:
            raise ValueError("head output dim must be 2K (a pos/neg pair per class)")
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias).all()):
            raise ValueError("non-finite head parameters")

    @property
    def num_classes(self) -> int:
        return self.weight.shape[1] // 2

    @property
    def dim_in(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 0.1
    lr_decay_ratio: float = 0.1
    lr_decay_every: int = 30
    weight_decay: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.lr_decay_ratio <= 0 or not math.isfinite(self.lr_decay_ratio):
            raise ConfigError(f"lr_decay_ratio must be > 0, got {self.lr_decay_ratio}")
        if self.lr_decay_every < 1:
            raise ConfigError(f"lr_decay_every must be >= 1, got {self.lr_decay_every}")
        if self.weight_decay < 0 or not math.isfinite(self.weight_decay):
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass(frozen=True)
class TrainResult:
    mlp: MlpParams
    head: EvidenceHeadParams
    epoch_losses: tuple[float, ...] = field(default_factory=tuple)


def global_average_pool(feature_map: np.ndarray) -> np.ndarray:
    """Mean over the spatial dims of a (C, H, W) map -> (C,) vector."""
    f = np.asarray(feature_map, dtype=np.float64)
    if f.ndim != 3 or min(f.shape) < 1:
        raise ValueError(f"expected a (C, H, W) feature map, got shape {f.shape}")
    if not np.isfinite(f).all():
        raise ValueError("feature map contains non-finite entries")
    return f.mean(axis=(1, 2))


def extract_features(x: np.ndarray, mlp: MlpParams) -> np.ndarray:
    """Forward pass of the backbone; accepts (D,) or (N, D) input."""
    h = np.asarray(x, dtype=np.float64)
    single = h.ndim == 1
    if single:
        h = h[None, :]
    if h.ndim != 2 or h.shape[1] != mlp.dim_in:
        raise ValueError(
            f"input shape {np.asarray(x).shape} does not match backbone input dim {mlp.dim_in}"
        )
    for w, b in mlp.layers:
        h = np.maximum(h @ w.T + b, 0.0)
    return h[0] if single else h


def evidence_from_features(features: np.ndarray, head: EvidenceHeadParams) -> np.ndarray:
    """Evidence pairs from pooled features: relu(f @ W + b) as (..., K, 2)."""
    f = np.asarray(features, dtype=np.float64)
    single = f.ndim == 1
    if single:
        f = f[None, :]
    if f.ndim != 2 or f.shape[1] != head.dim_in:
        raise ValueError(
            f"feature shape {np.asarray(features).shape} does not match head input dim "
            f"{head.dim_in}"
        )
    ev = np.maximum(f @ head.weight + head.bias, 0.0)
    ev = ev.reshape(f.shape[0], head.num_classes, 2)
    return ev[0] if single else ev


def batch_evidence(mlp: MlpParams, head: EvidenceHeadParams, x: np.ndarray) -> np.ndarray:
    """Backbone + head in one call: (N, D) inputs -> (N, K, 2) evidence."""
    return evidence_from_features(extract_features(x, mlp), head)


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_model(
    dim_in: int,
    num_classes: int,
    hidden=DEFAULT_HIDDEN,
    feature_dim: int = DEFAULT_FEATURE_DIM,
    seed: int | np.random.Generator = 0,
) -> tuple[MlpParams, EvidenceHeadParams]:
    """Seeded uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] initialization."""
    if dim_in < 1 or num_classes < 1 or feature_dim < 1 or any(h < 1 for h in hidden):
        raise ConfigError("all model dimensions must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dims = [dim_in, *hidden, feature_dim]
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w = _uniform_init(rng, (d_out, d_in), d_in)
        b = _uniform_init(rng, (d_out,), d_in)
        layers.append((w, b))
    head_w = _uniform_init(rng, (feature_dim, 2 * num_classes), feature_dim)
    head_b = _uniform_init(rng, (2 * num_classes,), feature_dim)
    return MlpParams(layers), EvidenceHeadParams(head_w, head_b)


def init_head(
    feature_dim: int, num_classes: int, seed: int | np.random.Generator = 0
) -> EvidenceHeadParams:
    """Fresh seeded evidence head, e.g. for backbone-frozen fine-tuning."""
    if feature_dim < 1 or num_classes < 1:
        raise ConfigError("all model dimensions must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return EvidenceHeadParams(
        _uniform_init(rng, (feature_dim, 2 * num_classes), feature_dim),
        _uniform_init(rng, (2 * num_classes,), feature_dim),
    )


def _forward_cached(mlp, head, x):
    acts = [x]
    zs = []
    h = x
    for w, b in mlp.layers:
        z = h @ w.T + b
        h = np.maximum(z, 0.0)
        zs.append(z)
        acts.append(h)
    z_head = h @ head.weight + head.bias
    evidence = np.maximum(z_head, 0.0)
    return acts, zs, z_head, evidence


def batch_loss(
    mlp: MlpParams,
    head: EvidenceHeadParams,
    x: np.ndarray,
    y: np.ndarray,
    a_pos: np.ndarray,
    a_neg: np.ndarray,
    prior_weight: float = DEFAULT_PRIOR_WEIGHT,
) -> float:
    """Mean per-sample loss over a batch; the quantity the trainer descends."""
    evidence = batch_evidence(mlp, head, x).reshape(x.shape[0], head.num_classes, 2)
    return float(batch_nll(evidence, y, a_pos, a_neg, prior_weight).mean())


def batch_loss_grads(mlp, head, x, y, a_pos, a_neg, prior_weight=DEFAULT_PRIOR_WEIGHT):
    """Mean loss plus its gradients for every backbone and head parameter.

    ReLU uses subgradient 0 at exactly 0. Returns
    (loss, [(dW, db) per layer], dW_head, db_head).
    """
    n = x.shape[0]
    acts, zs, z_head, evidence = _forward_cached(mlp, head, x)
    losses, d_evidence = batch_nll_grad(
        evidence.reshape(n, head.num_classes, 2), y, a_pos, a_neg, prior_weight
    )
    loss = float(losses.mean())

    d_ev = d_evidence.reshape(n, -1) / n
    dz_head = d_ev * (z_head > 0.0)
    g_head_w = acts[-1].T @ dz_head
    g_head_b = dz_head.sum(axis=0)

    dh = dz_head @ head.weight.T
    grads = []
    for (w, _), z, a_prev in zip(reversed(mlp.layers), reversed(zs), reversed(acts[:-1])):
        dz = dh * (z > 0.0)
        grads.append((dz.T @ a_prev, dz.sum(axis=0)))
        dh = dz @ w
    grads.reverse()
    return loss, grads, g_head_w, g_head_b


def sgd_step(param: np.ndarray, grad: np.ndarray, lr: float, weight_decay: float) -> np.ndarray:
    """One decoupled step: param * (1 - lr * wd) - lr * grad.

    With a zero gradient this scales the parameter by exactly
    (1 - lr * wd).
    """
    return param * (1.0 - lr * weight_decay) - lr * grad


def _clone_mlp(mlp: MlpParams) -> MlpParams:
    return MlpParams([(w.copy(), b.copy()) for w, b in mlp.layers])


def _clone_head(head: EvidenceHeadParams) -> EvidenceHeadParams:
    return EvidenceHeadParams(head.weight.copy(), head.bias.copy())


def _fit(mlp, head, x, y, a_pos, a_neg, config, rng, prior_weight, update_backbone):
    n = x.shape[0]
    epoch_losses = []
    for epoch in range(config.epochs):
        lr = config.learning_rate * config.lr_decay_ratio ** (epoch // config.lr_decay_every)
        order = rng.permutation(n)
        total = 0.0
        for batch_idx, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            loss, grads, g_head_w, g_head_b = batch_loss_grads(
                mlp, head, x[idx], y[idx], a_pos, a_neg, prior_weight
            )
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, batch_idx, loss)
            total += loss * len(idx)
            if update_backbone:
                mlp = MlpParams([
                    (
                        sgd_step(w, gw, lr, config.weight_decay),
                        sgd_step(b, gb, lr, config.weight_decay),
                    )
                    for (w, b), (gw, gb) in zip(mlp.layers, grads)
                ])
            head = EvidenceHeadParams(
                sgd_step(head.weight, g_head_w, lr, config.weight_decay),
                sgd_step(head.bias, g_head_b, lr, config.weight_decay),
            )
        epoch_losses.append(total / n)
    return mlp, head, epoch_losses


def _base_rate_arrays(ciw: CIWTable):
    bases = adjust_base_rates(ciw)
    return (
        np.array([p.a_pos for p in bases], dtype=np.float64),
        np.array([p.a_neg for p in bases], dtype=np.float64),
    )


def _validate_training_data(x, y, k):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"incompatible data shapes {x.shape} and {y.shape}")
    if x.shape[0] == 0:
        raise ValueError("training data is empty")
    if y.shape[1] != k:
        raise ValueError(f"labels have {y.shape[1]} classes but the CIW table has {k}")
    return x, y


def train_model(
    features: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    ciw: CIWTable,
    *,
    hidden=DEFAULT_HIDDEN,
    feature_dim: int = DEFAULT_FEATURE_DIM,
    prior_weight: float = DEFAULT_PRIOR_WEIGHT,
) -> TrainResult:
    """Train the backbone and evidence head from scratch with minibatch SGD.

    Labels are multi-hot (N, K) over the known classes, in CIW-table
    order; base rates come from the table via the expert assignment.
    """
    x, y = _validate_training_data(features, labels, len(ciw))
    a_pos, a_neg = _base_rate_arrays(ciw)
    rng = np.random.default_rng(config.seed)
    mlp, head = init_model(x.shape[1], len(ciw), hidden, feature_dim, rng)
    mlp, head, losses = _fit(
        mlp, head, x, y, a_pos, a_neg, config, rng, prior_weight, update_backbone=True
    )
    return TrainResult(mlp, head, tuple(losses))


def finetune_head(
    mlp: MlpParams,
    head: EvidenceHeadParams,
    features: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    ciw: CIWTable,
    *,
    prior_weight: float = DEFAULT_PRIOR_WEIGHT,
) -> TrainResult:
    """Update only the evidence head; the backbone is frozen (not touched)."""
    x, y = _validate_training_data(features, labels, len(ciw))
    if head.num_classes != len(ciw):
        raise ValueError(f"head has {head.num_classes} classes but the CIW table has {len(ciw)}")
    a_pos, a_neg = _base_rate_arrays(ciw)
    rng = np.random.default_rng(config.seed)
    _, new_head, losses = _fit(
        mlp, _clone_head(head), x, y, a_pos, a_neg, config, rng, prior_weight,
        update_backbone=False,
    )
    return TrainResult(mlp, new_head, tuple(losses))


def _format_row(row) -> str:
    return " ".join(repr(float(v)) for v in row)


def save_checkpoint(path, mlp: MlpParams, head: EvidenceHeadParams) -> None:
    """Write a versioned text checkpoint with round-trip-exact decimals."""
    hidden = [w.shape[0] for w, _ in mlp.layers[:-1]]
    lines = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
        f"input {mlp.dim_in}",
        "hidden " + (",".join(str(h) for h in hidden) if hidden else "-"),
        f"features {mlp.dim_out}",
        f"classes {head.num_classes}",
    ]
    tensors = []
    for i, (w, b) in enumerate(mlp.layers):
        tensors.append((f"backbone.{i}.weight", w))
        tensors.append((f"backbone.{i}.bias", b[None, :]))
    tensors.append(("head.weight", head.weight))
    tensors.append(("head.bias", head.bias[None, :]))
    for name, t in tensors:
        lines.append(f"param {name} {t.shape[0]} {t.shape[1]}")
        for row in t:
            lines.append(_format_row(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[MlpParams, EvidenceHeadParams]:
    """Read a checkpoint written by save_checkpoint; rejects unknown versions."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError("empty checkpoint file", path=path, line=1)
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
        raise DataFormatError("not an evidkit checkpoint", path=path, line=1)
    if magic[1] != CHECKPOINT_VERSION:
        raise DataFormatError(
            f"unsupported checkpoint version {magic[1]!r} (expected {CHECKPOINT_VERSION})",
            path=path, line=1,
        )

    def header_value(lineno, key):
        if lineno >= len(lines):
            raise DataFormatError(f"missing {key!r} header", path=path, line=lineno + 1)
        parts = lines[lineno].split(None, 1)
        if len(parts) != 2 or parts[0] != key:
            raise DataFormatError(f"expected {key!r} header", path=path, line=lineno + 1)
        return parts[1]

    try:
        dim_in = int(header_value(1, "input"))
        hidden_raw = header_value(2, "hidden")
        hidden = [] if hidden_raw == "-" else [int(h) for h in hidden_raw.split(",")]
        feature_dim = int(header_value(3, "features"))
        num_classes = int(header_value(4, "classes"))
    except ValueError as exc:
        raise DataFormatError(f"bad header value: {exc}", path=path) from exc

    dims = [dim_in, *hidden, feature_dim]
    expected = []
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        expected.append((f"backbone.{i}.weight", (d_out, d_in)))
        expected.append((f"backbone.{i}.bias", (1, d_out)))
    expected.append(("head.weight", (feature_dim, 2 * num_classes)))
    expected.append(("head.bias", (1, 2 * num_classes)))

    tensors = {}
    lineno = 5
    for name, shape in expected:
        if lineno >= len(lines):
            raise DataFormatError(f"missing parameter {name!r}", path=path, line=lineno + 1)
        parts = lines[lineno].split()
        if len(parts) != 4 or parts[0] != "param" or parts[1] != name:
            raise DataFormatError(f"expected parameter {name!r}", path=path, line=lineno + 1)
        if (int(parts[2]), int(parts[3])) != shape:
            raise DataFormatError(
                f"parameter {name!r} has shape {(parts[2], parts[3])}, expected {shape}",
                path=path, line=lineno + 1,
            )
        lineno += 1
        rows = []
        for _ in range(shape[0]):
            if lineno >= len(lines):
                raise DataFormatError(
                    f"truncated parameter {name!r}", path=path, line=lineno + 1
                )
            try:
                row = [float(v) for v in lines[lineno].split()]
            except ValueError as exc:
                raise DataFormatError(f"bad value: {exc}", path=path, line=lineno + 1) from exc
            if len(row) != shape[1]:
                raise DataFormatError(
                    f"parameter {name!r} row has {len(row)} values, expected {shape[1]}",
                    path=path, line=lineno + 1,
                )
            rows.append(row)
            lineno += 1
        tensors[name] = np.array(rows, dtype=np.float64)

    layers = []
    for i in range(len(dims) - 1):
        layers.append((tensors[f"backbone.{i}.weight"], tensors[f"backbone.{i}.bias"][0]))
    mlp = MlpParams(layers)
    head = EvidenceHeadParams(tensors["head.weight"], tensors["head.bias"][0])
    return mlp, head
