"""A miniature Vision Transformer classifier built on :mod:`explagree.autodiff`.

Architecture: non-overlapping patches -> linear embedding -> prepended
classification token + learned positions -> ``n_layers`` pre-norm blocks of
multi-head self-attention and a GELU MLP -> layer-norm on the classification
token -> linear head.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .autodiff import GradTape, Tensor
from .rng import make_rng

log = logging.getLogger(__name__)

MLP_RATIO = 4
LN_EPS = 1e-5
_CHUNK = 512


@dataclass(frozen=True)
class ViTConfig:
    image_size: int = 32
    patch_size: int = 8
    embed_dim: int = 16
    n_layers: int = 2
    n_heads: int = 2
    n_classes: int = 4
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, np.integer)) or v < 0 or v > 0xFFFFFFFF:
                raise ValueError(f"{f.name} must be an unsigned 32-bit integer, got {v!r}")
            if f.name != "seed" and v == 0:
                raise ValueError(f"{f.name} must be positive")
        if self.image_size % self.patch_size:
            raise ValueError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.n_heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by n_heads {self.n_heads}")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid ** 2

    @property
    def n_tokens(self) -> int:
        return self.n_patches + 1

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.n_heads

    @property
    def mlp_dim(self) -> int:
        return MLP_RATIO * self.embed_dim

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(int(getattr(self, f.name)) for f in fields(self))


def param_layout(cfg: ViTConfig) -> list[tuple[str, tuple[int, ...], int]]:
    """Fixed parameter order as ``(name, shape, fan_in)``.

    ``fan_in == 0`` marks layer-norm parameters (scales start at 1, offsets
    at 0).  This order is also the checkpoint payload order.
    """
    p2, d, m, t, c = cfg.patch_size ** 2, cfg.embed_dim, cfg.mlp_dim, cfg.n_tokens, cfg.n_classes
    layout = [
        ("patch_w", (p2, d), p2),
        ("patch_b", (d,), p2),
        ("cls", (d,), d),
        ("pos", (t, d), d),
    ]
    for i in range(cfg.n_layers):
        pre = f"block{i}."
        layout += [
            (pre + "ln1_g", (d,), 0),
            (pre + "ln1_b", (d,), 0),
            (pre + "q_w", (d, d), d),
            (pre + "q_b", (d,), d),
            (pre + "k_w", (d, d), d),
            (pre + "k_b", (d,), d),
            (pre + "v_w", (d, d), d),
            (pre + "v_b", (d,), d),
            (pre + "o_w", (d, d), d),
            (pre + "o_b", (d,), d),
            (pre + "ln2_g", (d,), 0),
            (pre + "ln2_b", (d,), 0),
            (pre + "mlp1_w", (d, m), d),
            (pre + "mlp1_b", (m,), d),
            (pre + "mlp2_w", (m, d), m),
            (pre + "mlp2_b", (d,), m),
        ]
    layout += [
        ("lnf_g", (d,), 0),
        ("lnf_b", (d,), 0),
        ("head_w", (d, c), d),
        ("head_b", (c,), d),
    ]
    return layout


@dataclass
class ViTParams:
    config: ViTConfig
    arrays: dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        for name, shape, _ in param_layout(self.config):
            arr = self.arrays.get(name)
            if arr is None:
                raise ValueError(f"missing parameter {name}")
            if arr.shape != shape:
                raise ValueError(f"parameter {name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name} has non-finite entries")
        if len(self.arrays) != len(param_layout(self.config)):
            extra = set(self.arrays) - {n for n, _, _ in param_layout(self.config)}
            raise ValueError(f"unexpected parameters: {sorted(extra)}")

    def copy(self) -> "ViTParams":
        return ViTParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def equals(self, other: "ViTParams") -> bool:
        return self.config == other.config and all(
            np.array_equal(v, other.arrays[k]) for k, v in self.arrays.items())


def init_params(config: ViTConfig) -> ViTParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization from ``config.seed``."""
    arrays = {}
    for name, shape, fan_in in param_layout(config):
        if fan_in == 0:
            arrays[name] = np.ones(shape) if name.endswith("_g") else np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(fan_in)
            arrays[name] = make_rng(config.seed, "init", name).uniform(-bound, bound, size=shape)
    return ViTParams(config, arrays)


@dataclass(frozen=True)
class ForwardTrace:
    attention: np.ndarray  # (n_layers, n_heads, T, T)
    logits: np.ndarray  # (n_classes,)
    probabilities: np.ndarray  # (n_classes,)
    image_shape: tuple[int, int]

    @property
    def predicted(self) -> int:
        return int(np.argmax(self.logits))


def _patch_index(cfg: ViTConfig) -> np.ndarray:
    s, p, g = cfg.image_size, cfg.patch_size, cfg.grid
    idx = np.arange(s * s).reshape(g, p, g, p).transpose(0, 2, 1, 3)
    return idx.reshape(g * g, p * p)


def _check_images(cfg: ViTConfig, images) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (cfg.image_size, cfg.image_size):
        raise ValueError(f"expected images of shape (N, {cfg.image_size}, {cfg.image_size}), got {np.shape(images)}")
    if not np.all(np.isfinite(x)):
        raise ValueError("images contain non-finite values")
    return x


def _network(cfg: ViTConfig, p: dict[str, Tensor], x: Tensor) -> tuple[Tensor, list[Tensor]]:
    b = x.shape[0]
    t, d, nh, dh = cfg.n_tokens, cfg.embed_dim, cfg.n_heads, cfg.head_dim
    patches = ad.reshape(x, (b, cfg.image_size ** 2))[:, _patch_index(cfg)]
    emb = patches @ p["patch_w"] + p["patch_b"]
    cls = ad.reshape(p["cls"], (1, 1, d)) + np.zeros((b, 1, d))
    h = ad.concat([cls, emb], axis=1) + p["pos"]

    scale = 1.0 / np.sqrt(dh)
    attentions = []
    for i in range(cfg.n_layers):
        pre = f"block{i}."
        z = ad.layer_norm(h, p[pre + "ln1_g"], p[pre + "ln1_b"], LN_EPS)

        def heads(w, bias):
            return ad.transpose(ad.reshape(z @ p[pre + w] + p[pre + bias], (b, t, nh, dh)), (0, 2, 1, 3))

        q, k, v = heads("q_w", "q_b"), heads("k_w", "k_b"), heads("v_w", "v_b")
        att = ad.softmax_rows((q @ ad.transpose(k, (0, 1, 3, 2))) * scale)
        attentions.append(att)
        o = ad.reshape(ad.transpose(att @ v, (0, 2, 1, 3)), (b, t, d))
        h = h + (o @ p[pre + "o_w"] + p[pre + "o_b"])
        z = ad.layer_norm(h, p[pre + "ln2_g"], p[pre + "ln2_b"], LN_EPS)
        m = ad.gelu(z @ p[pre + "mlp1_w"] + p[pre + "mlp1_b"])
        h = h + (m @ p[pre + "mlp2_w"] + p[pre + "mlp2_b"])

    c = ad.layer_norm(h[:, 0], p["lnf_g"], p["lnf_b"], LN_EPS)
    return c @ p["head_w"] + p["head_b"], attentions


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class ToyViT:
    """Read-only model wrapper; every method is a pure function of (params, inputs)."""

    def __init__(self, params: ViTParams):
        self.params = params
        self.config = params.config
        self._tensors = {k: Tensor(v) for k, v in params.arrays.items()}

    def logits(self, images) -> np.ndarray:
        x = _check_images(self.config, images)
        out = [_network(self.config, self._tensors, Tensor(x[i:i + _CHUNK]))[0].data
               for i in range(0, len(x), _CHUNK)]
        return np.concatenate(out, axis=0)

    def predict_proba(self, images) -> np.ndarray:
        return _softmax(self.logits(images))

    __call__ = predict_proba

    def forward(self, image) -> ForwardTrace:
        x = _check_images(self.config, image)
        if len(x) != 1:
            raise ValueError("forward takes a single image")
        logits, atts = _network(self.config, self._tensors, Tensor(x))
        z = logits.data[0]
        return ForwardTrace(
            attention=np.stack([a.data[0] for a in atts]),
            logits=z.copy(),
            probabilities=_softmax(z),
            image_shape=(self.config.image_size, self.config.image_size),
        )

    def _check_class(self, target_class: int) -> int:
        if not 0 <= int(target_class) < self.config.n_classes:
            raise ValueError(f"class index {target_class} outside [0, {self.config.n_classes})")
        return int(target_class)

    def class_gradient(self, images, target_class: int) -> tuple[np.ndarray, np.ndarray]:
        """Target-class logits and their gradients with respect to each input image."""
        c = self._check_class(target_class)
        x = _check_images(self.config, images)
        scores, grads = [], []
        for i in range(0, len(x), _CHUNK):
            with GradTape() as tape:
                xt = tape.watch(Tensor(x[i:i + _CHUNK]))
                logits, _ = _network(self.config, self._tensors, xt)
                target = logits[:, c]
                total = ad.tsum(target)
            scores.append(target.data.copy())
            grads.append(ad.backward(total, tape, [xt])[0])
        return np.concatenate(scores), np.concatenate(grads)

    def attention_gradients(self, image, target_class: int) -> tuple[ForwardTrace, np.ndarray]:
        """Forward trace plus d(target logit)/d(attention), shaped like ``trace.attention``."""
        c = self._check_class(target_class)
        x = _check_images(self.config, image)
        with GradTape() as tape:
            xt = tape.watch(Tensor(x))
            logits, atts = _network(self.config, self._tensors, xt)
            target = logits[0, c]
        grads = ad.backward(target, tape, atts)
        z = logits.data[0]
        trace = ForwardTrace(
            attention=np.stack([a.data[0] for a in atts]),
            logits=z.copy(),
            probabilities=_softmax(z),
            image_shape=(self.config.image_size, self.config.image_size),
        )
        return trace, np.stack([g[0] for g in grads])


def forward(params: ViTParams, image) -> ForwardTrace:
    return ToyViT(params).forward(image)


def predict_proba(params: ViTParams, images) -> np.ndarray:
    return ToyViT(params).predict_proba(images)


def accuracy(params: ViTParams, images, labels) -> float:
    pred = ToyViT(params).logits(images).argmax(axis=1)
    return float(np.mean(pred == np.asarray(labels)))


def train(params: ViTParams, dataset, epochs: int, learning_rate: float,
          batch_size: int = 16, momentum: float = 0.0, seed: int | None = None) -> ViTParams:
    """Mini-batch SGD on softmax cross-entropy; returns new params.

    Shuffling draws from a stream keyed by ``seed`` (default: the config seed)
    and the epoch number.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if epochs < 0 or batch_size < 1:
        raise ValueError("epochs must be >= 0 and batch_size >= 1")
    cfg = params.config
    seed = cfg.seed if seed is None else seed
    names = [n for n, _, _ in param_layout(cfg)]
    weights = {k: v.copy() for k, v in params.arrays.items()}
    if epochs == 0 or learning_rate == 0:
        return ViTParams(cfg, weights)
    velocity = {k: np.zeros_like(v) for k, v in weights.items()}
    images = _check_images(cfg, dataset.images)
    labels = np.asarray(dataset.labels)
    n = len(labels)

    for epoch in range(epochs):
        order = make_rng(seed, "shuffle", epoch).permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            with GradTape() as tape:
                p = {k: tape.watch(Tensor(weights[k])) for k in names}
                logits, _ = _network(cfg, p, Tensor(images[idx]))
                loss = ad.cross_entropy(logits, labels[idx])
            grads = ad.backward(loss, tape, [p[k] for k in names])
            for k, g in zip(names, grads):
                velocity[k] = momentum * velocity[k] + g
                weights[k] = weights[k] - learning_rate * velocity[k]
            total += float(loss.data) * len(idx)
        log.info("epoch %d: mean loss %.4f", epoch + 1, total / n)

    return ViTParams(cfg, weights)
