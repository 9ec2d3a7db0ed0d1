"""Attention-based relevance: rollout and gradient-weighted attention."""
from __future__ import annotations

import numpy as np

from ..maps import AttributionMap
from ..maskpipe import upsample_nearest

_STOCHASTIC_TOL = 1e-6


def _layers(attentions) -> np.ndarray:
    a = np.asarray(attentions, dtype=np.float64)
    if a.ndim == 2:
        a = a[None, None]
    elif a.ndim == 3:
        a = a[:, None]
    if a.ndim != 4 or a.shape[-1] != a.shape[-2] or len(a) == 0:
        raise ValueError(f"attention must be (layers, heads, T, T), got shape {np.shape(attentions)}")
    return a


def _check_stochastic(a: np.ndarray) -> None:
    if np.any(a < -_STOCHASTIC_TOL) or np.any(np.abs(a.sum(axis=-1) - 1.0) > _STOCHASTIC_TOL):
        raise ValueError("attention matrices must be row-stochastic")


def rollout_matrices(attentions) -> list[np.ndarray]:
    """Per-layer head-averaged, identity-mixed, row-renormalized attention."""
    a = _layers(attentions)
    _check_stochastic(a)
    eye = np.eye(a.shape[-1])
    out = []
    for layer in a:
        mixed = 0.5 * layer.mean(axis=0) + 0.5 * eye
        out.append(mixed / mixed.sum(axis=1, keepdims=True))
    return out


def rollout_product(attentions) -> np.ndarray:
    r = None
    for m in rollout_matrices(attentions):
        r = m if r is None else m @ r
    return r


def rollout_relevance(attentions) -> np.ndarray:
    """Classification-token row of the rolled-out product, patch columns only."""
    return rollout_product(attentions)[0, 1:].copy()


def beyond_attention_relevance(attentions, gradients) -> np.ndarray:
    a = _layers(attentions)
    if gradients is None:
        raise ValueError("attention gradients are required")
    g = _layers(gradients)
    if g.shape != a.shape:
        raise ValueError(f"gradient shape {g.shape} differs from attention shape {a.shape}")
    eye = np.eye(a.shape[-1])
    r = eye.copy()
    for layer_a, layer_g in zip(a, g):
        cam = np.maximum(layer_g * layer_a, 0.0).mean(axis=0)
        r = r + cam @ r
    return (r - eye)[0, 1:].copy()


def _to_pixels(relevance: np.ndarray, image_shape: tuple[int, int]) -> np.ndarray:
    side = int(round(np.sqrt(len(relevance))))
    if side * side != len(relevance):
        raise ValueError(f"{len(relevance)} patch tokens do not form a square grid")
    return upsample_nearest(relevance.reshape(side, side), image_shape)


def attention_rollout(trace, image_id: str = "") -> AttributionMap:
    rel = rollout_relevance(trace.attention)
    return AttributionMap(_to_pixels(rel, trace.image_shape), "attention_rollout", -1,
                          "patch", image_id)


def beyond_attention(trace, attention_gradients, target_class: int,
                     image_id: str = "") -> AttributionMap:
    rel = beyond_attention_relevance(trace.attention, attention_gradients)
    return AttributionMap(_to_pixels(rel, trace.image_shape), "beyond_attention", int(target_class),
                          "patch", image_id)
