"""Shapley values over image segments: KernelSHAP and a brute-force reference."""
from __future__ import annotations

from math import comb

import numpy as np

from .. import _kernels
from ..maps import AttributionMap
from ..rng import make_rng
from .lime import _target_column
from .segments import FILL_VALUE, SegmentGrid, broadcast_segments, mask_images

MAX_EXACT_PLAYERS = 12


def exact_shapley(value_fn, n_players: int) -> np.ndarray:
    """Shapley values by full enumeration of the 2^S coalitions.

    ``value_fn`` maps a frozenset of player indices to a real, or is an array
    of 2^S values indexed by coalition bitmask (bit i set = player i present).
    """
    if n_players < 1:
        raise ValueError("need at least one player")
    if n_players > MAX_EXACT_PLAYERS:
        raise ValueError(f"exact enumeration supports at most {MAX_EXACT_PLAYERS} players, got {n_players}")
    if callable(value_fn):
        table = np.array([
            value_fn(frozenset(i for i in range(n_players) if mask >> i & 1))
            for mask in range(1 << n_players)
        ], dtype=np.float64)
    else:
        table = np.asarray(value_fn, dtype=np.float64)
    return _kernels.shapley_table(table, n_players)


def shapley_kernel_weight(n_players: int, size) -> np.ndarray:
    """(S-1) / (C(S, |z|) |z| (S-|z|)) for 0 < |z| < S."""
    size = np.asarray(size)
    binom = np.array([comb(n_players, int(k)) for k in size.ravel()], dtype=np.float64).reshape(size.shape)
    return (n_players - 1) / (binom * size * (n_players - size))


def _constrained_wls(z: np.ndarray, y: np.ndarray, w: np.ndarray, v_empty: float,
                     v_full: float) -> np.ndarray:
    # eliminate the last player through sum(phi) == v_full - v_empty
    total = v_full - v_empty
    last = z[:, -1]
    x = z[:, :-1] - last[:, None]
    target = y - v_empty - last * total
    sw = np.sqrt(w)
    beta = np.linalg.lstsq(x * sw[:, None], target * sw, rcond=None)[0]
    return np.append(beta, total - beta.sum())


def _all_coalitions(n_players: int) -> np.ndarray:
    masks = np.arange(1, (1 << n_players) - 1)
    return ((masks[:, None] >> np.arange(n_players)) & 1).astype(np.float64)


def _sample_coalitions(n_players: int, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    # size k drawn with probability proportional to the total kernel mass C(S,k) * weight(k),
    # then a uniform subset of that size; each draw is paired with its complement
    sizes = np.arange(1, n_players)
    mass = (n_players - 1) / (sizes * (n_players - sizes))
    n_pairs = (n_draws + 1) // 2
    drawn = rng.choice(sizes, size=n_pairs, p=mass / mass.sum())
    keys = rng.random((n_pairs, n_players))
    ranks = np.argsort(np.argsort(keys, axis=1, kind="stable"), axis=1, kind="stable")
    z = (ranks < drawn[:, None]).astype(np.float64)
    return np.vstack([z, 1.0 - z])[:n_draws]


def kernel_shap_game(value_fn, n_players: int, n_samples: int = 2000, exact: bool = False,
                     seed: int = 0) -> np.ndarray:
    """KernelSHAP on an abstract game.

    ``value_fn`` takes a (m, S) 0/1 array of coalitions and returns m values.
    The empty and full coalitions are always evaluated and enter as exact
    constraints.  Exact mode regresses on all 2^S - 2 proper coalitions with
    Shapley-kernel weights; sampled mode draws ``n_samples - 2`` coalitions
    in proportion to the kernel, then regresses on the distinct drawn
    coalitions with their Shapley-kernel weights.
    """
    if n_players < 2:
        raise ValueError(f"KernelSHAP needs at least 2 players, got {n_players}")
    if exact:
        if n_players > MAX_EXACT_PLAYERS:
            raise ValueError(f"exact mode supports at most {MAX_EXACT_PLAYERS} segments, got {n_players}")
        z = _all_coalitions(n_players)
        weights = shapley_kernel_weight(n_players, z.sum(axis=1))
    else:
        if n_samples < n_players + 2:
            raise ValueError(f"n_samples={n_samples} too small for {n_players} segments: need >= {n_players + 2}")
        drawn = _sample_coalitions(n_players, n_samples - 2, make_rng(seed, "kernel_shap"))
        z = np.unique(drawn, axis=0)
        weights = shapley_kernel_weight(n_players, z.sum(axis=1))
    ends = np.vstack([np.zeros(n_players), np.ones(n_players)])
    values = np.asarray(value_fn(np.vstack([ends, z])), dtype=np.float64).ravel()
    if len(values) != len(z) + 2:
        raise ValueError("value_fn returned the wrong number of values")
    return _constrained_wls(z, values[2:], weights, values[0], values[1])


def kernel_shap(predict_fn, image, target_class: int, segments: SegmentGrid, n_samples: int = 2000,
                exact: bool = False, seed: int = 0, image_id: str = "") -> AttributionMap:
    """Segment-level KernelSHAP; coalition value = target-class output with absent segments mid-gray."""
    if target_class < 0:
        raise ValueError(f"invalid class index {target_class}")

    def value_fn(z):
        probs = predict_fn(mask_images(image, segments, z, FILL_VALUE))
        return _target_column(probs, target_class, len(z))

    phi = kernel_shap_game(value_fn, segments.n_segments, n_samples, exact, seed)
    return AttributionMap(broadcast_segments(phi, segments), "kernel_shap", int(target_class),
                          "segment", image_id)
