"""Pool sample selection: BADGE gradient embeddings with k-means++
seeding, and uniform random selection.

A BADGE embedding is the gradient of the cross-entropy loss at the
network's own most likely label ("hallucinated" label) with respect to
the last dense layer's weights: the outer product of (p - e_yhat) and
the penultimate feature, flattened class-block-major.  Confident samples
embed near zero; diverse, uncertain ones are favored by D^2 seeding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nncore
from .data import AudioClip
from .errors import ContractError


@dataclass
class GradientEmbedding:
    ids: list[str]
    values: np.ndarray  # (n, C*d)


def gradient_embedding_rows(probs: np.ndarray, feats: np.ndarray) -> np.ndarray:
    """Row x = concat over classes c of (p_c - [c == argmax p]) * h(x)."""
    n, c = probs.shape
    yhat = probs.argmax(axis=1)
    delta = probs.copy()
    delta[np.arange(n), yhat] -= 1.0
    return (delta[:, :, None] * feats[:, None, :]).reshape(n, c * feats.shape[1])


def badge_embeddings(
    net: nncore.NetworkState, clips: Sequence[AudioClip], chunk: int = 256
) -> GradientEmbedding:
    if not clips:
        raise ContractError("badge_embeddings: empty pool")
    x = np.stack([c.samples for c in clips])
    rows = []
    for start in range(0, x.shape[0], chunk):
        logits, trace = nncore.forward(net, x[start : start + chunk])
        rows.append(gradient_embedding_rows(nncore.softmax(logits), trace.penultimate))
    return GradientEmbedding(ids=[c.id for c in clips], values=np.concatenate(rows, axis=0))


def kmeanspp_select(
    emb: GradientEmbedding | np.ndarray, n_select: int, seed: int
) -> list[int]:
    """Standard D^2 seeding over the embedding rows.

    First index uniform; each subsequent index sampled with probability
    proportional to the squared distance to the nearest chosen row.  When
    every remaining distance is zero the choice falls back to uniform
    over the unchosen rows, so the selection always has n_select distinct
    indices.
    """
    points = emb.values if isinstance(emb, GradientEmbedding) else np.asarray(emb)
    n = points.shape[0]
    if not 1 <= n_select <= n:
        raise ContractError(f"n_select {n_select} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))
    chosen = [first]
    taken = np.zeros(n, dtype=bool)
    taken[first] = True
    d2 = ((points - points[first]) ** 2).sum(axis=1)
    while len(chosen) < n_select:
        d2[taken] = 0.0
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.choice(np.flatnonzero(~taken)))
        chosen.append(nxt)
        taken[nxt] = True
        d2 = np.minimum(d2, ((points - points[nxt]) ** 2).sum(axis=1))
    return chosen


def random_select(pool: int | Sequence, n_select: int, seed: int) -> list[int]:
    """Uniform selection without replacement, deterministic per seed."""
    n = pool if isinstance(pool, int) else len(pool)
    if n_select > n:
        raise ContractError(f"n_select {n_select} exceeds pool size {n}")
    rng = np.random.default_rng(seed)
    return [int(i) for i in rng.permutation(n)[:n_select]]
