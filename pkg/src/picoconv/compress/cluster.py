"""Per-layer K-means weight clustering with a reserved exact-zero code."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..reference import ModelParams


def _assign(values: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest-centroid labels for sorted ``centroids`` (1-D)."""
    mids = (centroids[1:] + centroids[:-1]) / 2
    return np.searchsorted(mids, values, side="left")


def _kmeanspp(values, weights, k, rng) -> np.ndarray:
    centers = [values[rng.choice(len(values), p=weights / weights.sum())]]
    d2 = (values - centers[0]) ** 2
    for _ in range(1, k):
        p = weights * d2
        if p.sum() <= 0:
            break
        c = values[rng.choice(len(values), p=p / p.sum())]
        centers.append(c)
        d2 = np.minimum(d2, (values - c) ** 2)
    return np.unique(centers)


def _lloyd(values, weights, centroids, max_iter, tol):
    for _ in range(max_iter):
        labels = _assign(values, centroids)
        mass = np.bincount(labels, weights, minlength=len(centroids))
        sums = np.bincount(labels, weights * values, minlength=len(centroids))
        used = mass > 0
        new = sums[used] / mass[used]
        moved = len(new) != len(centroids) or np.max(np.abs(new - centroids[used])) >= tol
        centroids = np.unique(new)
        if not moved:
            break
    labels = _assign(values, centroids)
    sse = float(np.sum(weights * (values - centroids[labels]) ** 2))
    return centroids, sse


def kmeans_1d(values, k: int, seed: int = 0, n_init: int = 8, max_iter: int = 100,
              tol: float = 1e-7) -> np.ndarray:
    """Sorted centroids minimising within-cluster SSE of scalar ``values``.

    k-means++ seeding and Lloyd iterations over the distinct values weighted
    by multiplicity; the best of ``n_init`` seeded restarts is kept.  When
    there are at most ``k`` distinct values they are returned unchanged.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        return np.empty(0)
    if k < 1:
        raise ValueError("k must be >= 1")
    uniq, counts = np.unique(values, return_counts=True)
    if len(uniq) <= k:
        return uniq
    weights = counts.astype(np.float64)
    rng = np.random.default_rng(seed)
    best, best_sse = None, np.inf
    for _ in range(n_init):
        init = _kmeanspp(uniq, weights, k, rng)
        cents, sse = _lloyd(uniq, weights, init, max_iter, tol)
        if sse < best_sse:
            best, best_sse = cents, sse
    return best


@dataclass(frozen=True)
class Codebook:
    """Per conv layer: sorted nonzero centroids and an index array.

    Index 0 is the reserved exact-zero code; index ``j >= 1`` selects
    ``centroids[layer][j - 1]``.
    """

    centroids: dict
    codes: dict
    bits: dict

    def values(self, layer: int) -> np.ndarray:
        table = np.concatenate([[0.0], self.centroids[layer]])
        return table[self.codes[layer]]

    def apply(self, params: ModelParams) -> ModelParams:
        """Params with every conv weight replaced by its centroid."""
        return params.replace({f"{i}.weight": self.values(i) for i in self.codes})


def cluster_weights(params: ModelParams, bits: int | Sequence[int] = 7, seed: int = 0,
                    n_init: int = 8) -> Codebook:
    """Cluster the retained (unpruned, nonzero) weights of each conv layer.

    Each layer gets at most ``2**bits - 1`` centroids; pruned positions map to
    the zero code.
    """
    convs = params.net.conv_indices()
    if np.isscalar(bits):
        bits = [int(bits)] * len(convs)
    if len(bits) != len(convs):
        raise ValueError(f"need {len(convs)} bit widths, got {len(bits)}")
    centroids, codes, widths = {}, {}, {}
    for layer_no, (i, b) in enumerate(zip(convs, bits)):
        w = params.get(i, "weight")
        live = params.masks[i] & (w != 0)
        k = (1 << b) - 1
        cents = kmeans_1d(w[live], k, seed=seed + layer_no, n_init=n_init)
        code = np.zeros(w.shape, dtype=np.int64)
        if cents.size:
            code[live] = _assign(w[live], cents) + 1
        centroids[i], codes[i], widths[i] = cents, code, b
    return Codebook(centroids, codes, widths)
