"""k-reciprocal encoding re-ranking for retrieval.

Standard algorithm: build k-reciprocal neighbor sets over the joint
query+gallery graph, expand them, local-query-expand the resulting sparse
encodings, and mix the Jaccard distance with the original distance:
final = (1 - lam) * jaccard + lam * original. With lam = 1 the ranking
induced by the input distances is preserved.
"""

from __future__ import annotations

import numpy as np


def _k_reciprocal_neighbors(initial_rank: np.ndarray, i: int, k: int) -> np.ndarray:
    forward = initial_rank[i, : k + 1]
    backward = initial_rank[forward, : k + 1]
    valid = np.where(backward == i)[0]
    return forward[valid]


def rerank(
    dist: np.ndarray,
    features: tuple[np.ndarray, np.ndarray],
    k1: int = 20,
    k2: int = 6,
    lam: float = 0.3,
) -> np.ndarray:
    """Re-ranked |Q| x |G| distance matrix.

    `dist` is the original query-gallery distance matrix and `features` the
    (query, gallery) descriptor matrices used to build the joint graph.
    """
    if not (k1 > k2 >= 1):
        raise ValueError(f"need k1 > k2 >= 1, got k1={k1}, k2={k2}")
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 1.0:  # convex-combination endpoint: original ranking exactly
        return np.asarray(dist, dtype=np.float64).copy()
    qf, gf = features
    q_num, g_num = qf.shape[0], gf.shape[0]
    if dist.shape != (q_num, g_num):
        raise ValueError("distance matrix shape does not match the feature matrices")
    feats = np.concatenate([qf, gf], axis=0).astype(np.float64)
    n = q_num + g_num
    k1 = min(k1, n - 1)
    k2 = min(k2, k1)

    sq = (feats**2).sum(axis=1)
    original = np.sqrt(np.clip(sq[:, None] + sq[None, :] - 2.0 * feats @ feats.T, 0.0, None))
    original = np.power(original, 2)
    original = np.transpose(original / np.max(original, axis=0).clip(min=1e-12))
    initial_rank = np.argsort(original, kind="stable").astype(np.int32)

    V = np.zeros_like(original, dtype=np.float32)
    for i in range(n):
        k_recip = _k_reciprocal_neighbors(initial_rank, i, k1)
        expanded = k_recip.copy()
        for cand in k_recip:
            cand_recip = _k_reciprocal_neighbors(initial_rank, cand, int(round(k1 / 2)))
            if len(np.intersect1d(cand_recip, k_recip)) > 2 / 3 * len(cand_recip):
                expanded = np.append(expanded, cand_recip)
        expanded = np.unique(expanded)
        weight = np.exp(-original[i, expanded])
        V[i, expanded] = (weight / np.sum(weight)).astype(np.float32)

    if k2 > 1:  # local query expansion
        V = np.stack([np.mean(V[initial_rank[i, :k2], :], axis=0) for i in range(n)])

    inv_index = [np.where(V[:, j] != 0)[0] for j in range(n)]
    jaccard = np.zeros((q_num, n), dtype=np.float32)
    for i in range(q_num):
        min_sum = np.zeros(n, dtype=np.float32)
        nonzero = np.where(V[i, :] != 0)[0]
        for j in nonzero:
            rows = inv_index[j]
            min_sum[rows] += np.minimum(V[i, j], V[rows, j])
        jaccard[i] = 1.0 - min_sum / (2.0 - min_sum)

    final = jaccard * (1.0 - lam) + original[:q_num, :] * lam
    return final[:, q_num:]
