"""Retrieval evaluation: ranked distances, AP, CMC, mAP, per-camera accuracy
matrices, and test-time unified-style input substitution.

Protocol follows Market-1501 conventions: gallery items sharing both identity
and camera with the query are junk (removed without penalty), sentinel
identities (-1) are junk everywhere.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import DISTRACTOR_ID, DatasetIndex
from .errors import EvaluationError
from .rerank import rerank


@dataclass
class EvalProtocol:
    name: str = "market"
    metric: str = "euclidean"
    cmc_ks: tuple[int, ...] = (1, 5, 10)


@dataclass
class EvalReport:
    cmc: dict[int, float]
    mAP: float
    per_query_ap: list[float | None]
    camera_matrix: np.ndarray  # CxC, NaN marks absent cells
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        cm = [[None if math.isnan(v) else v for v in row] for row in self.camera_matrix.tolist()]
        return {
            "cmc": {str(k): v for k, v in self.cmc.items()},
            "mAP": self.mAP,
            "per_query_ap": self.per_query_ap,
            "camera_matrix": cm,
            "meta": self.meta,
        }

    def save(self, prefix: str | Path) -> None:
        prefix = Path(prefix)
        prefix.with_suffix(".json").write_text(json.dumps(self.to_dict(), indent=2))
        c = self.camera_matrix.shape[0]
        with open(prefix.parent / (prefix.name + "_camera_matrix.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["query_cam\\gallery_cam"] + [str(g + 1) for g in range(c)])
            for q in range(c):
                w.writerow([str(q + 1)] + ["" if math.isnan(v) else f"{v:.4f}" for v in self.camera_matrix[q]])
        with open(prefix.parent / (prefix.name + "_camera_matrix_long.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["query_cam", "gallery_cam", "accuracy"])
            for q in range(c):
                for g in range(c):
                    v = self.camera_matrix[q, g]
                    if not math.isnan(v):
                        w.writerow([q + 1, g + 1, f"{v:.6f}"])


def pairwise_distances(Q: np.ndarray, G: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """|Q| x |G| distance matrix; Euclidean is the only supported metric."""
    Q, G = np.asarray(Q, dtype=np.float64), np.asarray(G, dtype=np.float64)
    if Q.ndim != 2 or G.ndim != 2 or Q.shape[1] != G.shape[1]:
        raise ValueError(f"descriptor dimension mismatch: {Q.shape} vs {G.shape}")
    if metric != "euclidean":
        raise ValueError(f"unsupported metric {metric!r}")
    sq = (Q**2).sum(axis=1)[:, None] + (G**2).sum(axis=1)[None, :] - 2.0 * (Q @ G.T)
    return np.sqrt(np.clip(sq, 0.0, None))


def average_precision(ranking: Sequence[int], relevant: set, junk: set) -> float | None:
    """AP after removing junk entries from the ranking without rank penalty.

    Returns None when no relevant item remains (the query is skipped).
    """
    if not relevant - junk:
        return None
    hits = 0
    precision_sum = 0.0
    pos = 0
    for idx in ranking:
        if idx in junk:
            continue
        pos += 1
        if idx in relevant:
            hits += 1
            precision_sum += hits / pos
    return precision_sum / len(relevant - junk)


def cmc(
    rankings: Sequence[Sequence[int]],
    relevance: Sequence[set],
    ks: Sequence[int],
    junk: Sequence[set] | None = None,
) -> np.ndarray:
    """cmc[j] = fraction of queries with a relevant item in the top ks[j]."""
    if list(ks) != sorted(ks):
        raise ValueError("ks must be sorted ascending")
    junk = junk or [set()] * len(rankings)
    hits_at = np.zeros(len(ks))
    valid = 0
    for ranking, rel, jnk in zip(rankings, relevance, junk):
        rel = rel - jnk
        if not rel:
            continue
        valid += 1
        pos = 0
        first_hit = None
        for idx in ranking:
            if idx in jnk:
                continue
            pos += 1
            if idx in rel:
                first_hit = pos
                break
        if first_hit is not None:
            for j, k in enumerate(ks):
                if first_hit <= k:
                    hits_at[j] += 1
    if valid == 0:
        return np.zeros(len(ks))
    return hits_at / valid


def camera_accuracy_matrix(
    dist: np.ndarray,
    query_pids: np.ndarray,
    query_cams: np.ndarray,
    gallery_pids: np.ndarray,
    gallery_cams: np.ndarray,
    C: int,
) -> np.ndarray:
    """Top-1 accuracy per (query camera, gallery camera) cell.

    Off-diagonal cells use the standard junk rule; same-camera cells keep
    same-camera matches (the strict rule would empty the diagonal). Cells
    without any answerable query are NaN.
    """
    if C < 2:
        raise ValueError("camera matrix needs at least 2 cameras")
    mat = np.full((C, C), np.nan)
    for qc in range(1, C + 1):
        q_idx = np.where(query_cams == qc)[0]
        for gc in range(1, C + 1):
            g_idx = np.where(gallery_cams == gc)[0]
            if len(q_idx) == 0 or len(g_idx) == 0:
                continue
            hits, total = 0, 0
            for qi in q_idx:
                pid = query_pids[qi]
                if pid == DISTRACTOR_ID:
                    continue
                g_pids = gallery_pids[g_idx]
                valid = g_pids != DISTRACTOR_ID
                relevant = valid & (g_pids == pid)
                if not relevant.any():
                    continue
                order = np.argsort(dist[qi, g_idx], kind="stable")
                keep = order[g_pids[order] != DISTRACTOR_ID]
                if len(keep) == 0:
                    continue
                total += 1
                if g_pids[keep[0]] == pid:
                    hits += 1
            if total > 0:
                mat[qc - 1, gc - 1] = hits / total
    return mat


def _query_sets(q_pid, q_cam, gallery_pids, gallery_cams):
    relevant = set(np.where((gallery_pids == q_pid) & (gallery_pids != DISTRACTOR_ID))[0])
    junk = set(np.where(gallery_pids == DISTRACTOR_ID)[0])
    junk |= set(np.where((gallery_pids == q_pid) & (gallery_cams == q_cam))[0])
    return relevant, junk


def evaluate(
    model,
    dataset: DatasetIndex,
    protocol: EvalProtocol | None = None,
    transfers: dict | None = None,
    rerank_params: tuple[int, int, float] | None = None,
) -> EvalReport:
    """Full retrieval evaluation of a trained re-ID model.

    With `transfers`, every query and gallery image is replaced by its
    unified-style version before feature extraction. `rerank_params` is
    (k1, k2, lambda) for k-reciprocal re-ranking.
    """
    from .gan.training import generate_unity_batch
    from .reid import extract_features

    protocol = protocol or EvalProtocol()
    queries = dataset.split("query")
    gallery = dataset.split("gallery")
    if not queries or not gallery:
        raise EvaluationError("dataset has no query or gallery images")

    def load_split(images):
        arrs = [im.load() for im in images]
        if transfers is not None:
            out = [None] * len(arrs)
            for cam in sorted({im.camera_id for im in images}):
                idxs = [i for i, im in enumerate(images) if im.camera_id == cam]
                gen = generate_unity_batch([arrs[i] for i in idxs], transfers[cam])
                for i, g in zip(idxs, gen):
                    out[i] = g
            arrs = out
        return arrs

    qf = extract_features(model, load_split(queries))
    gf = extract_features(model, load_split(gallery))
    qf = qf / np.maximum(np.linalg.norm(qf, axis=1, keepdims=True), 1e-12)
    gf = gf / np.maximum(np.linalg.norm(gf, axis=1, keepdims=True), 1e-12)
    dist = pairwise_distances(qf, gf, protocol.metric)
    if rerank_params is not None:
        k1, k2, lam = rerank_params
        dist = rerank(dist, (qf, gf), k1=k1, k2=k2, lam=lam)

    q_pids = np.array([im.person_id for im in queries])
    q_cams = np.array([im.camera_id for im in queries])
    g_pids = np.array([im.person_id for im in gallery])
    g_cams = np.array([im.camera_id for im in gallery])

    per_ap: list[float | None] = []
    rankings, relevances, junks = [], [], []
    for qi in range(len(queries)):
        ranking = list(np.argsort(dist[qi], kind="stable"))
        relevant, junk = _query_sets(q_pids[qi], q_cams[qi], g_pids, g_cams)
        per_ap.append(average_precision(ranking, relevant, junk))
        rankings.append(ranking)
        relevances.append(relevant)
        junks.append(junk)
    valid_aps = [a for a in per_ap if a is not None]
    if not valid_aps:
        raise EvaluationError("no query has any valid (non-junk) match in the gallery")
    cmc_vals = cmc(rankings, relevances, protocol.cmc_ks, junks)
    cam_matrix = camera_accuracy_matrix(dist, q_pids, q_cams, g_pids, g_cams, dataset.num_cameras)
    return EvalReport(
        cmc={k: float(v) for k, v in zip(protocol.cmc_ks, cmc_vals)},
        mAP=float(np.mean(valid_aps)),
        per_query_ap=per_ap,
        camera_matrix=cam_matrix,
        meta={
            "protocol": protocol.name,
            "unity_inputs": transfers is not None,
            "reranked": rerank_params is not None,
            "num_queries": len(queries),
            "num_skipped_queries": len(per_ap) - len(valid_aps),
        },
    )
