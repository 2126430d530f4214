"""Cross-camera re-identification by sampled embedding match counting.

Each car is represented by a handful of embeddings sampled at a uniform
stride along its track. A query car is compared all-vs-all against every
reference car; pairs closer than the threshold count as matches and the
reference car with the most matches lends its global id. Cameras are
merged in a cascade, each re-identified camera joining the reference pool.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .ingest import EmbeddingTable, IdMapping, RunConfig
from .model import CameraTrackSet, Track, camera_sort_key


class DegenerateEmbedding(ValueError):
    pass


class MissingEmbeddings(KeyError):
    def __init__(self, camera: str, track_id: int):
        self.camera, self.track_id = camera, track_id
        super().__init__(f"no embeddings for track (camera={camera}, track={track_id})")

    def __str__(self):
        return self.args[0]


@dataclass(frozen=True)
class CarSampleSet:
    camera: str
    track_id: int
    embeddings: np.ndarray  # (k, D)


@dataclass(frozen=True)
class PoolEntry:
    global_id: int
    samples: CarSampleSet


def cosine_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateEmbedding("degenerate embedding")
    return float(1.0 - np.dot(a, b) / (na * nb))


def _normalized(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DegenerateEmbedding("degenerate embedding")
    return x / norms


def cosine_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch {a.shape[1]} vs {b.shape[1]}")
    return 1.0 - _normalized(a) @ _normalized(b).T


def sample_indices(M: int, k: int) -> list[int]:
    """Indices floor(i*M/k) for i < k, or all of 0..M-1 when M <= k."""
    if M < 1 or k < 1:
        raise ValueError("M and k must be >= 1")
    if M <= k:
        return list(range(M))
    return [i * M // k for i in range(k)]


def match_count(query: CarSampleSet, reference: CarSampleSet, threshold: float) -> tuple[int, float]:
    """Number of query/reference sample pairs closer than ``threshold``, and their mean distance."""
    d = cosine_distance_matrix(query.embeddings, reference.embeddings)
    return int(np.count_nonzero(d < threshold)), float(d.mean())


def sample_track(track: Track, table: EmbeddingTable, k: int) -> CarSampleSet:
    """Embeddings at a uniform stride over the track's frames that have one."""
    frames = [f for f in track.frames if (track.camera, track.id, f) in table]
    if not frames:
        raise MissingEmbeddings(track.camera, track.id)
    picked = [frames[i] for i in sample_indices(len(frames), k)]
    emb = np.stack([table[(track.camera, track.id, f)] for f in picked])
    return CarSampleSet(track.camera, track.id, emb)


def _best_reference(query: CarSampleSet, pool: Sequence[PoolEntry], threshold: float) -> int | None:
    best = None  # (-matches, mean_distance, global_id)
    for entry in pool:
        n, mean_d = match_count(query, entry.samples, threshold)
        if n == 0:
            continue
        key = (-n, mean_d, entry.global_id)
        if best is None or key < best:
            best = key
    return None if best is None else best[2]


def reid_pair(query_cam: CameraTrackSet, pool: Sequence[PoolEntry], table: EmbeddingTable,
              config: RunConfig, next_id: int) -> tuple[IdMapping, list[PoolEntry], int]:
    """Re-identify one camera against a frozen reference pool.

    Returns the mapping for ``query_cam``, the pool entries its cars
    contribute (N samples each, under their assigned global id) and the
    next unused global id. Cars with no match anywhere get fresh ids in
    ascending local-id order.
    """
    mapping: IdMapping = {}
    added: list[PoolEntry] = []
    for track in query_cam:
        q = sample_track(track, table, config.reid_P)
        gid = _best_reference(q, pool, config.reid_match_threshold) if pool else None
        if gid is None:
            gid = next_id
            next_id += 1
        mapping[(query_cam.camera, track.id)] = gid
        added.append(PoolEntry(gid, sample_track(track, table, config.reid_N)))
    return mapping, added, next_id


def reid_cascade(cameras: Sequence[CameraTrackSet], table: EmbeddingTable,
                 config: RunConfig | None = None) -> IdMapping:
    """Global ids for every (camera, track); cameras run in ascending id order.

    The first camera is the reference and keeps its local ids.
    """
    config = config or RunConfig()
    if not cameras:
        return {}
    ordered = sorted(cameras, key=lambda c: camera_sort_key(c.camera))
    ref = ordered[0]
    mapping: IdMapping = {(ref.camera, t.id): t.id for t in ref}
    pool = [PoolEntry(t.id, sample_track(t, table, config.reid_N)) for t in ref]
    next_id = max((t.id for t in ref), default=0) + 1
    for cam in ordered[1:]:
        m, added, next_id = reid_pair(cam, pool, table, config, next_id)
        mapping.update(m)
        pool.extend(added)
    return mapping


def relabel(tracks: CameraTrackSet, mapping: IdMapping) -> CameraTrackSet:
    """Track set with local ids replaced by global ids.

    Tracks sharing a global id within one camera are merged; a frame seen
    by both keeps the box of the lower local id.
    """
    merged: dict[int, dict] = {}
    for t in tracks:
        gid = mapping[(tracks.camera, t.id)]
        boxes = merged.setdefault(gid, {})
        for f, b in t.boxes:
            boxes.setdefault(f, b)
    return CameraTrackSet(tracks.camera, tuple(
        Track(gid, tracks.camera, tuple(sorted(boxes.items(), key=lambda fb: fb[0])))
        for gid, boxes in merged.items()))


def mapping_accuracy(predicted: IdMapping, oracle: IdMapping) -> float:
    """Fraction of tracks whose global id agrees with the oracle after the
    best one-to-one relabelling of predicted ids onto oracle ids."""
    keys = list(oracle)
    if not keys:
        return 1.0
    pids = sorted({predicted[k] for k in keys})
    oids = sorted({oracle[k] for k in keys})
    pi = {p: i for i, p in enumerate(pids)}
    oi = {o: i for i, o in enumerate(oids)}
    counts = np.zeros((len(pids), len(oids)))
    for k in keys:
        counts[pi[predicted[k]], oi[oracle[k]]] += 1
    r, c = linear_sum_assignment(counts, maximize=True)
    return float(counts[r, c].sum() / len(keys))
