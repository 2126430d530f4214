"""Single-camera trackers: greedy maximum-overlap and SORT-style Kalman tracking.

Both trackers take detections grouped by frame (``{frame: [Detection, ...]}``)
and walk every frame index between the first and last one, so a frame with
no entry counts as a frame with no detections.

Optional motion compensation uses a displacement field where
``field[f][i]`` is the (dx, dy) that moves detection ``i`` of frame ``f``
towards frame ``f + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .ingest import DisplacementField, RunConfig
from .model import BoundingBox, CameraTrackSet, Detection, Track, boxes_to_array, iou_matrix

# Fixed SORT noise constants; state is (u, v, s, r, du, dv, ds).
PROCESS_NOISE = np.diag([1.0, 1.0, 1.0, 1e-2, 1e-2, 1e-2, 1e-4])
OBSERVATION_NOISE = np.diag([1.0, 1.0, 10.0, 1e-2])
INITIAL_POSITION_VARIANCE = 10.0
INITIAL_VELOCITY_VARIANCE = 1e3

_F = np.eye(7)
_F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0
_H = np.eye(4, 7)
_P0 = np.diag([INITIAL_POSITION_VARIANCE] * 4 + [INITIAL_VELOCITY_VARIANCE] * 3)


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    def to_bbox(self) -> BoundingBox:
        return BoundingBox(*_measurement_to_ltwh(self.mean[None, :4])[0])


def bbox_to_measurement(b: BoundingBox) -> np.ndarray:
    """(u, v, s, r): centre, area and aspect ratio w/h."""
    return np.array([b.left + b.width / 2.0, b.top + b.height / 2.0,
                     b.width * b.height, b.width / b.height])


def _ltwh_to_measurement(a: np.ndarray) -> np.ndarray:
    return np.stack([a[:, 0] + a[:, 2] / 2.0, a[:, 1] + a[:, 3] / 2.0,
                     a[:, 2] * a[:, 3], a[:, 2] / a[:, 3]], axis=1)


def _measurement_to_ltwh(z: np.ndarray) -> np.ndarray:
    s, r = z[:, 2], z[:, 3]
    ok = (s > 0) & (r > 0)
    w = np.where(ok, np.sqrt(np.where(ok, s * r, 1.0)), 0.0)
    h = np.where(ok, s / np.where(w > 0, w, 1.0), 0.0)
    return np.stack([z[:, 0] - w / 2.0, z[:, 1] - h / 2.0, w, h], axis=1)


def kalman_init(b: BoundingBox) -> KalmanState:
    mean = np.zeros(7)
    mean[:4] = bbox_to_measurement(b)
    return KalmanState(mean, _P0.copy())


def _predict_batch(means: np.ndarray, covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    means = means.copy()
    shrink = means[:, 2] + means[:, 6] <= 0
    means[shrink, 6] = 0.0
    means[:, :3] += means[:, 4:7]
    covs = _F @ covs @ _F.T + PROCESS_NOISE
    return means, 0.5 * (covs + covs.transpose(0, 2, 1))


def _update_batch(means: np.ndarray, covs: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    innovation = z - means[:, :4]
    ph = covs[:, :, :4]  # P H^T
    S = covs[:, :4, :4] + OBSERVATION_NOISE
    # K = P H^T S^-1, solved as S^T K^T = (P H^T)^T
    K = np.linalg.solve(S.transpose(0, 2, 1), ph.transpose(0, 2, 1)).transpose(0, 2, 1)
    means = means + np.einsum("nij,nj->ni", K, innovation)
    # Joseph form keeps the posterior symmetric PSD
    IKH = np.eye(7) - K @ _H
    covs = IKH @ covs @ IKH.transpose(0, 2, 1) + K @ OBSERVATION_NOISE @ K.transpose(0, 2, 1)
    return means, 0.5 * (covs + covs.transpose(0, 2, 1))


def kalman_predict(state: KalmanState) -> KalmanState:
    m, P = _predict_batch(state.mean[None], state.covariance[None])
    return KalmanState(m[0], P[0])


def kalman_update(state: KalmanState, observation: BoundingBox) -> KalmanState:
    z = bbox_to_measurement(observation)[None]
    m, P = _update_batch(state.mean[None], state.covariance[None], z)
    return KalmanState(m[0], P[0])


def apply_compensation(boxes: Sequence[BoundingBox], field: DisplacementField | None,
                       frame: int) -> list[BoundingBox]:
    """Translate each box by its displacement; missing entries mean no shift."""
    shifts = (field or {}).get(frame, {})
    out = []
    for i, b in enumerate(boxes):
        dx, dy = shifts.get(i, (0.0, 0.0))
        out.append(b.shifted(dx, dy) if (dx or dy) else b)
    return out


def _compensated_array(dets: Sequence[Detection], field: DisplacementField | None, frame: int) -> np.ndarray:
    arr = boxes_to_array([d.bbox for d in dets])
    shifts = (field or {}).get(frame)
    if shifts:
        for i, (dx, dy) in shifts.items():
            if 0 <= i < len(arr):
                arr[i, 0] += dx
                arr[i, 1] += dy
    return arr


def _frame_range(frames: Mapping[int, Sequence[Detection]]) -> range:
    if not frames:
        return range(0)
    return range(min(frames), max(frames) + 1)


def _build_trackset(camera: str, boxes_by_id: dict[int, list[tuple[int, BoundingBox]]]) -> CameraTrackSet:
    return CameraTrackSet(camera, tuple(Track(tid, camera, tuple(b)) for tid, b in boxes_by_id.items() if b))


def track_overlap(frames: Mapping[int, Sequence[Detection]], iou_match_threshold: float = 0.2,
                  compensation: DisplacementField | None = None, camera: str = "") -> CameraTrackSet:
    """Maximum-overlap tracker.

    Boxes of frame ``f - 1`` (shifted by ``compensation`` when given) are
    matched to boxes of frame ``f`` greedily by descending IoU, each box used
    at most once and only when IoU >= ``iou_match_threshold``. Equal IoUs go
    to the lower previous track id. Unmatched boxes start new tracks.
    """
    boxes_by_id: dict[int, list[tuple[int, BoundingBox]]] = {}
    next_id = 1
    prev_dets: Sequence[Detection] = []
    prev_ids: list[int] = []
    for f in _frame_range(frames):
        dets = frames.get(f, [])
        ids = [0] * len(dets)
        if prev_dets and dets:
            ious = iou_matrix(_compensated_array(prev_dets, compensation, f - 1),
                              boxes_to_array([d.bbox for d in dets]))
            pi, ci = np.nonzero(ious >= iou_match_threshold)
            order = sorted(zip(pi.tolist(), ci.tolist()),
                           key=lambda pc: (-ious[pc[0], pc[1]], prev_ids[pc[0]], pc[1]))
            used_prev = set()
            for p, c in order:
                if p in used_prev or ids[c]:
                    continue
                used_prev.add(p)
                ids[c] = prev_ids[p]
        for c, d in enumerate(dets):
            if not ids[c]:
                ids[c] = next_id
                boxes_by_id[next_id] = []
                next_id += 1
            boxes_by_id[ids[c]].append((f, d.bbox))
        prev_dets, prev_ids = dets, ids
    return _build_trackset(camera, boxes_by_id)


@dataclass
class SortTrackerState:
    """Live SORT tracks stored column-wise so predict/update run batched."""

    ids: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    time_since_update: np.ndarray
    hit_streak: np.ndarray
    next_id: int = 1

    @classmethod
    def empty(cls) -> SortTrackerState:
        return cls(np.zeros(0, dtype=int), np.zeros((0, 7)), np.zeros((0, 7, 7)),
                   np.zeros(0, dtype=int), np.zeros(0, dtype=int))

    def __len__(self) -> int:
        return len(self.ids)


def associate(cost_iou: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """One-to-one assignment maximising total IoU, dropping pairs below threshold."""
    if cost_iou.size == 0:
        return []
    rows, cols = linear_sum_assignment(cost_iou, maximize=True)
    return [(r, c) for r, c in zip(rows.tolist(), cols.tolist()) if cost_iou[r, c] >= threshold]


def track_sort(frames: Mapping[int, Sequence[Detection]], config: RunConfig | None = None,
               compensation: DisplacementField | None = None, camera: str = "") -> CameraTrackSet:
    """SORT-style tracking with a constant-velocity Kalman filter.

    Tracks survive up to ``sort_max_age`` frames without a detection. Output
    boxes are the observed detections; with ``sort_min_hits > 1`` a track's
    boxes are emitted only while its consecutive-hit streak has reached the
    threshold. With ``compensation``, tracks matched in the previous frame
    associate using their last detection shifted by its displacement instead
    of the Kalman prediction.
    """
    config = config or RunConfig()
    st = SortTrackerState.empty()
    last_det = np.zeros(0, dtype=int)  # index of the detection matched in frame f-1, or -1
    boxes_by_id: dict[int, list[tuple[int, BoundingBox]]] = {}
    prev_dets: Sequence[Detection] = []

    for f in _frame_range(frames):
        dets = frames.get(f, [])
        if len(st):
            st.means, st.covs = _predict_batch(st.means, st.covs)
            st.hit_streak[st.time_since_update > 0] = 0
            st.time_since_update += 1

        pred = _measurement_to_ltwh(st.means[:, :4]) if len(st) else np.zeros((0, 4))
        if compensation is not None and len(st):
            comp = _compensated_array(prev_dets, compensation, f - 1)
            recent = last_det >= 0
            pred[recent] = comp[last_det[recent]]

        det_arr = boxes_to_array([d.bbox for d in dets])
        matches = associate(iou_matrix(pred, det_arr), config.iou_match_threshold)

        new_last = np.full(len(st), -1, dtype=int)
        if matches:
            ti = np.array([m[0] for m in matches])
            di = np.array([m[1] for m in matches])
            z = _ltwh_to_measurement(det_arr[di])
            st.means[ti], st.covs[ti] = _update_batch(st.means[ti], st.covs[ti], z)
            st.time_since_update[ti] = 0
            st.hit_streak[ti] += 1
            new_last[ti] = di
            for t, d in zip(ti.tolist(), di.tolist()):
                if st.hit_streak[t] >= config.sort_min_hits:
                    boxes_by_id[int(st.ids[t])].append((f, dets[d].bbox))

        matched_dets = {m[1] for m in matches}
        spawn = [d for d in range(len(dets)) if d not in matched_dets]
        if spawn:
            n = len(spawn)
            new_ids = np.arange(st.next_id, st.next_id + n)
            st.next_id += n
            z = _ltwh_to_measurement(det_arr[spawn])
            means = np.zeros((n, 7))
            means[:, :4] = z
            st.ids = np.concatenate([st.ids, new_ids])
            st.means = np.concatenate([st.means, means])
            st.covs = np.concatenate([st.covs, np.repeat(_P0[None], n, axis=0)])
            st.time_since_update = np.concatenate([st.time_since_update, np.zeros(n, dtype=int)])
            st.hit_streak = np.concatenate([st.hit_streak, np.ones(n, dtype=int)])
            new_last = np.concatenate([new_last, np.array(spawn)])
            for tid, d in zip(new_ids.tolist(), spawn):
                boxes_by_id[tid] = [(f, dets[d].bbox)] if config.sort_min_hits <= 1 else []

        alive = st.time_since_update <= config.sort_max_age
        if not alive.all():
            st.ids, st.means, st.covs = st.ids[alive], st.means[alive], st.covs[alive]
            st.time_since_update, st.hit_streak = st.time_since_update[alive], st.hit_streak[alive]
            new_last = new_last[alive]
        last_det = new_last
        prev_dets = dets

    return _build_trackset(camera, boxes_by_id)
