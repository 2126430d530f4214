"""Seeded synthetic multi-camera scenes with ground truth, detections and embeddings.

All randomness comes from ``numpy.random.Generator(PCG64(seed))``, so a scene
is a pure function of its :class:`SceneSpec`.

Scene model: cameras are independent views. Every identity appears in at
least two cameras. Inside a camera each track moves with its identity's
constant velocity along a horizontal lane; lanes are at least one box
height apart and a lane holds one track at a time, so ground-truth boxes of
different tracks in one camera never overlap. Tracks are limited to the
frames where the box lies fully inside the image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ingest import EmbeddingTable, IdMapping, group_by_frame
from .model import BoundingBox, CameraTrackSet, Detection, Track

MAX_BOX_W = 160.0
MAX_BOX_H = 120.0
MIN_BOX_W = 80.0
MIN_BOX_H = 60.0
# idle frames between consecutive tracks of one lane, so no tracker can join them
LANE_GAP = 3
# random delay before a track enters a freed lane
START_SLACK = 20


class InfeasibleScene(ValueError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    num_cameras: int = 6
    num_identities: int = 24
    frames_per_camera: int = 200
    image_size: tuple[int, int] = (1920, 1080)
    speed_range: tuple[float, float] = (3.0, 8.0)
    min_track_length: int = 15
    max_track_length: int = 100
    max_cameras_per_identity: int = 3
    dropout_rate: float = 0.0
    position_noise_sigma: float = 0.0
    embedding_dim: int = 32
    cluster_noise_sigma: float = 0.05
    min_cluster_distance: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.num_cameras < 2:
            raise ValueError("need at least two cameras (each identity spans >= 2)")
        if self.num_identities < 1 or self.frames_per_camera < 1 or self.embedding_dim < 1:
            raise ValueError("counts and dimensions must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.position_noise_sigma < 0 or self.cluster_noise_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise ValueError("speed_range must satisfy 0 < lo <= hi")
        if self.min_track_length < 2 or self.min_track_length > self.frames_per_camera:
            raise ValueError("min_track_length must lie in [2, frames_per_camera]")
        if self.max_track_length < self.min_track_length:
            raise ValueError("max_track_length must be >= min_track_length")
        if self.max_cameras_per_identity < 2:
            raise ValueError("max_cameras_per_identity must be >= 2")
        w, h = self.image_size
        if w < MAX_BOX_W + hi * self.min_track_length or h < MAX_BOX_H:
            raise ValueError("image too small for the requested motion")


@dataclass
class SceneTruth:
    cameras: dict[str, CameraTrackSet]
    embeddings: EmbeddingTable
    oracle: IdMapping
    detections: dict[str, dict[int, list[Detection]]] = field(default_factory=dict)

    @property
    def camera_names(self) -> list[str]:
        return list(self.cameras)


def camera_name(i: int) -> str:
    return f"c{i + 1:02d}"


def cluster_centers(n: int, dim: int, min_distance: float, rng: np.random.Generator,
                    max_attempts: int = 2000) -> np.ndarray:
    """Random unit vectors with pairwise cosine distance >= ``min_distance``.

    Each centre is redrawn until it clears every earlier one.
    """
    centers = np.zeros((n, dim))
    for i in range(n):
        for _ in range(max_attempts):
            v = rng.standard_normal(dim)
            v /= np.linalg.norm(v)
            if i == 0 or np.all(1.0 - centers[:i] @ v >= min_distance):
                centers[i] = v
                break
        else:
            raise InfeasibleScene(
                f"could not place {n} cluster centres {min_distance} apart in {dim} dimensions; "
                "use a larger embedding dimension")
    return centers


def _place_tracks(n_tracks: int, spec: SceneSpec, rng: np.random.Generator) -> list[tuple[int, int, int]]:
    """(lane, start frame, length) for each track, with no two tracks sharing a
    lane at the same time. Frames are 1-based."""
    W, H = spec.image_size
    lane_h = MAX_BOX_H + 10.0
    n_lanes = max(1, int(H // lane_h))
    busy_until = [-LANE_GAP] * n_lanes  # last occupied frame per lane
    F = spec.frames_per_camera
    placed = []
    for _ in range(n_tracks):
        length = int(rng.integers(spec.min_track_length, min(F, spec.max_track_length) + 1))
        first_free = [b + LANE_GAP + 1 for b in busy_until]
        fits = [ln for ln in range(n_lanes) if first_free[ln] + length - 1 <= F]
        if fits:
            ln = fits[int(rng.integers(len(fits)))]
        else:
            # shorten the track to the lane with the most room left
            ln = int(np.argmin(first_free))
            length = F - first_free[ln] + 1
            if length < spec.min_track_length:
                raise InfeasibleScene("too many tracks per camera for the image height and frame count")
        latest = min(F - length + 1, first_free[ln] + START_SLACK)
        start = int(rng.integers(first_free[ln], latest + 1))
        busy_until[ln] = start + length - 1
        placed.append((ln, start, length))
    return placed


def generate_scene(spec: SceneSpec) -> SceneTruth:
    rng = np.random.default_rng(spec.seed)
    W, H = spec.image_size
    n_id, n_cam = spec.num_identities, spec.num_cameras

    centers = cluster_centers(n_id, spec.embedding_dim, spec.min_cluster_distance, rng)
    speeds = rng.uniform(*spec.speed_range, size=n_id) * rng.choice([-1.0, 1.0], size=n_id)
    sizes = np.stack([rng.uniform(MIN_BOX_W, MAX_BOX_W, n_id), rng.uniform(MIN_BOX_H, MAX_BOX_H, n_id)], axis=1)

    appearances: dict[int, list[int]] = {c: [] for c in range(n_cam)}
    for ident in range(n_id):
        k = int(rng.integers(2, min(n_cam, spec.max_cameras_per_identity) + 1))
        for c in sorted(rng.choice(n_cam, size=k, replace=False).tolist()):
            appearances[c].append(ident)

    lane_h = MAX_BOX_H + 10.0
    cameras: dict[str, CameraTrackSet] = {}
    oracle: IdMapping = {}
    table = EmbeddingTable(spec.embedding_dim)
    for c in range(n_cam):
        cam = camera_name(c)
        idents = appearances[c]
        rng.shuffle(idents)
        placements = _place_tracks(len(idents), spec, rng)
        tracks = []
        for local_id, (ident, (lane, start, length)) in enumerate(zip(idents, placements), start=1):
            w, h = sizes[ident]
            vx = speeds[ident]
            # keep the box inside the image for the whole track
            length = min(length, int((W - w) // abs(vx)) + 1)
            travel = abs(vx) * (length - 1)
            x0 = rng.uniform(0.0, W - w - travel)
            if vx < 0:
                x0 += travel
            top = lane * lane_h + rng.uniform(0.0, lane_h - h)
            boxes = []
            for i in range(length):
                frame = start + i
                box = BoundingBox(float(x0 + vx * i), float(top), float(w), float(h))
                boxes.append((frame, box))
                emb = centers[ident] + rng.normal(0.0, spec.cluster_noise_sigma, spec.embedding_dim)
                table.add((cam, local_id, frame), emb)
            tracks.append(Track(local_id, cam, tuple(boxes)))
            oracle[(cam, local_id)] = ident + 1
        cameras[cam] = CameraTrackSet(cam, tuple(tracks))

    truth = SceneTruth(cameras, table, oracle)
    truth.detections = corrupt_detections(truth, spec.dropout_rate, spec.position_noise_sigma, spec.seed + 1)
    return truth


def corrupt_detections(truth: SceneTruth, dropout_rate: float, noise_sigma: float,
                       seed: int) -> dict[str, dict[int, list[Detection]]]:
    """Per camera, per frame detections derived from the ground truth.

    Each box is dropped with probability ``dropout_rate``; survivors get
    Gaussian jitter on their centre and a confidence drawn from [0.5, 1].
    Within a frame detections are ordered by ground-truth track id.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for cam, tracks in truth.cameras.items():
        rows = tracks.tracked_boxes()
        keep = rng.random(len(rows)) >= dropout_rate
        jitter = rng.normal(0.0, noise_sigma, size=(len(rows), 2)) if noise_sigma > 0 else np.zeros((len(rows), 2))
        conf = rng.uniform(0.5, 1.0, size=len(rows))
        dets = []
        for r, k, (dx, dy), s in zip(rows, keep, jitter, conf):
            if not k:
                continue
            b = r.bbox if (dx == 0 and dy == 0) else r.bbox.shifted(float(dx), float(dy))
            dets.append(Detection(r.frame, b, float(s)))
        out[cam] = group_by_frame(dets)
    return out


def single_dropout_detections(tracks: CameraTrackSet, seed: int) -> dict[int, list[Detection]]:
    """Ground-truth detections with exactly one interior frame removed per track."""
    rng = np.random.default_rng(seed)
    dets = []
    for t in tracks:
        if len(t) < 3:
            raise ValueError(f"track {t.id} too short for an interior dropout")
        gap = int(rng.integers(1, len(t) - 1))
        dets.extend(Detection(f, b, 1.0) for i, (f, b) in enumerate(t.boxes) if i != gap)
    dets.sort(key=lambda d: d.frame)
    return group_by_frame(dets)
