"""Domain types and box geometry shared across the package.

Boxes are continuous pixel rectangles stored as (left, top, width, height);
area is ``width * height`` with no +1 pixel correction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True, slots=True)
class BoundingBox:
    left: float
    top: float
    width: float
    height: float

    def __post_init__(self):
        vals = (self.left, self.top, self.width, self.height)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"non-positive box size {self.width}x{self.height}")

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    def shifted(self, dx: float, dy: float) -> BoundingBox:
        return BoundingBox(self.left + dx, self.top + dy, self.width, self.height)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.width, self.height)


@dataclass(frozen=True, slots=True)
class Detection:
    frame: int
    bbox: BoundingBox
    confidence: float = 1.0

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"negative frame {self.frame}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True, slots=True)
class TrackedBox:
    frame: int
    bbox: BoundingBox
    track_id: int

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"negative frame {self.frame}")
        if self.track_id < 1:
            raise ValueError(f"track id must be >= 1, got {self.track_id}")


@dataclass(frozen=True)
class Track:
    """One identity's boxes inside a single camera, ordered by frame."""

    id: int
    camera: str
    boxes: tuple[tuple[int, BoundingBox], ...]

    def __post_init__(self):
        boxes = tuple((int(f), b) for f, b in self.boxes)
        object.__setattr__(self, "boxes", boxes)
        if self.id < 1:
            raise ValueError(f"track id must be >= 1, got {self.id}")
        if not boxes:
            raise ValueError(f"track {self.id} is empty")
        frames = [f for f, _ in boxes]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError(f"track {self.id}: frames not strictly increasing")

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def frames(self) -> list[int]:
        return [f for f, _ in self.boxes]

    def with_boxes(self, boxes: Iterable[tuple[int, BoundingBox]]) -> Track:
        return Track(self.id, self.camera, tuple(boxes))


@dataclass(frozen=True)
class CameraTrackSet:
    """All tracks of one camera. Tracks are kept sorted by id."""

    camera: str
    tracks: tuple[Track, ...] = field(default_factory=tuple)

    def __post_init__(self):
        tracks = tuple(sorted(self.tracks, key=lambda t: t.id))
        ids = [t.id for t in tracks]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate track ids in camera {self.camera}")
        object.__setattr__(self, "tracks", tracks)

    def __len__(self) -> int:
        return len(self.tracks)

    def __iter__(self):
        return iter(self.tracks)

    @property
    def num_boxes(self) -> int:
        return sum(len(t) for t in self.tracks)

    def frame_span(self) -> tuple[int, int] | None:
        frames = [f for t in self.tracks for f, _ in t.boxes]
        if not frames:
            return None
        return min(frames), max(frames)

    def tracked_boxes(self) -> list[TrackedBox]:
        rows = [TrackedBox(f, b, t.id) for t in self.tracks for f, b in t.boxes]
        rows.sort(key=lambda r: (r.frame, r.track_id))
        return rows

    @classmethod
    def from_tracked_boxes(cls, camera: str, rows: Iterable[TrackedBox]) -> CameraTrackSet:
        grouped: dict[int, list[tuple[int, BoundingBox]]] = {}
        for r in rows:
            grouped.setdefault(r.track_id, []).append((r.frame, r.bbox))
        tracks = []
        for tid, boxes in grouped.items():
            boxes.sort(key=lambda fb: fb[0])
            tracks.append(Track(tid, camera, tuple(boxes)))
        return cls(camera, tuple(tracks))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    if a == b:
        return 1.0  # (l + w) - l can differ from w in floating point
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return min(1.0, inter / (a.area + b.area - inter))


def center(b: BoundingBox) -> tuple[float, float]:
    return (b.left + b.width / 2.0, b.top + b.height / 2.0)


def boxes_to_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    """Stack boxes into an (n, 4) ltwh float array."""
    if not boxes:
        return np.zeros((0, 4))
    return np.array([b.as_tuple() for b in boxes], dtype=float)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (n, 4) / (m, 4) ltwh arrays.

    Rows with non-positive width or height (e.g. degenerate Kalman
    predictions) get IoU 0 against everything.
    """
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    ax2, ay2 = ax1 + a[:, 2:3], ay1 + a[:, 3:4]
    bx1, by1 = b[:, 0], b[:, 1]
    bx2, by2 = bx1 + b[:, 2], by1 + b[:, 3]
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0, None)
    inter = iw * ih
    area_a = np.clip(a[:, 2:3], 0, None) * np.clip(a[:, 3:4], 0, None)
    area_b = np.clip(b[:, 2], 0, None) * np.clip(b[:, 3], 0, None)
    union = area_a + area_b - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=(union > 0) & (inter > 0))
    return out


def pair_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise IoU of two equally long (n, 4) ltwh arrays of valid boxes."""
    iw = np.clip(np.minimum(a[:, 0] + a[:, 2], b[:, 0] + b[:, 2]) - np.maximum(a[:, 0], b[:, 0]), 0.0, None)
    ih = np.clip(np.minimum(a[:, 1] + a[:, 3], b[:, 1] + b[:, 3]) - np.maximum(a[:, 1], b[:, 1]), 0.0, None)
    inter = iw * ih
    union = a[:, 2] * a[:, 3] + b[:, 2] * b[:, 3] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=inter > 0)
    return out


def overlap_pairs(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sparse pairwise IoU: indices ``(i, j)`` and IoU of every pair with
    positive overlap, found by sweeping over left edges instead of forming
    the full matrix. Same values as :func:`iou_matrix` on those entries.
    """
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    empty = np.zeros(0, dtype=np.intp)
    if len(a) == 0 or len(b) == 0:
        return empty, empty, np.zeros(0)
    order = np.argsort(b[:, 0], kind="stable")
    lefts = b[order, 0]
    # b overlaps a horizontally only if a.left - b.width < b.left < a.right
    lo = np.searchsorted(lefts, a[:, 0] - b[:, 2].max(), side="right")
    hi = np.searchsorted(lefts, a[:, 0] + a[:, 2], side="left")
    counts = np.maximum(hi - lo, 0)
    total = int(counts.sum())
    ii = np.repeat(np.arange(len(a)), counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    jj = order[np.repeat(lo, counts) + offsets]
    ious = pair_iou(a[ii], b[jj])
    keep = ious > 0
    return ii[keep], jj[keep], ious[keep]


_DIGITS = re.compile(r"(\d+)")


def camera_sort_key(camera: str):
    """Natural ordering so that ``c9`` sorts before ``c10``."""
    return [int(p) if p.isdigit() else p for p in _DIGITS.split(camera)]
