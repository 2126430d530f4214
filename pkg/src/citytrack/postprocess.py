"""Track clean-up to match the annotation policy: drop parked cars and small boxes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CameraTrackSet, Track, center


@dataclass(frozen=True)
class DispersionStat:
    track_id: int
    dispersion: float


def center_dispersion(track: Track) -> float:
    """Mean squared distance (px^2) of the box centres to their centroid."""
    pts = np.array([center(b) for _, b in track.boxes])
    if (pts == pts[0]).all():
        return 0.0  # the float mean of equal values need not equal them
    return float(np.mean(np.sum((pts - pts.mean(axis=0)) ** 2, axis=1)))


def remove_parked(tracks: CameraTrackSet, threshold: float = 50.0) -> tuple[CameraTrackSet, list[DispersionStat]]:
    """Drop tracks whose centre dispersion is below ``threshold``.

    A track with zero dispersion (never moved, or a single box) is always
    dropped, so a zero threshold removes exactly the static tracks.
    """
    stats = [DispersionStat(t.id, center_dispersion(t)) for t in tracks]
    keep = {s.track_id for s in stats if s.dispersion >= threshold and s.dispersion > 0}
    return CameraTrackSet(tracks.camera, tuple(t for t in tracks if t.id in keep)), stats


def filter_small(tracks: CameraTrackSet, min_w: float = 80.0, min_h: float = 60.0) -> CameraTrackSet:
    kept = []
    for t in tracks:
        boxes = [(f, b) for f, b in t.boxes if b.width >= min_w and b.height >= min_h]
        if boxes:
            kept.append(t if len(boxes) == len(t) else t.with_boxes(boxes))
    return CameraTrackSet(tracks.camera, tuple(kept))


def postprocess(tracks: CameraTrackSet, parked_threshold: float = 50.0, min_w: float = 80.0,
                min_h: float = 60.0) -> tuple[CameraTrackSet, list[DispersionStat]]:
    # dispersion is measured on every observed box, before small ones go
    moving, stats = remove_parked(tracks, parked_threshold)
    return filter_small(moving, min_w, min_h), stats
