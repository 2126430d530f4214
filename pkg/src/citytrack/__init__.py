"""Vehicle tracking from precomputed detections: single-camera tracking,
post-processing, cross-camera re-identification and MOT-style evaluation."""

from .ingest import EmbeddingTable, RunConfig
from .model import BoundingBox, CameraTrackSet, Detection, Track, TrackedBox, center, iou

__version__ = "0.1.0"

__all__ = [
    "BoundingBox", "CameraTrackSet", "Detection", "EmbeddingTable", "RunConfig",
    "Track", "TrackedBox", "center", "iou",
]
