"""Reading and writing of detection/track files, embeddings, mappings and config.

Detection and track files use the 10-field MOTChallenge layout::

    frame,id,left,top,width,height,confidence,x,y,z

with 1-based frames kept as-is. Floats are written with ``repr`` so a
write/parse round trip is bit-exact.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import BoundingBox, CameraTrackSet, Detection, TrackedBox, camera_sort_key

# (camera, local track id) -> global id
IdMapping = dict[tuple[str, int], int]
# frame -> detection index within that frame -> (dx, dy)
DisplacementField = dict[int, dict[int, tuple[float, float]]]


class IngestError(ValueError):
    """Malformed input file; the message names the file and line."""

    def __init__(self, path, line: int | None, msg: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {msg}")


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class DetectionFileRow:
    frame: int
    id: int
    left: float
    top: float
    width: float
    height: float
    confidence: float
    world_x: float = -1.0
    world_y: float = -1.0
    world_z: float = -1.0

    @property
    def bbox(self) -> BoundingBox:
        return BoundingBox(self.left, self.top, self.width, self.height)


def _parse_row(fields: list[str], path, lineno: int) -> DetectionFileRow:
    if len(fields) != 10:
        raise IngestError(path, lineno, f"expected 10 fields, got {len(fields)}")
    try:
        frame_f = float(fields[0])
        id_f = float(fields[1])
        left, top, width, height = (float(v) for v in fields[2:6])
        conf = float(fields[6]) if fields[6].strip() else -1.0
        wx, wy, wz = (float(v) if v.strip() else -1.0 for v in fields[7:10])
    except ValueError:
        raise IngestError(path, lineno, "non-numeric field") from None
    if frame_f != int(frame_f) or id_f != int(id_f):
        raise IngestError(path, lineno, "frame and id must be integers")
    frame, tid = int(frame_f), int(id_f)
    if frame < 1:
        raise IngestError(path, lineno, f"frame {frame} < 1")
    if tid != -1 and tid < 1:
        raise IngestError(path, lineno, f"invalid id {tid}")
    if not all(math.isfinite(v) for v in (left, top, width, height)):
        raise IngestError(path, lineno, "non-finite box")
    if width <= 0 or height <= 0:
        raise IngestError(path, lineno, f"non-positive box size at line {lineno}")
    if conf == -1.0:
        conf = 1.0
    if not 0.0 <= conf <= 1.0:
        raise IngestError(path, lineno, f"confidence {conf} outside [0, 1]")
    return DetectionFileRow(frame, tid, left, top, width, height, conf, wx, wy, wz)


def read_rows(path) -> list[DetectionFileRow]:
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rows.append(_parse_row(line.split(","), path, lineno))
    return rows


def parse_detections(path) -> list[Detection | TrackedBox]:
    """Rows with id -1 become Detection, all others TrackedBox; file order kept."""
    out: list[Detection | TrackedBox] = []
    for r in read_rows(path):
        if r.id == -1:
            out.append(Detection(r.frame, r.bbox, r.confidence))
        else:
            out.append(TrackedBox(r.frame, r.bbox, r.id))
    return out


def read_detections(path) -> list[Detection]:
    """Read every row as a Detection, ignoring any id column."""
    return [Detection(r.frame, r.bbox, r.confidence) for r in read_rows(path)]


def read_tracks(path, camera: str | None = None) -> CameraTrackSet:
    if camera is None:
        camera = camera_from_path(path)
    rows = []
    for lineno, r in enumerate(read_rows(path), start=1):
        if r.id == -1:
            raise IngestError(path, None, f"row {lineno} has no track id")
        rows.append(TrackedBox(r.frame, r.bbox, r.id))
    try:
        return CameraTrackSet.from_tracked_boxes(camera, rows)
    except ValueError as e:
        raise IngestError(path, None, str(e)) from None


def write_tracks(tracks: CameraTrackSet, path) -> None:
    with open(path, "w") as fh:
        for r in tracks.tracked_boxes():
            b = r.bbox
            fh.write(f"{r.frame},{r.track_id},{_fmt(b.left)},{_fmt(b.top)},"
                     f"{_fmt(b.width)},{_fmt(b.height)},1.0,-1,-1,-1\n")


def write_detections(detections: Iterable[Detection], path) -> None:
    with open(path, "w") as fh:
        for d in detections:
            b = d.bbox
            fh.write(f"{d.frame},-1,{_fmt(b.left)},{_fmt(b.top)},"
                     f"{_fmt(b.width)},{_fmt(b.height)},{_fmt(d.confidence)},-1,-1,-1\n")


def group_by_frame(detections: Iterable[Detection]) -> dict[int, list[Detection]]:
    frames: dict[int, list[Detection]] = defaultdict(list)
    for d in detections:
        frames[d.frame].append(d)
    return dict(sorted(frames.items()))


def camera_from_path(path) -> str:
    return os.path.splitext(os.path.basename(str(path)))[0]


class EmbeddingTable:
    """Appearance vectors keyed by (camera, track_id, frame), all of one dimension."""

    def __init__(self, dimension: int, entries: Mapping[tuple[str, int, int], np.ndarray] | None = None):
        if dimension < 1:
            raise ValueError("embedding dimension must be positive")
        self.dimension = dimension
        self.entries: dict[tuple[str, int, int], np.ndarray] = {}
        self._by_track: dict[tuple[str, int], list[int]] | None = None
        for key, vec in (entries or {}).items():
            self.add(key, vec)

    def add(self, key: tuple[str, int, int], vec) -> None:
        v = np.asarray(vec, dtype=float)
        if v.shape != (self.dimension,):
            raise ValueError(f"embedding for {key} has shape {v.shape}, expected ({self.dimension},)")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite embedding for {key}")
        if key in self.entries:
            raise ValueError(f"duplicate embedding key {key}")
        self.entries[key] = v
        self._by_track = None

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __getitem__(self, key) -> np.ndarray:
        return self.entries[key]

    def frames_for(self, camera: str, track_id: int) -> list[int]:
        if self._by_track is None:
            idx: dict[tuple[str, int], list[int]] = defaultdict(list)
            for cam, tid, frame in self.entries:
                idx[(cam, tid)].append(frame)
            for frames in idx.values():
                frames.sort()
            self._by_track = dict(idx)
        return self._by_track.get((camera, track_id), [])

    def equals(self, other: EmbeddingTable) -> bool:
        if self.dimension != other.dimension or self.entries.keys() != other.entries.keys():
            return False
        return all(np.array_equal(v, other.entries[k]) for k, v in self.entries.items())


def parse_embeddings(path) -> EmbeddingTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(path, 1, "missing header") from None
        header = [h.strip() for h in header]
        if header[:3] != ["camera", "track", "frame"] or len(header) < 4:
            raise IngestError(path, 1, "header must be camera,track,frame,e0,...")
        dim = len(header) - 3
        if header[3:] != [f"e{i}" for i in range(dim)]:
            raise IngestError(path, 1, "embedding columns must be e0..e{D-1}")
        table = EmbeddingTable(dim)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 3:
                raise IngestError(path, lineno, f"expected {dim + 3} fields, got {len(row)}")
            try:
                key = (row[0].strip(), int(row[1]), int(row[2]))
                vec = [float(v) for v in row[3:]]
            except ValueError:
                raise IngestError(path, lineno, "non-numeric field") from None
            try:
                table.add(key, vec)
            except ValueError as e:
                raise IngestError(path, lineno, str(e)) from None
    return table


def write_embeddings(table: EmbeddingTable, path) -> None:
    keys = sorted(table.entries, key=lambda k: (camera_sort_key(k[0]), k[1], k[2]))
    with open(path, "w") as fh:
        fh.write(",".join(["camera", "track", "frame"] + [f"e{i}" for i in range(table.dimension)]) + "\n")
        for cam, tid, frame in keys:
            vec = ",".join(_fmt(v) for v in table.entries[(cam, tid, frame)])
            fh.write(f"{cam},{tid},{frame},{vec}\n")


def read_id_mapping(path) -> IdMapping:
    mapping: IdMapping = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["camera", "local_id", "global_id"]:
            raise IngestError(path, 1, "header must be camera,local_id,global_id")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise IngestError(path, lineno, f"expected 3 fields, got {len(row)}")
            try:
                key, gid = (row[0].strip(), int(row[1])), int(row[2])
            except ValueError:
                raise IngestError(path, lineno, "non-numeric id") from None
            if key in mapping:
                raise IngestError(path, lineno, f"duplicate key {key}")
            mapping[key] = gid
    return mapping


def write_id_mapping(mapping: Mapping[tuple[str, int], int], path) -> None:
    with open(path, "w") as fh:
        fh.write("camera,local_id,global_id\n")
        for cam, lid in sorted(mapping, key=lambda k: (camera_sort_key(k[0]), k[1])):
            fh.write(f"{cam},{lid},{mapping[(cam, lid)]}\n")


def read_displacements(path) -> DisplacementField:
    field: DisplacementField = defaultdict(dict)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["frame", "det_index", "dx", "dy"]:
            raise IngestError(path, 1, "header must be frame,det_index,dx,dy")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise IngestError(path, lineno, f"expected 4 fields, got {len(row)}")
            try:
                frame, idx = int(row[0]), int(row[1])
                dx, dy = float(row[2]), float(row[3])
            except ValueError:
                raise IngestError(path, lineno, "non-numeric field") from None
            if not (math.isfinite(dx) and math.isfinite(dy)):
                raise IngestError(path, lineno, "non-finite displacement")
            field[frame][idx] = (dx, dy)
    return dict(field)


def write_displacements(field: DisplacementField, path) -> None:
    with open(path, "w") as fh:
        fh.write("frame,det_index,dx,dy\n")
        for frame in sorted(field):
            for idx in sorted(field[frame]):
                dx, dy = field[frame][idx]
                fh.write(f"{frame},{idx},{_fmt(dx)},{_fmt(dy)}\n")


@dataclass
class RunConfig:
    iou_match_threshold: float = 0.2
    sort_max_age: int = 1
    sort_min_hits: int = 1
    parked_dispersion_threshold: float = 50.0
    min_box_width: float = 80.0
    min_box_height: float = 60.0
    reid_match_threshold: float = 0.6
    reid_P: int = 4
    reid_N: int = 3
    eval_iou_threshold: float = 0.5

    def __post_init__(self):
        for name in ("iou_match_threshold", "eval_iou_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.reid_match_threshold <= 2.0:
            raise ValueError("reid_match_threshold must lie in [0, 2]")
        if self.sort_max_age < 0:
            raise ValueError("sort_max_age must be >= 0")
        if self.sort_min_hits < 1:
            raise ValueError("sort_min_hits must be >= 1")
        if self.reid_P < 1 or self.reid_N < 1:
            raise ValueError("reid_P and reid_N must be >= 1")
        for name in ("parked_dispersion_threshold", "min_box_width", "min_box_height"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def replace(self, **overrides) -> RunConfig:
        """Copy with the non-None overrides applied."""
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})


def parse_config_text(text: str, source="<config>") -> RunConfig:
    types = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise IngestError(source, lineno, "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise IngestError(source, lineno, f"unknown config key '{key}'")
        try:
            if types[key] in ("int", int):
                values[key] = int(value)
            else:
                values[key] = float(value)
        except ValueError:
            raise IngestError(source, lineno, f"bad value for {key}: {value!r}") from None
    try:
        return RunConfig(**values)
    except ValueError as e:
        raise IngestError(source, None, str(e)) from None


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), source=path)


def dump_config(config: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in dataclasses.asdict(config).items())


def sorted_cameras(cameras: Sequence[str]) -> list[str]:
    return sorted(cameras, key=camera_sort_key)
