import numpy as np
import pytest

from citytrack import ingest
from citytrack.ingest import EmbeddingTable, IngestError, RunConfig
from citytrack.model import BoundingBox, CameraTrackSet, Detection, Track, TrackedBox


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_detection_row(tmp_path):
    p = write(tmp_path, "d.txt", "1,-1,10,20,30,40,0.9,-1,-1,-1\n")
    assert ingest.parse_detections(p) == [Detection(1, BoundingBox(10, 20, 30, 40), 0.9)]


def test_parse_tracked_row(tmp_path):
    p = write(tmp_path, "d.txt", "1,5,10,20,30,40,1,-1,-1,-1\n")
    assert ingest.parse_detections(p) == [TrackedBox(1, BoundingBox(10, 20, 30, 40), 5)]


def test_negative_size_is_error(tmp_path):
    p = write(tmp_path, "d.txt", "1,-1,10,20,-5,40,0.9,-1,-1,-1\n")
    with pytest.raises(IngestError, match="non-positive box size at line 1"):
        ingest.parse_detections(p)


@pytest.mark.parametrize("row,msg", [
    ("1,-1,10,20,30,40,0.9,-1,-1", "expected 10 fields"),
    ("1,-1,10,abc,30,40,0.9,-1,-1,-1", "non-numeric"),
    ("0,-1,10,20,30,40,0.9,-1,-1,-1", "frame 0"),
    ("1,-1,10,20,30,40,1.7,-1,-1,-1", "confidence"),
])
def test_bad_rows_name_line(tmp_path, row, msg):
    p = write(tmp_path, "d.txt", "1,-1,1,1,1,1,0.5,-1,-1,-1\n" + row + "\n")
    with pytest.raises(IngestError, match=msg) as exc:
        ingest.parse_detections(p)
    assert exc.value.line == 2
    assert ":2:" in str(exc.value)


def test_missing_confidence_maps_to_one(tmp_path):
    p = write(tmp_path, "d.txt", "3,-1,1,1,2,2,-1,-1,-1,-1\n4,-1,1,1,2,2,,-1,-1,-1\n")
    assert [d.confidence for d in ingest.parse_detections(p)] == [1.0, 1.0]


def test_order_preserved(tmp_path):
    p = write(tmp_path, "d.txt", "5,-1,1,1,2,2,0.1,-1,-1,-1\n2,-1,1,1,2,2,0.2,-1,-1,-1\n")
    assert [d.frame for d in ingest.parse_detections(p)] == [5, 2]


def _trackset(seed, n_tracks=3):
    rng = np.random.default_rng(seed)
    tracks = []
    for tid in rng.choice(np.arange(1, 50), size=n_tracks, replace=False):
        frames = np.sort(rng.choice(np.arange(1, 100), size=int(rng.integers(1, 8)), replace=False))
        boxes = tuple((int(f), BoundingBox(*rng.uniform(-50, 500, 2), *rng.uniform(0.1, 200, 2))) for f in frames)
        tracks.append(Track(int(tid), "cam", boxes))
    return CameraTrackSet("cam", tuple(tracks))


def test_write_tracks_empty(tmp_path):
    p = tmp_path / "t.txt"
    ingest.write_tracks(CameraTrackSet("cam"), p)
    assert p.read_text() == ""
    assert ingest.read_tracks(p, "cam") == CameraTrackSet("cam")


def test_write_tracks_one_row(tmp_path):
    p = tmp_path / "t.txt"
    ingest.write_tracks(CameraTrackSet("cam", (Track(2, "cam", ((7, BoundingBox(1, 2, 3, 4)),)),)), p)
    assert p.read_text() == "7,2,1.0,2.0,3.0,4.0,1.0,-1,-1,-1\n"


def test_write_tracks_sorted_by_frame_then_id(tmp_path):
    ts = _trackset(4, n_tracks=5)
    p = tmp_path / "t.txt"
    ingest.write_tracks(ts, p)
    keys = [tuple(int(v) for v in line.split(",")[:2]) for line in p.read_text().splitlines()]
    assert keys == sorted(keys)


def test_track_round_trip(tmp_path):
    ts = _trackset(0)
    p = tmp_path / "t.txt"
    ingest.write_tracks(ts, p)
    assert ingest.read_tracks(p, "cam") == ts


def test_embeddings(tmp_path):
    p = write(tmp_path, "e.csv", "camera,track,frame,e0,e1,e2,e3\nc1,1,1,0.1,0.2,0.3,0.4\n")
    t = ingest.parse_embeddings(p)
    assert t.dimension == 4
    assert np.array_equal(t[("c1", 1, 1)], [0.1, 0.2, 0.3, 0.4])


def test_embeddings_width_mismatch(tmp_path):
    p = write(tmp_path, "e.csv", "camera,track,frame,e0,e1\nc1,1,1,0.1,0.2\nc1,1,2,0.1\n")
    with pytest.raises(IngestError, match=":3:"):
        ingest.parse_embeddings(p)


def test_embeddings_duplicate_key(tmp_path):
    p = write(tmp_path, "e.csv", "camera,track,frame,e0\nc1,1,1,0.1\nc1,1,1,0.2\n")
    with pytest.raises(IngestError, match="duplicate"):
        ingest.parse_embeddings(p)


def test_embeddings_not_renormalized(tmp_path):
    t = EmbeddingTable(2, {("c", 1, 1): [3.0, 4.0]})
    p = tmp_path / "e.csv"
    ingest.write_embeddings(t, p)
    assert np.array_equal(ingest.parse_embeddings(p)[("c", 1, 1)], [3.0, 4.0])


def test_id_mapping_round_trip(tmp_path):
    m = {("c10", 1): 1, ("c2", 3): 7, ("c2", 1): 2}
    p = tmp_path / "m.csv"
    ingest.write_id_mapping(m, p)
    assert p.read_text().splitlines()[0] == "camera,local_id,global_id"
    assert p.read_text().splitlines()[1].startswith("c2,1")
    assert ingest.read_id_mapping(p) == m


def test_displacements_round_trip(tmp_path):
    field = {3: {0: (1.5, -2.0), 2: (0.0, 0.25)}, 4: {1: (3.0, 3.0)}}
    p = tmp_path / "flow.csv"
    ingest.write_displacements(field, p)
    assert ingest.read_displacements(p) == field


def test_displacements_need_header(tmp_path):
    p = write(tmp_path, "f.csv", "1,0,1,1\n")
    with pytest.raises(IngestError, match="header"):
        ingest.read_displacements(p)


def test_config_defaults():
    c = RunConfig()
    assert (c.reid_match_threshold, c.reid_P, c.reid_N) == (0.6, 4, 3)
    assert (c.parked_dispersion_threshold, c.min_box_width, c.min_box_height) == (50, 80, 60)
    assert (c.iou_match_threshold, c.sort_max_age, c.sort_min_hits, c.eval_iou_threshold) == (0.2, 1, 1, 0.5)


def test_config_file(tmp_path):
    p = write(tmp_path, "run.cfg", "# experiment\nreid_P = 6  # more samples\n\niou_match_threshold=0.3\n")
    c = ingest.load_config(p)
    assert c.reid_P == 6 and isinstance(c.reid_P, int)
    assert c.iou_match_threshold == 0.3
    assert c.reid_N == 3


def test_config_unknown_key(tmp_path):
    p = write(tmp_path, "run.cfg", "reid_p = 6\n")
    with pytest.raises(IngestError, match="unknown config key 'reid_p'"):
        ingest.load_config(p)


@pytest.mark.parametrize("text", ["reid_P = 0", "iou_match_threshold = 1.5", "sort_max_age = x"])
def test_config_invalid_values(text):
    with pytest.raises(IngestError):
        ingest.parse_config_text(text)


def test_config_dump_parses_back():
    c = RunConfig(reid_P=7, iou_match_threshold=0.25)
    assert ingest.parse_config_text(ingest.dump_config(c)) == c


def test_config_replace_skips_none():
    assert RunConfig().replace(reid_P=None, reid_N=5) == RunConfig(reid_N=5)
