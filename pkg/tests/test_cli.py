import os

import pytest

from citytrack import ingest
from citytrack.cli import main
from citytrack.model import BoundingBox, CameraTrackSet, Track
from citytrack.report import read_csv_rows
from citytrack.synth import SceneSpec, generate_scene


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    assert main(["synth", "--out", str(out), "--seed", "3", "--cameras", "3", "--identities", "8",
                 "--dropout", "0.05", "--noise", "1.0"]) == 0
    return out


def _avg(csv_path, key="idf1"):
    rows = read_csv_rows(csv_path)
    return float(next(r for r in rows if r["camera"] == "Average")[key])


def test_synth_layout_round_trips(scene_dir):
    truth = generate_scene(SceneSpec(num_cameras=3, num_identities=8, dropout_rate=0.05,
                                     position_noise_sigma=1.0, seed=3))
    for cam, tracks in truth.cameras.items():
        assert ingest.read_tracks(scene_dir / "gt" / f"{cam}.txt") == tracks
        dets = ingest.read_detections(scene_dir / "det" / f"{cam}.txt")
        want = [d for ds in truth.detections[cam].values() for d in ds]
        assert dets == want
    assert ingest.parse_embeddings(scene_dir / "embeddings.csv").equals(truth.embeddings)
    assert ingest.read_id_mapping(scene_dir / "mapping.csv") == truth.oracle


def test_track_then_parse(scene_dir, tmp_path, capsys):
    out = tmp_path / "c01.txt"
    assert main(["track", "--detections", str(scene_dir / "det" / "c01.txt"), "--method", "overlap",
                 "--out", str(out)]) == 0
    tracks = ingest.read_tracks(out)
    assert tracks.camera == "c01" and len(tracks) > 0
    assert f"tracks={len(tracks)}" in capsys.readouterr().out


def test_sort_beats_overlap_on_dropout(scene_dir, tmp_path):
    ids, csvs = {}, {}
    for method in ("overlap", "sort"):
        d = tmp_path / method
        d.mkdir()
        gts, preds = [], []
        for cam in ("c01", "c02", "c03"):
            out = d / f"{cam}.txt"
            assert main(["track", "--detections", str(scene_dir / "det" / f"{cam}.txt"),
                         "--method", method, "--out", str(out)]) == 0
            gts.append(str(scene_dir / "gt" / f"{cam}.txt"))
            preds.append(str(out))
        ids[method] = sum(len(ingest.read_tracks(p)) for p in preds)
        csvs[method] = d / "eval.csv"
        assert main(["eval-tracking", "--gt", *gts, "--pred", *preds, "--csv", str(csvs[method])]) == 0
    assert ids["sort"] < ids["overlap"]
    assert _avg(csvs["sort"]) > _avg(csvs["overlap"])


def test_missing_file_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.txt"
    assert main(["track", "--detections", str(missing), "--out", str(tmp_path / "o.txt")]) != 0
    assert str(missing) in capsys.readouterr().err


def test_bad_input_reports_line(tmp_path, capsys):
    bad = tmp_path / "c01.txt"
    bad.write_text("1,-1,0,0,10,10,1,-1,-1,-1\n2,-1,0,0,0,10,1,-1,-1,-1\n")
    assert main(["track", "--detections", str(bad), "--out", str(tmp_path / "o.txt")]) == 1
    assert f"{bad}:2:" in capsys.readouterr().err


def test_eval_tracking_perfect_and_empty(scene_dir, tmp_path):
    gt = str(scene_dir / "gt" / "c01.txt")
    out = tmp_path / "self.csv"
    assert main(["eval-tracking", "--gt", gt, "--pred", gt, "--csv", str(out)]) == 0
    assert _avg(out) == 1.0
    empty = tmp_path / "c01.txt"
    empty.write_text("")
    assert main(["eval-tracking", "--gt", gt, "--pred", str(empty), "--csv", str(out)]) == 0
    assert _avg(out) == 0.0


def test_eval_tracking_split_track(tmp_path, capsys):
    box = BoundingBox(0, 0, 100, 80)
    gt = CameraTrackSet("c01", (Track(1, "c01", tuple((f, box) for f in range(1, 11))),))
    pred = CameraTrackSet("c01", (Track(1, "c01", tuple((f, box) for f in range(1, 6))),
                                  Track(2, "c01", tuple((f, box) for f in range(6, 11)))))
    ingest.write_tracks(gt, tmp_path / "gt.txt")
    ingest.write_tracks(pred, tmp_path / "pred.txt")
    assert main(["eval-tracking", "--gt", f"c01={tmp_path / 'gt.txt'}",
                 "--pred", f"c01={tmp_path / 'pred.txt'}"]) == 0
    out = capsys.readouterr().out
    assert "Average.idf1 = 0.5000" in out and "c01.idtp = 5" in out


def test_eval_detection_outputs(scene_dir, tmp_path, capsys):
    gt, det = str(scene_dir / "gt" / "c02.txt"), str(scene_dir / "det" / "c02.txt")
    figs = tmp_path / "figs"
    figs.mkdir()
    assert main(["eval-detection", "--gt", gt, "--pred", det, "--figures", str(figs)]) == 0
    out = capsys.readouterr().out
    assert "c02.ap = " in out and "camera,ap,precision" in out
    assert (figs / "pr_curve.png").stat().st_size > 0


def test_duplicate_camera_is_usage_error(scene_dir, capsys):
    gt = str(scene_dir / "gt" / "c01.txt")
    with pytest.raises(SystemExit) as e:
        main(["eval-tracking", "--gt", gt, gt, "--pred", gt, gt])
    assert e.value.code == 2


def test_reid_single_camera_is_identity(scene_dir, tmp_path):
    out = tmp_path / "map.csv"
    assert main(["reid", "--tracks", str(scene_dir / "gt" / "c01.txt"),
                 "--embeddings", str(scene_dir / "embeddings.csv"), "--out", str(out)]) == 0
    mapping = ingest.read_id_mapping(out)
    assert mapping and all(g == tid for (_, tid), g in mapping.items())


def test_reid_recovers_oracle(scene_dir, tmp_path):
    out, out_dir = tmp_path / "map.csv", tmp_path / "global"
    tracks = [str(scene_dir / "gt" / f"c0{i}.txt") for i in (1, 2, 3)]
    assert main(["reid", "--tracks", *tracks, "--embeddings", str(scene_dir / "embeddings.csv"),
                 "--out", str(out), "--out-dir", str(out_dir)]) == 0
    got = ingest.read_id_mapping(out)
    oracle = ingest.read_id_mapping(scene_dir / "mapping.csv")
    # same partition of tracks into identities
    pairs = {(got[k], oracle[k]) for k in oracle}
    assert len(pairs) == len(set(got.values())) == len(set(oracle.values()))
    assert sorted(os.listdir(out_dir)) == ["c01.txt", "c02.txt", "c03.txt"]


def test_reid_missing_embedding(scene_dir, tmp_path, capsys):
    tracks = ingest.read_tracks(scene_dir / "gt" / "c01.txt")
    extra = CameraTrackSet("c01", tracks.tracks + (Track(99, "c01", ((1, BoundingBox(0, 0, 90, 70)),)),))
    ingest.write_tracks(extra, tmp_path / "c01.txt")
    code = main(["reid", "--tracks", str(tmp_path / "c01.txt"), str(scene_dir / "gt" / "c02.txt"),
                 "--embeddings", str(scene_dir / "embeddings.csv"), "--out", str(tmp_path / "m.csv")])
    assert code == 1
    assert "camera=c01, track=99" in capsys.readouterr().err


def test_config_precedence(scene_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# very strict matching\niou_match_threshold = 0.99\n")
    det = str(scene_dir / "det" / "c01.txt")
    counts = {}
    for name, extra in (("default", []), ("config", ["--config", str(cfg)]),
                        ("flag", ["--config", str(cfg), "--iou-threshold", "0.2"])):
        out = tmp_path / f"{name}.txt"
        assert main(["track", "--detections", det, "--method", "overlap", "--out", str(out), *extra]) == 0
        counts[name] = len(ingest.read_tracks(out))
    assert counts["config"] > counts["default"] == counts["flag"]


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("iou_match_treshold = 0.3\n")
    det = tmp_path / "c01.txt"
    det.write_text("1,-1,0,0,10,10,1,-1,-1,-1\n")
    assert main(["track", "--detections", str(det), "--out", str(tmp_path / "o.txt"), "--config", str(cfg)]) == 1
    assert "iou_match_treshold" in capsys.readouterr().err


def test_unknown_method_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["track", "--detections", "x", "--out", "y", "--method", "deepsort"])
    assert e.value.code == 2


def test_postprocess_with_figures(scene_dir, tmp_path, capsys):
    figs = tmp_path / "figs"
    figs.mkdir()
    out, stats = tmp_path / "pp.txt", tmp_path / "stats.csv"
    assert main(["postprocess", "--tracks", str(scene_dir / "gt" / "c01.txt"), "--out", str(out),
                 "--stats", str(stats), "--figures", str(figs)]) == 0
    # ground-truth tracks all move and are large enough
    assert ingest.read_tracks(out, "c01") == ingest.read_tracks(scene_dir / "gt" / "c01.txt")
    assert stats.read_text().startswith("track_id,dispersion\n")
    assert (figs / "dispersion_c01.png").stat().st_size > 0


def test_eval_tracking_figure(scene_dir, tmp_path):
    gt = str(scene_dir / "gt" / "c01.txt")
    assert main(["eval-tracking", "--gt", gt, "--pred", gt, "--csv", str(tmp_path / "e.csv"),
                 "--figures", str(tmp_path)]) == 0
    assert (tmp_path / "id_scores.png").stat().st_size > 0
