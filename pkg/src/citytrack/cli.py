"""Command line front-end: track, postprocess, reid, eval-detection, eval-tracking, synth."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import ingest, plots, report
from .ingest import IngestError, RunConfig
from .metrics import average_precision, detection_pr, id_metrics, precision_recall_curve, EvalReport
from .model import CameraTrackSet
from .postprocess import postprocess
from .reid import DegenerateEmbedding, MissingEmbeddings, reid_cascade, relabel
from .synth import SceneSpec, generate_scene
from .tracking import track_overlap, track_sort

log = logging.getLogger("citytrack")


def _config(args, **overrides) -> RunConfig:
    base = ingest.load_config(args.config) if getattr(args, "config", None) else RunConfig()
    return base.replace(**overrides)


def _camera_path(spec: str) -> tuple[str, str]:
    """``cam=path`` or plain ``path`` (camera taken from the file stem)."""
    if "=" in spec and not os.path.exists(spec):
        cam, path = spec.split("=", 1)
        return cam, path
    return ingest.camera_from_path(spec), spec


def cmd_track(args) -> int:
    cfg = _config(args, iou_match_threshold=args.iou_threshold, sort_max_age=args.max_age,
                  sort_min_hits=args.min_hits)
    camera = args.camera or ingest.camera_from_path(args.detections)
    frames = ingest.group_by_frame(ingest.read_detections(args.detections))
    flow = ingest.read_displacements(args.flow) if args.flow else None
    if args.method == "overlap":
        tracks = track_overlap(frames, cfg.iou_match_threshold, flow, camera=camera)
    else:
        tracks = track_sort(frames, cfg, flow, camera=camera)
    ingest.write_tracks(tracks, args.out)
    span = tracks.frame_span()
    span_txt = f"{span[0]}-{span[1]}" if span else "none"
    print(f"camera={camera} method={args.method} tracks={len(tracks)} boxes={tracks.num_boxes} frames={span_txt}")
    return 0


def cmd_postprocess(args) -> int:
    cfg = _config(args, parked_dispersion_threshold=args.parked_threshold,
                  min_box_width=args.min_width, min_box_height=args.min_height)
    tracks = ingest.read_tracks(args.tracks, args.camera)
    out, stats = postprocess(tracks, cfg.parked_dispersion_threshold, cfg.min_box_width, cfg.min_box_height)
    ingest.write_tracks(out, args.out)
    if args.stats:
        with open(args.stats, "w") as fh:
            fh.write("track_id,dispersion\n")
            fh.writelines(f"{s.track_id},{s.dispersion!r}\n" for s in stats)
    if args.figures:
        plots.plot_dispersion(stats, cfg.parked_dispersion_threshold,
                              os.path.join(args.figures, f"dispersion_{tracks.camera}.png"))
    print(f"camera={tracks.camera} tracks_in={len(tracks)} tracks_out={len(out)} "
          f"boxes_in={tracks.num_boxes} boxes_out={out.num_boxes}")
    return 0


def cmd_reid(args) -> int:
    cfg = _config(args, reid_match_threshold=args.threshold, reid_P=args.P, reid_N=args.N)
    cams = [ingest.read_tracks(path, cam) for cam, path in map(_camera_path, args.tracks)]
    table = ingest.parse_embeddings(args.embeddings)
    mapping = reid_cascade(cams, table, cfg)
    ingest.write_id_mapping(mapping, args.out)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        for cam in cams:
            ingest.write_tracks(relabel(cam, mapping), os.path.join(args.out_dir, f"{cam.camera}.txt"))
    print(f"cameras={len(cams)} tracks={len(mapping)} global_ids={len(set(mapping.values()))}")
    return 0


def _pairs(args) -> list[tuple[str, str, str]]:
    if len(args.gt) != len(args.pred):
        raise SystemExit(_usage_error("--gt and --pred need the same number of files"))
    out = []
    for g, p in zip(args.gt, args.pred):
        cam, gpath = _camera_path(g)
        _, ppath = _camera_path(p)
        if any(cam == c for c, _, _ in out):
            raise SystemExit(_usage_error(f"camera {cam} given twice; name pairs as camera=path"))
        out.append((cam, gpath, ppath))
    return out


def _usage_error(msg: str) -> int:
    print(f"citytrack: error: {msg}", file=sys.stderr)
    return 2


def _emit(rows, args) -> None:
    sys.stdout.write(report.format_key_values(rows))
    csv_text = report.format_csv(rows)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write("\n" + csv_text)


def cmd_eval_detection(args) -> int:
    cfg = _config(args, eval_iou_threshold=args.iou_threshold)
    thr = cfg.eval_iou_threshold
    results, curves, aps = {}, {}, {}
    for cam, gpath, ppath in _pairs(args):
        gt = ingest.read_detections(gpath)
        pred = ingest.read_detections(ppath)
        precision, recall, tp, fp, fn = detection_pr(gt, pred, thr)
        ap = average_precision(pred, gt, thr)
        results[cam] = EvalReport(0.0, 0.0, 0.0, precision, recall, ap, 0, 0, 0, tp, fp, fn)
        curves[cam] = precision_recall_curve(pred, gt, thr)
        aps[cam] = ap
    rows = report.report_rows(results, report.DET_FIELDS)
    _emit(rows, args)
    if args.figures:
        plots.plot_pr_curves(curves, os.path.join(args.figures, "pr_curve.png"), aps)
    return 0


def _check_span(cam: str, gt: CameraTrackSet, pred: CameraTrackSet) -> None:
    gs, ps = gt.frame_span(), pred.frame_span()
    if gs and ps and gs != ps:
        log.warning("%s: frame range mismatch, gt %d-%d vs pred %d-%d", cam, *gs, *ps)


def cmd_eval_tracking(args) -> int:
    cfg = _config(args, eval_iou_threshold=args.iou_threshold)
    results = {}
    for cam, gpath, ppath in _pairs(args):
        gt = ingest.read_tracks(gpath, cam)
        pred = ingest.read_tracks(ppath, cam)
        _check_span(cam, gt, pred)
        results[cam] = id_metrics(gt, pred, cfg.eval_iou_threshold)
    rows = report.report_rows(results, report.ID_FIELDS)
    _emit(rows, args)
    if args.figures:
        plots.plot_id_scores(rows, os.path.join(args.figures, "id_scores.png"))
    return 0


def cmd_synth(args) -> int:
    spec = SceneSpec(num_cameras=args.cameras, num_identities=args.identities,
                     frames_per_camera=args.frames, dropout_rate=args.dropout,
                     position_noise_sigma=args.noise, embedding_dim=args.dim,
                     cluster_noise_sigma=args.cluster_noise, seed=args.seed)
    truth = generate_scene(spec)
    for sub in ("gt", "det"):
        os.makedirs(os.path.join(args.out, sub), exist_ok=True)
    for cam, tracks in truth.cameras.items():
        ingest.write_tracks(tracks, os.path.join(args.out, "gt", f"{cam}.txt"))
        dets = [d for frame_dets in truth.detections[cam].values() for d in frame_dets]
        ingest.write_detections(dets, os.path.join(args.out, "det", f"{cam}.txt"))
    ingest.write_embeddings(truth.embeddings, os.path.join(args.out, "embeddings.csv"))
    ingest.write_id_mapping(truth.oracle, os.path.join(args.out, "mapping.csv"))
    print(f"cameras={len(truth.cameras)} tracks={len(truth.oracle)} embeddings={len(truth.embeddings)} out={args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="citytrack", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("track", help="single-camera tracking of a detection file")
    t.add_argument("--detections", required=True)
    t.add_argument("--method", choices=["overlap", "sort"], default="sort")
    t.add_argument("--flow", help="displacement CSV frame,det_index,dx,dy")
    t.add_argument("--out", required=True)
    t.add_argument("--camera")
    t.add_argument("--iou-threshold", type=float)
    t.add_argument("--max-age", type=int)
    t.add_argument("--min-hits", type=int)
    t.set_defaults(func=cmd_track)

    pp = sub.add_parser("postprocess", help="remove parked cars and small boxes")
    pp.add_argument("--tracks", required=True)
    pp.add_argument("--out", required=True)
    pp.add_argument("--camera")
    pp.add_argument("--parked-threshold", type=float)
    pp.add_argument("--min-width", type=float)
    pp.add_argument("--min-height", type=float)
    pp.add_argument("--stats", help="write per-track dispersion CSV here")
    pp.add_argument("--figures", help="directory for figures")
    pp.set_defaults(func=cmd_postprocess)

    r = sub.add_parser("reid", help="cross-camera re-identification cascade")
    r.add_argument("--tracks", nargs="+", required=True, help="track files, optionally as camera=path")
    r.add_argument("--embeddings", required=True)
    r.add_argument("--out", required=True, help="id mapping CSV")
    r.add_argument("--out-dir", help="write per-camera track files with global ids here")
    r.add_argument("--threshold", type=float)
    r.add_argument("--P", type=int)
    r.add_argument("--N", type=int)
    r.set_defaults(func=cmd_reid)

    for name, func, helptext in (("eval-detection", cmd_eval_detection, "AP, precision and recall"),
                                 ("eval-tracking", cmd_eval_tracking, "IDF1 / IDP / IDR per camera")):
        e = sub.add_parser(name, help=helptext)
        e.add_argument("--gt", nargs="+", required=True)
        e.add_argument("--pred", nargs="+", required=True)
        e.add_argument("--iou-threshold", type=float)
        e.add_argument("--csv", help="write the CSV table here instead of stdout")
        e.add_argument("--figures", help="directory for figures")
        e.set_defaults(func=func)

    s = sub.add_parser("synth", help="generate a seeded synthetic multi-camera scene")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cameras", type=int, default=6)
    s.add_argument("--identities", type=int, default=24)
    s.add_argument("--frames", type=int, default=200)
    s.add_argument("--dropout", type=float, default=0.0)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--dim", type=int, default=32)
    s.add_argument("--cluster-noise", type=float, default=0.05)
    s.set_defaults(func=cmd_synth)

    for sp in (t, pp, r, *[sub.choices[n] for n in ("eval-detection", "eval-tracking")]):
        sp.add_argument("--config", help="key = value config file")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"citytrack: error: no such file: {e.filename}", file=sys.stderr)
    except IsADirectoryError as e:
        print(f"citytrack: error: is a directory: {e.filename}", file=sys.stderr)
    except (IngestError, MissingEmbeddings, DegenerateEmbedding, ValueError) as e:
        print(f"citytrack: error: {e}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
