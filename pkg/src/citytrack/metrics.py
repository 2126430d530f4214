"""Detection (AP, precision/recall) and identity (IDF1 family) evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import BoundingBox, CameraTrackSet, Detection, boxes_to_array, overlap_pairs


@dataclass(frozen=True)
class EvalReport:
    idf1: float
    idp: float
    idr: float
    precision: float
    recall: float
    ap: float
    idtp: int
    idfp: int
    idfn: int
    tp: int
    fp: int
    fn: int

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _greedy(pi: np.ndarray, gi: np.ndarray, ious: np.ndarray, rank: np.ndarray
            ) -> tuple[np.ndarray, np.ndarray]:
    """Greedy matching on candidate pairs already gated by the IoU threshold.

    ``rank[p]`` is the visiting position of prediction p. Each prediction
    takes the unmatched GT of highest IoU (ties: lower GT index).
    Returns matched (gt, pred) index arrays in visiting order.
    """
    if not len(pi):
        return gi, pi
    order = np.lexsort((gi, -ious, rank[pi]))
    pi, gi = pi[order], gi[order]
    first = np.flatnonzero(np.r_[True, pi[1:] != pi[:-1]])
    if len(np.unique(gi[first])) == len(first):
        # every first choice is distinct, so none is ever taken earlier
        return gi[first], pi[first]
    taken, done, out = set(), set(), []
    for g, p in zip(gi.tolist(), pi.tolist()):
        if p not in done and g not in taken:
            taken.add(g)
            done.add(p)
            out.append((g, p))
    arr = np.array(out, dtype=np.intp).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def _visit_rank(conf: np.ndarray) -> np.ndarray:
    rank = np.empty(len(conf), dtype=np.intp)
    rank[np.argsort(-conf, kind="stable")] = np.arange(len(conf))
    return rank


def match_frame(gt: Sequence[BoundingBox], pred: Sequence[tuple[BoundingBox, float]],
                iou_threshold: float = 0.5) -> list[tuple[int, int]]:
    """Greedy one-to-one matching inside one frame.

    Predictions are visited by descending confidence (ties keep input
    order); each takes the still-unmatched ground-truth box with the highest
    IoU, if that IoU reaches ``iou_threshold``.
    """
    if not gt or not pred:
        return []
    pi, gi, ious = overlap_pairs(boxes_to_array([b for b, _ in pred]), boxes_to_array(list(gt)))
    keep = ious >= iou_threshold
    rank = _visit_rank(np.array([c for _, c in pred], dtype=float))
    g, p = _greedy(pi[keep], gi[keep], ious[keep], rank)
    return list(zip(g.tolist(), p.tolist()))


def _frame_groups(frames: np.ndarray) -> dict[int, np.ndarray]:
    """frame -> indices (ascending) of the rows in that frame."""
    order = np.argsort(frames, kind="stable")
    uniq, starts = np.unique(frames[order], return_index=True)
    return dict(zip(uniq.tolist(), np.split(order, starts[1:])))


def _hits(g_frames, g_boxes, p_frames, p_boxes, p_conf, iou_threshold) -> np.ndarray:
    """Per prediction: whether the per-frame greedy matching pairs it with a GT box."""
    is_tp = np.zeros(len(p_frames), dtype=bool)
    g_groups = _frame_groups(g_frames)
    for frame, pidx in _frame_groups(p_frames).items():
        gidx = g_groups.get(frame)
        if gidx is None:
            continue
        pi, gi, ious = overlap_pairs(p_boxes[pidx], g_boxes[gidx])
        keep = ious >= iou_threshold
        _, p = _greedy(pi[keep], gi[keep], ious[keep], _visit_rank(p_conf[pidx]))
        is_tp[pidx[p]] = True
    return is_tp


def _det_arrays(items) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    items = list(items)
    frames = np.array([x.frame for x in items], dtype=np.int64)
    boxes = boxes_to_array([x.bbox for x in items])
    conf = np.array([getattr(x, "confidence", 1.0) for x in items], dtype=float)
    return frames, boxes, conf


def _score_predictions(gt, preds, iou_threshold):
    """Per prediction (in input order): matched flag. Also the GT count."""
    gf, gb, _ = _det_arrays(gt)
    pf, pb, pc = _det_arrays(preds)
    return _hits(gf, gb, pf, pb, pc, iou_threshold), len(gf), pc


def _pr_from_hits(is_tp: np.ndarray, conf: np.ndarray, n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    ranked = is_tp[np.argsort(-conf, kind="stable")]
    tp = np.cumsum(ranked)
    fp = np.cumsum(~ranked)
    recall = tp / n_gt if n_gt else np.zeros(len(ranked))
    precision = tp / np.maximum(tp + fp, 1)
    return recall, precision


def _ap_from_hits(is_tp: np.ndarray, conf: np.ndarray, n_gt: int) -> float:
    if n_gt == 0:
        return 1.0 if not len(is_tp) else 0.0
    if not len(is_tp):
        return 0.0
    recall, precision = _pr_from_hits(is_tp, conf, n_gt)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _pr_counts(is_tp: np.ndarray, n_gt: int) -> tuple[float, float, int, int, int]:
    tp = int(is_tp.sum())
    fp = len(is_tp) - tp
    fn = n_gt - tp
    if n_gt == 0 and not len(is_tp):
        return 1.0, 1.0, 0, 0, 0
    return _ratio(tp, tp + fp), _ratio(tp, tp + fn), tp, fp, fn


def precision_recall_curve(preds: Sequence[Detection], gt: Sequence, iou_threshold: float = 0.5
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Recall and precision after each prediction ranked by confidence."""
    is_tp, n_gt, conf = _score_predictions(gt, preds, iou_threshold)
    return _pr_from_hits(is_tp, conf, n_gt)


def average_precision(preds: Sequence[Detection], gt: Sequence, iou_threshold: float = 0.5) -> float:
    """All-point interpolated AP.

    ``gt`` items need ``frame`` and ``bbox``; ``preds`` also ``confidence``
    (missing means 1.0). No GT and no predictions gives 1, no GT with
    predictions gives 0.
    """
    is_tp, n_gt, conf = _score_predictions(gt, preds, iou_threshold)
    return _ap_from_hits(is_tp, conf, n_gt)


def detection_pr(gt: Sequence, pred: Sequence, iou_threshold: float = 0.5
                 ) -> tuple[float, float, int, int, int]:
    """(precision, recall, tp, fp, fn) from per-frame greedy matching."""
    is_tp, n_gt, _ = _score_predictions(gt, pred, iou_threshold)
    return _pr_counts(is_tp, n_gt)


def _track_arrays(tracks: CameraTrackSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Frames, track indices and (n, 4) boxes of every box, ordered by geometry
    (frame, then left/top/width/height) so results never depend on labels."""
    frames = np.array([f for t in tracks for f, _ in t.boxes], dtype=np.int64)
    owner = np.repeat(np.arange(len(tracks)), [len(t) for t in tracks]).astype(np.intp)
    boxes = np.array([b.as_tuple() for t in tracks for _, b in t.boxes], dtype=float).reshape(-1, 4)
    order = np.lexsort((boxes[:, 3], boxes[:, 2], boxes[:, 1], boxes[:, 0], frames))
    return frames[order], owner[order], boxes[order]


def _correspondences(g, p, n_gt_tracks, n_pred_tracks, iou_threshold) -> np.ndarray:
    (gf, gown, gb), (pf, pown, pb) = g, p
    counts = np.zeros((n_gt_tracks, n_pred_tracks), dtype=np.int64)
    if not len(gf) or not len(pf):
        return counts
    p_groups = _frame_groups(pf)
    rows, cols = [], []
    for frame, gidx in _frame_groups(gf).items():
        pidx = p_groups.get(frame)
        if pidx is None:
            continue
        gi, pi, ious = overlap_pairs(gb[gidx], pb[pidx])
        hit = ious >= iou_threshold
        rows.append(gown[gidx[gi[hit]]])
        cols.append(pown[pidx[pi[hit]]])
    if rows:
        flat = np.concatenate(rows) * n_pred_tracks + np.concatenate(cols)
        counts += np.bincount(flat, minlength=counts.size).reshape(counts.shape)
    return counts


def correspondence_counts(gt: CameraTrackSet, pred: CameraTrackSet, iou_threshold: float = 0.5) -> np.ndarray:
    """(G, P) matrix of frames in which GT track g and predicted track p overlap
    with IoU >= ``iou_threshold``."""
    return _correspondences(_track_arrays(gt), _track_arrays(pred), len(gt), len(pred), iou_threshold)


def _assign(counts: np.ndarray) -> int:
    """Most corresponding frames over one-to-one truth/hypothesis assignments.

    Minimising the usual cost (non-corresponding frames of matched pairs
    plus full lengths of unmatched trajectories) is the same as maximising
    the total corresponding frames, so the solve runs on the count matrix.
    """
    if not counts.size:
        return 0
    r, c = linear_sum_assignment(counts, maximize=True)
    return int(counts[r, c].sum())


def id_counts(gt: CameraTrackSet, pred: CameraTrackSet, iou_threshold: float = 0.5) -> tuple[int, int, int]:
    """(IDTP, IDFP, IDFN) under the optimal one-to-one truth/hypothesis assignment."""
    idtp = _assign(correspondence_counts(gt, pred, iou_threshold))
    return idtp, pred.num_boxes - idtp, gt.num_boxes - idtp


def id_metrics(gt: CameraTrackSet, pred: CameraTrackSet, iou_threshold: float = 0.5) -> EvalReport:
    """IDF1/IDP/IDR plus detection precision, recall and AP for one camera.

    Track files carry no scores, so every predicted box counts with
    confidence 1 and ranks by geometry. Both sides empty gives 1 everywhere.
    """
    g, p = _track_arrays(gt), _track_arrays(pred)
    idtp = _assign(_correspondences(g, p, len(gt), len(pred), iou_threshold))
    idfp, idfn = len(p[0]) - idtp, len(g[0]) - idtp
    conf = np.ones(len(p[0]))
    is_tp = _hits(g[0], g[2], p[0], p[2], conf, iou_threshold)
    precision, recall, tp, fp, fn = _pr_counts(is_tp, len(g[0]))
    ap = _ap_from_hits(is_tp, conf, len(g[0]))
    if not len(g[0]) and not len(p[0]):
        idf1 = idp = idr = 1.0
    else:
        idf1 = _ratio(2 * idtp, 2 * idtp + idfp + idfn)
        idp = _ratio(idtp, idtp + idfp)
        idr = _ratio(idtp, idtp + idfn)
    return EvalReport(idf1, idp, idr, precision, recall, ap, idtp, idfp, idfn, tp, fp, fn)
