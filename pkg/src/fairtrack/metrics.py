"""Tracking and verification metrics.

Frame data is exchanged as ``{frame: [(id, BBox), ...]}`` for tracking
metrics, ``{frame: [BBox, ...]}`` and ``{frame: [(score, BBox), ...]}``
for detection AP.  Correspondence uses IoU >= 0.5 unless stated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .assignment import hungarian
from .geometry import BBox, iou

Frames = dict[int, list[tuple[int, BBox]]]


@dataclass(frozen=True)
class MetricsReport:
    mota: float
    fp: int
    fn: int
    id_switches: int
    mt_ratio: float
    ml_ratio: float
    num_gt: int
    idf1: float | None = None
    ap: float | None = None
    tpr_at_far: float | None = None


def _frame_dict(frame: int, pairs: list[tuple[int, BBox]], kind: str) -> dict[int, BBox]:
    out = {}
    for oid, box in pairs:
        if oid in out:
            raise ValueError(f"duplicate {kind} id {oid} in frame {frame}")
        out[oid] = box
    return out


def clear_mot(gt: Frames, pred: Frames, iou_thresh: float = 0.5) -> MetricsReport:
    """MOTA and its event counts, with MT/ML trajectory coverage.

    Correspondences persist frame to frame while their IoU stays above
    the threshold; everything left is rematched by maximum IoU.  An
    identity switch is counted when a ground-truth object's matched
    prediction id differs from the one it last had, gaps included.
    """
    fp = fn = idsw = 0
    total_gt = 0
    corr: dict[int, int] = {}        # previous-frame gt id -> pred id
    last_match: dict[int, int] = {}  # whole-sequence memory for switches
    gt_frames_seen: dict[int, int] = {}
    gt_frames_matched: dict[int, int] = {}

    for frame in sorted(set(gt) | set(pred)):
        g = _frame_dict(frame, gt.get(frame, []), "gt")
        p = _frame_dict(frame, pred.get(frame, []), "pred")
        total_gt += len(g)
        for gid in g:
            gt_frames_seen[gid] = gt_frames_seen.get(gid, 0) + 1

        kept: dict[int, int] = {}
        for gid, pid in corr.items():
            if gid in g and pid in p and iou(g[gid], p[pid]) >= iou_thresh:
                kept[gid] = pid

        free_g = [gid for gid in g if gid not in kept]
        free_p = [pid for pid in p if pid not in kept.values()]
        if free_g and free_p:
            cost = np.array([[1.0 - iou(g[a], p[b]) for b in free_p]
                             for a in free_g])
            pairs, _, _ = hungarian(cost, max_cost=1.0 - iou_thresh)
            for i, j in pairs:
                kept[free_g[i]] = free_p[j]

        for gid, pid in kept.items():
            gt_frames_matched[gid] = gt_frames_matched.get(gid, 0) + 1
            if gid in last_match and last_match[gid] != pid:
                idsw += 1
            last_match[gid] = pid

        fn += len(g) - len(kept)
        fp += len(p) - len(kept)
        corr = kept

    mota = 1.0 - (fp + fn + idsw) / total_gt if total_gt > 0 else 1.0
    n_traj = len(gt_frames_seen)
    mt = ml = 0
    for gid, seen in gt_frames_seen.items():
        cov = gt_frames_matched.get(gid, 0) / seen
        if cov >= 0.8:
            mt += 1
        elif cov <= 0.2:
            ml += 1
    return MetricsReport(
        mota=mota, fp=fp, fn=fn, id_switches=idsw,
        mt_ratio=mt / n_traj if n_traj else 0.0,
        ml_ratio=ml / n_traj if n_traj else 0.0,
        num_gt=total_gt,
    )


def idf1(gt: Frames, pred: Frames, iou_thresh: float = 0.5) -> float:
    """Identity F1: global trajectory-to-trajectory matching.

    Each (gt trajectory, pred trajectory) pair scores the number of
    frames where their boxes overlap above threshold; a single bipartite
    matching maximizes the total, and IDF1 = 2*IDTP / (gt boxes + pred boxes).
    """
    gt_ids: list[int] = []
    pred_ids: list[int] = []
    counts: dict[tuple[int, int], int] = {}
    total_gt = total_pred = 0

    for frame in sorted(set(gt) | set(pred)):
        g = _frame_dict(frame, gt.get(frame, []), "gt")
        p = _frame_dict(frame, pred.get(frame, []), "pred")
        total_gt += len(g)
        total_pred += len(p)
        for gid, gb in g.items():
            if gid not in gt_ids:
                gt_ids.append(gid)
            for pid, pb in p.items():
                if pid not in pred_ids:
                    pred_ids.append(pid)
                if iou(gb, pb) >= iou_thresh:
                    counts[(gid, pid)] = counts.get((gid, pid), 0) + 1

    if total_gt + total_pred == 0:
        return 1.0
    if not counts:
        return 0.0
    cost = np.zeros((len(gt_ids), len(pred_ids)))
    for (gid, pid), c in counts.items():
        cost[gt_ids.index(gid), pred_ids.index(pid)] = -c
    pairs, _, _ = hungarian(cost)
    idtp = sum(-cost[i, j] for i, j in pairs)
    return 2.0 * idtp / (total_gt + total_pred)


def detection_ap(gt_boxes: dict[int, list[BBox]],
                 preds: dict[int, list[tuple[float, BBox]]],
                 iou_thresh: float = 0.5) -> float:
    """All-point interpolated average precision at one IoU threshold.

    Predictions are ranked globally by score; each claims at most one
    unclaimed ground-truth box (best IoU above threshold) in its frame.
    """
    total_gt = sum(len(v) for v in gt_boxes.values())
    flat = [(score, frame, i, box)
            for frame in sorted(preds)
            for i, (score, box) in enumerate(preds[frame])]
    if not flat or total_gt == 0:
        return 0.0
    flat.sort(key=lambda r: (-r[0], r[1], r[2]))

    claimed: dict[int, set] = {f: set() for f in gt_boxes}
    tp = np.zeros(len(flat))
    for k, (_, frame, _, box) in enumerate(flat):
        best, best_i = iou_thresh, -1
        for gi, gb in enumerate(gt_boxes.get(frame, [])):
            if gi in claimed.get(frame, set()):
                continue
            v = iou(box, gb)
            if v >= best:
                best, best_i = v, gi
        if best_i >= 0:
            claimed[frame].add(best_i)
            tp[k] = 1.0

    tp_cum = np.cumsum(tp)
    recall = tp_cum / total_gt
    precision = tp_cum / np.arange(1, len(flat) + 1)
    # precision envelope, then area under the stepwise curve
    env = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_r = 0.0
    for r, pr in zip(recall, env):
        ap += (r - prev_r) * pr
        prev_r = r
    return float(ap)


def tpr_at_far(genuine: list[float], impostor: list[float], far: float = 0.1) -> float:
    """Verification true-positive rate at a fixed false-accept rate.

    The decision threshold is the lowest value admitting at most
    floor(far * len(impostor)) impostor scores; TPR is the fraction of
    genuine scores strictly above the next impostor down.
    """
    if not genuine or not impostor:
        raise ValueError("genuine and impostor score lists must be nonempty")
    if not 0.0 < far < 1.0:
        raise ValueError(f"far must be in (0, 1), got {far}")
    imp = sorted(impostor, reverse=True)
    k = math.floor(far * len(imp))
    if k >= len(imp):
        return 1.0
    cutoff = imp[k]  # (k+1)-th largest impostor must stay below threshold
    return sum(1 for s in genuine if s > cutoff) / len(genuine)


def evaluate_tracking(gt: Frames, pred: Frames, iou_thresh: float = 0.5) -> MetricsReport:
    """CLEAR counts plus IDF1 in one report."""
    report = clear_mot(gt, pred, iou_thresh)
    return replace(report, idf1=idf1(gt, pred, iou_thresh))
