"""
Segmentation metrics: frame accuracy, segmental F1@tau, edit score, mAP@mid.

Unless ``include_background`` is set, segments of class 0 (background) are
dropped before the segmental metrics; frame accuracy always counts every
frame.  All metrics are percentages in [0, 100].
"""

from __future__ import annotations

from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractError

BACKGROUND = 0
F1_THRESHOLDS = (0.10, 0.25, 0.50)
REPORT_COLUMNS = ("accuracy", "f1@10", "f1@25", "f1@50", "edit", "map_mid")


class Segment(NamedTuple):
    cls: int
    start: int
    end: int  # inclusive

    @property
    def length(self):
        return self.end - self.start + 1


class Detection(NamedTuple):
    cls: int
    start: int
    end: int
    score: float


def extract_segments(labels):
    """Maximal runs of equal labels as (class, start, end-inclusive)."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ContractError("extract_segments needs a non-empty 1-D label sequence")
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change - 1, [labels.size - 1]])
    return [Segment(int(labels[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def expand_segments(segments):
    out = np.empty(segments[-1].end + 1, dtype=np.int64)
    for seg in segments:
        out[seg.start:seg.end + 1] = seg.cls
    return out


def _pair(pred, gt):
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ContractError(f"prediction length {pred.shape} differs from ground truth {gt.shape}")
    return pred, gt


def _segments(labels, include_background):
    segs = extract_segments(labels)
    if include_background:
        return segs
    return [s for s in segs if s.cls != BACKGROUND]


def frame_accuracy(pred, gt):
    pred, gt = _pair(pred, gt)
    if gt.size == 0:
        raise ContractError("frame_accuracy of an empty sequence")
    return 100.0 * float(np.mean(pred == gt))


def iou(a, b):
    inter = min(a.end, b.end) - max(a.start, b.start) + 1
    if inter <= 0:
        return 0.0
    union = max(a.end, b.end) - min(a.start, b.start) + 1
    return inter / union


def _max_matching(edges):
    """Size of a maximum matching in a boolean bipartite adjacency matrix."""
    if edges.size == 0 or not edges.any():
        return 0
    rows, cols = linear_sum_assignment(-edges.astype(np.float64))
    return int(edges[rows, cols].sum())


def segment_true_positives(pred_segs, gt_segs, tau):
    """Largest number of same-class (pred, gt) pairs with IoU >= tau, each used once."""
    tp = 0
    for c in {s.cls for s in pred_segs} & {s.cls for s in gt_segs}:
        P = [s for s in pred_segs if s.cls == c]
        G = [s for s in gt_segs if s.cls == c]
        edges = np.array([[iou(p, g) >= tau for g in G] for p in P], dtype=bool)
        tp += _max_matching(edges)
    return tp


def f1_from_counts(tp, n_pred, n_gt):
    if n_pred == 0 and n_gt == 0:
        return 100.0
    if tp == 0:
        return 0.0
    precision = tp / n_pred
    recall = tp / n_gt
    return 100.0 * 2 * precision * recall / (precision + recall)


def f1_at_k(pred, gt, tau, include_background=False):
    """Segmental F1 at IoU threshold ``tau`` (e.g. 0.1 for F1@10)."""
    pred, gt = _pair(pred, gt)
    ps = _segments(pred, include_background)
    gs = _segments(gt, include_background)
    return f1_from_counts(segment_true_positives(ps, gs, tau), len(ps), len(gs))


def levenshtein(a, b):
    a, b = list(a), list(b)
    prev = np.arange(len(b) + 1)
    for i, x in enumerate(a, start=1):
        cur = np.empty_like(prev)
        cur[0] = i
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return int(prev[-1])


def edit_score(pred, gt, include_background=False):
    """100 * (1 - Levenshtein / max length) over segment label sequences."""
    pred, gt = _pair(pred, gt)
    p = [s.cls for s in _segments(pred, include_background)]
    g = [s.cls for s in _segments(gt, include_background)]
    longest = max(len(p), len(g))
    if longest == 0:
        return 100.0
    return max(0.0, 100.0 * (1.0 - levenshtein(p, g) / longest))


def midpoint(seg):
    return (seg.start + seg.end) // 2


def average_precision(hits, n_gt):
    """All-point interpolated AP of a ranked list of hit flags.

    Computed in exact rational arithmetic so the value does not depend on
    summation order.
    """
    if n_gt == 0:
        raise ContractError("average precision needs at least one ground-truth item")
    if len(hits) == 0:
        return Fraction(0)
    tp = 0
    precision = []
    recall = []
    for i, hit in enumerate(hits, start=1):
        tp += bool(hit)
        precision.append(Fraction(tp, i))
        recall.append(Fraction(tp, n_gt))
    # precision envelope: best precision at this rank or any later one
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    ap = Fraction(0)
    prev = Fraction(0)
    for r, p in zip(recall, precision):
        ap += (r - prev) * p
        prev = r
    return ap


def map_mid(detections, gt, include_background=False):
    """Mean AP over ground-truth classes, midpoint-hit criterion.

    ``gt`` is a per-frame label sequence or a list of Segments.
    """
    if len(gt) and not isinstance(gt[0], Segment):
        gt = extract_segments(gt)
    gt = [s for s in gt if include_background or s.cls != BACKGROUND]
    dets = [d for d in detections if include_background or d.cls != BACKGROUND]
    classes = sorted({s.cls for s in gt})
    if not classes:
        return 100.0 if not dets else 0.0
    aps = []
    for c in classes:
        G = [s for s in gt if s.cls == c]
        D = sorted((d for d in dets if d.cls == c), key=lambda d: (-d.score, d.start))
        used = [False] * len(G)
        hits = []
        for d in D:
            mid = midpoint(d)
            hit = False
            for gi, g in enumerate(G):
                if g.start <= mid <= g.end:
                    if not used[gi]:
                        used[gi] = True
                        hit = True
                    break
            hits.append(hit)
        aps.append(average_precision(hits, len(G)))
    return float(100 * sum(aps) / len(aps))


def evaluate(pred, gt, detections=None, include_background=False):
    """Every report column for one video (``map_mid`` needs ``detections``)."""
    row = {
        "accuracy": frame_accuracy(pred, gt),
        "edit": edit_score(pred, gt, include_background),
    }
    for tau in F1_THRESHOLDS:
        row[f"f1@{int(round(tau * 100))}"] = f1_at_k(pred, gt, tau, include_background)
    row["map_mid"] = float("nan") if detections is None else map_mid(detections, gt, include_background)
    return {c: row[c] for c in REPORT_COLUMNS}


def report_csv(rows):
    """``video,accuracy,...`` lines for a {video: metrics} mapping plus a mean row."""
    lines = ["video," + ",".join(REPORT_COLUMNS)]
    for vid, row in rows.items():
        lines.append(vid + "," + ",".join(f"{row[c]:.4f}" for c in REPORT_COLUMNS))
    mean = mean_row(rows)
    lines.append("mean," + ",".join(f"{mean[c]:.4f}" for c in REPORT_COLUMNS))
    return "\n".join(lines) + "\n"


def mean_row(rows):
    return {c: float(np.mean([r[c] for r in rows.values()])) for c in REPORT_COLUMNS}


def report_table(rows):
    head = f"{'video':<12}" + "".join(f"{c:>10}" for c in REPORT_COLUMNS)
    out = [head, "-" * len(head)]
    for vid, row in rows.items():
        out.append(f"{vid:<12}" + "".join(f"{row[c]:>10.1f}" for c in REPORT_COLUMNS))
    out.append("-" * len(head))
    mean = mean_row(rows)
    out.append(f"{'mean':<12}" + "".join(f"{mean[c]:>10.1f}" for c in REPORT_COLUMNS))
    return "\n".join(out)
