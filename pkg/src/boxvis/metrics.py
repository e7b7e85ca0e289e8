"""Scoring predicted visibilities against the exact ones.

Predictions are matched to ground truth greedily by IoU within each class,
and only matched pairs contribute to the absolute error. Unmatched boxes
on either side are ignored.
"""
from dataclasses import dataclass
from enum import Enum
import math
from typing import NamedTuple

import numpy as np

from .geometry import ClassLabel, box_corners, pack_boxes

AE_FORMAT = "boxvis-ae/1"
AE_COLUMNS = ("class", "count", "mean_ae")
OVERALL = "all"


class IouKind(str, Enum):
    BEV = "bev"
    FULL_3D = "3d"


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.25
    iou_kind: IouKind = IouKind.BEV

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        object.__setattr__(self, "iou_kind", IouKind(self.iou_kind))


# ----------------------------------------------------------------------------
# 2D convex polygons

def shoelace(poly):
    """Signed area of a 2D polygon, positive when counterclockwise."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_convex(subject, clip):
    """Intersection of two convex polygons given counterclockwise, shape (k, 2).

    Sutherland-Hodgman: the subject is cut by each clip edge in turn,
    keeping the part to its left.
    """
    out = [tuple(p) for p in subject]
    m = len(clip)
    for k in range(m):
        if not out:
            break
        ax, ay = clip[k]
        bx, by = clip[(k + 1) % m]
        ex, ey = bx - ax, by - ay
        src, out = out, []
        side = [ex * (py - ay) - ey * (px - ax) for px, py in src]
        for i in range(len(src)):
            j = i - 1
            si, sj = side[i], side[j]
            if si >= 0.0:
                if sj < 0.0:
                    out.append(_cut(src[j], src[i], sj, si))
                out.append(src[i])
            elif sj >= 0.0:
                out.append(_cut(src[j], src[i], sj, si))
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def _cut(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def footprints(boxes):
    """Counterclockwise ground rectangles, shape (n, 4, 2)."""
    corners = box_corners(pack_boxes(boxes))
    # bottom face corners 0,1,3,2 go around the rectangle counterclockwise
    return corners[:, [0, 1, 3, 2], :2]


def _iou_from_footprints(fa, fb, a, b, kind):
    inter = shoelace(clip_convex(fa, fb))
    if inter <= 0.0:
        return 0.0
    la, wa, ha = a.dims
    lb, wb, hb = b.dims
    if kind is IouKind.BEV:
        union = la * wa + lb * wb - inter
    else:
        za, zb = a.center[2], b.center[2]
        dz = min(za + ha / 2, zb + hb / 2) - max(za - ha / 2, zb - hb / 2)
        if dz <= 0.0:
            return 0.0
        inter *= dz
        union = la * wa * ha + lb * wb * hb - inter
    return min(max(inter / union, 0.0), 1.0)


def box_iou(a, b, kind=IouKind.BEV):
    """Bird's-eye or full 3D IoU of two yaw-rotated boxes."""
    fa, fb = footprints([a, b])
    return _iou_from_footprints(fa, fb, a, b, IouKind(kind))


# ----------------------------------------------------------------------------
# matching and absolute error

class EvalPair(NamedTuple):
    pred_box_id: int
    gt_box_id: int
    iou: float
    v_pred: float
    v_algo: float
    class_label: ClassLabel

    @property
    def ae(self):
        return absolute_error(self.v_pred, self.v_algo)


def absolute_error(v_pred, v_algo):
    """``|v_pred - v_algo|`` for visibilities in [0, 1]."""
    for v in (v_pred, v_algo):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"visibility {v} outside [0, 1]")
    return abs(v_pred - v_algo)


def match_boxes(pred, gt, cfg=MatchConfig()):
    """Greedy one-to-one matching within each class.

    Candidate pairs at or above the threshold are taken in order of
    decreasing IoU (ties by pred id, then gt id) while both boxes are free.
    Returns (pred index, gt index, iou) triples in that order.
    """
    if not pred or not gt:
        return []
    fp, fg = footprints(pred), footprints(gt)
    cp = np.array([b.center[:2] for b in pred])
    cg = np.array([b.center[:2] for b in gt])
    rp = np.hypot(*np.array([b.dims[:2] for b in pred]).T) / 2
    rg = np.hypot(*np.array([b.dims[:2] for b in gt]).T) / 2
    # footprints can only overlap if their circumscribed circles do
    near = np.linalg.norm(cp[:, None] - cg[None], axis=2) < rp[:, None] + rg[None]
    cands = []
    for i, j in zip(*np.nonzero(near)):
        a, b = pred[i], gt[j]
        if a.class_label != b.class_label:
            continue
        iou = _iou_from_footprints(fp[i], fg[j], a, b, cfg.iou_kind)
        if iou >= cfg.iou_threshold:
            cands.append((-iou, a.id, b.id, int(i), int(j)))
    cands.sort()
    used_p, used_g, out = set(), set(), []
    for neg_iou, _, _, i, j in cands:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        out.append((i, j, -neg_iou))
    return out


def match_true_positives(pred, gt, v_pred, v_algo, cfg=MatchConfig()):
    """Matched pairs carrying both visibilities.

    ``v_pred`` and ``v_algo`` map box ids to visibilities. Ground truths
    without a value (degenerate boxes) are left out before matching so
    they cannot claim a prediction.
    """
    gt_boxes = [b for b in gt.boxes if v_algo.get(b.id) is not None]
    pred_boxes = [b for b in pred.boxes if v_pred.get(b.id) is not None]
    pairs = []
    for i, j, iou in match_boxes(pred_boxes, gt_boxes, cfg):
        p, g = pred_boxes[i], gt_boxes[j]
        pairs.append(EvalPair(p.id, g.id, iou, v_pred[p.id], v_algo[g.id], g.class_label))
    return pairs


@dataclass(frozen=True)
class AeSummary:
    """Per-class (count, mean AE); classes without pairs are absent."""

    per_class: dict
    count: int
    mean: float

    def rows(self):
        out = [(label.value, *self.per_class[label]) for label in ClassLabel
               if label in self.per_class]
        out.append((OVERALL, self.count, self.mean))
        return out


def summarize(pairs):
    """Mean absolute error per class and overall.

    Sums use ``math.fsum``, which is exactly rounded, so the means do not
    depend on pair order. With no pairs the overall mean is NaN.
    """
    by_class = {}
    for p in pairs:
        by_class.setdefault(ClassLabel(p.class_label), []).append(p.ae)
    per_class = {k: (len(v), math.fsum(v) / len(v)) for k, v in by_class.items()}
    every = [ae for v in by_class.values() for ae in v]
    mean = math.fsum(every) / len(every) if every else math.nan
    return AeSummary(per_class, len(every), mean)


def random_baseline(pairs, seed=0):
    """Copies of ``pairs`` with v_pred drawn uniform on [0, 1), in pair order."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    u = rng.random(len(pairs))
    return [p._replace(v_pred=float(x)) for p, x in zip(pairs, u)]


def expected_random_ae(v_algo):
    """Mean of E|U - v| over the given visibilities, U uniform on [0, 1].

    For fixed v the integral of |u - v| is (v**2 + (1 - v)**2) / 2.
    """
    v = np.asarray(v_algo, dtype=np.float64)
    return float(np.mean((v * v + (1.0 - v) ** 2) / 2.0))


def format_ae_rows(summary):
    lines = [f"#{AE_FORMAT}:" + ",".join(AE_COLUMNS)]
    for name, count, mean in summary.rows():
        lines.append(f"{name},{count},{'' if math.isnan(mean) else f'{mean:.6f}'}")
    return "\n".join(lines) + "\n"


def format_ae_table(summary):
    rows = summary.rows()
    lines = [f"{'class':<12}{'pairs':>8}{'mean AE':>12}"]
    for name, count, mean in rows:
        shown = "-" if math.isnan(mean) else f"{mean:.6f}"
        lines.append(f"{name:<12}{count:>8}{shown:>12}")
    return "\n".join(lines) + "\n"
