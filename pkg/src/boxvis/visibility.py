"""Per-box visibility: the share of a box's projected solid angle left
uncovered by the projections of every box closer to the origin.

Two exact backends share one compiled kernel and differ only in which
occluders they hand it. ``naive`` passes every closer box. ``pruned`` first
drops occluders whose bounding cap cannot touch the target's, using a KD-tree
on cap axes. Skipped occluders are exactly those that would leave the
fragments untouched, so both give the same numbers.
"""
from dataclasses import dataclass
import logging
import math
from typing import NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .geometry import ORIGIN_CLEARANCE, origin_signed_distance, pack_boxes
from .oracle import OracleConfig, sample_visibility
from .scene import closer_matrix, depth_rank

log = logging.getLogger(__name__)

FULL_SPHERE = 4.0 * math.pi


@dataclass(frozen=True)
class Backend:
    kind: str = "pruned"
    sample_count: int = 1_000_000
    seed: int = 0
    parallel: bool = False

    KINDS = ("naive", "pruned", "mc")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown backend {self.kind!r}; choose from {self.KINDS}")
        if self.kind == "mc" and self.sample_count < 1:
            raise ValueError("sample_count must be at least 1")

    @property
    def label(self):
        return self.kind + ("+par" if self.parallel else "")

    @classmethod
    def naive(cls, parallel=False):
        return cls("naive", parallel=parallel)

    @classmethod
    def pruned(cls, parallel=False):
        return cls("pruned", parallel=parallel)

    @classmethod
    def monte_carlo(cls, sample_count=1_000_000, seed=0):
        return cls("mc", sample_count=sample_count, seed=seed)


NAIVE = Backend.naive()
PRUNED = Backend.pruned()


class VisibilityRecord(NamedTuple):
    box_id: int
    omega: float
    occluded_omega: float
    visibility: Optional[float]  # None when degenerate
    occluder_ids: tuple = ()
    degenerate: bool = False


def _degenerate_record(box):
    return VisibilityRecord(box.id, FULL_SPHERE, 0.0, None, (), True)


def _csr(rows, cols, n_rows):
    ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=ptr[1:])
    return ptr, cols.astype(np.int64)


def _naive_candidates(targets, depth, ids, valid, rank_of):
    closer = closer_matrix(depth, ids, targets) & valid[None, :]
    closer[np.arange(targets.shape[0]), targets] = False
    order = np.argsort(rank_of)
    rows, cols = np.nonzero(closer[:, order])
    return _csr(rows, order[cols], targets.shape[0])


def _caps(verts, ptr, valid):
    n = ptr.shape[0] - 1
    axes = np.zeros((n, 3))
    radii = np.full(n, math.pi)
    counts = np.diff(ptr)
    owner = np.repeat(np.arange(n), counts)
    np.add.at(axes, owner, verts)
    norm = np.linalg.norm(axes, axis=1)
    ok = valid & (norm > 0.0)
    axes[ok] /= norm[ok, None]
    ang = np.arccos(np.clip(np.einsum("ij,ij->i", verts, axes[owner]), -1.0, 1.0))
    rmax = np.zeros(n)
    np.maximum.at(rmax, owner, ang)
    rmax += 1e-9
    radii[ok] = np.where(rmax[ok] >= math.pi / 2, math.pi, rmax[ok])
    return axes, radii


def _chord(angle):
    return 2.0 * np.sin(np.minimum(angle, math.pi) / 2.0)


def _pruned_candidates(targets, depth, ids, valid, rank_of, axes, radii):
    vidx = np.flatnonzero(valid)
    if vidx.size == 0 or targets.size == 0:
        return _csr(np.empty(0, np.int64), np.empty(0, np.int64), targets.shape[0])
    # wide caps are few (boxes near the origin); test them against everyone
    tau = max(2.0 * float(np.median(radii[vidx])), 1e-6)
    wide = vidx[radii[vidx] > tau]
    narrow = vidx[radii[vidx] <= tau]
    rows, cols = [], []
    if narrow.size:
        tree = cKDTree(axes[narrow])
        found = tree.query_ball_point(axes[targets], _chord(radii[targets] + tau) + 1e-12)
        lengths = np.array([len(f) for f in found], dtype=np.int64)
        rows.append(np.repeat(np.arange(targets.shape[0]), lengths))
        flat = [np.asarray(f, dtype=np.int64) for f in found]
        cols.append(narrow[np.concatenate(flat)] if flat else np.empty(0, np.int64))
    if wide.size:
        rows.append(np.repeat(np.arange(targets.shape[0]), wide.size))
        cols.append(np.tile(wide, targets.shape[0]))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    ti = targets[r]
    gap = np.arccos(np.clip(np.einsum("ij,ij->i", axes[ti], axes[c]), -1.0, 1.0))
    d, idv = depth, ids
    tie = np.abs(d[c] - d[ti]) <= 1e-9
    closer = ((d[c] < d[ti]) & ~tie) | (tie & (idv[c] < idv[ti]))
    keep = closer & (c != ti) & ~(gap > radii[ti] + radii[c])
    r, c = r[keep], c[keep]
    order = np.lexsort((rank_of[c], r))
    return _csr(r[order], c[order], targets.shape[0])


def _exact(scene, backend, targets):
    boxes = scene.boxes
    packed = pack_boxes(boxes)
    valid = origin_signed_distance(packed) > ORIGIN_CLEARANCE
    for k in np.flatnonzero(~valid):
        log.warning("box %d contains the origin; flagged degenerate and not used "
                    "as an occluder", boxes[k].id)
    depth = scene.depths()
    ids = scene.ids()
    rank_of = np.empty(len(boxes), dtype=np.int64)
    rank_of[depth_rank(depth, ids)] = np.arange(len(boxes))
    verts, ptr = _kernels.pack_silhouettes(packed)
    normals = _kernels.pack_normals(verts, ptr)
    good = np.array([t for t in targets if valid[t]], dtype=np.int64)
    if backend.kind == "naive":
        cand_ptr, cand_idx = _naive_candidates(good, depth, ids, valid, rank_of)
    else:
        axes, radii = _caps(verts, ptr, valid)
        cand_ptr, cand_idx = _pruned_candidates(good, depth, ids, valid, rank_of, axes, radii)
    kernel = (_kernels.scene_visibility_parallel if backend.parallel
              else _kernels.scene_visibility)
    omega, remaining, hit = kernel(verts, normals, ptr, good, cand_ptr, cand_idx)
    rem = np.minimum(np.maximum(remaining, 0.0), omega)
    vis = np.clip(rem / omega, 0.0, 1.0) if omega.size else omega
    hit_ids = ids[cand_idx[hit]]
    # hit_ids keeps candidate order, so its row offsets are running hit counts
    hit_ptr = np.concatenate(([0], np.cumsum(hit, dtype=np.int64)))[cand_ptr]
    out = {}
    for t, (i, om, r, v) in enumerate(zip(good.tolist(), omega.tolist(), rem.tolist(),
                                          vis.tolist())):
        out[i] = VisibilityRecord(boxes[i].id, om, om - r, v,
                                  tuple(hit_ids[hit_ptr[t]:hit_ptr[t + 1]].tolist()))
    return [out.get(t) or _degenerate_record(boxes[t]) for t in targets.tolist()]


def _monte_carlo(scene, backend, i):
    box = scene.boxes[i]
    if box.origin_distance() <= ORIGIN_CLEARANCE:
        log.warning("box %d contains the origin; flagged degenerate", box.id)
        return _degenerate_record(box)
    cfg = OracleConfig(backend.sample_count, backend.seed)
    omega_est, vis_est, occ = sample_visibility(scene, i, cfg)
    om = omega_est.mean
    return VisibilityRecord(box.id, om, om * (1.0 - vis_est.mean), vis_est.mean,
                            tuple(scene.boxes[j].id for j in occ), False)


def visibility_one(scene, i, backend=PRUNED):
    """Visibility record of box ``i`` (index into ``scene.boxes``)."""
    if backend.kind == "mc":
        return _monte_carlo(scene, backend, i)
    return _exact(scene, backend, np.array([i], dtype=np.int64))[0]


def visibility_all(scene, backend=PRUNED):
    """One record per box, in scene order."""
    if len(scene) == 0:
        return []
    if backend.kind == "mc":
        return [_monte_carlo(scene, backend, i) for i in range(len(scene))]
    return _exact(scene, backend, np.arange(len(scene), dtype=np.int64))
