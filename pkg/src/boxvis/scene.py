"""Scenes and the depth ordering that defines each box's occluder set."""
from dataclasses import dataclass

import numpy as np

from .geometry import ObjectBox, center_depths

DEPTH_TIE = 1e-9


@dataclass(frozen=True)
class Scene:
    boxes: tuple
    frame_id: str = None

    def __post_init__(self):
        boxes = tuple(self.boxes)
        for b in boxes:
            if not isinstance(b, ObjectBox):
                raise TypeError(f"expected ObjectBox, got {type(b).__name__}")
        ids = [b.id for b in boxes]
        if len(set(ids)) != len(ids):
            raise ValueError("box ids must be unique within a scene")
        object.__setattr__(self, "boxes", boxes)

    def __len__(self):
        return len(self.boxes)

    def index_of(self, box_id):
        for i, b in enumerate(self.boxes):
            if b.id == box_id:
                return i
        raise KeyError(box_id)

    def depths(self):
        if not self.boxes:
            return np.empty(0)
        return center_depths([b.center for b in self.boxes])

    def ids(self):
        return np.array([b.id for b in self.boxes], dtype=np.int64)


def closer_matrix(depth, ids, rows=None):
    """``M[r, j]`` is True when box j is closer than box ``rows[r]``.

    Depths within ``DEPTH_TIE`` of each other are ties, resolved in favour
    of the smaller id.
    """
    if rows is None:
        rows = np.arange(depth.shape[0])
    di = depth[rows][:, None]
    dj = depth[None, :]
    tie = np.abs(dj - di) <= DEPTH_TIE
    return ((dj < di) & ~tie) | (tie & (ids[None, :] < ids[rows][:, None]))


def depth_rank(depth, ids):
    """Permutation listing boxes nearest first (id breaks ties)."""
    return np.lexsort((ids, depth))


def occluder_set(scene, i):
    """Indices of boxes closer to the origin than box ``i``, nearest first."""
    if len(scene) == 0:
        return []
    depth, ids = scene.depths(), scene.ids()
    mask = closer_matrix(depth, ids, np.array([i]))[0]
    mask[i] = False
    return [int(j) for j in depth_rank(depth, ids) if mask[j]]
