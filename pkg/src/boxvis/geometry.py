"""Boxes, spherical polygons and the convex clipping operations on them.

All directions live on the unit sphere around the ego origin. Polygons are
convex, bounded by minor great-circle arcs, and stored counterclockwise as
seen from outside the sphere.
"""
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
import math

import numpy as np
from scipy.optimize import linprog

from . import _kernels
from .errors import DegeneratePolygon, OriginInsideBox

CLIP_EPS = _kernels.CLIP_EPS
MIN_AREA = _kernels.MIN_AREA
ORIGIN_CLEARANCE = 1e-6
CAP_SLACK = 1e-9
UNIT_TOL = 1e-9


class ClassLabel(str, Enum):
    CAR = "Car"
    PEDESTRIAN = "Pedestrian"
    CYCLIST = "Cyclist"
    OTHER = "Other"

    @classmethod
    def from_name(cls, name):
        for label in cls:
            if label.value == name:
                return label
        return cls.OTHER


@dataclass(frozen=True)
class ObjectBox:
    """Oriented box in the ego frame (x forward, y left, z up).

    ``center`` is the geometric center, ``dims`` is (length, width, height)
    in meters and ``yaw`` rotates the length axis about +z.
    """

    id: int
    class_label: ClassLabel
    center: tuple
    dims: tuple
    yaw: float
    score: float = None

    def __post_init__(self):
        center = tuple(float(c) for c in self.center)
        dims = tuple(float(d) for d in self.dims)
        if len(center) != 3 or len(dims) != 3:
            raise ValueError("center and dims need three components")
        if not all(math.isfinite(v) for v in center + dims + (float(self.yaw),)):
            raise ValueError("box fields must be finite")
        if min(dims) <= 0.0:
            raise ValueError(f"box {self.id}: dimensions must be positive, got {dims}")
        if not -math.pi <= self.yaw <= math.pi:
            raise ValueError(f"box {self.id}: yaw {self.yaw} outside [-pi, pi]")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "yaw", float(self.yaw))
        object.__setattr__(self, "class_label", ClassLabel(self.class_label))

    @property
    def depth(self):
        """Distance from the origin to the box center."""
        return float(center_depths(np.array([self.center]))[0])

    def packed(self):
        """Kernel row ``(cx, cy, cz, hx, hy, hz, cos_yaw, sin_yaw)``."""
        return pack_boxes([self])[0]

    def corners(self):
        """The 8 corners, shape (8, 3), in kernel corner order."""
        return box_corners(self.packed()[None])[0]

    def origin_distance(self):
        """Signed distance from the origin to the box surface (negative inside)."""
        return float(origin_signed_distance(self.packed()[None])[0])


def pack_boxes(boxes):
    """Kernel rows for a sequence of boxes, shape (n, 8)."""
    if not boxes:
        return np.empty((0, 8))
    raw = np.array([b.center + b.dims + (b.yaw,) for b in boxes], dtype=np.float64)
    out = np.empty((raw.shape[0], 8))
    out[:, :3] = raw[:, :3]
    out[:, 3:6] = raw[:, 3:6] / 2
    out[:, 6] = np.cos(raw[:, 6])
    out[:, 7] = np.sin(raw[:, 6])
    return out


def center_depths(centers):
    centers = np.asarray(centers, dtype=np.float64)
    return np.sqrt((centers * centers).sum(axis=1))


def box_corners(packed):
    """Corners of packed boxes, shape (n, 8, 3)."""
    local = _kernels.CORNER_SIGNS[None, :, :] * packed[:, None, 3:6]
    c = packed[:, None, 6]
    s = packed[:, None, 7]
    x = c * local[..., 0] - s * local[..., 1] + packed[:, None, 0]
    y = s * local[..., 0] + c * local[..., 1] + packed[:, None, 1]
    z = local[..., 2] + packed[:, None, 2]
    return np.stack([x, y, z], axis=-1)


def origin_signed_distance(packed):
    c, s = packed[:, 6], packed[:, 7]
    q = np.stack([-(c * packed[:, 0] + s * packed[:, 1]),
                  -(-s * packed[:, 0] + c * packed[:, 1]),
                  -packed[:, 2]], axis=1)
    d = np.abs(q) - packed[:, 3:6]
    outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
    inside = np.minimum(d.max(axis=1), 0.0)
    return outside + inside


def _unit(v):
    v = np.asarray(v, dtype=np.float64).reshape(3)
    n = np.linalg.norm(v)
    if not n > 0.0:
        raise ValueError("zero vector has no direction")
    return v / n


@dataclass(frozen=True)
class GreatCircleHalfSpace:
    """Directions ``p`` with ``dot(p, normal) >= -CLIP_EPS``."""

    normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "normal", _unit(self.normal))

    def contains(self, p, eps=CLIP_EPS):
        return float(np.dot(p, self.normal)) >= -eps

    def __neg__(self):
        return GreatCircleHalfSpace(-self.normal)


@dataclass(frozen=True)
class SphericalCap:
    axis: np.ndarray
    angular_radius: float

    def __post_init__(self):
        object.__setattr__(self, "axis", _unit(self.axis))
        if not 0.0 < self.angular_radius <= math.pi:
            raise ValueError("angular radius must be in (0, pi]")

    @property
    def area(self):
        return 2.0 * math.pi * (1.0 - math.cos(self.angular_radius))

    def contains(self, p):
        return float(np.dot(p, self.axis)) >= math.cos(self.angular_radius) - 1e-15


@dataclass(frozen=True, eq=False)
class SphericalPolygon:
    """Convex spherical polygon; orientation is canonicalised on construction."""

    vertices: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        norms = np.linalg.norm(v, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise ValueError("polygon vertices must be unit vectors")
        v = _kernels.dedupe(np.ascontiguousarray(v))
        if v.shape[0] < 3:
            raise DegeneratePolygon(f"polygon has {v.shape[0]} distinct vertices")
        if _kernels.polygon_area(v) < 0.0:
            v = np.ascontiguousarray(v[::-1])
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def from_directions(cls, points):
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return cls(p / np.linalg.norm(p, axis=1, keepdims=True))

    def __len__(self):
        return self.vertices.shape[0]

    def __repr__(self):
        return f"SphericalPolygon(n={len(self)}, area={self.area:.6g})"

    @cached_property
    def area(self):
        return _kernels.polygon_area(self.vertices)

    @cached_property
    def edge_normals(self):
        n = _kernels.edge_normals(self.vertices)
        n.setflags(write=False)
        return n

    def halfspaces(self):
        return [GreatCircleHalfSpace(n) for n in self.edge_normals]

    def is_convex(self, eps=CLIP_EPS):
        d = self.vertices @ self.edge_normals.T
        return bool(np.all(d >= -eps))

    def in_open_hemisphere(self):
        """True if some direction is strictly less than 90 degrees from every vertex."""
        c = self.vertices.sum(axis=0)
        if np.all(self.vertices @ c > 0.0):
            return True
        # maximise t subject to v.c >= t for every vertex, c in the unit cube
        m = len(self)
        res = linprog(c=[0, 0, 0, -1], A_ub=np.hstack([-self.vertices, np.ones((m, 1))]),
                      b_ub=np.zeros(m), bounds=[(-1, 1)] * 3 + [(None, 1)])
        return bool(res.status == 0 and -res.fun > 1e-12)

    def contains(self, p, eps=0.0):
        return bool(np.all(self.edge_normals @ np.asarray(p) >= -eps))

    def rotated(self, R):
        return SphericalPolygon(self.vertices @ np.asarray(R).T)


def _wrap(v):
    if _kernels.is_empty(v):
        return None
    return SphericalPolygon(v)


def silhouette(box):
    """Projection of ``box`` onto the unit sphere as a convex polygon.

    Built from the silhouette loop: edges between faces that face the origin
    and faces that do not. Faces whose plane passes within 1e-9 m of the
    origin count as facing away.
    """
    packed = box.packed()
    if origin_signed_distance(packed[None])[0] <= ORIGIN_CLEARANCE:
        raise OriginInsideBox(f"origin is inside or on box {box.id}")
    out = np.empty((6, 3))
    m = _kernels.box_silhouette(packed, out)
    if m < 3:  # pragma: no cover - excluded by the clearance check
        raise OriginInsideBox(f"box {box.id} has no front-facing face")
    return SphericalPolygon(out[:m])


def solid_angle(poly):
    """Solid angle in steradians (spherical excess summed over a fan)."""
    if len(poly) < 3:
        raise DegeneratePolygon("fewer than 3 vertices")
    area = poly.area
    if area < MIN_AREA:
        raise DegeneratePolygon(f"area {area:.3g} sr below {MIN_AREA:g}")
    return area


def clip(poly, hs):
    """Part of ``poly`` inside the half-space, or None if nothing remains."""
    n = hs.normal
    return _wrap(_kernels.clip_halfspace(poly.vertices, n[0], n[1], n[2]))


def intersect(a, b):
    return _wrap(_kernels.clip_by_polygon(a.vertices, np.ascontiguousarray(b.edge_normals)))


def subtract_from_fragments(fragments, occluder):
    """Remove ``occluder`` from a set of interior-disjoint convex fragments."""
    out = []
    normals = np.ascontiguousarray(occluder.edge_normals)
    # python entry point: numba cannot take a caller-owned list of arrays
    subtract_one = getattr(_kernels.subtract_one, "py_func", _kernels.subtract_one)
    for frag in fragments:
        pieces = []
        subtract_one(frag.vertices, normals, pieces)
        if len(pieces) == 1 and pieces[0] is frag.vertices:
            out.append(frag)
        else:
            out.extend(SphericalPolygon(p) for p in pieces)
    return out


def bounding_cap(poly):
    """Cap around the vertex centroid reaching the farthest vertex.

    Polygons too wide for a cap under a quarter turn get the whole sphere
    (radius pi), which never prunes anything.
    """
    return cap_of_directions(poly.vertices)


def cap_of_directions(v):
    axis = _unit(v.sum(axis=0))
    radius = float(np.arccos(np.clip(v @ axis, -1.0, 1.0)).max()) + CAP_SLACK
    if radius >= math.pi / 2:
        radius = math.pi
    return SphericalCap(axis, radius)


def caps_disjoint(a, b):
    gap = math.acos(max(-1.0, min(1.0, float(np.dot(a.axis, b.axis)))))
    return gap > a.angular_radius + b.angular_radius


def rotation_z(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
