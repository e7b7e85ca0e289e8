"""Monte-Carlo ray oracle for solid angles and visibilities.

Directions are drawn uniformly inside a cap that contains the box's
projection, and each ray is tested against the boxes themselves with a slab
test. Nothing here touches the spherical polygon code, so the estimates are
an independent check on the exact engine.

Random streams come from numpy's PCG64 seeded with
``SeedSequence([seed, box_id])``: one stream per (seed, box) pair, drawn in
order, so an estimate is reproducible on any platform and thread count.
"""
from dataclasses import dataclass
import math

import numpy as np

from . import _kernels
from .errors import InsufficientHits, OriginInsideBox
from .geometry import ORIGIN_CLEARANCE, SphericalCap, cap_of_directions, caps_disjoint
from .scene import occluder_set

MIN_HITS = 100
_DRAW_BLOCK = 1 << 20


@dataclass(frozen=True)
class OracleConfig:
    sample_count: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if int(self.sample_count) < 1:
            raise ValueError("sample_count must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class OracleEstimate:
    mean: float
    std_error: float
    samples_hit: int
    samples_total: int


@dataclass(frozen=True)
class _Sample:
    cap: SphericalCap
    hits: int
    covered: int
    total: int
    occluder_hits: tuple  # (scene index, rays hitting it) per tested occluder


def binomial_std_error(successes, trials):
    """Standard error of a proportion, Agresti-Coull adjusted.

    Two pseudo-successes and two pseudo-failures keep the error positive at
    0 and 1, where the plain Wald estimate collapses to zero.
    """
    n = trials + 4.0
    p = (successes + 2.0) / n
    return math.sqrt(p * (1.0 - p) / n)


def ray_box_intersect(origin, direction, box):
    """Distance to the first point of ``box`` along the ray, or None."""
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    packed = box.packed()
    packed[:3] -= np.asarray(origin, dtype=np.float64)
    t = _kernels.ray_box_t(float(d[0]), float(d[1]), float(d[2]), packed)
    return None if t < 0.0 else float(t)


def sampling_cap(box):
    """Cap around the box's corner directions; contains its whole projection."""
    corners = box.corners()
    return cap_of_directions(corners / np.linalg.norm(corners, axis=1, keepdims=True))


def cap_frame(axis):
    """Rows: axis and two unit vectors completing a right-handed frame."""
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return np.stack([axis, e1, e2])


def sample_cap(cap, n, rng):
    """``n`` directions uniform inside ``cap``."""
    u = rng.random((n, 2))
    return _kernels.cap_directions(u, cap_frame(cap.axis), math.cos(cap.angular_radius))


def _rng(cfg, box_id):
    ss = np.random.SeedSequence([int(cfg.seed), int(box_id) & (2**64 - 1)])
    return np.random.Generator(np.random.PCG64(ss))


def _check_outside(box):
    if box.origin_distance() <= ORIGIN_CLEARANCE:
        raise OriginInsideBox(f"origin is inside or on box {box.id}")


def _sample(box, occluders, cfg):
    """Shoot ``cfg.sample_count`` rays through box's cap; ``occluders`` is
    a list of (scene index, box)."""
    cap = sampling_cap(box)
    kept = [(j, b) for j, b in occluders if not caps_disjoint(cap, sampling_cap(b))]
    packed_occ = (np.stack([b.packed() for _, b in kept]) if kept
                  else np.empty((0, 8)))
    frame = cap_frame(cap.axis)
    cos_alpha = math.cos(cap.angular_radius)
    target = box.packed()
    rng = _rng(cfg, box.id)
    counts = np.zeros(len(kept) + 2, dtype=np.int64)
    remaining = int(cfg.sample_count)
    while remaining > 0:
        block = min(remaining, _DRAW_BLOCK)
        u = rng.random((block, 2))
        counts += _kernels.count_cap_hits(u, frame, cos_alpha, target, packed_occ)
        remaining -= block
    occ_hits = tuple((j, int(c)) for (j, _), c in zip(kept, counts[2:]))
    return _Sample(cap, int(counts[0]), int(counts[1]), int(cfg.sample_count), occ_hits)


def _solid_angle_estimate(s):
    frac = s.hits / s.total
    return OracleEstimate(mean=s.cap.area * frac,
                          std_error=s.cap.area * binomial_std_error(s.hits, s.total),
                          samples_hit=s.hits, samples_total=s.total)


def _visibility_estimate(s):
    if s.hits < MIN_HITS:
        raise InsufficientHits(s.hits, MIN_HITS)
    return OracleEstimate(mean=(s.hits - s.covered) / s.hits,
                          std_error=binomial_std_error(s.hits - s.covered, s.hits),
                          samples_hit=s.hits, samples_total=s.total)


def estimate_solid_angle(box, cfg=OracleConfig()):
    """Solid angle of ``box`` as cap area times the fraction of cap rays
    that hit it. ``samples_hit`` counts those rays."""
    _check_outside(box)
    return _solid_angle_estimate(_sample(box, [], cfg))


def _occluders(scene, i):
    out = []
    for j in occluder_set(scene, i):
        b = scene.boxes[j]
        if b.origin_distance() > ORIGIN_CLEARANCE:
            out.append((j, b))
    return out


def estimate_visibility(scene, i, cfg=OracleConfig()):
    """Fraction of rays hitting box ``i`` that miss every closer box.

    "Closer" is the depth ordering of the occluder set, not the hit
    distance along each ray. Boxes containing the origin never occlude.
    """
    box = scene.boxes[i]
    _check_outside(box)
    return _visibility_estimate(_sample(box, _occluders(scene, i), cfg))


def sample_visibility(scene, i, cfg):
    """Solid-angle estimate, visibility estimate and the indices of
    occluders hit by at least one sampled ray, from one shared sample."""
    box = scene.boxes[i]
    _check_outside(box)
    s = _sample(box, _occluders(scene, i), cfg)
    return (_solid_angle_estimate(s), _visibility_estimate(s),
            [j for j, c in s.occluder_hits if c > 0])
