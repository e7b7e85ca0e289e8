"""Synthetic scenes and the runtime-vs-box-count benchmark."""
from dataclasses import dataclass, field, replace
import gc
import logging
import math
import statistics
import time

import numpy as np

from .errors import GenerationExhausted
from .geometry import ClassLabel, ObjectBox, origin_signed_distance
from .scene import Scene
from .visibility import Backend, visibility_all

log = logging.getLogger(__name__)

BENCH_FORMAT = "boxvis-bench/1"
BENCH_COLUMNS = ("backend", "n_boxes", "median_ns", "repetitions")
MIN_REPS = 5
ORIGIN_KEEP_OUT = 1.5
MIN_ORIGIN_GAP = 0.05

# (length, width, height) ranges in meters
DEFAULT_SIZES = {
    ClassLabel.CAR: ((3.5, 4.8), (1.5, 2.0), (1.4, 1.8)),
    ClassLabel.PEDESTRIAN: ((0.4, 1.0), (0.4, 0.9), (1.5, 1.9)),
    ClassLabel.CYCLIST: ((1.4, 1.9), (0.5, 0.8), (1.5, 1.9)),
}


@dataclass(frozen=True)
class SceneGenConfig:
    n_boxes: int = 20
    area_half_extent: float = 30.0
    size_ranges: dict = field(default_factory=lambda: dict(DEFAULT_SIZES))
    min_center_spacing: float = 1.0
    seed: int = 0
    ground_z: float = -1.7

    def __post_init__(self):
        if self.n_boxes < 0:
            raise ValueError("n_boxes must be non-negative")
        if self.min_center_spacing < 0:
            raise ValueError("min_center_spacing must be non-negative")
        if self.area_half_extent <= 0:
            raise ValueError("area_half_extent must be positive")
        if not self.size_ranges:
            raise ValueError("size_ranges must name at least one class")
        for label, ranges in self.size_ranges.items():
            for lo, hi in ranges:
                if not 0 < lo <= hi:
                    raise ValueError(f"bad size range {lo}..{hi} for {label}")


def generate_scene(cfg, frame_id=None):
    """Random boxes standing on ``ground_z``; deterministic per seed.

    A draw is rejected if its center is within 1.5 m of the origin, within
    ``min_center_spacing`` of an earlier center, or if the box comes within
    5 cm of swallowing the origin.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(cfg.seed))))
    labels = list(cfg.size_ranges)
    e = cfg.area_half_extent
    centers = np.empty((cfg.n_boxes, 2))
    boxes = []
    rejections = 0
    budget = 1000 * cfg.n_boxes
    while len(boxes) < cfg.n_boxes:
        label = labels[int(rng.integers(len(labels)))]
        (l0, l1), (w0, w1), (h0, h1) = cfg.size_ranges[label]
        l, w, h = rng.uniform(l0, l1), rng.uniform(w0, w1), rng.uniform(h0, h1)
        x, y = rng.uniform(-e, e, size=2)
        yaw = rng.uniform(-math.pi, math.pi)
        z = cfg.ground_z + h / 2
        ok = math.sqrt(x * x + y * y + z * z) >= ORIGIN_KEEP_OUT
        k = len(boxes)
        if ok and cfg.min_center_spacing > 0 and k:
            d2 = ((centers[:k] - (x, y)) ** 2).sum(axis=1)
            ok = bool(d2.min() >= cfg.min_center_spacing ** 2)
        if ok:
            packed = np.array([[x, y, z, l / 2, w / 2, h / 2, math.cos(yaw), math.sin(yaw)]])
            ok = origin_signed_distance(packed)[0] > MIN_ORIGIN_GAP
        if not ok:
            rejections += 1
            if rejections >= budget:
                raise GenerationExhausted(
                    f"{rejections} rejections placing {cfg.n_boxes} boxes in "
                    f"+-{e} m with spacing {cfg.min_center_spacing} m")
            continue
        centers[k] = (x, y)
        boxes.append(ObjectBox(k, label, (x, y, z), (l, w, h), yaw))
    return Scene(tuple(boxes), frame_id)


@dataclass(frozen=True)
class BenchRecord:
    backend: str
    n_boxes: int
    median_ns: int
    repetitions: int


def sparse_config(template, n, reference_n=100):
    """Copy of ``template`` with ``n`` boxes and the extent grown as sqrt(n),
    so box density stays what it was at ``reference_n``."""
    scale = math.sqrt(max(n, 1) / reference_n)
    return replace(template, n_boxes=n, area_half_extent=template.area_half_extent * scale)


def time_backend(scenes, backend, reps):
    """Median over ``reps`` of the wall time to process every scene once."""
    samples = []
    # like timeit: collector pauses depend on heap history, not on the work
    gc_was_on = gc.isenabled()
    gc.disable()
    try:
        for _ in range(reps):
            t0 = time.perf_counter_ns()
            for scene in scenes:
                visibility_all(scene, backend)
            samples.append(time.perf_counter_ns() - t0)
    finally:
        if gc_was_on:
            gc.enable()
    return max(1, int(statistics.median(samples)))


def run_scaling_bench(backends, n_values, template=SceneGenConfig(), reps=MIN_REPS,
                      scale_extent=True, scenes_per_n=1):
    """Median wall time of ``visibility_all`` per backend and box count.

    With ``scenes_per_n > 1`` each point times that many scenes (seeds
    ``template.seed``, ``template.seed + 1``, ...) back to back, which
    averages out layout-dependent clipping work. Scene generation happens
    outside the timed region. Each backend is called once on a small scene
    first so compilation is not timed.
    """
    if reps < MIN_REPS:
        raise ValueError(f"need at least {MIN_REPS} repetitions, got {reps}")
    if scenes_per_n < 1:
        raise ValueError("scenes_per_n must be at least 1")
    n_values = list(n_values)
    if n_values != sorted(n_values):
        raise ValueError("n_values must be ascending")
    warm = generate_scene(replace(template, n_boxes=8, seed=template.seed))
    for b in backends:
        visibility_all(warm, b)
    records = []
    for n in n_values:
        cfg = sparse_config(template, n) if scale_extent else replace(template, n_boxes=n)
        scenes = [generate_scene(replace(cfg, seed=cfg.seed + k)) for k in range(scenes_per_n)]
        for b in backends:
            ns = time_backend(scenes, b, reps)
            log.info("%s n=%d median %.3f ms", b.label, n, ns / 1e6)
            records.append(BenchRecord(b.label, n, ns, reps))
    return records


def fit_slopes(records):
    """Log-log slope of median time on n per backend, over the upper half
    of each backend's n values."""
    by_backend = {}
    for r in records:
        by_backend.setdefault(r.backend, []).append(r)
    slopes = {}
    for name, recs in by_backend.items():
        recs = sorted(recs, key=lambda r: r.n_boxes)
        upper = recs[len(recs) // 2:]
        if len(upper) < 2:
            continue
        x = np.log([r.n_boxes for r in upper])
        y = np.log([r.median_ns for r in upper])
        slopes[name] = float(np.polyfit(x, y, 1)[0])
    return slopes


def write_bench_csv(records, fh):
    fh.write(f"#{BENCH_FORMAT}:" + ",".join(BENCH_COLUMNS) + "\n")
    for r in records:
        fh.write(f"{r.backend},{r.n_boxes},{r.median_ns},{r.repetitions}\n")


def read_bench_csv(fh):
    header = fh.readline().strip()
    if not header.startswith(f"#{BENCH_FORMAT}:"):
        raise ValueError(f"not a {BENCH_FORMAT} file")
    out = []
    for line in fh:
        if line.strip():
            name, n, ns, reps = line.strip().split(",")
            out.append(BenchRecord(name, int(n), int(ns), int(reps)))
    return out


def backend_from_label(label):
    kind, _, extra = label.partition("+")
    return Backend(kind, parallel=extra == "par")
