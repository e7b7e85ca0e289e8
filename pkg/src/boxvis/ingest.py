"""KITTI label parsing and the visibility interchange format.

KITTI rows put the box's bottom-face center in the camera frame (x right,
y down, z forward) with dimensions ordered (height, width, length). Boxes
are moved into the ego frame (x forward, y left, z up) and re-centered on
their geometric center.
"""
from dataclasses import dataclass
from enum import Enum
import io
import logging
import math
from typing import NamedTuple, Optional

import numpy as np

from .errors import ParseError
from .geometry import ClassLabel, ObjectBox
from .scene import Scene

log = logging.getLogger(__name__)

LABEL_FIELDS = 15
PREDICTION_FIELDS = 16
DONT_CARE = "DontCare"

# rows: ego axes written in camera coordinates
CAMERA_TO_EGO = np.array([[0.0, 0.0, 1.0],
                          [-1.0, 0.0, 0.0],
                          [0.0, -1.0, 0.0]])

VISIBILITY_FORMAT = "boxvis-visibility/1"
VISIBILITY_COLUMNS = ("frame_id", "box_id", "class", "x", "y", "z", "l", "w", "h",
                      "yaw", "omega_sr", "visibility", "degenerate")
VISIBILITY_HEADER = f"#{VISIBILITY_FORMAT}:" + ",".join(VISIBILITY_COLUMNS)


class FrameConvention(str, Enum):
    KITTI_CAMERA = "kitti-camera"
    EGO = "ego"


@dataclass(frozen=True)
class FrameConfig:
    """How label coordinates map to the ego frame.

    ``kitti-camera`` applies the fixed camera-to-ego rotation, lifts the
    center by half the height and turns ``rotation_y`` into an ego yaw.
    ``ego`` takes ``location`` as the ego-frame geometric center and
    ``rotation_y`` as the yaw about +z.
    """

    convention: FrameConvention = FrameConvention.KITTI_CAMERA

    def __post_init__(self):
        object.__setattr__(self, "convention", FrameConvention(self.convention))

    def to_ego(self, location, dims_hwl, rotation_y):
        """Return (center, (l, w, h), yaw) in the ego frame."""
        h, w, l = dims_hwl
        if self.convention is FrameConvention.EGO:
            return tuple(float(c) for c in location), (l, w, h), wrap_angle(rotation_y)
        x, y, z = location
        center = (z, -x, -y + h / 2.0)
        return center, (l, w, h), wrap_angle(-rotation_y - math.pi / 2.0)


def wrap_angle(a):
    """Angle folded into [-pi, pi]."""
    return math.remainder(float(a), 2.0 * math.pi)


@dataclass(frozen=True)
class KittiLabelLine:
    type: str
    truncated: float
    occluded: int
    alpha: float
    bbox2d: tuple
    dimensions: tuple  # (h, w, l)
    location: tuple  # bottom-face center, camera frame
    rotation_y: float
    score: Optional[float] = None


@dataclass(frozen=True)
class Diagnostic:
    line: int
    message: str
    field: Optional[int] = None
    source: Optional[str] = None

    def __str__(self):
        where = [str(self.source)] if self.source else []
        where.append(f"line {self.line}")
        if self.field is not None:
            where.append(f"field {self.field}")
        return ":".join(where) + ": " + self.message


def _lines(text, source):
    """Yield (1-based line number, str or ParseError) for bytes or str input."""
    if isinstance(text, str):
        yield from enumerate(text.splitlines(), start=1)
        return
    for k, raw in enumerate(bytes(text).splitlines(), start=1):
        try:
            yield k, raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            yield k, ParseError(f"not valid UTF-8 ({exc.reason})", line=k, source=source)


def _number(tok, lineno, field, source, kind=float):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok!r}", line=lineno, field=field,
                         source=source) from None
    if kind is int:
        if not (math.isfinite(v) and v == int(v)):
            raise ParseError(f"expected an integer, got {tok!r}", line=lineno,
                             field=field, source=source)
        return int(v)
    return v


def parse_kitti_line(line, lineno=1, source=None):
    """One label or prediction row; raises ParseError on bad shape or numbers."""
    tok = line.split()
    if len(tok) not in (LABEL_FIELDS, PREDICTION_FIELDS):
        raise ParseError(f"expected {LABEL_FIELDS} or {PREDICTION_FIELDS} fields, got {len(tok)}",
                         line=lineno, source=source)
    num = [None] + [_number(t, lineno, k + 1, source, int if k == 2 else float)
                    for k, t in enumerate(tok) if k > 0]
    return KittiLabelLine(
        type=tok[0], truncated=num[1], occluded=num[2], alpha=num[3],
        bbox2d=tuple(num[4:8]), dimensions=tuple(num[8:11]), location=tuple(num[11:14]),
        rotation_y=num[14], score=num[15] if len(tok) == PREDICTION_FIELDS else None)


def label_to_box(label, box_id, cfg=FrameConfig()):
    """ObjectBox in the ego frame; ValueError if the box is invalid."""
    center, dims, yaw = cfg.to_ego(label.location, label.dimensions, label.rotation_y)
    return ObjectBox(box_id, ClassLabel.from_name(label.type), center, dims, yaw,
                     score=label.score)


def read_kitti_labels(text, cfg=FrameConfig(), frame_id=None, source=None, strict=True):
    """Parse a label or prediction file into (Scene, diagnostics).

    Box ids are 0-based line indices, so they survive skipped lines and
    point back into the file. ``DontCare`` rows and blank lines are skipped
    silently; rows whose box is invalid (non-positive or non-finite sizes,
    for instance) are skipped with a diagnostic. Malformed rows (wrong
    field count, non-numeric fields, bad encoding) raise ParseError, or
    with ``strict=False`` become diagnostics too.
    """
    boxes, diags = [], []
    for lineno, line in _lines(text, source):
        try:
            if isinstance(line, ParseError):
                raise line
            if not line.strip():
                continue
            label = parse_kitti_line(line, lineno, source)
        except ParseError as exc:
            if strict:
                raise
            diags.append(Diagnostic(lineno, exc.reason, exc.field, source))
            continue
        if label.type == DONT_CARE:
            continue
        try:
            boxes.append(label_to_box(label, lineno - 1, cfg))
        except ValueError as exc:
            diags.append(Diagnostic(lineno, f"skipped: {exc}", source=source))
    return Scene(tuple(boxes), frame_id), diags


def parse_kitti_labels(text, cfg=FrameConfig(), frame_id=None, source=None, strict=True):
    """Like :func:`read_kitti_labels` but logs the diagnostics and returns the Scene."""
    scene, diags = read_kitti_labels(text, cfg, frame_id, source, strict)
    for d in diags:
        log.warning("%s", d)
    return scene


# ----------------------------------------------------------------------------
# interchange format

class VisibilityRow(NamedTuple):
    frame_id: str
    box_id: int
    class_label: ClassLabel
    center: tuple
    dims: tuple
    yaw: float
    omega: float
    visibility: Optional[float]
    degenerate: bool

    def box(self):
        # a yaw of pi printed at 6 decimals reads back just past pi
        return ObjectBox(self.box_id, self.class_label, self.center, self.dims,
                         wrap_angle(self.yaw))


def visibility_rows(scene, records):
    """Pair a scene's boxes with their visibility records, in scene order."""
    frame = "" if scene.frame_id is None else str(scene.frame_id)
    if "," in frame or "\n" in frame:
        raise ValueError(f"frame id {frame!r} cannot contain commas or newlines")
    out = []
    for box, rec in zip(scene.boxes, records, strict=True):
        if rec.box_id != box.id:
            raise ValueError(f"record for box {rec.box_id} paired with box {box.id}")
        out.append(VisibilityRow(frame, box.id, box.class_label, box.center, box.dims,
                                 box.yaw, rec.omega, rec.visibility, rec.degenerate))
    return out


def format_visibility_row(r):
    vis = "" if r.visibility is None else f"{r.visibility:.6f}"
    return ",".join([
        r.frame_id, str(r.box_id), ClassLabel(r.class_label).value,
        *(f"{v:.6f}" for v in r.center), *(f"{v:.6f}" for v in r.dims), f"{r.yaw:.6f}",
        f"{r.omega:.9f}", vis, "1" if r.degenerate else "0"])


def write_visibility(rows, fh, header=True):
    if header:
        fh.write(VISIBILITY_HEADER + "\n")
    for r in rows:
        fh.write(format_visibility_row(r) + "\n")


def format_visibility(rows, header=True):
    buf = io.StringIO()
    write_visibility(rows, buf, header)
    return buf.getvalue()


def _parse_visibility_row(line, lineno, source):
    tok = line.split(",")
    if len(tok) != len(VISIBILITY_COLUMNS):
        raise ParseError(f"expected {len(VISIBILITY_COLUMNS)} columns, got {len(tok)}",
                         line=lineno, source=source)
    frame_id, box_id, cls = tok[0], tok[1], tok[2]
    bid = _number(box_id, lineno, 2, source, int)
    try:
        label = ClassLabel(cls)
    except ValueError:
        raise ParseError(f"unknown class {cls!r}", line=lineno, field=3, source=source) from None
    vals = [_number(t, lineno, k, source) for k, t in enumerate(tok[3:11], start=4)]
    for k, v in enumerate(vals, start=4):
        if not math.isfinite(v):
            raise ParseError("value must be finite", line=lineno, field=k, source=source)
        if 7 <= k <= 9 and v <= 0.0:
            raise ParseError("dimensions must be positive", line=lineno, field=k,
                             source=source)
    deg = tok[12]
    if deg not in ("0", "1"):
        raise ParseError(f"degenerate flag must be 0 or 1, got {deg!r}", line=lineno,
                         field=13, source=source)
    degenerate = deg == "1"
    omega = _number(tok[10], lineno, 11, source)
    if not (math.isfinite(omega) and 0.0 <= omega <= 4.0 * math.pi + 1e-9):
        raise ParseError(f"solid angle {tok[10]} outside [0, 4pi]", line=lineno, field=11,
                         source=source)
    if tok[11] == "":
        if not degenerate:
            raise ParseError("visibility missing on a non-degenerate row", line=lineno,
                             field=12, source=source)
        vis = None
    else:
        vis = _number(tok[11], lineno, 12, source)
        if not 0.0 <= vis <= 1.0:
            raise ParseError(f"visibility {tok[11]} outside [0, 1]", line=lineno, field=12,
                             source=source)
    return VisibilityRow(frame_id, bid, label, tuple(vals[0:3]), tuple(vals[3:6]), vals[6],
                         omega, vis, degenerate)


def parse_prediction_visibilities(text, source=None):
    """Rows of the interchange format.

    The first non-blank line must be the versioned header; identical header
    lines later on (concatenated streams) are skipped.
    """
    rows = []
    seen_header = False
    for lineno, line in _lines(text, source):
        if isinstance(line, ParseError):
            raise line
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.rstrip() != VISIBILITY_HEADER:
                raise ParseError(f"unsupported header {line.rstrip()!r}; expected "
                                 f"{VISIBILITY_HEADER!r}", line=lineno, source=source)
            seen_header = True
            continue
        if not seen_header:
            raise ParseError(f"missing {VISIBILITY_FORMAT} header", line=lineno, source=source)
        rows.append(_parse_visibility_row(line.rstrip("\r"), lineno, source))
    return rows


def rows_by_frame(rows):
    """Group rows into {frame_id: [rows]} keeping first-seen frame order."""
    out = {}
    for r in rows:
        out.setdefault(r.frame_id, []).append(r)
    return out
