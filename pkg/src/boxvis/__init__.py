"""Exact and sampled visibility of 3D boxes seen from an ego origin."""
from ._accel import NUMBA_ENABLED, accel_name
from .errors import (BoxVisError, DegeneratePolygon, GenerationExhausted, InsufficientHits,
                     OriginInsideBox, ParseError)
from .geometry import (ClassLabel, GreatCircleHalfSpace, ObjectBox, SphericalCap,
                       SphericalPolygon, bounding_cap, clip, intersect, silhouette,
                       solid_angle, subtract_from_fragments)
from .ingest import FrameConfig, parse_kitti_labels, parse_prediction_visibilities
from .metrics import MatchConfig, absolute_error, box_iou, match_true_positives, summarize
from .oracle import OracleConfig, OracleEstimate, estimate_solid_angle, estimate_visibility
from .scene import Scene, occluder_set
from .visibility import Backend, VisibilityRecord, visibility_all, visibility_one

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED", "accel_name",
    "BoxVisError", "DegeneratePolygon", "GenerationExhausted", "InsufficientHits",
    "OriginInsideBox", "ParseError",
    "ClassLabel", "GreatCircleHalfSpace", "ObjectBox", "SphericalCap", "SphericalPolygon",
    "bounding_cap", "clip", "intersect", "silhouette", "solid_angle", "subtract_from_fragments",
    "FrameConfig", "parse_kitti_labels", "parse_prediction_visibilities",
    "MatchConfig", "absolute_error", "box_iou", "match_true_positives", "summarize",
    "OracleConfig", "OracleEstimate", "estimate_solid_angle", "estimate_visibility",
    "Scene", "occluder_set",
    "Backend", "VisibilityRecord", "visibility_all", "visibility_one",
]
