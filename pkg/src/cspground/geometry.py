"""Spatial predicates, score functions and 3D IoU.

All predicates work on bounding-box centers (and, for the inside family,
on the anchor's box). View-dependent relations use a viewer frame placed
at the anchor and turned towards the scene center, so that "left" means
left as seen from the middle of the room.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from .scene import Aabb, Instance, Point3, Scene

UP = Point3(0.0, 0.0, 1.0)
FALLBACK_BACKWARD = Point3(1.0, 0.0, 0.0)
_DEGENERATE = 1e-9


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Thresholds:
    near_distance: float = 2.5
    far_distance: float = 2.5
    above_below_horizontal_distance: float = 1.5
    between_distance: float = 1.5
    # When set, ON/UNDER also require the centers to be at most this far apart.
    on_max_distance: float | None = None

    def __post_init__(self):
        for name in ("near_distance", "far_distance", "above_below_horizontal_distance", "between_distance"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise GeometryError(f"threshold {name} must be positive and finite, got {v}")
        if self.on_max_distance is not None and not (self.on_max_distance > 0 and math.isfinite(self.on_max_distance)):
            raise GeometryError("on_max_distance must be positive and finite")

    def scaled(self, k: float) -> Thresholds:
        return Thresholds(
            self.near_distance * k,
            self.far_distance * k,
            self.above_below_horizontal_distance * k,
            self.between_distance * k,
            None if self.on_max_distance is None else self.on_max_distance * k,
        )


class RelationKind(enum.Enum):
    ABOVE = "ABOVE"
    BELOW = "BELOW"
    ON = "ON"
    UNDER = "UNDER"
    FAR = "FAR"
    AWAY = "AWAY"
    ACROSS = "ACROSS"
    OPPOSITE = "OPPOSITE"
    NEAR = "NEAR"
    BESIDE = "BESIDE"
    CLOSE = "CLOSE"
    LEFT = "LEFT"
    RIGHT = "RIGHT"
    FRONT = "FRONT"
    BEHIND = "BEHIND"
    CENTER = "CENTER"
    MIDDLE = "MIDDLE"
    IN = "IN"
    INSIDE = "INSIDE"
    BETWEEN = "BETWEEN"
    LESS = "LESS"
    MORE = "MORE"
    MAX_OF = "MAX_OF"
    MIN_OF = "MIN_OF"

    @property
    def is_spatial(self) -> bool:
        return self in FAMILY

    @property
    def is_comparison(self) -> bool:
        return self in (RelationKind.LESS, RelationKind.MORE)

    @property
    def is_minmax(self) -> bool:
        return self in (RelationKind.MAX_OF, RelationKind.MIN_OF)


R = RelationKind
FAMILY: dict[RelationKind, str] = {
    R.ABOVE: "above", R.ON: "above",
    R.BELOW: "below", R.UNDER: "below",
    R.FAR: "far", R.AWAY: "far", R.ACROSS: "far", R.OPPOSITE: "far",
    R.NEAR: "near", R.BESIDE: "near", R.CLOSE: "near", R.FRONT: "near", R.BEHIND: "near",
    R.LEFT: "left",
    R.RIGHT: "right",
    R.CENTER: "inside", R.MIDDLE: "inside", R.IN: "inside", R.INSIDE: "inside",
    R.BETWEEN: "between",
}


class ScoreFunc(enum.Enum):
    DISTANCE = "distance"
    SIZE_X = "size-x"
    SIZE_Y = "size-y"
    SIZE_Z = "size-z"
    SIZE = "size"
    POSITION_Z = "position-z"
    LEFT = "left"
    RIGHT = "right"
    FRONT = "front"
    DISTANCE_TO_CENTER = "distance-to-center"
    DISTANCE_TO_MIDDLE = "distance-to-middle"

    @property
    def needs_anchor(self) -> bool:
        return self is ScoreFunc.DISTANCE


@dataclass(frozen=True)
class ViewerFrame:
    origin: Point3
    right: Point3
    up: Point3
    backward: Point3
    degenerate: bool = False

    def to_local(self, p: Point3) -> Point3:
        d = p - self.origin
        return Point3(d.dot(self.right), d.dot(self.up), d.dot(self.backward))


def cross(a: Point3, b: Point3) -> Point3:
    return Point3(a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x)


def distance(a: Point3, b: Point3) -> float:
    return math.dist(a, b)


def horizontal_distance(a: Point3, b: Point3) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def viewer_frame(anchor_center: Point3, scene_center: Point3) -> ViewerFrame:
    """Frame at the anchor looking towards the scene center.

    x points right, y up (world +z), z backward (away from the center).
    """
    dx = anchor_center.x - scene_center.x
    dy = anchor_center.y - scene_center.y
    n = math.hypot(dx, dy)
    degenerate = n < _DEGENERATE
    backward = FALLBACK_BACKWARD if degenerate else Point3(dx / n, dy / n, 0.0)
    right = cross(UP, backward)
    return ViewerFrame(anchor_center, right, UP, backward, degenerate)


def canonical_frame(scene: Scene) -> ViewerFrame:
    """Anchor-free frame for the left/right/front scores.

    Same construction as `viewer_frame`, as if the anchor sat one meter along
    world +y from the scene center, with the origin moved to the center.
    A frame placed at the scored instance itself would map every center to
    the origin.
    """
    c = scene.scene_center
    f = viewer_frame(c + Point3(0.0, 1.0, 0.0), c)
    return ViewerFrame(c, f.right, f.up, f.backward)


def _viewer_x(target: Point3, anchor: Point3, scene: Scene) -> float:
    return viewer_frame(anchor, scene.scene_center).to_local(target).x


def eval_relation(
    kind: RelationKind,
    target: Instance,
    anchors: Sequence[Instance],
    scene: Scene,
    th: Thresholds,
) -> bool:
    family = FAMILY.get(kind)
    if family is None:
        raise GeometryError(f"{kind.name} is not a spatial relation")
    if family == "between":
        if len(anchors) < 2:
            raise GeometryError("BETWEEN needs at least two anchors")
    elif len(anchors) != 1:
        raise GeometryError(f"{kind.name} takes exactly one anchor, got {len(anchors)}")

    t = target.center
    if family == "between":
        cs = [a.center for a in anchors]
        k = len(cs)
        mid = Point3(sum(c.x for c in cs) / k, sum(c.y for c in cs) / k, sum(c.z for c in cs) / k)
        return distance(t, mid) <= th.between_distance

    anchor = anchors[0]
    a = anchor.center
    if family in ("above", "below"):
        vertical = t.z > a.z if family == "above" else t.z < a.z
        ok = vertical and horizontal_distance(t, a) <= th.above_below_horizontal_distance
        if ok and th.on_max_distance is not None and kind in (R.ON, R.UNDER):
            ok = distance(t, a) <= th.on_max_distance
        return ok
    if family == "far":
        return distance(t, a) > th.far_distance
    if family == "near":
        return distance(t, a) <= th.near_distance
    if family == "left":
        return _viewer_x(t, a, scene) > 0
    if family == "right":
        return _viewer_x(t, a, scene) < 0
    # inside family
    return anchor.bbox.contains(t)


def eval_score(func: ScoreFunc, inst: Instance, scene: Scene, anchor: Instance | None = None) -> float:
    if func.needs_anchor and anchor is None:
        raise GeometryError(f"score function {func.value!r} requires an anchor")
    if not func.needs_anchor and anchor is not None:
        raise GeometryError(f"score function {func.value!r} takes no anchor")

    c = inst.center
    ext = inst.bbox.extents
    if func is ScoreFunc.DISTANCE:
        return distance(c, anchor.center)
    if func is ScoreFunc.SIZE_X:
        return ext.x
    if func is ScoreFunc.SIZE_Y:
        return ext.y
    if func is ScoreFunc.SIZE_Z:
        return ext.z
    if func is ScoreFunc.SIZE:
        return max(ext)
    if func is ScoreFunc.POSITION_Z:
        return c.z
    if func in (ScoreFunc.DISTANCE_TO_CENTER, ScoreFunc.DISTANCE_TO_MIDDLE):
        return distance(c, scene.scene_center)
    local = canonical_frame(scene).to_local(c)
    if func is ScoreFunc.LEFT:
        return local.x
    if func is ScoreFunc.RIGHT:
        return -local.x
    return local.z


def iou_3d(a: Aabb, b: Aabb) -> float:
    lo = [max(p, q) for p, q in zip(a.min_corner, b.min_corner)]
    hi = [min(p, q) for p, q in zip(a.max_corner, b.max_corner)]
    inter = 1.0
    for l, h in zip(lo, hi):
        if h <= l:
            return 0.0
        inter *= h - l
    union = a.volume() + b.volume() - inter
    if union <= 0:
        return 0.0
    return inter / union
