"""Scene data model: labeled instances with axis-aligned boxes.

Scenes are ingested from JSON documents of the form::

    {"id": "scene0000_00",
     "instances": [{"id": "a", "label": "chair", "bbox": [[0, 0, 0], [1, 1, 1]]},
                   {"id": "b", "label": "table", "points": [[0, 0, 0], [2, 4, 2]]}]}

The loader injects virtual instances ("room center" and four "room corner"
boxes) so programs can reference them like any other object.
"""

from __future__ import annotations

import io
import json
import math
import re
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple

ROOM_CENTER_LABEL = "room center"
ROOM_CORNER_LABEL = "room corner"
ROOM_CENTER_ID = "__room_center__"
ROOM_CORNER_IDS = tuple(f"__room_corner_{i}__" for i in range(4))


class SceneError(ValueError):
    """Raised for malformed scene documents."""


class Point3(NamedTuple):
    x: float
    y: float
    z: float

    def __add__(self, other):  # type: ignore[override]
        return Point3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other):
        return Point3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scale(self, k: float) -> Point3:
        return Point3(self.x * k, self.y * k, self.z * k)

    def dot(self, other: Point3) -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))


@dataclass(frozen=True)
class Aabb:
    min_corner: Point3
    max_corner: Point3

    def __post_init__(self):
        for lo, hi in zip(self.min_corner, self.max_corner):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise SceneError("bounding box coordinates must be finite")
            if lo > hi:
                raise SceneError(f"bounding box min {self.min_corner} exceeds max {self.max_corner}")

    @classmethod
    def from_points(cls, points: Iterable[Point3]) -> Aabb:
        pts = list(points)
        if not pts:
            raise SceneError("cannot build a bounding box from zero points")
        return cls(
            Point3(min(p.x for p in pts), min(p.y for p in pts), min(p.z for p in pts)),
            Point3(max(p.x for p in pts), max(p.y for p in pts), max(p.z for p in pts)),
        )

    @property
    def center(self) -> Point3:
        return (self.min_corner + self.max_corner).scale(0.5)

    @property
    def extents(self) -> Point3:
        return self.max_corner - self.min_corner

    def volume(self) -> float:
        e = self.extents
        return e.x * e.y * e.z

    def contains(self, p: Point3) -> bool:
        lo, hi = self.min_corner, self.max_corner
        return lo.x <= p.x <= hi.x and lo.y <= p.y <= hi.y and lo.z <= p.z <= hi.z

    def to_list(self) -> list[list[float]]:
        return [list(self.min_corner), list(self.max_corner)]


@dataclass(frozen=True)
class Instance:
    id: str
    label: str
    bbox: Aabb
    points: tuple[Point3, ...] | None = None
    virtual: bool = False

    @property
    def center(self) -> Point3:
        return self.bbox.center


@dataclass(frozen=True)
class Scene:
    id: str
    instances: tuple[Instance, ...]
    scene_center: Point3 = field(init=False)
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        real = [inst for inst in self.instances if not inst.virtual]
        if not real:
            raise SceneError("empty scene")
        by_id: dict[str, Instance] = {}
        for inst in self.instances:
            if inst.id in by_id:
                raise SceneError(f"duplicate instance id {inst.id!r}")
            by_id[inst.id] = inst
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "scene_center", _envelope(real).center)

    def get(self, instance_id: str) -> Instance:
        return self._by_id[instance_id]

    def __contains__(self, instance_id: str) -> bool:
        return instance_id in self._by_id

    @property
    def real_instances(self) -> tuple[Instance, ...]:
        return tuple(inst for inst in self.instances if not inst.virtual)


def normalize_label(label: str) -> str:
    """Trim, lowercase and collapse internal whitespace."""
    return re.sub(r"\s+", " ", label.strip().lower())


def instance_center(inst: Instance) -> Point3:
    return inst.bbox.center


def scene_center(scene: Scene) -> Point3:
    return scene.scene_center


def domain_of(scene: Scene, label_set: Iterable[str]) -> list[Instance]:
    """Instances whose normalized label is in `label_set`, sorted by id."""
    labels = {normalize_label(label) for label in label_set}
    if not labels:
        raise ValueError("label set must be non-empty")
    return sorted((inst for inst in scene.instances if inst.label in labels), key=lambda i: i.id)


def _envelope(instances: Iterable[Instance]) -> Aabb:
    corners = []
    for inst in instances:
        corners.append(inst.bbox.min_corner)
        corners.append(inst.bbox.max_corner)
    return Aabb.from_points(corners)


def _virtual_instances(real: list[Instance]) -> list[Instance]:
    env = _envelope(real)
    c = env.center
    out = [Instance(ROOM_CENTER_ID, ROOM_CENTER_LABEL, Aabb(c, c), virtual=True)]
    lo, hi = env.min_corner, env.max_corner
    xy = [(lo.x, lo.y), (hi.x, lo.y), (hi.x, hi.y), (lo.x, hi.y)]
    for vid, (x, y) in zip(ROOM_CORNER_IDS, xy):
        p = Point3(x, y, lo.z)
        out.append(Instance(vid, ROOM_CORNER_LABEL, Aabb(p, p), virtual=True))
    return out


def make_scene(scene_id: str, instances: Iterable[Instance]) -> Scene:
    """Build a scene from real instances, injecting the virtual room instances."""
    real = [inst for inst in instances if not inst.virtual]
    if not real:
        raise SceneError("empty scene")
    return Scene(scene_id, tuple(real) + tuple(_virtual_instances(real)))


def _point(value, where: str) -> Point3:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise SceneError(f"{where}: expected [x, y, z]")
    try:
        p = Point3(*(float(v) for v in value))
    except (TypeError, ValueError) as exc:
        raise SceneError(f"{where}: non-numeric coordinate") from exc
    if not all(math.isfinite(v) for v in p):
        raise SceneError(f"{where}: coordinates must be finite")
    return p


def _parse_instance(doc, index: int) -> Instance:
    where = f"instances[{index}]"
    if not isinstance(doc, dict):
        raise SceneError(f"{where}: expected an object")
    if "id" not in doc or "label" not in doc:
        raise SceneError(f"{where}: missing 'id' or 'label'")
    label = normalize_label(str(doc["label"]))
    if not label:
        raise SceneError(f"{where}: empty label")
    points = None
    if doc.get("points") is not None:
        raw = doc["points"]
        if not isinstance(raw, list) or not raw:
            raise SceneError(f"{where}.points: expected a non-empty list")
        points = tuple(_point(p, f"{where}.points[{k}]") for k, p in enumerate(raw))
    if doc.get("bbox") is not None:
        raw = doc["bbox"]
        if not isinstance(raw, list) or len(raw) != 2:
            raise SceneError(f"{where}.bbox: expected [[x,y,z],[x,y,z]]")
        bbox = Aabb(_point(raw[0], f"{where}.bbox[0]"), _point(raw[1], f"{where}.bbox[1]"))
        if points is not None and Aabb.from_points(points) != bbox:
            raise SceneError(f"{where}: bbox does not match the envelope of its points")
    elif points is not None:
        bbox = Aabb.from_points(points)
    else:
        raise SceneError(f"{where}: instance needs 'bbox' or 'points'")
    return Instance(str(doc["id"]), label, bbox, points)


def scene_from_dict(doc) -> Scene:
    if not isinstance(doc, dict) or not isinstance(doc.get("instances"), list):
        raise SceneError("scene document must be an object with an 'instances' list")
    if not doc["instances"]:
        raise SceneError("empty scene")
    instances = [_parse_instance(d, k) for k, d in enumerate(doc["instances"])]
    return make_scene(str(doc.get("id", "")), instances)


def load_scene(source: IO[bytes] | IO[str] | bytes | str) -> Scene:
    """Parse a scene document from a byte/text stream or raw bytes/str."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise SceneError(f"malformed scene document: {exc}") from exc
    return scene_from_dict(doc)


def load_scene_file(path) -> Scene:
    with open(path, "rb") as fh:
        return load_scene(fh)


def scene_to_dict(scene: Scene) -> dict:
    instances = []
    for inst in scene.real_instances:
        d = {"id": inst.id, "label": inst.label, "bbox": inst.bbox.to_list()}
        if inst.points is not None:
            d["points"] = [list(p) for p in inst.points]
        instances.append(d)
    return {"id": scene.id, "instances": instances}


def dump_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), indent=2)


def dump_scene_stream(scene: Scene) -> io.BytesIO:
    return io.BytesIO(dump_scene(scene).encode("utf-8"))
