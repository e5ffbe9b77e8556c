"""Seeded synthetic rooms with planted grounding answers.

Each pattern places a few labeled boxes so that a known program has a known
answer, scatters clutter around them, and certifies the planted answer with
the exhaustive oracle before returning. Every scene gets a "floor" box that
spans the room, which pins the scene center to the room center.

Patterns:
    beside         one anchor, several targets, exactly one target beside it.
    row_left       k targets in a row left of the anchor; the program asks
                   for the k-th one (counting).
    cluster        target/anchor pairs that are all "near"; the planted pair is
                   much tighter than the decoy pairs.
    shared_anchor  two anchors, one carrying an extra object; the target is
                   the one near that anchor. One-constraint-at-a-time
                   grounding picks the wrong target here.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from ..geometry import Thresholds, viewer_frame
from ..oracle import brute_force_solutions, brute_force_target
from ..program import compile_program
from ..scene import Aabb, Instance, Point3, Scene, make_scene
from .evaluate import QueryRecord

PATTERNS = ("beside", "row_left", "cluster", "shared_anchor")


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    pattern: str = "beside"
    target_label: str = "chair"
    anchor_label: str = "table"
    extra_label: str = "lamp"
    n_targets: int = 2
    planted_index: int = 0
    n_decoys: int = 3
    room_size: tuple[float, float] = (10.0, 10.0)
    box_size: float = 0.6
    clutter: dict[str, int] = field(default_factory=dict)
    max_attempts: int = 200

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise SynthError(f"unknown pattern {self.pattern!r}; expected one of {PATTERNS}")
        if self.n_targets < 1 or self.n_decoys < 1:
            raise SynthError("counts must be >= 1")
        if not 0 <= self.planted_index < max(self.n_targets, 2):
            raise SynthError("planted_index out of range")
        if min(self.room_size) <= 0 or self.box_size <= 0:
            raise SynthError("room and box sizes must be positive")
        if any(n < 0 for n in self.clutter.values()):
            raise SynthError("clutter counts must be >= 0")

    @classmethod
    def from_dict(cls, doc: dict) -> SynthSpec:
        doc = dict(doc)
        if "room_size" in doc:
            doc["room_size"] = tuple(float(v) for v in doc["room_size"][:2])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise SynthError(str(exc)) from exc


@dataclass(frozen=True)
class SynthResult:
    scene: Scene
    program: str
    target_id: str
    anchor_ids: dict[str, str]
    target_label: str

    def record(self, query: str = "") -> QueryRecord:
        inst = self.scene.get(self.target_id)
        return QueryRecord(
            scene_id=self.scene.id,
            query=query or f"synthetic {self.target_label}",
            gt_label=self.target_label,
            gt_bbox=inst.bbox,
            gt_instance_id=self.target_id,
            program=self.program,
        )


def _slug(label: str) -> str:
    return label.replace(" ", "_")


def _var(label: str, k: int | None = None) -> str:
    name = _slug(label).upper()
    return name if k is None else f"{name}_{k}"


class _Room:
    def __init__(self, rng: random.Random, spec: SynthSpec):
        self.rng = rng
        self.spec = spec
        self.boxes: list[Instance] = []
        self.counts: dict[str, int] = {}

    def free(self, x: float, y: float, size: float) -> bool:
        w, d = self.spec.room_size
        h = size / 2
        if not (h <= x <= w - h and h <= y <= d - h):
            return False
        for b in self.boxes:
            if b.label == "floor":
                continue
            c = b.center
            half = (b.bbox.extents.x + size) / 2
            if abs(c.x - x) < half and abs(c.y - y) < half:
                return False
        return True

    def add(self, label: str, x: float, y: float, z0: float = 0.0, size: float | None = None,
            height: float | None = None) -> Instance:
        s = size or self.spec.box_size
        hgt = height or s
        k = self.counts.get(label, 0)
        self.counts[label] = k + 1
        inst = Instance(f"{_slug(label)}_{k}", label,
                        Aabb(Point3(x - s / 2, y - s / 2, z0), Point3(x + s / 2, y + s / 2, z0 + hgt)))
        self.boxes.append(inst)
        return inst

    def random_spot(self, size: float | None = None, tries: int = 200) -> tuple[float, float] | None:
        s = size or self.spec.box_size
        w, d = self.spec.room_size
        for _ in range(tries):
            x = self.rng.uniform(s / 2, w - s / 2)
            y = self.rng.uniform(s / 2, d - s / 2)
            if self.free(x, y, s):
                return x, y
        return None

    def spot_at(self, cx: float, cy: float, r_min: float, r_max: float, tries: int = 200):
        s = self.spec.box_size
        for _ in range(tries):
            r = self.rng.uniform(r_min, r_max)
            a = self.rng.uniform(0, 2 * math.pi)
            x, y = cx + r * math.cos(a), cy + r * math.sin(a)
            if self.free(x, y, s):
                return x, y
        return None

    def scene(self, scene_id: str) -> Scene:
        w, d = self.spec.room_size
        floor = Instance("floor_0", "floor", Aabb(Point3(0, 0, -0.05), Point3(w, d, 0)))
        return make_scene(scene_id, [floor] + self.boxes)


class _Retry(Exception):
    pass


def _need(spot):
    if spot is None:
        raise _Retry
    return spot


def _place_clutter(room: _Room):
    for label in sorted(room.spec.clutter):
        for _ in range(room.spec.clutter[label]):
            room.add(label, *_need(room.random_spot()))


def _beside(room: _Room, th: Thresholds):
    spec = room.spec
    ax, ay = _need(room.random_spot())
    anchor = room.add(spec.anchor_label, ax, ay)
    targets = []
    for k in range(spec.n_targets):
        if k == spec.planted_index:
            x, y = _need(room.spot_at(ax, ay, spec.box_size * 1.2, th.near_distance * 0.6))
        else:
            x, y = _need(room.spot_at(ax, ay, th.near_distance + 0.5, th.near_distance + 4.0))
        targets.append(room.add(spec.target_label, x, y))
    t, a = _var(spec.target_label), _var(spec.anchor_label)
    program = (
        f'{t} = DEFINE_VARIABLE(labels=["{spec.target_label}"])\n'
        f'{a} = DEFINE_VARIABLE(labels=["{spec.anchor_label}"])\n'
        f"CONSTRAINT_BESIDE(target={t}, anchor={a})\n"
        f"SET_TARGET({t})\n"
    )
    return program, targets[spec.planted_index].id, {a: anchor.id}


def _row_left(room: _Room, th: Thresholds):
    spec = room.spec
    w, d = spec.room_size
    center = Point3(w / 2, d / 2, 0.0)
    ax, ay = _need(room.random_spot())
    anchor = room.add(spec.anchor_label, ax, ay)
    # Positive frame-x at the anchor reads as "left" seen from the room center.
    left = viewer_frame(Point3(ax, ay, 0.0), center).right
    gap = spec.box_size * 1.6
    row = []
    for k in range(spec.n_targets):
        x, y = ax + left.x * gap * (k + 1), ay + left.y * gap * (k + 1)
        if not room.free(x, y, spec.box_size):
            raise _Retry
        row.append(room.add(spec.target_label, x, y))
    x, y = ax - left.x * gap, ay - left.y * gap
    if not room.free(x, y, spec.box_size):
        raise _Retry
    room.add(spec.target_label, x, y)  # distractor on the right

    a = _var(spec.anchor_label)
    names = [_var(spec.target_label, k) for k in range(spec.n_targets)]
    lines = [f'{n} = DEFINE_VARIABLE(labels=["{spec.target_label}"])' for n in names]
    lines.append(f'{a} = DEFINE_VARIABLE(labels=["{spec.anchor_label}"])')
    lines.append(f"CONSTRAINT_LEFT(target={names[0]}, anchor={a})")
    for prev, cur in zip(names, names[1:]):
        lines.append(f"CONSTRAINT_LEFT(target={cur}, anchor={prev})")
    lines.append(f"SET_TARGET({names[-1]})")
    anchors = {a: anchor.id, **{n: inst.id for n, inst in zip(names[:-1], row[:-1])}}
    return "\n".join(lines) + "\n", row[-1].id, anchors


def _cluster(room: _Room, th: Thresholds):
    spec = room.spec
    tight = spec.box_size * 1.3
    loose = (th.near_distance * 0.7, th.near_distance * 0.95)
    pairs = []
    planted = room.rng.randrange(spec.n_decoys + 1)
    for k in range(spec.n_decoys + 1):
        ax, ay = _need(room.random_spot())
        if any(math.dist((ax, ay), (b.center.x, b.center.y)) < th.near_distance * 1.5 for b in room.boxes):
            raise _Retry
        a_inst = room.add(spec.anchor_label, ax, ay)
        if k == planted:
            x, y = _need(room.spot_at(ax, ay, tight, tight * 1.1))
        else:
            x, y = _need(room.spot_at(ax, ay, *loose))
        pairs.append((room.add(spec.target_label, x, y), a_inst))
    t, a = _var(spec.target_label), _var(spec.anchor_label)
    program = (
        f'{t} = DEFINE_VARIABLE(labels=["{spec.target_label}"])\n'
        f'{a} = DEFINE_VARIABLE(labels=["{spec.anchor_label}"])\n'
        f"CONSTRAINT_NEAR(target={t}, anchor={a})\n"
        f"SET_TARGET({t})\n"
    )
    planted_t, planted_a = pairs[planted]
    return program, planted_t.id, {a: planted_a.id}


def _shared_anchor(room: _Room, th: Thresholds):
    spec = room.spec
    s = spec.box_size
    anchors, targets = [], []
    for k in range(2):
        ax, ay = _need(room.random_spot())
        if anchors and math.dist((ax, ay), (anchors[0].center.x, anchors[0].center.y)) < th.near_distance * 2 + 2:
            raise _Retry
        anchors.append(room.add(spec.anchor_label, ax, ay))
    # Targets are created in id order; target_k sits near anchor_k.
    for k in range(2):
        c = anchors[k].center
        x, y = _need(room.spot_at(c.x, c.y, s * 1.2, th.near_distance * 0.6))
        targets.append(room.add(spec.target_label, x, y))
    p = spec.planted_index
    top = anchors[p].bbox.max_corner.z
    c = anchors[p].center
    room.add(spec.extra_label, c.x, c.y, z0=top, size=s / 3)

    t, a, e = _var(spec.target_label), _var(spec.anchor_label), _var(spec.extra_label)
    program = (
        f'{t} = DEFINE_VARIABLE(labels=["{spec.target_label}"])\n'
        f'{a} = DEFINE_VARIABLE(labels=["{spec.anchor_label}"])\n'
        f'{e} = DEFINE_VARIABLE(labels=["{spec.extra_label}"])\n'
        f"CONSTRAINT_NEAR(target={t}, anchor={a})\n"
        f"CONSTRAINT_ON(target={e}, anchor={a})\n"
        f"SET_TARGET({t})\n"
    )
    return program, targets[p].id, {a: anchors[p].id, e: f"{_slug(spec.extra_label)}_0"}


_BUILDERS = {"beside": _beside, "row_left": _row_left, "cluster": _cluster, "shared_anchor": _shared_anchor}


def _certify(spec: SynthSpec, scene: Scene, program: str, target: str, anchors: dict, th: Thresholds) -> bool:
    csp, _ = compile_program(program, strict=True)
    sols = brute_force_solutions(csp, scene, th)
    if brute_force_target(csp, scene, th) != target:
        return False
    if spec.pattern == "cluster":
        # The planted pair must be one of several solutions.
        return len(sols) > 1
    expected = tuple(sorted({**anchors, csp.target: target}.items()))
    return sols == {expected}


def synth_scene(seed: int, spec: SynthSpec, thresholds: Thresholds | None = None) -> SynthResult:
    """Build a certified synthetic scene; identical seeds give identical scenes.

    Raises:
        SynthError: when no certified layout is found within
            `spec.max_attempts` tries (e.g. too many boxes for the room).
    """
    th = thresholds or Thresholds()
    rng = random.Random(seed)
    for _ in range(spec.max_attempts):
        room = _Room(rng, spec)
        try:
            program, target, anchors = _BUILDERS[spec.pattern](room, th)
            _place_clutter(room)
        except _Retry:
            continue
        scene = room.scene(f"synth_{spec.pattern}_{seed}")
        if _certify(spec, scene, program, target, anchors, th):
            return SynthResult(scene, program, target, anchors, spec.target_label)
    raise SynthError(f"could not build a {spec.pattern!r} scene in {spec.max_attempts} attempts")


def global_local_fixtures(n: int = 20) -> list[SynthResult]:
    """Half shared-anchor rooms (local grounding fails), half beside rooms."""
    out = []
    for i in range(n):
        if i % 2 == 0:
            spec = SynthSpec(pattern="shared_anchor", target_label="chair", anchor_label="table",
                             extra_label="lamp", planted_index=1, clutter={"cabinet": 2})
        else:
            spec = SynthSpec(pattern="beside", target_label="desk", anchor_label="bed",
                             n_targets=3, planted_index=i % 3, clutter={"cabinet": 2})
        out.append(synth_scene(1000 + i, spec))
    return out


def heuristic_fixtures(n: int = 50) -> list[SynthResult]:
    spec = SynthSpec(pattern="cluster", target_label="chair", anchor_label="table", n_decoys=3,
                     room_size=(14.0, 14.0))
    return [synth_scene(2000 + i, spec) for i in range(n)]


def load_spec(path) -> SynthSpec:
    with open(path, encoding="utf-8") as fh:
        return SynthSpec.from_dict(json.load(fh))
