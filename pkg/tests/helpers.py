"""Scene builders and hand-made fixtures shared by the test modules."""

from __future__ import annotations

import random
from pathlib import Path

from cspground.geometry import RelationKind, ScoreFunc
from cspground.program import Csp, CspConstraint, CspVariable, Polarity
from cspground.scene import Aabb, Instance, Point3, make_scene

DATA = Path(__file__).parent / "data"


def box(iid, label, center, size=(0.5, 0.5, 0.5)):
    c = Point3(*map(float, center))
    h = Point3(*(s / 2 for s in size))
    return Instance(iid, label, Aabb(c - h, c + h))


def floor(w=10.0, d=10.0):
    return Instance("floor_0", "floor", Aabb(Point3(0, 0, -0.1), Point3(w, d, 0)))


def scene_of(*instances, scene_id="s", room=(10.0, 10.0)):
    return make_scene(scene_id, [floor(*room), *instances])


# --- hand-built scenes with a known answer --------------------------------------

BESIDE_PROGRAM = """\
DESK = DEFINE_VARIABLE(labels=["desk"])
BED = DEFINE_VARIABLE(labels=["bed"])
CONSTRAINT_BESIDE(target=DESK, anchor=BED)
SET_TARGET(DESK)
"""


def desk_bed_scene():
    return scene_of(
        box("bed_0", "bed", (3, 3, 0.3), (2, 1.5, 0.6)),
        box("desk_0", "desk", (4.5, 3, 0.4), (0.8, 0.6, 0.8)),
        box("desk_1", "desk", (8.5, 8.5, 0.4), (0.8, 0.6, 0.8)),
    )


CUP_PROGRAM = """\
CUP = DEFINE_VARIABLE(labels=["cup"])
TABLE = DEFINE_VARIABLE(labels=["table"])
CONSTRAINT_ON(target=CUP, anchor=TABLE)
CONSTRAINT_MAX_OF(target=CUP, score_func="size")
SET_TARGET(CUP)
"""


def cups_scene():
    """A big cup on the shelf, a small and a medium cup on the table."""
    return scene_of(
        box("shelf_0", "shelf", (1, 8, 0.9), (1.0, 0.4, 1.8)),
        box("cup_0", "cup", (1, 8, 1.95), (0.3, 0.3, 0.3)),
        box("table_0", "table", (7, 3, 0.4), (1.2, 0.8, 0.8)),
        box("cup_1", "cup", (6.8, 3, 0.85), (0.08, 0.08, 0.1)),
        box("cup_2", "cup", (7.2, 3, 0.88), (0.15, 0.15, 0.16)),
    )


COUNTING_PROGRAM = """\
CHAIR_0 = DEFINE_VARIABLE(labels=["chair"])
CHAIR_1 = DEFINE_VARIABLE(labels=["chair"])
CHAIR_2 = DEFINE_VARIABLE(labels=["chair"])
TABLE_0 = DEFINE_VARIABLE(labels=["table"])
CONSTRAINT_LEFT(target=CHAIR_0, anchor=TABLE_0)
CONSTRAINT_LEFT(target=CHAIR_1, anchor=CHAIR_0)
CONSTRAINT_LEFT(target=CHAIR_2, anchor=CHAIR_1)
SET_TARGET(CHAIR_2)
"""


def counting_scene():
    """Three chairs in a row on the table's left (seen from the room
    center, the table sits at the near wall) and one on its right."""
    return scene_of(
        box("table_0", "table", (5, 2, 0.4), (1.0, 0.8, 0.8)),
        box("chair_0", "chair", (6, 2, 0.4)),
        box("chair_1", "chair", (7, 2, 0.4)),
        box("chair_2", "chair", (8, 2, 0.4)),
        box("chair_3", "chair", (3, 2, 0.4)),
    )


NEGATION_PROGRAM = """\
TRASH_CAN = DEFINE_VARIABLE(labels=["trash can"])
FRIDGE_NEG = DEFINE_NEGATIVE_VARIABLE(labels=["refrigerator"])
CONSTRAINT_BESIDE(target=TRASH_CAN, anchor=FRIDGE_NEG)
SET_TARGET(TRASH_CAN)
"""


def negation_scene():
    return scene_of(
        box("refrigerator_0", "refrigerator", (1, 1, 0.9), (0.8, 0.8, 1.8)),
        box("trash_can_0", "trash can", (2, 1, 0.3), (0.4, 0.4, 0.6)),
        box("table_0", "table", (8, 8, 0.4), (1.2, 0.8, 0.8)),
        box("trash_can_1", "trash can", (8.9, 8, 0.3), (0.4, 0.4, 0.6)),
    )


# --- random CSPs ------------------------------------------------------------------

_LABELS = ("a", "b", "c")
_SPATIAL = [k for k in RelationKind if k.is_spatial]
_SCORES = [f for f in ScoreFunc]


def random_scene(rng: random.Random, n_instances: int):
    insts = []
    for k in range(n_instances):
        c = (rng.uniform(0, 6), rng.uniform(0, 6), rng.uniform(0, 2))
        size = tuple(rng.uniform(0.2, 1.5) for _ in range(3))
        insts.append(box(f"i{k}", rng.choice(_LABELS), c, size))
    return make_scene("rand", insts)


def random_csp(rng: random.Random, max_normal=4, max_constraints=5, allow_minmax=False) -> Csp:
    n_norm = rng.randint(1, max_normal)
    variables = [
        CspVariable(f"V{k}", frozenset(rng.sample(_LABELS, rng.randint(1, 2)))) for k in range(n_norm)
    ]
    negs = []
    if rng.random() < 0.5:
        negs = [CspVariable("N0", frozenset(rng.sample(_LABELS, 1)), Polarity.NEGATIVE)]
    variables += negs
    normals = [v.name for v in variables if not v.negative]
    constraints = []
    for _ in range(rng.randint(0, max_constraints)):
        pool = normals + [v.name for v in negs]
        roll = rng.random()
        if roll < 0.15 and len(normals) >= 2:
            t, r = rng.sample(normals, 2)
            func = rng.choice(_SCORES)
            anchors = ()
            if func.needs_anchor:
                others = [n for n in pool if n not in (t, r)]
                if not others:
                    continue
                anchors = (rng.choice(others),)
            constraints.append(CspConstraint(rng.choice([RelationKind.LESS, RelationKind.MORE]), t, anchors, r, func))
        elif roll < 0.25 and allow_minmax:
            func = rng.choice(_SCORES)
            t = rng.choice(normals)
            anchors = ()
            if func.needs_anchor:
                others = [n for n in normals if n != t]
                if not others:
                    continue
                anchors = (rng.choice(others),)
            constraints.append(CspConstraint(rng.choice([RelationKind.MAX_OF, RelationKind.MIN_OF]), t, anchors,
                                             None, func))
        else:
            kind = rng.choice(_SPATIAL)
            arity = rng.randint(2, 3) if kind is RelationKind.BETWEEN else 1
            if len(pool) < arity + 1:
                continue
            names = rng.sample(pool, arity + 1)
            if sum(n in {v.name for v in negs} for n in names) > 1:
                continue
            constraints.append(CspConstraint(kind, names[0], tuple(names[1:])))
    target = rng.choice(normals)
    return Csp(tuple(variables), tuple(constraints), target)


def solution_set(solutions):
    return {tuple(sorted(s.items())) for s in solutions}
