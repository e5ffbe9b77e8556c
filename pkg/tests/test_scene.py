import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cspground.scene import (
    ROOM_CENTER_ID,
    ROOM_CORNER_IDS,
    Aabb,
    Instance,
    Point3,
    SceneError,
    domain_of,
    dump_scene,
    instance_center,
    load_scene,
    make_scene,
    normalize_label,
    scene_center,
)

from helpers import box


def doc(*instances, scene_id="s0"):
    return json.dumps({"id": scene_id, "instances": list(instances)}).encode()


def test_single_instance_scene():
    scene = load_scene(io.BytesIO(doc({"id": "a", "label": "chair", "bbox": [[0, 0, 0], [1, 1, 1]]})))
    assert len(scene.real_instances) == 1
    assert scene.scene_center == Point3(0.5, 0.5, 0.5)
    virtual = [i.id for i in scene.instances if i.virtual]
    assert virtual == [ROOM_CENTER_ID, *ROOM_CORNER_IDS]


def test_points_only_instance_gets_envelope():
    scene = load_scene(doc({"id": "a", "label": "chair", "points": [[0, 0, 0], [2, 4, 2]]}))
    assert scene.get("a").bbox == Aabb(Point3(0, 0, 0), Point3(2, 4, 2))


@pytest.mark.parametrize(
    "payload, message",
    [
        (doc(), "empty scene"),
        (b"{not json", "malformed"),
        (doc({"id": "a", "label": "chair"}), "needs 'bbox' or 'points'"),
        (doc({"id": "a", "label": "x", "bbox": [[0, 0, 0], [1, 1, 1]]},
             {"id": "a", "label": "y", "bbox": [[0, 0, 0], [1, 1, 1]]}), "duplicate"),
        (doc({"id": "a", "label": "x", "bbox": [[1, 0, 0], [0, 1, 1]]}), "min"),
        (doc({"id": "a", "label": "x", "bbox": [[0, 0, 0], [3, 3, 3]], "points": [[0, 0, 0], [1, 1, 1]]}),
         "envelope"),
        (doc({"id": "a", "label": "  ", "bbox": [[0, 0, 0], [1, 1, 1]]}), "empty label"),
    ],
)
def test_malformed_documents(payload, message):
    with pytest.raises(SceneError, match=message):
        load_scene(payload)


@pytest.mark.parametrize(
    "lo, hi, center",
    [
        ((0, 0, 0), (2, 2, 2), (1, 1, 1)),
        ((-1, -1, 0), (1, 1, 0), (0, 0, 0)),
        ((0, 0, 0), (1, 3, 5), (0.5, 1.5, 2.5)),
    ],
)
def test_instance_center(lo, hi, center):
    assert instance_center(Instance("a", "x", Aabb(Point3(*lo), Point3(*hi)))) == Point3(*center)


def test_domain_of():
    scene = make_scene("s", [box("b", "chair", (0, 0, 0)), box("a", "chair", (1, 0, 0)),
                             box("c", "table", (2, 0, 0))])
    assert [i.id for i in domain_of(scene, {"chair"})] == ["a", "b"]
    assert [i.id for i in domain_of(scene, {"desk", "table"})] == ["c"]
    assert domain_of(scene, {"sofa"}) == []
    assert [i.id for i in domain_of(scene, {"  Chair "})] == ["a", "b"]
    assert [i.id for i in domain_of(scene, {"room center"})] == [ROOM_CENTER_ID]


def test_scene_center_ignores_virtual_instances():
    scene = make_scene("s", [box("a", "x", (0, 0, 0), (2, 2, 2)), box("b", "x", (4, 0, 0), (2, 2, 2))])
    assert scene_center(scene) == Point3(2, 0, 0)
    rebuilt = make_scene("s", scene.instances)
    assert rebuilt.scene_center == scene.scene_center


def test_room_corners_sit_on_the_envelope_floor():
    scene = make_scene("s", [box("a", "x", (1, 1, 1), (2, 2, 2))])
    corners = [scene.get(i).center for i in ROOM_CORNER_IDS]
    assert {(p.x, p.y) for p in corners} == {(0, 0), (2, 0), (2, 2), (0, 2)}
    assert all(p.z == 0 for p in corners)


def test_label_normalization():
    assert normalize_label("  Coffee   TABLE ") == "coffee table"


def test_dump_and_load_round_trip():
    scene = make_scene("s", [box("a", "chair", (0, 0, 0)), box("b", "table", (1, 2, 3), (1, 2, 3))])
    again = load_scene(dump_scene(scene))
    assert again.instances == scene.instances
    assert again.id == scene.id


coords = st.floats(-50, 50, allow_nan=False)


@given(st.lists(st.tuples(coords, coords, coords), min_size=1, max_size=20))
def test_points_envelope_property(points):
    bbox = Aabb.from_points([Point3(*p) for p in points])
    for p in points:
        assert bbox.contains(Point3(*p))
    assert bbox.min_corner == Point3(*(min(p[k] for p in points) for k in range(3)))
    assert bbox.max_corner == Point3(*(max(p[k] for p in points) for k in range(3)))
