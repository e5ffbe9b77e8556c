import json
import random

import pytest

from cspground.geometry import RelationKind, ScoreFunc, Thresholds
from cspground.oracle import brute_force_minmax, brute_force_solutions, brute_force_target
from cspground.program import Csp, CspConstraint, CspVariable, Polarity, compile_program
from cspground.scene import Aabb, Instance, make_scene
from cspground.solver import (
    Engine,
    Heuristic,
    SolverConfig,
    SolverError,
    Status,
    apply_minmax,
    check_solution,
    enumerate_valid,
    prefilter_minmax,
    select_solution,
    solve,
    solve_local,
)

from helpers import (
    BESIDE_PROGRAM,
    COUNTING_PROGRAM,
    CUP_PROGRAM,
    NEGATION_PROGRAM,
    box,
    counting_scene,
    cups_scene,
    desk_bed_scene,
    negation_scene,
    random_csp,
    random_scene,
    scene_of,
    solution_set,
)

R = RelationKind
TH = Thresholds()


def var(name, *labels):
    return CspVariable(name, frozenset(labels))


def con(kind, target, *anchors, reference=None, score=None):
    return CspConstraint(kind, target, tuple(anchors), reference, score)


# --- check_solution ---------------------------------------------------------------


def test_check_solution_examples():
    scene = scene_of(box("a", "x", (1, 1, 0)), box("b", "x", (1.1, 1, 0)), box("c", "x", (4, 1, 0)),
                     box("d", "x", (2, 1, 0)))
    assert check_solution({"T": "a", "A": "b"}, con(R.NEAR, "T", "A"), scene, TH)
    more = con(R.MORE, "T", "A", reference="Q", score=ScoreFunc.DISTANCE)
    assert check_solution({"T": "c", "Q": "d", "A": "a"}, more, scene, TH)
    less = con(R.LESS, "T", reference="Q", score=ScoreFunc.SIZE)
    assert not check_solution({"T": "a", "Q": "b"}, less, scene, TH)
    with pytest.raises(SolverError, match="unassigned"):
        check_solution({"T": "a"}, con(R.NEAR, "T", "A"), scene, TH)


# --- enumeration ------------------------------------------------------------------


def test_beside_scene_has_one_solution():
    csp, _ = compile_program(BESIDE_PROGRAM)
    assert enumerate_valid(csp, desk_bed_scene(), TH) == [{"BED": "bed_0", "DESK": "desk_0"}]


def test_nightstand_without_trash_can():
    scene = scene_of(
        box("nightstand_a", "nightstand", (1, 1, 0.3)),
        box("trash_can_0", "trash can", (1.6, 1, 0.2)),
        box("nightstand_b", "nightstand", (8, 8, 0.3)),
    )
    csp = Csp((var("N", "nightstand"), CspVariable("T", frozenset({"trash can"}), Polarity.NEGATIVE)),
              (con(R.BESIDE, "T", "N"),), "N")
    assert enumerate_valid(csp, scene, TH) == [{"N": "nightstand_b"}]


def test_unconstrained_variable_enumerates_its_domain():
    scene = scene_of(*(box(f"c{k}", "chair", (k, 0, 0)) for k in range(3)))
    csp = Csp((var("C", "chair"),), (), "C")
    assert [s["C"] for s in enumerate_valid(csp, scene, TH)] == ["c0", "c1", "c2"]


def test_all_different():
    scene = scene_of(*(box(f"c{k}", "chair", (k, 0, 0)) for k in range(3)))
    csp = Csp((var("A", "chair"), var("B", "chair")), (), "A")
    sols = enumerate_valid(csp, scene, TH)
    assert len(sols) == 6 and all(s["A"] != s["B"] for s in sols)


def test_enumeration_order_is_lexicographic():
    scene = scene_of(*(box(f"c{k}", "chair", (k, 0, 0)) for k in range(3)))
    csp = Csp((var("B", "chair"), var("A", "chair")), (), "A")
    sols = enumerate_valid(csp, scene, TH)
    keys = [(s["A"], s["B"]) for s in sols]
    assert keys == sorted(keys)


def test_truncation_is_reported():
    scene = scene_of(*(box(f"c{k}", "chair", (k, 0, 0)) for k in range(5)))
    csp = Csp((var("A", "chair"), var("B", "chair")), (), "A")
    assert len(enumerate_valid(csp, scene, TH, max_solutions=7)) == 7
    result = solve(csp, scene, SolverConfig(max_solutions=7))
    assert any("truncated" in d.message for d in result.diagnostics)


def test_matches_oracle_on_random_instances():
    for seed in range(300):
        rng = random.Random(seed)
        scene, csp = random_scene(rng, rng.randint(1, 8)), random_csp(rng)
        assert solution_set(enumerate_valid(csp, scene, TH)) == brute_force_solutions(csp, scene, TH), seed


def test_solved_results_satisfy_every_constraint_and_match_the_oracle_target():
    checked = 0
    for seed in range(300):
        rng = random.Random(10_000 + seed)
        scene, csp = random_scene(rng, rng.randint(2, 8)), random_csp(rng, allow_minmax=True)
        result = solve(csp, scene)
        assert result.target_instance == brute_force_target(csp, scene, TH), seed
        if not result.solved:
            continue
        checked += 1
        full = {**result.anchor_assignment, csp.target: result.target_instance}
        assert len(set(full.values())) == len(full)
        assert set(full) == {v.name for v in csp.normal_variables}
        for c in csp.filter_constraints:
            if not set(c.variables) & csp.negative_names:
                assert check_solution(full, c, scene, TH)
    assert checked > 50


def test_adding_a_constraint_never_adds_solutions():
    for seed in range(200):
        rng = random.Random(20_000 + seed)
        scene, csp = random_scene(rng, rng.randint(2, 8)), random_csp(rng)
        if not csp.constraints:
            continue
        fewer = Csp(csp.variables, csp.constraints[:-1], csp.target)
        assert solution_set(enumerate_valid(csp, scene, TH)) <= solution_set(enumerate_valid(fewer, scene, TH))


# --- min/max ----------------------------------------------------------------------


def test_minmax_applied_after_spatial_filtering():
    csp, _ = compile_program(CUP_PROGRAM)
    scene = cups_scene()
    spatial = enumerate_valid(csp, scene, TH)
    assert sorted(s["CUP"] for s in spatial) == ["cup_1", "cup_2"]
    assert [s["CUP"] for s in apply_minmax(spatial, csp, scene)] == ["cup_2"]
    assert solve(csp, scene).target_instance == "cup_2"


def test_minmax_first_picks_the_wrong_cup():
    csp, _ = compile_program(CUP_PROGRAM)
    scene = cups_scene()
    assert [i.id for i in prefilter_minmax(csp, scene)["CUP"]] == ["cup_0"]
    result = solve(csp, scene, SolverConfig(minmax_first=True))
    assert result.status is Status.UNSATISFIABLE


def test_minmax_disabled_keeps_both_cups():
    csp, _ = compile_program(CUP_PROGRAM)
    result = solve(csp, cups_scene(), SolverConfig(minmax_enabled=False, heuristic=Heuristic.FIRST))
    assert result.solution_count == 2


def test_minmax_groups_by_anchor_and_keeps_ties():
    scene = scene_of(
        box("t0", "table", (1, 1, 0)), box("t1", "table", (8, 8, 0)),
        box("c0", "cup", (1.5, 1, 0)), box("c1", "cup", (1.75, 1, 0)), box("c2", "cup", (8.5, 8, 0)),
    )
    csp = Csp((var("C", "cup"), var("T", "table")),
              (con(R.NEAR, "C", "T"), con(R.MIN_OF, "C", "T", score=ScoreFunc.DISTANCE)), "C")
    kept = apply_minmax(enumerate_valid(csp, scene, Thresholds(near_distance=1.0)), csp, scene)
    assert sorted((s["T"], s["C"]) for s in kept) == [("t0", "c0"), ("t1", "c2")]

    ties = Csp(csp.variables, (con(R.NEAR, "C", "T"), con(R.MAX_OF, "C", score=ScoreFunc.SIZE)), "C")
    kept = apply_minmax(enumerate_valid(ties, scene, Thresholds(near_distance=1.0)), ties, scene)
    assert sorted(s["C"] for s in kept) == ["c0", "c1", "c2"]


def test_minmax_matches_oracle():
    for seed in range(300):
        rng = random.Random(30_000 + seed)
        scene, csp = random_scene(rng, rng.randint(2, 8)), random_csp(rng, allow_minmax=True)
        sols = enumerate_valid(csp, scene, TH)
        ours = apply_minmax(sols, csp, scene)
        theirs = brute_force_minmax(brute_force_solutions(csp, scene, TH), csp, scene)
        assert solution_set(ours) == solution_set(theirs), seed


def test_single_solution_survives_minmax():
    csp, _ = compile_program(CUP_PROGRAM)
    sol = [{"CUP": "cup_1", "TABLE": "table_0"}]
    assert apply_minmax(sol, csp, cups_scene()) == sol


# --- heuristics -------------------------------------------------------------------


def two_solutions():
    scene = scene_of(box("a", "x", (0, 0, 0)), box("b", "x", (1, 0, 0)), box("c", "x", (4, 0, 0)))
    return [{"P": "a", "Q": "b"}, {"P": "a", "Q": "c"}], scene


def test_heuristics():
    sols, scene = two_solutions()
    assert select_solution(sols, Heuristic.MIN_AVG_DISTANCE, scene) == sols[0]
    assert select_solution(sols, Heuristic.MAX_AVG_DISTANCE, scene) == sols[1]
    assert select_solution(sols, Heuristic.FIRST, scene) == sols[0]
    picks = {select_solution(sols, Heuristic.RANDOM, scene, seed=7)["Q"] for _ in range(5)}
    assert len(picks) == 1
    with pytest.raises(SolverError):
        select_solution([], Heuristic.FIRST, scene)
    with pytest.raises(SolverError):
        select_solution(sols, Heuristic.RANDOM, scene)


def test_single_variable_solutions_tie_at_zero():
    _, scene = two_solutions()
    sols = [{"P": "c"}, {"P": "a"}]
    assert select_solution(sols, Heuristic.MIN_AVG_DISTANCE, scene) == {"P": "c"}
    assert select_solution(sols, Heuristic.MAX_AVG_DISTANCE, scene) == {"P": "c"}


def test_random_requires_seed():
    with pytest.raises(ValueError):
        SolverConfig(heuristic=Heuristic.RANDOM)


def scaled(scene, k):
    return make_scene(scene.id, [
        Instance(i.id, i.label, Aabb(i.bbox.min_corner.scale(k), i.bbox.max_corner.scale(k)))
        for i in scene.real_instances
    ])


def test_min_distance_choice_is_scale_invariant():
    for seed in range(100):
        rng = random.Random(40_000 + seed)
        scene, csp = random_scene(rng, rng.randint(2, 8)), random_csp(rng)
        base = solve(csp, scene, SolverConfig(thresholds=TH))
        for k in (0.5, 3.0):
            big = solve(csp, scaled(scene, k), SolverConfig(thresholds=TH.scaled(k)))
            assert (big.target_instance, big.anchor_assignment) == (base.target_instance, base.anchor_assignment)


# --- solve ------------------------------------------------------------------------


def test_counting_picks_the_third_chair():
    csp, _ = compile_program(COUNTING_PROGRAM, strict=True)
    result = solve(csp, counting_scene())
    assert result.target_instance == "chair_2"
    assert result.anchor_assignment == {"CHAIR_0": "chair_0", "CHAIR_1": "chair_1", "TABLE_0": "table_0"}


def test_negation_avoids_the_fridge():
    csp, _ = compile_program(NEGATION_PROGRAM, strict=True)
    assert solve(csp, negation_scene()).target_instance == "trash_can_1"


def test_empty_domain_is_unsatisfiable():
    csp = Csp((var("S", "sofa"),), (), "S")
    result = solve(csp, desk_bed_scene())
    assert result.status is Status.UNSATISFIABLE and result.target_instance is None
    assert any("empty domain" in d.message for d in result.diagnostics)


def test_result_document_is_stable():
    csp, _ = compile_program(CUP_PROGRAM)
    docs = {json.dumps(solve(csp, cups_scene()).to_dict(), sort_keys=True) for _ in range(3)}
    assert len(docs) == 1
    doc = json.loads(docs.pop())
    assert doc["status"] == "SOLVED" and doc["target_bbox"] is not None
    assert {d["stage"] for d in doc["diagnostics"]} >= {"enumerate", "minmax", "select"}


# --- local baseline ---------------------------------------------------------------


def test_local_processes_constraints_in_dependency_order():
    scene = scene_of(box("a", "x", (1, 1, 0)), box("b", "y", (2, 1, 0)), box("c", "z", (3, 1, 0)))
    text = """
    A = DEF_VAR(labels=["x"])
    B = DEF_VAR(labels=["y"])
    C = DEF_VAR(labels=["z"])
    NEAR(target=A, anchor=B)
    NEAR(target=B, anchor=C)
    SET_TARGET(A)
    """
    csp, _ = compile_program(text)
    result = solve_local(csp, scene)
    order = [d for d in result.diagnostics if "order" in d.message][0].message
    assert order.endswith("6, 5")
    assert result.target_instance == "a"


def test_local_reports_cycles():
    scene = scene_of(box("a", "x", (1, 1, 0)), box("b", "y", (2, 1, 0)))
    text = """
    A = DEF_VAR(labels=["x"])
    B = DEF_VAR(labels=["y"])
    LEFT(target=A, anchor=B)
    LEFT(target=B, anchor=A)
    SET_TARGET(A)
    """
    csp, _ = compile_program(text)
    result = solve_local(csp, scene)
    assert result.status is Status.UNSATISFIABLE
    assert "cyclic constraints" in result.diagnostics[-1].message
    assert solve(csp, scene, SolverConfig(engine=Engine.LOCAL)).status is Status.UNSATISFIABLE


def test_local_and_global_differ_on_shared_anchor():
    # Two chairs, each near its own table; only table_1 carries a lamp.
    scene = scene_of(
        box("table_0", "table", (2, 2, 0.4)), box("chair_0", "chair", (2.8, 2, 0.4)),
        box("table_1", "table", (8, 8, 0.4)), box("chair_1", "chair", (8.8, 8, 0.4)),
        box("lamp_0", "lamp", (8, 8, 1.0), (0.2, 0.2, 0.4)),
    )
    text = """
    CHAIR = DEF_VAR(labels=["chair"])
    TABLE = DEF_VAR(labels=["table"])
    LAMP = DEF_VAR(labels=["lamp"])
    NEAR(target=CHAIR, anchor=TABLE)
    ON(target=LAMP, anchor=TABLE)
    SET_TARGET(CHAIR)
    """
    csp, _ = compile_program(text)
    assert solve(csp, scene).target_instance == "chair_1"
    assert solve_local(csp, scene).target_instance == "chair_0"
