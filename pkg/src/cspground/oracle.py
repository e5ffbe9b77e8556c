"""Exhaustive reference solver.

Deliberately naive: it walks the full cartesian product of the domains and
shares nothing with the backtracking solver beyond the geometric predicates.
Used by the property suites and by the synthetic scene generator to certify
planted ground truth.
"""

from __future__ import annotations

import itertools
import math

from .geometry import RelationKind, Thresholds, eval_relation, eval_score
from .program import Csp
from .scene import Scene


def _holds(con, values: dict, scene: Scene, th: Thresholds) -> bool:
    inst = {name: scene.get(iid) for name, iid in values.items()}
    if con.kind.is_spatial:
        return eval_relation(con.kind, inst[con.target], [inst[a] for a in con.anchors], scene, th)
    anchor = inst[con.anchors[0]] if con.anchors else None
    t = eval_score(con.score_func, inst[con.target], scene, anchor)
    r = eval_score(con.score_func, inst[con.reference], scene, anchor)
    if con.kind is RelationKind.LESS:
        return t < r
    return t > r


def brute_force_solutions(csp: Csp, scene: Scene, th: Thresholds) -> set[tuple[tuple[str, str], ...]]:
    """Every valid assignment as a sorted tuple of (variable, instance id)."""
    normals = [v.name for v in csp.variables if not v.negative]
    negatives = {v.name for v in csp.variables if v.negative}
    dom = {v.name: [i.id for i in scene.instances if i.label in v.label_set] for v in csp.variables}
    found = set()
    for combo in itertools.product(*(dom[n] for n in normals)):
        if len(set(combo)) < len(combo):
            continue
        values = dict(zip(normals, combo))
        ok = True
        for con in csp.constraints:
            if con.kind.is_minmax:
                continue
            involved = [n for n in con.variables if n in negatives]
            if involved:
                neg = involved[0]
                free = [iid for iid in dom[neg] if iid not in combo]
                if any(_holds(con, {**values, neg: iid}, scene, th) for iid in free):
                    ok = False
            elif not _holds(con, values, scene, th):
                ok = False
            if not ok:
                break
        if ok:
            found.add(tuple(sorted(values.items())))
    return found


def brute_force_minmax(solutions, csp: Csp, scene: Scene):
    """Min/max filtering over a solution set, one constraint after another."""
    sols = [dict(s) for s in sorted(solutions)]
    for con in csp.constraints:
        if not con.kind.is_minmax:
            continue
        def score(s):
            anchor = scene.get(s[con.anchors[0]]) if con.anchors else None
            return eval_score(con.score_func, scene.get(s[con.target]), scene, anchor)
        kept = []
        for s in sols:
            peers = [p for p in sols if all(p[a] == s[a] for a in con.anchors)]
            extreme = max(map(score, peers)) if con.kind is RelationKind.MAX_OF else min(map(score, peers))
            if score(s) == extreme:
                kept.append(s)
        sols = kept
    return sols


def brute_force_target(csp: Csp, scene: Scene, th: Thresholds) -> str | None:
    """Target chosen by the full pipeline with the minimum-average-distance
    heuristic, recomputed from scratch."""
    sols = brute_force_minmax(brute_force_solutions(csp, scene, th), csp, scene)
    if not sols:
        return None

    def avg(s):
        pts = [scene.get(s[k]).center for k in sorted(s)]
        ds = [math.dist(a, b) for a, b in itertools.combinations(pts, 2)]
        return math.fsum(ds) / len(ds) if ds else 0.0

    best = min(sols, key=avg)  # sols are in lexicographic order, min keeps the first
    return best[csp.target]
