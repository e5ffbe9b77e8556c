"""Global CSP solving by backtracking, min/max post-filtering and solution
selection, plus the one-constraint-at-a-time local baseline."""

from __future__ import annotations

import enum
import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .geometry import RelationKind, ScoreFunc, Thresholds, eval_relation, eval_score
from .program import Csp, CspConstraint
from .scene import Aabb, Instance, Scene, domain_of

Assignment = dict  # variable name -> instance id, normal variables only


class SolverError(RuntimeError):
    pass


class Heuristic(enum.Enum):
    MIN_AVG_DISTANCE = "min-avg-distance"
    MAX_AVG_DISTANCE = "max-avg-distance"
    RANDOM = "random"
    FIRST = "first"


class Engine(enum.Enum):
    GLOBAL = "global"
    LOCAL = "local"


class Status(enum.Enum):
    SOLVED = "SOLVED"
    UNSATISFIABLE = "UNSATISFIABLE"
    INVALID_PROGRAM = "INVALID_PROGRAM"


@dataclass(frozen=True)
class SolverConfig:
    thresholds: Thresholds = field(default_factory=Thresholds)
    heuristic: Heuristic = Heuristic.MIN_AVG_DISTANCE
    seed: int | None = None
    engine: Engine = Engine.GLOBAL
    minmax_enabled: bool = True
    # Apply min/max constraints to the domains before spatial filtering.
    # Only useful to demonstrate why min/max must come last.
    minmax_first: bool = False
    max_solutions: int = 100_000

    def __post_init__(self):
        if self.heuristic is Heuristic.RANDOM and self.seed is None:
            raise ValueError("RANDOM heuristic needs an explicit seed")
        if self.max_solutions < 1:
            raise ValueError("max_solutions must be >= 1")


@dataclass(frozen=True)
class Diagnostic:
    stage: str
    message: str
    count: int | None = None

    def to_dict(self) -> dict:
        return {"stage": self.stage, "message": self.message, "count": self.count}


@dataclass
class GroundingResult:
    status: Status
    target_instance: str | None = None
    target_bbox: Aabb | None = None
    anchor_assignment: dict[str, str] = field(default_factory=dict)
    solution_count: int = 0
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def solved(self) -> bool:
        return self.status is Status.SOLVED

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "target_instance": self.target_instance,
            "target_bbox": self.target_bbox.to_list() if self.target_bbox else None,
            "anchor_assignment": dict(sorted(self.anchor_assignment.items())),
            "solution_count": self.solution_count,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }


# ---------------------------------------------------------------- checking


def _score(con: CspConstraint, var: str, assign: Mapping[str, str], scene: Scene) -> float:
    anchor = scene.get(assign[con.anchors[0]]) if con.anchors else None
    return eval_score(con.score_func, scene.get(assign[var]), scene, anchor)


def check_solution(assign: Mapping[str, str], con: CspConstraint, scene: Scene, th: Thresholds) -> bool:
    """Check one spatial or comparison constraint against a full assignment."""
    missing = [n for n in con.variables if n not in assign]
    if missing:
        raise SolverError(f"unassigned variable(s) {', '.join(missing)} in {con.kind.name} constraint")
    if con.kind.is_spatial:
        return eval_relation(
            con.kind, scene.get(assign[con.target]), [scene.get(assign[a]) for a in con.anchors], scene, th,
        )
    if con.kind.is_comparison:
        t = _score(con, con.target, assign, scene)
        r = _score(con, con.reference, assign, scene)
        return t < r if con.kind is RelationKind.LESS else t > r
    raise SolverError(f"{con.kind.name} is a min/max constraint; use apply_minmax")


def _passes(assign: dict, con: CspConstraint, csp: Csp, scene: Scene, th: Thresholds,
            domains: Mapping[str, list[Instance]]) -> bool:
    neg = [n for n in con.variables if n in csp.negative_names]
    if not neg:
        return check_solution(assign, con, scene, th)
    name = neg[0]
    used = set(assign.values())
    for cand in domains[name]:
        if cand.id in used:
            continue
        assign[name] = cand.id
        try:
            if check_solution(assign, con, scene, th):
                return False
        finally:
            del assign[name]
    return True


# ---------------------------------------------------------------- global solver


def resolve_domains(csp: Csp, scene: Scene) -> dict[str, list[Instance]]:
    return {v.name: domain_of(scene, v.label_set) for v in csp.variables}


def _enumerate(csp: Csp, scene: Scene, th: Thresholds, cap: int,
               domains: Mapping[str, list[Instance]] | None = None) -> tuple[list[Assignment], bool]:
    domains = dict(domains or resolve_domains(csp, scene))
    order = sorted(v.name for v in csp.normal_variables)
    depth_of = {name: i for i, name in enumerate(order)}
    last = len(order) - 1
    # Each constraint is checked as soon as its normal variables are assigned;
    # constraints with a negative variable wait for the full assignment so the
    # negative candidates can exclude every used instance.
    checks: list[list[CspConstraint]] = [[] for _ in order]
    for con in csp.filter_constraints:
        if set(con.variables) & csp.negative_names:
            checks[last].append(con)
        else:
            checks[max(depth_of[n] for n in con.variables)].append(con)

    solutions: list[Assignment] = []
    assign: dict[str, str] = {}
    used: set[str] = set()

    def backtrack(d: int) -> bool:
        if d == len(order):
            solutions.append({n: assign[n] for n in order})
            return len(solutions) >= cap
        name = order[d]
        for inst in domains[name]:
            if inst.id in used:
                continue
            assign[name] = inst.id
            used.add(inst.id)
            if all(_passes(assign, con, csp, scene, th, domains) for con in checks[d]):
                if backtrack(d + 1):
                    return True
            used.discard(inst.id)
            del assign[name]
        return False

    if not order:
        return [], False
    truncated = backtrack(0)
    return solutions, truncated


def enumerate_valid(csp: Csp, scene: Scene, th: Thresholds, max_solutions: int = 100_000) -> list[Assignment]:
    """All all-different assignments of the normal variables that satisfy
    every spatial and comparison constraint, in lexicographic order of the
    instance ids taken by variables sorted by name.

    A constraint involving a negative variable rejects the assignment when
    any unused instance of that variable's domain satisfies it.
    """
    return _enumerate(csp, scene, th, max_solutions)[0]


def _minmax_pick(scored: list[tuple[float, object]], kind: RelationKind) -> list:
    best = max(s for s, _ in scored) if kind is RelationKind.MAX_OF else min(s for s, _ in scored)
    return [item for s, item in scored if s == best]


def apply_minmax(solutions: Sequence[Assignment], csp: Csp, scene: Scene) -> list[Assignment]:
    """Keep, per group of solutions sharing the constraint's anchor
    assignment, only the solutions whose target attains the extreme score.
    Constraints are applied in program order; ties are all kept."""
    current = list(solutions)
    for con in csp.minmax_constraints:
        if not current:
            break
        groups: dict[tuple, list[tuple[float, int]]] = {}
        for idx, sol in enumerate(current):
            key = tuple(sol[a] for a in con.anchors)
            groups.setdefault(key, []).append((_score(con, con.target, sol, scene), idx))
        keep: set[int] = set()
        for scored in groups.values():
            keep.update(_minmax_pick(scored, con.kind))
        current = [sol for idx, sol in enumerate(current) if idx in keep]
    return current


def prefilter_minmax(csp: Csp, scene: Scene, domains: Mapping[str, list[Instance]] | None = None
                     ) -> dict[str, list[Instance]]:
    """Restrict domains by the min/max constraints alone, before any spatial
    filtering. This is the ordering the global solver avoids."""
    domains = {k: list(v) for k, v in (domains or resolve_domains(csp, scene)).items()}
    for con in csp.minmax_constraints:
        cands = domains[con.target]
        if not cands:
            continue
        if con.anchors:
            keep: set[str] = set()
            for a in domains[con.anchors[0]]:
                scored = [(eval_score(con.score_func, t, scene, a), t.id) for t in cands if t.id != a.id]
                if scored:
                    keep.update(_minmax_pick(scored, con.kind))
        else:
            keep = set(_minmax_pick([(eval_score(con.score_func, t, scene), t.id) for t in cands], con.kind))
        domains[con.target] = [t for t in cands if t.id in keep]
    return domains


def average_pairwise_distance(sol: Mapping[str, str], scene: Scene) -> float:
    centers = [scene.get(sol[n]).center for n in sorted(sol)]
    pairs = list(itertools.combinations(centers, 2))
    if not pairs:
        return 0.0
    # fsum is order-independent, so permuted assignments tie exactly.
    return math.fsum(math.dist(a, b) for a, b in pairs) / len(pairs)


def select_solution(solutions: Sequence[Assignment], heuristic: Heuristic, scene: Scene,
                    seed: int | str | None = None) -> Assignment:
    if not solutions:
        raise SolverError("no solutions to select from")
    if heuristic is Heuristic.FIRST:
        return solutions[0]
    if heuristic is Heuristic.RANDOM:
        if seed is None:
            raise SolverError("RANDOM heuristic needs a seed")
        return solutions[random.Random(seed).randrange(len(solutions))]
    scores = [average_pairwise_distance(s, scene) for s in solutions]
    # First occurrence wins ties, so the pick follows enumeration order.
    best = min(scores) if heuristic is Heuristic.MIN_AVG_DISTANCE else max(scores)
    return solutions[scores.index(best)]


def _result(csp: Csp, scene: Scene, chosen: Assignment, count: int, diags: list[Diagnostic]) -> GroundingResult:
    target_id = chosen[csp.target]
    return GroundingResult(
        Status.SOLVED,
        target_id,
        scene.get(target_id).bbox,
        {k: v for k, v in chosen.items() if k != csp.target},
        count,
        diags,
    )


def solve(csp: Csp, scene: Scene, cfg: SolverConfig | None = None, seed: int | str | None = None) -> GroundingResult:
    """Ground the target of `csp`: enumerate valid assignments, apply min/max
    constraints last, then pick one solution with the configured heuristic.

    `seed` overrides `cfg.seed` for the RANDOM heuristic.
    """
    cfg = cfg or SolverConfig()
    if cfg.engine is Engine.LOCAL:
        return solve_local(csp, scene, cfg)
    diags: list[Diagnostic] = []
    domains = resolve_domains(csp, scene)
    for v in csp.normal_variables:
        if not domains[v.name]:
            diags.append(Diagnostic("domains", f"empty domain for {v.name} (labels {sorted(v.label_set)})", 0))
    if diags:
        return GroundingResult(Status.UNSATISFIABLE, diagnostics=diags)

    minmax = cfg.minmax_enabled and bool(csp.minmax_constraints)
    if minmax and cfg.minmax_first:
        domains = prefilter_minmax(csp, scene, domains)
        diags.append(Diagnostic("minmax-prefilter", "domains restricted by min/max before spatial filtering",
                                sum(len(domains[c.target]) for c in csp.minmax_constraints)))

    solutions, truncated = _enumerate(csp, scene, cfg.thresholds, cfg.max_solutions, domains)
    diags.append(Diagnostic("enumerate", "assignments satisfying all spatial/comparison constraints", len(solutions)))
    if truncated:
        diags.append(Diagnostic("enumerate", f"enumeration truncated at {cfg.max_solutions} solutions",
                                cfg.max_solutions))
    if minmax and not cfg.minmax_first:
        solutions = apply_minmax(solutions, csp, scene)
        diags.append(Diagnostic("minmax", "solutions left after min/max constraints", len(solutions)))
    if not solutions:
        return GroundingResult(Status.UNSATISFIABLE, diagnostics=diags)

    chosen = select_solution(solutions, cfg.heuristic, scene, cfg.seed if seed is None else seed)
    diags.append(Diagnostic("select", f"heuristic {cfg.heuristic.value}", len(solutions)))
    return _result(csp, scene, chosen, len(solutions), diags)


# ---------------------------------------------------------------- local baseline


def _filtered_var(con: CspConstraint, csp: Csp) -> str:
    """The normal variable a constraint narrows down in the local solver."""
    if con.target not in csp.negative_names:
        return con.target
    return next(n for n in con.variables if n not in csp.negative_names)


def _local_filter(con: CspConstraint, csp: Csp, scene: Scene, th: Thresholds,
                  cands: dict[str, list[Instance]], domains: Mapping[str, list[Instance]]) -> list[Instance]:
    var = _filtered_var(con, csp)
    others = [n for n in con.variables if n != var and n not in csp.negative_names]

    if con.kind.is_minmax:
        keep: set[str] = set()
        for a in cands[con.anchors[0]] if con.anchors else [None]:
            scored = [(eval_score(con.score_func, t, scene, a), t.id)
                      for t in cands[var] if a is None or t.id != a.id]
            if scored:
                keep.update(_minmax_pick(scored, con.kind))
        return [t for t in cands[var] if t.id in keep]

    out = []
    for t in cands[var]:
        for combo in itertools.product(*(cands[n] for n in others)):
            ids = [t.id] + [c.id for c in combo]
            if len(set(ids)) != len(ids):
                continue
            assign = dict(zip([var] + others, ids))
            if _passes(assign, con, csp, scene, th, domains):
                out.append(t)
                break
    return out


def solve_local(csp: Csp, scene: Scene, cfg: SolverConfig | None = None) -> GroundingResult:
    """Baseline that handles one constraint at a time.

    A constraint is processed once none of the other variables it depends on
    is still narrowed by an unprocessed constraint. The target is the first
    remaining candidate.
    """
    cfg = cfg or SolverConfig()
    th = cfg.thresholds
    domains = resolve_domains(csp, scene)
    cands = {v.name: list(domains[v.name]) for v in csp.normal_variables}
    pending = [c for c in csp.constraints if cfg.minmax_enabled or not c.kind.is_minmax]
    diags: list[Diagnostic] = []
    order: list[int] = []

    while pending:
        progressed = False
        for con in list(pending):
            var = _filtered_var(con, csp)
            deps = [n for n in con.variables if n != var and n not in csp.negative_names]
            blocked = any(_filtered_var(o, csp) in deps for o in pending if o is not con)
            if blocked:
                continue
            cands[var] = _local_filter(con, csp, scene, th, cands, domains)
            pending.remove(con)
            order.append(con.source_line)
            progressed = True
        if not progressed:
            diags.append(Diagnostic("local", "cyclic constraints: no constraint can be processed", len(pending)))
            return GroundingResult(Status.UNSATISFIABLE, diagnostics=diags)

    diags.append(Diagnostic("local", "constraint processing order (source lines): "
                            + ", ".join(map(str, order)), len(order)))
    remaining = cands[csp.target]
    if not remaining:
        diags.append(Diagnostic("local", f"no candidates left for {csp.target}", 0))
        return GroundingResult(Status.UNSATISFIABLE, diagnostics=diags)
    chosen = {name: c[0].id for name, c in cands.items() if c}
    return GroundingResult(
        Status.SOLVED,
        remaining[0].id,
        remaining[0].bbox,
        {k: v for k, v in sorted(chosen.items()) if k != csp.target},
        len(remaining),
        diags,
    )
