"""Zero-shot 3D visual grounding as constraint satisfaction."""

from .geometry import RelationKind, ScoreFunc, Thresholds, eval_relation, eval_score, iou_3d, viewer_frame
from .program import Csp, CspConstraint, CspVariable, compile_program, lower, parse, registry_signatures
from .scene import Aabb, Instance, Point3, Scene, domain_of, load_scene, make_scene
from .solver import (
    Engine,
    GroundingResult,
    Heuristic,
    SolverConfig,
    Status,
    apply_minmax,
    enumerate_valid,
    select_solution,
    solve,
    solve_local,
)

__version__ = "0.1.0"
