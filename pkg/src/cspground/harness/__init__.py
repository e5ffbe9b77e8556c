from .evaluate import (
    EvaluationError,
    MetricsReport,
    Mode,
    QueryRecord,
    SceneStore,
    Subset,
    classify_query,
    evaluate,
    ground_text,
)
from .synth import SynthError, SynthResult, SynthSpec, synth_scene

__all__ = [
    "EvaluationError",
    "MetricsReport",
    "Mode",
    "QueryRecord",
    "SceneStore",
    "Subset",
    "SynthError",
    "SynthResult",
    "SynthSpec",
    "classify_query",
    "evaluate",
    "ground_text",
    "synth_scene",
]
