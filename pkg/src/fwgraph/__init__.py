"""Brownian motions on metric graphs with Feller-Wentzell vertex conditions."""
from .fw import (
    FWData, FWError, JumpMeasure, StageError, glue_transform, kill_transform, normalize,
    pipeline_trace, revive_transform, split_local,
)
from .graph import (
    BOX, CEMETERY, Aux, EdgePoint, MetricGraph, SubgraphDecomposition, Vertex, decompose,
    distance, fake_cemetery, psi_map, validate_graph,
)
from .pipeline import (
    Adjoined, FakeCemetery, Glued, KilledOnSet, Revived, attach_fake_cemetery,
    construct_paper_pipeline, decompose_and_glue, kill_on_set, revive_with_kernel,
)
from .sampler import (
    DirectProcess, RandomStream, Trajectory, Watch, ball_watch, sample_ball_exit_time,
    sample_interval_exit, simulate_direct, vertex_resolution,
)

__version__ = "0.1.0"

__all__ = [
    "FWData", "FWError", "JumpMeasure", "StageError", "glue_transform", "kill_transform", "normalize",
    "pipeline_trace", "revive_transform", "split_local",
    "BOX", "CEMETERY", "Aux", "EdgePoint", "MetricGraph", "SubgraphDecomposition", "Vertex", "decompose",
    "distance", "fake_cemetery", "psi_map", "validate_graph",
    "Adjoined", "FakeCemetery", "Glued", "KilledOnSet", "Revived", "attach_fake_cemetery",
    "construct_paper_pipeline", "decompose_and_glue", "kill_on_set", "revive_with_kernel",
    "DirectProcess", "RandomStream", "Trajectory", "Watch", "ball_watch", "sample_ball_exit_time",
    "sample_interval_exit", "simulate_direct", "vertex_resolution",
]
