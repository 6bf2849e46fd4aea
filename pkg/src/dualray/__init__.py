"""Dual-decomposition consensus solver with flat-ray warm starts."""

from .model import (
    BoxSet,
    ChainCoupling,
    ConsensusProblem,
    LeastSquaresObjective,
    QuadraticObjective,
    problem_from_dict,
    problem_from_json,
    problem_to_dict,
)
from .rays import FgorRay, build_consensus_ray, consensus_boundary_point
from .stepsize import StepsizeState
from .engine import (
    IterationRecord,
    RunTrace,
    dual_value_and_subgradient,
    run_fgor,
    run_standard,
    run_stochastic,
)

__version__ = "0.1.0"

__all__ = [
    "BoxSet",
    "ChainCoupling",
    "ConsensusProblem",
    "FgorRay",
    "IterationRecord",
    "LeastSquaresObjective",
    "QuadraticObjective",
    "RunTrace",
    "StepsizeState",
    "build_consensus_ray",
    "consensus_boundary_point",
    "dual_value_and_subgradient",
    "problem_from_dict",
    "problem_from_json",
    "problem_to_dict",
    "run_fgor",
    "run_standard",
    "run_stochastic",
]
