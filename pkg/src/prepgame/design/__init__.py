"""Design of tests: single-round, adaptive demon protocols and round-by-round descent."""
from __future__ import annotations

from .demon import DemonPolicy, demon_curve, design_demon, extract_policy_components, policy_game, project_nsp
from .measurements import GLOBAL, LOCAL_PAULI, ONE_WAY_LPCC, MeasurementClass, measurement_class
from .oneshot import DesignResult, design_oneshot, design_oneshot_eps, error_curve, min_total_error, oneshot_game
from .rounds import (
    DescentResult,
    InstanceSpec,
    RoundConstraints,
    coordinate_descent,
    honest_scores,
    instance_constraints,
    optimize_round,
    random_initial_game,
    run_restarts,
    sep_values,
    type_II_error,
)

__all__ = [
    "DemonPolicy",
    "DescentResult",
    "DesignResult",
    "GLOBAL",
    "InstanceSpec",
    "LOCAL_PAULI",
    "MeasurementClass",
    "ONE_WAY_LPCC",
    "RoundConstraints",
    "coordinate_descent",
    "demon_curve",
    "design_demon",
    "design_oneshot",
    "design_oneshot_eps",
    "error_curve",
    "extract_policy_components",
    "honest_scores",
    "instance_constraints",
    "measurement_class",
    "min_total_error",
    "oneshot_game",
    "optimize_round",
    "policy_game",
    "project_nsp",
    "random_initial_game",
    "run_restarts",
    "sep_values",
    "type_II_error",
]
