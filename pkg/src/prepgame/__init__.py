"""Preparation games: scoring, design and simulation of adaptive certification protocols."""
from __future__ import annotations

__version__ = "0.1.0"

from .game import (
    FinitelyCorrelatedStrategy,
    GameError,
    PreparationGame,
    ScoreTable,
    max_score_constrained,
    omega_table,
    score_fincorr,
    score_iid,
    validate,
)
from .qmat import DensityMatrix, Povm, named_state
from .sdp import SolverError
from .sets import AllStates, EpsBall, NegativityBall, SepOuter, Singleton, StateSet

__all__ = [
    "AllStates",
    "DensityMatrix",
    "EpsBall",
    "FinitelyCorrelatedStrategy",
    "GameError",
    "NegativityBall",
    "Povm",
    "PreparationGame",
    "ScoreTable",
    "SepOuter",
    "Singleton",
    "SolverError",
    "StateSet",
    "__version__",
    "max_score_constrained",
    "named_state",
    "omega_table",
    "score_fincorr",
    "score_iid",
    "validate",
]
