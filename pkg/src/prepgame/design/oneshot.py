"""Single-round entanglement tests: POVM {M_0, M_1} where outcome 1 certifies.

The type-I error bound e_I·I - M_1 ∈ C* holds for every state of the
separable proxy C; the type-II error is the largest probability of outcome 0
over the target states (or over an ε-ball around one target).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import qmat
from ..game import PreparationGame
from ..qmat import DensityMatrix
from ..sdp import Model
from ..sets import EpsBall, SepOuter, StateSet
from .measurements import binary_povm_variables, measurement_class

DEFAULT_GRID = 101


@dataclass
class DesignResult:
    e_I: float
    e_II: float
    game: PreparationGame
    policy: object = None
    dual_vars: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.e_I + self.e_II


def oneshot_game(M0: np.ndarray, M1: np.ndarray, dims) -> PreparationGame:
    """1-round game with outcomes '0' (not certified) and '1' (certified), scored 0 and 1."""
    M0, M1 = clean_binary(M0, M1)
    return PreparationGame(dims, [[""], ["0", "1"]], [{"": {"0": M0, "1": M1}}], {"0": 0.0, "1": 1.0})


def clean_binary(M0, M1):
    els = qmat.clean_povm([M0, M1])
    return els[0], els[1]


def _states(E) -> list[DensityMatrix]:
    if isinstance(E, DensityMatrix):
        return [E]
    return list(E)


def _build(E, cls, sep, e_I, eps=None):
    E = _states(E)
    dims = qmat.ensure_same_dims(E)
    cls = measurement_class(cls)
    sep = sep if sep is not None else SepOuter(dims)
    d = int(np.prod(dims))
    if not cls.is_global and d != 4:
        raise ValueError("Pauli-based classes are defined for two qubits")
    m = Model()
    M0, M1, extra = binary_povm_variables(m, cls, d)
    eII = m.scalar()
    if eps is None:
        for rho in E:
            m.add_le((M0 @ rho.matrix).trace().real(), eII)
    else:
        for rho in E:
            EpsBall(rho, eps).add_dual_constraint(m, eII * np.eye(d) - M0)
    eI = m.scalar() if e_I is None else e_I
    sep.add_dual_constraint(m, eI * np.eye(d) - M1)
    return m, M0, M1, eI, eII, dims, extra


def _result(m, sol, M0, M1, eI, eII, dims, extra, cls, **info):
    M0v, M1v = sol.value(M0), sol.value(M1)
    eIv = float(sol.value(eI)) if not isinstance(eI, (int, float)) else float(eI)
    policy = {k: sol.value(v) for k, v in extra.items()}
    return DesignResult(
        e_I=eIv,
        e_II=float(sol.value(eII)),
        game=oneshot_game(M0v, M1v, dims),
        policy=policy or None,
        info={"class": str(cls), "solver": sol.raw.backend, "gap": sol.raw.gap, **info},
    )


def design_oneshot(E, e_I: float, cls="global", sep: StateSet | None = None, tol: float = 1e-9) -> DesignResult:
    """Minimize e_II for fixed e_I."""
    if not 0.0 <= e_I <= 1.0:
        raise ValueError("e_I must lie in [0, 1]")
    m, M0, M1, eI, eII, dims, extra = _build(E, cls, sep, e_I)
    m.minimize(eII)
    sol = m.solve(tol=tol)
    return _result(m, sol, M0, M1, eI, eII, dims, extra, cls)


def design_oneshot_eps(rho: DensityMatrix, eps: float, e_I: float, cls="global", sep=None, tol: float = 1e-9) -> DesignResult:
    """As design_oneshot, with e_II bounding outcome 0 over the ε-ball around ρ."""
    if not 0.0 <= eps <= 2.0:
        raise ValueError("ε must lie in [0, 2]")
    m, M0, M1, eI, eII, dims, extra = _build([rho], cls, sep, e_I, eps=eps)
    m.minimize(eII)
    sol = m.solve(tol=tol)
    return _result(m, sol, M0, M1, eI, eII, dims, extra, cls, eps=eps)


def min_total_error(E, cls="global", sep=None, eps=None, tol: float = 1e-9) -> DesignResult:
    """Minimize e_I + e_II jointly (e_I becomes a variable)."""
    m, M0, M1, eI, eII, dims, extra = _build(E, cls, sep, None, eps=eps)
    m.minimize(eI + eII)
    sol = m.solve(tol=tol)
    return _result(m, sol, M0, M1, eI, eII, dims, extra, cls)


def error_curve(E, cls="global", grid: int = DEFAULT_GRID, sep=None, eps=None) -> np.ndarray:
    """Rows (e_I, e_II) on a uniform e_I grid over [0, 1]."""
    out = []
    for eI in np.linspace(0.0, 1.0, grid):
        if eps is None:
            r = design_oneshot(E, float(eI), cls, sep)
        else:
            r = design_oneshot_eps(_states(E)[0], eps, float(eI), cls, sep)
        out.append((float(eI), r.e_II))
    return np.array(out)
