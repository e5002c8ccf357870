"""Measurement classes available to the referee.

GlobalPovm places no restriction. The two Pauli-based classes build POVMs
from the local eigenprojectors A_{a|x}, B_{b|y} of X, Y, Z (x, y ∈ {0,1,2},
a, b ∈ {0,1} meaning eigenvalue +1, -1) post-processed classically:

* LocalPauli: the settings (x, y) are drawn jointly without communication,
  so P(x, y, γ | a, b) must have Σ_γ P = P(x, y).
* OneWayLpcc: Bob's setting may depend on Alice's setting and outcome, so
  Σ_γ P(x, y, γ | a, b) = P(x, y | a) and Σ_y P(x, y | a) = P(x).
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .. import qmat
from ..sdp import Affine, Model, dot_matrices

PAULI_ORDER = ("X", "Y", "Z")


def local_pauli_povms() -> np.ndarray:
    """Array [x, a] of 2x2 projectors (x indexes X, Y, Z; a=0 is eigenvalue +1)."""
    pp = qmat.pauli_projectors()
    return np.array([[pp[p][0], pp[p][1]] for p in PAULI_ORDER])


@dataclass(frozen=True)
class MeasurementClass:
    name: str

    @property
    def is_global(self) -> bool:
        return self.name == "global"

    @property
    def local(self) -> np.ndarray:
        return local_pauli_povms()

    def product_operators(self) -> np.ndarray:
        """N[x, y, a, b] = A_{a|x} ⊗ B_{b|y}, shape (3, 3, 2, 2, 4, 4)."""
        L = self.local
        out = np.empty((3, 3, 2, 2, 4, 4), dtype=complex)
        for x, y, a, b in product(range(3), range(3), range(2), range(2)):
            out[x, y, a, b] = np.kron(L[x, a], L[y, b])
        return out

    def round_steps(self) -> list[tuple[int, int]]:
        """(settings, outcomes) of the sequential decisions making up one round."""
        if self.name == "local-pauli":
            return [(9, 4)]
        if self.name == "one-way-lpcc":
            return [(3, 2), (3, 2)]
        raise ValueError("global measurements have no sequential step structure")

    def round_operators(self) -> np.ndarray:
        """Operators indexed by the flattened (setting, outcome) steps of one round."""
        N = self.product_operators()
        if self.name == "local-pauli":
            # setting i = 3x + y, outcome o = 2a + b
            return _lp_ops(N)
        if self.name == "one-way-lpcc":
            # steps (x, a), (y, b)
            return N.transpose(0, 2, 1, 3, 4, 5)
        raise ValueError("global measurements have no sequential step structure")

    def __str__(self):
        return self.name


def _lp_ops(N: np.ndarray) -> np.ndarray:
    out = np.empty((9, 4, 4, 4), dtype=complex)
    for x, y, a, b in product(range(3), range(3), range(2), range(2)):
        out[3 * x + y, 2 * a + b] = N[x, y, a, b]
    return out


GLOBAL = MeasurementClass("global")
ONE_WAY_LPCC = MeasurementClass("one-way-lpcc")
LOCAL_PAULI = MeasurementClass("local-pauli")

_ALIASES = {
    "global": GLOBAL,
    "m1": GLOBAL,
    "globalpovm": GLOBAL,
    "one-way-lpcc": ONE_WAY_LPCC,
    "lpcc": ONE_WAY_LPCC,
    "m2": ONE_WAY_LPCC,
    "onewaylpcc": ONE_WAY_LPCC,
    "local-pauli": LOCAL_PAULI,
    "pauli": LOCAL_PAULI,
    "m3": LOCAL_PAULI,
    "localpauli": LOCAL_PAULI,
}


def measurement_class(name) -> MeasurementClass:
    if isinstance(name, MeasurementClass):
        return name
    key = str(name).strip().lower().replace("_", "-")
    if key not in _ALIASES:
        raise KeyError(f"unknown measurement class {name!r}")
    return _ALIASES[key]


def povm_variables(model: Model, cls: MeasurementClass, outcomes: int, dim: int = 4):
    """Variables for an ``outcomes``-element POVM restricted to ``cls``.

    Returns (elements, extra) where ``extra`` holds the classical
    post-processing variables of the Pauli classes (P indexed [x, y, o, a, b]).
    """
    if cls.is_global:
        els = [model.hermitian(dim, psd=True) for _ in range(outcomes - 1)]
        last = np.eye(dim) - sum(els[1:], els[0]) if els else Affine.constant(np.eye(dim), model.nvars)
        model.add_psd(last)
        return els + [last], {}
    if dim != 4:
        raise ValueError("Pauli-based classes are defined for two qubits")
    N = cls.product_operators()  # [x, y, a, b]
    P = model.vector(3 * 3 * outcomes * 2 * 2, nonneg=True)
    idx = np.arange(P.size).reshape(3, 3, outcomes, 2, 2)  # x, y, o, a, b
    ops = N.reshape(-1, 4, 4)  # (x, y, a, b) order, matching idx[:, :, o]
    els = [dot_matrices(P[idx[:, :, o].ravel()], ops) for o in range(outcomes)]
    marg = P[idx[:, :, 0]]
    for o in range(1, outcomes):
        marg = marg + P[idx[:, :, o]]  # shape (3, 3, 2, 2): Σ_o
    if cls.name == "local-pauli":
        Pxy = model.vector(9).reshape((3, 3))
        for a, b in product(range(2), range(2)):
            model.add_eq(marg[:, :, a, b].reshape((9,)), Pxy.reshape((9,)))
        model.add_eq(Pxy.sum(), 1.0)
        extra = {"P": P, "Pxy": Pxy}
    else:
        Pxya = model.vector(18).reshape((3, 3, 2))
        Px = model.vector(3)
        for b in range(2):
            model.add_eq(marg[:, :, :, b].reshape((18,)), Pxya.reshape((18,)))
        for a in range(2):
            for x in range(3):
                model.add_eq(Pxya[x, :, a].sum(), Px[x])
        model.add_eq(Px.sum(), 1.0)
        extra = {"P": P, "Pxya": Pxya, "Px": Px}
    return els, extra


def binary_povm_variables(model: Model, cls: MeasurementClass, dim: int = 4):
    """(M_0, M_1, extra) for a two-outcome POVM restricted to ``cls``."""
    (M0, M1), extra = povm_variables(model, cls, 2, dim)
    return M0, M1, extra


__all__ = [
    "GLOBAL",
    "LOCAL_PAULI",
    "MeasurementClass",
    "ONE_WAY_LPCC",
    "binary_povm_variables",
    "povm_variables",
    "local_pauli_povms",
    "measurement_class",
]
