"""Semidefinite programming: problem form, a modeling layer and two backends."""
from __future__ import annotations

from .clarabel_backend import solve_clarabel
from .ipm import solve_dense
from .model import Affine, Constraint, Model, dot_matrices, kron
from .problem import (
    PsdBlock,
    SdpProblem,
    SdpSolution,
    SolverError,
    embed_hermitian,
    unembed_hermitian,
)

# the dense solver is used when the Schur complement stays small
DENSE_MAX_VARS = 250
DENSE_MAX_ENTRIES = 4096
# each backend falls back on the other when it does not report an optimum;
# the dense solver only up to this many variables
DENSE_FALLBACK_VARS = 3000


def solve(p: SdpProblem, tol: float = 1e-8, backend: str = "auto", max_iter: int = 200) -> SdpSolution:
    """Solve ``p``; ``backend`` is 'dense', 'clarabel' or 'auto'."""
    p.check()
    if backend == "auto":
        entries = sum(b.dim**2 for b in p.blocks) + p.h.size
        # a non-optimal verdict gets a second opinion from the other backend:
        # weakly feasible problems (no strictly feasible point) can look
        # infeasible to one method and solve fine with the other
        if p.num_vars <= DENSE_MAX_VARS and entries <= DENSE_MAX_ENTRIES:
            sol = solve_dense(p, tol=tol, max_iter=max_iter)
            if sol.status != "optimal":
                alt = solve_clarabel(p, tol=tol, max_iter=max_iter)
                if alt.status == "optimal" or sol.status == "iteration-limit" and alt.status != "iteration-limit":
                    return alt
            return sol
        sol = solve_clarabel(p, tol=tol, max_iter=max_iter)
        if sol.status != "optimal" and p.num_vars <= DENSE_FALLBACK_VARS:
            alt = solve_dense(p, tol=tol, max_iter=max_iter)
            if alt.status == "optimal" or sol.status == "iteration-limit":
                return alt
        return sol
    if backend == "dense":
        return solve_dense(p, tol=tol, max_iter=max_iter)
    if backend == "clarabel":
        return solve_clarabel(p, tol=tol, max_iter=max_iter)
    raise ValueError(f"unknown backend {backend!r}")


__all__ = [
    "Affine",
    "Constraint",
    "Model",
    "PsdBlock",
    "SdpProblem",
    "SdpSolution",
    "SolverError",
    "dot_matrices",
    "embed_hermitian",
    "kron",
    "solve",
    "solve_clarabel",
    "solve_dense",
    "unembed_hermitian",
]
