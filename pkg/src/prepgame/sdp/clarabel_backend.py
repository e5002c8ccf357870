"""Adapter from :class:`SdpProblem` to the Clarabel conic solver.

Clarabel solves  min c·x  s.t.  A x + s = b,  s ∈ K  with K a product of the
zero cone, the nonnegative orthant and PSD cones in scaled upper-triangle
(svec) form. A PSD block F0 + Σ x_i F_i becomes the rows  -svec(F_i) x + s = svec(F0).
"""
from __future__ import annotations

import clarabel
import numpy as np
import scipy.sparse as sp

from .problem import SdpProblem, SdpSolution

SQRT2 = np.sqrt(2.0)


def _svec_rows(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major indices and scale factors of the svec ordering (upper triangle, by column)."""
    idx, scale = [], []
    for j in range(d):
        for i in range(j + 1):
            idx.append(i * d + j)
            scale.append(1.0 if i == j else SQRT2)
    return np.array(idx), np.array(scale)


def _smat(v: np.ndarray, d: int) -> np.ndarray:
    m = np.zeros((d, d))
    k = 0
    for j in range(d):
        for i in range(j + 1):
            if i == j:
                m[i, i] = v[k]
            else:
                m[i, j] = m[j, i] = v[k] / SQRT2
            k += 1
    return m


_STATUS = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
    "MaxIterations": "iteration-limit",
    "MaxTime": "iteration-limit",
}


# settings tried in order until one reaches a definite status; equilibration
# occasionally breaks down on problems mixing tiny and unit-size blocks
RETRY_SETTINGS = (
    {},
    {"equilibrate_enable": False},
    {"static_regularization_constant": 1e-7},
)


def solve_clarabel(p: SdpProblem, tol: float = 1e-8, max_iter: int = 200, verbose: bool = False) -> SdpSolution:
    sol = None
    for extra in RETRY_SETTINGS:
        sol = _solve_once(p, tol, max_iter, verbose, extra)
        if sol.status != "iteration-limit":
            break
    return sol


def _solve_once(p: SdpProblem, tol: float, max_iter: int, verbose: bool, extra: dict) -> SdpSolution:
    n = p.num_vars
    rows, rhs, cones = [], [], []
    if p.b.size:
        rows.append(p.A)
        rhs.append(p.b)
        cones.append(clarabel.ZeroConeT(p.b.size))
    if p.h.size:
        rows.append(-p.G)
        rhs.append(p.h)
        cones.append(clarabel.NonnegativeConeT(p.h.size))
    svecs = []
    for blk in p.blocks:
        idx, scale = _svec_rows(blk.dim)
        svecs.append((idx, scale))
        rows.append(-sp.diags(scale) @ blk.F[idx])
        rhs.append(scale * blk.F0.ravel()[idx])
        cones.append(clarabel.PSDTriangleConeT(blk.dim))
    A = sp.vstack(rows, format="csc") if rows else sp.csc_matrix((0, n))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    A.eliminate_zeros()

    st = clarabel.DefaultSettings()
    st.verbose = verbose
    st.max_iter = max_iter
    st.tol_gap_abs = tol
    st.tol_gap_rel = tol
    st.tol_feas = tol
    st.presolve_enable = True
    for key, val in extra.items():
        setattr(st, key, val)
    solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), p.c, A, b, cones, st)
    res = solver.solve()
    raw = str(res.status)
    status = _STATUS.get(raw, None)
    x = np.array(res.x)
    zfull = np.array(res.z)
    off = 0
    y = -zfull[off : off + p.b.size]
    off += p.b.size
    zlp = zfull[off : off + p.h.size]
    off += p.h.size
    duals = []
    for blk, (idx, scale) in zip(p.blocks, svecs):
        k = idx.size
        duals.append(_smat(zfull[off : off + k], blk.dim))
        off += k

    psd, lpn, eq = p.residuals(x)
    pres = max(-psd, -lpn, eq)
    pobj = p.objective(x)
    dobj = p.offset - sum(np.sum(blk.F0 * X) for blk, X in zip(p.blocks, duals)) - p.h @ zlp + p.b @ y
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    r = p.c - sum(blk.F.T @ X.ravel() for blk, X in zip(p.blocks, duals)) - p.G.T @ zlp - p.A.T @ y
    dres = float(np.linalg.norm(r))
    if status is None:
        # AlmostSolved and friends: accept only if the answer is good by our own measure
        ok = raw.startswith("AlmostSolved") and pres <= max(10 * tol, 1e-7) and gap <= max(10 * tol, 1e-7)
        status = "optimal" if ok else "iteration-limit"
    return SdpSolution(
        status=status,
        x=x,
        objective_value=pobj,
        dual_blocks=duals,
        dual_lp=zlp,
        y=y,
        gap=float(gap),
        primal_residual=float(pres),
        dual_residual=dres,
        iterations=int(res.iterations),
        backend="clarabel",
    )
