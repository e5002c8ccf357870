"""Dense primal-dual interior-point method (HKM direction, Mehrotra corrector).

Equalities are removed first by a null-space parametrization x = x0 + N u,
and directions of u that no constraint sees are projected away. What is
left is

    minimize    ĉ·u
    subject to  S_b = C_b + Σ_j u_j A_bj ⪰ 0,   s = h + G u ≥ 0

whose conic dual is  max −Σ<C_b, X_b> − h·z  s.t.  Σ_b <A_bj, X_b> + (Gᵀz)_j = ĉ_j.
Both are driven to optimality from an infeasible start.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .problem import SdpProblem, SdpSolution

STEP_FRACTION = 0.95
DIVERGE = 1e12
STALL_ITERS = 15
ACCEPT = 1e-7  # residual and gap level promised for status 'optimal'


def _max_step(M: np.ndarray, dM: np.ndarray) -> float:
    """Largest α keeping M + α dM PSD (M assumed positive definite)."""
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return 0.0
    Li = sla.solve_triangular(L, np.eye(M.shape[0]), lower=True)
    T = Li @ dM @ Li.T
    lm = np.linalg.eigvalsh(0.5 * (T + T.T))[0]
    return np.inf if lm >= 0 else -1.0 / lm


def _max_step_lp(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def _reduce(p: SdpProblem, tol: float):
    """Null-space parametrization of the equalities.

    Returns (x0, B, status) with x = x0 + B u, or status 'infeasible'/'unbounded'.
    """
    n = p.num_vars
    A = p.A.toarray()
    if A.shape[0]:
        U, s, Vt = np.linalg.svd(A, full_matrices=True)
        rank = int(np.sum(s > max(A.shape) * np.finfo(float).eps * max(s[0], 1.0) * 10))
        x0 = Vt[:rank].T @ ((U[:, :rank].T @ p.b) / s[:rank])
        if np.linalg.norm(A @ x0 - p.b) > 1e3 * tol * (1 + np.linalg.norm(p.b)):
            return None, None, "infeasible"
        N = Vt[rank:].T
    else:
        x0 = np.zeros(n)
        N = np.eye(n)
    # drop directions invisible to every cone constraint
    K = [blk.F @ N for blk in p.blocks]
    if p.G.shape[0]:
        K.append(p.G @ N)
    K = np.vstack(K) if K else np.zeros((0, N.shape[1]))
    if N.shape[1] == 0:
        return x0, N, None
    if K.shape[0]:
        _, s, Vt = np.linalg.svd(K, full_matrices=True)
        smax = s[0] if s.size else 0.0
        rank = int(np.sum(s > max(K.shape) * np.finfo(float).eps * max(smax, 1.0) * 10))
    else:
        Vt = np.eye(N.shape[1])
        rank = 0
    free = Vt[rank:].T
    if free.shape[1] and np.linalg.norm((p.c @ N) @ free) > 1e-9 * (1 + np.linalg.norm(p.c)):
        return x0, None, "unbounded"
    return x0, N @ Vt[:rank].T, None


def solve_dense(p: SdpProblem, tol: float = 1e-8, max_iter: int = 200) -> SdpSolution:
    n = p.num_vars
    x0, B, status = _reduce(p, tol)
    if status is not None:
        x = x0 if x0 is not None else np.zeros(n)
        return _finish(p, status, x, [np.zeros((b.dim, b.dim)) for b in p.blocks], np.zeros(p.h.size), 0, float("nan"))

    m = B.shape[1]
    chat = p.c @ B
    Cs, As = [], []
    for blk in p.blocks:
        d = blk.dim
        Cs.append(blk.value(x0))
        As.append(np.asarray((blk.F @ B).T).reshape(m, d, d))
    G = np.asarray(p.G @ B)
    hh = p.h + p.G @ x0
    nlp = hh.size
    if m == 0:
        return _finish(p, "optimal", x0, [np.zeros((b.dim, b.dim)) for b in p.blocks], np.zeros(nlp), 0, 1.0)

    # starting point, scaled to the data in the manner of SDPT3
    scale_b = max(1.0, np.max(np.abs(chat)))
    anorm = [max(1.0, np.max(np.linalg.norm(Aj.reshape(m, -1), axis=1))) for Aj in As]
    X, S = [], []
    for C, Aj, an in zip(Cs, As, anorm):
        d = C.shape[0]
        xi = max(10.0, np.sqrt(d), d * scale_b / an)
        eta = max(10.0, np.sqrt(d), np.linalg.norm(C), an)
        X.append(xi * np.eye(d))
        S.append(eta * np.eye(d))
    if nlp:
        gn = max(1.0, np.max(np.abs(G)))
        z = np.full(nlp, max(10.0, scale_b / gn))
        s = np.full(nlp, max(10.0, np.max(np.abs(hh)), gn))
    else:
        z = np.zeros(0)
        s = np.zeros(0)
    u = np.zeros(m)
    nu = sum(C.shape[0] for C in Cs) + nlp
    normC = 1.0 + np.sqrt(sum(np.sum(C * C) for C in Cs) + hh @ hh)
    normb = 1.0 + np.linalg.norm(chat)

    status = "iteration-limit"
    cond = float("nan")
    it = 0
    best, best_it = np.inf, 0
    for it in range(1, max_iter + 1):
        # residuals
        Au = [C + np.tensordot(u, Aj, axes=1) for C, Aj in zip(Cs, As)]
        Rd = [a - Sb for a, Sb in zip(Au, S)]
        rlp = hh + G @ u - s
        rp = chat - sum(np.tensordot(Aj, Xb, axes=([1, 2], [0, 1])) for Aj, Xb in zip(As, X))
        if nlp:
            rp = rp - G.T @ z
        pobj = chat @ u
        dobj = -sum(np.sum(C * Xb) for C, Xb in zip(Cs, X)) - hh @ z
        mu = (sum(np.sum(Xb * Sb) for Xb, Sb in zip(X, S)) + z @ s) / nu
        pres = np.sqrt(sum(np.sum(r * r) for r in Rd) + rlp @ rlp) / normC
        dres = np.linalg.norm(rp) / normb
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        if pres <= tol and dres <= tol and relgap <= tol:
            status = "optimal"
            break
        worst = max(pres, dres, relgap)
        if worst < best * 0.9:
            best, best_it = worst, it
        elif it - best_it >= STALL_ITERS and worst <= ACCEPT:
            # progress has stalled below the contract tolerance
            status = "optimal"
            break
        xnorm = max([np.max(np.abs(Xb)) for Xb in X] + [np.max(z, initial=0.0)])
        if xnorm > DIVERGE:
            # a diverging dual iterate is a Farkas ray when it annihilates the
            # constraint map and has positive value: primal infeasible
            ray = sum(np.tensordot(Aj, Xb / xnorm, axes=([1, 2], [0, 1])) for Aj, Xb in zip(As, X))
            if nlp:
                ray = ray + G.T @ (z / xnorm)
            val = -sum(np.sum(C * Xb) for C, Xb in zip(Cs, X)) / xnorm - hh @ z / xnorm
            if val > 0 and np.linalg.norm(ray) <= 1e-6 * max(1.0, val):
                status = "infeasible"
            break
        if np.max(np.abs(u)) > DIVERGE and dres < 1e-6:
            status = "unbounded"
            break

        try:
            Sinv = [np.linalg.inv(Sb) for Sb in S]
        except np.linalg.LinAlgError:
            # slack lost definiteness numerically; report the iterate as unconverged
            break
        Sinv = [0.5 * (q + q.T) for q in Sinv]
        # Schur complement M_ij = Σ_b <A_i, X A_j S^{-1}> + (Gᵀ diag(z/s) G)_ij
        M = np.zeros((m, m))
        for Aj, Xb, Si in zip(As, X, Sinv):
            T = np.einsum("ab,jbc,cd->jad", Xb, Aj, Si, optimize=True)
            M += Aj.reshape(m, -1) @ T.reshape(m, -1).T
        if nlp:
            M += G.T @ ((z / s)[:, None] * G)
        M = 0.5 * (M + M.T)
        if not np.all(np.isfinite(M)):
            break
        try:
            cf = sla.cho_factor(M + 1e-14 * np.trace(M) / m * np.eye(m))
            solve_M = lambda r: sla.cho_solve(cf, r)
        except np.linalg.LinAlgError:
            lu = sla.lu_factor(M)
            solve_M = lambda r: sla.lu_solve(lu, r)

        def direction(sig_mu, corr_psd, corr_lp):
            rhs = -chat.copy()
            for Aj, Xb, Si, R, cp_ in zip(As, X, Sinv, Rd, corr_psd):
                W = sig_mu * Si - Xb @ R @ Si
                if cp_ is not None:
                    W = W - cp_
                rhs += np.tensordot(Aj, W, axes=([1, 2], [1, 0]))
            if nlp:
                wl = sig_mu / s - z * rlp / s
                if corr_lp is not None:
                    wl = wl - corr_lp
                rhs += G.T @ wl
            du = solve_M(rhs)
            dS = [R + np.tensordot(du, Aj, axes=1) for R, Aj in zip(Rd, As)]
            dX = []
            for Xb, Si, dSb, cp_ in zip(X, Sinv, dS, corr_psd):
                D = sig_mu * Si - Xb - Xb @ dSb @ Si
                if cp_ is not None:
                    D = D - cp_
                dX.append(0.5 * (D + D.T))
            ds = rlp + G @ du if nlp else np.zeros(0)
            dz = (sig_mu - z * s - z * ds) / s if nlp else np.zeros(0)
            if nlp and corr_lp is not None:
                dz = dz - corr_lp
            return du, dS, dX, ds, dz

        def steps(dS, dX, ds, dz):
            ap = min([_max_step(Sb, d) for Sb, d in zip(S, dS)] + [_max_step_lp(s, ds) if nlp else np.inf])
            ad = min([_max_step(Xb, d) for Xb, d in zip(X, dX)] + [_max_step_lp(z, dz) if nlp else np.inf])
            return ap, ad

        # predictor
        none = [None] * len(X)
        du, dS, dX, ds, dz = direction(0.0, none, None)
        ap, ad = steps(dS, dX, ds, dz)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = (
            sum(np.sum((Xb + ad * a) * (Sb + ap * b)) for Xb, a, Sb, b in zip(X, dX, S, dS))
            + (z + ad * dz) @ (s + ap * ds)
        ) / nu
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        # corrector with the second-order term
        corr_psd = [a @ b @ Si for a, b, Si in zip(dX, dS, Sinv)]
        corr_lp = dz * ds / s if nlp else None
        du, dS, dX, ds, dz = direction(sigma * mu, corr_psd, corr_lp)
        ap, ad = steps(dS, dX, ds, dz)
        ap = min(1.0, STEP_FRACTION * ap)
        ad = min(1.0, STEP_FRACTION * ad)

        u = u + ap * du
        S = [Sb + ap * d for Sb, d in zip(S, dS)]
        S = [0.5 * (q + q.T) for q in S]
        X = [Xb + ad * d for Xb, d in zip(X, dX)]
        X = [0.5 * (q + q.T) for q in X]
        if nlp:
            s = s + ap * ds
            z = z + ad * dz
        if ap < 1e-10 and ad < 1e-10:
            if worst <= ACCEPT:
                status = "optimal"
            break
    try:
        ev = np.linalg.eigvalsh(M)
        cond = float(ev[-1] / ev[0]) if ev[0] > 0 else float("inf")
    except Exception:
        pass
    x = x0 + B @ u
    return _finish(p, status, x, X, z, it, cond)


def _finish(p, status, x, X, z, it, cond) -> SdpSolution:
    psd, lpn, eq = p.residuals(x)
    pres = max(-psd, -lpn, eq)
    pobj = p.objective(x)
    dobj = p.offset - sum(np.sum(blk.F0 * Xb) for blk, Xb in zip(p.blocks, X)) - p.h @ z
    # equality multipliers from stationarity c = Σ F*(X) + Gᵀz + Aᵀy
    r = p.c - sum(blk.F.T @ Xb.ravel() for blk, Xb in zip(p.blocks, X)) - (p.G.T @ z if z.size else 0.0)
    y = np.zeros(p.b.size)
    if p.b.size:
        y = np.linalg.lstsq(p.A.toarray().T, r, rcond=None)[0]
        dobj += p.b @ y
        dres = float(np.linalg.norm(r - p.A.T @ y))
    else:
        dres = float(np.linalg.norm(r))
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    return SdpSolution(
        status=status,
        x=x,
        objective_value=pobj,
        dual_blocks=list(X),
        dual_lp=np.asarray(z),
        y=y,
        gap=float(gap),
        primal_residual=float(pres),
        dual_residual=dres,
        iterations=it,
        backend="dense",
        condition=cond,
    )
