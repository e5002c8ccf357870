"""Multi-round tests driven by a classical policy with full memory.

Each round the referee applies one of a fixed menu of product measurements;
which one is chosen, and the final verdict γ ∈ {0, 1}, are decided by a
policy that sees all previous settings and outcomes. A round is split into
sequential steps (setting i_t, outcome o_t): one step for local Pauli
measurements, two for one-way LPCC (Alice's then Bob's).

The policy is stored in sequence form q(i_1, o_1, ..., i_T, o_T, γ), the joint
probability of all settings and γ given all outcomes. It is a valid sequential
policy iff q ≥ 0 and the marginals do not depend on future outcomes:

    Σ_γ q(h_{T-1}, i_T, o_T, γ)         = Q_T(h_{T-1}, i_T)          for all o_T
    Σ_{i_{t+1}} Q_{t+1}(h_{t-1}, i_t, o_t, i_{t+1}) = Q_t(h_{t-1}, i_t)   for all o_t
    Σ_{i_1} Q_1(i_1)                    = 1

Everything is linear in q, so the type-II error (for i.i.d. targets) is
linear, and the separable-player score is bounded by a tower of dual-cone
constraints, one per configuration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .. import qmat
from ..game import PreparationGame, max_score_constrained, score_iid
from ..qmat import DensityMatrix
from ..sdp import Model, dot_matrices
from ..sets import SepOuter, StateSet
from .measurements import MeasurementClass, measurement_class
from .oneshot import DesignResult, design_oneshot, min_total_error

CONFIG_CAP = 50_000
NSP_TOL = 1e-9
SIGN = ("+", "-")


@dataclass
class DemonPolicy:
    """Sequence-form policy q over the step history shape + (2,) for γ."""

    cls: MeasurementClass
    n: int
    steps: list  # [(settings, outcomes)] for all T steps
    table: np.ndarray = field(repr=False)

    @property
    def T(self) -> int:
        return len(self.steps)

    def marginals(self) -> list[np.ndarray]:
        """Q_1..Q_T; Q_t has shape hist[:2(t-1)] + (c_t,). Outcome o_t is read at index 0."""
        Qs = [None] * self.T
        cur = self.table.sum(axis=-1)  # (..., c_T, r_T)
        for t in reversed(range(self.T)):
            Qs[t] = cur[..., 0]
            cur = Qs[t].sum(axis=-1) if t > 0 else None
        return Qs

    def nsp_violation(self) -> float:
        """Largest dependence of a marginal on a future outcome, plus normalization error."""
        worst = 0.0
        cur = self.table.sum(axis=-1)
        for t in reversed(range(self.T)):
            worst = max(worst, float(np.max(np.abs(cur - cur[..., :1]))))
            Q = cur[..., 0]
            if t > 0:
                cur = Q.sum(axis=-1)
            else:
                worst = max(worst, abs(float(Q.sum()) - 1.0))
        worst = max(worst, float(-min(0.0, self.table.min())))
        return worst


def _hist_shape(steps) -> tuple:
    return tuple(x for st in steps for x in st)


def _kernels_from(q: np.ndarray, steps) -> tuple[list, np.ndarray]:
    """Normalized per-step kernels and final γ kernel from a nonnegative table.

    Marginals are averaged over the outcome they must not depend on, so a
    slightly inconsistent solver table still yields well-defined kernels.
    Zero denominators get uniform kernels.
    """
    T = len(steps)
    kernels = [None] * T
    tot = q.sum(axis=-1, keepdims=True)
    final = np.where(tot > 0, q / np.where(tot > 0, tot, 1.0), 0.5)
    cur = q.sum(axis=-1)
    for t in reversed(range(T)):
        Q = cur.mean(axis=-1)  # shape prefix + (c_t,)
        den = Q.sum(axis=-1, keepdims=True)
        c_t = Q.shape[-1]
        kernels[t] = np.where(den > 0, Q / np.where(den > 0, den, 1.0), 1.0 / c_t)
        cur = Q.sum(axis=-1)
    return kernels, final


def _assemble(kernels, final, steps) -> np.ndarray:
    """Product formula: q = Π_t K_t(i_t | h_{t-1}) · F(γ | h_T)."""
    hist = _hist_shape(steps)
    out = np.ones(())
    for t, K in enumerate(kernels):
        # K has shape hist[:2t] + (c_t,); append the outcome axis r_t
        out = out[..., None] * K
        out = out[..., None] * np.ones(steps[t][1])
    out = out.reshape(hist)
    return out[..., None] * final


def project_nsp(q: np.ndarray, steps) -> np.ndarray:
    """Clip, extract kernels and re-multiply: an exactly sequential policy."""
    q = np.clip(np.asarray(q, dtype=float), 0.0, None)
    kernels, final = _kernels_from(q, steps)
    return _assemble(kernels, final, steps)


def extract_policy_components(p: DemonPolicy) -> tuple[list, np.ndarray]:
    """Per-step kernels P_t(i_t | h_{t-1}) and the final kernel P(γ | h_T)."""
    v = p.nsp_violation()
    if v > NSP_TOL:
        raise ValueError(f"policy violates the sequential (no-signalling-to-the-past) conditions by {v:.3e}")
    return _kernels_from(p.table, p.steps)


# ---------------------------------------------------------------------------

def _round_data(cls: MeasurementClass):
    steps = cls.round_steps()
    ops = cls.round_operators()  # shape = round step shape + (4, 4)
    rshape = _hist_shape(steps)
    return steps, rshape, ops.reshape((-1,) + ops.shape[-2:])


def _round_tokens(cls: MeasurementClass) -> list[str]:
    names = ("X", "Y", "Z")
    toks = []
    if cls.name == "local-pauli":
        for i, o in product(range(9), range(4)):
            x, y = divmod(i, 3)
            a, b = divmod(o, 2)
            toks.append(f"{names[x]}{SIGN[a]}{names[y]}{SIGN[b]}")
    else:
        for x, a, y, b in product(range(3), range(2), range(3), range(2)):
            toks.append(f"{names[x]}{SIGN[a]}{names[y]}{SIGN[b]}")
    return toks


def _history_labels(tokens, k: int) -> list[str]:
    """Labels of all k-round histories, in row-major order of the round index."""
    if k == 0:
        return [""]
    return ["/".join(t) for t in product(tokens, repeat=k)]


@dataclass
class _DemonModel:
    model: Model
    q: object
    qidx: np.ndarray
    nus: list
    eII: object
    eI: object


def _build(n, cls, E, e_I, sep, adaptive):
    steps1, rshape, rops = _round_data(cls)
    steps = steps1 * n
    hist = _hist_shape(steps)
    ncfg = int(np.prod(hist))
    if ncfg > CONFIG_CAP:
        raise ValueError(f"{ncfg} final configurations exceed the cap {CONFIG_CAP}")
    spr = len(steps1)
    R = rops.shape[0]
    d = rops.shape[-1]
    m = Model()
    q = m.vector(ncfg * 2, nonneg=True)
    qidx = np.arange(ncfg * 2).reshape(hist + (2,))
    T = len(steps)
    Qs, Qidx = [], []
    for t in range(T):
        shp = hist[: 2 * t] + (steps[t][0],)
        Qs.append(m.vector(int(np.prod(shp))))
        Qidx.append(np.arange(int(np.prod(shp))).reshape(shp))
    # sequential structure
    for o in range(steps[-1][1]):
        lhs = q[qidx[..., o, 0].ravel()] + q[qidx[..., o, 1].ravel()]
        m.add_eq(lhs, Qs[-1][Qidx[-1].ravel()])
    for t in range(T - 1):
        for o in range(steps[t][1]):
            nxt = Qidx[t + 1][..., o, :]  # prefix + (c_t, c_{t+1})
            lhs = Qs[t + 1][nxt[..., 0].ravel()]
            for j in range(1, nxt.shape[-1]):
                lhs = lhs + Qs[t + 1][nxt[..., j].ravel()]
            m.add_eq(lhs, Qs[t][Qidx[t].ravel()])
    m.add_eq(Qs[0].sum(), 1.0)
    if not adaptive:
        for t in range(1, T):
            idx = Qidx[t]
            # outcome axes sit at odd positions; pin them all to outcome 0
            zero = idx[tuple(slice(0, 1) if ax % 2 == 1 else slice(None) for ax in range(idx.ndim))]
            zero = np.broadcast_to(zero, idx.shape)
            m.add_eq(Qs[t][idx.ravel()], Qs[t][zero.ravel()])
    # type-II error: probability of γ = 0 on ρ^{⊗n}, worst case over E
    eII = m.scalar()
    for rho in E:
        p = np.real(np.einsum("rab,ba->r", rops, rho.matrix)).reshape(rshape)
        w = np.ones(())
        for _ in range(n):
            w = np.multiply.outer(w, p)
        m.add_le(q[qidx[..., 0].ravel()] @ w.ravel(), eII)
    # separable-player bound: tower of dual-cone constraints
    I = np.eye(d)
    nus = []
    for k in range(n):
        shp = hist[: 2 * spr * k]
        nus.append(m.vector(int(np.prod(shp))) if shp else m.vector(1))
    for k in range(n):
        ncf = int(np.prod(hist[: 2 * spr * k])) if k else 1
        if k == n - 1:
            child = qidx[..., 1].reshape(ncf, R)
            src = q
        else:
            child = np.arange(nus[k + 1].size).reshape(ncf, R)
            src = nus[k + 1]
        for s in range(ncf):
            X = nus[k][s] * I - dot_matrices(src[child[s]], rops)
            sep.add_dual_constraint(m, X)
    eI = nus[0][0]
    if e_I is not None:
        m.add_le(eI, e_I)
    return _DemonModel(m, q, qidx, nus, eII, eI), steps, hist, rops


def design_demon(
    n: int,
    cls,
    E,
    e_I: float | None,
    sep: StateSet | None = None,
    adaptive: bool = True,
    tol: float = 1e-8,
    replay: bool = True,
) -> DesignResult:
    """Design an n-round adaptive test; e_I=None minimizes e_I + e_II jointly."""
    cls = measurement_class(cls)
    E = [E] if isinstance(E, DensityMatrix) else list(E)
    dims = qmat.ensure_same_dims(E)
    sep = sep if sep is not None else SepOuter(dims)
    if e_I is not None and not 0.0 <= e_I <= 1.0:
        raise ValueError("e_I must lie in [0, 1]")
    if cls.is_global:
        if n != 1:
            raise NotImplementedError("adaptive designs with unrestricted global POVMs are only available for one round")
        return design_oneshot(E, e_I, cls, sep) if e_I is not None else min_total_error(E, cls, sep)
    dm, steps, hist, rops = _build(n, cls, E, e_I, sep, adaptive)
    if e_I is None:
        dm.model.minimize(dm.eI + dm.eII)
    else:
        dm.model.minimize(dm.eII)
    sol = dm.model.solve(tol=tol)
    raw = sol.value(dm.q).reshape(hist + (2,))
    policy = DemonPolicy(cls, n, steps, project_nsp(raw, steps))
    g = policy_game(policy, dims)
    eIv = float(sol.value(dm.eI))
    res = DesignResult(
        e_I=eIv if e_I is None else float(e_I),
        e_II=float(sol.value(dm.eII)),
        game=g,
        policy=policy,
        dual_vars={"nu": [sol.value(v) for v in dm.nus], "xi": raw[..., 1]},
        info={"class": cls.name, "n": n, "adaptive": adaptive, "solver": sol.raw.backend, "gap": sol.raw.gap, "nu1": eIv},
    )
    if replay:
        res.info["replay_e_I"] = max_score_constrained(g, sep, record=False, cache={}).value
        res.info["replay_e_II"] = max(1.0 - score_iid(g, r) for r in E)
    return res


def policy_game(policy: DemonPolicy, dims) -> PreparationGame:
    """The preparation game played by the referee following ``policy``.

    Configurations are round histories (tokens like 'X+Z-' joined by '/');
    the round-k POVM at history s has elements κ(r | s) N_r where κ is the
    product of the step kernels of that round; the final score is P(γ=1 | s).
    """
    cls, n = policy.cls, policy.n
    steps1, rshape, rops = _round_data(cls)
    spr = len(steps1)
    R = rops.shape[0]
    tokens = _round_tokens(cls)
    kernels, final = _kernels_from(policy.table, policy.steps)
    configs = [_history_labels(tokens, k) for k in range(n + 1)]
    povms = []
    for k in range(n):
        # κ over the round's steps, shape (ncfg_k, R)
        kap = np.ones(())
        for j in range(spr):
            t = k * spr + j
            K = kernels[t]  # hist[:2t] + (c_t,)
            kap = kap[..., None] * K
            kap = kap[..., None] * np.ones(policy.steps[t][1])
        ncf = len(configs[k])
        kap = kap.reshape(ncf, R)
        rnd = {}
        for s_i, s in enumerate(configs[k]):
            out = {}
            for r in range(R):
                lab = tokens[r] if not s else s + "/" + tokens[r]
                out[lab] = kap[s_i, r] * rops[r]
            rnd[s] = out
        povms.append(rnd)
    score = dict(zip(configs[n], final[..., 1].ravel()))
    return PreparationGame(dims, configs, povms, score)


def demon_curve(n, cls, E, grid: int = 101, sep=None, adaptive: bool = True) -> np.ndarray:
    """Rows (e_I, e_II) on a uniform e_I grid."""
    out = []
    for eI in np.linspace(0.0, 1.0, grid):
        r = design_demon(n, cls, E, float(eI), sep=sep, adaptive=adaptive, replay=False)
        out.append((float(eI), r.e_II))
    return np.array(out)
