"""Round-by-round optimization of multi-round games and the coordinate-descent loop.

With every round except k fixed, the constrained player's value μ^(j) for
j > k is a number per configuration, so the round-k POVMs enter linearly in

* the dual tower ν^(j)_s I - Σ_{s'} ν^(j+1)_{s'} M^(j)_{s'|s} ∈ C* (j ≤ k),
  whose top value ν^(1) upper-bounds the constrained player's score, and
* the honest player's operator Ω^(1), obtained by pulling the fixed operators
  Ω^(k+1) back through round k (linear in M^(k)) and then through the fixed
  rounds before it.

Each round-k problem is an SDP; alternating over k never makes the current
objective worse because the current POVMs are always feasible.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import game as gm
from .. import qmat
from ..game import FinitelyCorrelatedStrategy, PreparationGame, omega_table
from ..qmat import DensityMatrix
from ..sdp import Model, SolverError, dot_matrices
from ..sets import AllStates, Singleton, StateSet, SepOuter
from .measurements import GLOBAL, measurement_class, povm_variables

log = logging.getLogger(__name__)

FEAS_TOL = 1e-5


@dataclass
class RoundConstraints:
    """Type-I bound over ``sep`` and the honest players whose error is minimized.

    ``honest`` holds density matrices (i.i.d. players) or finitely correlated
    strategies; the objective e_II is the largest failure probability among
    them, minimized over their environment sets.
    """

    sep: StateSet
    e_I: float
    honest: list
    cls: object = GLOBAL

    def strategies(self) -> list[FinitelyCorrelatedStrategy]:
        out = []
        for h in self.honest:
            if isinstance(h, FinitelyCorrelatedStrategy):
                out.append(h)
            else:
                rho = h if isinstance(h, DensityMatrix) else DensityMatrix(self.sep.dims, h)
                out.append(FinitelyCorrelatedStrategy.from_state(rho.matrix, rho.dims))
        return out


@dataclass
class RoundResult:
    game: PreparationGame
    objective: float
    bound: float  # ν^(1): the solver's certified bound on the constrained player's score
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# replays

def sep_values(g: PreparationGame, C: StateSet, cache: dict | None = None, lo: int = 0, known: list | None = None) -> list:
    """μ^(j) for j ≥ lo by backward recursion; entries of ``known`` above lo are reused."""
    values = [None] * (g.n + 1)
    values[g.n] = g.final_scores()
    start = g.n - 1
    if known is not None:
        for j in range(g.n, lo, -1):
            if known[j] is None:
                break
            values[j] = known[j]
            start = j - 1
    for k in range(start, lo - 1, -1):
        mu_next = values[k + 1]
        cur = np.empty(len(g.configs[k]))
        for i in range(cur.size):
            W = g.effective_operator(k, i, mu_next)
            key = np.round(W, 12).tobytes() if cache is not None else None
            if cache is not None and key in cache:
                cur[i] = cache[key]
            elif gm._is_scalar(W):
                cur[i] = float(np.real(W[0, 0]))
            else:
                cur[i] = C.max_value(W)
                if cache is not None:
                    cache[key] = cur[i]
        values[k] = cur
    return values


def honest_scores(g: PreparationGame, strategies) -> list[float]:
    """Worst-case (over each environment set) score of every honest strategy."""
    out = []
    for st in strategies:
        om = omega_table(g, st)[0][0]
        om = 0.5 * (om + om.conj().T)
        es = st.env_set
        if isinstance(es, Singleton):
            out.append(es.rho.expect(om))
        elif isinstance(es, AllStates):
            out.append(qmat.lambda_min(om))
        else:
            out.append(-es.max_value(-om))
    return out


def type_II_error(g: PreparationGame, cons: RoundConstraints) -> float:
    return 1.0 - min(honest_scores(g, cons.strategies()))


# ---------------------------------------------------------------------------
# single round

def _kraus4(st: FinitelyCorrelatedStrategy) -> np.ndarray:
    D, d = st.env_dim, st.dim
    return st.kraus.reshape(-1, D, d, D)  # [i, a, p, b]: <a,p|K_i|b>


def _variable_map(K4: np.ndarray, om: np.ndarray) -> np.ndarray:
    """Matrix of M ↦ Σ_i K_i†(Ω ⊗ M)K_i on row-major vecs."""
    D, d = K4.shape[1], K4.shape[2]
    T = np.einsum("iapb,ac,icqe->bepq", K4.conj(), om, K4, optimize=True)
    return T.reshape(D * D, d * d)


def _fixed_map(K4: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Matrix of Ω ↦ Σ_i K_i†(Ω ⊗ M)K_i on row-major vecs."""
    D = K4.shape[1]
    T = np.einsum("iapb,pq,icqe->beac", K4.conj(), M, K4, optimize=True)
    return T.reshape(D * D, D * D)


def optimize_round(
    g: PreparationGame,
    k: int,
    cls=None,
    constraints: RoundConstraints | None = None,
    tol: float = 1e-8,
    cache: dict | None = None,
    mu: list | None = None,
) -> RoundResult:
    """Re-optimize the POVMs of 0-based round k, all other rounds fixed.

    The support of each round-k POVM (its outcome keys) is kept; single-outcome
    POVMs (absorbing configurations) are left untouched. ``mu`` may carry the
    constrained player's values μ^(j), j > k, of ``g``.
    """
    cons = constraints
    if cons is None:
        raise ValueError("constraints are required")
    if not 0 <= k < g.n:
        raise IndexError(f"round {k} outside 0..{g.n - 1}")
    cls = measurement_class(cls if cls is not None else cons.cls)
    d = g.dim
    I = np.eye(d)
    strategies = cons.strategies()
    if mu is None or any(mu[j] is None for j in range(k + 1, g.n + 1)):
        mu = sep_values(g, cons.sep, cache, lo=k + 1)

    m = Model()
    # round-k POVM variables
    new_povms, variables = {}, {}
    for s in g.configs[k]:
        outs = list(g.povms[k][s])
        if len(outs) == 1:
            new_povms[s] = g.povms[k][s]
            continue
        els, extra = povm_variables(m, cls, len(outs), d)
        variables[s] = (outs, els, extra)

    def element(s, o):
        if s in variables:
            outs, els, _ = variables[s]
            return els[outs.index(o)]
        return g.povms[k][s][o]

    # dual tower for the constrained player
    idx_next = g.index(k + 1)
    nu = m.vector(len(g.configs[k]))
    for i, s in enumerate(g.configs[k]):
        W = sum(mu[k + 1][idx_next[o]] * element(s, o) for o in g.povms[k][s])
        cons.sep.add_dual_constraint(m, nu[i] * I - W)
    for j in range(k - 1, -1, -1):
        idx_next = g.index(j + 1)
        nu_j = m.vector(len(g.configs[j]))
        for i, s in enumerate(g.configs[j]):
            items = g.povms[j][s]
            W = dot_matrices(nu[np.array([idx_next[o] for o in items])], np.array(list(items.values())))
            cons.sep.add_dual_constraint(m, nu_j[i] * I - W)
        nu = nu_j
    m.add_le(nu[0], cons.e_I)

    # honest players
    eII = m.scalar()
    for st in strategies:
        K4 = _kraus4(st)
        D = st.env_dim
        om_next = omega_table(g, st)[k + 1]
        idx_next = g.index(k + 1)
        om = []
        for s in g.configs[k]:
            acc = None
            for o in g.povms[k][s]:
                O = om_next[idx_next[o]]
                M = element(s, o)
                if s in variables:
                    term = M.apply(_variable_map(K4, O), (D, D))
                else:
                    term = st.pullback(np.einsum("ab,pq->apbq", O, M).reshape(D * d, D * d))
                acc = term if acc is None else acc + term
            om.append(acc)
        for j in range(k - 1, -1, -1):
            idx_next = g.index(j + 1)
            prev = []
            for s in g.configs[j]:
                acc = None
                for o, M in g.povms[j][s].items():
                    O = om[idx_next[o]]
                    if isinstance(O, np.ndarray):
                        term = st.pullback(np.einsum("ab,pq->apbq", O, M).reshape(D * d, D * d))
                    else:
                        term = O.apply(_fixed_map(K4, M), (D, D))
                    acc = term if acc is None else acc + term
                prev.append(acc)
            om = prev
        st.env_set.add_dual_constraint(m, om[0] - (1 - eII) * np.eye(D))
    m.minimize(eII)
    sol = m.solve(tol=tol)

    for s, (outs, els, _) in variables.items():
        vals = qmat.clean_povm([sol.value(e) for e in els])
        new_povms[s] = dict(zip(outs, vals))
    rnd = {s: new_povms[s] for s in g.configs[k]}
    return RoundResult(
        game=g.with_round(k, rnd),
        objective=float(sol.value(eII)),
        bound=float(sol.value(nu[0])),
        info={"round": k, "backend": sol.raw.backend, "gap": sol.raw.gap, "iterations": sol.raw.iterations},
    )


# ---------------------------------------------------------------------------
# coordinate descent

@dataclass
class DescentStep:
    iteration: int
    round: int
    accepted: bool
    candidate: float  # replayed e_II of the candidate (nan if the subproblem failed)
    candidate_sep: float  # replayed constrained-player score of the candidate
    objective: float  # objective after this step
    message: str = ""


@dataclass
class DescentResult:
    game: PreparationGame
    objective: float
    sep_value: float
    trace: list  # objective after every iteration, starting with the initial game
    steps: list = field(default_factory=list)
    seed: int | None = None

    @property
    def sep_trace(self) -> list:
        return [s.candidate_sep for s in self.steps if s.accepted]


def _schedule(schedule, n):
    if schedule is None:
        while True:
            yield from range(n)
    elif callable(schedule):
        i = 0
        while True:
            yield int(schedule(i))
            i += 1
    else:
        seq = list(schedule)
        while True:
            yield from seq


def coordinate_descent(
    g0: PreparationGame,
    constraints: RoundConstraints,
    L: int = 40,
    schedule=None,
    tol: float = 1e-8,
    feas_tol: float = FEAS_TOL,
    patience: int | None = None,
    improve_tol: float = 1e-6,
) -> DescentResult:
    """Alternate single-round optimizations; keep a candidate only if its replay is feasible and no worse.

    ``schedule`` is None (round-robin over 0-based rounds), a sequence that is
    cycled, or a callable iteration → round. The loop stops after L
    iterations or after ``patience`` (default n) iterations without an
    improvement larger than ``improve_tol``.
    """
    cons = constraints
    cache: dict = {}
    mu = sep_values(g0, cons.sep, cache)
    sep0 = float(mu[0][0])
    if sep0 > cons.e_I + feas_tol:
        raise ValueError(f"initial game is infeasible: constrained score {sep0:.6g} > e_I = {cons.e_I}")
    cur, cur_mu = g0, mu
    obj = type_II_error(g0, cons)
    sep_val = sep0
    trace, steps = [obj], []
    patience = g0.n if patience is None else patience
    idle = 0
    order = _schedule(schedule, g0.n)
    for it in range(L):
        k = next(order)
        try:
            res = optimize_round(cur, k, cons.cls, cons, tol=tol, cache=cache, mu=cur_mu)
        except SolverError as e:
            warnings.warn(f"round {k + 1} subproblem failed ({e}); iterate skipped", RuntimeWarning, stacklevel=2)
            steps.append(DescentStep(it, k, False, float("nan"), float("nan"), obj, str(e)))
            trace.append(obj)
            idle += 1
            if idle >= patience:
                break
            continue
        cand_mu = sep_values(res.game, cons.sep, cache, lo=0, known=[None] * (k + 1) + cur_mu[k + 1:])
        cand_sep = float(cand_mu[0][0])
        cand = type_II_error(res.game, cons)
        ok = cand_sep <= cons.e_I + feas_tol and cand <= obj
        msg = "" if ok else ("infeasible replay" if cand_sep > cons.e_I + feas_tol else "no improvement")
        if ok:
            gain = obj - cand
            cur, cur_mu, obj, sep_val = res.game, cand_mu, cand, cand_sep
            idle = 0 if gain > improve_tol else idle + 1
        else:
            idle += 1
        steps.append(DescentStep(it, k, ok, cand, cand_sep, obj, msg))
        trace.append(obj)
        log.info("iteration %d round %d: candidate %.6f (sep %.6f) -> objective %.6f", it, k + 1, cand, cand_sep, obj)
        if idle >= patience:
            break
    return DescentResult(cur, obj, sep_val, trace, steps)


# ---------------------------------------------------------------------------
# environment-assisted instance

@dataclass
class InstanceSpec:
    n: int = 20
    m: int = 6
    d_A: int = 10
    tau: float = 0.1
    e_I: float = 0.5
    level: int = 1


def instance_configs(n: int, m: int) -> list:
    """S_1 = {''}, S_k = {'0', ..., 'm-1'} for 1 < k ≤ n, S_{n+1} = {'0', '1'}; '0' is absorbing."""
    mid = [str(i) for i in range(m)]
    return [[""]] + [mid for _ in range(n - 1)] + [["0", "1"]]


def instance_constraints(spec: InstanceSpec, target=None) -> RoundConstraints:
    from ..sim import build_interaction_strategy

    st = build_interaction_strategy(spec.d_A, spec.tau, target)
    return RoundConstraints(SepOuter((2, 2), level=spec.level), spec.e_I, [st])


def random_initial_game(spec: InstanceSpec, rng: np.random.Generator, sep: StateSet | None = None) -> PreparationGame:
    """Haar-rotated computational-basis measurements, then the final '1' effects scaled to meet e_I.

    Basis vector j leads to configuration j+1 in intermediate rounds; in the
    last round vectors 0, 1 lead to '1' and 2, 3 to '0'. Every non-absorbing
    POVM carries all outcomes (unused ones as zero) so the optimizer may use them.
    """
    d = 4
    configs = instance_configs(spec.n, spec.m)
    povms = []
    for k in range(spec.n):
        rnd = {}
        last = k == spec.n - 1
        for s in configs[k]:
            if s == "0":
                rnd[s] = {"0": np.eye(d, dtype=complex)}
                continue
            U = qmat.random_unitary(d, rng)
            P = [qmat.proj(U[:, j]) for j in range(d)]
            if last:
                rnd[s] = {"0": P[2] + P[3], "1": P[0] + P[1]}
            else:
                rnd[s] = {o: np.zeros((d, d), dtype=complex) for o in configs[k + 1]}
                for j in range(d):
                    rnd[s][str((j % (spec.m - 1)) + 1)] = rnd[s][str((j % (spec.m - 1)) + 1)] + P[j]
        povms.append(rnd)
    g = PreparationGame((2, 2), configs, povms, {"0": 0.0, "1": 1.0})
    sep = sep if sep is not None else SepOuter((2, 2), level=spec.level)
    mu = sep_values(g, sep)[0][0]
    c = min(1.0, spec.e_I / mu) if mu > 0 else 1.0
    return scale_final(g, c)


def scale_final(g: PreparationGame, c: float) -> PreparationGame:
    """Move a fraction 1-c of every last-round '1' effect to '0'; all scores scale by c."""
    last = {}
    for s, items in g.povms[-1].items():
        if "1" not in items:
            last[s] = items
            continue
        e1 = items["1"]
        out = dict(items)
        out["1"] = c * e1
        out["0"] = items.get("0", 0 * e1) + (1 - c) * e1
        last[s] = out
    return g.with_round(g.n - 1, last)


def run_restarts(
    spec: InstanceSpec | None = None,
    restarts: int = 10,
    seed: int = 0,
    L: int = 40,
    target=None,
    schedule=None,
    patience: int | None = None,
) -> list[DescentResult]:
    """Independent coordinate descents from seeded random initial games, in seed order."""
    spec = spec or InstanceSpec()
    cons = instance_constraints(spec, target)
    out = []
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        g0 = random_initial_game(spec, rng, cons.sep)
        res = coordinate_descent(g0, cons, L=L, schedule=schedule, patience=patience)
        res.seed = r
        out.append(res)
        log.info("restart %d: e_II %.6f", r, res.objective)
    return out


__all__ = [
    "DescentResult",
    "DescentStep",
    "InstanceSpec",
    "RoundConstraints",
    "RoundResult",
    "coordinate_descent",
    "honest_scores",
    "instance_configs",
    "instance_constraints",
    "optimize_round",
    "random_initial_game",
    "run_restarts",
    "scale_final",
    "sep_values",
    "type_II_error",
]
