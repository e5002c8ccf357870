"""Preparation games and their analytic scores.

A game with n rounds is given by configuration label lists S_1..S_{n+1}
(S_1 holds a single initial label), a POVM for every round k and
configuration s ∈ S_k whose outcomes are labels of S_{k+1}, and the expected
score attached to every final configuration. Outcomes missing from a POVM
dictionary have the zero operator.

Three ways of scoring a game live here: an i.i.d. player, a player confined
to a convex set C who may adapt per configuration (backward recursion), and
a finitely correlated player whose preparations are coupled through an
environment (operator recursion for Ω).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import qmat
from .qmat import DensityMatrix
from .sets import AllStates, Singleton, StateSet

POVM_TOL = 1e-9
KRAUS_TOL = 1e-9
TIGHT_TOL = 1e-6


class GameError(ValueError):
    """A game (or strategy) failed validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations[:5]) + (" ..." if len(self.violations) > 5 else ""))


@dataclass
class RoundPovms:
    """Dense-index form of one round: for config i, outcome indices and elements."""

    outcomes: list  # list of int arrays
    elements: list  # list of (m, d, d) complex arrays


class PreparationGame:
    def __init__(self, dims, configs, povms, score):
        self.dims = tuple(int(d) for d in dims)
        self.configs = [list(c) for c in configs]
        self.povms = [
            {s: {o: np.asarray(e, dtype=complex) for o, e in outs.items()} for s, outs in rnd.items()}
            for rnd in povms
        ]
        self.score = {k: float(v) for k, v in dict(score).items()}
        self._compiled = None

    @property
    def n(self) -> int:
        return len(self.povms)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, k: int) -> dict:
        """label → dense index for S_{k+1} (k is 0-based)."""
        return {s: i for i, s in enumerate(self.configs[k])}

    def __repr__(self):
        sizes = ",".join(str(len(c)) for c in self.configs)
        return f"PreparationGame(n={self.n}, dims={self.dims}, |S|=[{sizes}])"

    # -- validation -------------------------------------------------------------
    def violations(self, tol: float = POVM_TOL) -> list[str]:
        out = []
        d = self.dim
        if len(self.configs) != self.n + 1:
            out.append(f"expected {self.n + 1} configuration sets, found {len(self.configs)}")
            return out
        if len(self.configs[0]) != 1:
            out.append(f"round 1 must have exactly one configuration, found {len(self.configs[0])}")
        for k, labels in enumerate(self.configs):
            if len(set(labels)) != len(labels):
                out.append(f"round {k + 1}: duplicate configuration labels")
        I = np.eye(d)
        for k in range(self.n):
            nxt = set(self.configs[k + 1])
            rnd = self.povms[k]
            for s in self.configs[k]:
                if s not in rnd:
                    out.append(f"round {k + 1}, config {s!r}: missing POVM")
                    continue
                total = np.zeros((d, d), dtype=complex)
                for o, e in rnd[s].items():
                    if o not in nxt:
                        out.append(f"round {k + 1}, config {s!r}: outcome {o!r} is not a configuration of round {k + 2}")
                    if e.shape != (d, d):
                        out.append(f"round {k + 1}, config {s!r}, outcome {o!r}: shape {e.shape}, expected {(d, d)}")
                        continue
                    asym = qmat.hermitian_asymmetry(e)
                    if asym > 1e-8:
                        out.append(f"round {k + 1}, config {s!r}, outcome {o!r}: not Hermitian ({asym:.2e})")
                        continue
                    lm = qmat.lambda_min(e)
                    if lm < -tol:
                        out.append(f"round {k + 1}, config {s!r}, outcome {o!r}: negative eigenvalue {lm:.3e}")
                    total = total + e
                dev = float(np.max(np.abs(total - I)))
                if dev > tol:
                    out.append(f"round {k + 1}, config {s!r}: elements do not sum to identity (max deviation {dev:.3e})")
            for s in rnd:
                if s not in set(self.configs[k]):
                    out.append(f"round {k + 1}: POVM given for unknown config {s!r}")
        final = set(self.configs[self.n])
        for s in self.configs[self.n]:
            if s not in self.score:
                out.append(f"final config {s!r} has no score")
        for s in self.score:
            if s not in final:
                out.append(f"score given for unknown final config {s!r}")
        return out

    def compiled(self) -> list[RoundPovms]:
        if self._compiled is None:
            v = self.violations()
            if v:
                raise GameError(v)
            rounds = []
            for k in range(self.n):
                idx = self.index(k + 1)
                outs, els = [], []
                for s in self.configs[k]:
                    items = self.povms[k][s]
                    outs.append(np.array([idx[o] for o in items], dtype=int))
                    els.append(np.array([qmat.hermitize(e) for e in items.values()]).reshape(len(items), self.dim, self.dim))
                rounds.append(RoundPovms(outs, els))
            self._compiled = rounds
        return self._compiled

    def final_scores(self) -> np.ndarray:
        return np.array([self.score[s] for s in self.configs[self.n]])

    def effective_operator(self, k: int, i: int, mu_next: np.ndarray) -> np.ndarray:
        """Σ_{s'} μ_{s'} M^{(k)}_{s'|s} for 0-based round k and config index i."""
        rnd = self.compiled()[k]
        return np.tensordot(mu_next[rnd.outcomes[i]], rnd.elements[i], axes=1)

    def with_score(self, score: Mapping) -> "PreparationGame":
        g = PreparationGame(self.dims, self.configs, self.povms, score)
        if self._compiled is not None:
            g._compiled = self._compiled
        return g

    def with_round(self, k: int, povms: dict) -> "PreparationGame":
        """Copy with round k (0-based) replaced."""
        new = list(self.povms)
        new[k] = povms
        return PreparationGame(self.dims, self.configs, new, self.score)


def validate(g: PreparationGame) -> list[str]:
    """Empty list if the game is well formed, else human-readable violations."""
    return g.violations()


def absorbing_povm(label: str, dim: int) -> dict:
    """{I} with a self-loop: the configuration never changes again."""
    return {label: np.eye(dim, dtype=complex)}


@dataclass
class ScoreTable:
    """μ^(k)_s for k = 1..n+1 (stored 0-based), plus optional maximizers."""

    game: PreparationGame
    values: list
    maximizers: dict = field(default_factory=dict)
    tight: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return float(self.values[0][0])

    def __getitem__(self, key) -> float:
        k, s = key
        return float(self.values[k][self.game.index(k)[s]])


# ---------------------------------------------------------------------------
# i.i.d. and C-constrained players

def score_iid(g: PreparationGame, rho) -> float:
    r = qmat.as_matrix(rho)
    if r.shape != (g.dim, g.dim):
        raise qmat.DimensionError(f"state of shape {r.shape} does not match game dims {g.dims}")
    mu = g.final_scores()
    for k in reversed(range(g.n)):
        rnd = g.compiled()[k]
        new = np.empty(len(g.configs[k]))
        for i in range(new.size):
            p = np.real(np.einsum("mab,ba->m", rnd.elements[i], r))
            new[i] = p @ mu[rnd.outcomes[i]]
        mu = new
    return float(mu[0])


def score_table_iid(g: PreparationGame, rho) -> ScoreTable:
    return max_score_constrained(g, Singleton(rho if isinstance(rho, DensityMatrix) else DensityMatrix(g.dims, rho)))


def max_score_constrained(g: PreparationGame, C: StateSet, record: bool = True, cache: dict | None = None) -> ScoreTable:
    """Backward recursion μ^(k)_s = max_{ρ∈C} Σ_{s'} tr(M^(k)_{s'|s} ρ) μ^(k+1)_{s'}.

    ``cache`` (optional dict) memoizes set maximizations by operator bytes,
    which pays off when many configurations share the same effective operator.
    """
    if tuple(C.dims) != g.dims:
        raise qmat.DimensionError(f"set dims {C.dims} do not match game dims {g.dims}")
    values = [None] * (g.n + 1)
    values[g.n] = g.final_scores()
    maximizers, tight = {}, {}
    for k in reversed(range(g.n)):
        mu_next = values[k + 1]
        cur = np.empty(len(g.configs[k]))
        for i, s in enumerate(g.configs[k]):
            W = g.effective_operator(k, i, mu_next)
            key = None
            if cache is not None:
                key = np.round(W, 12).tobytes()
                hit = cache.get(key)
            if cache is not None and hit is not None and (hit[1] is not None or not record):
                val, rho = hit
            elif not record and _is_scalar(W):
                # every state gives tr(cI ρ) = c
                val, rho = float(np.real(W[0, 0])), None
            elif not record:
                val, rho = C.max_value(W), None
                if cache is not None:
                    cache[key] = (val, rho)
            else:
                val, rho = C.max_linear(W)
                if cache is not None:
                    cache[key] = (val, rho)
            cur[i] = val
            if record:
                maximizers[(k, s)] = rho
                tight[(k, s)] = abs(val - rho.expect(W)) <= TIGHT_TOL
        values[k] = cur
    return ScoreTable(g, values, maximizers, tight)


def _is_scalar(W: np.ndarray, tol: float = 1e-13) -> bool:
    return float(np.max(np.abs(W - W[0, 0] * np.eye(W.shape[0])))) <= tol


# ---------------------------------------------------------------------------
# finitely correlated players

class FinitelyCorrelatedStrategy:
    """Kraus operators K_i : H_A → H_A ⊗ H (environment factor first)."""

    def __init__(self, kraus, env_dim: int, dims, env_set: StateSet | None = None):
        K = np.asarray(kraus, dtype=complex)
        if K.ndim == 2:
            K = K[None]
        self.kraus = K
        self.env_dim = int(env_dim)
        self.dims = tuple(int(d) for d in dims)
        self.env_set = env_set if env_set is not None else AllStates((self.env_dim,))
        d = int(np.prod(self.dims))
        if K.shape[1:] != (self.env_dim * d, self.env_dim):
            raise qmat.DimensionError(f"Kraus shape {K.shape[1:]} does not map C^{self.env_dim} to C^{self.env_dim}⊗C^{d}")
        dev = float(np.max(np.abs(np.einsum("iab,iac->bc", K.conj(), K) - np.eye(self.env_dim))))
        if dev > KRAUS_TOL:
            raise GameError([f"Kraus operators are not trace preserving (max deviation {dev:.3e})"])

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def emit(self, env: np.ndarray) -> np.ndarray:
        """Joint state Σ_i K_i ρ_A K_i† on H_A ⊗ H."""
        return np.einsum("iab,bc,idc->ad", self.kraus, env, self.kraus.conj())

    def pullback(self, X: np.ndarray) -> np.ndarray:
        """Σ_i K_i† X K_i (Heisenberg picture)."""
        return np.einsum("iab,ac,icd->bd", self.kraus.conj(), X, self.kraus)

    @classmethod
    def from_state(cls, rho, dims=None) -> "FinitelyCorrelatedStrategy":
        """Trivial environment: every round emits the same pure state."""
        r = qmat.as_matrix(rho)
        w, v = np.linalg.eigh(r)
        if w[-1] < 1 - 1e-9:
            # mixed: purify into a Kraus family with a 1-dim environment
            K = np.array([np.sqrt(max(x, 0)) * v[:, [j]] for j, x in enumerate(w) if x > 1e-15])
            return cls(K, 1, dims or (r.shape[0],), Singleton(DensityMatrix((1,), np.eye(1))))
        return cls(v[:, [-1]][None], 1, dims or (r.shape[0],), Singleton(DensityMatrix((1,), np.eye(1))))


def omega_table(g: PreparationGame, strat: FinitelyCorrelatedStrategy) -> list:
    """Ω^(k)_s for every round (0-based), with Ω^(n+1)_s = g(s)·I."""
    if strat.dims != g.dims and strat.dim != g.dim:
        raise qmat.DimensionError("strategy dims do not match game dims")
    D = strat.env_dim
    IA = np.eye(D)
    omegas = [None] * (g.n + 1)
    omegas[g.n] = np.array([sc * IA for sc in g.final_scores()])
    for k in reversed(range(g.n)):
        rnd = g.compiled()[k]
        nxt = omegas[k + 1]
        cur = np.empty((len(g.configs[k]), D, D), dtype=complex)
        for i in range(cur.shape[0]):
            # Σ_{s'} Ω_{s'} ⊗ M_{s'|s}, written as a 4-index tensor then flattened
            T = np.einsum("mab,mpq->apbq", nxt[rnd.outcomes[i]], rnd.elements[i])
            X = T.reshape(D * g.dim, D * g.dim)
            cur[i] = strat.pullback(X)
        omegas[k] = cur
    return omegas


def score_fincorr(g: PreparationGame, strat: FinitelyCorrelatedStrategy, env_set: StateSet | None = None):
    """(Ω^(1), value) where value maximizes tr(ρ_A Ω) over the environment set."""
    om = omega_table(g, strat)[0][0]
    om = 0.5 * (om + om.conj().T)
    es = env_set if env_set is not None else strat.env_set
    if isinstance(es, Singleton):
        return om, es.rho.expect(om)
    if isinstance(es, AllStates):
        return om, qmat.lambda_max(om)
    return om, es.max_value(om)


def fincorr_dual_check(omega: np.ndarray, v: float, env_set: StateSet) -> bool:
    """True iff v·I - Ω lies in the dual cone of the environment set."""
    return env_set.dual_member(omega, v)[0]


def digest(g: PreparationGame) -> str:
    """Content hash of a game (dims, configurations, POVM entries, scores)."""
    h = hashlib.sha256()
    h.update(repr((g.dims, g.configs, sorted(g.score.items()))).encode())
    for k in range(g.n):
        for s in g.configs[k]:
            for o, e in g.povms[k].get(s, {}).items():
                h.update(repr((k, s, o)).encode())
                h.update(np.ascontiguousarray(e, dtype=complex).tobytes())
    return h.hexdigest()
