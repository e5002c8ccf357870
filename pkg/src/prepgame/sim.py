"""Seeded Monte-Carlo play of preparation games.

Shots are vectorized: every round groups the live shots by configuration and
samples outcomes from the exact conditional distribution. Uniform draws come
from a Philox stream laid out as a (shots, rounds) table, so the draws of shot
i depend only on (seed, i).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.linalg import expm

from . import qmat
from .game import FinitelyCorrelatedStrategy, PreparationGame, score_fincorr, score_iid
from .qmat import DensityMatrix
from .sets import Singleton


# ---------------------------------------------------------------------------
# strategies

@dataclass(frozen=True)
class Iid:
    rho: object


@dataclass(frozen=True)
class FinCorr:
    strategy: FinitelyCorrelatedStrategy
    env: object = None  # initial environment state; ground state |0><0| if None


@dataclass(frozen=True)
class Adaptive:
    """States per (0-based round, configuration label); ``default`` fills gaps."""

    table: Mapping
    default: object = None


SimStrategy = Iid | FinCorr | Adaptive


@dataclass
class SimResult:
    mean_score: float
    std_error: float
    shots: int
    seed: int
    frequencies: dict = field(default_factory=dict)
    finals: np.ndarray | None = None  # per-shot final configuration index
    scores: np.ndarray | None = None  # per-shot score

    def within(self, value: float, sigmas: float = 4.0) -> bool:
        """True if ``value`` lies within ``sigmas`` standard errors of the mean."""
        return abs(self.mean_score - value) <= sigmas * self.std_error + 1e-12


def uniforms(seed: int, shots: int, rounds: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    return gen.random((shots, max(rounds, 1)))


def _sample(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF sampling; p has shape (shots, outcomes)."""
    c = np.cumsum(p, axis=1)
    c /= c[:, -1:]
    idx = (u[:, None] >= c).sum(axis=1)
    return np.minimum(idx, p.shape[1] - 1)


def _probs_fixed(elements: np.ndarray, rho: np.ndarray) -> np.ndarray:
    p = np.real(np.einsum("mab,ba->m", elements, rho))
    return np.clip(p, 0.0, None)


def _state_for(strat: Adaptive, k: int, s, d: int) -> np.ndarray:
    rho = strat.table.get((k, s), strat.default)
    if rho is None:
        raise KeyError(f"adaptive strategy has no state for round {k + 1}, config {s!r}")
    m = qmat.as_matrix(rho)
    if m.shape != (d, d):
        raise qmat.DimensionError(f"state of shape {m.shape} does not match game dimension {d}")
    return m


def simulate(g: PreparationGame, strat, shots: int, seed: int, keep_shots: bool = False) -> SimResult:
    """Play ``shots`` independent games; the mean score estimates the expected score."""
    if shots < 2:
        raise ValueError("need at least 2 shots for a standard error")
    rounds = g.compiled()
    d = g.dim
    U = uniforms(seed, shots, g.n)
    cur = np.zeros(shots, dtype=int)

    env = None
    if isinstance(strat, FinCorr):
        fc = strat.strategy
        if fc.dim != d:
            raise qmat.DimensionError(f"strategy emits dimension {fc.dim}, game expects {d}")
        D = fc.env_dim
        e0 = qmat.proj(np.eye(D)[0]) if strat.env is None else qmat.as_matrix(strat.env)
        if e0.shape != (D, D):
            raise qmat.DimensionError(f"environment state of shape {e0.shape}, expected {(D, D)}")
        env = np.broadcast_to(e0, (shots, D, D)).copy()
    elif isinstance(strat, Iid):
        rho = qmat.as_matrix(strat.rho)
        if rho.shape != (d, d):
            raise qmat.DimensionError(f"state of shape {rho.shape} does not match game dimension {d}")
    elif not isinstance(strat, Adaptive):
        raise TypeError(f"unknown strategy {strat!r}")

    for k, rnd in enumerate(rounds):
        nxt = np.empty(shots, dtype=int)
        for i, s in enumerate(g.configs[k]):
            sel = np.nonzero(cur == i)[0]
            if sel.size == 0:
                continue
            els = rnd.elements[i]
            if isinstance(strat, FinCorr):
                # joint state per shot, then unnormalized conditional environment per outcome
                K = fc.kraus
                joint = np.einsum("iab,nbc,idc->nad", K, env[sel], K.conj())
                jt = joint.reshape(sel.size, D, d, D, d)
                cond = np.einsum("napbq,mqp->nmab", jt, els)  # tr_H[(I⊗M_m) joint]
                p = np.clip(np.real(np.einsum("nmaa->nm", cond)), 0.0, None)
                o = _sample(p, U[sel, k])
                chosen = cond[np.arange(sel.size), o]
                norm = p[np.arange(sel.size), o]
                env[sel] = chosen / np.where(norm > 0, norm, 1.0)[:, None, None]
            else:
                rho = rho if isinstance(strat, Iid) else _state_for(strat, k, s, d)
                p = np.broadcast_to(_probs_fixed(els, rho), (sel.size, len(els)))
                o = _sample(p, U[sel, k])
            nxt[sel] = rnd.outcomes[i][o]
        cur = nxt

    table = g.final_scores()
    scores = table[cur]
    mean = float(np.sum(scores) / shots)
    std = float(np.std(scores, ddof=1) / np.sqrt(shots))
    labels = g.configs[g.n]
    counts = np.bincount(cur, minlength=len(labels))
    freqs = {labels[j]: counts[j] / shots for j in range(len(labels)) if counts[j]}
    return SimResult(
        mean_score=mean,
        std_error=std,
        shots=shots,
        seed=int(seed),
        frequencies=freqs,
        finals=cur if keep_shots else None,
        scores=scores if keep_shots else None,
    )


def write_trajectories(path, g: PreparationGame, result: SimResult) -> None:
    """CSV with one row per shot: shot, final configuration, score."""
    if result.finals is None:
        raise ValueError("simulate(..., keep_shots=True) is needed for a trajectory dump")
    labels = g.configs[g.n]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shot", "final_config", "score"])
        for i, (f, sc) in enumerate(zip(result.finals, result.scores)):
            w.writerow([i, labels[f], repr(float(sc))])


# ---------------------------------------------------------------------------
# environment-coupled source

def ladder(d: int) -> np.ndarray:
    """Truncated raising operator a†|j> = sqrt(j+1)|j+1>, j < d-1."""
    return np.diag(np.sqrt(np.arange(1, d)), -1).astype(complex)


def interaction_hamiltonian(d_A: int) -> np.ndarray:
    """a† ⊗ (I⊗σ⁺ + σ⁺⊗I) + h.c. on H_A ⊗ C² ⊗ C², with σ⁺ = |0><1|."""
    up = ladder(d_A)
    sp = np.array([[0, 1], [0, 0]], dtype=complex)
    L = np.kron(np.eye(2), sp) + np.kron(sp, np.eye(2))
    H = np.kron(up, L)
    return H + H.conj().T


def build_interaction_strategy(d_A: int, tau: float, target=None) -> FinitelyCorrelatedStrategy:
    """Single Kraus K = exp(-iτH)(I_A ⊗ |target>): the source couples to its environment each round."""
    if d_A < 2:
        raise ValueError("environment dimension must be at least 2")
    if target is None:
        target = qmat.psi_theta_state(np.pi / 4)
    t = qmat.as_matrix(target)
    w, v = np.linalg.eigh(t)
    if w[-1] < 1 - 1e-9:
        raise ValueError("the target preparation must be pure")
    psi = v[:, -1]
    U = expm(-1j * tau * interaction_hamiltonian(d_A))
    K = U @ np.kron(np.eye(d_A), psi[:, None])
    dims = target.dims if isinstance(target, DensityMatrix) else (2, 2)
    return FinitelyCorrelatedStrategy(K, d_A, dims)


# ---------------------------------------------------------------------------
# exact scores

def analytic_score(g: PreparationGame, strat) -> float:
    """Exact expected score of a simulation strategy."""
    if isinstance(strat, Iid):
        return score_iid(g, strat.rho)
    if isinstance(strat, FinCorr):
        st = strat.strategy
        env = qmat.proj(np.eye(st.env_dim)[0]) if strat.env is None else qmat.as_matrix(strat.env)
        return float(score_fincorr(g, st, Singleton(DensityMatrix((st.env_dim,), env)))[1])
    if isinstance(strat, Adaptive):
        return score_adaptive(g, strat)
    raise TypeError(f"unknown strategy {strat!r}")


def score_adaptive(g: PreparationGame, strat: Adaptive) -> float:
    """Backward recursion with the configuration-dependent states of an adaptive strategy."""
    mu = g.final_scores()
    for k in reversed(range(g.n)):
        rnd = g.compiled()[k]
        cur = np.empty(len(g.configs[k]))
        for i, s in enumerate(g.configs[k]):
            p = _probs_fixed(rnd.elements[i], _state_for(strat, k, s, g.dim))
            cur[i] = p @ mu[rnd.outcomes[i]]
        mu = cur
    return float(mu[0])


__all__ = [
    "Adaptive",
    "FinCorr",
    "Iid",
    "SimResult",
    "SimStrategy",
    "analytic_score",
    "build_interaction_strategy",
    "interaction_hamiltonian",
    "ladder",
    "score_adaptive",
    "simulate",
    "uniforms",
    "write_trajectories",
]
