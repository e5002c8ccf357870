"""Games built from games: meta-games, repetitions and p-value bounds.

In round k of a meta-game in configuration s the referee plays an inner game
G_k(s) (a preparation game or another meta-game); its outcome o moves the
meta-game to s' with probability c_k(s'|o, s). The constrained player's value
follows the same backward recursion as for preparation games, with each step
an inner-game maximization under the effective score Σ_{s'} c_k(s'|s,o) ν_{s'}.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.stats import binom

from . import game as gm
from .game import PreparationGame
from .sets import StateSet

MAX_DEPTH = 8
KERNEL_TOL = 1e-9


class DepthError(ValueError):
    """Meta-game nesting beyond MAX_DEPTH (most likely a cycle)."""


@dataclass
class MetaGame:
    """n-round meta-game; ``inner[k][s]`` is a game, ``transition[k][s][o]`` a kernel over S_{k+2}."""

    configs: list
    inner: list
    transition: list
    score: Mapping

    def __post_init__(self):
        self.configs = [list(c) for c in self.configs]
        self.score = dict(self.score)
        bad = self.violations()
        if bad:
            raise gm.GameError(bad)

    @property
    def n(self) -> int:
        return len(self.inner)

    def outcomes(self):
        return self.configs[-1]

    def violations(self) -> list[str]:
        out = []
        if len(self.configs) != self.n + 1 or len(self.transition) != self.n:
            return [f"expected {self.n + 1} configuration sets and {self.n} transition tables"]
        if len(self.configs[0]) != 1:
            out.append("round 1 must have exactly one configuration")
        for k in range(self.n):
            nxt = set(self.configs[k + 1])
            for s in self.configs[k]:
                if s not in self.inner[k]:
                    out.append(f"round {k + 1}, config {s!r}: missing inner game")
                    continue
                kern = self.transition[k].get(s, {})
                for o in _outcomes(self.inner[k][s]):
                    row = kern.get(o)
                    if row is None:
                        out.append(f"round {k + 1}, config {s!r}: no transition for inner outcome {o!r}")
                        continue
                    if any(t not in nxt for t in row):
                        out.append(f"round {k + 1}, config {s!r}, outcome {o!r}: unknown target configuration")
                    p = np.array(list(row.values()), dtype=float)
                    if np.any(p < -KERNEL_TOL) or abs(p.sum() - 1) > KERNEL_TOL:
                        out.append(f"round {k + 1}, config {s!r}, outcome {o!r}: kernel is not a distribution")
        for s in self.configs[-1]:
            if s not in self.score:
                out.append(f"final config {s!r} has no score")
        return out

    def with_score(self, score: Mapping) -> "MetaGame":
        return MetaGame(self.configs, self.inner, self.transition, score)


def _outcomes(h) -> list:
    if isinstance(h, PreparationGame):
        return h.configs[h.n]
    if isinstance(h, MetaGame):
        return h.outcomes()
    raise TypeError(f"not a game handle: {h!r}")


def _key(h) -> str:
    if isinstance(h, PreparationGame):
        return "g:" + gm.digest(h)
    parts = [repr((h.configs, sorted(h.score.items(), key=repr)))]
    for k in range(h.n):
        for s in h.configs[k]:
            parts.append(_key(h.inner[k][s]))
            parts.append(repr(sorted(((repr(o), sorted(r.items(), key=repr)) for o, r in h.transition[k][s].items()))))
    return "m:" + gm.hashlib.sha256("|".join(parts).encode()).hexdigest()


@dataclass
class MetaSolver:
    """Backward recursion with inner maximizations memoized by (game content, set, scores)."""

    C: StateSet
    shortcut: bool = True
    cache: dict = field(default_factory=dict)
    _keys: dict = field(default_factory=dict, repr=False)

    def _handle_key(self, h) -> str:
        hit = self._keys.get(id(h))
        if hit is None or hit[0] is not h:
            hit = (h, _key(h))
            self._keys[id(h)] = hit
        return hit[1]

    def max_score(self, h, scores: Mapping, depth: int = 0) -> float:
        """Largest average of ``scores`` over the outcomes of game ``h``."""
        if depth > MAX_DEPTH:
            raise DepthError(f"meta-game nesting deeper than {MAX_DEPTH}")
        outs = _outcomes(h)
        if self.shortcut and len(outs) == 2:
            o0, o1 = outs
            g0, g1 = float(scores[o0]), float(scores[o1])
            if g0 > g1:
                return g1 + self.p_extreme(h, o0, depth) * (g0 - g1)
            return g0 + self.p_extreme(h, o1, depth) * (g1 - g0)
        return self._direct(h, {o: float(scores[o]) for o in outs}, depth)

    def p_extreme(self, h, o, depth: int) -> float:
        """max over the set of the probability of outcome o (p_max; p_min follows by complement)."""
        outs = _outcomes(h)
        return self._direct(h, {x: float(x == o) for x in outs}, depth)

    def _direct(self, h, scores: dict, depth: int) -> float:
        key = (self._handle_key(h), repr(self.C), tuple(sorted((repr(o), v) for o, v in scores.items())))
        if key in self.cache:
            return self.cache[key]
        if isinstance(h, PreparationGame):
            val = gm.max_score_constrained(h.with_score(scores), self.C, record=False).value
        else:
            val = self.meta_value(h.with_score(scores), depth + 1)
        self.cache[key] = val
        return val

    def meta_table(self, mg: MetaGame, depth: int = 0) -> list:
        """ν^(k)_s for every round (0-based), ν^(n+1) = γ."""
        nu = [None] * (mg.n + 1)
        nu[mg.n] = {s: float(mg.score[s]) for s in mg.configs[mg.n]}
        for k in reversed(range(mg.n)):
            cur = {}
            for s in mg.configs[k]:
                h = mg.inner[k][s]
                gamma = {o: sum(p * nu[k + 1][t] for t, p in mg.transition[k][s][o].items()) for o in _outcomes(h)}
                cur[s] = self.max_score(h, gamma, depth)
            nu[k] = cur
        return nu

    def meta_value(self, mg: MetaGame, depth: int = 0) -> float:
        return self.meta_table(mg, depth)[0][mg.configs[0][0]]


def max_score_meta(mg: MetaGame, C: StateSet, shortcut: bool = True, cache: dict | None = None) -> float:
    """ν^(1) of a meta-game for a C-constrained player."""
    solver = MetaSolver(C, shortcut, cache if cache is not None else {})
    return solver.meta_value(mg)


# ---------------------------------------------------------------------------
# repetitions

def _win_label(base) -> object:
    sc = base.score
    outs = _outcomes(base)
    vals = sorted(float(sc[o]) for o in outs)
    if len(outs) != 2 or vals != [0.0, 1.0]:
        raise ValueError("repetition needs a base game with two final configurations scored 0 and 1")
    return next(o for o in outs if float(sc[o]) == 1.0)


def repetition_game(base, m: int, v: int) -> MetaGame:
    """Play ``base`` m times, count wins, score 1 iff at least v wins."""
    if not 0 <= v <= m:
        raise ValueError("need 0 ≤ v ≤ m")
    if m < 1:
        raise ValueError("need at least one repetition")
    win = _win_label(base)
    outs = _outcomes(base)
    configs = [list(range(k + 1)) for k in range(m + 1)]
    inner = [{s: base for s in configs[k]} for k in range(m)]
    transition = [{s: {o: {s + int(o == win): 1.0} for o in outs} for s in configs[k]} for k in range(m)]
    score = {s: float(s >= v) for s in configs[m]}
    return MetaGame(configs, inner, transition, score)


def binomial_tail(p_win: float, m: int, v: int) -> float:
    """P[Binomial(m, p_win) ≥ v]."""
    if not 0.0 <= p_win <= 1.0:
        raise ValueError("p_win must lie in [0, 1]")
    if v <= 0:
        return 1.0
    if v > m:
        return 0.0
    return float(binom.sf(v - 1, m, p_win))


def gaussian_error_scaling(mu: float, e_I: float, m: int) -> float:
    """Normal approximation exp(-m(μ-e_I)² / (2 e_I(1-e_I))) to the repeated type-I error."""
    if not 0.0 < e_I < 1.0:
        raise ValueError("e_I must lie in (0, 1)")
    if mu < e_I:
        raise ValueError("the approximation needs e_I ≤ μ")
    return math.exp(-m * (mu - e_I) ** 2 / (2 * e_I * (1 - e_I)))


def pvalue_bound(G_Q: float, G_Pstar: float, m: int) -> float:
    """[1 - (G_Q - G_P*)²]^m bounding the expected p-value of an outside strategy Q."""
    for x in (G_Q, G_Pstar):
        if not 0.0 <= x <= 1.0:
            raise ValueError("scores must lie in [0, 1]")
    if G_Q < G_Pstar:
        raise ValueError("need G_Q ≥ G_P*")
    return (1.0 - (G_Q - G_Pstar) ** 2) ** m


def expected_pvalue(G_Q: float, G_Pstar: float, m: int) -> float:
    """Σ_v P[v wins | Q] · p(G, v, m), by direct summation."""
    v = np.arange(m + 1)
    w = binom.pmf(v, m, G_Q)
    tails = np.array([binomial_tail(G_Pstar, m, int(x)) for x in v])
    return float(w @ tails)


def repeated_errors(e_I: float, e_II: float, m: int, v: int) -> tuple[float, float]:
    """(e_I, e_II) of m repetitions with threshold v, given the base game's errors."""
    return binomial_tail(e_I, m, v), 1.0 - binomial_tail(1.0 - e_II, m, v)


def repetition_curve(base_curve, m: int, v: int) -> np.ndarray:
    """Rows (base e_I, base e_II, e_I, e_II) for every base (e_I, e_II) pair."""
    rows = []
    for eI, eII in np.asarray(base_curve, dtype=float):
        rows.append((eI, eII, *repeated_errors(eI, eII, m, v)))
    return np.array(rows)


def write_repetition_csv(path, curves: Mapping) -> None:
    """``curves`` maps a label such as 'G(30,22)' to (m, v, rows from repetition_curve)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["game", "m", "v", "base_e_I", "base_e_II", "e_I", "e_II", "total"])
        for label, (m, v, rows) in curves.items():
            for b1, b2, e1, e2 in rows:
                w.writerow([label, m, v, repr(b1), repr(b2), repr(e1), repr(e2), repr(e1 + e2)])


__all__ = [
    "DepthError",
    "MAX_DEPTH",
    "MetaGame",
    "MetaSolver",
    "binomial_tail",
    "expected_pvalue",
    "gaussian_error_scaling",
    "max_score_meta",
    "pvalue_bound",
    "repeated_errors",
    "repetition_curve",
    "repetition_game",
    "write_repetition_csv",
]
