"""Games that follow the gradient of a parametric witness.

Configurations are integer vectors s = (s^0, s^1, ..., s^m). In round k the
referee draws x ~ p_k, measures the two-outcome POVM M^x(θ_k) at
θ_k = θ_0 + ε·(s^1, ..., s^m) and adds the ±1 outcome to coordinate x.
Direction 0 estimates the witness W(θ) itself, x ≥ 1 its partial derivative
∂W/∂θ_x (scaled by 1/K). The final score is f(θ, s^0 / Σ_k p_k(0)).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Callable

import numpy as np

from . import qmat
from .game import PreparationGame, max_score_constrained, score_iid
from .qmat import KET_MINUS, KET_PLUS, X, Z, Povm
from .sets import NegativityBall, SepOuter, StateSet

NORM_TOL = 1e-9
CONFIG_CAP = 200_000


@dataclass
class GradientGameSpec:
    """Witness family W(θ), derivatives dW(θ) = [∂W/∂θ_1, ...], bound K, start θ_0, step ε.

    ``p(k, n)`` returns the distribution over {0, ..., m} for 1-based round k;
    ``f(θ, v)`` scores the final parameters and witness estimate.
    """

    dims: tuple
    W: Callable
    dW: Callable
    K: float
    theta0: np.ndarray
    eps: float
    p: Callable
    f: Callable

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.theta0 = np.atleast_1d(np.asarray(self.theta0, dtype=float))

    @property
    def m(self) -> int:
        return self.theta0.size

    def check(self, n: int, grid: np.ndarray | None = None) -> list[str]:
        """Normalization of p_k and norm bounds of W, ∂W/K sampled on a θ grid."""
        out = []
        for k in range(1, n + 1):
            pk = np.asarray(self.p(k, n), dtype=float)
            if pk.shape != (self.m + 1,) or np.any(pk < -NORM_TOL) or abs(pk.sum() - 1) > NORM_TOL:
                out.append(f"p_{k} is not a distribution over {{0..{self.m}}}")
        grid = np.linspace(-np.pi, np.pi, 25) if grid is None else grid
        for t in product(grid, repeat=self.m) if self.m <= 2 else [tuple(self.theta0)]:
            th = np.array(t)
            if _opnorm(self.W(th)) > 1 + NORM_TOL:
                out.append(f"‖W(θ)‖ > 1 at θ = {th}")
            for x, D in enumerate(self.dW(th)):
                if _opnorm(D) > self.K + NORM_TOL:
                    out.append(f"‖∂W/∂θ_{x + 1}‖ > K at θ = {th}")
        return out


def _opnorm(W) -> float:
    return float(np.max(np.abs(qmat.eigvalsh(qmat.hermitize(np.asarray(W, dtype=complex))))))


def povm_from_witness(W) -> Povm:
    """{M_{-1}, M_1} = {(I - W)/2, (I + W)/2}, so M_1 - M_{-1} = W."""
    W = qmat.hermitize(np.asarray(W, dtype=complex))
    if _opnorm(W) > 1 + NORM_TOL:
        raise ValueError(f"witness norm {_opnorm(W):.6g} exceeds 1")
    I = np.eye(W.shape[0])
    return Povm(((I - W) / 2, (I + W) / 2), (-1, 1))


def povm_from_gradient(dW, theta, x: int, K: float) -> Povm:
    """{M^x_{-1}, M^x_1} with M^x_1 - M^x_{-1} = (1/K) ∂W/∂θ_x (x is 1-based)."""
    D = np.asarray(dW(np.atleast_1d(theta))[x - 1], dtype=complex)
    if _opnorm(D) > K + NORM_TOL:
        raise ValueError(f"gradient norm {_opnorm(D):.6g} exceeds K = {K}")
    return povm_from_witness(D / K)


def _label(s) -> str:
    return ",".join(str(int(v)) for v in s)


def reachable(m: int, steps: int) -> list[tuple]:
    """Integer vectors in Z^{m+1} reachable by ``steps`` unit moves."""
    out = []
    for s in product(range(-steps, steps + 1), repeat=m + 1):
        a = sum(abs(v) for v in s)
        if a <= steps and (a - steps) % 2 == 0:
            out.append(s)
    return out


def build_game(spec: GradientGameSpec, n: int) -> PreparationGame:
    if n < 1:
        raise ValueError("need at least one round")
    m = spec.m
    configs_t = [reachable(m, k) for k in range(n + 1)]
    total = sum(len(c) for c in configs_t)
    if total > CONFIG_CAP:
        raise ValueError(f"{total} configurations exceed the cap of {CONFIG_CAP}")
    memo = {}

    def physical(shift, x):
        # the physical POVM depends on the parameter coordinates only
        if (shift, x) not in memo:
            theta = spec.theta0 + spec.eps * np.array(shift, dtype=float)
            memo[shift, x] = povm_from_witness(spec.W(theta)) if x == 0 else povm_from_gradient(spec.dW, theta, x, spec.K)
        return memo[shift, x]

    povms = []
    for k in range(1, n + 1):
        pk = np.asarray(spec.p(k, n), dtype=float)
        rnd = {}
        for s in configs_t[k - 1]:
            els = {}
            for x in range(m + 1):
                if pk[x] <= 0:
                    continue
                pov = physical(tuple(s[1:]), x)
                for a, e in zip(pov.labels, pov.elements):
                    nxt = list(s)
                    nxt[x] += a
                    els[_label(nxt)] = pk[x] * e
            rnd[_label(s)] = els
        povms.append(rnd)
    p0 = sum(float(spec.p(k, n)[0]) for k in range(1, n + 1))
    score = {}
    for s in configs_t[n]:
        theta = spec.theta0 + spec.eps * np.array(s[1:], dtype=float)
        score[_label(s)] = float(spec.f(theta, s[0] / p0 if p0 > 0 else 0.0))
    configs = [[_label(s) for s in c] for c in configs_t]
    return PreparationGame(spec.dims, configs, povms, score)


# ---------------------------------------------------------------------------
# entanglement quantification

def ent_quant_witness(theta) -> np.ndarray:
    """W(θ) with |ψ_θ> = cos θ|00> + sin θ|11> as its unique eigenvalue-1 eigenvector."""
    t = float(np.atleast_1d(theta)[0])
    s2, c2 = math.sin(2 * t), math.cos(2 * t)
    Pp, Pm = qmat.proj(KET_PLUS), qmat.proj(KET_MINUS)
    return 0.5 * (np.kron(Z, Z) + np.kron(Pp, s2 * X + c2 * Z) + np.kron(Pm, -s2 * X + c2 * Z))


def ent_quant_gradient(theta) -> list[np.ndarray]:
    t = float(np.atleast_1d(theta)[0])
    s2, c2 = math.sin(2 * t), math.cos(2 * t)
    Pp, Pm = qmat.proj(KET_PLUS), qmat.proj(KET_MINUS)
    return [np.kron(Pp, c2 * X - s2 * Z) - np.kron(Pm, c2 * X + s2 * Z)]


def binary_entropy(x: float) -> float:
    """Base-2 binary entropy with 0 log 0 = 0."""
    if not -1e-12 <= x <= 1 + 1e-12:
        raise ValueError("binary entropy needs x in [0, 1]")
    x = min(max(x, 0.0), 1.0)
    if x in (0.0, 1.0):
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


@lru_cache(maxsize=4096)
def _delta(theta: float, level: int) -> float:
    return SepOuter((2, 2), level).max_value(ent_quant_witness(theta))


def delta_theta(theta, level: int = 1) -> float:
    """Largest value of tr[W(θ)ρ] over the separable outer approximation."""
    return _delta(round(float(np.atleast_1d(theta)[0]), 12), int(level))


def heaviside(x: float) -> float:
    return 0.0 if x < 0 else 1.0


def logistic_schedule(k: int, n: int) -> np.ndarray:
    """p_k(0) = 1/(1 + e^{-(2k-n)}); the remaining mass measures the gradient."""
    p0 = 1.0 / (1.0 + math.exp(-(2 * k - n)))
    return np.array([p0, 1.0 - p0])


@dataclass
class EntQuantSpec:
    lam: float = 0.1
    n: int = 41
    eps: float = 0.1
    theta0: float = 0.0
    level: int = 1
    schedule: Callable = logistic_schedule

    def score_function(self) -> Callable:
        lam, level = self.lam, self.level

        def f(theta, v):
            t = float(np.atleast_1d(theta)[0])
            thr = 1 - lam + lam * delta_theta(t, level)
            return binary_entropy(math.cos(t) ** 2) * heaviside(v - thr)

        return f

    def gradient_spec(self) -> GradientGameSpec:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("λ must lie in [0, 1]")
        return GradientGameSpec(
            dims=(2, 2),
            W=ent_quant_witness,
            dW=ent_quant_gradient,
            K=1.0,
            theta0=np.array([self.theta0]),
            eps=self.eps,
            p=self.schedule,
            f=self.score_function(),
        )

    def game(self) -> PreparationGame:
        return build_game(self.gradient_spec(), self.n)


@dataclass
class GradientCurves:
    thetas: np.ndarray
    iid: np.ndarray
    separable: float
    negativity: dict = field(default_factory=dict)  # N → bound


def iid_curve(g: PreparationGame, thetas) -> np.ndarray:
    return np.array([score_iid(g, qmat.psi_theta_state(t)) for t in thetas])


def constrained_score(g: PreparationGame, C: StateSet) -> float:
    return max_score_constrained(g, C, record=False, cache={}).value


def gradient_curves(spec: EntQuantSpec, thetas, negativities=()) -> GradientCurves:
    g = spec.game()
    return GradientCurves(
        thetas=np.asarray(thetas, dtype=float),
        iid=iid_curve(g, thetas),
        separable=constrained_score(g, SepOuter((2, 2), spec.level)),
        negativity={float(N): constrained_score(g, NegativityBall((2, 2), N)) for N in negativities},
    )


def write_gradient_csv(path, curves: GradientCurves) -> None:
    Ns = sorted(curves.negativity)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "iid_score", "separable_bound"] + [f"negativity_bound[{N:g}]" for N in Ns])
        for t, v in zip(curves.thetas, curves.iid):
            w.writerow([repr(float(t)), repr(float(v)), repr(curves.separable)] + [repr(curves.negativity[N]) for N in Ns])


__all__ = [
    "EntQuantSpec",
    "GradientCurves",
    "GradientGameSpec",
    "binary_entropy",
    "build_game",
    "constrained_score",
    "delta_theta",
    "ent_quant_gradient",
    "ent_quant_witness",
    "gradient_curves",
    "heaviside",
    "iid_curve",
    "logistic_schedule",
    "povm_from_gradient",
    "povm_from_witness",
    "reachable",
    "write_gradient_csv",
]
