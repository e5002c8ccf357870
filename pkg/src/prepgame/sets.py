"""Convex sets of states with two oracles.

Every set supports

* ``max_linear(W)``: max tr(Wρ) over the set, with a maximizer;
* ``dual_member(W, v)``: decide whether vI - W lies in the dual cone C*,
  i.e. whether v bounds tr(Wρ) on the whole set, returning a certificate.

The SDP fragments behind both (``state_variable`` and ``add_dual_constraint``)
are also used directly by the design routines.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import combinations

import numpy as np

from . import qmat
from .qmat import DensityMatrix
from .sdp import Affine, Model, SolverError, kron, solve

MEMBER_TOL = 1e-9


@dataclass
class DualCertificate:
    """Witness that v·I - W lies in a dual cone.

    ``kind`` names the identity the parts satisfy:

    * 'scalar'     : v - tr(Wρ) = slack ≥ 0 for the single state ρ
    * 'psd'        : vI - W = R with R ⪰ 0
    * 'dps'        : V†(vI⊗I - W⊗I - Σ_S M_S^{T_S})V = M0 with all M ⪰ 0
    * 'eps-ball'   : A ⪰ 0, λI - A ⪰ 0, (μ+λ)I + (vI - W) - 2A ⪰ 0, 2tr(Aρ) - λ(1+ε) - μ ≥ 0
    * 'negativity' : vI - W - tI - Y^{T_B} ⪰ 0, 0 ⪯ Y ⪯ uI, t - uN ≥ 0
    """

    kind: str
    parts: dict = field(default_factory=dict)

    def violation(self, W: np.ndarray, v: float, cset: "StateSet") -> float:
        """Largest failure (identity residual or negative eigenvalue) of the certificate."""
        return cset._certificate_violation(np.asarray(W, dtype=complex), float(v), self)


class StateSet:
    dims: tuple

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def _check_op(self, W) -> np.ndarray:
        W = np.asarray(W, dtype=complex)
        if W.shape != (self.dim, self.dim):
            raise qmat.DimensionError(f"operator shape {W.shape} does not match set dims {self.dims}")
        return qmat.hermitize(W)

    # SDP fragments ------------------------------------------------------------
    def state_variable(self, model: Model) -> Affine:
        """New matrix expression constrained to the set (trace one included)."""
        raise NotImplementedError

    def add_dual_constraint(self, model: Model, X: Affine) -> dict:
        """Constrain X ∈ C*; returns the auxiliary certificate expressions."""
        raise NotImplementedError

    # oracles ------------------------------------------------------------------
    def max_linear(self, W, tol: float = 1e-9) -> tuple[float, DensityMatrix]:
        W = self._check_op(W)
        m = Model()
        rho = self.state_variable(m)
        m.maximize((W @ rho).trace().real())
        sol = m.solve(tol=tol)
        return sol.objective_value, _as_state(sol.value(rho), self.dims)

    def max_value(self, W, tol: float = 1e-9) -> float:
        """Value of max_linear only, re-solving a compiled problem in which just the objective changes."""
        W = self._check_op(W)
        tmpl = getattr(self, "_template", None)
        if tmpl is None:
            m = Model()
            rho = self.state_variable(m)
            p = m.compile()
            coef = _pad_cols(rho.coef, p.num_vars)
            tmpl = self._template = (p, coef, rho.const)
        p, coef, const = tmpl
        w = W.T.ravel()
        # minimize -Re tr(Wρ)
        prob = replace(p, c=-np.real(w @ coef), offset=-float(np.real(w @ const)))
        res = solve(prob, tol=tol, backend="clarabel")
        if res.status != "optimal":
            res = solve(prob, tol=tol, backend="dense")
        if res.status != "optimal":
            raise SolverError(res.status)
        return -res.objective_value

    def support_value(self, W, tol: float = 1e-9) -> float:
        """min v such that vI - W ∈ C*, computed through the dual fragment."""
        W = self._check_op(W)
        m = Model()
        v = m.scalar()
        parts = self.add_dual_constraint(m, v * np.eye(self.dim) - W)
        m.minimize(v)
        sol = m.solve(tol=tol)
        return sol.objective_value, sol, parts

    def dual_member(self, W, v: float, tol: float = MEMBER_TOL) -> tuple[bool, DualCertificate]:
        W = self._check_op(W)
        vstar, sol, parts = self.support_value(W)
        cert = self._certificate(W, vstar, sol, parts)
        cert = self._shift_certificate(cert, float(v) - vstar)
        return bool(v >= vstar - tol), cert

    def contains_sample(self, rng: np.random.Generator) -> DensityMatrix:
        """A random member state (used by soundness checks)."""
        raise NotImplementedError

    # certificate plumbing, overridden per family
    def _certificate(self, W, v, sol, parts) -> DualCertificate:
        raise NotImplementedError

    def _shift_certificate(self, cert: DualCertificate, delta: float) -> DualCertificate:
        raise NotImplementedError

    def _certificate_violation(self, W, v, cert) -> float:
        raise NotImplementedError


def _pad_cols(coef, n: int) -> np.ndarray:
    out = np.zeros((coef.shape[0], n), dtype=complex)
    out[:, : min(coef.shape[1], n)] = coef[:, :n].toarray()
    return out


def _as_state(m: np.ndarray, dims) -> DensityMatrix:
    """Clean solver output into a valid density matrix."""
    m = qmat.psd_part(np.asarray(m, dtype=complex))
    return DensityMatrix(tuple(dims), m / np.real(np.trace(m)))


def _neg_eig(m) -> float:
    return max(0.0, -qmat.lambda_min(m))


def _clip(m) -> np.ndarray:
    return qmat.psd_part(m)


# ---------------------------------------------------------------------------

class Singleton(StateSet):
    def __init__(self, rho: DensityMatrix):
        self.rho = rho
        self.dims = rho.dims

    def __repr__(self):
        return f"Singleton(dims={self.dims})"

    def state_variable(self, model):
        return Affine.constant(self.rho.matrix, model.nvars)

    def add_dual_constraint(self, model, X):
        model.add_ge((X @ self.rho.matrix).trace().real())
        return {}

    def max_linear(self, W, tol=1e-9):
        W = self._check_op(W)
        return self.rho.expect(W), self.rho

    def max_value(self, W, tol=1e-9):
        return self.max_linear(W)[0]

    def support_value(self, W, tol=1e-9):
        return self.rho.expect(W), None, {}

    def _certificate(self, W, v, sol, parts):
        return DualCertificate("scalar", {"slack": v - self.rho.expect(W)})

    def _shift_certificate(self, cert, delta):
        return DualCertificate("scalar", {"slack": cert.parts["slack"] + delta})

    def _certificate_violation(self, W, v, cert):
        s = cert.parts["slack"]
        return max(abs(v - self.rho.expect(W) - s), max(0.0, -s))

    def contains_sample(self, rng):
        return self.rho


class AllStates(StateSet):
    def __init__(self, dims):
        self.dims = tuple(int(d) for d in dims)

    def __repr__(self):
        return f"AllStates(dims={self.dims})"

    def state_variable(self, model):
        rho = model.hermitian(self.dim, psd=True)
        model.add_eq(rho.trace(), 1.0)
        return rho

    def add_dual_constraint(self, model, X):
        model.add_psd(X)
        return {}

    def max_linear(self, W, tol=1e-9):
        W = self._check_op(W)
        w, v = qmat.eig_hermitian(W)
        return float(w[-1]), DensityMatrix.from_ket(v[:, -1], self.dims)

    def max_value(self, W, tol=1e-9):
        return qmat.lambda_max(self._check_op(W))

    def support_value(self, W, tol=1e-9):
        return qmat.lambda_max(W), None, {}

    def _certificate(self, W, v, sol, parts):
        return DualCertificate("psd", {"R": v * np.eye(self.dim) - W})

    def _shift_certificate(self, cert, delta):
        return DualCertificate("psd", {"R": cert.parts["R"] + delta * np.eye(self.dim)})

    def _certificate_violation(self, W, v, cert):
        R = cert.parts["R"]
        ident = np.max(np.abs(v * np.eye(self.dim) - W - R))
        return max(ident, _neg_eig(R))

    def contains_sample(self, rng):
        return qmat.random_state(self.dims, rng)


class SepOuter(StateSet):
    """Outer approximation of the separable set by k-copy Bose-symmetric PPT extensions.

    Level 1 is the PPT set, which equals the separable set for 2x2 and 2x3.
    """

    def __init__(self, dims, level: int = 1, cap: int = qmat.DIM_CAP):
        dims = tuple(int(d) for d in dims)
        if len(dims) != 2:
            raise ValueError("SepOuter needs bipartite dims (d_A, d_B)")
        if level < 1:
            raise ValueError("SepOuter level must be >= 1")
        ext = dims[0] * dims[1] ** level
        if ext > cap:
            raise qmat.DimensionError(f"extension dimension {ext} exceeds cap {cap}")
        self.dims = dims
        self.level = int(level)

    def __repr__(self):
        return f"SepOuter(dims={self.dims}, level={self.level})"

    @cached_property
    def _ext_dims(self) -> tuple:
        return (self.dims[0],) + (self.dims[1],) * self.level

    @cached_property
    def _iso(self) -> np.ndarray:
        """Isometry from A ⊗ Sym^k(B) into A ⊗ B^{⊗k}."""
        dA, dB = self.dims
        if self.level == 1:
            return np.eye(dA * dB, dtype=complex)
        P = qmat.symmetric_projector(self.level, dB)
        w, v = np.linalg.eigh(P)
        sym = v[:, w > 0.5]
        return np.kron(np.eye(dA), sym)

    @cached_property
    def _subsets(self) -> list:
        ks = range(1, self.level + 1)
        return [list(S) for r in range(1, self.level + 1) for S in combinations(ks, r)]

    def state_variable(self, model):
        V = self._iso
        sigma = model.hermitian(V.shape[1], psd=True)
        model.add_eq(sigma.trace(), 1.0)
        if self.level == 1:
            ext = sigma
        else:
            ext = V @ sigma @ V.conj().T
        for S in self._subsets:
            model.add_psd(ext.ptranspose(self._ext_dims, S))
        if self.level == 1:
            return ext
        return ext.ptrace(self._ext_dims, [0, 1])

    def add_dual_constraint(self, model, X):
        V = self._iso
        D = V.shape[0]
        big = X if self.level == 1 else kron(X, np.eye(D // self.dim))
        Ms = []
        for S in self._subsets:
            M = model.hermitian(D, psd=True)
            Ms.append(M)
            big = big - M.ptranspose(self._ext_dims, S)
        rem = big if self.level == 1 else V.conj().T @ big @ V
        model.add_psd(rem)
        return {"M": Ms}

    def _certificate(self, W, v, sol, parts):
        Ms = [_clip(sol.value(M)) for M in parts["M"]]
        return DualCertificate("dps", {"M": Ms, "M0": self._remainder(W, v, Ms)})

    def _remainder(self, W, v, Ms):
        V = self._iso
        D = V.shape[0]
        X = v * np.eye(self.dim) - W
        big = np.kron(X, np.eye(D // self.dim))
        for S, M in zip(self._subsets, Ms):
            big = big - qmat.partial_transpose(M, self._ext_dims, S)
        return V.conj().T @ big @ V

    def _shift_certificate(self, cert, delta):
        return DualCertificate("dps", {"M": cert.parts["M"], "M0": cert.parts["M0"] + delta * np.eye(cert.parts["M0"].shape[0])})

    def _certificate_violation(self, W, v, cert):
        Ms = cert.parts["M"]
        ident = np.max(np.abs(self._remainder(W, v, Ms) - cert.parts["M0"]))
        return max([ident, _neg_eig(cert.parts["M0"])] + [_neg_eig(M) for M in Ms])

    def contains_sample(self, rng):
        return qmat.random_separable_state(self.dims, rng)


class EpsBall(StateSet):
    """States within trace distance ε (in the ‖·‖₁ norm) of a reference state."""

    def __init__(self, rho: DensityMatrix, eps: float):
        if eps < 0:
            raise ValueError("ε must be nonnegative")
        if eps > 2:
            warnings.warn(f"ε = {eps} exceeds the trace-norm diameter 2; clamped to 2", stacklevel=2)
            eps = 2.0
        self.rho = rho
        self.eps = float(eps)
        self.dims = rho.dims

    def __repr__(self):
        return f"EpsBall(dims={self.dims}, eps={self.eps})"

    def state_variable(self, model):
        d = self.dim
        rho = model.hermitian(d, psd=True)
        P = model.hermitian(d, psd=True)
        Q = model.hermitian(d, psd=True)
        model.add_eq(rho.trace(), 1.0)
        model.add_eq(rho - self.rho.matrix, P - Q)
        model.add_le((P + Q).trace().real(), self.eps)
        return rho

    def add_dual_constraint(self, model, X):
        d = self.dim
        I = np.eye(d)
        A = model.hermitian(d, psd=True)
        mu = model.scalar()
        lam = model.scalar()
        model.add_psd(lam * I - A)
        model.add_psd((mu + lam) * I + X - 2 * A)
        model.add_ge(2 * (A @ self.rho.matrix).trace().real() - (1 + self.eps) * lam - mu)
        return {"A": A, "mu": mu, "lam": lam}

    def _certificate(self, W, v, sol, parts):
        return DualCertificate(
            "eps-ball",
            {"A": _clip(sol.value(parts["A"])), "mu": float(sol.value(parts["mu"])), "lam": float(sol.value(parts["lam"]))},
        )

    def _shift_certificate(self, cert, delta):
        p = dict(cert.parts)
        p["mu"] = p["mu"] - delta
        return DualCertificate("eps-ball", p)

    def _certificate_violation(self, W, v, cert):
        return eps_certificate_violation(v * np.eye(self.dim) - W, self.rho, self.eps, cert)

    def contains_sample(self, rng):
        # mix the reference with a random state; ‖t(σ-ρ)‖₁ ≤ 2t
        sigma = qmat.random_state(self.dims, rng).matrix
        t = rng.uniform(0, min(1.0, self.eps / 2))
        return DensityMatrix(self.dims, (1 - t) * self.rho.matrix + t * sigma)


def eps_certificate_violation(M, rho: DensityMatrix, eps: float, cert: DualCertificate) -> float:
    d = M.shape[0]
    I = np.eye(d)
    A, mu, lam = cert.parts["A"], cert.parts["mu"], cert.parts["lam"]
    scalar = 2 * np.real(np.trace(A @ rho.matrix)) - lam * (1 + eps) - mu
    return max(_neg_eig(A), _neg_eig(lam * I - A), _neg_eig((mu + lam) * I + M - 2 * A), max(0.0, -scalar))


def eps_ball_dual_member(M, rho: DensityMatrix, eps: float, tol: float = MEMBER_TOL) -> tuple[bool, DualCertificate]:
    """Is min over the ε-ball around ρ of tr(Mρ') nonnegative?"""
    ball = EpsBall(rho, eps)
    M = ball._check_op(M)
    # M ∈ C*  ⇔  0·I - (-M) ∈ C*
    ok, cert = ball.dual_member(-M, 0.0, tol=tol)
    return ok, cert


class NegativityBall(StateSet):
    """States whose partial transpose has negative part of trace at most N."""

    def __init__(self, dims, n_max: float):
        if n_max < 0:
            raise ValueError("negativity bound must be nonnegative")
        dims = tuple(int(d) for d in dims)
        if len(dims) != 2:
            raise ValueError("NegativityBall needs bipartite dims")
        self.dims = dims
        self.n_max = float(n_max)

    def __repr__(self):
        return f"NegativityBall(dims={self.dims}, n_max={self.n_max})"

    def state_variable(self, model):
        d = self.dim
        rho = model.hermitian(d, psd=True)
        P = model.hermitian(d, psd=True)
        Q = model.hermitian(d, psd=True)
        model.add_eq(rho.trace(), 1.0)
        model.add_eq(rho.ptranspose(self.dims, 1), P - Q)
        model.add_le(Q.trace().real(), self.n_max)
        return rho

    def add_dual_constraint(self, model, X):
        d = self.dim
        I = np.eye(d)
        Y = model.hermitian(d, psd=True)
        t = model.scalar()
        u = model.scalar(nonneg=True)
        model.add_psd(u * I - Y)
        model.add_psd(X - t * I - Y.ptranspose(self.dims, 1))
        model.add_ge(t - self.n_max * u)
        return {"Y": Y, "t": t, "u": u}

    def _certificate(self, W, v, sol, parts):
        return DualCertificate(
            "negativity",
            {"Y": _clip(sol.value(parts["Y"])), "t": float(sol.value(parts["t"])), "u": float(sol.value(parts["u"]))},
        )

    def _shift_certificate(self, cert, delta):
        p = dict(cert.parts)
        p["t"] = p["t"] + delta
        return DualCertificate("negativity", p)

    def _certificate_violation(self, W, v, cert):
        d = self.dim
        I = np.eye(d)
        Y, t, u = cert.parts["Y"], cert.parts["t"], cert.parts["u"]
        X = v * I - W
        return max(
            _neg_eig(Y),
            _neg_eig(u * I - Y),
            max(0.0, -u),
            _neg_eig(X - t * I - qmat.partial_transpose(Y, self.dims, 1)),
            max(0.0, -(t - self.n_max * u)),
        )

    def contains_sample(self, rng):
        # separable states always qualify; entangled samples are accepted when the bound allows
        for _ in range(20):
            s = qmat.random_state(self.dims, rng)
            if qmat.negativity(s.matrix, self.dims) <= self.n_max:
                return s
        return qmat.random_separable_state(self.dims, rng)


def default_sep(dims) -> SepOuter:
    return SepOuter(dims, level=1)


__all__ = [
    "AllStates",
    "DualCertificate",
    "EpsBall",
    "NegativityBall",
    "SepOuter",
    "Singleton",
    "StateSet",
    "build_sep_outer_constraints",
    "eps_ball_dual_member",
]


def build_sep_outer_constraints(model: Model, level: int, dims) -> Affine:
    """Add a k-copy symmetric PPT extension to ``model``; returns the ρ_AB expression."""
    return SepOuter(dims, level).state_variable(model)
