"""Dense Hermitian linear algebra on tensor-product spaces.

Matrices are plain ``numpy`` complex arrays. Subsystem ordering follows
``numpy.kron``: the leftmost factor is the most significant index, and every
routine here (partial trace, partial transpose, embeddings) uses that
convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from math import comb
from typing import Iterable, Sequence

import numpy as np

DIM_CAP = 4096
HERM_TOL = 1e-8
STATE_TOL = 1e-9


class DimensionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# basic constants

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"X": X, "Y": Y, "Z": Z}


def ket(*amplitudes) -> np.ndarray:
    v = np.asarray(amplitudes, dtype=complex).ravel()
    return v


KET0 = ket(1, 0)
KET1 = ket(0, 1)
KET_PLUS = ket(1, 1) / np.sqrt(2)
KET_MINUS = ket(1, -1) / np.sqrt(2)
KET_PLUS_I = ket(1, 1j) / np.sqrt(2)
KET_MINUS_I = ket(1, -1j) / np.sqrt(2)


def proj(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex).ravel()
    return np.outer(v, v.conj())


def dag(m: np.ndarray) -> np.ndarray:
    return np.conj(np.transpose(m))


# ---------------------------------------------------------------------------
# tensor structure

def kron(*ops) -> np.ndarray:
    """Kronecker product of any number of operators (or vectors)."""
    if len(ops) == 1 and not isinstance(ops[0], np.ndarray):
        ops = tuple(ops[0])
    return reduce(np.kron, [np.asarray(o) for o in ops])


def _check_dims(m: np.ndarray, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    total = int(np.prod(dims))
    if m.ndim != 2 or m.shape != (total, total):
        raise DimensionError(f"matrix of shape {m.shape} does not match subsystem dims {dims}")
    return dims


def _as_index_set(subsystems, nsys: int) -> list[int]:
    if isinstance(subsystems, (int, np.integer)):
        subsystems = [int(subsystems)]
    out = sorted(set(int(s) for s in subsystems))
    for s in out:
        if not 0 <= s < nsys:
            raise DimensionError(f"subsystem index {s} out of range for {nsys} subsystems")
    return out


def partial_trace(m: np.ndarray, dims: Sequence[int], keep) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``."""
    m = np.asarray(m)
    dims = _check_dims(m, dims)
    n = len(dims)
    keep = _as_index_set(keep, n)
    t = m.reshape(dims + dims)
    # trace out from the highest index down so axis numbers stay valid
    current = n
    for s in reversed(range(n)):
        if s in keep:
            continue
        t = np.trace(t, axis1=s, axis2=s + current)
        current -= 1
    dk = int(np.prod([dims[s] for s in keep])) if keep else 1
    return t.reshape(dk, dk)


def partial_transpose(m: np.ndarray, dims: Sequence[int], subsystems) -> np.ndarray:
    """Transpose the indices of the listed subsystems; involutive."""
    m = np.asarray(m)
    dims = _check_dims(m, dims)
    n = len(dims)
    subs = _as_index_set(subsystems, n)
    axes = list(range(2 * n))
    for s in subs:
        axes[s], axes[s + n] = axes[s + n], axes[s]
    return m.reshape(dims + dims).transpose(axes).reshape(m.shape)


def permute_subsystems(m: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    m = np.asarray(m)
    dims = _check_dims(m, dims)
    n = len(dims)
    perm = list(perm)
    axes = perm + [p + n for p in perm]
    new_dim = m.shape[0]
    return m.reshape(dims + dims).transpose(axes).reshape(new_dim, new_dim)


def symmetric_projector(k: int, d: int, cap: int = DIM_CAP) -> np.ndarray:
    """Projector onto the Bose-symmetric subspace of (C^d)^{⊗k}.

    Built as the average of the k! subsystem permutation operators.
    """
    if k < 1 or d < 2:
        raise ValueError("symmetric_projector needs k >= 1 and d >= 2")
    total = d**k
    if total > cap:
        raise DimensionError(f"d^k = {total} exceeds dimension cap {cap}")
    from itertools import permutations

    idx = np.arange(total).reshape((d,) * k)
    out = np.zeros((total, total))
    perms = list(permutations(range(k)))
    for p in perms:
        image = idx.transpose(p).ravel()
        out[image, np.arange(total)] += 1.0
    return (out / len(perms)).astype(complex)


def symmetric_subspace_dim(k: int, d: int) -> int:
    return comb(d + k - 1, k)


# ---------------------------------------------------------------------------
# Hermitian helpers

def hermitian_asymmetry(m: np.ndarray) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m - dag(m)))) if m.size else 0.0


def hermitize(m: np.ndarray, tol: float = HERM_TOL) -> np.ndarray:
    """Return (m + m†)/2, rejecting inputs whose asymmetry exceeds ``tol``."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    asym = hermitian_asymmetry(m)
    if asym > tol:
        raise ValueError(f"matrix is not Hermitian (max |A - A†| = {asym:.3e})")
    return 0.5 * (m + dag(m))


def eig_hermitian(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending real spectrum and orthonormal eigenvectors (columns)."""
    h = hermitize(m)
    w, v = np.linalg.eigh(h)
    return w, v


def eigvalsh(m: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(0.5 * (m + dag(m)))


def lambda_max(m: np.ndarray) -> float:
    return float(eigvalsh(m)[-1])


def lambda_min(m: np.ndarray) -> float:
    return float(eigvalsh(m)[0])


def trace_norm(m: np.ndarray) -> float:
    """Sum of absolute eigenvalues (Hermitian input assumed)."""
    return float(np.sum(np.abs(eigvalsh(m))))


def is_psd(m: np.ndarray, tol: float = STATE_TOL) -> bool:
    return lambda_min(m) >= -tol


def psd_part(m: np.ndarray) -> np.ndarray:
    """Projection onto the PSD cone (negative eigenvalues clipped)."""
    w, v = np.linalg.eigh(0.5 * (m + dag(m)))
    return (v * np.clip(w, 0.0, None)) @ dag(v)


def negativity(rho: np.ndarray, dims: Sequence[int] = (2, 2)) -> float:
    """Sum of |negative eigenvalues| of the partial transpose over the last subsystem."""
    pt = partial_transpose(rho, dims, len(dims) - 1)
    w = eigvalsh(pt)
    return float(-np.sum(w[w < 0]))


def sqrtm_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + dag(m)))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ dag(v)


def inv_sqrtm_psd(m: np.ndarray, floor: float = 1e-15) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + dag(m)))
    return (v / np.sqrt(np.clip(w, floor, None))) @ dag(v)


# ---------------------------------------------------------------------------
# validated objects

@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A normalized PSD operator together with its subsystem dimensions."""

    dims: tuple[int, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        m = np.asarray(self.matrix, dtype=complex)
        _check_dims(m, dims)
        m = hermitize(m)
        w = np.linalg.eigvalsh(m)
        if w[0] < -STATE_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {w[0]:.3e}")
        tr = float(np.real(np.trace(m)))
        if abs(tr - 1.0) > STATE_TOL:
            raise ValueError(f"density matrix has trace {tr!r}")
        m.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_ket(cls, psi, dims=None) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        if dims is None:
            dims = (psi.size,)
        return cls(tuple(dims), proj(psi))

    @classmethod
    def maximally_mixed(cls, dims) -> "DensityMatrix":
        d = int(np.prod(dims))
        return cls(tuple(dims), np.eye(d, dtype=complex) / d)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def expect(self, op: np.ndarray) -> float:
        return float(np.real(np.trace(op @ self.matrix)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def as_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.matrix
    return np.asarray(rho, dtype=complex)


@dataclass(frozen=True, eq=False)
class Povm:
    """Positive operators, one per outcome label, summing to the identity."""

    elements: tuple
    labels: tuple = ()

    def __post_init__(self):
        els = tuple(hermitize(np.asarray(e, dtype=complex)) for e in self.elements)
        if not els:
            raise ValueError("a POVM needs at least one element")
        d = els[0].shape[0]
        for e in els:
            if e.shape != (d, d):
                raise DimensionError("POVM elements have inconsistent shapes")
        labels = tuple(self.labels) if self.labels else tuple(str(i) for i in range(len(els)))
        if len(labels) != len(els):
            raise ValueError("label count does not match element count")
        errors = povm_violations(els)
        if errors:
            raise ValueError("; ".join(errors))
        object.__setattr__(self, "elements", els)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def as_dict(self) -> dict:
        return dict(zip(self.labels, self.elements))

    def probabilities(self, rho) -> np.ndarray:
        r = as_matrix(rho)
        return np.array([np.real(np.trace(e @ r)) for e in self.elements])


def povm_violations(elements, tol: float = STATE_TOL) -> list[str]:
    """Describe PSD and completeness failures of a list of POVM elements."""
    out = []
    elements = [np.asarray(e) for e in elements]
    if not elements:
        return ["empty POVM"]
    d = elements[0].shape[0]
    for i, e in enumerate(elements):
        lm = lambda_min(e)
        if lm < -tol:
            out.append(f"element {i} has negative eigenvalue {lm:.3e}")
    dev = float(np.max(np.abs(sum(elements) - np.eye(d))))
    if dev > tol:
        out.append(f"elements do not sum to identity (max deviation {dev:.3e})")
    return out


def clean_povm(elements: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Project solver output onto an exact POVM.

    Negative eigenvalues are clipped and the elements are conjugated by
    S^{-1/2}, S = sum of the clipped elements, so completeness is exact up to
    rounding.
    """
    clipped = [psd_part(np.asarray(e, dtype=complex)) for e in elements]
    s = sum(clipped)
    t = inv_sqrtm_psd(s)
    return [0.5 * ((t @ c @ t) + dag(t @ c @ t)) for c in clipped]


# ---------------------------------------------------------------------------
# named states and random sampling

def phi_state() -> DensityMatrix:
    """(|00> + |1+>)/sqrt(2)."""
    return DensityMatrix.from_ket((kron(KET0, KET0) + kron(KET1, KET_PLUS)) / np.sqrt(2), (2, 2))


def psi_adapt_state() -> DensityMatrix:
    """(|0+> + |1,-i>)/sqrt(2)."""
    return DensityMatrix.from_ket((kron(KET0, KET_PLUS) + kron(KET1, KET_MINUS_I)) / np.sqrt(2), (2, 2))


def psi_theta_ket(theta: float) -> np.ndarray:
    return np.cos(theta) * kron(KET0, KET0) + np.sin(theta) * kron(KET1, KET1)


def psi_theta_state(theta: float) -> DensityMatrix:
    return DensityMatrix.from_ket(psi_theta_ket(theta), (2, 2))


def singlet_state() -> DensityMatrix:
    return DensityMatrix.from_ket((kron(KET0, KET1) - kron(KET1, KET0)) / np.sqrt(2), (2, 2))


def phi_plus_state() -> DensityMatrix:
    return psi_theta_state(np.pi / 4)


def named_state(name: str) -> DensityMatrix:
    """Built-in test states: phi, psi-adapt, singlet, phi-plus, psi-theta(<angle>)."""
    key = name.strip().lower()
    if key == "phi":
        return phi_state()
    if key in ("psi-adapt", "psi_adapt"):
        return psi_adapt_state()
    if key == "singlet":
        return singlet_state()
    if key in ("phi-plus", "phi+", "bell"):
        return phi_plus_state()
    if key.startswith("psi-theta"):
        inner = key[len("psi-theta"):].strip("():= ")
        if not inner:
            raise ValueError("psi-theta needs an angle, e.g. psi-theta(0.7)")
        return psi_theta_state(float(inner))
    raise KeyError(f"unknown state name {name!r}")


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    g = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_pure_ket(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_state(dims, rng: np.random.Generator) -> DensityMatrix:
    """Haar-random pure state mixed with the maximally mixed state at a uniform strength."""
    dims = tuple(dims)
    d = int(np.prod(dims))
    p = rng.uniform()
    m = p * proj(random_pure_ket(d, rng)) + (1 - p) * np.eye(d) / d
    return DensityMatrix(dims, m)


def random_product_state(dims, rng: np.random.Generator) -> np.ndarray:
    return kron(*[proj(random_pure_ket(d, rng)) for d in dims])


def random_separable_state(dims, rng: np.random.Generator, terms: int | None = None) -> DensityMatrix:
    """Random convex mixture of pure product states."""
    dims = tuple(dims)
    terms = terms or int(rng.integers(1, 6))
    w = rng.dirichlet(np.ones(terms))
    m = sum(wi * random_product_state(dims, rng) for wi in w)
    return DensityMatrix(dims, m)


def random_hermitian(d: int, rng: np.random.Generator, norm: float | None = None) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = 0.5 * (g + dag(g))
    if norm is not None:
        h = h * (norm / np.max(np.abs(np.linalg.eigvalsh(h))))
    return h


def pauli_projectors() -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Eigenprojectors (outcome +1, outcome -1) of X, Y and Z."""
    return {k: ((I2 + p) / 2, (I2 - p) / 2) for k, p in PAULIS.items()}


def ensure_same_dims(states: Iterable[DensityMatrix]) -> tuple[int, ...]:
    states = list(states)
    if not states:
        raise ValueError("need at least one state")
    dims = states[0].dims
    for s in states[1:]:
        if s.dims != dims:
            raise DimensionError("states act on different spaces")
    return dims
