import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prepgame import qmat
from prepgame.qmat import X, Y, Z, DensityMatrix, Povm

PHI_PLUS = np.array([1, 0, 0, 1]) / np.sqrt(2)


def _ptrace_loops(m, dA, dB):
    # keep the first factor by explicit index contraction
    out = np.zeros((dA, dA), dtype=complex)
    for i in range(dA):
        for j in range(dA):
            for k in range(dB):
                out[i, j] += m[i * dB + k, j * dB + k]
    return out


def test_kron_examples():
    assert np.allclose(qmat.kron(np.eye(2), np.eye(2)), np.eye(4))
    assert np.allclose(np.diag(qmat.kron(Z, Z)), [1, -1, -1, 1])
    assert np.allclose(np.diag(qmat.kron(Z, Z)).imag, 0)
    v = qmat.kron(X, X) @ PHI_PLUS
    # |00>+|11> is invariant when both bits flip
    assert np.allclose(v, [PHI_PLUS[3], PHI_PLUS[2], PHI_PLUS[1], PHI_PLUS[0]])


def test_partial_trace_examples(rng):
    r = qmat.random_state((2,), rng).matrix
    s = qmat.random_state((3,), rng).matrix
    assert np.allclose(qmat.partial_trace(np.kron(r, s), (2, 3), [0]), r * np.trace(s))
    bell = qmat.proj(PHI_PLUS)
    assert np.allclose(qmat.partial_trace(bell, (2, 2), [0]), _ptrace_loops(bell, 2, 2))
    assert np.allclose(_ptrace_loops(bell, 2, 2), np.eye(2) / 2)
    m = qmat.random_state((3, 2), rng).matrix
    assert np.allclose(qmat.partial_trace(m, (3, 2), [0]), _ptrace_loops(m, 3, 2), atol=1e-13)
    assert np.isclose(np.trace(qmat.partial_trace(m, (3, 2), [1])), np.trace(m))


def test_partial_trace_keep_second(rng):
    r = qmat.random_state((2,), rng).matrix
    s = qmat.random_state((3,), rng).matrix
    assert np.allclose(qmat.partial_trace(np.kron(r, s), (2, 3), [1]), s)


def test_partial_transpose_examples(rng):
    bell = qmat.proj(PHI_PLUS)
    pt = qmat.partial_transpose(bell, (2, 2), [1])
    assert math.isclose(np.linalg.eigvalsh(pt)[0], -0.5, abs_tol=1e-12)
    a = qmat.random_state((2,), rng).matrix
    b = qmat.random_state((3,), rng).matrix
    out = qmat.partial_transpose(np.kron(a, b), (2, 3), [1])
    assert np.allclose(out, np.kron(a, b.T))
    assert qmat.is_psd(out)


def test_symmetric_projector_examples():
    assert np.allclose(qmat.symmetric_projector(1, 3), np.eye(3))
    P = qmat.symmetric_projector(2, 2)
    swap = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            swap[j * 2 + i, i * 2 + j] = 1
    assert np.allclose(P, (np.eye(4) + swap) / 2)
    assert np.linalg.matrix_rank(P) == 3
    for k, d in [(2, 3), (3, 2), (3, 3)]:
        P = qmat.symmetric_projector(k, d)
        assert np.allclose(P @ P, P, atol=1e-10)
        assert math.isclose(np.trace(P).real, math.comb(d + k - 1, k))


def test_eig_hermitian(rng):
    w, _ = qmat.eig_hermitian(np.eye(3))
    assert np.allclose(w, 1)
    w, _ = qmat.eig_hermitian(np.kron(Z, Z))
    assert np.allclose(w, [-1, -1, 1, 1])
    H = qmat.random_hermitian(5, rng)
    w, V = qmat.eig_hermitian(H)
    assert np.all(np.diff(w) >= 0)
    assert np.allclose(V @ np.diag(w) @ V.conj().T, H, atol=1e-12)


def test_trace_norm(rng):
    r = qmat.random_state((2, 2), rng).matrix
    assert math.isclose(qmat.trace_norm(r), 1.0, rel_tol=1e-12)
    assert qmat.trace_norm(r - r) == 0
    assert math.isclose(qmat.trace_norm(np.diag([1.0, -1.0])), 2.0)


def test_density_matrix_rejects_bad_input():
    with pytest.raises(ValueError):
        DensityMatrix((2,), np.diag([1.2, -0.2]))
    with pytest.raises(ValueError):
        DensityMatrix((2,), np.eye(2))
    with pytest.raises(qmat.DimensionError):
        DensityMatrix((2, 2), np.eye(2) / 2)


def test_povm_rejects_incomplete():
    with pytest.raises(ValueError):
        Povm((0.9 * np.eye(2),))
    with pytest.raises(ValueError):
        Povm((np.diag([1.0, 0.0]), np.diag([0.0, 1.0 - 2e-9])))
    p = Povm((np.diag([1.0, 0.0]), np.diag([0.0, 1.0])), ("a", "b"))
    assert p.labels == ("a", "b")


def test_named_states():
    phi = qmat.named_state("phi").matrix
    v = (np.kron([1, 0], [1, 0]) + np.kron([0, 1], [1, 1] / np.sqrt(2))) / np.sqrt(2)
    assert np.allclose(phi, np.outer(v, v.conj()))
    psi = qmat.named_state("psi-adapt").matrix
    w = (np.kron([1, 0], [1, 1]) / np.sqrt(2) + np.kron([0, 1], [1, -1j]) / np.sqrt(2)) / np.sqrt(2)
    assert np.allclose(psi, np.outer(w, w.conj()))
    t = qmat.named_state("psi-theta(0.3)").matrix
    u = np.array([math.cos(0.3), 0, 0, math.sin(0.3)])
    assert np.allclose(t, np.outer(u, u))
    with pytest.raises(KeyError):
        qmat.named_state("nope")


def test_negativity_of_bell_state():
    assert math.isclose(qmat.negativity(qmat.proj(PHI_PLUS)), 0.5, rel_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 2), (2, 3), (3, 2), (2, 2, 2)]))
def test_partial_transpose_involution(seed, dims):
    r = np.random.default_rng(seed)
    m = qmat.random_hermitian(int(np.prod(dims)), r) + 1j * qmat.random_hermitian(int(np.prod(dims)), r)
    sub = [int(r.integers(len(dims)))]
    assert np.allclose(qmat.partial_transpose(qmat.partial_transpose(m, dims, sub), dims, sub), m)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_partial_trace_is_linear(seed, p):
    r = np.random.default_rng(seed)
    a = qmat.random_state((2, 3), r).matrix
    b = qmat.random_state((2, 3), r).matrix
    lhs = qmat.partial_trace(p * a + (1 - p) * b, (2, 3), [1])
    rhs = p * qmat.partial_trace(a, (2, 3), [1]) + (1 - p) * qmat.partial_trace(b, (2, 3), [1])
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_pauli_projectors():
    for k, (p, m) in qmat.pauli_projectors().items():
        assert np.allclose(p + m, np.eye(2))
        assert np.allclose(p - m, qmat.PAULIS[k])
    assert np.allclose(Y @ Y, np.eye(2))
