import io
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from prepgame import qmat
from prepgame.sdp import Model, PsdBlock, SdpProblem, SolverError, embed_hermitian, solve, unembed_hermitian

BACKENDS = ["dense", "clarabel"]
PHI_PLUS = qmat.proj(np.array([1, 0, 0, 1]) / np.sqrt(2))


def _dual_objective(p, res):
    return (
        p.offset
        - sum(np.sum(b.F0 * Z) for b, Z in zip(p.blocks, res.dual_blocks))
        - p.h @ res.dual_lp
        + p.b @ res.y
    )


def _spectral_problem(W):
    m = Model()
    rho = m.hermitian(W.shape[0], psd=True)
    m.add_eq(rho.trace(), 1.0)
    m.maximize((W @ rho).trace().real())
    return m, rho


@pytest.mark.parametrize("backend", BACKENDS)
def test_scalar_bound(backend):
    # minimize x subject to [x - 1] ⪰ 0
    p = SdpProblem(c=[1.0], blocks=[PsdBlock(1, np.array([[-1.0]]), sp.csr_matrix([[1.0]]))])
    res = solve(p, tol=1e-9, backend=backend)
    assert res.status == "optimal"
    assert math.isclose(res.objective_value, 1.0, abs_tol=1e-7)


@pytest.mark.parametrize("backend", BACKENDS)
def test_spectral_maximum(backend, rng):
    for _ in range(3):
        W = qmat.random_hermitian(4, rng)
        m, _ = _spectral_problem(W)
        sol = m.solve(tol=1e-9, backend=backend)
        assert abs(sol.objective_value - qmat.lambda_max(W)) <= 10 * 1e-8


@pytest.mark.parametrize("backend", BACKENDS)
def test_ppt_overlap_with_bell_state(backend):
    m, rho = _spectral_problem(PHI_PLUS)
    m.add_psd(rho.ptranspose((2, 2), 1))
    sol = m.solve(tol=1e-9, backend=backend)
    # lower bound: best pure product state on a coarse Bloch grid
    best = 0.0
    for t in np.linspace(0, np.pi, 13):
        for f in np.linspace(0, 2 * np.pi, 13):
            a = np.array([np.cos(t / 2), np.exp(1j * f) * np.sin(t / 2)])
            for t2 in np.linspace(0, np.pi, 13):
                b = np.array([np.cos(t2 / 2), np.exp(-1j * f) * np.sin(t2 / 2)])
                v = np.kron(a, b)
                best = max(best, float(np.real(v.conj() @ PHI_PLUS @ v)))
    assert math.isclose(best, 0.5, abs_tol=1e-12)
    assert math.isclose(sol.objective_value, 0.5, abs_tol=1e-7)


def test_embed_hermitian_examples():
    S = np.array([[1.0, 2.0], [2.0, -1.0]])
    assert np.allclose(embed_hermitian(S), np.block([[S, np.zeros((2, 2))], [np.zeros((2, 2)), S]]))
    E = embed_hermitian(qmat.Y)
    assert E.shape == (4, 4)
    assert np.allclose(np.linalg.eigvalsh(E), [-1, -1, 1, 1])
    assert np.allclose(embed_hermitian(np.eye(3)), np.eye(6))


def test_embedding_round_trip(rng):
    H = qmat.random_hermitian(3, rng)
    assert np.allclose(unembed_hermitian(embed_hermitian(H)), H)
    # spectrum doubles
    w = np.sort(np.linalg.eigvalsh(embed_hermitian(H)))
    assert np.allclose(w, np.sort(np.repeat(np.linalg.eigvalsh(H), 2)))


@pytest.mark.parametrize("backend", BACKENDS)
def test_weak_duality(backend, rng):
    W = qmat.random_hermitian(4, rng)
    m, rho = _spectral_problem(W)
    m.add_psd(rho.ptranspose((2, 2), 1))
    p = m.compile()
    res = solve(p, tol=1e-9, backend=backend)
    assert res.objective_value >= _dual_objective(p, res) - 1e-7
    for Z in res.dual_blocks:
        assert np.linalg.eigvalsh(Z)[0] >= -1e-7


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible_is_reported(backend):
    m = Model()
    x = m.scalar()
    m.add_ge(x, 2.0)
    m.add_le(x, 1.0)
    m.minimize(x)
    with pytest.raises(SolverError):
        m.solve(backend=backend)


def test_dump_and_load_round_trip(rng):
    W = qmat.random_hermitian(4, rng)
    m, rho = _spectral_problem(W)
    m.add_psd(rho.ptranspose((2, 2), 1))
    p = m.compile()
    buf = io.StringIO()
    p.dump(buf)
    buf.seek(0)
    q = SdpProblem.load(buf)
    assert np.array_equal(p.c, q.c)
    assert math.isclose(solve(p).objective_value, solve(q).objective_value, abs_tol=1e-8)


def test_check_rejects_asymmetric_block():
    p = SdpProblem(c=[1.0], blocks=[PsdBlock(2, np.array([[0.0, 1.0], [0.0, 0.0]]), sp.csr_matrix((4, 1)))])
    with pytest.raises(ValueError):
        p.check()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_row_permutation_invariance(seed):
    r = np.random.default_rng(seed)
    W = qmat.random_hermitian(3, r)
    m = Model()
    x = m.vector(3)
    # random box plus a PSD coupling, then the same rows in a shuffled order
    lo, hi = -r.uniform(0.5, 2, 3), r.uniform(0.5, 2, 3)
    m.add_ge(x, lo)
    m.add_le(x, hi)
    m.add_psd(np.eye(3) * 3 + x[0] * np.diag([1.0, 0, 0]) + x[1] * np.diag([0, 1.0, 0]) + x[2] * np.diag([0, 0, 1.0]))
    m.minimize(np.real(np.diag(W)) @ x)
    p = m.compile()
    perm = r.permutation(p.h.size)
    q = SdpProblem(c=p.c, blocks=p.blocks, G=p.G[perm], h=p.h[perm], A=p.A, b=p.b, offset=p.offset)
    a, b = solve(p, tol=1e-9), solve(q, tol=1e-9)
    assert abs(a.objective_value - b.objective_value) <= 2e-8 * (1 + abs(a.objective_value))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_random_spectral_optimum(seed, d):
    W = qmat.random_hermitian(d, np.random.default_rng(seed))
    m, _ = _spectral_problem(W)
    assert abs(m.solve(tol=1e-9).objective_value - qmat.lambda_max(W)) <= 1e-7
