import numpy as np
import pytest

from oracles import random_fincorr, random_game
from prepgame import qmat
from prepgame.game import PreparationGame, absorbing_povm, score_fincorr, score_iid
from prepgame.sim import (
    Adaptive,
    FinCorr,
    Iid,
    analytic_score,
    build_interaction_strategy,
    interaction_hamiltonian,
    simulate,
)
from prepgame.qmat import named_state


def zeros_game(n):
    P00 = np.diag([1.0, 0, 0, 0])
    configs = [[""]] + [["ok", "bad"] for _ in range(n)]
    povms = []
    for k in range(n):
        rnd = {}
        for s in configs[k]:
            rnd[s] = absorbing_povm("bad", 4) if s == "bad" else {"ok": P00, "bad": np.eye(4) - P00}
        povms.append(rnd)
    return PreparationGame((2, 2), configs, povms, {"ok": 1.0, "bad": 0.0})


def test_deterministic_game():
    g = zeros_game(3)
    r = simulate(g, Iid(np.diag([1.0, 0, 0, 0])), 1000, seed=3)
    assert r.mean_score == 1.0
    assert r.std_error == 0.0
    assert r.frequencies == {"ok": 1.0}


def test_maximally_mixed_zeros():
    r = simulate(zeros_game(3), Iid(np.eye(4) / 4), 100_000, seed=11)
    assert r.within(1 / 64)
    assert abs(sum(r.frequencies.values()) - 1) <= 1e-12


def test_fincorr_against_analytic(rng):
    g = random_game(2, 3, (2,), rng)
    st = random_fincorr(2, (2,), rng)
    exact = analytic_score(g, FinCorr(st))
    env = np.diag([1.0, 0.0])
    from prepgame.sets import Singleton

    assert abs(exact - score_fincorr(g, st, Singleton(qmat.DensityMatrix((2,), env)))[1]) <= 1e-12
    r = simulate(g, FinCorr(st), 100_000, seed=5)
    assert r.within(exact)


def test_adaptive_against_analytic(rng):
    g = random_game(3, 2, (2,), rng)
    table = {(k, s): qmat.random_state((2,), rng) for k in range(3) for s in g.configs[k]}
    strat = Adaptive(table)
    exact = analytic_score(g, strat)
    assert simulate(g, strat, 100_000, seed=9).within(exact)
    with pytest.raises(KeyError):
        analytic_score(g, Adaptive({}))


def test_seed_reproducible(rng):
    g = random_game(3, 2, (2,), rng)
    st = FinCorr(random_fincorr(2, (2,), rng))
    a = simulate(g, st, 5000, seed=42, keep_shots=True)
    b = simulate(g, st, 5000, seed=42, keep_shots=True)
    c = simulate(g, st, 5000, seed=43)
    assert a.mean_score == b.mean_score and a.std_error == b.std_error
    assert np.array_equal(a.finals, b.finals)
    assert a.mean_score != c.mean_score


def test_dimension_mismatch():
    with pytest.raises(qmat.DimensionError):
        simulate(zeros_game(1), Iid(np.eye(2) / 2), 10, seed=0)
    with pytest.raises(ValueError):
        simulate(zeros_game(1), Iid(np.eye(4) / 4), 1, seed=0)


def test_frequencies_match_path_distribution(rng):
    g = random_game(3, 3, (2,), rng)
    rho = qmat.random_state((2,), rng)
    finals = g.configs[g.n]
    exact = {f: score_iid(g.with_score({o: float(o == f) for o in finals}), rho) for f in finals}
    shots = 100_000
    r = simulate(g, Iid(rho), shots, seed=17)
    tv = 0.5 * sum(abs(r.frequencies.get(f, 0.0) - exact[f]) for f in finals)
    bound = 5 * 0.5 * sum(np.sqrt(p * (1 - p) / shots) for p in exact.values())
    assert tv <= bound


def test_interaction_at_zero_time():
    target = named_state("psi-theta(0.7853981633974483)")
    st = build_interaction_strategy(4, 0.0, target)
    env0 = np.diag([1.0, 0, 0, 0])
    out = st.kraus[0] @ env0 @ st.kraus[0].conj().T
    assert np.allclose(out, np.kron(env0, target.matrix), atol=1e-14)


def test_interaction_is_isometric():
    st = build_interaction_strategy(10, 0.1)
    K = st.kraus
    assert np.max(np.abs(sum(k.conj().T @ k for k in K) - np.eye(10))) <= 1e-10
    H = interaction_hamiltonian(10)
    assert np.allclose(H, H.conj().T)
    with pytest.raises(ValueError):
        build_interaction_strategy(1, 0.1)


def test_interaction_against_eigendecomposition():
    d_A, tau = 2, 0.1
    target = qmat.psi_theta_state(np.pi / 4)
    st = build_interaction_strategy(d_A, tau, target)
    w, V = np.linalg.eigh(interaction_hamiltonian(d_A))
    U = V @ np.diag(np.exp(-1j * tau * w)) @ V.conj().T
    psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    out = U @ np.kron([1, 0], psi)
    joint = np.outer(out, out.conj())
    emitted = qmat.partial_trace(joint, (d_A, 4), keep=[1])
    K = st.kraus[0]
    mine = qmat.partial_trace(K @ np.diag([1.0, 0]) @ K.conj().T, (d_A, 4), keep=[1])
    assert np.max(np.abs(mine - emitted)) <= 1e-12
    assert np.max(np.abs(emitted - target.matrix)) > 1e-4
