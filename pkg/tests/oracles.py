"""Independent reference computations and random instances for the tests."""
from itertools import product

import numpy as np

from prepgame import qmat
from prepgame.game import FinitelyCorrelatedStrategy, PreparationGame


def random_povm(d, outcomes, rng):
    raw = [qmat.psd_part(qmat.random_hermitian(d, rng)) + 1e-3 * np.eye(d) for _ in range(outcomes)]
    return qmat.clean_povm(raw)


def random_game(n, width, dims, rng, final=None):
    """Every round has ``width`` configurations; scores uniform in [0, 1]."""
    d = int(np.prod(dims))
    configs = [[""]] + [[f"c{j}" for j in range(width)] for _ in range(n - 1)]
    configs.append(final or [f"f{j}" for j in range(width)])
    povms = []
    for k in range(n):
        rnd = {}
        for s in configs[k]:
            els = random_povm(d, len(configs[k + 1]), rng)
            rnd[s] = dict(zip(configs[k + 1], els))
        povms.append(rnd)
    score = {s: float(rng.uniform()) for s in configs[n]}
    return PreparationGame(dims, configs, povms, score)


def random_isometry(rows, cols, rng):
    g = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, _ = np.linalg.qr(g)
    return q


def random_fincorr(D, dims, rng, kraus=2):
    d = int(np.prod(dims))
    V = random_isometry(kraus * D * d, D, rng)
    K = V.reshape(kraus, D * d, D)
    return FinitelyCorrelatedStrategy(K, D, dims)


def paths(g):
    """All configuration paths (s_1, ..., s_{n+1})."""
    return [(g.configs[0][0],) + p for p in product(*g.configs[1:])]


def path_probability_iid(g, rho, path):
    p = 1.0
    for k in range(g.n):
        E = g.povms[k][path[k]].get(path[k + 1])
        if E is None:
            return 0.0
        p *= float(np.real(np.trace(E @ rho)))
    return p


def score_by_paths(g, rho):
    r = qmat.as_matrix(rho)
    return sum(path_probability_iid(g, r, p) * g.score[p[-1]] for p in paths(g))


def omega_path_sum(g, strat):
    """Σ over paths of g(s_{n+1}) V†(I_A ⊗ M_1 ⊗ ... ⊗ M_n)V, V the n-fold Kraus composition."""
    D, d, n = strat.env_dim, strat.dim, g.n
    K = strat.kraus.reshape(-1, D, d, D)
    total = np.zeros((D, D), dtype=complex)
    for idx in product(range(K.shape[0]), repeat=n):
        # V[a_out, h_1, ..., h_k, a_in]
        V = np.eye(D, dtype=complex)
        for k in range(n):
            V = np.tensordot(K[idx[k]], V, axes=([2], [0]))  # (a_out, h_k, <V axes without a_out>)
            V = np.moveaxis(V, 1, -2)  # keep h_k right before a_in
        # V axes: a_out, h_1, ..., h_n, a_in
        Vm = V.reshape(D * d**n, D)
        for p in paths(g):
            ops = [g.povms[k][p[k]].get(p[k + 1], np.zeros((d, d))) for k in range(n)]
            big = np.kron(np.eye(D), qmat.kron(*ops))
            total += g.score[p[-1]] * Vm.conj().T @ big @ Vm
    return total


def binomial_tail_dp(p, m, v):
    """P[at least v successes in m trials] by convolving one trial at a time."""
    dist = np.zeros(m + 1)
    dist[0] = 1.0
    for _ in range(m):
        nxt = dist * (1 - p)
        nxt[1:] += dist[:-1] * p
        dist = nxt
    return float(dist[v:].sum())
