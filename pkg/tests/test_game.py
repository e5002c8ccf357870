import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import omega_path_sum, random_fincorr, random_game, score_by_paths
from prepgame import qmat
from prepgame.game import (
    FinitelyCorrelatedStrategy,
    GameError,
    PreparationGame,
    absorbing_povm,
    fincorr_dual_check,
    max_score_constrained,
    omega_table,
    score_fincorr,
    score_iid,
    validate,
)
from prepgame.qmat import DensityMatrix
from prepgame.sets import AllStates, EpsBall, NegativityBall, SepOuter, Singleton

P0, P1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])


def zeros_game(n):
    """Computational-basis measurement of both qubits; score 1 iff every outcome was 00."""
    d = 4
    P00 = np.diag([1.0, 0, 0, 0])
    configs = [[""]] + [["ok", "bad"] for _ in range(n)]
    povms = []
    for k in range(n):
        rnd = {}
        for s in configs[k]:
            if s == "bad":
                rnd[s] = absorbing_povm("bad", d)
            else:
                rnd[s] = {"ok": P00, "bad": np.eye(d) - P00}
        povms.append(rnd)
    return PreparationGame((2, 2), configs, povms, {"ok": 1.0, "bad": 0.0})


def one_round(M0, M1, dims=(2,)):
    return PreparationGame(dims, [[""], ["0", "1"]], [{"": {"0": M0, "1": M1}}], {"0": 0.0, "1": 1.0})


def test_validate_examples():
    assert validate(one_round(P0, P1)) == []
    bad = one_round(0.45 * np.eye(2), 0.45 * np.eye(2))
    v = validate(bad)
    assert any("do not sum to identity" in x and "1.000e-01" in x for x in v)
    g = PreparationGame((2,), [[""], ["0", "1"]], [{"": {"0": P0, "1": P1}}], {"0": 0.0})
    assert any("'1' has no score" in x for x in validate(g))
    with pytest.raises(GameError):
        score_iid(bad, np.eye(2) / 2)


def test_validate_structure_errors():
    g = PreparationGame((2,), [[""], ["0"]], [{"": {"0": P0, "x": P1}}], {"0": 1.0})
    assert any("'x' is not a configuration" in x for x in validate(g))
    g = PreparationGame((2,), [["", "a"], ["0"]], [{"": {"0": np.eye(2)}, "a": {"0": np.eye(2)}}], {"0": 1.0})
    assert any("exactly one configuration" in x for x in validate(g))
    g = one_round(np.array([[1.0, 0.5], [0.5, -0.2]]), np.eye(2) - np.array([[1.0, 0.5], [0.5, -0.2]]))
    assert any("negative eigenvalue" in x for x in validate(g))


def test_score_iid_examples():
    g = PreparationGame((2,), [[""], ["a"], ["a"]], [{"": {"a": np.eye(2)}}, {"a": {"a": np.eye(2)}}], {"a": 1.0})
    assert score_iid(g, np.eye(2) / 2) == 1.0
    g3 = zeros_game(3)
    assert score_iid(g3, np.diag([1.0, 0, 0, 0])) == 1.0
    assert math.isclose(score_iid(g3, np.eye(4) / 4), (1 / 4) ** 3, rel_tol=1e-12)
    with pytest.raises(qmat.DimensionError):
        score_iid(g3, np.eye(2) / 2)


def test_score_iid_matches_path_enumeration(rng):
    for _ in range(5):
        g = random_game(3, 2, (2,), rng)
        rho = qmat.random_state((2,), rng)
        assert abs(score_iid(g, rho) - score_by_paths(g, rho)) <= 1e-12


def test_constrained_examples(rng):
    g = random_game(1, 3, (2, 2), rng)
    W = sum(g.score[s] * E for s, E in g.povms[0][""].items())
    assert math.isclose(max_score_constrained(g, AllStates((2, 2))).value, qmat.lambda_max(W), abs_tol=1e-12)
    rho = qmat.random_state((2, 2), rng)
    assert abs(max_score_constrained(g, Singleton(rho)).value - score_iid(g, rho)) <= 1e-12
    g2 = random_game(2, 2, (2, 2), rng)
    assert abs(max_score_constrained(g2, Singleton(rho)).value - score_iid(g2, rho)) <= 1e-12


def _bloch_grid(n):
    # Fibonacci sphere
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z**2)
    phi = np.pi * (1 + 5**0.5) * i
    return [0.5 * (np.eye(2) + x * qmat.X + y * qmat.Y + w * qmat.Z) for x, y, w in zip(r * np.cos(phi), r * np.sin(phi), z)]


def test_constrained_two_round_grid(rng):
    g = random_game(2, 2, (2,), rng)
    grid = _bloch_grid(1000)
    # brute force: best grid state per configuration, round 2 first
    mu2 = {}
    for s in g.configs[1]:
        W = sum(g.score[t] * E for t, E in g.povms[1][s].items())
        mu2[s] = max(np.real(np.trace(W @ r)) for r in grid)
    W1 = sum(mu2[t] * E for t, E in g.povms[0][""].items())
    brute = max(np.real(np.trace(W1 @ r)) for r in grid)
    val = max_score_constrained(g, AllStates((2,))).value
    assert brute <= val + 1e-9
    assert val - brute <= 1e-2


def test_maximizers_are_recorded(rng):
    g = random_game(2, 2, (2, 2), rng)
    tab = max_score_constrained(g, SepOuter((2, 2)))
    for (k, s), rho in tab.maximizers.items():
        W = g.effective_operator(k, g.index(k)[s], tab.values[k + 1])
        assert abs(rho.expect(W) - tab[k, s]) <= 1e-6
        assert tab.tight[(k, s)]


def test_fincorr_trivial_environment(rng):
    g = random_game(3, 2, (2,), rng)
    rho = qmat.random_state((2,), rng)
    st_ = FinitelyCorrelatedStrategy.from_state(rho)
    assert abs(score_fincorr(g, st_)[1] - score_iid(g, rho)) <= 1e-10
    psi = qmat.random_pure_ket(2, rng)
    iso = FinitelyCorrelatedStrategy(np.kron(np.eye(3), psi[:, None])[None], 3, (2,))
    assert abs(score_fincorr(g, iso)[1] - score_iid(g, qmat.proj(psi))) <= 1e-10


def test_fincorr_value_in_score_range(rng):
    for _ in range(5):
        g = random_game(2, 3, (2,), rng)
        strat = random_fincorr(2, (2,), rng)
        v = score_fincorr(g, strat)[1]
        sc = list(g.score.values())
        assert min(sc) - 1e-10 <= v <= max(sc) + 1e-10


def test_omega_matches_path_sum(rng):
    g = random_game(3, 2, (2,), rng)
    strat = random_fincorr(2, (2,), rng)
    assert np.max(np.abs(omega_table(g, strat)[0][0] - omega_path_sum(g, strat))) <= 1e-10


def test_fincorr_dual_check(rng):
    g = random_game(2, 2, (2,), rng)
    strat = random_fincorr(2, (2,), rng)
    om = score_fincorr(g, strat)[0]
    top = qmat.lambda_max(om)
    assert fincorr_dual_check(om, top, AllStates((2,)))
    assert not fincorr_dual_check(om, top - 0.01, AllStates((2,)))
    env = EpsBall(DensityMatrix((2,), np.eye(2) / 2), 0.3)
    vmax = env.max_linear(om)[0]
    assert fincorr_dual_check(om, vmax + 1e-4, env)
    assert not fincorr_dual_check(om, vmax - 1e-3, env)


def test_kraus_must_be_trace_preserving():
    with pytest.raises(GameError):
        FinitelyCorrelatedStrategy(np.ones((1, 2, 1)), 1, (2,))
    with pytest.raises(qmat.DimensionError):
        FinitelyCorrelatedStrategy(np.ones((1, 3, 1)), 1, (2,))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_monotone_relaxation(seed):
    r = np.random.default_rng(seed)
    g = random_game(2, 2, (2, 2), r)
    rho = qmat.random_state((2, 2), r)
    a = max_score_constrained(g, Singleton(rho), record=False).value
    b = max_score_constrained(g, EpsBall(rho, 0.2), record=False).value
    c = max_score_constrained(g, AllStates((2, 2)), record=False).value
    assert a <= b + 1e-7
    assert b <= c + 1e-7


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5), st.floats(-3, 3))
def test_affine_score_covariance(seed, a, b):
    r = np.random.default_rng(seed)
    g = random_game(2, 2, (2,), r)
    C = AllStates((2,))
    base = max_score_constrained(g, C)
    moved = max_score_constrained(g.with_score({s: a * v + b for s, v in g.score.items()}), C)
    assert abs(moved.value - (a * base.value + b)) <= 1e-9 * (1 + abs(a * base.value + b))
    for key, rho in moved.maximizers.items():
        k, s = key
        W = g.effective_operator(k, g.index(k)[s], base.values[k + 1])
        assert abs(a * rho.expect(W) + b - moved[k, s]) <= 1e-8 * (1 + abs(moved[k, s]))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_negativity_monotone_on_random_games(seed):
    g = random_game(2, 2, (2, 2), np.random.default_rng(seed))
    vals = [max_score_constrained(g, NegativityBall((2, 2), N), record=False).value for N in (0.0, 0.2, 0.5)]
    assert vals[0] <= vals[1] + 1e-6
    assert vals[1] <= vals[2] + 1e-6
