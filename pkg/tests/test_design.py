import numpy as np
import pytest

from prepgame import qmat
from prepgame.design import (
    InstanceSpec,
    LOCAL_PAULI,
    ONE_WAY_LPCC,
    RoundConstraints,
    coordinate_descent,
    design_demon,
    design_oneshot,
    design_oneshot_eps,
    error_curve,
    extract_policy_components,
    instance_constraints,
    optimize_round,
    project_nsp,
    random_initial_game,
    sep_values,
    type_II_error,
)
from prepgame.design.demon import DemonPolicy, _assemble
from prepgame.design.oneshot import oneshot_game
from prepgame.game import PreparationGame, max_score_constrained, score_iid, validate
from prepgame.io import games_equal
from prepgame.qmat import DensityMatrix, named_state
from prepgame.sets import SepOuter, Singleton

PHI = named_state("phi")
PSI = named_state("psi-adapt")


def test_accept_always_at_unit_type_I():
    r = design_oneshot(PHI, 1.0)
    assert abs(r.e_II) <= 1e-6
    with pytest.raises(ValueError):
        design_oneshot(PHI, 1.5)


def test_oneshot_replay_is_sound():
    for cls in ("global", "one-way-lpcc", "local-pauli"):
        r = design_oneshot(PHI, 0.25, cls)
        assert validate(r.game) == []
        assert max_score_constrained(r.game, SepOuter((2, 2)), record=False).value <= 0.25 + 1e-5
        assert score_iid(r.game, PHI) >= 1 - r.e_II - 1e-5


def test_class_nesting():
    for eI in (0.1, 0.3, 0.6):
        g, l, p = (design_oneshot(PHI, eI, c).e_II for c in ("global", "one-way-lpcc", "local-pauli"))
        assert g <= l + 1e-6
        assert l <= p + 2e-6


def test_eps_ball_design():
    for eI in (0.1, 0.4):
        plain = design_oneshot(PHI, eI).e_II
        assert abs(design_oneshot_eps(PHI, 0.0, eI).e_II - plain) <= 1e-6
        assert design_oneshot_eps(PHI, 0.1, eI).e_II >= plain - 1e-7
    curve = error_curve(PHI, "global", grid=11, eps=0.1)
    assert np.all(np.diff(curve[:, 1]) <= 1e-7)
    with pytest.raises(ValueError):
        design_oneshot_eps(PHI, 2.5, 0.1)


def test_demon_single_round_matches_oneshot():
    for cls in ("one-way-lpcc", "local-pauli"):
        a = design_demon(1, cls, PSI, 0.3).e_II
        b = design_oneshot(PSI, 0.3, cls).e_II
        assert abs(a - b) <= 1e-6
    assert abs(design_demon(1, "global", PHI, 0.3).e_II - design_oneshot(PHI, 0.3).e_II) <= 1e-9
    with pytest.raises(NotImplementedError):
        design_demon(2, "global", PHI, 0.3)


def test_demon_two_rounds_sound_and_monotone():
    r = design_demon(2, "local-pauli", PSI, 0.3)
    assert r.policy.nsp_violation() <= 1e-9
    assert validate(r.game) == []
    assert r.info["replay_e_I"] <= 0.3 + 1e-5
    assert r.info["replay_e_II"] <= r.e_II + 1e-5
    assert r.e_II <= design_demon(1, "local-pauli", PSI, 0.3).e_II + 1e-6


def test_policy_components_product_form(rng):
    K = rng.random(9)
    K /= K.sum()
    F = rng.random((9, 4, 2))
    F /= F.sum(axis=-1, keepdims=True)
    p = DemonPolicy(LOCAL_PAULI, 1, [(9, 4)], K[:, None, None] * F)
    kernels, final = extract_policy_components(p)
    assert np.allclose(kernels[0], K, atol=1e-12)
    assert np.allclose(final, F, atol=1e-12)
    u = DemonPolicy(LOCAL_PAULI, 1, [(9, 4)], np.full((9, 4, 2), 1 / 18))
    kernels, final = extract_policy_components(u)
    assert np.allclose(kernels[0], 1 / 9)
    assert np.allclose(final, 0.5)


def test_policy_components_reassemble(rng):
    steps = [(3, 2)] * 4
    shape = tuple(x for s in steps for x in s) + (2,)
    q = project_nsp(rng.random(shape), steps)
    p = DemonPolicy(ONE_WAY_LPCC, 2, steps, q)
    assert p.nsp_violation() <= 1e-9
    kernels, final = extract_policy_components(p)
    assert np.max(np.abs(_assemble(kernels, final, steps) - q)) <= 1e-8
    with pytest.raises(ValueError):
        extract_policy_components(DemonPolicy(ONE_WAY_LPCC, 2, steps, rng.random(shape)))


def test_optimize_single_round_equals_oneshot():
    g0 = oneshot_game(np.eye(4), np.zeros((4, 4)), (2, 2))
    cons = RoundConstraints(SepOuter((2, 2)), 0.3, [PHI])
    res = optimize_round(g0, 0, constraints=cons)
    assert abs(res.objective - design_oneshot(PHI, 0.3).e_II) <= 1e-6
    assert res.objective <= type_II_error(g0, cons) + 1e-9
    assert abs(type_II_error(res.game, cons) - res.objective) <= 1e-6


def _real_state(a):
    return DensityMatrix((2,), qmat.proj(np.array([np.cos(a), np.sin(a)])))


def test_optimize_round_against_grid():
    # round 1 passes everything on; round 2 is a binary test of rho against sigma
    rho, sigma, eI = _real_state(0.2), _real_state(1.1), 0.2
    I = np.eye(2)
    g0 = PreparationGame(
        (2,), [[""], ["a"], ["0", "1"]],
        [{"": {"a": I}}, {"a": {"0": I, "1": 0 * I}}], {"0": 0.0, "1": 1.0},
    )
    cons = RoundConstraints(Singleton(sigma), eI, [rho])
    res = optimize_round(g0, 1, constraints=cons)
    # M_1 = a P(t) + b (I - P(t)) over a grid of real projectors
    ts = np.linspace(0, np.pi, 100, endpoint=False)
    ab = np.linspace(0, 1, 41)
    c = lambda t, x: np.cos(x - t) ** 2  # <x|P(t)|x>
    best = 1.0
    for t in ts:
        A, B = np.meshgrid(ab, ab, indexing="ij")
        p_sig = A * c(t, 1.1) + B * (1 - c(t, 1.1))
        p_rho = A * c(t, 0.2) + B * (1 - c(t, 0.2))
        ok = p_sig <= eI + 1e-12
        best = min(best, float(np.min(1 - p_rho[ok])))
    assert res.objective <= best + 1e-7
    assert best - res.objective <= 2e-2
    assert max_score_constrained(res.game, Singleton(sigma)).value <= eI + 1e-6


def test_descent_zero_iterations_returns_input(rng):
    spec = InstanceSpec(n=3, m=3, d_A=2, tau=0.1, e_I=0.5)
    cons = instance_constraints(spec)
    g0 = random_initial_game(spec, rng, cons.sep)
    res = coordinate_descent(g0, cons, L=0)
    assert games_equal(res.game, g0)
    assert res.trace == [type_II_error(g0, cons)]


def test_descent_small_instance(rng):
    spec = InstanceSpec(n=3, m=3, d_A=2, tau=0.1, e_I=0.5)
    cons = instance_constraints(spec)
    g0 = random_initial_game(spec, rng, cons.sep)
    assert sep_values(g0, cons.sep)[0][0] <= 0.5 + 1e-6
    res = coordinate_descent(g0, cons, L=6)
    assert np.all(np.diff(res.trace) <= 0)
    assert res.trace[-1] < res.trace[0]
    assert all(s <= 0.5 + 1e-5 for s in res.sep_trace)
    assert sep_values(res.game, cons.sep)[0][0] <= 0.5 + 1e-5
    assert validate(res.game) == []
    with pytest.raises(ValueError):
        coordinate_descent(g0, RoundConstraints(cons.sep, 0.01, cons.honest), L=1)
