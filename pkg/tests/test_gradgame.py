import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from prepgame import qmat
from prepgame.game import score_iid, validate
from prepgame.gradgame import (
    EntQuantSpec,
    GradientGameSpec,
    binary_entropy,
    build_game,
    delta_theta,
    ent_quant_gradient,
    ent_quant_witness,
    logistic_schedule,
    povm_from_gradient,
    povm_from_witness,
    reachable,
)
from prepgame.qmat import KET_MINUS, KET_PLUS, X, Z


def test_povm_from_witness(rng):
    P = povm_from_witness(np.zeros((4, 4)))
    assert all(np.allclose(e, np.eye(4) / 2) for e in P.elements)
    P = povm_from_witness(np.kron(Z, Z))
    assert np.allclose(P.elements[1], np.diag([1, 0, 0, 1]))
    assert np.allclose(P.elements[0], np.diag([0, 1, 1, 0]))
    W = ent_quant_witness(0.4)
    P = povm_from_witness(W)
    for _ in range(100):
        rho = qmat.random_state((2, 2), rng).matrix
        diff = np.trace((P.elements[1] - P.elements[0]) @ rho) - np.trace(W @ rho)
        assert abs(diff) <= 1e-12
    with pytest.raises(ValueError):
        povm_from_witness(2 * np.kron(Z, Z))


def test_gradient_povm_at_zero():
    P = povm_from_gradient(ent_quant_gradient, 0.0, 1, 1.0)
    I = np.eye(2)
    expect = np.kron(qmat.proj(KET_PLUS), (I - X) / 2) + np.kron(qmat.proj(KET_MINUS), (I + X) / 2)
    assert np.allclose(P.elements[0], expect, atol=1e-14)
    assert np.allclose(P.elements[0] + P.elements[1], np.eye(4), atol=1e-14)
    with pytest.raises(ValueError):
        povm_from_gradient(ent_quant_gradient, 0.0, 1, 0.5)


def test_gradient_matches_finite_difference():
    h = 1e-5
    for t in (0.0, 0.3, 1.0, 2.5):
        P = povm_from_gradient(ent_quant_gradient, t, 1, 1.0)
        fd = (ent_quant_witness(t + h) - ent_quant_witness(t - h)) / (2 * h)
        assert np.max(np.abs(P.elements[1] - P.elements[0] - fd)) <= 1e-8


def test_witness_properties():
    W0 = ent_quant_witness(0.0)
    assert np.allclose(W0, 0.5 * (np.kron(Z, Z) + np.kron(np.eye(2), Z)))
    assert np.allclose(W0 @ np.array([1, 0, 0, 0]), [1, 0, 0, 0])
    for t in (0.3, math.pi / 4, 1.2):
        psi = np.array([math.cos(t), 0, 0, math.sin(t)])
        assert abs(psi @ ent_quant_witness(t) @ psi - 1) <= 1e-12
    for t in np.linspace(-np.pi, np.pi, 100):
        assert np.max(np.abs(np.linalg.eigvalsh(ent_quant_witness(t)))) <= 1 + 1e-12


def test_delta():
    d = delta_theta(math.pi / 4)
    assert d <= 1 - 1e-3
    for t in np.linspace(0, np.pi / 2, 7):
        assert delta_theta(t) <= 1 + 1e-7
        assert abs(delta_theta(t) - delta_theta(t + 1e-3)) <= 0.1
    # product states only reach the separable maximum from below
    K = np.array(_kets(24))
    P = np.einsum("ia,jb->ijab", K, K).reshape(-1, 4)
    best = float(np.max(np.real(np.einsum("ka,ab,kb->k", P.conj(), ent_quant_witness(math.pi / 4), P))))
    assert best <= d + 1e-7
    assert d - best <= 5e-3


def _kets(k):
    out = []
    for t in np.linspace(0, np.pi, k):
        for p in np.linspace(0, 2 * np.pi, k, endpoint=False):
            out.append(np.array([math.cos(t / 2), np.exp(1j * p) * math.sin(t / 2)]))
    return out


def test_binary_entropy():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.0) == binary_entropy(1.0) == 0.0
    # exact rational evaluation of -x log2 x - (1-x) log2 (1-x)
    x = Fraction(11, 100)
    ref = -(float(x) * math.log2(float(x))) - float(1 - x) * math.log2(float(1 - x))
    assert abs(binary_entropy(0.11) - ref) <= 1e-15
    assert abs(binary_entropy(0.11) - 0.49992) <= 1e-5
    with pytest.raises(ValueError):
        binary_entropy(1.5)


def test_reachable():
    for k in range(5):
        cfg = reachable(1, k)
        assert all(sum(abs(v) for v in s) <= k for s in cfg)
        assert all((sum(s) - k) % 2 == 0 for s in cfg)
    assert reachable(1, 1) == [(-1, 0), (0, -1), (0, 1), (1, 0)]
    assert len(reachable(1, 3)) == 16  # 4 points at distance 1, 12 at distance 3


def test_built_game_validates_and_single_round():
    spec = EntQuantSpec(n=1).gradient_spec()
    g = build_game(spec, 1)
    assert validate(g) == []
    assert g.configs[0] == ["0,0"]
    els = g.povms[0]["0,0"]
    p0 = logistic_schedule(1, 1)[0]
    W = ent_quant_witness(0.0)
    assert np.allclose(els["1,0"] - els["-1,0"], p0 * W)


def _enumerate(spec, n, rho):
    """Sum over all (direction, outcome) sequences of explicit probability products."""
    total = 0.0
    p0 = sum(spec.p(k, n)[0] for k in range(1, n + 1))
    for path in product(range(2), (-1, 1), repeat=n):
        s = np.zeros(2)
        prob = 1.0
        for k in range(n):
            x, a = path[2 * k], path[2 * k + 1]
            theta = spec.theta0 + spec.eps * s[1:]
            if x == 0:
                D = spec.W(theta)
            else:
                D = spec.dW(theta)[0] / spec.K
            E = (np.eye(4) + a * D) / 2
            prob *= spec.p(k + 1, n)[x] * np.real(np.trace(E @ rho))
            s[x] += a
        total += prob * spec.f(spec.theta0 + spec.eps * s[1:], s[0] / p0)
    return total


def test_score_matches_path_enumeration():
    spec = EntQuantSpec(n=5, lam=0.1).gradient_spec()
    g = build_game(spec, 5)
    assert validate(g) == []
    for t in (0.3, math.pi / 4):
        rho = qmat.psi_theta_state(t).matrix
        assert abs(score_iid(g, rho) - _enumerate(spec, 5, rho)) <= 1e-10


def test_score_scales_with_f():
    base = EntQuantSpec(n=4).gradient_spec()
    f = base.f
    scaled = GradientGameSpec(base.dims, base.W, base.dW, base.K, base.theta0, base.eps, base.p, lambda t, v: 3.0 * f(t, v))
    rho = qmat.psi_theta_state(0.6)
    a, b = score_iid(build_game(base, 4), rho), score_iid(build_game(scaled, 4), rho)
    assert abs(b - 3 * a) <= 1e-12


def test_spec_checks():
    spec = EntQuantSpec().gradient_spec()
    assert spec.check(5) == []
    bad = GradientGameSpec((2, 2), lambda t: 2 * ent_quant_witness(t), ent_quant_gradient, 1.0, [0.0], 0.1, logistic_schedule, lambda t, v: 0.0)
    assert any("‖W(θ)‖ > 1" in m for m in bad.check(3))
    with pytest.raises(ValueError):
        EntQuantSpec(lam=1.5).gradient_spec()
    with pytest.raises(ValueError):
        build_game(spec, 0)
