"""
test_sta_core.py - 时空代数核心测试
"""
import math

import numpy as np
import pytest

from exceptions import DomainError, RotorNormError, SingularSpinorError
from sta_core import (BLADES, GAMMA, GAMMA_PLUS, GRADES, I, ONE, SIGMA, Multivector,
                      blade_product_oracle, boost_from_velocity, bivector_to_eb,
                      canonical_decompose, compose_spinor, dot, eb_to_bivector,
                      exp_bivector, normalize_rotor, rotate, sandwich, split_bivector,
                      vector)

RNG = np.random.default_rng(20240601)
ATOL = 1e-12


def random_mv(scale=1.0):
    return Multivector(RNG.normal(scale=scale, size=16))


def random_grade(k, scale=1.0):
    return random_mv(scale).grade(k)


def random_rotor(scale=0.7):
    return exp_bivector(random_grade(2, scale))


def random_timelike(max_speed=0.9):
    w = RNG.normal(size=3)
    w *= RNG.uniform(0.0, max_speed) / np.linalg.norm(w)
    g = 1.0 / math.sqrt(1.0 - w @ w)
    return vector(g, g * w[0], g * w[1], g * w[2])


def oracle_table():
    table = np.zeros((16, 16, 16))
    index = {blade: i for i, blade in enumerate(BLADES)}
    for i, a in enumerate(BLADES):
        for j, b in enumerate(BLADES):
            sign, blade = blade_product_oracle(a, b)
            table[i, j, index[blade]] = sign
    return table


ORACLE = oracle_table()


def oracle_product(a: Multivector, b: Multivector) -> Multivector:
    return Multivector(np.einsum("i,j,ijk->k", a.coeffs, b.coeffs, ORACLE))


# ==================== 几何积 ====================

def test_metric_relations_exhaustive():
    g = np.diag([1.0, -1.0, -1.0, -1.0])
    for mu in range(4):
        for nu in range(4):
            anti = GAMMA[mu] * GAMMA[nu] + GAMMA[nu] * GAMMA[mu]
            assert anti.is_close(ONE * (2.0 * g[mu, nu]), atol=0.0)


def test_basis_squares():
    assert (GAMMA[0] * GAMMA[0]).is_close(ONE, atol=0.0)
    assert (GAMMA[1] * GAMMA[1]).is_close(-ONE, atol=0.0)


def test_identity_element():
    M = random_mv()
    assert (ONE * M).is_close(M, atol=0.0)
    assert (M * ONE).is_close(M, atol=0.0)


def test_all_basis_pairs_match_oracle_exactly():
    for i in range(16):
        for j in range(16):
            a = Multivector(np.eye(16)[i])
            b = Multivector(np.eye(16)[j])
            assert (a * b).is_close(oracle_product(a, b), atol=0.0)


def test_random_pairs_match_oracle():
    for _ in range(1000):
        a, b = random_mv(), random_mv()
        assert (a * b).is_close(oracle_product(a, b), atol=1e-12 * 16)


def test_associativity_random_triples():
    for _ in range(1000):
        a, b, c = random_mv(), random_mv(), random_mv()
        left = (a * b) * c
        right = a * (b * c)
        assert left.max_abs_diff(right) <= 1e-12 * max(1.0, left.coeff_norm())


def test_vector_product_splits_into_inner_and_outer():
    a, b = random_grade(1), random_grade(1)
    ab = a * b
    assert ab.grade(0).is_close(a | b)
    assert ab.grade(2).is_close(a ^ b)
    assert (0.5 * (a * b + b * a)).is_close(a | b)


def test_pseudoscalar_properties():
    assert (I * I).is_close(-ONE, atol=0.0)
    for k in range(1, 5):
        v = Multivector(np.eye(16)[k])
        assert (I * v).is_close(-(v * I), atol=0.0)
    for k in range(5, 11):
        B = Multivector(np.eye(16)[k])
        assert (I * B).is_close(B * I, atol=0.0)


def test_even_subalgebra_closure():
    for _ in range(50):
        a, b = random_mv().even(), random_mv().even()
        odd = (a * b).coeffs[GRADES % 2 == 1]
        assert np.max(np.abs(odd)) <= ATOL


def test_relative_vectors_generate_pseudoscalar():
    assert (SIGMA[0] * SIGMA[1] * SIGMA[2]).is_close(I, atol=0.0)


def test_simple_bivector_squares_to_scalar():
    for _ in range(50):
        S = random_grade(1) ^ random_grade(1)
        assert (S ^ S).coeff_norm() <= 1e-11
        square = S * S
        assert square.is_close(S | S, atol=1e-11)


# ==================== 阶投影与反转 ====================

def test_grade_projection_examples():
    M = GAMMA[0] * GAMMA[1] + 3.0
    assert M.grade(0).is_close(ONE * 3.0)
    assert I.grade(4).is_close(I)


def test_grades_sum_back_exactly():
    M = random_mv()
    total = M.grade(0) + M.grade(1) + M.grade(2) + M.grade(3) + M.grade(4)
    assert total.is_close(M, atol=0.0)


@pytest.mark.parametrize("k", [-1, 5])
def test_grade_out_of_range(k):
    with pytest.raises(DomainError):
        random_mv().grade(k)


def test_scalar_part_is_cyclic():
    for _ in range(100):
        M, N = random_mv(), random_mv()
        assert (M * N).scalar == pytest.approx((N * M).scalar, abs=1e-12)


def test_reverse_examples():
    B = GAMMA[0] * GAMMA[1]
    assert B.reverse().is_close(-B, atol=0.0)
    assert (ONE * 2.5).reverse().is_close(ONE * 2.5, atol=0.0)


def test_reverse_is_anti_automorphism_and_involution():
    for _ in range(100):
        M, N = random_mv(), random_mv()
        assert (M * N).reverse().max_abs_diff(N.reverse() * M.reverse()) <= 1e-12 * 16
        assert M.reverse().reverse().is_close(M, atol=0.0)
        assert M.reverse().scalar == M.scalar


# ==================== 分次积 ====================

def test_contraction_examples():
    assert (GAMMA[0] | (GAMMA[0] * GAMMA[1])).is_close(GAMMA[1], atol=0.0)
    assert (GAMMA[0] ^ (GAMMA[0] * GAMMA[1])).is_close(Multivector(), atol=0.0)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_vector_times_k_vector(k):
    v, K = random_grade(1), random_grade(k)
    assert (v * K).max_abs_diff((v | K) + (v ^ K)) <= ATOL * 10


def test_bivector_product_three_parts():
    for _ in range(50):
        S, F = random_grade(2), random_grade(2)
        parts = (S | F) + S.commutator(F) + (S ^ F)
        assert (S * F).max_abs_diff(parts) <= ATOL * 10


def test_jacobi_identity():
    for _ in range(100):
        M, N, P = random_mv(), random_mv(), random_mv()
        left = M.commutator(N.commutator(P))
        right = M.commutator(N).commutator(P) + N.commutator(M.commutator(P))
        assert left.max_abs_diff(right) <= 1e-11 * max(1.0, left.coeff_norm())


# ==================== 指数与转子 ====================

def series_exp(B, terms=40):
    squarings = 0
    while B.coeff_norm() / 2 ** squarings >= 0.1:
        squarings += 1
    X = B / 2 ** squarings
    term, total = ONE, ONE
    for n in range(1, terms + 1):
        term = term * X / n
        total = total + term
    for _ in range(squarings):
        total = total * total
    return total


def test_exp_of_zero():
    assert exp_bivector(Multivector()).is_close(ONE, atol=0.0)


@pytest.mark.parametrize("theta", [0.3, 1.2, math.pi / 2, 2.9])
def test_exp_rotates_in_plane(theta):
    R = exp_bivector(GAMMA[1] * GAMMA[2] * (theta / 2))
    expected = GAMMA[1] * math.cos(theta) + GAMMA[2] * math.sin(theta)
    assert sandwich(R, GAMMA[1]).is_close(expected)


def test_exp_matches_series_oracle():
    for _ in range(100):
        B = random_grade(2, scale=1.5)
        R = exp_bivector(B)
        assert R.max_abs_diff(series_exp(B)) <= 1e-12 * max(1.0, R.coeff_norm())
        assert (R * R.reverse()).max_abs_diff(ONE) <= 1e-12 * max(1.0, R.coeff_norm() ** 2)


def test_exp_rejects_non_bivector():
    with pytest.raises(DomainError):
        exp_bivector(GAMMA[1])


def test_sandwich_identity_and_metric_preservation():
    M = random_mv()
    assert sandwich(ONE, M).is_close(M, atol=0.0)
    for _ in range(100):
        R, u = random_rotor(), random_grade(1)
        ru = sandwich(R, u)
        assert dot(ru, ru) == pytest.approx(dot(u, u), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("alpha", [-1.3, 0.25, 2.0])
def test_boost_rescales_null_vector(alpha):
    L = exp_bivector(GAMMA[2] * GAMMA[0] * (alpha / 2))
    assert sandwich(L, GAMMA_PLUS).max_abs_diff(GAMMA_PLUS * math.exp(alpha)) <= 1e-12 * math.exp(abs(alpha))


def test_rotor_drift_policy():
    R = random_rotor()
    slightly_off = R * (1.0 + 2e-10)
    assert normalize_rotor(slightly_off).max_abs_diff(R) <= 1e-12
    with pytest.raises(RotorNormError):
        sandwich(R * 1.01, GAMMA[1])
    assert rotate(R * 1.01, GAMMA[1]).coeff_norm() > 0.0


# ==================== 规范分解 ====================

def test_canonical_scaled_rotor():
    R = random_rotor()
    rho, beta, R_out = canonical_decompose(2.0 * R)
    assert rho == pytest.approx(4.0, rel=1e-12)
    assert beta == pytest.approx(0.0, abs=1e-12)
    assert R_out.is_close(R)


def test_canonical_pure_duality_factor():
    psi = ONE * math.cos(math.pi / 4) + I * math.sin(math.pi / 4)
    rho, beta, R = canonical_decompose(psi)
    assert rho == pytest.approx(1.0)
    assert beta == pytest.approx(math.pi / 2)
    assert R.is_close(ONE)


def test_canonical_round_trip():
    for _ in range(200):
        rho = RNG.uniform(0.1, 5.0)
        beta = RNG.uniform(-math.pi + 1e-6, math.pi)
        R = random_rotor()
        psi = compose_spinor(rho, beta, R)
        rho2, beta2, R2 = canonical_decompose(psi)
        assert rho2 == pytest.approx(rho, rel=1e-12)
        assert beta2 == pytest.approx(beta, abs=1e-11)
        assert compose_spinor(rho2, beta2, R2).max_abs_diff(psi) <= 1e-12 * max(1.0, psi.coeff_norm())


def test_canonical_beta_range_includes_pi():
    psi = compose_spinor(1.0, math.pi, ONE)
    _, beta, _ = canonical_decompose(psi)
    assert beta == pytest.approx(math.pi)


def test_canonical_singular_spinor():
    null_even = ONE + GAMMA[1] * GAMMA[0]
    with pytest.raises(SingularSpinorError):
        canonical_decompose(null_even)


# ==================== 时空分裂与增压 ====================

def test_split_examples():
    E, B = split_bivector(GAMMA[1] * GAMMA[0], GAMMA[0])
    assert E.is_close(GAMMA[1] * GAMMA[0])
    assert B.is_close(Multivector())
    E, B = split_bivector(GAMMA[1] * GAMMA[2], GAMMA[0])
    assert E.is_close(Multivector())
    assert (I * B).is_close(GAMMA[1] * GAMMA[2])


def test_split_random_reconstruction_and_anticommutation():
    for _ in range(100):
        F, v = random_grade(2), random_timelike()
        E, B = split_bivector(F, v)
        scale = max(1.0, v.coeff_norm() ** 2 * F.coeff_norm())
        assert (E + I * B).max_abs_diff(F) <= 1e-12 * scale
        assert (E * v).max_abs_diff(-(v * E)) <= 1e-12 * scale


def test_split_agrees_with_component_view():
    E3, B3 = RNG.normal(size=3), RNG.normal(size=3)
    F = eb_to_bivector(E3, B3)
    E, B = split_bivector(F, GAMMA[0])
    np.testing.assert_allclose(bivector_to_eb(E)[0], E3, atol=ATOL)
    np.testing.assert_allclose(bivector_to_eb(I * B)[1], B3, atol=ATOL)


@pytest.mark.parametrize("v", [GAMMA[0] * 2.0, GAMMA[0] + GAMMA[1], GAMMA[1]])
def test_split_rejects_bad_velocity(v):
    with pytest.raises(DomainError):
        split_bivector(GAMMA[1] * GAMMA[0], v)


def test_boost_examples():
    assert boost_from_velocity(GAMMA[0]).is_close(ONE)
    g, beta = 3.0, math.sqrt(8.0) / 3.0
    v = vector(g, g * beta, 0.0, 0.0)
    L = boost_from_velocity(v)
    expected = g * (ONE + SIGMA[0] * beta)
    assert (L * L).max_abs_diff(v * GAMMA[0]) <= 1e-12 * g
    assert (v * GAMMA[0]).max_abs_diff(expected) <= 1e-12 * g


def test_boost_random_velocity():
    for _ in range(100):
        v = random_timelike(0.99)
        L = boost_from_velocity(v)
        assert (L * L.reverse()).max_abs_diff(ONE) <= 1e-12 * v.coeff_norm()
        assert sandwich(L, GAMMA[0]).max_abs_diff(v) <= 1e-12 * v.coeff_norm() ** 2


@pytest.mark.parametrize("v", [GAMMA[0] + GAMMA[3], -GAMMA[0]])
def test_boost_rejects_lightlike_and_past(v):
    with pytest.raises(DomainError):
        boost_from_velocity(v)


def test_inverse_of_vector_and_rotor():
    p = vector(2.0, 0.3, -0.4, 0.1)
    assert (p * p.inverse()).is_close(ONE)
    R = random_rotor()
    assert (R.inverse()).is_close(R.reverse())


def test_norm2():
    v = vector(2.0, 1.0, 0.0, 0.5)
    assert v.norm2() == pytest.approx(dot(v, v))
    assert random_rotor().norm2() == pytest.approx(1.0, abs=1e-12)
    assert (GAMMA[0] * GAMMA[1]).norm2() == pytest.approx(-1.0)
