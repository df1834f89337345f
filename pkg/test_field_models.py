"""
field_models 测试：解析导数与有限差分一致、均匀场导数为零、叠加线性
"""

import math

import numpy as np
import pytest

from exceptions import DomainError
from field_models import (
    LindhardStringPotential,
    ScalarPotential,
    StaticPotentialField,
    SumField,
    UniformField,
    lindhard_profile,
)
from sta_core import GAMMA, I, SIGMA, Multivector, bivector_to_eb, vector

RNG = np.random.default_rng(11)

FD_STEP = 1e-5
RTOL = 1e-6
ATOL = 1e-8

POINT = np.array([1.2, -0.7, 0.3])


class ConstantPotential(ScalarPotential):
    def __init__(self, level: float):
        self.level = level

    def value(self, position):
        return self.level

    def gradient(self, position):
        return np.zeros(3)

    def hessian(self, position):
        return np.zeros((3, 3))


def central_difference(fn, position, axis, h=FD_STEP):
    step = np.zeros(3)
    step[axis] = h
    return (fn(position + step) - fn(position - step)) / (2.0 * h)


def random_bivector():
    coeffs = np.zeros(16)
    coeffs[5:11] = RNG.normal(size=6)
    return Multivector(coeffs)


@pytest.fixture(params=[False, True], ids=["string", "modulated"])
def lindhard(request):
    return LindhardStringPotential(k=2.0, ca=1.5, spacing=2.0, modulated=request.param)


# ==================== 均匀场 ====================

def test_uniform_field_has_zero_partials():
    F = random_bivector()
    field = UniformField(F)
    x = vector(0.3, 1.0, -2.0, 0.5)
    assert field.uniform
    assert field.field(x).is_close(F)
    for dF in field.partials(x):
        assert dF.coeff_norm() == 0.0
    assert field.directional_derivative(GAMMA[0] + GAMMA[2], x).coeff_norm() == 0.0


def test_uniform_field_from_eb_components():
    field = UniformField.from_eb(E=(0.0, 0.0, 2.0), B=(1.0, 0.0, 0.0))
    assert field.F.is_close(SIGMA[2] * 2.0 + I * SIGMA[0])
    E, B = bivector_to_eb(field.F)
    np.testing.assert_allclose(E, [0.0, 0.0, 2.0], atol=1e-15)
    np.testing.assert_allclose(B, [1.0, 0.0, 0.0], atol=1e-15)


def test_uniform_field_rejects_non_bivector():
    with pytest.raises(DomainError):
        UniformField(GAMMA[1])


# ==================== Lindhard 弦势 ====================

def test_lindhard_profile_rejects_nonpositive_radius():
    with pytest.raises(DomainError):
        lindhard_profile(0.0, 1.0, 1.0)


def test_lindhard_profile_derivatives_match_finite_differences():
    k, ca, r, h = 52.5, math.sqrt(3.0) * 0.19, 0.5, 1e-5
    U, U1, U2 = lindhard_profile(r, k, ca)
    Up, U1p, _ = lindhard_profile(r + h, k, ca)
    Um, U1m, _ = lindhard_profile(r - h, k, ca)
    assert U1 == pytest.approx((Up - Um) / (2 * h), rel=1e-8)
    assert U2 == pytest.approx((U1p - U1m) / (2 * h), rel=1e-8)


def test_lindhard_gradient_matches_value_differences(lindhard):
    grad = lindhard.gradient(POINT)
    for axis in range(3):
        assert grad[axis] == pytest.approx(central_difference(lindhard.value, POINT, axis),
                                           rel=RTOL, abs=ATOL)


def test_lindhard_hessian_matches_gradient_differences(lindhard):
    H = lindhard.hessian(POINT)
    np.testing.assert_allclose(H, H.T, atol=1e-14)
    for axis in range(3):
        np.testing.assert_allclose(H[axis], central_difference(lindhard.gradient, POINT, axis),
                                   rtol=RTOL, atol=ATOL)


def test_modulation_requires_spacing():
    with pytest.raises(DomainError):
        LindhardStringPotential(k=1.0, ca=1.0, modulated=True)


# ==================== 静势场 ====================

def test_constant_potential_gives_zero_field():
    field = StaticPotentialField(ConstantPotential(-3.0))
    x = vector(0.0, 0.4, 0.1, -0.2)
    assert field.field(x).coeff_norm() == 0.0
    assert all(dF.coeff_norm() == 0.0 for dF in field.partials(x))


def test_electron_field_points_along_potential_gradient(lindhard):
    # qE = -∇V，q = -1 时 E = ∇V
    field = StaticPotentialField(lindhard, charge=-1.0)
    x = vector(0.0, *POINT)
    E, B = bivector_to_eb(field.field(x))
    np.testing.assert_allclose(E, lindhard.gradient(POINT), atol=1e-14)
    np.testing.assert_allclose(B, 0.0, atol=1e-14)


def test_static_field_partials_match_finite_differences(lindhard):
    field = StaticPotentialField(lindhard, charge=-1.0)
    x = vector(0.0, *POINT)
    partials = field.partials(x)
    assert partials[0].coeff_norm() == 0.0
    for j in range(1, 4):
        step = GAMMA[j] * FD_STEP
        numeric = (field.field(x + step) - field.field(x - step)) / (2.0 * FD_STEP)
        np.testing.assert_allclose(partials[j].coeffs, numeric.coeffs, rtol=RTOL, atol=ATOL)


def test_scalar_gradient_matches_finite_differences(lindhard):
    field = StaticPotentialField(lindhard, charge=-1.0)
    S = random_bivector()
    x = vector(0.0, *POINT)

    def phi(event):
        return -(S | field.field(event)).scalar

    grad = field.scalar_gradient(S, x, coupling=-1.0)
    for j in range(1, 4):
        step = GAMMA[j] * FD_STEP
        numeric = (phi(x + step) - phi(x - step)) / (2.0 * FD_STEP)
        # ∇ = γ^μ ∂_μ，γ^j = -γ_j
        assert -grad.coeffs[1 + j] == pytest.approx(numeric, rel=RTOL, abs=ATOL)


def test_energy_is_time_component_plus_potential(lindhard):
    field = StaticPotentialField(lindhard)
    p = vector(1.5, 0.1, 0.2, 0.3)
    x = vector(7.0, *POINT)
    assert field.energy(p, x) == pytest.approx(1.5 + lindhard.value(POINT), rel=1e-15)


def test_zero_charge_rejected(lindhard):
    with pytest.raises(DomainError):
        StaticPotentialField(lindhard, charge=0.0)


# ==================== 叠加 ====================

def test_sum_field_is_linear(lindhard):
    uniform = UniformField(random_bivector())
    static = StaticPotentialField(lindhard)
    total = SumField(uniform, static)
    x = vector(0.0, *POINT)
    assert not total.uniform
    assert total.field(x).is_close(uniform.field(x) + static.field(x))
    for combined, part in zip(total.partials(x), static.partials(x)):
        assert combined.is_close(part)
    assert SumField(uniform, UniformField(random_bivector())).uniform


def test_sum_field_needs_components():
    with pytest.raises(DomainError):
        SumField()
