"""
dirac_bridge 测试
平面波残差、zitter Dirac 方程与动量恒等式、投影可观测量、相互作用能密度、弱电规范群
"""

import math

import numpy as np
import pytest

from dirac_bridge import (
    P_MINUS,
    P_PLUS,
    GeneralSpinorField,
    PlaneWaveSpinorField,
    charge_conjugate_split,
    check_right_factor,
    dirac_check_report,
    dirac_residual,
    electroweak_element,
    electroweak_gauge_check,
    finite_difference_partials,
    local_observables,
    project,
    random_event,
    random_rotor,
    random_spinor,
    zitter_dirac_residual,
    zitter_momentum_identity,
)
from exceptions import DomainError, SingularSpinorError
from field_models import UniformField
from sta_core import (
    GAMMA,
    I,
    ONE,
    SIGMA,
    Multivector,
    bivector_to_eb,
    canonical_decompose,
    compose_spinor,
    dot,
    exp_bivector,
    vector,
)
from zitter_dynamics import initial_state, observables, spin_potential

RNG = np.random.default_rng(11)
ATOL = 1e-12


def _random_vector(scale: float = 0.3) -> Multivector:
    return vector(*RNG.normal(scale=scale, size=4))


def _linear_field(n_terms: int = 5) -> GeneralSpinorField:
    """psi(x) = M0 + x^mu M_mu，带解析偏导数"""
    M = [random_spinor(RNG) for _ in range(n_terms)]

    def value(x):
        total = M[0]
        for mu in range(4):
            total = total + M[mu + 1] * float(x.coeffs[1 + mu])
        return total

    return GeneralSpinorField(value, lambda x: tuple(M[1:]))


def _canonical_spinor() -> Multivector:
    return compose_spinor(float(RNG.uniform(0.5, 2.0)), float(RNG.uniform(-math.pi, math.pi)), random_rotor(RNG))


def _random_field() -> UniformField:
    return UniformField.from_eb(RNG.normal(size=3), RNG.normal(size=3))


# ==================== 普通 Dirac 方程 ====================

@pytest.mark.parametrize("with_potential", [False, True])
def test_free_plane_wave_solves_dirac(with_potential):
    for _ in range(20):
        R0 = random_rotor(RNG)
        A = _random_vector() if with_potential else None
        wave = PlaneWaveSpinorField.free(R0, rho=float(RNG.uniform(0.5, 2.0)), A=A)
        x = random_event(RNG)
        assert dirac_residual(wave, A, x).coeff_norm() < ATOL


def test_rest_plane_wave_oscillates_at_de_broglie_frequency():
    wave = PlaneWaveSpinorField.free(ONE)
    assert dot(wave.k, GAMMA[0]) == pytest.approx(-1.0)
    # 半个德布罗意周期后 psi 变号
    assert wave.value(vector(math.pi, 0.0, 0.0, 0.0)).is_close(-ONE, atol=1e-15)


def test_residual_is_linear_in_psi():
    wave = PlaneWaveSpinorField.free(random_rotor(RNG))
    wrong = PlaneWaveSpinorField(wave.psi0, wave.k * 1.3)
    scaled = GeneralSpinorField(lambda x: wrong.value(x) * 2.5,
                                lambda x: tuple(d * 2.5 for d in wrong.partials(x)))
    A = _random_vector()
    x = random_event(RNG)
    base = dirac_residual(wrong, A, x)
    assert dirac_residual(scaled, A, x).max_abs_diff(base * 2.5) < 1e-12


def test_non_solution_residual_matches_finite_differences():
    wave = PlaneWaveSpinorField.free(random_rotor(RNG))
    wrong = PlaneWaveSpinorField(wave.psi0, wave.k * 1.3)
    numeric = GeneralSpinorField(wrong.value)
    A = GAMMA[1] * 0.2
    for _ in range(5):
        x = random_event(RNG)
        analytic = dirac_residual(wrong, A, x)
        assert analytic.coeff_norm() > 0.1
        assert dirac_residual(numeric, A, x).max_abs_diff(analytic) < 1e-8


def test_finite_difference_partials_match_plane_wave():
    wave = PlaneWaveSpinorField(random_spinor(RNG), _random_vector(1.0))
    x = random_event(RNG)
    for numeric, exact in zip(finite_difference_partials(wave.value, x), wave.partials(x)):
        assert numeric.max_abs_diff(exact) < 1e-8


def test_finite_difference_exact_on_linear_field():
    field = _linear_field()
    x = random_event(RNG)
    numeric = finite_difference_partials(field.value, x)
    for d_num, d_exact in zip(numeric, field.partials(x)):
        assert d_num.max_abs_diff(d_exact) < 1e-8


def test_bad_inputs_raise():
    with pytest.raises(DomainError):
        finite_difference_partials(lambda x: ONE, vector(0, 0, 0, 0), h=0.0)
    with pytest.raises(DomainError):
        PlaneWaveSpinorField(GAMMA[0], GAMMA[0])
    with pytest.raises(DomainError):
        PlaneWaveSpinorField(ONE, SIGMA[0])
    with pytest.raises(DomainError):
        PlaneWaveSpinorField.free(ONE, rho=0.0)
    with pytest.raises(DomainError):
        project(PlaneWaveSpinorField.free(ONE), 0)


# ==================== zitter Dirac 方程 ====================

def test_free_plane_wave_solves_zitter_dirac_and_identity():
    for _ in range(20):
        wave = PlaneWaveSpinorField.zitter_family(random_rotor(RNG), rho=float(RNG.uniform(0.5, 2.0)))
        x = random_event(RNG)
        assert zitter_dirac_residual(wave, None, x).coeff_norm() < ATOL
        assert dirac_residual(wave, None, x).coeff_norm() < ATOL
        assert zitter_momentum_identity(wave) < ATOL


def test_zitter_family_solves_only_the_projected_equation():
    # 纯空间转动：e2 e0 的系数不超过 1
    R0 = electroweak_element(RNG.uniform(-math.pi, math.pi, 3), 0.0)
    lam = 0.7
    wave = PlaneWaveSpinorField.zitter_family(R0, lam=lam)
    x = random_event(RNG)
    assert zitter_dirac_residual(wave, None, x).coeff_norm() < ATOL
    assert dirac_residual(wave, None, x).coeff_norm() > 0.1

    # p u = (p.u)(1 - e2 e0)，p.u = m_e + 2 lam
    e0, e2 = (R0 * g * R0.reverse() for g in (GAMMA[0], GAMMA[2]))
    pu = wave.momentum() * (e0 + e2)
    assert pu.max_abs_diff((ONE - e2 * e0) * (1.0 + 2.0 * lam)) < ATOL
    assert zitter_momentum_identity(wave) == pytest.approx(2.0 * lam, rel=1e-12)


def test_zitter_residual_is_invariant_under_neutrino_projection():
    field = _linear_field()
    A = _random_vector()
    for _ in range(10):
        x = random_event(RNG)
        residual = zitter_dirac_residual(field, A, x)
        assert residual.coeff_norm() > 1e-3
        assert (residual * P_MINUS).max_abs_diff(residual) < ATOL
        assert (residual * P_PLUS).coeff_norm() < ATOL


def test_zitter_residual_projection_idempotent():
    field = _linear_field()
    A = lambda x: GAMMA[1] * float(x.coeffs[1])
    x = random_event(RNG)
    direct = zitter_dirac_residual(field, A, x)
    assert zitter_dirac_residual(project(field, 1), A, x).max_abs_diff(direct) < ATOL


def test_charge_conjugate_split_reconstructs_psi():
    for _ in range(50):
        psi = random_spinor(RNG)
        electron, neutrino = charge_conjugate_split(psi)
        assert (electron + neutrino).max_abs_diff(psi) < ATOL
        assert (electron * P_MINUS).coeff_norm() < ATOL
        assert (neutrino * P_PLUS).coeff_norm() < ATOL


def test_projector_itself_is_singular():
    field = GeneralSpinorField(lambda x: P_PLUS)
    with pytest.raises(SingularSpinorError):
        local_observables(field, vector(0, 0, 0, 0))


# ==================== 局部可观测量 ====================

def test_rest_plane_wave_frame():
    rho = 1.7
    obs = local_observables(PlaneWaveSpinorField.free(ONE, rho=rho), vector(0.0, 0.3, -0.2, 0.1))
    # x^0 = 0 时相位为 1
    assert obs.rho == pytest.approx(rho)
    assert obs.v.is_close(GAMMA[0])
    assert obs.s.is_close(GAMMA[3] * 0.5)
    assert obs.u.is_close(GAMMA[0] + GAMMA[2])
    assert obs.rho_v.is_close(GAMMA[0] * rho)


def test_projected_observables_are_null():
    for _ in range(200):
        psi = _canonical_spinor()
        obs = local_observables(GeneralSpinorField(lambda x, psi=psi: psi), random_event(RNG))
        scale = obs.rho ** 2
        assert abs(dot(obs.rho_u, obs.rho_u)) < 1e-12 * scale
        assert (obs.rho_S * obs.rho_S).coeff_norm() < 1e-12 * scale
        assert abs(obs.current_null) < 1e-12 * scale
        assert obs.rho_u.max_abs_diff(obs.u * obs.rho) < 1e-12 * obs.rho
        assert obs.J.max_abs_diff(obs.rho_u * -1.0) < 1e-12 * obs.rho


def test_projected_spin_absorbs_duality_angle():
    for beta in (0.0, 0.4, -1.1, 2.5):
        R = random_rotor(RNG)
        psi = compose_spinor(1.3, beta, R)
        obs = local_observables(GeneralSpinorField(lambda x, psi=psi: psi), vector(0, 0, 0, 0))
        assert obs.beta == pytest.approx(beta, abs=1e-12)
        assert obs.rho_S.max_abs_diff(obs.S * obs.rho) < ATOL
        if beta == 0.0:
            e = obs.e
            assert obs.S.max_abs_diff(((e[0] + e[2]) * e[1]) * 0.5) < ATOL


def test_ordinary_interaction_density():
    for _ in range(50):
        psi = _canonical_spinor()
        field = _random_field()
        obs = local_observables(GeneralSpinorField(lambda x, psi=psi: psi), vector(0, 0, 0, 0), F=field)
        _, _, R = canonical_decompose(psi)
        E, B = bivector_to_eb(R.reverse() * field.F * R)
        expected = -obs.rho * 0.5 * (B[2] * math.cos(obs.beta) + E[2] * math.sin(obs.beta))
        assert obs.interaction == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_projected_interaction_density():
    for _ in range(50):
        psi = _canonical_spinor()
        field = _random_field()
        obs = local_observables(GeneralSpinorField(lambda x, psi=psi: psi), vector(0, 0, 0, 0), F=field)
        _, beta, R = canonical_decompose(psi)
        E, B = bivector_to_eb(R.reverse() * field.F * R)
        d = 0.5 * np.array([-math.cos(beta), 0.0, -math.sin(beta)])
        s = 0.5 * np.array([-math.sin(beta), 0.0, math.cos(beta)])
        expected = obs.rho * (E @ d - B @ s)
        assert obs.projected_interaction == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_projected_potential_matches_particle_spin_potential():
    for _ in range(20):
        R = random_rotor(RNG)
        rho = float(RNG.uniform(0.5, 2.0))
        field = _random_field()
        x = random_event(RNG)
        wave = PlaneWaveSpinorField.free(R, rho=rho)
        obs = local_observables(wave, x, F=field)
        # 平面波在 x 处的转子
        _, _, R_x = canonical_decompose(wave.value(x))
        state = initial_state(R_x)
        particle = observables(state)
        assert obs.projected_potential == pytest.approx(
            rho * spin_potential(particle.S, field.F), rel=1e-10, abs=1e-12)


def test_observables_without_field_have_no_densities():
    obs = local_observables(PlaneWaveSpinorField.free(ONE), vector(0, 0, 0, 0))
    assert obs.interaction is None
    assert obs.projected_interaction is None


# ==================== 弱电规范群 ====================

def test_identity_element_passes():
    check = electroweak_gauge_check((0.0, 0.0, 0.0), 0.0)
    assert check.U.is_close(ONE)
    assert check.passed
    assert not check.mixes_components


def test_random_gauge_elements_preserve_mass_term():
    for _ in range(1000):
        check = electroweak_gauge_check(RNG.uniform(-math.pi, math.pi, 3), float(RNG.uniform(-math.pi, math.pi)))
        assert check.passed
        assert check.mass_term_error < 1e-12
        assert check.current_error < 1e-12


def test_chi_subgroup_preserves_electron_neutrino_split():
    chi = 0.9
    U = electroweak_element((0.0, 0.0, 0.0), chi)
    assert not electroweak_gauge_check((0.0, 0.0, 0.0), chi).mixes_components
    psi = random_spinor(RNG)
    electron, neutrino = charge_conjugate_split(psi * U)
    assert electron.max_abs_diff(psi * P_PLUS * U) < ATOL
    assert neutrino.max_abs_diff(psi * P_MINUS * U) < ATOL


@pytest.mark.parametrize("theta, mixes", [
    ((0.0, 0.8, 0.0), False),
    ((0.8, 0.0, 0.0), True),
    ((0.0, 0.0, 0.8), True),
])
def test_su2_rotations_mix_components_off_the_sigma2_axis(theta, mixes):
    check = electroweak_gauge_check(theta, 0.3)
    assert check.passed
    assert check.mixes_components == mixes


def test_gauge_factor_preserves_dirac_current():
    wave = PlaneWaveSpinorField.free(random_rotor(RNG), rho=1.4)
    U = electroweak_element(RNG.uniform(-1.0, 1.0, 3), 0.7)
    x = random_event(RNG)
    rotated = GeneralSpinorField(lambda y: wave.value(y) * U)
    before = local_observables(wave, x)
    after = local_observables(rotated, x)
    assert after.rho_v.max_abs_diff(before.rho_v) < ATOL


def test_boost_factor_is_rejected():
    check = check_right_factor(exp_bivector(SIGMA[0] * 0.3))
    assert not check.passed
    assert check.mass_term_error > 0.1


def test_pseudoscalar_factor_is_not_unit_when_scaled():
    check = check_right_factor((ONE + I) * 1.0)
    assert not check.passed
    assert check.unit_error == pytest.approx(1.0)


def test_theta_needs_three_components():
    with pytest.raises(DomainError):
        electroweak_element((0.1, 0.2), 0.0)


# ==================== 汇总报告 ====================

def test_dirac_check_report_passes():
    results = dirac_check_report(samples=200, seed=3)
    assert len(results) == 9
    assert all(r.passed for r in results), [r.to_dict() for r in results if not r.passed]
    assert len({r.name for r in results}) == len(results)
    row = results[0].to_dict()
    assert set(row) == {"name", "max_residual", "tolerance", "passed"}
