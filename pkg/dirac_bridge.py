"""
dirac_bridge.py - 粒子模型与实 Dirac 方程之间的代数检验层
平面波旋量场、Dirac 方程与 zitter Dirac 方程残差、局部可观测量、
电子/中微子分量分裂以及弱电规范群检查
自然单位与 zitter_dynamics 一致：hbar = m_e = 1，q = -1
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from exceptions import DomainError
from field_models import GAMMA_UP, FieldModel, Partials
from sta_core import (
    GAMMA,
    GAMMA_PLUS,
    GRADES,
    I,
    ONE,
    SIGMA,
    Multivector,
    canonical_decompose,
    dot,
    exp_bivector,
    relative_vector,
    rotate,
)
from zitter_dynamics import DEFAULT_CHARGE, HBAR, M_E

logger = logging.getLogger(__name__)

# ==================== 1. 常量 ====================

I_SIGMA3 = I * SIGMA[2]                 # = gamma2 gamma1
P_PLUS = (ONE + SIGMA[1]) * 0.5         # 电子投影 (1 + sigma2)/2
P_MINUS = (ONE - SIGMA[1]) * 0.5        # 中微子投影 (1 - sigma2)/2
FD_STEP = 1e-5
GAUGE_TOLERANCE = 1e-12

SpinorFn = Callable[[Multivector], Multivector]
PartialsFn = Callable[[Multivector], Partials]
VectorPotential = Union[None, Multivector, Callable[[Multivector], Multivector]]


def _potential_at(A: VectorPotential, x: Multivector) -> Optional[Multivector]:
    if A is None:
        return None
    if isinstance(A, Multivector):
        return A
    return A(x)


# ==================== 2. 旋量场 ====================

def finite_difference_partials(value_fn: SpinorFn, x: Multivector, h: float = FD_STEP) -> Partials:
    """
    中心差分 + 一次 Richardson 外推：(4 D(h/2) - D(h)) / 3，截断误差 O(h^4)
    """
    if h <= 0.0:
        raise DomainError(f"差分步长必须为正，收到 {h}")

    def central(mu: int, step: float) -> Multivector:
        shift = GAMMA[mu] * step
        return (value_fn(x + shift) - value_fn(x - shift)) / (2.0 * step)

    partials = []
    for mu in range(4):
        coarse = central(mu, h)
        fine = central(mu, 0.5 * h)
        partials.append((fine * 4.0 - coarse) / 3.0)
    return tuple(partials)


class SpinorField(ABC):
    """实旋量场 psi(x)：事件 -> 偶多重向量"""

    @abstractmethod
    def value(self, x: Multivector) -> Multivector:
        """事件 x 处的 psi"""

    def partials(self, x: Multivector) -> Partials:
        """(∂_0 psi, ..., ∂_3 psi)，默认用有限差分"""
        return finite_difference_partials(self.value, x)

    def gradient(self, x: Multivector) -> Multivector:
        """∇psi = gamma^mu ∂_mu psi"""
        total = Multivector()
        for mu, d_psi in enumerate(self.partials(x)):
            total = total + GAMMA_UP[mu] * d_psi
        return total


class PlaneWaveSpinorField(SpinorField):
    """
    平面波 psi(x) = psi0 exp(i sigma3 k.x)

    ∂_mu psi = psi i sigma3 k_mu，因为 psi0 i sigma3 与指数因子对易。
    正能自由解取 k = -p/hbar，p = m e0 + q A（见 free）。
    """

    def __init__(self, psi0: Multivector, k: Multivector):
        if not np.allclose(psi0.coeffs[GRADES % 2 == 1], 0.0, atol=1e-14 * max(1.0, psi0.coeff_norm())):
            raise DomainError("平面波振幅 psi0 必须是偶多重向量")
        if not np.allclose(k.coeffs[GRADES != 1], 0.0):
            raise DomainError("波矢 k 必须是向量")
        self.psi0 = psi0
        self.k = k
        self._k_lower = tuple(dot(k, g) for g in GAMMA)

    @classmethod
    def free(cls, R0: Multivector, rho: float = 1.0, m: float = M_E, q: float = DEFAULT_CHARGE,
             A: Optional[Multivector] = None, hbar: float = HBAR) -> "PlaneWaveSpinorField":
        """常势 A 中的正能自由解：psi0 = rho^{1/2} R0，hbar k = -(m e0 + q A)"""
        if rho <= 0.0:
            raise DomainError(f"密度 rho 必须为正，收到 {rho}")
        e0 = rotate(R0, GAMMA[0])
        p = e0 * m
        if A is not None:
            p = p + A * q
        return cls(R0 * math.sqrt(rho), p * (-1.0 / hbar))

    @classmethod
    def zitter_family(cls, R0: Multivector, lam: float = 0.0, rho: float = 1.0, m: float = M_E,
                      hbar: float = HBAR) -> "PlaneWaveSpinorField":
        """
        无场 zitter Dirac 方程的平面波族 p = m e0 + lam (e0 - e2)
        lam = 0 时同时满足普通 Dirac 方程
        """
        if rho <= 0.0:
            raise DomainError(f"密度 rho 必须为正，收到 {rho}")
        e0 = rotate(R0, GAMMA[0])
        e2 = rotate(R0, GAMMA[2])
        p = e0 * (m + lam) - e2 * lam
        return cls(R0 * math.sqrt(rho), p * (-1.0 / hbar))

    def momentum(self, hbar: float = HBAR) -> Multivector:
        return self.k * (-hbar)

    def _phase(self, x: Multivector) -> Multivector:
        angle = dot(self.k, x)
        return ONE * math.cos(angle) + I_SIGMA3 * math.sin(angle)

    def value(self, x: Multivector) -> Multivector:
        return self.psi0 * self._phase(x)

    def partials(self, x: Multivector) -> Partials:
        base = self.value(x) * I_SIGMA3
        return tuple(base * k_mu for k_mu in self._k_lower)


class GeneralSpinorField(SpinorField):
    """用户给定的解析旋量族；未给偏导数时退回有限差分"""

    def __init__(self, value_fn: SpinorFn, partials_fn: Optional[PartialsFn] = None):
        self._value_fn = value_fn
        self._partials_fn = partials_fn

    def value(self, x: Multivector) -> Multivector:
        return self._value_fn(x)

    def partials(self, x: Multivector) -> Partials:
        if self._partials_fn is None:
            return finite_difference_partials(self._value_fn, x)
        return self._partials_fn(x)


def project(field: SpinorField, sign: int = 1) -> GeneralSpinorField:
    """psi_± = psi (1 ± sigma2)/2，偏导数同样右乘投影"""
    if sign not in (1, -1):
        raise DomainError(f"投影符号只能是 +1 或 -1，收到 {sign}")
    P = P_PLUS if sign > 0 else P_MINUS
    return GeneralSpinorField(
        lambda x: field.value(x) * P,
        lambda x: tuple(d * P for d in field.partials(x)),
    )


def charge_conjugate_split(psi: Multivector) -> Tuple[Multivector, Multivector]:
    """psi = psi_e + psi_nu，psi_e = psi P+，psi_nu = psi P-"""
    return psi * P_PLUS, psi * P_MINUS


# ==================== 3. 方程残差 ====================

def dirac_residual(field: SpinorField, A: VectorPotential, x: Multivector,
                   q: float = DEFAULT_CHARGE, m_e: float = M_E, hbar: float = HBAR) -> Multivector:
    """∇psi i sigma3 hbar - q A psi - m_e psi gamma0；精确解为零"""
    psi = field.value(x)
    residual = field.gradient(x) * I_SIGMA3 * hbar - psi * GAMMA[0] * m_e
    A_x = _potential_at(A, x)
    if A_x is not None:
        residual = residual - A_x * psi * q
    return residual


def zitter_dirac_residual(field: SpinorField, A: VectorPotential, x: Multivector,
                          q: float = DEFAULT_CHARGE, m_e: float = M_E,
                          hbar: float = HBAR) -> Multivector:
    """
    ∇psi+ i sigma3 hbar - q A psi+ sigma3 - m_e psi+ gamma0，psi+ = psi P+

    每一项右侧的 i sigma3、sigma3、gamma0 都与 sigma2 反对易，
    因此残差满足 R P- = R。
    """
    plus = project(field, 1)
    psi = plus.value(x)
    residual = plus.gradient(x) * I_SIGMA3 * hbar - psi * GAMMA[0] * m_e
    A_x = _potential_at(A, x)
    if A_x is not None:
        residual = residual - A_x * psi * SIGMA[2] * q
    return residual


def zitter_momentum_identity(field: PlaneWaveSpinorField, m_e: float = M_E,
                             hbar: float = HBAR) -> float:
    """平面波的 |p u - m_e (1 - e2 e0)| 系数最大模"""
    _, _, R = canonical_decompose(field.psi0)
    e0 = rotate(R, GAMMA[0])
    e2 = rotate(R, GAMMA[2])
    target = (ONE - e2 * e0) * m_e
    return (field.momentum(hbar) * (e0 + e2)).max_abs_diff(target)


# ==================== 4. 局部可观测量 ====================

@dataclass(frozen=True)
class LocalObservables:
    """
    单点可观测量。rho_v 为普通 Dirac 流，rho_u 与 rho_S 来自电子投影 psi+；
    interaction 为 <F psi i sigma3 hbar psi~>/2，
    projected_interaction 为 <F psi+ i sigma3 hbar psi+~> = rho <F S>
    """
    rho: float
    beta: float
    e: Tuple[Multivector, ...]
    v: Multivector
    u: Multivector
    s: Multivector
    S_bar: Multivector
    S: Multivector
    rho_v: Multivector
    rho_u: Multivector
    rho_S: Multivector
    J: Multivector
    current_null: float
    interaction: Optional[float] = None
    projected_interaction: Optional[float] = None
    projected_potential: Optional[float] = None


def local_observables(field: SpinorField, x: Multivector, F: Optional[FieldModel] = None,
                      q: float = DEFAULT_CHARGE, m_e: float = M_E,
                      hbar: float = HBAR) -> LocalObservables:
    """
    rho e_mu = psi gamma_mu psi~；零密度点抛出 SingularSpinorError
    """
    psi = field.value(x)
    rho, beta, R = canonical_decompose(psi)
    psi_rev = psi.reverse()
    e = tuple(rotate(R, g) for g in GAMMA)
    u = rotate(R, GAMMA_PLUS)

    psi_plus, _ = charge_conjugate_split(psi)
    psi_plus_rev = psi_plus.reverse()
    rho_u = psi_plus * GAMMA[0] * psi_plus_rev * 2.0
    rho_S = psi_plus * I_SIGMA3 * psi_plus_rev * hbar
    J = rho_u * q

    # 对偶角并入 e1 的转动：e1' = e1 cos(beta) + e3 sin(beta)
    e1_rotated = e[1] * math.cos(beta) + e[3] * math.sin(beta)
    S = (u * e1_rotated).grade(2) * (0.5 * hbar)

    interaction = projected = potential = None
    if F is not None:
        F_x = F.field(x)
        interaction = 0.5 * (F_x * psi * I_SIGMA3 * psi_rev).scalar * hbar
        projected = (F_x * rho_S).scalar
        potential = (q / m_e) * projected

    return LocalObservables(
        rho=rho, beta=beta, e=e, v=e[0], u=u,
        s=e[3] * (0.5 * hbar),
        S_bar=(e[2] * e[1]) * (0.5 * hbar),
        S=S,
        rho_v=psi * GAMMA[0] * psi_rev,
        rho_u=rho_u, rho_S=rho_S, J=J,
        current_null=dot(J, J),
        interaction=interaction,
        projected_interaction=projected,
        projected_potential=potential,
    )


# ==================== 5. 弱电规范群 ====================

@dataclass(frozen=True)
class GaugeCheck:
    U: Multivector
    even_error: float
    unit_error: float
    mass_term_error: float
    current_error: float
    chi_split_error: float
    mixes_components: bool
    passed: bool


def electroweak_element(theta: Sequence[float], chi: float) -> Multivector:
    """U = exp(i theta/2) exp(i chi/2)，theta = theta_k sigma_k"""
    if len(theta) != 3:
        raise DomainError(f"theta 需要 3 个分量，收到 {len(theta)}")
    rotation = exp_bivector(I * relative_vector(theta) * 0.5)
    return rotation * _duality_phase(chi)


def _duality_phase(chi: float) -> Multivector:
    return ONE * math.cos(0.5 * chi) + I * math.sin(0.5 * chi)


def _commutator_error(U: Multivector, M: Multivector) -> float:
    return (U * M).max_abs_diff(M * U)


def check_right_factor(U: Multivector, tolerance: float = GAUGE_TOLERANCE,
                       chi_split_error: float = 0.0) -> GaugeCheck:
    """
    右乘因子 psi -> psi U 的代数条件：U 为偶、U U~ 为单位模的 e^{i chi}、
    U~ gamma0 U = gamma0、U gamma0 U~ = gamma0（Dirac 流不变）
    """
    even_error = float(np.max(np.abs(U.coeffs[GRADES % 2 == 1])))
    norm = U * U.reverse()
    rest = norm.coeffs.copy()
    rest[0] = rest[15] = 0.0
    unit_error = max(abs(math.hypot(norm.scalar, norm.pseudoscalar) - 1.0),
                     float(np.max(np.abs(rest))))
    mass_term_error = (U.reverse() * GAMMA[0] * U).max_abs_diff(GAMMA[0])
    current_error = (U * GAMMA[0] * U.reverse()).max_abs_diff(GAMMA[0])
    passed = max(even_error, unit_error, mass_term_error, current_error, chi_split_error) <= tolerance
    return GaugeCheck(
        U=U,
        even_error=even_error,
        unit_error=unit_error,
        mass_term_error=mass_term_error,
        current_error=current_error,
        chi_split_error=chi_split_error,
        mixes_components=_commutator_error(U, SIGMA[1]) > tolerance,
        passed=passed,
    )


def electroweak_gauge_check(theta: Sequence[float], chi: float,
                            tolerance: float = GAUGE_TOLERANCE) -> GaugeCheck:
    """
    构造 U 并检查右乘条件；chi 子群与 sigma2 对易，
    因而 (psi U)± = psi± U，电子与中微子分量各自保持
    """
    U = electroweak_element(theta, chi)
    chi_split = _commutator_error(_duality_phase(chi), SIGMA[1])
    return check_right_factor(U, tolerance=tolerance, chi_split_error=chi_split)


# ==================== 6. 检查报告 ====================

@dataclass(frozen=True)
class CheckResult:
    name: str
    max_residual: float
    tolerance: float
    passed: bool

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def random_rotor(rng: np.random.Generator, scale: float = 0.6) -> Multivector:
    """随机洛伦兹转子：增压与空间转动生成元的指数"""
    boost = relative_vector(rng.uniform(-scale, scale, 3))
    rotation = I * relative_vector(rng.uniform(-math.pi, math.pi, 3))
    return exp_bivector((boost + rotation) * 0.5)


def random_spinor(rng: np.random.Generator) -> Multivector:
    coeffs = np.where(GRADES % 2 == 0, rng.normal(size=16), 0.0)
    return Multivector(coeffs)


def random_event(rng: np.random.Generator, scale: float = 3.0) -> Multivector:
    return Multivector(np.concatenate(([0.0], rng.uniform(-scale, scale, 4), np.zeros(11))))


def _result(name: str, value: float, tolerance: float) -> CheckResult:
    return CheckResult(name=name, max_residual=float(value), tolerance=tolerance,
                       passed=bool(value <= tolerance))


def dirac_check_report(samples: int = 1000, seed: int = 20240601,
                       tolerance: float = 1e-12) -> List[CheckResult]:
    """
    平面波残差、zitter 动量恒等式、投影不变性、零流、规范群检查的汇总表
    """
    rng = np.random.default_rng(seed)
    n_waves = max(1, samples // 20)

    free_res = zitter_res = identity = family_res = null_u = null_S = 0.0
    for _ in range(n_waves):
        R0 = random_rotor(rng)
        rho = float(rng.uniform(0.5, 2.0))
        A = Multivector(np.concatenate(([0.0], rng.normal(scale=0.3, size=4), np.zeros(11))))
        wave = PlaneWaveSpinorField.free(R0, rho=rho, A=A)
        zitter = PlaneWaveSpinorField.zitter_family(R0, lam=0.0, rho=rho)
        family = PlaneWaveSpinorField.zitter_family(R0, lam=float(rng.uniform(-1.0, 1.0)), rho=rho)
        x = random_event(rng)
        free_res = max(free_res, dirac_residual(wave, A, x).coeff_norm() / rho)
        zitter_res = max(zitter_res, zitter_dirac_residual(zitter, None, x).coeff_norm() / rho)
        family_res = max(family_res, zitter_dirac_residual(family, None, x).coeff_norm() / rho)
        identity = max(identity, zitter_momentum_identity(zitter))
        psi = random_spinor(rng)
        obs = local_observables(GeneralSpinorField(lambda _x, psi=psi: psi), x)
        scale = psi.coeff_norm() ** 4
        null_u = max(null_u, abs(dot(obs.rho_u, obs.rho_u)) / scale)
        null_S = max(null_S, (obs.rho_S * obs.rho_S).coeff_norm() / scale)

    # 非解旋量：残差右乘 P- 不变
    projection = 0.0
    for _ in range(n_waves):
        M = [random_spinor(rng) for _ in range(5)]
        field = GeneralSpinorField(
            lambda x, M=M: M[0] + sum((M[mu + 1] * float(x.coeffs[1 + mu]) for mu in range(4)), Multivector()),
            lambda x, M=M: tuple(M[1:]),
        )
        x = random_event(rng)
        residual = zitter_dirac_residual(field, GAMMA[0] * 0.4, x)
        projection = max(projection, (residual * P_MINUS).max_abs_diff(residual))

    gauge = 0.0
    for _ in range(samples):
        check = electroweak_gauge_check(rng.uniform(-math.pi, math.pi, 3), float(rng.uniform(-math.pi, math.pi)))
        gauge = max(gauge, check.even_error, check.unit_error, check.mass_term_error,
                    check.current_error, check.chi_split_error)

    boost = check_right_factor(exp_bivector(SIGMA[0] * 0.3))

    results = [
        _result("Dirac 平面波残差", free_res, tolerance),
        _result("zitter Dirac 平面波残差", zitter_res, tolerance),
        _result("zitter 平面波族残差 (lam != 0)", family_res, tolerance),
        _result("p u = m_e (1 - e2 e0)", identity, tolerance),
        _result("残差右投影 P- 不变", projection, tolerance),
        _result("rho u 零矢量", null_u, tolerance),
        _result("rho S 零双矢量", null_S, tolerance),
        _result("弱电规范 U~ gamma0 U = gamma0", gauge, tolerance),
        # 反例：增压因子必须被拒绝
        CheckResult(name="增压因子被拒绝", max_residual=boost.mass_term_error,
                    tolerance=tolerance, passed=not boost.passed),
    ]
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.warning("Dirac 检查未通过: %s", ", ".join(failed))
    else:
        logger.info("Dirac 检查全部通过 (%d 项)", len(results))
    return results
