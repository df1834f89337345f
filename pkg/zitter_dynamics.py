"""
zitter_dynamics.py - 类光 zitter 电子模型
状态、可观测量、转子/动量运动方程、带不变量监视的积分器、自由粒子与常场闭式解、
zitter 平均、极小模型以及静止系（去增压）动力学
自然单位 c = hbar = m_e = 1，于是 omega_e = 2，lambda_e = 1/2
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from tqdm import tqdm

from exceptions import (
    ConvergenceError,
    DegenerateStateError,
    DomainError,
    GaugeConstraintError,
    InvariantDriftError,
)
from field_models import GAMMA_UP, FieldModel, StaticPotentialField
from sta_core import (
    GAMMA,
    GAMMA_PLUS,
    I,
    ONE,
    Multivector,
    bivector_to_eb,
    boost_from_velocity,
    dot,
    exp_bivector,
    normalize_rotor,
    rotate,
    rotor_drift,
    spatial_components,
    split_bivector,
    vector,
)

logger = logging.getLogger(__name__)

# ==================== 1. 常量 ====================

M_E = 1.0
HBAR = 1.0
OMEGA_E = 2.0 * M_E / HBAR
LAMBDA_E = HBAR / (2.0 * M_E)
DEFAULT_CHARGE = -1.0
ZITTER_PERIOD = 2.0 * math.pi / OMEGA_E
DEFAULT_STEPS_PER_PERIOD = 200
GAUGE_BOUND = 1e-6

ZERO = Multivector()
E2E1 = GAMMA[2] * GAMMA[1]


class FreeMode(str, Enum):
    TIMELIKE = "timelike"
    LIGHTLIKE = "lightlike"


class CenterStrategy(str, Enum):
    RADIUS = "radius"        # x = z + lambda_e e1
    MOMENTUM = "momentum"    # x = z - S.p^-1


class Scheme(str, Enum):
    RK4 = "rk4"
    LIE = "lie"


# ==================== 2. 数据类型 ====================

@dataclass(frozen=True)
class ParticleState:
    """粒子状态：固有时、zitter 相位、事件、转子、动量"""
    tau: float
    phi: float
    z: Multivector
    R: Multivector
    p: Multivector

    def frame(self) -> Tuple[Multivector, ...]:
        Rr = self.R.reverse()
        return tuple(self.R * g * Rr for g in GAMMA)

    @property
    def u(self) -> Multivector:
        return rotate(self.R, GAMMA_PLUS)


@dataclass(frozen=True)
class Observables:
    u: Multivector
    e: Tuple[Multivector, ...]
    S: Multivector
    s: Multivector
    m: float
    m1: float
    m2: float
    Phi: float
    omega: float
    lam: float
    gauge_violation: float


@dataclass(frozen=True)
class MonitorLimits:
    """积分监视量的越界阈值"""
    rotor_norm: float = 1e-9
    mass_integral: float = 1e-8
    kappa1: float = 1e-8
    null: float = 1e-12
    spin_null: float = 1e-12
    gauge: float = GAUGE_BOUND
    energy: float = 1e-8

    def limit_for(self, monitor: str) -> float:
        return {
            "rotor_norm_drift": self.rotor_norm,
            "mass_integral_drift": self.mass_integral,
            "kappa1_drift": self.kappa1,
            "null_drift": self.null,
            "spin_null_drift": self.spin_null,
            "gauge_violation": self.gauge,
            "energy_drift": self.energy,
        }[monitor]


MONITOR_NAMES = (
    "rotor_norm_drift",
    "mass_integral_drift",
    "kappa1_drift",
    "null_drift",
    "spin_null_drift",
    "gauge_violation",
    "energy_drift",
)


@dataclass(frozen=True)
class Trajectory:
    states: List[ParticleState]
    monitors: Dict[str, np.ndarray]
    dtau: float
    q: float
    scheme: str

    def __len__(self) -> int:
        return len(self.states)

    @property
    def taus(self) -> np.ndarray:
        return np.array([s.tau for s in self.states])

    def max_drift(self, monitor: str) -> float:
        values = self.monitors[monitor]
        return float(np.max(values)) if len(values) else 0.0


@dataclass(frozen=True)
class FreeHistory:
    tau: float
    z: Multivector
    S: Multivector
    r: Multivector
    x: Multivector
    R: Multivector
    Omega: Multivector


@dataclass(frozen=True)
class ZitterAverage:
    v: Multivector
    S_bar: Multivector
    m_bar: float
    p_bar: Multivector
    Phi_bar: float
    x: Multivector


@dataclass(frozen=True)
class MinimalTrajectory:
    taus: np.ndarray
    x: List[Multivector]
    v: List[Multivector]
    R: List[Multivector]
    frame_velocity_gap: np.ndarray

    def spin_axis(self, index: int) -> Multivector:
        return rotate(self.R[index], GAMMA[3])


@dataclass(frozen=True)
class RestFrameState:
    """相对 gamma_0 的三维分量（去增压后）"""
    r: np.ndarray
    s: np.ndarray
    d: np.ndarray
    mu: np.ndarray
    u: np.ndarray
    E0: np.ndarray
    B0: np.ndarray
    L: Multivector


@dataclass(frozen=True)
class RestFrameRates:
    rdot: np.ndarray
    sdot: np.ndarray
    e2_dot_a: float
    torque_residual: float


@dataclass(frozen=True)
class ThomasPrecession:
    omega: Multivector
    boost: np.ndarray
    precession: np.ndarray


# ==================== 3. 可观测量 ====================

def spin_potential(S: Multivector, F: Multivector, q: float = DEFAULT_CHARGE, m_e: float = M_E) -> float:
    """Phi = (q/m_e) S.F"""
    return (q / m_e) * (S | F).scalar


def dipole_moments(S: Multivector, v: Multivector, q: float = DEFAULT_CHARGE,
                   m_e: float = M_E) -> Tuple[Multivector, Multivector]:
    """(q/m_e) S 相对 v 的电偶极 d_v 与磁矩 mu_v"""
    return split_bivector(S * (q / m_e), v)


def observables(state: ParticleState, field: Optional[FieldModel] = None,
                q: float = DEFAULT_CHARGE, gauge_bound: float = GAUGE_BOUND) -> Observables:
    e = state.frame()
    u = e[0] + e[2]
    S = (u * e[1]).grade(2) * (0.5 * HBAR)
    s = e[3] * (0.5 * HBAR)
    m = dot(state.p, u)
    if m <= 0.0:
        raise DegenerateStateError(f"质量 m = p.u = {m:.6g} 必须为正")
    gauge = (state.p ^ u ^ e[0]).coeff_norm()
    if gauge > gauge_bound:
        raise GaugeConstraintError(f"规范约束 p^u^e0 破坏 {gauge:.3e}", gauge)
    Phi = spin_potential(S, field.field(state.z), q) if field is not None else 0.0
    omega = 2.0 * m / HBAR
    return Observables(
        u=u, e=e, S=S, s=s, m=m,
        m1=dot(state.p, e[0]), m2=dot(state.p, e[2]),
        Phi=Phi, omega=omega, lam=1.0 / omega,
        gauge_violation=gauge,
    )


def spin_potential_forms(state: ParticleState, F: Multivector,
                         q: float = DEFAULT_CHARGE) -> Tuple[float, float, float]:
    """
    自旋势的三种写法：(q/m_e) S.F、q lambda_e F.(u e1)、d_v.E_v - mu_v.B_v
    """
    e = state.frame()
    u = e[0] + e[2]
    ue1 = (u * e[1]).grade(2)
    S = ue1 * (0.5 * HBAR)
    d_v, mu_v = dipole_moments(S, e[0], q)
    E_v, B_v = split_bivector(F, e[0])
    return (
        spin_potential(S, F, q),
        q * LAMBDA_E * (F | ue1).scalar,
        dot(d_v, E_v) - dot(mu_v, B_v),
    )


def initial_state(R0: Multivector, z0: Optional[Multivector] = None,
                  field: Optional[FieldModel] = None, q: float = DEFAULT_CHARGE,
                  tau0: float = 0.0, phi0: float = 0.0) -> ParticleState:
    """
    满足质量积分 m - Phi = m_e 的初始状态：p = m_e e0 - Phi e2
    """
    R0 = normalize_rotor(R0)
    z0 = z0 if z0 is not None else vector(0.0, 0.0, 0.0, 0.0)
    e = tuple(rotate(R0, g) for g in GAMMA)
    S = ((e[0] + e[2]) * e[1]).grade(2) * (0.5 * HBAR)
    Phi = spin_potential(S, field.field(z0), q) if field is not None else 0.0
    if M_E + Phi <= 0.0:
        raise DegenerateStateError(f"初始质量 m = {M_E + Phi:.6g} 不为正")
    p = e[0] * M_E - e[2] * Phi
    return ParticleState(tau=tau0, phi=phi0, z=z0, R=R0, p=p)


# ==================== 4. 运动方程 ====================

@dataclass(frozen=True)
class _Kinematics:
    e: Tuple[Multivector, ...]
    u: Multivector
    S: Multivector
    m: float
    F: Multivector
    Phi: float
    grad_phi: Multivector
    S_dot: Multivector
    m_dot: float
    Omega: Multivector
    p_dot: Multivector


def _kinematics(R: Multivector, p: Multivector, z: Multivector,
                field: FieldModel, q: float) -> _Kinematics:
    Rr = R.reverse()
    e = tuple(R * g * Rr for g in GAMMA)
    u = e[0] + e[2]
    S = (u * e[1]).grade(2) * (0.5 * HBAR)
    m = dot(p, u)
    if m <= 0.0:
        raise DegenerateStateError(f"质量 m = {m:.6g} 不为正")
    coupling = q / M_E
    F = field.field(z)
    Phi = coupling * (S | F).scalar
    if field.uniform:
        grad_phi = ZERO
        u_grad_F = ZERO
    else:
        partials = field.partials(z)
        grad_phi = ZERO
        u_grad_F = ZERO
        components = u.coeffs[1:5]
        for mu, dF in enumerate(partials):
            grad_phi = grad_phi + GAMMA_UP[mu] * (coupling * (S | dF).scalar)
            u_grad_F = u_grad_F + dF * float(components[mu])
    S_dot = (u ^ p) + F.commutator(S) * coupling
    m_dot = coupling * ((S_dot | F).scalar + (S | u_grad_F).scalar)
    pi = p - u * M_E
    Omega = (
        (p * e[0] * e[2] * e[1]).grade(2) * (2.0 / HBAR)
        + F * coupling
        + ((grad_phi - (F | pi) * coupling) ^ u) / m
        + (e[2] * e[0]).grade(2) * (m_dot / m)
    ).grade(2)
    p_dot = (F | u) * q + grad_phi
    return _Kinematics(e=e, u=u, S=S, m=m, F=F, Phi=Phi, grad_phi=grad_phi,
                       S_dot=S_dot, m_dot=m_dot, Omega=Omega, p_dot=p_dot)


def rotational_velocity(state: ParticleState, field: FieldModel, q: float = DEFAULT_CHARGE) -> Multivector:
    """
    Omega = 2 p e0e2e1 + qF + (1/m)(grad Phi - qF.pi)^u + (m_dot/m) e2e0，pi = p - m_e u
    """
    return _kinematics(state.R, state.p, state.z, field, q).Omega


def mass_rate(state: ParticleState, field: FieldModel, q: float = DEFAULT_CHARGE) -> float:
    """m_dot = (q/m_e)(S_dot.F + S.(u.grad)F)"""
    return _kinematics(state.R, state.p, state.z, field, q).m_dot


def spin_rate(state: ParticleState, field: FieldModel, q: float = DEFAULT_CHARGE) -> Multivector:
    """S_dot = u^p + (q/m_e) F x S"""
    return _kinematics(state.R, state.p, state.z, field, q).S_dot


# ==================== 5. 积分器 ====================

def _lie_bracket(A: Multivector, B: Multivector) -> Multivector:
    return A.commutator(B) * 2.0


def _dexp_inverse(A: Multivector, C: Multivector) -> Multivector:
    # 四阶方法只需截断到二重括号
    AC = _lie_bracket(A, C)
    return C - AC * 0.5 + _lie_bracket(A, AC) * (1.0 / 12.0)


def _rk4_step(R, p, z, phi, k1: _Kinematics, h, field, q):
    def rates(k: _Kinematics, Rs):
        return (k.Omega * Rs) * 0.5, k.p_dot, k.u, 2.0 * k.m / HBAR

    d1 = rates(k1, R)
    R2, p2, z2 = R + d1[0] * (h / 2), p + d1[1] * (h / 2), z + d1[2] * (h / 2)
    d2 = rates(_kinematics(R2, p2, z2, field, q), R2)
    R3, p3, z3 = R + d2[0] * (h / 2), p + d2[1] * (h / 2), z + d2[2] * (h / 2)
    d3 = rates(_kinematics(R3, p3, z3, field, q), R3)
    R4, p4, z4 = R + d3[0] * h, p + d3[1] * h, z + d3[2] * h
    d4 = rates(_kinematics(R4, p4, z4, field, q), R4)
    w = h / 6.0
    return (
        R + (d1[0] + d2[0] * 2.0 + d3[0] * 2.0 + d4[0]) * w,
        p + (d1[1] + d2[1] * 2.0 + d3[1] * 2.0 + d4[1]) * w,
        z + (d1[2] + d2[2] * 2.0 + d3[2] * 2.0 + d4[2]) * w,
        phi + (d1[3] + 2.0 * d2[3] + 2.0 * d3[3] + d4[3]) * w,
    )


def _lie_step(R, p, z, phi, k1: _Kinematics, h, field, q):
    """
    Munthe-Kaas 型四阶李群步：转子始终由 exp 生成，Omega 恒定时精确
    """
    K1 = k1.Omega * 0.5
    A2 = K1 * (h / 2)
    p2, z2 = p + k1.p_dot * (h / 2), z + k1.u * (h / 2)
    k2 = _kinematics(exp_bivector(A2) * R, p2, z2, field, q)
    K2 = _dexp_inverse(A2, k2.Omega * 0.5)
    A3 = K2 * (h / 2)
    p3, z3 = p + k2.p_dot * (h / 2), z + k2.u * (h / 2)
    k3 = _kinematics(exp_bivector(A3) * R, p3, z3, field, q)
    K3 = _dexp_inverse(A3, k3.Omega * 0.5)
    A4 = K3 * h
    p4, z4 = p + k3.p_dot * h, z + k3.u * h
    k4 = _kinematics(exp_bivector(A4) * R, p4, z4, field, q)
    K4 = _dexp_inverse(A4, k4.Omega * 0.5)
    w = h / 6.0
    A = ((K1 + K2 * 2.0 + K3 * 2.0 + K4) * w).grade(2)
    return (
        exp_bivector(A) * R,
        p + (k1.p_dot + k2.p_dot * 2.0 + k3.p_dot * 2.0 + k4.p_dot) * w,
        z + (k1.u + k2.u * 2.0 + k3.u * 2.0 + k4.u) * w,
        phi + (k1.m + 2.0 * k2.m + 2.0 * k3.m + k4.m) * (2.0 / HBAR) * w,
    )


_STEPPERS = {Scheme.RK4: _rk4_step, Scheme.LIE: _lie_step}


def _kappa1(k: _Kinematics) -> float:
    """第一曲率 -u_dot.e1，u_dot = Omega.u"""
    return -dot(k.Omega | k.u, k.e[1])


@dataclass(frozen=True)
class _MonitorReference:
    mass: float
    kappa1: float
    energy: Optional[float]


def _monitor_values(k: _Kinematics, drift: float, ref: _MonitorReference,
                    p: Multivector, z: Multivector, field: FieldModel) -> Dict[str, float]:
    u_norm = max(1.0, k.u.coeff_norm() ** 2)
    S2 = k.S * k.S
    values = {
        "rotor_norm_drift": drift,
        "mass_integral_drift": abs((k.m - k.Phi) - ref.mass) / M_E,
        "kappa1_drift": abs(_kappa1(k) - ref.kappa1) / OMEGA_E,
        "null_drift": abs(dot(k.u, k.u)) / u_norm,
        "spin_null_drift": (abs(S2.scalar) + abs(S2.pseudoscalar)) / u_norm,
        "gauge_violation": (p ^ k.u ^ k.e[0]).coeff_norm(),
        "energy_drift": 0.0,
    }
    if ref.energy is not None:
        values["energy_drift"] = abs(field.energy(p, z) - ref.energy) / max(1.0, abs(ref.energy))
    return values


def integrate(state0: ParticleState, field: FieldModel, dtau: Optional[float] = None,
              n_steps: int = 0, q: float = DEFAULT_CHARGE, scheme: str = Scheme.RK4,
              limits: Optional[MonitorLimits] = None, record_every: int = 1,
              show_progress: bool = False) -> Trajectory:
    """
    推进 (R, p, z, phi)：R_dot = Omega R / 2，p_dot = qF.u + grad Phi，z_dot = u，phi_dot = 2m
    每步归一化转子并记录监视量；越界时抛出 InvariantDriftError，附带已完成的轨迹前缀
    """
    dtau = ZITTER_PERIOD / DEFAULT_STEPS_PER_PERIOD if dtau is None else dtau
    if dtau <= 0.0:
        raise DomainError(f"步长必须为正 (dtau = {dtau})")
    if n_steps < 0 or record_every < 1:
        raise DomainError("步数不能为负，记录间隔至少为 1")
    try:
        stepper = _STEPPERS[Scheme(scheme)]
    except ValueError:
        raise DomainError(f"未知积分格式: {scheme}")
    limits = limits or MonitorLimits()

    initial_drift = rotor_drift(state0.R)
    R = normalize_rotor(state0.R, tolerance=limits.rotor_norm)
    p, z, phi = state0.p, state0.z, state0.phi
    kin = _kinematics(R, p, z, field, q)
    ref = _MonitorReference(
        mass=kin.m - kin.Phi,
        kappa1=_kappa1(kin),
        energy=field.energy(p, z) if isinstance(field, StaticPotentialField) else None,
    )
    if abs(ref.mass - M_E) > 1e-10:
        logger.warning("初始状态不在质量壳上: m - Phi = %.12g", ref.mass)

    states = [ParticleState(state0.tau, phi, z, R, p)]
    history = {name: [value] for name, value in
               _monitor_values(kin, initial_drift, ref, p, z, field).items()}

    def snapshot() -> Trajectory:
        return Trajectory(states=list(states),
                          monitors={k: np.array(v) for k, v in history.items()},
                          dtau=dtau, q=q, scheme=Scheme(scheme).value)

    logger.info("开始积分: %d 步, dtau = %.3e, 格式 %s", n_steps, dtau, Scheme(scheme).value)
    for step in tqdm(range(1, n_steps + 1), desc="积分", disable=not show_progress):
        R, p, z, phi = stepper(R, p, z, phi, kin, dtau, field, q)
        drift = rotor_drift(R)
        R = normalize_rotor(R, tolerance=math.inf)
        kin = _kinematics(R, p, z, field, q)
        values = _monitor_values(kin, drift, ref, p, z, field)
        state = ParticleState(state0.tau + step * dtau, phi, z, R, p)

        violated = [name for name, value in values.items() if value > limits.limit_for(name)]
        if step % record_every == 0 or violated or step == n_steps:
            states.append(state)
            for name, value in values.items():
                history[name].append(value)
        if violated:
            name = violated[0]
            message = f"第 {step} 步 {name} = {values[name]:.3e} 超过界限 {limits.limit_for(name):.1e}"
            logger.error(message)
            raise InvariantDriftError(message, name, values[name], trajectory=snapshot())

    trajectory = snapshot()
    logger.info("积分完成: 质量积分漂移 %.3e, kappa1 漂移 %.3e",
                trajectory.max_drift("mass_integral_drift"), trajectory.max_drift("kappa1_drift"))
    return trajectory


# ==================== 6. 闭式解 ====================

def free_history(p: Multivector, S0: Multivector, z0: Multivector, tau: float,
                 mode: str = FreeMode.LIGHTLIKE, Omega: Optional[Multivector] = None,
                 tolerance: float = 1e-10) -> FreeHistory:
    """
    自由粒子历史 z = [S(tau) - S0] p^-1 + m_e p^-1 tau + z0，S(tau) = exp(Omega tau/2) S0 exp(-Omega tau/2)
    Omega 缺省为 omega_e S_bar/|S_bar|，S_bar = (S0^v) v
    """
    pp = dot(p, p)
    if pp <= 0.0:
        raise DomainError(f"动量必须类时 (p.p = {pp:.6g})")
    mode = FreeMode(mode)
    v = p / math.sqrt(pp)
    S0_sq = S0 * S0
    if mode is FreeMode.LIGHTLIKE:
        if abs(S0_sq.scalar) + abs(S0_sq.pseudoscalar) > tolerance:
            raise DomainError("类光模式要求零自旋双矢量 S0.S0 = 0")
    elif abs(S0_sq.scalar + (0.5 * HBAR) ** 2) + abs(S0_sq.pseudoscalar) > tolerance:
        raise DomainError("类时模式要求 S0^2 = -(hbar/2)^2")

    if Omega is None:
        S_bar = ((S0 ^ v) * v).grade(2)
        magnitude = math.sqrt(max(-dot(S_bar, S_bar), 0.0))
        if magnitude == 0.0:
            raise DomainError("自旋在 p 的静止系中没有转动部分")
        Omega = S_bar * (OMEGA_E / magnitude)
    if (Omega | p).coeff_norm() > tolerance * max(1.0, math.sqrt(pp)):
        raise DomainError("Omega 必须与 p 正交")

    R = exp_bivector(Omega * (0.5 * tau))
    S = rotate(R, S0)
    p_inv = p.inverse()
    z = ((S - S0) * p_inv).grade(1) + p_inv * (M_E * tau) + z0
    r = S | p_inv
    x = z - r

    if mode is FreeMode.LIGHTLIKE:
        radius = math.sqrt(max(-dot(r, r), 0.0))
        rate = math.sqrt(max(-dot(Omega, Omega), 0.0))
        if abs(radius * rate - 1.0) > 1e-8:
            raise DomainError(f"类光模式要求 |r| |Omega| = c，实际 {radius * rate:.6g}")
    return FreeHistory(tau=tau, z=z, S=S, r=r, x=x, R=R, Omega=Omega)


def free_solution(state0: ParticleState, tau: float) -> ParticleState:
    """F = 0 时的精确状态：R = exp(Omega_k tau/2) R0，phi = phi0 + 2m tau"""
    obs = observables(state0)
    if abs(obs.m2) > 1e-10 * max(1.0, abs(obs.m1)):
        raise DomainError(f"自由解要求 m2 = 0，实际 {obs.m2:.3e}")
    Omega = (state0.p * obs.e[0] * obs.e[2] * obs.e[1]).grade(2) * (2.0 / HBAR)
    history = free_history(state0.p, obs.S, state0.z, tau, FreeMode.LIGHTLIKE, Omega=Omega)
    return ParticleState(
        tau=state0.tau + tau,
        phi=state0.phi + obs.omega * tau,
        z=history.z,
        R=history.R * state0.R,
        p=state0.p,
    )


def kepler_phase(omega_e: float, B_term: float, E_amplitude: float, tau: float,
                 phase0: float = 0.0, tolerance: float = 1e-12, max_iter: int = 50) -> float:
    """
    解 chi_dot = (omega_e - B_term) + E_amplitude sin chi，chi(0) = phase0
    对积分形式做牛顿迭代（开普勒方程的同类形式）
    """
    A = omega_e - B_term
    if A <= 0.0:
        raise DomainError(f"有效频率 omega_e - B_term = {A:.6g} 必须为正")
    B = E_amplitude
    if B == 0.0:
        return phase0 + A * tau
    e = B / A
    if abs(e) >= 1.0:
        raise DomainError(f"|E_amplitude| >= 有效频率，相位被锁定 (e = {e:.6g})")
    root = math.sqrt(1.0 - e * e)
    beta = e / (1.0 + root)
    mean_rate = A * root

    def nu(xi: float) -> float:
        return xi + 2.0 * math.atan2(beta * math.sin(xi), 1.0 - beta * math.cos(xi))

    offset = nu(phase0 + 0.5 * math.pi)
    chi = phase0 + mean_rate * tau
    scale = tolerance * max(1.0, abs(tau))
    residual = math.inf
    for _ in range(max_iter):
        residual = (nu(chi + 0.5 * math.pi) - offset) / mean_rate - tau
        if abs(residual) <= scale:
            return chi
        chi -= residual * (A + B * math.sin(chi))
    raise ConvergenceError("开普勒相位迭代未收敛", abs(residual))


def kepler_phase_series(omega_e: float, B_term: float, E_amplitude: float, tau: float,
                        phase0: float = 0.0) -> Tuple[float, float]:
    """一阶微扰解，返回 (相位, 一阶项振幅 E_amplitude/omega_eff)"""
    A = omega_e - B_term
    amplitude = E_amplitude / A
    return phase0 + A * tau + amplitude * (math.cos(phase0) - math.cos(phase0 + A * tau)), amplitude


_TRANSVERSE_PLANES = ((0, 1), (0, 2), (1, 3), (2, 3))


def transverse_coupling(F: Multivector, R0: Multivector) -> float:
    """F 在 R0 标架中 e0e1、e0e2、e1e3、e2e3 四个分量的最大模；为零时 F 与 e2e1 对易"""
    return max(abs((F | rotate(R0, GAMMA[a] * GAMMA[b])).scalar) for a, b in _TRANSVERSE_PLANES)


def _dense_solve(rhs, y0: np.ndarray, taus: np.ndarray, what: str) -> np.ndarray:
    """DOP853 高精度求积，返回与 taus 同序的解 (len(taus), len(y0))"""
    grid, inverse = np.unique(taus, return_inverse=True)
    if len(grid) == 0:
        return np.zeros((0, len(y0)))
    t_end = float(grid[-1])
    if t_end <= 0.0:
        return np.tile(y0, (len(taus), 1))
    solution = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", t_eval=grid, rtol=1e-12, atol=1e-13)
    if not solution.success:
        raise ConvergenceError(f"{what}求积失败: {solution.message}", math.nan)
    return solution.y.T[inverse]


def _aligned_history(state0: ParticleState, field: FieldModel, F: Multivector, R0: Multivector,
                     taus: np.ndarray, q: float) -> List[ParticleState]:
    # L 与 e2e1 对易，U = R0 exp(e2e1 psi/2)，psi 由开普勒相位给出
    obs = observables(state0, field, q)
    coupling = 0.5 * q / M_E
    c0 = coupling * (F | rotate(R0, GAMMA[2] * GAMMA[1])).scalar
    rate = 2.0 * (obs.m - obs.Phi + c0) / HBAR

    def rotor_at(tau: float, psi: float) -> Multivector:
        L = exp_bivector(F * (q * tau / (2.0 * M_E)))
        return L * R0 * (ONE * math.cos(0.5 * psi) + E2E1 * math.sin(0.5 * psi))

    def rhs(tau, y):
        return rotate(rotor_at(tau, rate * tau), GAMMA_PLUS).coeffs[1:5]

    positions = _dense_solve(rhs, state0.z.coeffs[1:5].copy(), taus, "常场位置")
    states = []
    for tau, z_row in zip(taus, positions):
        psi = kepler_phase(rate, 0.0, 0.0, float(tau))
        z = vector(*z_row)
        states.append(ParticleState(
            tau=state0.tau + float(tau),
            phi=state0.phi + psi,
            z=z,
            R=rotor_at(float(tau), psi),
            p=state0.p + (F | (z - state0.z)) * q,
        ))
    return states


def _body_frame_history(state0: ParticleState, field: FieldModel, F: Multivector, R0: Multivector,
                        taus: np.ndarray, q: float) -> List[ParticleState]:
    # U_dot = (1/2) L~(Omega - qF/m_e)L U，p 取守恒量 p - qF.z
    coupling = q / M_E
    p0, z0 = state0.p, state0.z

    def left_rotor(tau: float) -> Multivector:
        return exp_bivector(F * (0.5 * coupling * tau))

    def rhs(tau, y):
        L = left_rotor(tau)
        U = Multivector(y[:16])
        z = vector(*y[16:20])
        k = _kinematics(L * U, p0 + (F | (z - z0)) * q, z, field, q)
        body = rotate(L.reverse(), (k.Omega - F * coupling).grade(2))
        return np.concatenate(((body * U).coeffs * 0.5, k.u.coeffs[1:5], [2.0 * k.m / HBAR]))

    y0 = np.concatenate((R0.coeffs, z0.coeffs[1:5], [0.0]))
    rows = _dense_solve(rhs, y0, taus, "体标架转子")
    states = []
    for tau, row in zip(taus, rows):
        z = vector(*row[16:20])
        states.append(ParticleState(
            tau=state0.tau + float(tau),
            phi=state0.phi + float(row[20]),
            z=z,
            R=normalize_rotor(left_rotor(float(tau)) * Multivector(row[:16]), tolerance=1e-7),
            p=p0 + (F | (z - z0)) * q,
        ))
    return states


def constant_field_history(state0: ParticleState, field: FieldModel, taus: Sequence[float],
                           q: float = DEFAULT_CHARGE) -> List[ParticleState]:
    """
    均匀场中的分离变量解 R = L U，L = exp(qF tau/2m_e)，p = p0 + qF.(z - z0)，z 由 u(tau) 求积

    F 只含 e2e1、e0e3 分量（R0 标架）时 U = R0 exp(e2e1 psi/2)，psi 为开普勒相位；
    其余取向下 U 满足体标架方程 U_dot = (1/2) L~(Omega - qF/m_e) L U，以 DOP853 求积
    """
    if not field.uniform:
        raise DomainError("闭式解只适用于均匀场")
    taus = np.asarray(taus, dtype=float)
    if np.any(taus < 0.0):
        raise DomainError("闭式解只向前推进")
    F = field.field(state0.z)
    R0 = normalize_rotor(state0.R)
    if transverse_coupling(F, R0) <= 1e-14 * max(1.0, F.coeff_norm()):
        return _aligned_history(state0, field, F, R0, taus, q)
    logger.debug("场相对自旋轴有横向分量，改用体标架方程")
    return _body_frame_history(state0, field, F, R0, taus, q)


def constant_field_solution(state0: ParticleState, field: FieldModel, tau: float,
                            q: float = DEFAULT_CHARGE) -> ParticleState:
    return constant_field_history(state0, field, [tau], q)[0]


def relative_momentum_square(state: ParticleState) -> float:
    """pi^2 = p^2 - 2 m_e m，均匀场中守恒"""
    return dot(state.p, state.p) - 2.0 * M_E * dot(state.p, state.u)


# ==================== 7. zitter 平均与极小模型 ====================

def zitter_center(state: ParticleState, strategy: str = CenterStrategy.RADIUS) -> Multivector:
    strategy = CenterStrategy(strategy)
    if strategy is CenterStrategy.RADIUS:
        return state.z + rotate(state.R, GAMMA[1]) * LAMBDA_E
    e = state.frame()
    S = ((e[0] + e[2]) * e[1]).grade(2) * (0.5 * HBAR)
    return state.z - (S | state.p.inverse())


def zitter_average(state: ParticleState, field: Optional[FieldModel] = None,
                   q: float = DEFAULT_CHARGE, strategy: str = CenterStrategy.RADIUS) -> ZitterAverage:
    """v = e0，S_bar = i s v，m_bar = m_e + Phi_bar，p_bar = m_e v"""
    e = state.frame()
    v = e[0]
    S_bar = (I * e[3] * v).grade(2) * (0.5 * HBAR)
    x = zitter_center(state, strategy)
    Phi_bar = spin_potential(S_bar, field.field(x), q) if field is not None else 0.0
    return ZitterAverage(v=v, S_bar=S_bar, m_bar=M_E + Phi_bar, p_bar=v * M_E, Phi_bar=Phi_bar, x=x)


def _minimal_rates(x: Multivector, v: Multivector, R: Multivector, field: FieldModel, q: float):
    Rr = R.reverse()
    e = tuple(R * g * Rr for g in GAMMA)
    S_bar = (I * e[3] * v).grade(2) * (0.5 * HBAR)
    F = field.field(x)
    coupling = q / M_E
    Phi = coupling * (S_bar | F).scalar
    m_bar = M_E + Phi
    if field.uniform:
        g, dF = ZERO, ZERO
    else:
        g = field.scalar_gradient(S_bar, x, coupling)
        dF = field.directional_derivative(v, x)
    v_dot = (F | v) * coupling + (g - v * dot(g, v)) / M_E
    Omega0 = ((e[2] * e[1]).grade(2) * OMEGA_E - (v ^ g) / M_E + F * coupling).grade(2)
    # Phi_bar 的变化率取不含自身耦合项的进动
    Phi_dot = coupling * ((Omega0.commutator(S_bar) | F).scalar + (S_bar | dF).scalar)
    Omega = (Omega0 + (e[0] * e[1]).grade(2) * (2.0 * Phi)
             - (e[0] * e[2]).grade(2) * (Phi_dot / m_bar)).grade(2)
    return v, v_dot, (Omega * R) * 0.5


def minimal_model_integrate(x0: Multivector, v0: Multivector, frame0: Multivector,
                            field: FieldModel, dtau: float, n: int, q: float = DEFAULT_CHARGE,
                            show_progress: bool = False) -> MinimalTrajectory:
    """
    zitter 平均后的经典极限：m_e v_dot = qF.v + v.(v^grad)Phi_bar，e_dot = Omega_bar.e
    frame0 是初始转子；e0 与 v 的差作为诊断量记录
    """
    if abs(dot(v0, v0) - 1.0) > 1e-10:
        raise DomainError("v0 必须是单位类时向量")
    if dtau <= 0.0 or n < 0:
        raise DomainError("步长必须为正，步数不能为负")
    x, v, R = x0, v0, normalize_rotor(frame0)
    xs, vs, Rs = [x], [v], [R]
    gaps = [(rotate(R, GAMMA[0]) - v).coeff_norm()]
    for _ in tqdm(range(n), desc="极小模型", disable=not show_progress):
        k1 = _minimal_rates(x, v, R, field, q)
        k2 = _minimal_rates(x + k1[0] * (dtau / 2), v + k1[1] * (dtau / 2), R + k1[2] * (dtau / 2), field, q)
        k3 = _minimal_rates(x + k2[0] * (dtau / 2), v + k2[1] * (dtau / 2), R + k2[2] * (dtau / 2), field, q)
        k4 = _minimal_rates(x + k3[0] * dtau, v + k3[1] * dtau, R + k3[2] * dtau, field, q)
        w = dtau / 6.0
        x = x + (k1[0] + k2[0] * 2.0 + k3[0] * 2.0 + k4[0]) * w
        v = v + (k1[1] + k2[1] * 2.0 + k3[1] * 2.0 + k4[1]) * w
        R = R + (k1[2] + k2[2] * 2.0 + k3[2] * 2.0 + k4[2]) * w
        v = v / math.sqrt(dot(v, v))
        R = normalize_rotor(R)
        xs.append(x)
        vs.append(v)
        Rs.append(R)
        gaps.append((rotate(R, GAMMA[0]) - v).coeff_norm())
    return MinimalTrajectory(taus=np.arange(n + 1) * dtau, x=xs, v=vs, R=Rs,
                             frame_velocity_gap=np.array(gaps))


# ==================== 8. 静止系 ====================

def deboost_field(F: Multivector, v: Multivector) -> Tuple[np.ndarray, np.ndarray]:
    """
    E0 = E_par + v0 E_perp + v0 w x B，B0 = B_par + v0 B_perp - v0 w x E，w = 相对速度
    """
    boost_from_velocity(v)
    E, B = bivector_to_eb(F)
    v0 = dot(v, GAMMA[0])
    w = spatial_components(v) / v0
    speed = float(np.linalg.norm(w))
    if speed == 0.0:
        return E, B
    n = w / speed
    E_par, B_par = np.dot(E, n) * n, np.dot(B, n) * n
    E0 = E_par + v0 * (E - E_par) + v0 * np.cross(w, B)
    B0 = B_par + v0 * (B - B_par) - v0 * np.cross(w, E)
    return E0, B0


def rest_frame_split(state: ParticleState, field: Optional[FieldModel] = None,
                     q: float = DEFAULT_CHARGE, tolerance: float = 1e-10) -> RestFrameState:
    """
    S = (m_e r + i s) v：r = S.v/m_e，再用 L~ ... L 去增压
    """
    e = state.frame()
    v = e[0]
    L = boost_from_velocity(v)
    Lr = L.reverse()
    S = ((e[0] + e[2]) * e[1]).grade(2) * (0.5 * HBAR)
    r = spatial_components(Lr * (S | v) * L) / M_E
    s = spatial_components(Lr * e[3] * L) * (0.5 * HBAR)
    u = spatial_components(Lr * e[2] * L)
    if field is not None:
        E0, B0 = deboost_field(field.field(state.z), v)
    else:
        E0, B0 = np.zeros(3), np.zeros(3)
    violation = max(abs(np.dot(r, u)), abs(np.dot(s, u)),
                    float(np.linalg.norm(s - M_E * np.cross(u, r))))
    if violation > tolerance:
        logger.warning("静止系约束残差 %.3e", violation)
    return RestFrameState(r=r, s=s, d=q * r, mu=(q / M_E) * s, u=u, E0=E0, B0=B0, L=L)


def thomas_omega(v: Multivector, vdot: Multivector, tolerance: float = 1e-10) -> ThomasPrecession:
    """
    Omega_v = v_dot^(v + gamma0)/(1 + v0) = 2 L_dot L~，拆成增压部分与进动（i 对偶）部分
    """
    boost_from_velocity(v)
    if abs(dot(v, vdot)) > tolerance * max(1.0, vdot.coeff_norm()):
        raise DomainError(f"v.v_dot = {dot(v, vdot):.3e} 必须为零")
    v0 = dot(v, GAMMA[0])
    omega = (vdot ^ (v + GAMMA[0])) / (1.0 + v0)
    boost, precession = bivector_to_eb(omega)
    return ThomasPrecession(omega=omega, boost=boost, precession=precession)


def rest_frame_drive(state: ParticleState, field: FieldModel,
                     q: float = DEFAULT_CHARGE) -> Tuple[np.ndarray, np.ndarray]:
    """a + ib = L~ (F - (m_e/q) Omega_v) L，v_dot = Omega.e0"""
    k = _kinematics(state.R, state.p, state.z, field, q)
    v = k.e[0]
    thomas = thomas_omega(v, k.Omega | v, tolerance=1e-8)
    L = boost_from_velocity(v)
    return bivector_to_eb(L.reverse() * (k.F - thomas.omega * (M_E / q)) * L)


def rest_frame_rhs(rest: RestFrameState, m: float, a: Sequence[float], b: Sequence[float],
                   tolerance: float = 1e-9, strict: bool = False) -> RestFrameRates:
    """
    m_e r_dot = m u + mu x a + d x b；s_dot = a x d + mu x b
    同时给出 u.a（应为零）与力矩形式的残差
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    rdot = (m * rest.u + np.cross(rest.mu, a) + np.cross(rest.d, b)) / M_E
    sdot = np.cross(a, rest.d) + np.cross(rest.mu, b)
    e2_dot_a = float(np.dot(rest.u, a))
    s_norm = float(np.linalg.norm(rest.s))
    if not s_norm > 0.0:
        raise DomainError(f"自旋矢量 s 的模为 {s_norm}，自旋轴无定义")
    s_hat = rest.s / s_norm
    torque = np.cross(a, rest.d) - np.dot(s_hat, a) * np.cross(s_hat, rest.d)
    if abs(e2_dot_a) > tolerance:
        message = f"静止系约束 u.a = {e2_dot_a:.3e} 不为零"
        if strict:
            raise GaugeConstraintError(message, abs(e2_dot_a))
        logger.warning(message)
    return RestFrameRates(rdot=rdot, sdot=sdot, e2_dot_a=e2_dot_a,
                          torque_residual=float(np.linalg.norm(torque)))


# ==================== 9. 残差检验与输出 ====================

def equation_residuals(trajectory: Trajectory, field: FieldModel,
                       q: Optional[float] = None) -> Dict[str, float]:
    """
    对等间距轨迹做中心差分，检验自旋、速度、动量方程与质量变化率
    """
    q = trajectory.q if q is None else q
    states = trajectory.states
    if len(states) < 3:
        raise DomainError("残差检验至少需要三个状态")
    steps = np.diff(trajectory.taus)
    if not np.allclose(steps, steps[0], rtol=1e-9):
        raise DomainError("残差检验要求等间距记录")
    h = float(steps[0])
    kins = [_kinematics(s.R, s.p, s.z, field, q) for s in states]
    worst = {"spin": 0.0, "velocity": 0.0, "momentum": 0.0, "mass_rate": 0.0}
    for i in range(1, len(states) - 1):
        k = kins[i]
        S_fd = (kins[i + 1].S - kins[i - 1].S) / (2.0 * h)
        u_fd = (kins[i + 1].u - kins[i - 1].u) / (2.0 * h)
        p_fd = (states[i + 1].p - states[i - 1].p) / (2.0 * h)
        m_fd = (kins[i + 1].m - kins[i - 1].m) / (2.0 * h)
        u_dot = k.e[1] * (2.0 * k.m / HBAR) + (k.F | k.u) * (q / M_E)
        worst["spin"] = max(worst["spin"], S_fd.max_abs_diff(k.S_dot))
        worst["velocity"] = max(worst["velocity"], u_fd.max_abs_diff(u_dot))
        worst["momentum"] = max(worst["momentum"], p_fd.max_abs_diff(k.p_dot))
        worst["mass_rate"] = max(worst["mass_rate"], abs(m_fd - k.m_dot))
    return worst


TRAJECTORY_COLUMNS = (
    "tau", "phi", "z0", "z1", "z2", "z3", "p0", "p1", "p2", "p3",
    "m", "m1", "m2", "Phi", "kappa1_drift", "mass_integral_drift", "rotor_norm_drift",
    "s1", "s2", "s3", "r1", "r2", "r3",
)


def trajectory_to_rows(trajectory: Trajectory, field: Optional[FieldModel] = None) -> List[List[float]]:
    rows = []
    for i, state in enumerate(trajectory.states):
        obs = observables(state, field, trajectory.q, gauge_bound=math.inf)
        rest = rest_frame_split(state, None, trajectory.q)
        rows.append([
            state.tau, state.phi,
            *state.z.coeffs[1:5], *state.p.coeffs[1:5],
            obs.m, obs.m1, obs.m2, obs.Phi,
            float(trajectory.monitors["kappa1_drift"][i]),
            float(trajectory.monitors["mass_integral_drift"][i]),
            float(trajectory.monitors["rotor_norm_drift"][i]),
            *rest.s, *rest.r,
        ])
    return rows
