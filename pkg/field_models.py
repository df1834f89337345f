"""
field_models.py - 电磁场模型
每个模型给出事件 x 处的双矢量 F(x) 以及四个偏导数 ∂_μF，供 zitter 动力学计算 ∇Φ 与 ṁ
自然单位 c = hbar = m_e = 1
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Sequence, Tuple

import numpy as np

from exceptions import DomainError
from sta_core import (
    GAMMA,
    Multivector,
    eb_to_bivector,
    is_grade,
    relative_vector,
    spatial_components,
)

logger = logging.getLogger(__name__)

ZERO_BIVECTOR = Multivector()

# γ^μ：逆变基，γ^0 = γ0，γ^k = -γk
GAMMA_UP = (GAMMA[0], -GAMMA[1], -GAMMA[2], -GAMMA[3])

Partials = Tuple[Multivector, Multivector, Multivector, Multivector]


# ==================== 1. 场模型接口 ====================

class FieldModel(ABC):
    """电磁场 F(x) 及其偏导数"""

    uniform: bool = False

    @abstractmethod
    def field(self, x: Multivector) -> Multivector:
        """事件 x 处的 F"""

    @abstractmethod
    def partials(self, x: Multivector) -> Partials:
        """(∂_0F, ∂_1F, ∂_2F, ∂_3F)"""

    def directional_derivative(self, a: Multivector, x: Multivector) -> Multivector:
        """(a·∇)F = a^μ ∂_μF"""
        components = a.coeffs[1:5]
        total = ZERO_BIVECTOR
        for mu, dF in enumerate(self.partials(x)):
            if components[mu] != 0.0:
                total = total + dF * float(components[mu])
        return total

    def scalar_gradient(self, S: Multivector, x: Multivector, coupling: float = 1.0) -> Multivector:
        """
        ∇(coupling <S F>)，S 视为常量（只对位置求导）
        """
        total = Multivector()
        for mu, dF in enumerate(self.partials(x)):
            total = total + GAMMA_UP[mu] * (coupling * (S | dF).scalar)
        return total


# ==================== 2. 均匀场 ====================

class UniformField(FieldModel):
    """处处相同的 F，所有导数为零"""

    uniform = True

    def __init__(self, F: Multivector):
        if not is_grade(F, 2):
            raise DomainError("均匀场必须是双矢量")
        self.F = F

    @classmethod
    def from_eb(cls, E: Sequence[float] = (0.0, 0.0, 0.0),
                B: Sequence[float] = (0.0, 0.0, 0.0)) -> "UniformField":
        return cls(eb_to_bivector(E, B))

    def field(self, x: Multivector) -> Multivector:
        return self.F

    def partials(self, x: Multivector) -> Partials:
        return (ZERO_BIVECTOR,) * 4


# ==================== 3. 静势场 ====================

class ScalarPotential(ABC):
    """静态标量势 V(x1, x2, x3)，带粒子电荷的势能"""

    @abstractmethod
    def value(self, position: np.ndarray) -> float:
        ...

    @abstractmethod
    def gradient(self, position: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def hessian(self, position: np.ndarray) -> np.ndarray:
        ...


class StaticPotentialField(FieldModel):
    """
    由势能 V 构造的静电场：qF = ∇V∧γ0，即 qE = -∇V，B = 0
    能量 p0 + V 沿轨迹守恒
    """

    def __init__(self, potential: ScalarPotential, charge: float = -1.0):
        if charge == 0.0:
            raise DomainError("电荷不能为零")
        self.potential = potential
        self.charge = charge

    def potential_energy(self, x: Multivector) -> float:
        return float(self.potential.value(spatial_components(x)))

    def electric_field(self, x: Multivector) -> np.ndarray:
        return -np.asarray(self.potential.gradient(spatial_components(x))) / self.charge

    def field(self, x: Multivector) -> Multivector:
        return relative_vector(self.electric_field(x))

    def partials(self, x: Multivector) -> Partials:
        H = np.asarray(self.potential.hessian(spatial_components(x)))
        dF = [ZERO_BIVECTOR]
        for j in range(3):
            dF.append(relative_vector(-H[j] / self.charge))
        return tuple(dF)

    def energy(self, p: Multivector, x: Multivector) -> float:
        """守恒能量 E = p0 + V"""
        return float(p.coeffs[1]) + self.potential_energy(x)


# ==================== 4. Lindhard 弦势 ====================

def lindhard_profile(r: float, k: float, ca: float) -> Tuple[float, float, float]:
    """
    U = -k ln(1 + (Ca/r)^2) 及其一阶、二阶径向导数
    """
    if r <= 0.0:
        raise DomainError(f"径向距离必须为正 (r = {r})")
    x = (ca / r) ** 2
    U = -k * math.log1p(x)
    U1 = (2.0 * k / r) * x / (1.0 + x)
    U2 = -(U1 / r) * (3.0 + x) / (1.0 + x)
    return U, U1, U2


class LindhardStringPotential(ScalarPotential):
    """
    沿 x3 轴的原子弦势 U(r)，可选纵向调制 P = 1 + cos(2π x3/d)
    参数与坐标使用同一套单位（自然单位下长度单位为 hbar/m_e c）
    """

    def __init__(self, k: float, ca: float, spacing: float = 0.0, modulated: bool = False):
        if modulated and spacing <= 0.0:
            raise DomainError("纵向调制需要正的原子间距")
        self.k = k
        self.ca = ca
        self.spacing = spacing
        self.modulated = modulated

    def _longitudinal(self, x3: float) -> Tuple[float, float, float]:
        if not self.modulated:
            return 1.0, 0.0, 0.0
        kappa = 2.0 * math.pi / self.spacing
        c, s = math.cos(kappa * x3), math.sin(kappa * x3)
        return 1.0 + c, -kappa * s, -kappa * kappa * c

    def value(self, position: np.ndarray) -> float:
        r = math.hypot(position[0], position[1])
        U, _, _ = lindhard_profile(r, self.k, self.ca)
        P, _, _ = self._longitudinal(position[2])
        return U * P

    def gradient(self, position: np.ndarray) -> np.ndarray:
        r = math.hypot(position[0], position[1])
        U, U1, _ = lindhard_profile(r, self.k, self.ca)
        P, P1, _ = self._longitudinal(position[2])
        return np.array([U1 * P * position[0] / r, U1 * P * position[1] / r, U * P1])

    def hessian(self, position: np.ndarray) -> np.ndarray:
        r = math.hypot(position[0], position[1])
        U, U1, U2 = lindhard_profile(r, self.k, self.ca)
        P, P1, P2 = self._longitudinal(position[2])
        n = np.array([position[0], position[1]]) / r
        H = np.zeros((3, 3))
        H[:2, :2] = (U2 * np.outer(n, n) + (U1 / r) * (np.eye(2) - np.outer(n, n))) * P
        H[:2, 2] = H[2, :2] = U1 * n * P1
        H[2, 2] = U * P2
        return H


# ==================== 5. 场叠加 ====================

class SumField(FieldModel):
    """若干场模型的线性叠加"""

    def __init__(self, *components: FieldModel):
        if not components:
            raise DomainError("SumField 至少需要一个分量")
        self.components = components
        self.uniform = all(c.uniform for c in components)

    def field(self, x: Multivector) -> Multivector:
        total = ZERO_BIVECTOR
        for c in self.components:
            total = total + c.field(x)
        return total

    def partials(self, x: Multivector) -> Partials:
        totals = [ZERO_BIVECTOR] * 4
        for c in self.components:
            totals = [t + d for t, d in zip(totals, c.partials(x))]
        return tuple(totals)
