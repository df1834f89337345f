"""
sta_core.py - 时空代数 Cl(1,3) 核心
16 分量多重向量（规范刀片顺序）、预计算的几何积乘法表、分次积、
双矢量指数、转子/旋量规范分解与时空分裂
"""
import logging
import math
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from exceptions import DomainError, RotorNormError, SingularSpinorError

logger = logging.getLogger(__name__)

Scalar = Union[int, float, np.floating]

# ==================== 刀片与乘法表 ====================

# 度规符号 (+,-,-,-)
METRIC = (1.0, -1.0, -1.0, -1.0)

# 规范刀片顺序，所有输入输出都使用这一顺序
BLADES: Tuple[Tuple[int, ...], ...] = (
    (),
    (0,), (1,), (2,), (3,),
    (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3),
    (0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3),
    (0, 1, 2, 3),
)

BLADE_NAMES = tuple(
    "1" if not blade else "g" + "".join(str(i) for i in blade) for blade in BLADES
)

GRADES = np.array([len(blade) for blade in BLADES], dtype=int)

# 反转符号：k 阶为 (-1)^{k(k-1)/2}，即 (+,+,-,-,+)
REVERSE_SIGNS = np.array([(-1.0) ** (g * (g - 1) // 2) for g in GRADES])

_MASKS = tuple(sum(1 << i for i in blade) for blade in BLADES)
_INDEX_OF_MASK = {mask: idx for idx, mask in enumerate(_MASKS)}


def _reorder_sign(a: int, b: int) -> float:
    """两个有序刀片拼接后排序所需交换次数的奇偶"""
    a >>= 1
    swaps = 0
    while a:
        swaps += bin(a & b).count("1")
        a >>= 1
    return -1.0 if swaps & 1 else 1.0


def _mask_product(a: int, b: int) -> Tuple[float, int]:
    sign = _reorder_sign(a, b)
    common = a & b
    for i in range(4):
        if (common >> i) & 1:
            sign *= METRIC[i]
    return sign, a ^ b


def _build_tables() -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    geometric = np.zeros((16, 16, 16))
    inner = np.zeros((16, 16, 16))
    outer = np.zeros((16, 16, 16))
    for i, mi in enumerate(_MASKS):
        for j, mj in enumerate(_MASKS):
            sign, mk = _mask_product(mi, mj)
            k = _INDEX_OF_MASK[mk]
            geometric[i, j, k] = sign
            gi, gj, gk = GRADES[i], GRADES[j], GRADES[k]
            # Hestenes 内积：任一因子为标量时为零
            if gi > 0 and gj > 0 and gk == abs(gi - gj):
                inner[i, j, k] = sign
            if gk == gi + gj:
                outer[i, j, k] = sign
    return geometric, inner, outer


_GEOMETRIC, _INNER, _OUTER = _build_tables()
_GEOMETRIC_FLAT = _GEOMETRIC.reshape(16, 256)
_INNER_FLAT = _INNER.reshape(16, 256)
_OUTER_FLAT = _OUTER.reshape(16, 256)


def _apply(table_flat: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return b @ (a @ table_flat).reshape(16, 16)


def blade_product_oracle(blade_a: Sequence[int], blade_b: Sequence[int]) -> Tuple[float, Tuple[int, ...]]:
    """
    暴力刀片乘法：拼接生成元下标，冒泡排序计交换次数，相邻相同下标按度规收缩。
    仅用于校验乘法表。
    """
    indices = list(blade_a) + list(blade_b)
    sign = 1.0
    changed = True
    while changed:
        changed = False
        for pos in range(len(indices) - 1):
            if indices[pos] > indices[pos + 1]:
                indices[pos], indices[pos + 1] = indices[pos + 1], indices[pos]
                sign = -sign
                changed = True
    result: List[int] = []
    for idx in indices:
        if result and result[-1] == idx:
            result.pop()
            sign *= METRIC[idx]
        else:
            result.append(idx)
    return sign, tuple(result)


# ==================== 多重向量 ====================

class Multivector:
    """
    不可变多重向量，16 个实系数按 BLADES 顺序排列。

    运算符：+ - 为加减；* 为几何积（与标量相乘时为缩放）；
    ^ 为外积；| 为 Hestenes 内积；/ 仅支持除以标量。
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs: Union[Sequence[float], np.ndarray, None] = None):
        if coeffs is None:
            arr = np.zeros(16)
        else:
            arr = np.array(coeffs, dtype=float)
            if arr.shape != (16,):
                raise DomainError(f"多重向量需要 16 个系数，收到形状 {arr.shape}")
        arr.setflags(write=False)
        self._c = arr

    # ---------- 构造 ----------

    @classmethod
    def scalar_value(cls, value: float) -> "Multivector":
        coeffs = np.zeros(16)
        coeffs[0] = value
        return cls(coeffs)

    @classmethod
    def from_list(cls, values: Iterable[float]) -> "Multivector":
        return cls(list(values))

    def to_list(self) -> List[float]:
        return [float(x) for x in self._c]

    # ---------- 访问 ----------

    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def scalar(self) -> float:
        return float(self._c[0])

    @property
    def pseudoscalar(self) -> float:
        return float(self._c[15])

    def grade(self, k: int) -> "Multivector":
        """阶投影 <M>_k"""
        if not isinstance(k, (int, np.integer)) or k < 0 or k > 4:
            raise DomainError(f"阶数必须在 0..4 之间，收到 {k}")
        return Multivector(np.where(GRADES == k, self._c, 0.0))

    def even(self) -> "Multivector":
        return Multivector(np.where(GRADES % 2 == 0, self._c, 0.0))

    def reverse(self) -> "Multivector":
        return Multivector(self._c * REVERSE_SIGNS)

    def dual(self) -> "Multivector":
        """右乘伪标量 i"""
        return self * I

    def commutator(self, other: "Multivector") -> "Multivector":
        """对易积 M x N = (MN - NM)/2"""
        return Multivector(0.5 * (_apply(_GEOMETRIC_FLAT, self._c, other._c)
                                  - _apply(_GEOMETRIC_FLAT, other._c, self._c)))

    def inverse(self) -> "Multivector":
        """
        逆元，适用于 M M~ 只含标量与伪标量部分的情形（向量、转子、偶旋量）
        """
        rev = self.reverse()
        norm = self * rev
        a, b = norm.scalar, norm.pseudoscalar
        rest = norm.coeffs.copy()
        rest[0] = rest[15] = 0.0
        denom = a * a + b * b
        scale = max(abs(a), abs(b), 1.0)
        if denom <= 1e-300 or np.max(np.abs(rest)) > 1e-10 * scale:
            raise DomainError("多重向量不可逆或 M M~ 不是标量+伪标量")
        # (a + b i)^{-1} = (a - b i)/(a^2 + b^2)
        conj = Multivector.scalar_value(a / denom) - I * (b / denom)
        return rev * conj

    def norm2(self) -> float:
        """<M M~>，对向量即 M.M，对转子为 1"""
        return float(_apply(_GEOMETRIC_FLAT, self._c, self.reverse()._c)[0])

    def coeff_norm(self) -> float:
        return float(np.linalg.norm(self._c))

    def is_close(self, other: "Multivector", atol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self._c - _as_mv(other)._c)) <= atol)

    def max_abs_diff(self, other: "Multivector") -> float:
        return float(np.max(np.abs(self._c - _as_mv(other)._c)))

    # ---------- 运算符 ----------

    def __add__(self, other):
        return Multivector(self._c + _as_mv(other)._c)

    __radd__ = __add__

    def __sub__(self, other):
        return Multivector(self._c - _as_mv(other)._c)

    def __rsub__(self, other):
        return Multivector(_as_mv(other)._c - self._c)

    def __neg__(self):
        return Multivector(-self._c)

    def __mul__(self, other):
        if isinstance(other, Multivector):
            return Multivector(_apply(_GEOMETRIC_FLAT, self._c, other._c))
        if _is_scalar(other):
            return Multivector(self._c * float(other))
        return NotImplemented

    def __rmul__(self, other):
        if _is_scalar(other):
            return Multivector(self._c * float(other))
        return NotImplemented

    def __truediv__(self, other):
        if _is_scalar(other):
            return Multivector(self._c / float(other))
        return NotImplemented

    def __xor__(self, other):
        return Multivector(_apply(_OUTER_FLAT, self._c, _as_mv(other)._c))

    def __or__(self, other):
        return Multivector(_apply(_INNER_FLAT, self._c, _as_mv(other)._c))

    def __repr__(self) -> str:
        terms = [f"{c:+.6g}*{name}" for c, name in zip(self._c, BLADE_NAMES) if c != 0.0]
        return "Multivector(" + (" ".join(terms) if terms else "0") + ")"


def _is_scalar(value) -> bool:
    return isinstance(value, (int, float, np.floating, np.integer)) and not isinstance(value, bool)


def _as_mv(value) -> Multivector:
    if isinstance(value, Multivector):
        return value
    if _is_scalar(value):
        return Multivector.scalar_value(float(value))
    raise TypeError(f"无法把 {type(value).__name__} 当作多重向量")


# ==================== 常量 ====================

def _basis(index: int) -> Multivector:
    coeffs = np.zeros(16)
    coeffs[index] = 1.0
    return Multivector(coeffs)


ONE = _basis(0)
GAMMA = tuple(_basis(1 + mu) for mu in range(4))
I = _basis(15)
# 相对向量 sigma_k = gamma_k gamma_0
SIGMA = tuple(GAMMA[k] * GAMMA[0] for k in (1, 2, 3))
GAMMA_PLUS = GAMMA[0] + GAMMA[2]


# ==================== 向量与分裂辅助 ====================

def vector(x0: float, x1: float, x2: float, x3: float) -> Multivector:
    """x = x^mu gamma_mu"""
    coeffs = np.zeros(16)
    coeffs[1:5] = (x0, x1, x2, x3)
    return Multivector(coeffs)


def vector_components(v: Multivector) -> np.ndarray:
    return np.array(v.coeffs[1:5])


def spatial_components(v: Multivector) -> np.ndarray:
    """v gamma_0 的相对向量分量"""
    return np.array(v.coeffs[2:5])


def relative_vector(components: Sequence[float]) -> Multivector:
    """sum_k a_k sigma_k"""
    out = np.zeros(16)
    for k in range(3):
        out += components[k] * SIGMA[k].coeffs
    return Multivector(out)


def dot(a: Multivector, b: Multivector) -> float:
    """两个向量（或两个双矢量）的标量内积"""
    return (a | b).scalar


def bivector_to_eb(F: Multivector) -> Tuple[np.ndarray, np.ndarray]:
    """F = E + iB 相对 gamma_0 的分量：E^k = <F sigma_k>, B^k = <-iF sigma_k>"""
    minus_iF = -(I * F)
    E = np.array([(F * SIGMA[k]).scalar for k in range(3)])
    B = np.array([(minus_iF * SIGMA[k]).scalar for k in range(3)])
    return E, B


def eb_to_bivector(E: Sequence[float], B: Sequence[float]) -> Multivector:
    return relative_vector(E) + I * relative_vector(B)


def is_grade(M: Multivector, k: int, atol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(np.where(GRADES == k, 0.0, M.coeffs))) <= atol)


# ==================== 转子与旋量 ====================

ROTOR_DRIFT_TOLERANCE = 1e-9
_EXP_NORM_LIMIT = 0.5
_EXP_TERMS = 20


def exp_bivector(B: Multivector) -> Multivector:
    """
    双矢量指数：按 2 的幂缩放到系数范数 < 0.5，20 项级数，再反复平方
    """
    if not is_grade(B, 2, atol=1e-12 * max(1.0, B.coeff_norm())):
        raise DomainError("exp_bivector 只接受双矢量")
    norm = B.coeff_norm()
    squarings = 0
    while norm / (2 ** squarings) >= _EXP_NORM_LIMIT:
        squarings += 1
    X = B / (2 ** squarings)
    term = ONE
    total = ONE
    for n in range(1, _EXP_TERMS + 1):
        term = (term * X) / n
        total = total + term
        if term.coeff_norm() < 1e-18:
            break
    for _ in range(squarings):
        total = total * total
    return total


def rotate(R: Multivector, M: Multivector) -> Multivector:
    """R M R~，不检查转子归一化（供积分器中间级使用）"""
    return R * M * R.reverse()


def rotor_drift(R: Multivector) -> float:
    """|R R~ - 1| 的系数最大模"""
    n = (R * R.reverse()).coeffs.copy()
    n[0] -= 1.0
    return float(np.max(np.abs(n)))


def normalize_rotor(R: Multivector, tolerance: float = ROTOR_DRIFT_TOLERANCE,
                    strict: bool = True) -> Multivector:
    """
    归一化转子：除以 <R R~>_0^{1/2}，同时消去 R R~ 中微小的伪标量部分。
    漂移超过 tolerance 时 strict 模式抛出 RotorNormError，否则记录警告后照常归一化。
    """
    drift = rotor_drift(R)
    if drift > tolerance:
        message = f"转子漂移 {drift:.3e} 超过容差 {tolerance:.1e}"
        if strict:
            raise RotorNormError(message, drift)
        logger.warning(message)
    n = R * R.reverse()
    a, b = n.scalar, n.pseudoscalar
    rho = math.hypot(a, b)
    beta = math.atan2(b, a)
    factor = (ONE * math.cos(0.5 * beta) - I * math.sin(0.5 * beta)) / math.sqrt(rho)
    return R * factor


def sandwich(R: Multivector, M: Multivector, tolerance: float = ROTOR_DRIFT_TOLERANCE,
             strict: bool = True) -> Multivector:
    """洛伦兹旋转 R M R~，R 先按漂移策略检查并归一化"""
    drift = rotor_drift(R)
    if drift > 1e-13:
        R = normalize_rotor(R, tolerance=tolerance, strict=strict)
    return rotate(R, M)


def canonical_decompose(psi: Multivector, tolerance: float = 1e-14) -> Tuple[float, float, Multivector]:
    """
    偶旋量规范形式 psi = (rho e^{i beta})^{1/2} R，返回 (rho, beta, R)，beta 在 (-pi, pi]
    """
    if not np.allclose(psi.coeffs[GRADES % 2 == 1], 0.0, atol=1e-12 * max(1.0, psi.coeff_norm())):
        raise DomainError("旋量必须是偶多重向量")
    n = psi * psi.reverse()
    a, b = n.scalar, n.pseudoscalar
    rho = math.hypot(a, b)
    if rho <= tolerance:
        raise SingularSpinorError(f"旋量密度为零 (rho = {rho:.3e})")
    beta = math.atan2(b, a)
    if beta <= -math.pi:
        beta = math.pi
    factor = (ONE * math.cos(0.5 * beta) - I * math.sin(0.5 * beta)) / math.sqrt(rho)
    return rho, beta, factor * psi


def compose_spinor(rho: float, beta: float, R: Multivector) -> Multivector:
    """canonical_decompose 的逆运算"""
    return (ONE * math.cos(0.5 * beta) + I * math.sin(0.5 * beta)) * math.sqrt(rho) * R


def split_bivector(F: Multivector, v: Multivector, tolerance: float = 1e-10) -> Tuple[Multivector, Multivector]:
    """
    相对单位类时向量 v 的电磁分裂：E_v = (F - vFv)/2，i B_v = (F + vFv)/2
    返回 (E_v, B_v)，满足 E_v + i B_v = F
    """
    _require_unit_timelike(v, tolerance)
    vFv = v * F * v
    E_v = (F - vFv) * 0.5
    iB_v = (F + vFv) * 0.5
    return E_v, -(I * iB_v)


def boost_from_velocity(v: Multivector, tolerance: float = 1e-10) -> Multivector:
    """L = (1 + v gamma_0)/[2(1 + v.gamma_0)]^{1/2}，满足 L gamma_0 L~ = v"""
    _require_unit_timelike(v, tolerance)
    v0 = dot(v, GAMMA[0])
    if v0 <= 0.0:
        raise DomainError("速度必须指向未来 (v.gamma_0 > 0)")
    return (ONE + v * GAMMA[0]) / math.sqrt(2.0 * (1.0 + v0))


def _require_unit_timelike(v: Multivector, tolerance: float) -> None:
    if not is_grade(v, 1, atol=1e-12 * max(1.0, v.coeff_norm())):
        raise DomainError("需要一个向量")
    vv = dot(v, v)
    if abs(vv - 1.0) > tolerance * max(1.0, v.coeff_norm() ** 2):
        raise DomainError(f"需要单位类时向量，v.v = {vv:.6g}")
