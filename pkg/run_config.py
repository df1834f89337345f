"""
run_config.py - 运行配置
pydantic 模型描述各子命令的参数；.env 中的 ZITTER_* 变量提供默认值
"""

import hashlib
import json
import logging
import os
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator

from channeling import ChannelParams, PhysicalConstants, get_constants
from exceptions import ConfigError, DomainError
from zitter_dynamics import MonitorLimits

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"

# 不影响计算结果的字段，不进入配置哈希
_HASH_EXCLUDE = {"output_dir", "workers"}


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"环境变量 {name} 必须是整数，收到 {raw!r}", path=name)


def default_workers() -> int:
    return max(1, _env_int("ZITTER_WORKERS", os.cpu_count() or 1))


# ==================== 1. 配置分节 ====================

class ChannelSection(BaseModel):
    """晶体与弦势参数（默认 Si <110>）"""

    model_config = {"extra": "forbid"}

    d_angstrom: float = Field(default=3.84, gt=0, description="原子串中原子间距 d [Å]")
    Z: int = Field(default=14, gt=0, description="原子序数")
    k_ev: float = Field(default=52.5, gt=0, description="Lindhard 势强度 k [eV]")
    a_angstrom: float = Field(default=0.190, gt=0, description="屏蔽半径 a [Å]")
    C2: float = Field(default=3.0, gt=0, description="Lindhard 常数 C^2")
    crystal_length_angstrom: float = Field(default=1.0e4, gt=0, description="晶体厚度 [Å]")
    r0_angstrom: float = Field(default=0.5, gt=0, description="圆轨道半径 r0 [Å]")
    modulated: bool = Field(default=False, description="弦势是否带纵向调制 1 + cos(2 pi z/d)")

    def to_params(self) -> ChannelParams:
        return ChannelParams(d=self.d_angstrom, Z=self.Z, k=self.k_ev, a=self.a_angstrom,
                             C2=self.C2, crystal_length=self.crystal_length_angstrom)


class BeamSection(BaseModel):
    """束流参数；p_mev 缺省时取共振动量"""

    model_config = {"extra": "forbid"}

    p_mev: Optional[float] = Field(default=None, gt=0, description="束流动量 [MeV/c]")
    order: int = Field(default=1, ge=1, description="共振阶数")
    sharpness: float = Field(default=0.0, ge=0, description="纵向调制尖锐度（0 为 1 + cos）")
    periods: float = Field(default=400.0, gt=0, description="径向积分的驱动周期数")
    steps_per_period: int = Field(default=64, gt=0, description="径向积分每周期步数")
    orbit_samples: int = Field(default=2001, gt=1, description="二维轨道输出的采样点数")
    orbit_time_fs: float = Field(default=5.0, gt=0, description="二维轨道积分时长 [fs]")


class IntegratorSection(BaseModel):
    """zitter 粒子积分（free / simulate）"""

    model_config = {"extra": "forbid"}

    scheme: Literal["rk4", "lie"] = Field(default="rk4", description="积分格式")
    mode: Literal["lightlike", "timelike"] = Field(default="lightlike", description="自由粒子模式")
    field: Literal["none", "uniform", "lindhard"] = Field(default="uniform", description="simulate 的外场")
    E: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], description="均匀电场（自然单位）")
    B: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], description="均匀磁场（自然单位）")
    velocity: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0],
                                  description="初始相对速度 v/c 分量")
    spin_angles: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0],
                                     description="初始空间转动 i theta 的分量 [rad]")
    position: Optional[List[float]] = Field(default=None,
                                            description="初始事件（自然单位）；lindhard 场缺省放在 r0 处")
    periods: float = Field(default=100.0, gt=0, description="积分的 zitter 周期数")
    steps_per_period: int = Field(default=200, gt=0, description="每个 zitter 周期的步数")
    record_every: int = Field(default=10, ge=1, description="记录间隔（步）")

    @field_validator("E", "B", "velocity", "spin_angles")
    @classmethod
    def _three_components(cls, value: List[float]) -> List[float]:
        if len(value) != 3:
            raise ValueError("需要 3 个分量")
        return value

    @field_validator("velocity")
    @classmethod
    def _subluminal(cls, value: List[float]) -> List[float]:
        if sum(v * v for v in value) >= 1.0:
            raise ValueError("相对速度必须小于光速")
        return value

    @field_validator("position")
    @classmethod
    def _four_components(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and len(value) != 4:
            raise ValueError("需要 4 个分量")
        return value


class ScanSection(BaseModel):
    """动量扫描"""

    model_config = {"extra": "forbid"}

    p_min: float = Field(default=79.0, gt=0, description="扫描下限 [MeV/c]")
    p_max: float = Field(default=83.0, gt=0, description="扫描上限 [MeV/c]")
    steps: int = Field(default=97, ge=2, description="扫描点数")
    method: Literal["analytic", "floquet"] = Field(default="analytic", description="增长指数的计算方法")
    threshold: float = Field(default=8.0, gt=1, description="判为弹出的振幅放大倍数")
    r0_samples: Optional[List[float]] = Field(default=None, description="轨道半径样本 [Å]")

    @field_validator("r0_samples")
    @classmethod
    def _positive_samples(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and (not value or min(value) <= 0.0):
            raise ValueError("半径样本必须非空且为正")
        return value


class FloquetSection(BaseModel):
    """Mathieu 方程 x'' + q(1 + h cos(omega t))x = 0；缺省值取自通道参数"""

    model_config = {"extra": "forbid"}

    q: Optional[float] = Field(default=None, gt=0, description="q = omega0^2")
    h: Optional[float] = Field(default=None, ge=0, lt=1, description="调制深度")
    omega: Optional[float] = Field(default=None, gt=0, description="驱动频率")
    n_terms: int = Field(default=8, ge=2, description="Fourier 递推项数")


class Tolerances(BaseModel):
    """不变量监视阈值"""

    model_config = {"extra": "forbid"}

    rotor_norm: float = Field(default=1e-9, gt=0, description="转子范数漂移")
    mass_integral: float = Field(default=1e-8, gt=0, description="质量积分漂移")
    kappa1: float = Field(default=1e-8, gt=0, description="第一曲率漂移")
    null: float = Field(default=1e-12, gt=0, description="u^2 = 0 偏差")
    spin_null: float = Field(default=1e-12, gt=0, description="S^2 = 0 偏差")
    gauge: float = Field(default=1e-6, gt=0, description="p^u^e0 规范约束")
    energy: float = Field(default=1e-8, gt=0, description="静场能量漂移")
    dirac: float = Field(default=1e-12, gt=0, description="Dirac 检查残差")

    def to_limits(self) -> MonitorLimits:
        return MonitorLimits(
            rotor_norm=self.rotor_norm,
            mass_integral=self.mass_integral,
            kappa1=self.kappa1,
            null=self.null,
            spin_null=self.spin_null,
            gauge=self.gauge,
            energy=self.energy,
        )


class RunConfig(BaseModel):
    """一次运行的完整配置"""

    model_config = {"extra": "forbid"}

    constants: Literal["rounded", "precise"] = Field(
        default_factory=lambda: os.getenv("ZITTER_CONSTANTS", "rounded"),
        description="物理常数集",
    )
    units: Literal["natural", "lab"] = Field(default="natural", description="输出单位")
    output_dir: str = Field(
        default_factory=lambda: os.getenv("ZITTER_OUTPUT_DIR", "results"),
        description="输出目录",
    )
    workers: int = Field(default_factory=default_workers, ge=1, description="扫描并行进程数")
    seed: int = Field(default=20240601, description="随机检查的种子")
    channel: ChannelSection = Field(default_factory=ChannelSection)
    beam: BeamSection = Field(default_factory=BeamSection)
    integrator: IntegratorSection = Field(default_factory=IntegratorSection)
    scan: ScanSection = Field(default_factory=ScanSection)
    floquet: FloquetSection = Field(default_factory=FloquetSection)
    tolerances: Tolerances = Field(default_factory=Tolerances)

    def physical_constants(self) -> PhysicalConstants:
        return get_constants(self.constants)


# ==================== 2. 解析与序列化 ====================

def _error_path(error: dict) -> str:
    return ".".join(str(part) for part in error.get("loc", ()))


def validate_config(data: dict) -> RunConfig:
    """dict -> RunConfig，校验失败转为带键路径的 ConfigError"""
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        path = _error_path(first)
        raise ConfigError(first.get("msg", "无效值"), path=path)
    if config.scan.p_max <= config.scan.p_min:
        raise ConfigError("必须大于 scan.p_min", path="scan.p_max")
    if config.constants not in ("rounded", "precise"):
        raise ConfigError(f"未知常数集 {config.constants!r}", path="constants")
    try:
        config.channel.to_params()
    except DomainError as e:
        raise ConfigError(str(e), path="channel")
    return config


def parse_config_dict(text: str) -> dict:
    """JSON 文本 -> dict；空文本视为 {}"""
    if not text.strip():
        return {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"JSON 格式错误: 第 {e.lineno} 行第 {e.colno} 列 {e.msg}")
    if not isinstance(data, dict):
        raise ConfigError("配置顶层必须是 JSON 对象")
    return data


def parse_config(text: str) -> RunConfig:
    """
    解析 UTF-8 JSON 配置，缺省字段取 Si <110> 的默认值

    Args:
        text: JSON 文本；空文本视为 {}

    Returns:
        校验后的 RunConfig
    """
    return validate_config(parse_config_dict(text))


def read_config_dict(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"无法读取配置文件 {path}: {e}")
    logger.info("读取配置: %s", path)
    return parse_config_dict(text)


def load_config(path: Optional[str]) -> RunConfig:
    return validate_config({} if path is None else read_config_dict(path))


def serialize_config(config: RunConfig) -> str:
    """规范 JSON：键排序、两格缩进"""
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, indent=2, ensure_ascii=False)


def config_hash(config: RunConfig) -> str:
    """影响计算结果的字段的规范 JSON 的 sha256 前 12 位"""
    payload = json.dumps(config.model_dump(mode="json", exclude=_HASH_EXCLUDE),
                         sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]
