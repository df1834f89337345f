"""
zitter_cli.py - 命令行入口
子命令：selftest、free、simulate、channel-orbit、channel-scan、floquet、dirac-check
退出码：0 成功，1 不变量越界或检查失败，2 用法或配置错误
"""

import argparse
import json
import logging
import math
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv

from channeling import (
    SCAN_COLUMNS,
    beam_at_momentum,
    beam_kinematics,
    channel_string_field,
    circular_orbit,
    effective_radius,
    energy_drift,
    floquet_exponent,
    integrate_orbit,
    integrate_radial,
    momentum_scan,
    parametric_resonance,
    resonance_momentum_width,
)
from dirac_bridge import dirac_check_report
from exceptions import ConfigError, DomainError, InvariantDriftError, ZitterError
from field_models import FieldModel, UniformField
from output_writer import ArtifactWriter
from run_config import (
    IntegratorSection,
    RunConfig,
    config_hash,
    read_config_dict,
    serialize_config,
    validate_config,
)
from selftest import run_selftest
from sta_core import (
    GAMMA,
    I,
    Multivector,
    boost_from_velocity,
    exp_bivector,
    relative_vector,
    rotate,
    vector,
)
from zitter_dynamics import (
    HBAR,
    M_E,
    MONITOR_NAMES,
    TRAJECTORY_COLUMNS,
    ZITTER_PERIOD,
    ParticleState,
    Trajectory,
    free_history,
    free_solution,
    initial_state,
    integrate,
    trajectory_to_rows,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

TOP_LEVEL_OPTIONS = ("output_dir", "workers", "constants", "units", "seed")
DRIFT_MONITORS = tuple(m for m in MONITOR_NAMES if m not in ("gauge_violation", "energy_drift"))
FREE_TIMELIKE_COLUMNS = ("tau", "z0", "z1", "z2", "z3", "spin_drift")
ORBIT_COLUMNS = ("t_s", "x_A", "y_A", "r_A", "L")
RADIAL_COLUMNS = ("t", "x", "v")

# 实验室单位换算：时间 -> s，长度 -> Å
_LAB_TIME_COLUMNS = ("tau",)
_LAB_LENGTH_COLUMNS = ("z0", "z1", "z2", "z3", "r1", "r2", "r3")


def _error_response(message: str, kind: str = "error") -> Dict[str, Any]:
    """生成错误响应"""
    return {
        'status': 'error',
        'kind': kind,
        'message': message,
        'result': None,
    }


# ==================== 1. 参数解析 ====================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zitter", description="zitter 电子模型工具包")
    parser.add_argument("--config", default=None, help="JSON 配置文件")
    parser.add_argument("--output-dir", dest="output_dir", default=None, help="输出目录")
    parser.add_argument("--workers", type=int, default=None, help="扫描并行进程数")
    parser.add_argument("--constants", choices=["rounded", "precise"], default=None, help="物理常数集")
    parser.add_argument("--units", choices=["natural", "lab"], default=None, help="轨迹输出单位")
    parser.add_argument("--seed", type=int, default=None, help="随机检查的种子")
    parser.add_argument("--log-level", dest="log_level", default=None, help="日志级别")
    parser.add_argument("--progress", action="store_true", help="显示 tqdm 进度条")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("selftest", help="运行不变量自检套件")
    p.add_argument("--quick", action="store_true", help="缩短积分与采样")

    p = sub.add_parser("free", help="自由粒子积分并对照闭式解")
    p.add_argument("--mode", dest="integrator.mode", choices=["lightlike", "timelike"], default=None)
    p.add_argument("--periods", dest="integrator.periods", type=float, default=None)
    p.add_argument("--steps-per-period", dest="integrator.steps_per_period", type=int, default=None)
    p.add_argument("--record-every", dest="integrator.record_every", type=int, default=None)
    p.add_argument("--scheme", dest="integrator.scheme", choices=["rk4", "lie"], default=None)

    p = sub.add_parser("simulate", help="外场中的 zitter 粒子积分")
    p.add_argument("--field", dest="integrator.field", choices=["none", "uniform", "lindhard"], default=None)
    p.add_argument("--periods", dest="integrator.periods", type=float, default=None)
    p.add_argument("--steps-per-period", dest="integrator.steps_per_period", type=int, default=None)
    p.add_argument("--record-every", dest="integrator.record_every", type=int, default=None)
    p.add_argument("--scheme", dest="integrator.scheme", choices=["rk4", "lie"], default=None)

    p = sub.add_parser("channel-orbit", help="圆轨道、二维轨道与径向共振积分")
    p.add_argument("--r0", dest="channel.r0_angstrom", type=float, default=None)
    p.add_argument("--p", dest="beam.p_mev", type=float, default=None)
    p.add_argument("--periods", dest="beam.periods", type=float, default=None)
    p.add_argument("--modulated", dest="channel.modulated", action="store_const", const=True, default=None)

    p = sub.add_parser("channel-scan", help="动量扫描")
    p.add_argument("--p-min", dest="scan.p_min", type=float, default=None)
    p.add_argument("--p-max", dest="scan.p_max", type=float, default=None)
    p.add_argument("--steps", dest="scan.steps", type=int, default=None)
    p.add_argument("--method", dest="scan.method", choices=["analytic", "floquet"], default=None)
    p.add_argument("--order", dest="beam.order", type=int, default=None)

    p = sub.add_parser("floquet", help="Mathieu 方程的 Floquet 指数")
    p.add_argument("--q", dest="floquet.q", type=float, default=None)
    p.add_argument("--h", dest="floquet.h", type=float, default=None)
    p.add_argument("--omega", dest="floquet.omega", type=float, default=None)
    p.add_argument("--n-terms", dest="floquet.n_terms", type=int, default=None)

    sub.add_parser("dirac-check", help="Dirac 方程与弱电规范群检查")
    return parser


def _set_path(data: Dict[str, Any], path: str, value: Any) -> None:
    keys = path.split(".")
    node = data
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError("配置节必须是对象", path=key)
        node = child
    node[keys[-1]] = value


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """配置文件 + 命令行覆盖项，一并校验"""
    data: Dict[str, Any] = {}
    if args.config:
        data = read_config_dict(args.config)
    for name in TOP_LEVEL_OPTIONS:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    for dest, value in vars(args).items():
        if "." in dest and value is not None:
            _set_path(data, dest, value)
    return validate_config(data)


# ==================== 2. 轨迹输出 ====================

def initial_rotor(section: IntegratorSection) -> Multivector:
    """R0 = L(v) exp(i theta/2)：先空间转动，再增压到初始速度"""
    w = np.asarray(section.velocity, dtype=float)
    gamma = 1.0 / math.sqrt(1.0 - float(w @ w))
    L = boost_from_velocity(vector(gamma, *(gamma * w)))
    rotation = exp_bivector(I * relative_vector(section.spin_angles) * 0.5)
    return L * rotation


def _lab_scale(columns: Sequence[str], config: RunConfig) -> Optional[np.ndarray]:
    if config.units != "lab":
        return None
    constants = config.physical_constants()
    length = constants.compton_bar
    scale = np.ones(len(columns))
    for i, name in enumerate(columns):
        if name in _LAB_TIME_COLUMNS:
            scale[i] = length / constants.c
        elif name in _LAB_LENGTH_COLUMNS:
            scale[i] = length
    return scale


def _apply_units(rows: List[List[float]], columns: Sequence[str], config: RunConfig) -> List[List[float]]:
    scale = _lab_scale(columns, config)
    if scale is None:
        return rows
    return [list(np.asarray(row, dtype=float) * scale) for row in rows]


def _trajectory_rows(trajectory: Trajectory, field: FieldModel,
                     oracle: Optional[Callable[[ParticleState], float]] = None) -> List[List[float]]:
    rows = trajectory_to_rows(trajectory, field)
    for i, (row, state) in enumerate(zip(rows, trajectory.states)):
        row.append(max(float(trajectory.monitors[m][i]) for m in DRIFT_MONITORS))
        if oracle is not None:
            row.append(oracle(state))
    return rows


def _write_trajectory(writer: ArtifactWriter, name: str, trajectory: Trajectory, field: FieldModel,
                      config: RunConfig, oracle: Optional[Callable[[ParticleState], float]] = None,
                      extra: Optional[Dict[str, Any]] = None) -> str:
    columns = list(TRAJECTORY_COLUMNS) + ["max_invariant_drift"]
    if oracle is not None:
        columns.append("oracle_error")
    rows = _apply_units(_trajectory_rows(trajectory, field, oracle), columns, config)
    header = {"units": config.units, "scheme": trajectory.scheme, "dtau": trajectory.dtau}
    header.update(extra or {})
    return writer.write_csv(name, columns, rows, header)


def _integrate_with_prefix(writer: ArtifactWriter, name: str, state0: ParticleState, field: FieldModel,
                           config: RunConfig, show_progress: bool,
                           oracle: Optional[Callable[[ParticleState], float]] = None) -> Trajectory:
    """积分；越界时先写出已完成的轨迹前缀再抛出"""
    section = config.integrator
    try:
        return integrate(state0, field,
                         dtau=ZITTER_PERIOD / section.steps_per_period,
                         n_steps=int(round(section.periods * section.steps_per_period)),
                         scheme=section.scheme,
                         limits=config.tolerances.to_limits(),
                         record_every=section.record_every,
                         show_progress=show_progress)
    except InvariantDriftError as e:
        if e.trajectory is not None:
            _write_trajectory(writer, name.replace(".csv", "_partial.csv"), e.trajectory, field, config,
                              oracle, {"aborted_monitor": e.monitor})
        raise


# ==================== 3. 子命令 ====================

def cmd_selftest(config: RunConfig, writer: ArtifactWriter, args: argparse.Namespace) -> int:
    result = run_selftest(seed=config.seed, quick=args.quick, verbose=True)
    writer.write_json("selftest.json", result.to_dict())
    writer.write_csv(
        "discrepancy.csv",
        ("literature", "computed", "relative_difference", "flagged"),
        [[d.literature, d.computed, d.relative_difference, d.flagged] for d in result.discrepancies],
        {f"row{i}": d.name for i, d in enumerate(result.discrepancies)},
    )
    print(f"\n  通过 {result.passed_count}/{len(result.checks)} 项")
    return EXIT_OK if result.passed else EXIT_FAILURE


def cmd_free(config: RunConfig, writer: ArtifactWriter, args: argparse.Namespace) -> int:
    section = config.integrator
    R0 = initial_rotor(section)
    z0 = vector(0.0, 0.0, 0.0, 0.0)

    if section.mode == "timelike":
        e = tuple(rotate(R0, g) for g in GAMMA)
        p = e[0] * M_E
        S0 = (e[2] * e[1]) * (0.5 * HBAR)
        n = int(round(section.periods * section.steps_per_period / section.record_every))
        dtau = ZITTER_PERIOD / section.steps_per_period * section.record_every
        rows = []
        for i in range(n + 1):
            history = free_history(p, S0, z0, i * dtau, mode="timelike")
            rows.append([i * dtau, *history.z.coeffs[1:5], history.S.max_abs_diff(S0)])
        writer.write_csv("free_trajectory.csv", FREE_TIMELIKE_COLUMNS,
                         _apply_units(rows, FREE_TIMELIKE_COLUMNS, config),
                         {"units": config.units, "mode": "timelike"})
        print(f"类时自由解: {len(rows)} 个采样点，自旋漂移 {max(r[-1] for r in rows):.3e}")
        return EXIT_OK

    field = UniformField(Multivector())
    state0 = initial_state(R0, z0)

    def oracle(state: ParticleState) -> float:
        exact = free_solution(state0, state.tau - state0.tau)
        return (state.z - exact.z).coeff_norm() / max(1.0, exact.z.coeff_norm())

    trajectory = _integrate_with_prefix(writer, "free_trajectory.csv", state0, field, config,
                                        args.progress, oracle)
    _write_trajectory(writer, "free_trajectory.csv", trajectory, field, config, oracle, {"mode": "lightlike"})
    worst = max(trajectory.max_drift(m) for m in DRIFT_MONITORS)
    final_error = oracle(trajectory.states[-1])
    print("=" * 70)
    print(f"类光自由粒子: {section.periods:g} 个 zitter 周期，{len(trajectory)} 条记录")
    print(f"  最大不变量漂移 {worst:.3e}，闭式解相对误差 {final_error:.3e}")
    print("=" * 70)
    return EXIT_OK


def build_field(config: RunConfig) -> FieldModel:
    section = config.integrator
    if section.field == "none":
        return UniformField(Multivector())
    if section.field == "uniform":
        return UniformField.from_eb(section.E, section.B)
    return channel_string_field(config.channel.to_params(), config.physical_constants(),
                                modulated=config.channel.modulated)


def cmd_simulate(config: RunConfig, writer: ArtifactWriter, args: argparse.Namespace) -> int:
    section = config.integrator
    field = build_field(config)
    if section.position is not None:
        z0 = vector(*section.position)
    elif section.field == "lindhard":
        r0 = config.channel.r0_angstrom / config.physical_constants().compton_bar
        z0 = vector(0.0, r0, 0.0, 0.0)
    else:
        z0 = vector(0.0, 0.0, 0.0, 0.0)
    state0 = initial_state(initial_rotor(section), z0, field)
    trajectory = _integrate_with_prefix(writer, "simulate_trajectory.csv", state0, field, config, args.progress)
    extra: Dict[str, Any] = {"field": section.field}
    if section.field == "lindhard":
        extra["energy_drift"] = energy_drift(trajectory, field)
    _write_trajectory(writer, "simulate_trajectory.csv", trajectory, field, config, extra=extra)
    print("=" * 70)
    print(f"外场 {section.field}: {len(trajectory)} 条记录")
    for m in DRIFT_MONITORS:
        print(f"  {m}: {trajectory.max_drift(m):.3e}")
    print("=" * 70)
    return EXIT_OK


def _beam(config: RunConfig):
    params = config.channel.to_params()
    constants = config.physical_constants()
    if config.beam.p_mev is None:
        return beam_kinematics(params.d, constants)
    return beam_at_momentum(config.beam.p_mev, params.d, constants)


def cmd_channel_orbit(config: RunConfig, writer: ArtifactWriter, args: argparse.Namespace) -> int:
    params = config.channel.to_params()
    constants = config.physical_constants()
    beam = _beam(config)
    r0 = config.channel.r0_angstrom
    orbit = circular_orbit(r0, beam, params)
    run2d = integrate_orbit(r0, beam, params, config.beam.orbit_time_fs * 1e-15,
                            n_samples=config.beam.orbit_samples,
                            longitudinal=config.channel.modulated,
                            sharpness=config.beam.sharpness, constants=constants)
    writer.write_csv("channel_orbit.csv", ORBIT_COLUMNS,
                     [[t, x, y, r, L] for t, x, y, r, L in
                      zip(run2d.t, run2d.x, run2d.y, run2d.r, run2d.angular_momentum)],
                     {"r0_A": r0, "p_MeV": beam.p})

    # 径向方程以 omega0 为时间单位：q = 1，驱动频率 omega/omega0
    h = constants.lambda_e / float(effective_radius(r0, params))
    omega = beam.omega / beam.omega0
    t_end = config.beam.periods * 2.0 * math.pi / omega
    radial = integrate_radial(1.0, 0.0, 1.0, h, omega, t_end,
                              steps_per_period=config.beam.steps_per_period,
                              record_every=max(1, config.beam.steps_per_period // 8),
                              sharpness=config.beam.sharpness, show_progress=args.progress)
    writer.write_csv("radial_envelope.csv", RADIAL_COLUMNS,
                     [[t, x, v] for t, x, v in zip(radial.t, radial.x, radial.v)],
                     {"h": h, "omega_over_omega0": omega})
    floquet = floquet_exponent(1.0, h, omega)
    resonance = parametric_resonance(h, 1.0, omega - 2.0)
    width = resonance_momentum_width(h, beam)
    summary = {
        "beam": {"p_MeV": beam.p, "gamma": beam.gamma, "omega0": beam.omega0, "omega": beam.omega,
                 "detuning": beam.detuning},
        "orbit": {"r0_A": r0, "U0_eV": orbit.U0, "U1_eV_per_A": orbit.U1, "U2_eV_per_A2": orbit.U2,
                  "thetadot0": orbit.thetadot0, "Omega0": orbit.Omega0, "revolutions": orbit.revolutions,
                  "angular_momentum_drift": run2d.angular_momentum_drift,
                  "energy_drift": run2d.energy_drift},
        "resonance": {"h": h, "R0_A": float(effective_radius(r0, params)),
                      "floquet_s": [floquet.s.real, floquet.s.imag],
                      "stable": floquet.stable,
                      "analytic_growth": resonance.s.real,
                      "per_atom_exponent": resonance.per_atom_exponent,
                      "width_hp_MeV": width.literature, "width_kinematic_MeV": width.kinematic},
        "radial_fit": None if radial.fit is None else {
            "exponent": radial.fit.exponent, "uncertainty": radial.fit.uncertainty},
    }
    writer.write_json("channel_orbit.json", summary)
    print("=" * 70)
    print(f"p = {beam.p:.4f} MeV/c，r0 = {r0} Å")
    print(f"  theta_dot0 = {orbit.thetadot0:.3e} 1/s，Omega0 = {orbit.Omega0:.3e} 1/s，"
          f"每微米 {orbit.revolutions:.2f} 圈")
    print(f"  h = {h:.4e}，Floquet Re s = {floquet.s.real:.4e}，解析 {resonance.s.real:.4e}")
    if radial.fit is not None:
        print(f"  数值包络指数 {radial.fit.exponent:.4e} ± {radial.fit.uncertainty:.1e}")
    print("=" * 70)
    return EXIT_OK


def cmd_channel_scan(config: RunConfig, writer: ArtifactWriter, args: argparse.Namespace) -> int:
    scan_cfg = config.scan
    scan = momentum_scan(scan_cfg.p_min, scan_cfg.p_max, scan_cfg.steps,
                         params=config.channel.to_params(),
                         r0_samples=scan_cfg.r0_samples,
                         constants=config.physical_constants(),
                         order=config.beam.order,
                         method=scan_cfg.method,
                         threshold=scan_cfg.threshold,
                         workers=config.workers,
                         show_progress=args.progress)
    summary = {
        "center_MeV": scan.center, "fwhm_MeV": scan.fwhm, "peak_count": scan.peak_count,
        "expected_center_MeV": scan.expected_center, "expected_width_MeV": scan.expected_width,
        "order": scan.order, "method": scan.method, "single_peak": scan.single_peak,
    }
    writer.write_csv("channel_scan.csv", SCAN_COLUMNS,
                     [[r.p, r.growth_per_atom, r.atoms_to_double, r.ejected_fraction] for r in scan.rows],
                     {k: v for k, v in summary.items() if not isinstance(v, (bool, str))})
    writer.write_json("channel_scan.json", summary)
    print("=" * 70)
    print(f"动量扫描 {scan_cfg.p_min}-{scan_cfg.p_max} MeV/c，{len(scan.rows)} 点")
    print(f"  共振中心 {scan.center:.4f} MeV/c（预期 {scan.expected_center:.4f}）")
    print(f"  FWHM {scan.fwhm:.4f} MeV/c（运动学带宽 {scan.expected_width:.4f}），峰数 {scan.peak_count}")
    print("=" * 70)
    return EXIT_OK


def cmd_floquet(config: RunConfig, writer: ArtifactWriter, args: argparse.Namespace) -> int:
    section = config.floquet
    params = config.channel.to_params()
    constants = config.physical_constants()
    beam = _beam(config)
    q = 1.0 if section.q is None else section.q
    h = (constants.lambda_e / float(effective_radius(config.channel.r0_angstrom, params))
         if section.h is None else section.h)
    omega = beam.omega / beam.omega0 if section.omega is None else section.omega
    result = floquet_exponent(q, h, omega, n_terms=section.n_terms)
    payload = {
        "q": q, "h": h, "omega": omega,
        "s": [result.s.real, result.s.imag],
        "s_monodromy": [result.s_monodromy.real, result.s_monodromy.imag],
        "s_recursion": None if result.s_recursion is None else [result.s_recursion.real, result.s_recursion.imag],
        "coeff_ratios": [[c.real, c.imag] for c in np.asarray(result.coeff_ratios, dtype=complex)],
        "stable": result.stable,
        "width": result.width,
        "methods_agree": result.methods_agree,
        "wronskian": result.wronskian,
        "trace": result.trace,
    }
    writer.write_json("floquet.json", payload)
    print(f"Floquet 指数 s = {result.s.real:.6e} {result.s.imag:+.6e}i，"
          f"{'稳定' if result.stable else '共振（不稳定）'}")
    return EXIT_OK


def cmd_dirac_check(config: RunConfig, writer: ArtifactWriter, args: argparse.Namespace) -> int:
    results = dirac_check_report(samples=1000, seed=config.seed, tolerance=config.tolerances.dirac)
    lines = [f"{'检查':<36}{'最大残差':>14}{'容差':>10}  结果"]
    for r in results:
        lines.append(f"{r.name:<36}{r.max_residual:>14.3e}{r.tolerance:>10.1e}  {'通过' if r.passed else '失败'}")
    table = "\n".join(lines)
    writer.write_text("dirac_check.txt", table)
    writer.write_json("dirac_check.json", {"checks": [r.to_dict() for r in results],
                                           "passed": all(r.passed for r in results)})
    print(table)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE


COMMANDS: Dict[str, Callable[[RunConfig, ArtifactWriter, argparse.Namespace], int]] = {
    "selftest": cmd_selftest,
    "free": cmd_free,
    "simulate": cmd_simulate,
    "channel-orbit": cmd_channel_orbit,
    "channel-scan": cmd_channel_scan,
    "floquet": cmd_floquet,
    "dirac-check": cmd_dirac_check,
}


# ==================== 4. 入口 ====================

def run_command(argv: Sequence[str]) -> int:
    """
    解析参数并执行子命令，返回退出码

    Args:
        argv: 不含程序名的参数列表
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    if args.log_level:
        logging.getLogger().setLevel(args.log_level.upper())

    try:
        config = load_run_config(args)
        writer = ArtifactWriter(config.output_dir, config_hash(config), args.command)
    except ConfigError as e:
        logger.error("配置错误: %s", e)
        print(json.dumps(_error_response(str(e), "config"), ensure_ascii=False))
        return EXIT_USAGE

    writer.write_text("config.json", serialize_config(config))
    try:
        return COMMANDS[args.command](config, writer, args)
    except InvariantDriftError as e:
        logger.error("不变量越界: %s", e)
        writer.write_json("error.json", _error_response(str(e), "invariant"))
        return EXIT_FAILURE
    except (ConfigError, DomainError) as e:
        logger.error("参数错误: %s", e)
        writer.write_json("error.json", _error_response(str(e), "usage"))
        return EXIT_USAGE
    except ZitterError as e:
        logger.error("运行失败: %s", e)
        writer.write_json("error.json", _error_response(str(e), type(e).__name__))
        return EXIT_FAILURE


def main():
    load_dotenv()
    logging.basicConfig(
        level=os.getenv("ZITTER_LOG_LEVEL", "INFO").upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
