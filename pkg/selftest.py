"""
不变量自检脚本 - 代数核、积分器、闭式解、通道数值与 Dirac 检查逐项验证，
最后打印文献数值差异报告
"""
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np
from dotenv import load_dotenv

from channeling import (
    ChannelParams,
    DiscrepancyItem,
    beam_kinematics,
    channel_string_field,
    circular_orbit,
    discrepancy_report,
    effective_radius,
    energy_drift,
    floquet_exponent,
    get_constants,
    integrate_radial,
    parametric_resonance,
    resonance_momentum_width,
)
from dirac_bridge import CheckResult, dirac_check_report
from exceptions import ZitterError
from field_models import UniformField
from sta_core import (
    BLADES,
    ONE,
    Multivector,
    blade_product_oracle,
    canonical_decompose,
    compose_spinor,
    eb_to_bivector,
    exp_bivector,
    vector,
)
from zitter_dynamics import (
    LAMBDA_E,
    ZITTER_PERIOD,
    constant_field_history,
    free_solution,
    initial_state,
    integrate,
    relative_momentum_square,
    rest_frame_split,
)

logger = logging.getLogger(__name__)

SectionFn = Callable[[np.random.Generator, bool], List[CheckResult]]


def _check(name: str, value: float, tolerance: float) -> CheckResult:
    value = float(value)
    return CheckResult(name=name, max_residual=value, tolerance=tolerance,
                       passed=bool(math.isfinite(value) and value <= tolerance))


def _relative(computed: float, expected: float) -> float:
    return abs(computed - expected) / abs(expected)


def _random_rotor(rng: np.random.Generator, scale: float = 0.3) -> Multivector:
    coeffs = np.zeros(16)
    coeffs[5:11] = rng.normal(scale=scale, size=6)
    return exp_bivector(Multivector(coeffs))


# ==================== 1. 代数核 ====================

def check_algebra(rng: np.random.Generator, quick: bool = False) -> List[CheckResult]:
    """几何积对照暴力刀片乘法，外加反转、转子与规范分解恒等式"""
    index = {blade: i for i, blade in enumerate(BLADES)}
    table = np.zeros((16, 16, 16))
    basis_error = 0.0
    for i, a in enumerate(BLADES):
        for j, b in enumerate(BLADES):
            sign, blade = blade_product_oracle(a, b)
            table[i, j, index[blade]] = sign
            e_i = Multivector(np.eye(16)[i])
            e_j = Multivector(np.eye(16)[j])
            basis_error = max(basis_error, float(np.max(np.abs((e_i * e_j).coeffs - table[i, j]))))

    samples = 100 if quick else 1000
    random_error = reverse_error = rotor_error = spinor_error = 0.0
    for _ in range(samples):
        A = Multivector(rng.normal(size=16))
        B = Multivector(rng.normal(size=16))
        expected = np.einsum("i,j,ijk->k", A.coeffs, B.coeffs, table)
        random_error = max(random_error, float(np.max(np.abs((A * B).coeffs - expected))))
        reverse_error = max(reverse_error, (A * B).reverse().max_abs_diff(B.reverse() * A.reverse()))
        R = _random_rotor(rng)
        rotor_error = max(rotor_error, (R * R.reverse()).max_abs_diff(ONE))
        rho, beta = float(rng.uniform(0.2, 3.0)), float(rng.uniform(-3.0, 3.0))
        psi = compose_spinor(rho, beta, R)
        rho2, beta2, R2 = canonical_decompose(psi)
        spinor_error = max(spinor_error, abs(rho2 - rho), abs(beta2 - beta), R2.max_abs_diff(R))

    return [
        _check("基矢乘积 256 对（精确）", basis_error, 0.0),
        _check(f"随机几何积 {samples} 对", random_error, 1e-12),
        _check("(AB)~ = B~A~", reverse_error, 1e-12),
        _check("exp 转子 R R~ = 1", rotor_error, 1e-12),
        _check("规范分解往返", spinor_error, 1e-10),
    ]


# ==================== 2. 自由粒子与常场闭式解 ====================

def check_free_particle(rng: np.random.Generator, quick: bool = False) -> List[CheckResult]:
    periods = 20 if quick else 100
    steps = 100
    state0 = initial_state(ONE)
    trajectory = integrate(state0, UniformField(Multivector()), dtau=ZITTER_PERIOD / steps,
                           n_steps=steps * periods, scheme="lie", record_every=steps)
    final = trajectory.states[-1]
    exact = free_solution(state0, final.tau - state0.tau)
    radius = max(abs(float(np.linalg.norm(rest_frame_split(s).r)) - LAMBDA_E) for s in trajectory.states)
    return [
        _check(f"自由粒子闭式解 ({periods} 周期, 相对)",
               (final.z - exact.z).coeff_norm() / exact.z.coeff_norm(), 1e-9),
        _check("螺旋半径 = lambda_e", radius, 1e-10),
        _check("第一曲率漂移", trajectory.max_drift("kappa1_drift"), 1e-8),
    ]


def check_constant_field(rng: np.random.Generator, quick: bool = False) -> List[CheckResult]:
    periods = 10 if quick else 50
    cases = [
        ("沿自旋轴", eb_to_bivector((0.0, 0.0, -2e-3), (0.0, 0.0, -4e-3))),
        ("横向", eb_to_bivector(rng.uniform(-1e-3, 1e-3, 3), rng.uniform(-1e-3, 1e-3, 3))),
    ]
    results = []
    for label, F in cases:
        field = UniformField(F)
        state0 = initial_state(ONE, field=field)
        trajectory = integrate(state0, field, dtau=ZITTER_PERIOD / 400, n_steps=periods * 400,
                               scheme="lie", record_every=2000)
        closed = constant_field_history(state0, field, [s.tau for s in trajectory.states])
        z_error = max(n.z.max_abs_diff(e.z) / max(1.0, e.z.coeff_norm())
                      for n, e in zip(trajectory.states, closed))
        R_error = max(n.R.max_abs_diff(e.R) for n, e in zip(trajectory.states, closed))
        pi2 = relative_momentum_square(state0)
        pi2_drift = max(abs(relative_momentum_square(s) - pi2) / abs(pi2) for s in trajectory.states)
        results += [
            _check(f"常场闭式解位置，{label} ({periods} 周期)", z_error, 1e-8),
            _check(f"常场闭式解转子，{label}", R_error, 1e-8),
            _check(f"pi^2 漂移，{label}", pi2_drift, 1e-9),
        ]
    return results


# ==================== 3. 有场不变量 ====================

def check_driven_invariants(rng: np.random.Generator, quick: bool = False) -> List[CheckResult]:
    """均匀 E、均匀 B 与 Lindhard 弦势中的不变量漂移；越界时 integrate 直接抛出"""
    periods = 5 if quick else 20
    cases = [
        ("均匀 E", UniformField.from_eb(E=(0.05, 0.0, 0.0)), vector(0, 0, 0, 0)),
        ("均匀 B", UniformField.from_eb(B=(0.0, 0.0, 0.04)), vector(0, 0, 0, 0)),
        ("Lindhard", channel_string_field(ChannelParams(), modulated=True), vector(0.0, 120.0, 40.0, 0.0)),
    ]
    results = []
    for name, field_model, z0 in cases:
        state0 = initial_state(_random_rotor(rng), z0, field_model)
        trajectory = integrate(state0, field_model, n_steps=periods * 200)
        worst = max(trajectory.max_drift(m) for m in
                    ("rotor_norm_drift", "mass_integral_drift", "kappa1_drift", "null_drift", "spin_null_drift"))
        results.append(_check(f"{name}: 转子/质量积分/曲率/零性", worst, 1e-8))
        if name == "Lindhard":
            results.append(_check("Lindhard: 能量守恒", energy_drift(trajectory, field_model), 1e-8))
    return results


# ==================== 4. 通道数值 ====================

def check_channeling(rng: np.random.Generator, quick: bool = False) -> List[CheckResult]:
    params = ChannelParams()
    constants = get_constants("rounded")
    beam = beam_kinematics(params.d, constants)
    r0 = 0.5
    orbit = circular_orbit(r0, beam, params)
    R0 = effective_radius(r0, params)
    h = constants.lambda_e / R0
    width = resonance_momentum_width(h, beam)
    resonance = parametric_resonance(h, beam.omega0)
    return [
        _check("U(0.5 Å) = -18.9 eV", _relative(orbit.U0, -18.9), 0.01),
        _check("r0 U' = 31.7 eV", _relative(r0 * orbit.U1, 31.7), 0.01),
        _check("r0^2 U'' = -76.0 eV", _relative(r0 * r0 * orbit.U2, -76.0), 0.01),
        _check("共振动量 80.874 MeV/c", _relative(beam.p, 80.874), 1e-3),
        _check("gamma = 158", _relative(beam.gamma, 158.0), 0.01),
        _check("二阶共振 161.7 MeV/c", _relative(beam.second_order_p, 161.7), 1e-3),
        _check("h = 9.283e-3", _relative(h, 9.283e-3), 0.01),
        _check("R0 = 0.208 Å", _relative(R0, 0.208), 0.01),
        _check("Δp = h p = 0.751 MeV/c", _relative(width.literature, 0.751), 0.02),
        _check("每原子指数 1.46e-2", _relative(resonance.per_atom_exponent, 1.46e-2), 0.02),
        _check("倍增原子数 47 ± 3", abs(resonance.atoms_to_double - 47.0), 3.0),
    ]


def check_floquet(rng: np.random.Generator, quick: bool = False) -> List[CheckResult]:
    """径向方程的数值增长率对照 h omega0/4，离带时单值矩阵指数近零"""
    params = ChannelParams()
    h = get_constants("rounded").lambda_e / effective_radius(0.5, params)
    t_end = 6.0 / (h / 4.0)
    run = integrate_radial(1.0, 0.0, 1.0, h, 2.0, t_end, skip_fraction=0.5)
    on_band = floquet_exponent(1.0, h, 2.0)
    off_band = floquet_exponent(1.0, h, 2.0 + 4.0 * h)
    return [
        _check("数值增长率 vs h omega0/4", _relative(run.fit.exponent, h / 4.0), 0.05),
        _check("单值矩阵 vs Fourier 递推", _relative(on_band.s_monodromy.real, on_band.s_recursion.real), 0.01),
        _check("离带指数 / 带内指数", abs(off_band.s.real) / on_band.s.real, 1e-3),
    ]


# ==================== 5. Dirac 检查 ====================

def check_dirac(rng: np.random.Generator, quick: bool = False) -> List[CheckResult]:
    return dirac_check_report(samples=200 if quick else 1000, seed=int(rng.integers(2 ** 31)))


SECTIONS: Tuple[Tuple[str, SectionFn], ...] = (
    ("代数核", check_algebra),
    ("自由粒子", check_free_particle),
    ("常场闭式解", check_constant_field),
    ("有场不变量", check_driven_invariants),
    ("通道数值", check_channeling),
    ("Floquet 与参量共振", check_floquet),
    ("Dirac 方程", check_dirac),
)


@dataclass
class SelftestResult:
    sections: Dict[str, List[CheckResult]] = field(default_factory=dict)
    errors: Dict[str, str] = field(default_factory=dict)
    discrepancies: List[DiscrepancyItem] = field(default_factory=list)

    @property
    def checks(self) -> List[CheckResult]:
        return [r for rows in self.sections.values() for r in rows]

    @property
    def passed_count(self) -> int:
        return sum(1 for r in self.checks if r.passed)

    @property
    def passed(self) -> bool:
        return not self.errors and all(r.passed for r in self.checks)

    def to_dict(self) -> Dict[str, object]:
        return {
            "passed": self.passed,
            "passed_count": self.passed_count,
            "total": len(self.checks),
            "sections": {name: [r.to_dict() for r in rows] for name, rows in self.sections.items()},
            "errors": dict(self.errors),
            "discrepancies": [
                {"name": d.name, "literature": d.literature, "computed": d.computed,
                 "relative_difference": d.relative_difference, "flagged": d.flagged, "note": d.note}
                for d in self.discrepancies
            ],
        }


def run_selftest(seed: int = 20240601, quick: bool = False, verbose: bool = True) -> SelftestResult:
    """逐节运行自检；单节抛出的异常记为该节失败，不中断其余各节"""
    rng = np.random.default_rng(seed)
    result = SelftestResult()
    for number, (name, check_func) in enumerate(SECTIONS, start=1):
        if verbose:
            print("\n" + "=" * 70)
            print(f"{number}. {name}")
            print("=" * 70)
        try:
            rows = check_func(rng, quick)
        except ZitterError as e:
            logger.error("%s 自检出错: %s", name, e)
            result.errors[name] = str(e)
            if verbose:
                print(f"  ✗ 出错: {e}")
            continue
        result.sections[name] = rows
        if verbose:
            for row in rows:
                mark = "✓" if row.passed else "✗"
                print(f"  {mark} {row.name}: {row.max_residual:.3e} (容差 {row.tolerance:.1e})")

    result.discrepancies = discrepancy_report()
    if verbose:
        print_discrepancies(result.discrepancies)
    return result


def print_discrepancies(items: List[DiscrepancyItem]) -> None:
    print("\n" + "=" * 70)
    print("文献数值差异报告")
    print("=" * 70)
    print(f"  {'项目':<34}{'文献值':>14}{'计算值':>14}{'相对差':>10}")
    for item in items:
        flag = "⚠️ " if item.flagged else "  "
        print(f"{flag}{item.name:<34}{item.literature:>14.5g}{item.computed:>14.5g}"
              f"{item.relative_difference:>+10.2%}")
        if item.note:
            print(f"      {item.note}")


def main():
    """主函数"""
    load_dotenv()
    logging.basicConfig(
        level=os.getenv("ZITTER_LOG_LEVEL", "WARNING"),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    print("\n" + "=" * 70)
    print("zitter 工具包自检")
    print("=" * 70)

    result = run_selftest(quick="--quick" in sys.argv[1:])

    print("\n" + "=" * 70)
    print("检查结果汇总")
    print("=" * 70)
    for name, rows in result.sections.items():
        ok = all(r.passed for r in rows)
        print(f"  {name}: {'✅ 通过' if ok else '❌ 失败'}")
    for name in result.errors:
        print(f"  {name}: ❌ 出错")
    print(f"\n  通过 {result.passed_count}/{len(result.checks)} 项")
    print("=" * 70 + "\n")
    return 0 if result.passed else 1


if __name__ == '__main__':
    sys.exit(main())
