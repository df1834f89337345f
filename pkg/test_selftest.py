"""
selftest 测试：快速模式全部通过，单节出错不中断其余各节
"""

import numpy as np
import pytest

import selftest
from exceptions import ConvergenceError
from selftest import SECTIONS, check_algebra, check_channeling, run_selftest


@pytest.fixture(scope="module")
def quick_result():
    return run_selftest(seed=7, quick=True, verbose=False)


def test_quick_selftest_passes(quick_result):
    failed = [r.name for r in quick_result.checks if not r.passed]
    assert failed == []
    assert quick_result.errors == {}
    assert quick_result.passed
    assert list(quick_result.sections) == [name for name, _ in SECTIONS]


def test_result_dictionary(quick_result):
    document = quick_result.to_dict()
    assert document["passed"] is True
    assert document["passed_count"] == document["total"] == len(quick_result.checks)
    assert set(document["sections"]) == {name for name, _ in SECTIONS}


def test_discrepancy_report_is_attached(quick_result):
    assert quick_result.discrepancies
    assert any(item.flagged for item in quick_result.discrepancies)


def test_known_literature_mismatches_stay_flagged(quick_result):
    items = {item.name: item for item in quick_result.discrepancies}
    assert items["Omega0 [1/s]"].flagged
    assert items["Omega0 [1/s]"].computed == pytest.approx(2.92e15, rel=0.02)
    assert items["频移模量 [1/s]"].flagged
    assert items["频移模量 [1/s]"].computed == pytest.approx(5.9e16, rel=0.03)
    # 共振处运动学带宽为 h p 的一半
    literature_width = items["Δp [MeV/c] (h p)"]
    kinematic_width = items["Δp [MeV/c] (运动学带宽)"]
    assert kinematic_width.flagged
    assert kinematic_width.computed == pytest.approx(0.5 * literature_width.computed, rel=1e-3)
    assert quick_result.to_dict()["discrepancies"]


def test_algebra_basis_products_are_exact():
    rows = check_algebra(np.random.default_rng(0), quick=True)
    assert rows[0].max_residual == 0.0
    assert all(r.passed for r in rows)


def test_channeling_golden_numbers():
    rows = check_channeling(np.random.default_rng(0))
    assert len(rows) == 11
    assert all(r.passed for r in rows), [r.name for r in rows if not r.passed]


def test_failing_section_is_recorded(monkeypatch, capsys):
    def broken(rng, quick):
        raise ConvergenceError("不收敛", residual=1.0)

    monkeypatch.setattr(selftest, "SECTIONS", (("坏节", broken), SECTIONS[0]))
    result = run_selftest(seed=1, quick=True, verbose=True)
    assert "坏节" in result.errors
    assert SECTIONS[0][0] in result.sections
    assert not result.passed
    assert "✗ 出错" in capsys.readouterr().out
