"""
診斷量測試
"""
import math

import numpy as np
import pytest
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from core.conformal_flow import MeshFlowState
from core.diagnostics import (
    DiagnosticsRecord,
    clausen,
    compute_record,
    convergence_rate,
    curvature,
    default_entropy_shift,
    energy_dissipation_check,
    entropy,
    entropy_derivative_check,
    entropy_dissipation,
    gauss_bonnet_residual,
    harnack_check,
    lobachevsky,
    noncollapsing_check,
    node_areas,
    potential_solve,
    residual_sup,
    rmin_rmax_track,
    shift_curve,
    soliton_residual,
)
from core.exceptions import (
    CompatibilityError,
    EntropyDomainError,
    MixedBackendError,
    UnsupportedStateError,
)
from core.trajectory import Trajectory


def make_record(t, r_min, r_max, rho):
    """只填入曲率欄位的紀錄"""
    return DiagnosticsRecord(
        t=t, area=1.0, rho=rho, R_min=r_min, R_max=r_max, energy_F=0.0,
        entropy_N=0.0, s_shift=0.0, gauss_bonnet_residual=0.0, phi_min=0.0,
        phi_max=0.0, mu_norm=None, X_norm=None, grad_f_max=0.0,
    )


def make_trajectory(times, r_min, r_max, rho, dt=0.01):
    records = [make_record(t, lo, hi, rho) for t, lo, hi in zip(times, r_min, r_max)]
    return Trajectory('mesh', rho=rho, times=list(times), records=records, reports={'dt': dt})


class TestShiftCurve:
    """s' = s(s - ρ) 的解析解"""

    def test_zero_start(self):
        """s₀ = 0 保持為 0"""
        np.testing.assert_array_equal(shift_curve(0.0, 1.0, np.array([0.0, 1.0, 5.0])), 0.0)

    def test_rho_zero(self):
        """ρ = 0 時 s = s₀/(1 - s₀t)，之後爆破"""
        assert shift_curve(0.5, 0.0, 1.0) == pytest.approx(1.0)
        assert math.isinf(shift_curve(0.5, 0.0, 3.0))

    def test_initial_value(self):
        assert shift_curve(-1.0, 1.0, 0.0) == pytest.approx(-1.0)

    def test_satisfies_ode(self):
        """中央差分導數等於 s(s - ρ)"""
        s0, rho, t, h = -1.0, 1.0, 0.7, 1e-5
        slope = (shift_curve(s0, rho, t + h) - shift_curve(s0, rho, t - h)) / (2.0 * h)
        value = shift_curve(s0, rho, t)
        assert slope == pytest.approx(value * (value - rho), rel=1e-6)

    def test_blowup_above_rho(self):
        """s₀ > ρ > 0 於 t = log(s₀/(s₀-ρ))/ρ 爆破"""
        assert math.isfinite(shift_curve(2.0, 1.0, 0.5))
        assert math.isinf(shift_curve(2.0, 1.0, 1.0))


class TestEntropy:
    """熵與其定義域"""

    def test_default_shift(self):
        assert default_entropy_shift(0.5) == 0.0
        assert default_entropy_shift(-0.3) == pytest.approx(-1.3)

    def test_positive_curvature(self, football_state):
        """R ≈ 2 時 N ≈ 2 log 2 · A"""
        expected = 2.0 * math.log(2.0) * football_state.area
        assert entropy(football_state) == pytest.approx(expected, rel=1e-2)

    def test_domain_error(self, football_state):
        """s 高於 R_min 時拋出 EntropyDomainError"""
        with pytest.raises(EntropyDomainError):
            entropy(football_state, 3.0)

    def test_derivative_check_rotational_only(self, perturbed_mesh_state):
        """網格軌跡不支援熵導數檢查"""
        trajectory = Trajectory('mesh', states=[perturbed_mesh_state])
        with pytest.raises(UnsupportedStateError):
            entropy_derivative_check(trajectory)


class TestPotential:
    """位勢 Δf = R - ρ"""

    def test_mean_zero_rotational(self, uneven_football_state):
        f = potential_solve(uneven_football_state)
        areas = node_areas(uneven_football_state)
        assert abs(np.sum(f * areas)) < 1e-10 * np.sum(np.abs(f) * areas)

    def test_mean_zero_mesh(self, perturbed_mesh_state):
        f = potential_solve(perturbed_mesh_state)
        areas = node_areas(perturbed_mesh_state)
        assert abs(np.sum(f * areas)) < 1e-10 * np.sum(np.abs(f) * areas)

    def test_incompatible_rho(self, uneven_football_state):
        """ρ 與平均曲率差太多時拋出 CompatibilityError"""
        with pytest.raises(CompatibilityError):
            potential_solve(uneven_football_state, rho=10.0)


class TestSolitonResidual:
    """孤立子殘差"""

    def test_suspension_nearly_zero(self, football_state):
        """常曲率懸垂度量的 μ 與 X 很小"""
        mu_norm, x_norm = soliton_residual(football_state)
        assert mu_norm < 5e-2
        assert x_norm < 5e-2

    def test_mesh_unsupported(self, perturbed_mesh_state):
        with pytest.raises(UnsupportedStateError):
            soliton_residual(perturbed_mesh_state)


class TestCurvatureChecks:
    """Harnack、非塌縮與 R_min 追蹤"""

    def test_noncollapsing_round_sphere(self, round_sphere_state):
        """R = 2 的圓球：B(p, 1/√2) 的面積乘 R_max 為 4π(1 - cos(1/√2))"""
        expected = 4.0 * math.pi * (1.0 - math.cos(1.0 / math.sqrt(2.0)))
        assert noncollapsing_check(round_sphere_state) == pytest.approx(expected, rel=2e-2)

    def test_harnack_round_sphere(self, round_sphere_state):
        """常曲率時不會違反"""
        report = harnack_check(round_sphere_state)
        assert report.applicable
        assert report.violations == 0
        assert report.pairs > 0

    def test_harnack_not_applicable(self, torus):
        """擾動環面的曲率積分為 0，必有 R ≤ 0 的頂點，不適用"""
        rng = np.random.default_rng(5)
        state = MeshFlowState.initial(torus, 0.05 * rng.standard_normal(torus.n_vertices))
        report = harnack_check(state)
        assert not report.applicable

    def test_rmin_monotone_branch(self):
        """ρ ≤ 0 時 R_min 下降超過容差即為違反"""
        trajectory = make_trajectory([0.0, 0.1, 0.2], [0.0, 0.05, -0.5], [1.0, 1.0, 1.0], 0.0)
        report = rmin_rmax_track(trajectory)
        assert report.branch == 'monotone'
        assert report.tolerance == pytest.approx(0.1)
        assert report.violations == 1
        assert report.worst_deficit == pytest.approx(0.55)

    def test_rmin_comparison_branch(self):
        """ρ > 0 時沿比較 ODE 的解不算違反"""
        times = np.linspace(0.0, 1.0, 6)
        r_min = shift_curve(-1.0, 1.0, times)
        trajectory = make_trajectory(times, r_min, np.ones(6), 1.0)
        report = rmin_rmax_track(trajectory)
        assert report.branch == 'comparison'
        assert report.violations == 0


class TestRecords:
    """紀錄與摘要"""

    def test_rotational_record(self, uneven_football_state):
        rho = 2.0
        record = compute_record(uneven_football_state, rho)
        assert record.area == pytest.approx(uneven_football_state.area)
        assert record.gauss_bonnet_residual == gauss_bonnet_residual(uneven_football_state)
        assert record.gauss_bonnet_residual < 1e-9
        assert record.mu_norm is not None
        assert record.R_min <= record.R_max

    def test_mesh_record(self, perturbed_mesh_state):
        """網格紀錄沒有孤立子殘差"""
        record = compute_record(perturbed_mesh_state, 0.0)
        assert record.mu_norm is None
        assert record.X_norm is None
        assert record.as_row()['gb_residual'] < 1e-10

    def test_residual_sup(self):
        assert residual_sup(make_record(0.0, 0.5, 1.2, 1.0)) == pytest.approx(0.5)

    def test_convergence_rate(self):
        """||R - ρ||∞ = e^{-2t} 的尾段斜率為 -2"""
        times = np.linspace(0.0, 5.0, 51)
        decay = np.exp(-2.0 * times)
        trajectory = make_trajectory(times, 1.0 - 0.5 * decay, 1.0 + decay, 1.0)
        slope, r_squared = convergence_rate(trajectory)
        assert slope == pytest.approx(-2.0, rel=1e-8)
        assert r_squared == pytest.approx(1.0)

    def test_mixed_backends(self, football_state, torus):
        """同一條軌跡混用兩種狀態時拋出 MixedBackendError"""
        trajectory = Trajectory('rotational', states=[football_state, MeshFlowState.initial(torus)])
        with pytest.raises(MixedBackendError):
            energy_dissipation_check(trajectory)


class TestClausen:
    """Clausen 與 Lobachevsky 函數"""

    def test_catalan_value(self):
        """Cl₂(π/2) 為 Catalan 常數"""
        assert clausen(math.pi / 2.0) == pytest.approx(0.915965594177219015, rel=1e-12)

    def test_zeros(self):
        assert clausen(0.0) == 0.0
        assert clausen(math.pi) == pytest.approx(0.0, abs=1e-12)

    def test_reflection(self):
        """Cl₂(2π - θ) = -Cl₂(θ)"""
        theta = np.array([0.3, 1.1, 2.5])
        np.testing.assert_allclose(clausen(2.0 * math.pi - theta), -clausen(theta), rtol=1e-12)

    def test_lobachevsky_value(self):
        """Л(π/6) = ½Cl₂(π/3)"""
        assert lobachevsky(math.pi / 6.0) == pytest.approx(0.5 * 1.0149416064096536, rel=1e-12)

    def test_lobachevsky_derivative(self):
        """Л'(x) = -log(2 sin x)"""
        x, h = 0.8, 1e-5
        slope = (lobachevsky(x + h) - lobachevsky(x - h)) / (2.0 * h)
        assert slope == pytest.approx(-math.log(2.0 * math.sin(x)), rel=1e-6)


class TestEntropySupport:
    """熵與其耗散量的定義域"""

    def test_record_falls_back_to_default_shift(self, football_state):
        """s 超出定義域時紀錄改用預設平移，熵仍為有限值"""
        record = compute_record(football_state, 2.0, s_shift=3.0)
        assert record.s_shift == 0.0
        assert math.isfinite(record.entropy_N)
        assert record.entropy_N == pytest.approx(entropy(football_state, 0.0))

    def test_record_keeps_valid_shift(self, football_state):
        record = compute_record(football_state, 2.0, s_shift=-1.0)
        assert record.s_shift == -1.0
        assert record.entropy_N == pytest.approx(entropy(football_state, -1.0))

    def test_dissipation_nonpositive(self, uneven_football_state):
        """耗散量對所有節點累加，為有限的非正值"""
        shift = default_entropy_shift(float(np.min(curvature(uneven_football_state)))) - 1.0
        value = entropy_dissipation(uneven_football_state, shift)
        assert math.isfinite(value)
        assert value <= 0.0


class TestNoncollapsingCenters:
    """非塌縮檢查的球心取樣"""

    def test_poles_only(self, round_sphere_state):
        """不抽樣時只用兩個極點，圓球上即為極冠面積"""
        expected = 4.0 * math.pi * (1.0 - math.cos(1.0 / math.sqrt(2.0)))
        assert noncollapsing_check(round_sphere_state, n_samples=0) == pytest.approx(expected, rel=2e-2)

    def test_interior_centers_included(self, uneven_football_state):
        """子午線上的抽樣中心只會使最小值更小"""
        poles = noncollapsing_check(uneven_football_state, n_samples=0)
        sampled = noncollapsing_check(uneven_football_state, n_samples=uneven_football_state.n)
        assert 0.0 < sampled <= poles
