"""
網格共形流測試
"""
import math
import warnings

import numpy as np
import pytest
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from core.conformal_flow import (
    BetaSchedule,
    MeshFlowState,
    angle_schedule_step,
    blowup_monitor,
    discrete_curvature,
    flow_step_mesh,
    mesh_gauss_bonnet_residual,
    metric_distances,
    rescale_to_area,
    run_mesh_flow,
    stable_dt,
    surface_diameter,
)
from core.diagnostics import dissipation, energy_F, energy_dissipation_check
from core.exceptions import (
    ParameterRangeError,
    ParameterValidationError,
)


class TestMeshFlowState:
    """網格流狀態"""

    def test_phi_shape(self, torus):
        """φ 長度必須等於頂點數"""
        with pytest.raises(ParameterValidationError):
            MeshFlowState(torus, np.zeros(torus.n_vertices + 1))

    def test_beta_current_defaults(self, troyanov_mesh):
        """未指定時沿用網格上的錐角"""
        state = MeshFlowState.initial(troyanov_mesh)
        assert state.beta_current == troyanov_mesh.cone_betas
        assert state.conic_euler_characteristic == pytest.approx(0.5)

    def test_uniform_scaling_of_area(self, torus):
        """φ ≡ c 使邊長乘上 e^c、面積乘上 e^{2c}"""
        state = MeshFlowState.initial(torus, np.full(torus.n_vertices, 0.5 * math.log(3.0)))
        assert state.area == pytest.approx(3.0, rel=1e-12)


class TestCurvature:
    """離散曲率"""

    def test_flat_torus(self, torus):
        """平坦環面 R = 0"""
        curvature = discrete_curvature(MeshFlowState.initial(torus))
        np.testing.assert_allclose(curvature, 0.0, atol=1e-9)

    def test_gauss_bonnet(self, perturbed_mesh_state):
        """擾動後仍滿足離散 Gauss-Bonnet"""
        assert mesh_gauss_bonnet_residual(perturbed_mesh_state) < 1e-10

    def test_stable_dt_positive(self, perturbed_mesh_state):
        assert stable_dt(perturbed_mesh_state) > 0


class TestFlowStep:
    """單步推進"""

    def test_zero_step(self, perturbed_mesh_state):
        """dt = 0 回傳原狀態"""
        assert flow_step_mesh(perturbed_mesh_state, 0.0, 1.0) is perturbed_mesh_state

    def test_step_keeps_targets(self, perturbed_mesh_state):
        """保角流不改變錐角目標"""
        state = perturbed_mesh_state
        rho = 4.0 * math.pi * state.conic_euler_characteristic / state.area
        advanced = flow_step_mesh(state, 0.5 * stable_dt(state), rho)
        assert advanced.beta_current == state.beta_current
        assert advanced.t > state.t
        assert mesh_gauss_bonnet_residual(advanced) < 1e-10

    def test_schedule_changes_targets(self, perturbed_mesh_state):
        """角度排程改變標記頂點的目標"""
        state = perturbed_mesh_state
        schedule = BetaSchedule((0.0, 1.0), ((0.5, 0.5, 0.5), (0.6, 0.6, 0.6)))
        dt = 0.5 * stable_dt(state)
        advanced = angle_schedule_step(state, dt, 1.0, schedule)
        expected = 0.5 + 0.1 * dt
        assert advanced.beta_current == pytest.approx((expected,) * 3)

    def test_schedule_out_of_range(self, perturbed_mesh_state):
        """排程超出 (0,1) 拋出 ParameterRangeError"""
        schedule = BetaSchedule((0.0,), ((0.5, 0.5, 0.5),))
        object.__setattr__(schedule, 'values', ((1.2, 0.5, 0.5),))
        with pytest.raises(ParameterRangeError):
            angle_schedule_step(perturbed_mesh_state, 1e-4, 1.0, schedule)


class TestBetaSchedule:
    """錐角排程"""

    def test_interpolation(self):
        """節點之間線性內插、範圍外取端點值"""
        schedule = BetaSchedule((0.0, 2.0), ((0.2,), (0.6,)))
        assert schedule.betas_at(1.0) == pytest.approx((0.4,))
        assert schedule.betas_at(5.0) == pytest.approx((0.6,))

    def test_times_must_increase(self):
        with pytest.raises(ParameterValidationError):
            BetaSchedule((1.0, 0.0), ((0.2,), (0.6,)))

    def test_values_in_range(self):
        with pytest.raises(ParameterRangeError):
            BetaSchedule((0.0,), ((1.5,),))


class TestDistances:
    """度量距離與集中監測"""

    def test_distance_on_torus(self, torus):
        """相鄰頂點距離為格距，距離對稱"""
        state = MeshFlowState.initial(torus)
        distance = metric_distances(state, 0)
        assert distance[0] == 0.0
        assert distance[1] == pytest.approx(1.0 / 6.0, rel=1e-12)
        back = metric_distances(state, 1)
        assert back[0] == pytest.approx(distance[1], rel=1e-12)

    def test_limit(self, torus):
        """超過 limit 的頂點為 inf"""
        distance = metric_distances(MeshFlowState.initial(torus), 0, limit=0.2)
        assert np.isinf(distance).any()
        assert np.all(distance[np.isfinite(distance)] <= 0.2)

    def test_single_peak_detected(self, icosphere):
        """單一頂點的尖峰被判定為集中"""
        phi = np.zeros(icosphere.n_vertices)
        phi[5] = 3.0
        report = blowup_monitor(MeshFlowState.initial(icosphere, phi), gap=1.0)
        assert report.argmax_vertex == 5
        assert report.phi_max == 3.0
        assert report.separated

    def test_flat_profile_not_separated(self, icosphere):
        """均勻 φ 不是集中"""
        report = blowup_monitor(MeshFlowState.initial(icosphere), gap=1.0)
        assert not report.separated


class TestRunMeshFlow:
    """完整的網格流"""

    def test_torus_converges(self, torus):
        """擾動的平坦環面收斂回平坦度量"""
        rng = np.random.default_rng(3)
        state = MeshFlowState.initial(torus, 0.05 * rng.standard_normal(torus.n_vertices))
        trajectory = run_mesh_flow(state, {'t_end': 2.0, 'dt': 0.01, 'converge_tol': 1e-6})
        assert trajectory.termination == 'converged'
        assert trajectory.rho == 0.0
        assert trajectory.exit_code == 0
        assert np.max(trajectory.column('gb_residual')) < 1e-10

    def test_records_and_reports(self, perturbed_mesh_state):
        """記錄時間遞增，並附集中報告與初始面積"""
        trajectory = run_mesh_flow(perturbed_mesh_state, {'t_end': 0.05, 'check_every': 5})
        assert trajectory.termination == 't_end'
        assert np.all(np.diff(trajectory.times) > 0)
        assert trajectory.reports['initial_area'] == pytest.approx(perturbed_mesh_state.area)
        assert len(trajectory.reports['concentration_history']) == len(trajectory)

    def test_initial_area_override(self, perturbed_mesh_state):
        """接續時沿用指定的初始面積決定 ρ"""
        area = 2.0 * perturbed_mesh_state.area
        trajectory = run_mesh_flow(perturbed_mesh_state, {'t_end': 0.01, 'initial_area': area})
        expected = 4.0 * math.pi * perturbed_mesh_state.conic_euler_characteristic / area
        assert trajectory.rho == pytest.approx(expected)

    @pytest.mark.slow
    def test_troyanov_sphere_converges(self, troyanov_mesh):
        """Troyanov 條件成立的三錐點球面收斂到常曲率"""
        rng = np.random.default_rng(42)
        state = MeshFlowState.initial(troyanov_mesh, 0.05 * rng.standard_normal(troyanov_mesh.n_vertices))
        trajectory = run_mesh_flow(state, {'t_end': 40.0, 'converge_tol': 1e-6})
        assert trajectory.termination == 'converged'
        assert trajectory.limit == 'constant_curvature'

    def test_stops_when_stable_dt_below_floor(self, perturbed_mesh_state):
        """穩定步長低於 dt_min 時以 step_failure 結束，不重複記錄時間"""
        trajectory = run_mesh_flow(perturbed_mesh_state, {'t_end': 1.0, 'dt': 1.0, 'dt_min': 0.5})
        assert trajectory.termination == 'step_failure'
        assert trajectory.exit_code == 4
        assert len(trajectory) == 1

    def test_area_held_at_initial(self, perturbed_mesh_state):
        """每步後拉回 A(0)，記錄的面積漂移只剩捨入誤差"""
        trajectory = run_mesh_flow(perturbed_mesh_state, {'t_end': 0.2, 'check_every': 1})
        areas = trajectory.column('area')
        assert np.max(np.abs(areas / areas[0] - 1.0)) < 1e-12


def _rho(state):
    return 4.0 * math.pi * state.conic_euler_characteristic / state.area


class TestAreaConservation:
    """面積守恆"""

    def test_single_step_is_second_order(self, perturbed_mesh_state):
        """ρ = 4πχ/A 時單步面積變化為 O(dt²)：dt 減半變化約為 1/4"""
        state = perturbed_mesh_state
        rho = _rho(state)
        dt = 0.25 * stable_dt(state)
        changes = [abs(flow_step_mesh(state, h, rho).area - state.area) / state.area
                   for h in (dt, 0.5 * dt, 0.25 * dt)]
        assert 3.0 < changes[0] / changes[1] < 5.0
        assert 3.0 < changes[1] / changes[2] < 5.0

    def test_rescale_to_area(self, perturbed_mesh_state):
        """整體縮放只改變尺度：面積符合，R·A 不變"""
        state = perturbed_mesh_state
        scaled = rescale_to_area(state, 2.5)
        assert scaled.area == pytest.approx(2.5, rel=1e-12)
        np.testing.assert_allclose(discrete_curvature(scaled) * 2.5,
                                   discrete_curvature(state) * state.area, rtol=1e-9)


class TestMeshEnergy:
    """網格能量 F 與耗散"""

    def test_gradient_is_angle_defect(self, perturbed_mesh_state):
        """∂F/∂φ_i = 8(2πβ_i - Σθ_i) = 4 R_i A_i"""
        from core.conformal_flow import mesh_geometry
        state = perturbed_mesh_state
        geometry = mesh_geometry(state)
        expected = 4.0 * discrete_curvature(state, geometry) * geometry.vertex_areas
        eps = 1e-5
        for vertex in (0, int(state.mesh.cone_vertices[0]), state.mesh.n_vertices - 1):
            bump = np.zeros(state.mesh.n_vertices)
            bump[vertex] = eps
            plus = energy_F(MeshFlowState(state.mesh, state.phi + bump))
            minus = energy_F(MeshFlowState(state.mesh, state.phi - bump))
            assert (plus - minus) / (2 * eps) == pytest.approx(expected[vertex], rel=1e-5, abs=1e-6)

    def test_zero_at_background(self, troyanov_mesh):
        assert energy_F(MeshFlowState.initial(troyanov_mesh)) == 0.0

    def test_nonincreasing_along_run(self, perturbed_mesh_state):
        trajectory = run_mesh_flow(perturbed_mesh_state, {'t_end': 0.3, 'check_every': 1})
        energies = trajectory.column('energy_F')
        assert np.all(np.diff(energies) <= 1e-10)
        assert energies[-1] < energies[0]

    def test_dissipation_matches_slope(self, perturbed_mesh_state):
        """有限差分 dF/dt 與 -4Σ(R-ρ)²A 的偏差隨 dt 減半而減半"""
        deviations = []
        for dt in (2e-3, 1e-3):
            trajectory = run_mesh_flow(perturbed_mesh_state,
                                       {'t_end': 0.02, 'dt': dt, 'check_every': 1})
            assert trajectory.termination == 't_end'
            deviations.append(energy_dissipation_check(trajectory))
        assert deviations[1] < 0.75 * deviations[0]
        assert dissipation(perturbed_mesh_state, _rho(perturbed_mesh_state)) < 0


class TestEquivariance:
    """重新編號與排程的一致性"""

    def test_relabel_commutes_with_step(self, perturbed_mesh_state):
        state = perturbed_mesh_state
        perm = np.random.default_rng(11).permutation(state.mesh.n_vertices)
        phi = np.empty_like(state.phi)
        phi[perm] = state.phi
        relabeled = MeshFlowState(state.mesh.relabel(perm), phi)
        np.testing.assert_allclose(discrete_curvature(relabeled)[perm], discrete_curvature(state),
                                   rtol=1e-12, atol=1e-12)
        rho = _rho(state)
        dt = 0.5 * stable_dt(state)
        np.testing.assert_allclose(flow_step_mesh(relabeled, dt, rho).phi[perm],
                                   flow_step_mesh(state, dt, rho).phi, rtol=1e-12, atol=1e-14)

    def test_constant_schedule_is_plain_flow(self, perturbed_mesh_state):
        """常數排程等於不改變錐角的流"""
        state = perturbed_mesh_state
        schedule = BetaSchedule.constant(state.mesh.cone_betas)
        dt = 0.5 * stable_dt(state)
        scheduled = angle_schedule_step(state, dt, 1.0, schedule)
        plain = flow_step_mesh(state, dt, 1.0)
        np.testing.assert_array_equal(scheduled.phi, plain.phi)
        assert scheduled.beta_current == plain.beta_current

    def test_schedule_without_cones(self, icosphere):
        """沒有標記頂點時排程不起作用"""
        rng = np.random.default_rng(5)
        state = MeshFlowState.initial(icosphere, 0.05 * rng.standard_normal(icosphere.n_vertices))
        schedule = BetaSchedule((0.0, 1.0), ((0.5,), (0.6,)))
        dt = 0.5 * stable_dt(state)
        np.testing.assert_array_equal(angle_schedule_step(state, dt, 1.0, schedule).phi,
                                      flow_step_mesh(state, dt, 1.0).phi)


class TestConcentrationMonitor:
    """集中監測"""

    def test_ball_radius_from_diameter(self, icosphere):
        phi = np.zeros(icosphere.n_vertices)
        phi[5] = 3.0
        state = MeshFlowState.initial(icosphere, phi)
        report = blowup_monitor(state, ball_fraction=0.1)
        assert report.ball_radius == pytest.approx(0.1 * surface_diameter(state), rel=1e-12)

    def test_diameter_is_largest_distance(self, perturbed_mesh_state):
        state = perturbed_mesh_state
        eccentricities = [np.max(metric_distances(state, v)) for v in range(state.mesh.n_vertices)]
        assert surface_diameter(state) == pytest.approx(max(eccentricities), rel=1e-12)

    def test_two_bumps_not_separated(self, icosphere):
        """兩個等高且相距很遠的尖峰不算單點集中"""
        phi = np.zeros(icosphere.n_vertices)
        phi[0] = phi[3] = 3.0
        report = blowup_monitor(MeshFlowState.initial(icosphere, phi), gap=1.0)
        assert report.phi_secondmax == 3.0
        assert not report.separated

    def test_limited_distances_emit_no_warning(self, torus):
        """limit 外的 inf 距離不觸發 RuntimeWarning"""
        with warnings.catch_warnings():
            warnings.simplefilter('error')
            distance = metric_distances(MeshFlowState.initial(torus), 0, limit=0.2)
        assert np.isinf(distance).any()


class TestNonTroyanovBlowup:
    """Troyanov 條件不成立時共形因子於一點爆破"""

    def _run(self, spec, resolution):
        from core.conic_mesh import build_preset_mesh
        mesh = build_preset_mesh(spec, resolution=resolution)
        trajectory = run_mesh_flow(MeshFlowState.initial(mesh),
                                   {'t_end': 40.0, 'phi_cap': 12.0, 'check_every': 10})
        return mesh, trajectory

    @pytest.mark.slow
    def test_single_point_blowup(self, nontroyanov_spec):
        coarse, trajectory = self._run(nontroyanov_spec, 1)
        assert trajectory.termination == 'blowup_cap'
        report = trajectory.reports['concentration']
        assert report.separated
        fractions = [c.area_fraction_in_ball for c in trajectory.reports['concentration_history']]
        tail = fractions[(3 * len(fractions)) // 4:]
        assert tail[-1] > tail[0]

        fine, refined = self._run(nontroyanov_spec, 2)
        assert refined.termination == 'blowup_cap'
        site = coarse.coordinates[report.argmax_vertex]
        refined_site = fine.coordinates[refined.reports['concentration'].argmax_vertex]
        assert np.linalg.norm(site - refined_site) <= np.max(coarse.lengths)
