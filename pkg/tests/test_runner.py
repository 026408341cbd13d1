"""
執行器測試：設定解析、快照、輸出與命令列
"""
import json

import numpy as np
import pytest
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from config import SNAPSHOT_HEADER
from core.diagnostics import harnack_check
from core.exceptions import (
    ConfigParseError,
    ExperimentError,
    MissingConfigKeysError,
    ParameterConflictError,
    SnapshotChecksumError,
    SnapshotVersionError,
    UnknownConfigKeyError,
    UnknownQuantityError,
)
from core.runner import (
    load_preset,
    parse_config,
    preset_names,
    read_snapshot,
    run_experiment,
    run_preset,
    run_sweep,
    snapshot_write,
)
from core.runner.reporting import emit_plot, emit_timeseries
from core.runner.snapshot import parse_snapshot, snapshot_text
from core.trajectory import Trajectory
from scripts.conicricci import main

TINY_MESH_CONFIG = """
[run]
kind = mesh
name = tiny-torus
seed = 3

[surface]
genus = 1

[numerics]
resolution = 1
t_end = {t_end}
dt = 0.001
perturbation = 0.05
check_every = 10
converge_tol = 1e-13

[output]
plots = log_residual
plot_format = html
"""


def tiny_mesh_config(t_end=0.05):
    return parse_config(TINY_MESH_CONFIG.format(t_end=t_end))


class TestParseConfig:
    """設定檔解析"""

    def test_all_presets_valid(self):
        """所有內建預設皆可解析"""
        names = preset_names()
        assert 'troyanov-3x0.5' in names
        for beta in ('0.4', '0.6', '0.75', '0.9'):
            assert f'heatkernel-beta-{beta}' in names
        for name in names:
            config = load_preset(name)
            assert config.name == name

    def test_defaults_filled(self):
        config = parse_config('[run]\nkind = classify\n[surface]\ngenus = 0\n')
        assert config.name == 'run'
        assert config.seed == 42
        assert config.numerics['dt'] == 0.01
        assert config.output['plot_format'] == 'svg'
        assert config.spec.k == 0

    def test_beta_alias(self):
        """單一錐點可寫作 beta"""
        config = parse_config('[run]\nkind = soliton\n[surface]\ngenus = 0\nbeta = 0.7\n')
        assert config.spec.betas == (0.7,)

    def test_beta_out_of_range(self):
        """β = 1.2 以 ConfigParseError 回報所在行"""
        text = '[run]\nkind = classify\n[surface]\ngenus = 0\nbeta = 1.2\n'
        with pytest.raises(ConfigParseError) as excinfo:
            parse_config(text)
        assert excinfo.value.line_no == 5

    def test_missing_required(self):
        """空白設定缺少 run.kind 與 surface.genus"""
        with pytest.raises(MissingConfigKeysError) as excinfo:
            parse_config('# empty\n')
        assert excinfo.value.missing == ['run.kind', 'surface.genus']

    def test_unknown_key(self):
        text = '[run]\nkind = mesh\n[surface]\ngenus = 1\n[numerics]\nfoo = 1\n'
        with pytest.raises(UnknownConfigKeyError) as excinfo:
            parse_config(text)
        assert excinfo.value.key == 'foo'
        assert excinfo.value.line_no == 6

    def test_key_outside_section(self):
        with pytest.raises(ConfigParseError):
            parse_config('kind = mesh\n')

    def test_duplicate_key(self):
        with pytest.raises(ConfigParseError):
            parse_config('[run]\nkind = mesh\nkind = classify\n[surface]\ngenus = 0\n')

    def test_schedule(self):
        """排程列為 t = β1, β2, ..."""
        text = ('[run]\nkind = mesh\n[surface]\ngenus = 0\nbetas = 0.5, 0.5, 0.5\n'
                '[schedule]\n0 = 0.5, 0.5, 0.5\n2 = 0.6, 0.6, 0.6\n')
        config = parse_config(text)
        assert config.schedule.times == (0.0, 2.0)
        assert config.schedule.betas_at(1.0) == pytest.approx((0.55, 0.55, 0.55))

    def test_schedule_width(self):
        """排程每列的錐角數必須等於錐點數"""
        text = ('[run]\nkind = mesh\n[surface]\ngenus = 0\nbetas = 0.5, 0.5, 0.5\n'
                '[schedule]\n0 = 0.5, 0.5\n')
        with pytest.raises(ConfigParseError):
            parse_config(text)

    def test_override_conflict(self):
        """覆寫後 dt_min > dt 不合法"""
        config = tiny_mesh_config()
        with pytest.raises(ParameterConflictError):
            config.with_overrides(dt=1e-10)


class TestSnapshot:
    """快照讀寫"""

    def test_rotational_round_trip(self, uneven_football_state):
        """浮點數逐位元還原"""
        text = snapshot_text(uneven_football_state, {'rho': 0.1 + 0.2, 'dt_next': 1e-3})
        snapshot = parse_snapshot(text)
        state = snapshot.state
        assert snapshot.kind == 'rotational'
        assert state.w.tobytes() == uneven_football_state.w.tobytes()
        assert state.x.tobytes() == uneven_football_state.x.tobytes()
        assert state.beta_tips == uneven_football_state.beta_tips
        assert snapshot.metadata['rho'] == 0.1 + 0.2

    def test_mesh_round_trip(self, perturbed_mesh_state, tmp_path):
        path = snapshot_write(perturbed_mesh_state, tmp_path / 'state.snapshot', {'initial_area': 2.5})
        snapshot = read_snapshot(path)
        assert snapshot.kind == 'mesh'
        assert snapshot.state.phi.tobytes() == perturbed_mesh_state.phi.tobytes()
        assert snapshot.state.beta_current == perturbed_mesh_state.beta_current
        assert snapshot.metadata['initial_area'] == 2.5

    def test_truncated(self, uneven_football_state):
        """去掉校驗和行視為截斷"""
        text = snapshot_text(uneven_football_state)
        truncated = '\n'.join(text.rstrip('\n').split('\n')[:-1]) + '\n'
        with pytest.raises(SnapshotChecksumError):
            parse_snapshot(truncated)

    def test_tampered(self, uneven_football_state):
        text = snapshot_text(uneven_football_state).replace('kind rotational', 'kind  rotational')
        with pytest.raises(SnapshotChecksumError):
            parse_snapshot(text)

    def test_wrong_version(self, uneven_football_state):
        text = snapshot_text(uneven_football_state).replace(SNAPSHOT_HEADER, 'CONICRICCI-SNAPSHOT v0')
        with pytest.raises(SnapshotVersionError):
            parse_snapshot(text)


class TestReporting:
    """時間序列與圖表"""

    def test_empty_timeseries(self, tmp_path):
        """空軌跡只寫標頭"""
        path = emit_timeseries(Trajectory('mesh'), tmp_path / 'empty.csv')
        lines = path.read_text(encoding='utf-8').splitlines()
        assert len(lines) == 1
        assert lines[0].startswith('t,area,rho')

    def test_unknown_quantity(self, tmp_path):
        with pytest.raises(UnknownQuantityError):
            emit_plot(Trajectory('mesh'), 'temperature', tmp_path / 'x.html')


class TestRunExperiment:
    """實驗執行"""

    def test_classify(self, run_dir):
        result = run_experiment(load_preset('classify-nontroyanov'), run_dir)
        assert result.exit_code == 0
        assert not result.report['troyanov_holds']
        assert result.report['limit'] == 'blowup_expected'
        assert result.report['rho'] == pytest.approx(1.0)
        summary = json.loads((run_dir / 'summary.json').read_text(encoding='utf-8'))
        assert summary['report']['chi_conic'] == pytest.approx(1.0)

    def test_soliton_equal_angles(self, run_dir):
        """等角打靶回到懸垂度量"""
        config = parse_config('[run]\nkind = soliton\n[surface]\ngenus = 0\nbetas = 0.6, 0.6\n'
                              '[numerics]\nrho = 2.0\n')
        result = run_experiment(config, run_dir)
        assert result.report['C'] == 0.0
        assert result.report['suspension_error'] < 1e-8
        assert result.artifacts['profile'].exists()

    def test_mesh_run_artifacts(self, run_dir):
        result = run_experiment(tiny_mesh_config(), run_dir)
        assert result.termination == 't_end'
        assert result.exit_code == 2
        for name in ('timeseries', 'snapshot', 'plot_log_residual', 'summary'):
            assert result.artifacts[name].exists()
        assert result.report['gb_residual_max'] < 1e-10

    def test_deterministic_outputs(self, tmp_path):
        """同樣的設定與種子產生相同的時間序列與快照位元組"""
        first = run_experiment(tiny_mesh_config(), tmp_path / 'a')
        second = run_experiment(tiny_mesh_config(), tmp_path / 'b')
        for name in ('timeseries', 'snapshot'):
            assert first.artifacts[name].read_bytes() == second.artifacts[name].read_bytes()

    def test_restart_matches_single_run(self, tmp_path):
        """自中途快照接續的最終狀態與一次跑完相同"""
        full = run_experiment(tiny_mesh_config(t_end=0.1), tmp_path / 'full')
        half = run_experiment(tiny_mesh_config(t_end=0.05), tmp_path / 'half')
        resumed = run_experiment(tiny_mesh_config(t_end=0.1), tmp_path / 'resumed',
                                 restart=half.artifacts['snapshot'])
        assert resumed.trajectory.final_state.t == full.trajectory.final_state.t
        np.testing.assert_array_equal(resumed.trajectory.final_state.phi,
                                      full.trajectory.final_state.phi)
        assert resumed.trajectory.rho == full.trajectory.rho

    def test_restart_kind_mismatch(self, tmp_path, uneven_football_state):
        path = snapshot_write(uneven_football_state, tmp_path / 'rot.snapshot')
        with pytest.raises(ExperimentError):
            run_experiment(tiny_mesh_config(), tmp_path / 'run', restart=path)

    def test_sweep(self, tmp_path):
        frame = run_sweep(['classify-nontroyanov'], tmp_path)
        assert list(frame['exit_code']) == [0]
        assert (tmp_path / 'classify-nontroyanov' / 'summary.json').exists()

    @pytest.mark.slow
    def test_heatkernel(self, run_dir):
        """熱核實驗寫出核值表並回報縮放律殘差"""
        config = parse_config('[run]\nkind = heatkernel\nseed = 7\n[surface]\ngenus = 0\nbetas = 0.75\n'
                              '[numerics]\nradial_nodes = 120\nangular_nodes = 16\nkernel_samples = 4\n')
        result = run_experiment(config, run_dir)
        assert result.report['kernel_min'] > 0
        assert result.report['scaling_residual'] < 1e-8
        assert result.artifacts['kernel_table'].exists()
        assert result.artifacts['snapshot'].exists()


@pytest.mark.slow
class TestPresetLimits:
    """內建預設的長時間行為"""

    def test_equal_angle_football(self, tmp_path):
        """等角足球收斂到 β sin s，面積保持"""
        result = run_preset('football-equal-0.6', tmp_path, dx=0.02)
        assert result.termination == 'converged'
        assert result.trajectory.limit == 'constant_curvature'
        assert result.report['suspension_distance'] < 1e-3
        assert result.report['relative_area_drift'] < 1e-9

    @pytest.mark.parametrize('name', ['teardrop-0.7', 'football-0.3-0.9'])
    def test_soliton_presets(self, tmp_path, name):
        """淚滴與不等角足球收斂到與打靶解一致的孤立子"""
        result = run_preset(name, tmp_path)
        assert result.termination == 'converged'
        assert result.trajectory.limit == 'soliton'
        assert result.report['relative_area_drift'] < 1e-9
        assert result.report['residual_sup'] < 2.0 * result.trajectory.rho
        assert result.report['soliton_distance'] < 1e-2
        assert result.report['rmin_track'].violations == 0
        harnack = result.report['harnack']
        assert harnack.applicable
        assert harnack.violations == 0

    @pytest.mark.parametrize('name', ['troyanov-3x0.5', 'genus2-smooth', 'flat-torus-perturbation'])
    def test_troyanov_presets(self, tmp_path, name):
        """Troyanov 條件成立時指數收斂到常曲率"""
        result = run_preset(name, tmp_path)
        rho = result.trajectory.rho
        assert result.report['residual_sup'] / max(1.0, abs(rho)) < 1e-2
        assert result.report['convergence_slope'] < 0
        assert result.report['convergence_r_squared'] > 0.99
        assert result.report['relative_area_drift'] < 1e-9
        assert result.report['gb_residual_max'] < 1e-10

    def test_three_point_harnack(self, tmp_path):
        """三錐點球面的最終狀態沒有 Harnack 違反"""
        result = run_preset('troyanov-3x0.5', tmp_path)
        report = harnack_check(result.trajectory.final_state)
        assert report.applicable
        assert report.violations == 0


@pytest.mark.integration
@pytest.mark.usefixtures('fresh_logging')
class TestCommandLine:
    """命令列工具"""

    def test_preset_list(self, capsys):
        assert main(['preset', 'list']) == 0
        assert 'troyanov-3x0.5' in capsys.readouterr().out.split()

    def test_classify_command(self, run_dir, capsys):
        code = main(['classify', '--genus', '0', '--betas', '0.5,0.5,0.5', '--out-dir', str(run_dir)])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload['report']['troyanov_holds'] is True

    def test_usage_error(self, run_dir):
        """不合法的 β 以結束碼 1 回報"""
        assert main(['classify', '--betas', '1.5', '--out-dir', str(run_dir)]) == 1
