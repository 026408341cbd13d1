"""
實驗執行器

依 RunConfig.kind 分派到 cone_geometry / rotational_flow / conformal_flow / model_cone，
寫出時間序列、最終快照、圖表與摘要 JSON，並以結束原因決定程序結束碼。
"""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import EXIT_CODES, OUTPUT_DIR, PRESET_DIR
from ..cone_geometry import (
    ConicSurfaceSpec,
    classify_limit,
    conic_euler_characteristic,
    target_rho,
    troyanov_check,
    troyanov_equivalent_bound,
    troyanov_margin,
)
from ..conformal_flow import MeshFlowState, run_mesh_flow
from ..conic_mesh import build_preset_mesh
from ..diagnostics import (
    compute_record,
    convergence_rate,
    energy_dissipation_check,
    harnack_check,
    noncollapsing_check,
    residual_sup,
    rmin_rmax_track,
    soliton_residual,
)
from ..exceptions import (
    ConicRicciBaseException,
    ExperimentError,
    ParameterValidationError,
    RunIOException,
    ShootingFailureError,
)
from ..model_cone import (
    HeatKernelConfig,
    ModelCone,
    PolarField,
    expansion_fit,
    geometric_radii,
    heat_apply,
    heat_kernel_eval,
    leading_exponent,
    scaling_residual,
)
from ..rotational_flow import (
    RotationalState,
    initial_profile,
    run_rotational,
    soliton_distance,
    soliton_shoot,
    suspension_distance,
)
from .reporting import emit_plot, emit_timeseries, write_summary
from .run_config import RunConfig, load_config
from .snapshot import read_snapshot, snapshot_write
from ..logging_config import LogContext, get_logger

logger = get_logger(__name__)

FLOW_KINDS = ('rotational', 'mesh')


@dataclass
class ExperimentResult:
    """
    單次實驗結果

    Attributes:
    -----------
    trajectory : Trajectory, optional
        流類實驗才有
    report : dict
        實驗專屬的報告 (分類結果、收斂速率、集中報告等)
    artifacts : dict
        名稱 -> 寫出的檔案路徑
    """
    name: str
    kind: str
    exit_code: int
    termination: Optional[str] = None
    trajectory: Any = None
    report: Dict[str, Any] = field(default_factory=dict)
    artifacts: Dict[str, Path] = field(default_factory=dict)
    elapsed: float = 0.0

    def summary(self) -> Dict[str, Any]:
        summary = {
            'name': self.name,
            'kind': self.kind,
            'exit_code': self.exit_code,
            'termination': self.termination,
            'elapsed_seconds': round(self.elapsed, 3),
            'report': self.report,
            'artifacts': {k: str(v) for k, v in self.artifacts.items()},
        }
        if self.trajectory is not None:
            summary['trajectory'] = self.trajectory.summary()
        return summary


# ============== 預設目錄 ==============

def preset_names() -> List[str]:
    """可用的預設名稱 (data/presets/*.conf)"""
    return sorted(path.stem for path in PRESET_DIR.glob('*.conf'))


def preset_path(name: str) -> Path:
    path = PRESET_DIR / f'{name}.conf'
    if not path.exists():
        raise ExperimentError(name, f'找不到預設，可用: {preset_names()}')
    return path


def load_preset(name: str) -> RunConfig:
    """讀取並解析預設設定"""
    return load_config(preset_path(name))


# ============== 初始狀態 ==============

def rotational_betas(spec: ConicSurfaceSpec) -> Tuple[float, float]:
    """
    將錐面資料對應到旋轉對稱的兩端

    無錐點為圓球 (1, 1)；一個錐點為淚滴 (β, 1)；兩個錐點為足球 (β₋, β₊)。
    """
    if spec.genus != 0 or spec.k > 2:
        raise ParameterValidationError('surface', (spec.genus, spec.k),
                                       '旋轉對稱流僅支援虧格 0 且至多兩個錐點')
    if spec.k == 0:
        return 1.0, 1.0
    if spec.k == 1:
        return spec.betas[0], 1.0
    return spec.betas[0], spec.betas[1]


def build_rotational_initial(config: RunConfig) -> RotationalState:
    """依設定建立旋轉對稱初始剖面；area > 0 時縮放至該面積"""
    numerics = config.numerics
    beta_minus, beta_plus = rotational_betas(config.spec)
    kwargs = dict(perturbation=numerics['perturbation'], dx=numerics['dx'],
                  tip_radius=numerics['tip_radius'])
    state = initial_profile(beta_minus, beta_plus, **kwargs)
    if numerics['area'] > 0:
        scale = math.sqrt(numerics['area'] / state.area)
        state = initial_profile(beta_minus, beta_plus, scale=scale, **kwargs)
    return state


def build_mesh_initial(config: RunConfig) -> MeshFlowState:
    """
    依設定建立網格初始狀態

    φ = perturbation × 標準常態雜訊 (以 seed 固定)；area > 0 時整體平移 φ 使面積相符。
    """
    numerics = config.numerics
    mesh = build_preset_mesh(config.spec, numerics['resolution'],
                             numerics['grading_rings'], numerics['grading_rate'])
    rng = np.random.default_rng(config.seed)
    phi = numerics['perturbation'] * rng.standard_normal(mesh.n_vertices)
    state = MeshFlowState.initial(mesh, phi)
    if numerics['area'] > 0:
        state = MeshFlowState.initial(mesh, phi + 0.5 * math.log(numerics['area'] / state.area))
    return state


def _rotational_options(numerics: Dict[str, Any]) -> Dict[str, Any]:
    keys = ('t_end', 'dt', 'dt_min', 'scheme', 'recenter', 'check_every',
            'converge_tol', 'stationary_tol', 'area_tol')
    options = {key: numerics[key] for key in keys}
    options['rk4_cfl'] = numerics['cfl']
    return options


def _mesh_options(numerics: Dict[str, Any]) -> Dict[str, Any]:
    keys = ('t_end', 'dt', 'dt_min', 'cfl', 'max_dphi', 'phi_cap', 'gap',
            'ball_fraction', 'check_every', 'converge_tol')
    return {key: numerics[key] for key in keys}


# ============== 各類實驗 ==============

def classify_report(spec: ConicSurfaceSpec, area: float = 0.0) -> Dict[str, Any]:
    """錐面資料的分類報告"""
    troyanov = troyanov_check(spec)
    limit = classify_limit(spec)
    report = {
        'genus': spec.genus,
        'betas': list(spec.betas),
        'labels': list(spec.labels),
        'chi_conic': conic_euler_characteristic(spec),
        'sign_class': troyanov.sign_class,
        'troyanov_holds': troyanov.holds,
        'failing_indices': list(troyanov.failing_indices),
        'troyanov_margin': troyanov_margin(spec),
        'equivalent_bound': troyanov_equivalent_bound(spec),
        'limit': limit.kind,
        'notes': limit.notes,
    }
    if area > 0:
        report['rho'] = target_rho(spec, area)
    return report


def _flow_common_report(trajectory) -> Dict[str, Any]:
    final = trajectory.final_record
    slope, r_squared = convergence_rate(trajectory)
    areas = trajectory.column('area')
    monotone = rmin_rmax_track(trajectory)
    return {
        'termination': trajectory.termination,
        'limit_found': trajectory.limit,
        'residual_sup': residual_sup(final),
        'convergence_slope': slope,
        'convergence_r_squared': r_squared,
        'relative_area_drift': float(np.max(np.abs(areas - areas[0])) / areas[0]),
        'gb_residual_max': float(np.nanmax(trajectory.column('gauss_bonnet_residual'))),
        'energy_dissipation_deviation': energy_dissipation_check(trajectory),
        'rmin_track': monotone,
    }


def _rotational_report(trajectory, spec: ConicSurfaceSpec, seed: int) -> Dict[str, Any]:
    state = trajectory.final_state
    report = _flow_common_report(trajectory)
    report['predicted_limit'] = classify_limit(spec).kind
    report['harnack'] = harnack_check(state, seed=seed)
    report['noncollapsing'] = noncollapsing_check(state, seed=seed)
    if abs(state.beta_minus - state.beta_plus) <= 1e-12:
        report['suspension_distance'] = suspension_distance(state)
    else:
        mu_norm, x_norm = soliton_residual(state)
        report['mu_norm'] = mu_norm
        report['X_norm'] = x_norm
        try:
            soliton = soliton_shoot(state.beta_minus, state.beta_plus, trajectory.rho)
            report['soliton_C'] = soliton.C
            report['soliton_distance'] = soliton_distance(state, soliton)
        except ShootingFailureError as exc:
            logger.warning(f'孤立子比較略過: {exc}')
            report['soliton_error'] = str(exc)
    return report


def _mesh_report(trajectory, spec: ConicSurfaceSpec) -> Dict[str, Any]:
    report = _flow_common_report(trajectory)
    report['predicted_limit'] = classify_limit(spec).kind
    report['concentration'] = trajectory.reports.get('concentration')
    history = trajectory.reports.get('concentration_history', [])
    report['area_fraction_history'] = [c.area_fraction_in_ball for c in history]
    report['argmax_history'] = [c.argmax_vertex for c in history]
    report['initial_area'] = trajectory.reports.get('initial_area')
    return report


def run_soliton(config: RunConfig) -> Tuple[Dict[str, Any], pd.DataFrame]:
    """打靶求孤立子剖面；等角時附上與懸垂度量的距離"""
    beta_tip, beta_far = rotational_betas(config.spec)
    rho = config.numerics['rho']
    soliton = soliton_shoot(beta_tip, beta_far, rho)
    report = {
        'beta_tip': beta_tip,
        'beta_far': beta_far,
        'rho': rho,
        'C': soliton.C,
        'length': soliton.length,
        'area': soliton.area,
        'mu_norm': soliton.mu_norm,
        'X_norm': soliton.X_norm,
    }
    if soliton.C == 0.0:
        a = math.sqrt(2.0 / rho)
        exact = beta_tip * a * np.sin(soliton.s / a)
        report['suspension_error'] = float(np.max(np.abs(soliton.h - exact)))
    profile = pd.DataFrame({'s': soliton.s, 'h': soliton.h, 'f': soliton.f})
    return report, profile


def _generic_bump(r: np.ndarray, y: np.ndarray) -> np.ndarray:
    """偏離錐點的光滑凸塊，同時含角向模態 0 與 1"""
    return np.exp(-(r * r - r * np.cos(y) + 0.25) / 0.1)


def run_heatkernel(config: RunConfig) -> Tuple[Dict[str, Any], pd.DataFrame, PolarField]:
    """
    模型錐熱核實驗

    輸出取樣點上的核值表、λ = 2 縮放律殘差、質量守恆，以及熱流解的錐點展開指數。
    β 取第一個錐點，無錐點時為 β = 1 的平面校準。
    """
    numerics = config.numerics
    beta = config.spec.betas[0] if config.spec.k else 1.0
    cone = ModelCone(beta, r_max=4.0)
    cfg = HeatKernelConfig(numerics['max_angular_mode'], numerics['series_tolerance'])
    t = numerics['heat_time']

    rng = np.random.default_rng(config.seed)
    n = numerics['kernel_samples']
    samples = np.column_stack([
        np.full(n, t),
        rng.uniform(0.05, 1.0, n),
        rng.uniform(0.0, 2.0 * math.pi, n),
        rng.uniform(0.05, 1.0, n),
        rng.uniform(0.0, 2.0 * math.pi, n),
    ])
    values = [heat_kernel_eval(cone, cfg, *row) for row in samples]
    table = pd.DataFrame(samples, columns=['t', 'r', 'y', 'r_prime', 'y_prime'])
    table['value'] = values

    radii = geometric_radii(cone.r_max, numerics['radial_nodes'])
    initial = PolarField.from_function(radii, numerics['angular_nodes'], _generic_bump)
    solution = heat_apply(cone, cfg, t, initial)
    fit = expansion_fit(solution, cone)
    expected = 1.0 / beta if beta > 0.5 else 2.0

    report = {
        'beta': beta,
        'heat_time': t,
        'kernel_min': float(np.min(values)),
        'scaling_residual': scaling_residual(cone, cfg, 2.0, [tuple(row) for row in samples]),
        'mass_in': initial.mass(beta),
        'mass_out': solution.mass(beta),
        'expansion': fit._asdict(),
        'leading_exponent': leading_exponent(fit),
        'expected_exponent': expected,
    }
    return report, table, solution


# ============== 執行 ==============

def _resolve_out_dir(config: RunConfig, out_dir: Optional[Union[str, Path]]) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    if config.output['out_dir']:
        return Path(config.output['out_dir'])
    return OUTPUT_DIR / config.name


def _run_flow(config: RunConfig, restart: Optional[Union[str, Path]]):
    """執行流並回傳 (軌跡, 報告, 快照中繼資料)"""
    rho = None
    options = (_rotational_options if config.kind == 'rotational' else _mesh_options)(config.numerics)

    if restart is not None:
        snapshot = read_snapshot(restart)
        if snapshot.kind != config.kind:
            raise ExperimentError(config.name, f'快照類型 {snapshot.kind} 與實驗類型 {config.kind} 不符')
        initial = snapshot.state
        rho = snapshot.metadata.get('rho')
        if 'dt_next' in snapshot.metadata:
            options['dt_current'] = snapshot.metadata['dt_next']
        if 'initial_area' in snapshot.metadata:
            options['initial_area'] = snapshot.metadata['initial_area']
        logger.info(f'自快照接續: {restart} (t={initial.t:.6g})')
    elif config.kind == 'rotational':
        initial = build_rotational_initial(config)
    else:
        initial = build_mesh_initial(config)

    if config.kind == 'rotational':
        trajectory = run_rotational(initial, options, rho=rho)
        report = _rotational_report(trajectory, config.spec, config.seed)
        metadata = {'rho': trajectory.rho, 'dt_next': trajectory.reports['dt_next'],
                    'initial_area': trajectory.reports['initial_area']}
    else:
        trajectory = run_mesh_flow(initial, options, schedule=config.schedule)
        report = _mesh_report(trajectory, config.spec)
        metadata = {'rho': trajectory.rho, 'initial_area': trajectory.reports['initial_area']}
    return trajectory, report, metadata


def run_experiment(config: RunConfig, out_dir: Union[str, Path] = None,
                   restart: Union[str, Path] = None) -> ExperimentResult:
    """
    執行一個實驗並寫出所有產物

    Parameters:
    -----------
    config : RunConfig
    out_dir : str or Path, optional
        執行資料夾；預設為 [output] out_dir 或 runs/<name>
    restart : str or Path, optional
        接續的快照 (僅 rotational / mesh)

    Returns:
    --------
    ExperimentResult

    Raises:
    -------
    ExperimentError
        底層模組錯誤，附執行名稱
    """
    directory = _resolve_out_dir(config, out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    result = ExperimentResult(config.name, config.kind, EXIT_CODES['converged'])

    try:
        with LogContext(logger, f'實驗 {config.name} ({config.kind})') as context:
            if restart is not None and config.kind not in FLOW_KINDS:
                raise ExperimentError(config.name, f'{config.kind} 實驗不支援快照接續')

            if config.kind == 'classify':
                result.report = classify_report(config.spec, config.numerics['area'])

            elif config.kind == 'soliton':
                result.report, profile = run_soliton(config)
                path = directory / 'soliton_profile.csv'
                profile.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
                result.artifacts['profile'] = path

            elif config.kind == 'heatkernel':
                result.report, table, solution = run_heatkernel(config)
                path = directory / 'heatkernel.csv'
                table.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
                result.artifacts['kernel_table'] = path
                if config.output['snapshot']:
                    result.artifacts['snapshot'] = snapshot_write(
                        solution, directory / 'final.snapshot',
                        {'beta': result.report['beta'], 'heat_time': result.report['heat_time']})

            else:
                trajectory, result.report, metadata = _run_flow(config, restart)
                result.trajectory = trajectory
                result.termination = trajectory.termination
                result.exit_code = trajectory.exit_code
                result.artifacts['timeseries'] = emit_timeseries(trajectory, directory / 'timeseries.csv')
                if config.output['snapshot']:
                    result.artifacts['snapshot'] = snapshot_write(
                        trajectory.final_state, directory / 'final.snapshot', metadata)
                for quantity in config.output['plots']:
                    name = f'plot_{quantity}'
                    path = directory / f'{quantity}.{config.output["plot_format"]}'
                    result.artifacts[name] = emit_plot(trajectory, quantity, path)

    except RunIOException:
        raise
    except ConicRicciBaseException as exc:
        raise ExperimentError(config.name, str(exc)) from exc

    result.elapsed = context.elapsed
    result.artifacts['summary'] = directory / 'summary.json'
    write_summary(result.summary(), result.artifacts['summary'])
    return result


def run_preset(name: str, out_root: Union[str, Path] = None, **overrides) -> ExperimentResult:
    """依預設名稱執行；每個預設寫入各自的執行資料夾"""
    config = load_preset(name).with_overrides(**overrides)
    out_dir = Path(out_root) / name if out_root is not None else None
    return run_experiment(config, out_dir)


def _sweep_worker(args) -> Dict[str, Any]:
    name, out_root, overrides = args
    try:
        result = run_preset(name, out_root, **overrides)
        return {'name': name, 'exit_code': result.exit_code, 'termination': result.termination,
                'elapsed': result.elapsed, 'error': None}
    except ConicRicciBaseException as exc:
        return {'name': name, 'exit_code': EXIT_CODES['usage_error'], 'termination': None,
                'elapsed': float('nan'), 'error': str(exc)}


def run_sweep(names: Sequence[str], out_root: Union[str, Path],
              max_workers: int = 1, **overrides) -> pd.DataFrame:
    """
    執行多個預設

    各執行寫入 out_root/<name>，彼此不共用輸出檔，因此可以平行。

    Returns:
    --------
    pd.DataFrame
        每個預設一列 (name, exit_code, termination, elapsed, error)
    """
    jobs = [(name, str(out_root), overrides) for name in names]
    logger.info(f'開始批次執行: {len(jobs)} 個預設 (workers={max_workers})')
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            rows = list(pool.map(_sweep_worker, jobs))
    else:
        rows = []
        for i, job in enumerate(jobs):
            rows.append(_sweep_worker(job))
            logger.info(f'進度: {i + 1}/{len(jobs)} ({job[0]})')
    return pd.DataFrame(rows, columns=['name', 'exit_code', 'termination', 'elapsed', 'error'])


# ============== 快照診斷 ==============

def diagnose_snapshot(path: Union[str, Path], seed: int = None) -> Dict[str, Any]:
    """
    對任一快照計算診斷量

    流狀態: 完整診斷紀錄、Harnack 與非塌縮檢查 (1-D 另含孤立子殘差)；
    極座標場: 錐點展開擬合 (β 取自快照中繼資料，預設 1)。
    """
    snapshot = read_snapshot(path)
    state = snapshot.state
    report: Dict[str, Any] = {'kind': snapshot.kind, 'metadata': snapshot.metadata}

    if snapshot.kind == 'polar':
        beta = float(snapshot.metadata.get('beta', 1.0))
        fit = expansion_fit(state, ModelCone(beta, r_max=float(state.radii[-1])))
        report['expansion'] = fit._asdict()
        report['leading_exponent'] = leading_exponent(fit)
        return report

    if 'rho' in snapshot.metadata:
        rho = float(snapshot.metadata['rho'])
    elif isinstance(state, RotationalState):
        rho = 4.0 * math.pi * (state.beta_minus + state.beta_plus) / state.area
    else:
        rho = 4.0 * math.pi * state.conic_euler_characteristic / state.area
    report['record'] = compute_record(state, rho)
    report['harnack'] = harnack_check(state, seed=seed)
    report['noncollapsing'] = noncollapsing_check(state, seed=seed)
    return report
