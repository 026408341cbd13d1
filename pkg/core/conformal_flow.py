"""
三角網格上的離散共形正規化 Ricci 流

每個頂點有共形因子 φ_i，目前邊長 l_ij = exp((φ_i + φ_j)/2)·l⁰_ij，
流為 dφ_i/dt = ρ - R_i。標記頂點的曲率相對於奇異質量 2π(1-β_j) 計算，
角度排程只改變這個目標值。
"""
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.csgraph import dijkstra

from config import MESH_DEFAULTS
from .conic_mesh import (
    ConicMesh,
    angle_sums,
    conformal_vertex_areas,
    corner_angles,
    cotangent_weights,
    edge_graph,
    targets_array,
    triangle_areas,
    triangle_violations,
)
from .exceptions import (
    DegenerateStateError,
    ParameterRangeError,
    ParameterValidationError,
    StepFailureError,
    StepRejectedError,
    TriangleInequalityError,
)
from .validators import ParameterValidator, validate_betas
from .logging_config import get_logger, LogContext, log_step_rejection, log_run_result

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class MeshFlowState:
    """
    網格流狀態

    Attributes:
    -----------
    mesh : ConicMesh
    phi : np.ndarray
        每個頂點的共形因子 (邊長因子 e^{(φ_i+φ_j)/2}，g = e^{2φ} g₀)
    t : float
    beta_current : tuple of float
        標記頂點目前的目標錐角 (角度排程時隨時間變化)
    """
    mesh: ConicMesh
    phi: np.ndarray
    t: float = 0.0
    beta_current: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.shape != (self.mesh.n_vertices,):
            raise ParameterValidationError('phi', phi.shape, f'形狀必須為 ({self.mesh.n_vertices},)')
        if not np.all(np.isfinite(phi)):
            raise ParameterValidationError('phi', 'non-finite', '共形因子含非有限值')
        phi.setflags(write=False)
        object.__setattr__(self, 'phi', phi)
        betas = self.mesh.cone_betas if self.beta_current is None else tuple(float(b) for b in self.beta_current)
        if len(betas) != len(self.mesh.cone_vertices):
            raise ParameterValidationError('beta_current', betas, '長度必須等於錐點數')
        object.__setattr__(self, 'beta_current', betas)

    @classmethod
    def initial(cls, mesh: ConicMesh, phi: np.ndarray = None) -> 'MeshFlowState':
        return cls(mesh, np.zeros(mesh.n_vertices) if phi is None else phi, 0.0)

    @property
    def conic_euler_characteristic(self) -> float:
        return self.mesh.euler_characteristic + math.fsum(b - 1.0 for b in self.beta_current)

    @property
    def area(self) -> float:
        return float(np.sum(mesh_geometry(self).face_areas))


class MeshGeometry(NamedTuple):
    """目前度量下的網格幾何量"""
    corner_lengths: np.ndarray
    angles: np.ndarray
    face_areas: np.ndarray
    vertex_areas: np.ndarray
    angle_sums: np.ndarray


@dataclass(frozen=True)
class ConcentrationReport:
    """共形因子集中的監測結果"""
    argmax_vertex: int
    phi_max: float
    phi_secondmax: float
    area_fraction_in_ball: float
    separated: bool
    ball_radius: float
    t: float = 0.0


@dataclass(frozen=True)
class BetaSchedule:
    """
    標記頂點錐角的分段線性排程

    Attributes:
    -----------
    times : tuple of float
        遞增的節點時間
    values : tuple of tuple
        每個節點時間的 (β_1, ..., β_k)；超出範圍時取端點值
    """
    times: Tuple[float, ...]
    values: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        if len(self.times) == 0 or len(self.times) != len(self.values):
            raise ParameterValidationError('schedule', len(self.times), '時間與錐角列數必須相同且非空')
        if np.any(np.diff(self.times) <= 0):
            raise ParameterValidationError('schedule', self.times, '時間必須嚴格遞增')
        widths = {len(v) for v in self.values}
        if len(widths) != 1:
            raise ParameterValidationError('schedule', sorted(widths), '每列錐角數必須一致')
        for row in self.values:
            validate_betas(row, 'schedule')

    @classmethod
    def constant(cls, betas: Sequence[float]) -> 'BetaSchedule':
        return cls((0.0,), (tuple(betas),))

    def betas_at(self, t: float) -> Tuple[float, ...]:
        table = np.asarray(self.values, dtype=float)
        if len(self.times) == 1:
            return tuple(float(b) for b in table[0])
        return tuple(float(np.interp(t, self.times, table[:, j])) for j in range(table.shape[1]))


# ============== 幾何與曲率 ==============

def face_lengths(mesh: ConicMesh, phi: np.ndarray) -> np.ndarray:
    """目前邊長 (F, 3)：每個角對邊 l = exp((φ_a + φ_b)/2) l⁰"""
    a = phi[mesh.faces[:, [1, 2, 0]]]
    b = phi[mesh.faces[:, [2, 0, 1]]]
    return mesh.lengths[mesh.face_edges] * np.exp(0.5 * (a + b))


def mesh_geometry(state: MeshFlowState) -> MeshGeometry:
    """
    Raises:
    -------
    TriangleInequalityError
        目前邊長不構成三角形
    """
    lengths = face_lengths(state.mesh, state.phi)
    bad = triangle_violations(lengths)
    if bad.size:
        raise TriangleInequalityError(int(bad[0]), lengths[bad[0]])
    angles = corner_angles(lengths)
    areas = triangle_areas(lengths)
    return MeshGeometry(
        corner_lengths=lengths,
        angles=angles,
        face_areas=areas,
        vertex_areas=conformal_vertex_areas(state.mesh, lengths, angles),
        angle_sums=angle_sums(state.mesh, angles),
    )


def vertex_targets(state: MeshFlowState) -> np.ndarray:
    return targets_array(state.mesh, state.beta_current)


def discrete_curvature(state: MeshFlowState, geometry: MeshGeometry = None) -> np.ndarray:
    """
    R_i = 2(2πβ_i - Σθ_i) / A_i，未標記頂點 β_i = 1

    A_i 為共形頂點面積 ½∂A/∂φ_i，因此 Σ A_i R_i/2 = Σ K_i 且 dA/dt = 2ρ(A - A(0))。
    因子 2 對應 R = 2K。
    """
    geometry = mesh_geometry(state) if geometry is None else geometry
    defect = 2.0 * math.pi * vertex_targets(state) - geometry.angle_sums
    return 2.0 * defect / geometry.vertex_areas


def mesh_gauss_bonnet_residual(state: MeshFlowState) -> float:
    """|Σ R_i A_i/2 + Σ 2π(1-β_j) - 2πχ(M)|，組合恆等式"""
    geometry = mesh_geometry(state)
    curvature = discrete_curvature(state, geometry)
    total = math.fsum(curvature * geometry.vertex_areas / 2.0)
    singular = math.fsum(2.0 * math.pi * (1.0 - b) for b in state.beta_current)
    return abs(total + singular - 2.0 * math.pi * state.mesh.euler_characteristic)


def stable_dt(state: MeshFlowState, cfl: float = None) -> float:
    """
    顯式步長上限 cfl·min_i A_i / Σ_j |w_ij|

    Raises:
    -------
    DegenerateStateError
        有頂點面積不為正
    """
    cfl = MESH_DEFAULTS['cfl'] if cfl is None else cfl
    geometry = mesh_geometry(state)
    if np.any(geometry.vertex_areas <= 0):
        vertex = int(np.argmin(geometry.vertex_areas))
        raise DegenerateStateError('MeshFlowState', f'頂點 {vertex} 的共形面積不為正')
    weights = np.abs(cotangent_weights(state.mesh, geometry.angles))
    totals = np.zeros(state.mesh.n_vertices)
    np.add.at(totals, state.mesh.edges[:, 0], weights)
    np.add.at(totals, state.mesh.edges[:, 1], weights)
    return float(cfl * np.min(geometry.vertex_areas / totals))


def rescale_to_area(state: MeshFlowState, area: float) -> MeshFlowState:
    """φ 整體平移 -½log(A/area)，使總面積恰為 area (角度與錐角不變)"""
    ParameterValidator.validate_positive(area, 'area')
    return replace(state, phi=state.phi - 0.5 * math.log(state.area / area))


# ============== 時間推進 ==============

def _explicit_step(state: MeshFlowState, dt: float, rho: float, max_dphi: float) -> MeshFlowState:
    curvature = discrete_curvature(state)
    dphi = dt * (rho - curvature)
    change = float(np.max(np.abs(dphi)))
    if change > max_dphi:
        raise StepRejectedError(dt, 0.5 * dt, f'|Δφ| = {change:.3g} 超過 {max_dphi}')
    phi = state.phi + dphi
    bad = triangle_violations(face_lengths(state.mesh, phi))
    if bad.size:
        raise StepRejectedError(dt, 0.5 * dt, '三角不等式不成立', face=int(bad[0]))
    stepped = replace(state, phi=phi, t=state.t + dt)
    areas = mesh_geometry(stepped).vertex_areas
    if np.any(areas <= 0):
        raise StepRejectedError(dt, 0.5 * dt, f'頂點 {int(np.argmin(areas))} 的共形面積不為正')
    return stepped


def _advance(state: MeshFlowState, dt: float, rho: float, dt_min: float, max_dphi: float,
             targets_at: Callable[[float], Tuple[float, ...]] = None) -> MeshFlowState:
    """被拒絕時 dt 減半直到下限"""
    ParameterValidator.validate_non_negative(dt, 'dt')
    if dt == 0:
        return state
    dt_min = MESH_DEFAULTS['dt_min'] if dt_min is None else dt_min
    max_dphi = MESH_DEFAULTS['max_dphi'] if max_dphi is None else max_dphi
    current = dt
    while True:
        staged = state
        if targets_at is not None:
            betas = targets_at(state.t + current)
            for j, beta in enumerate(betas):
                if not 0.0 < beta < 1.0:
                    raise ParameterRangeError(f'beta_schedule[{j}]', beta, 0.0, 1.0)
            staged = replace(state, beta_current=betas)
        try:
            return _explicit_step(staged, current, rho, max_dphi)
        except StepRejectedError as exc:
            log_step_rejection(state.t, current, exc.reason)
            current *= 0.5
            if current < dt_min:
                raise StepFailureError(state.t, current, exc.reason, face=exc.face)


def flow_step_mesh(state: MeshFlowState, dt: float, rho: float,
                   dt_min: float = None, max_dphi: float = None) -> MeshFlowState:
    """
    顯式一步 φ_i ← φ_i + dt(ρ - R_i)

    三角不等式失效或 |Δφ| 過大時 dt 減半重試。

    Raises:
    -------
    StepFailureError
        dt 低於 dt_min 仍失敗，附上出問題的三角形
    """
    return _advance(state, dt, rho, dt_min, max_dphi)


def angle_schedule_step(state: MeshFlowState, dt: float, rho: float, schedule: BetaSchedule,
                        dt_min: float = None, max_dphi: float = None) -> MeshFlowState:
    """
    改變錐角的流: 標記頂點的目標改為 β_j(t + dt) 後再推進

    Raises:
    -------
    ParameterRangeError
        排程值離開 (0,1)
    """
    if not state.mesh.cone_vertices:
        return flow_step_mesh(state, dt, rho, dt_min, max_dphi)
    return _advance(state, dt, rho, dt_min, max_dphi, targets_at=schedule.betas_at)


# ============== 距離與集中監測 ==============

def _unfold_corner(lengths: np.ndarray, d_i: np.ndarray, d_j: np.ndarray) -> np.ndarray:
    """
    由對邊兩端的距離展開三角形，估計第三個頂點的距離

    lengths 欄位順序: (|ij|, |jk|, |ik|)。虛擬源點在 ij 的另一側，
    且連線須穿過 ij 線段才採用，否則回傳 inf。d_i、d_j 可帶多個源點的前置維度。
    """
    e, a, b = lengths[:, 0], lengths[:, 1], lengths[:, 2]
    finite = np.isfinite(d_i) & np.isfinite(d_j)
    d_i = np.where(finite, d_i, 0.0)
    d_j = np.where(finite, d_j, 0.0)
    xk = (b ** 2 + e ** 2 - a ** 2) / (2.0 * e)
    yk = np.sqrt(np.maximum(b ** 2 - xk ** 2, 0.0))
    xs = (d_i ** 2 + e ** 2 - d_j ** 2) / (2.0 * e)
    ys2 = d_i ** 2 - xs ** 2
    ys = -np.sqrt(np.maximum(ys2, 0.0))
    # ys2 <= 0 時分母可能為 0，這些位置不採用
    with np.errstate(invalid='ignore', divide='ignore'):
        cross = xs + (xk - xs) * (-ys) / (yk - ys)
    candidate = np.hypot(xk - xs, yk - ys)
    valid = finite & (ys2 > 0) & (cross >= 0) & (cross <= e)
    return np.where(valid, candidate, np.inf)


def _edge_distances(state: MeshFlowState, sources=None, limit: float = np.inf) -> np.ndarray:
    """沿邊 Dijkstra 加一輪三角形展開修正，回傳 (源點數, V)"""
    mesh = state.mesh
    lengths = face_lengths(mesh, state.phi)
    edge_lengths = np.zeros(mesh.n_edges)
    edge_lengths[mesh.face_edges.ravel()] = lengths.ravel()
    distance = np.atleast_2d(dijkstra(edge_graph(mesh, edge_lengths), indices=sources, limit=limit))

    refined = distance.copy()
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        corner_lengths = np.stack([lengths[:, k], lengths[:, i], lengths[:, j]], axis=1)
        candidate = _unfold_corner(corner_lengths,
                                   distance[:, mesh.faces[:, i]], distance[:, mesh.faces[:, j]])
        np.minimum.at(refined, (slice(None), mesh.faces[:, k]), candidate)
    if np.isfinite(limit):
        refined[refined > limit] = np.inf
    return refined


def metric_distances(state: MeshFlowState, source: int, limit: float = np.inf) -> np.ndarray:
    """
    近似測地距離: 沿邊 Dijkstra，再做一輪三角形展開修正

    Returns:
    --------
    np.ndarray
        每個頂點到 source 的距離 (超過 limit 的為 inf)
    """
    return _edge_distances(state, int(source), limit)[0]


def surface_diameter(state: MeshFlowState) -> float:
    """所有頂點對之間 metric_distances 的最大值"""
    return float(np.max(_edge_distances(state)))


def blowup_monitor(state: MeshFlowState, ball_radius: float = None, gap: float = None,
                   ball_fraction: float = None) -> ConcentrationReport:
    """
    定位 φ 的全域最大值並檢查是否單點集中

    第二高值取自度量球外的局部極大值；separated = φ_max - φ_second > gap。
    未指定 ball_radius 時取 ball_fraction × 曲面直徑 (surface_diameter)。
    """
    gap = MESH_DEFAULTS['gap'] if gap is None else gap
    ball_fraction = MESH_DEFAULTS['ball_fraction'] if ball_fraction is None else ball_fraction
    mesh, phi = state.mesh, state.phi

    peak = int(np.argmax(phi))
    distance = metric_distances(state, peak)
    if ball_radius is None:
        ball_radius = ball_fraction * surface_diameter(state)
    inside = distance <= ball_radius

    neighbor_max = np.full(mesh.n_vertices, -np.inf)
    np.maximum.at(neighbor_max, mesh.edges[:, 0], phi[mesh.edges[:, 1]])
    np.maximum.at(neighbor_max, mesh.edges[:, 1], phi[mesh.edges[:, 0]])
    local_max = (phi >= neighbor_max) & ~inside
    if np.any(local_max):
        second = float(np.max(phi[local_max]))
    elif np.any(~inside):
        second = float(np.max(phi[~inside]))
    else:
        second = float(phi[peak])

    areas = mesh_geometry(state).vertex_areas
    fraction = float(np.sum(areas[inside]) / np.sum(areas))
    return ConcentrationReport(
        argmax_vertex=peak,
        phi_max=float(phi[peak]),
        phi_secondmax=second,
        area_fraction_in_ball=fraction,
        separated=bool(phi[peak] - second > gap),
        ball_radius=float(ball_radius),
        t=state.t,
    )


# ============== 流計算 ==============

def run_mesh_flow(initial: MeshFlowState, config: Dict = None, rho: float = None,
                  schedule: BetaSchedule = None):
    """
    執行網格正規化 Ricci 流

    ρ 固定為 4πχ(M,β)/A(0)；有角度排程時改用 4πχ(M,β(t))/A(0)。
    A(0) 可由 config['initial_area'] 指定，接續快照執行時沿用原本的面積。
    A = A(0) 是不穩定平衡 (dA/dt = 2ρ(A - A(0)))，每個接受的步後以 rescale_to_area 拉回 A(0)。
    結束條件: t_end、max|R - ρ|/max(1,|ρ|) < converge_tol、max φ > phi_cap (爆破)，
    或 dt 減半 / 穩定步長低於 dt_min。

    Returns:
    --------
    Trajectory
        reports 含 'concentration' (最終集中報告) 與 'concentration_history'

    Raises:
    -------
    DegenerateStateError
        初始狀態有不為正的頂點面積
    """
    from .diagnostics import compute_record, default_entropy_shift, residual_sup, shift_curve
    from .trajectory import Trajectory

    cfg = {**MESH_DEFAULTS, 't_end': 1.0, **(config or {})}
    t_end = float(cfg['t_end'])
    area0 = float(cfg.get('initial_area') or initial.area)

    def rho_at(t: float) -> float:
        if schedule is None or not initial.mesh.cone_vertices:
            return 4.0 * math.pi * initial.conic_euler_characteristic / area0
        chi = initial.mesh.euler_characteristic + math.fsum(b - 1.0 for b in schedule.betas_at(t))
        return 4.0 * math.pi * chi / area0

    fixed_rho = rho is not None
    rho0 = rho if fixed_rho else rho_at(initial.t)
    trajectory = Trajectory(kind='mesh', rho=rho0)
    history = []

    state = initial
    shift0 = default_entropy_shift(float(np.min(discrete_curvature(state))))
    trajectory.append(state, compute_record(state, rho0, shift0))
    history.append(blowup_monitor(state, gap=cfg['gap'], ball_fraction=cfg['ball_fraction']))
    step = 0

    with LogContext(logger, f'網格流 V={state.mesh.n_vertices} ρ={rho0:.6g}'):
        while state.t < t_end - 1e-12 * cfg['dt']:
            dt = min(cfg['dt'], stable_dt(state, cfg['cfl']))
            if dt < cfg['dt_min'] or state.t + dt <= state.t:
                logger.warning(f'網格流於 t={state.t:.6g} 穩定步長 {dt:.3g} 低於下限')
                trajectory.finish('step_failure', failure=f'穩定步長 {dt:.3g} 低於 dt_min={cfg["dt_min"]:.3g}')
                break
            rho_now = rho0 if fixed_rho else rho_at(state.t + dt)
            try:
                if schedule is None:
                    state = flow_step_mesh(state, dt, rho_now, cfg['dt_min'], cfg['max_dphi'])
                    if state.beta_current != initial.beta_current:
                        raise ParameterValidationError('beta_current', state.beta_current,
                                                       '保角流不得改變錐角')
                else:
                    state = angle_schedule_step(state, dt, rho_now, schedule,
                                                cfg['dt_min'], cfg['max_dphi'])
            except StepFailureError as exc:
                logger.warning(f'網格流於 t={state.t:.6g} 失敗: {exc.reason}')
                trajectory.finish('step_failure', failure=str(exc), face=exc.face)
                break
            step += 1
            state = rescale_to_area(state, area0)

            phi_max = float(np.max(state.phi))
            at_end = state.t >= t_end - 1e-12 * cfg['dt']
            blowup = phi_max > cfg['phi_cap']
            if step % cfg['check_every'] != 0 and not at_end and not blowup:
                continue

            record = compute_record(state, rho_now, shift_curve(shift0, rho_now, state.t))
            trajectory.append(state, record)
            history.append(blowup_monitor(state, gap=cfg['gap'], ball_fraction=cfg['ball_fraction']))
            if step % (cfg['check_every'] * 10) == 0:
                logger.info(f't={state.t:.4f} max|R-ρ|={residual_sup(record):.3e} φ_max={phi_max:.3f}')

            if blowup:
                trajectory.finish('blowup_cap')
                break
            if residual_sup(record) / max(1.0, abs(rho_now)) < cfg['converge_tol']:
                trajectory.finish('converged', limit='constant_curvature')
                break

        if trajectory.termination is None:
            trajectory.finish('t_end')

    if state.t > trajectory.times[-1]:
        rho_final = rho0 if fixed_rho else rho_at(state.t)
        trajectory.append(state, compute_record(state, rho_final, shift_curve(shift0, rho_final, state.t)))
        history.append(blowup_monitor(state, gap=cfg['gap'], ball_fraction=cfg['ball_fraction']))
    trajectory.reports['concentration'] = history[-1]
    trajectory.reports['concentration_history'] = history
    trajectory.reports['initial_area'] = area0
    log_run_result('mesh', trajectory.termination, trajectory.final_record)
    return trajectory
