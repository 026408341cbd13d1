"""
診斷量計算

面積、Gauss-Bonnet 殘差、能量 F、(修正) 熵 N、位勢 f、孤立子殘差 μ 與 X、
Harnack 與非塌縮檢查、R_min 單調性。所有函數皆為狀態的純函數，
同時支援 RotationalState 與 MeshFlowState。
"""
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.sparse import bmat, coo_matrix, csc_matrix, diags
from scipy.sparse.linalg import spsolve
from scipy.special import zeta

from config import DIAGNOSTIC_DEFAULTS, RUN_DEFAULTS
from .conformal_flow import (
    MeshFlowState,
    discrete_curvature,
    face_lengths,
    mesh_gauss_bonnet_residual,
    mesh_geometry,
    metric_distances,
)
from .conic_mesh import cotangent_weights, targets_array
from .exceptions import (
    CompatibilityError,
    EntropyDomainError,
    MixedBackendError,
    UnsupportedStateError,
)
from .rotational_flow import RotationalState, curvature_profile
from .utils import tail_regression
from .logging_config import get_logger

logger = get_logger(__name__)

State = Union[RotationalState, MeshFlowState]


@dataclass(frozen=True)
class DiagnosticsRecord:
    """
    單一時刻的診斷量

    mu_norm 與 X_norm 只在旋轉對稱狀態上計算，網格狀態為 None。
    """
    t: float
    area: float
    rho: float
    R_min: float
    R_max: float
    energy_F: float
    entropy_N: float
    s_shift: float
    gauss_bonnet_residual: float
    phi_min: float
    phi_max: float
    mu_norm: Optional[float]
    X_norm: Optional[float]
    grad_f_max: float

    def as_row(self) -> Dict[str, float]:
        return {
            't': self.t, 'area': self.area, 'rho': self.rho,
            'R_min': self.R_min, 'R_max': self.R_max,
            'energy_F': self.energy_F, 'entropy_N': self.entropy_N,
            'gb_residual': self.gauss_bonnet_residual,
            'phi_min': self.phi_min, 'phi_max': self.phi_max,
            'mu_norm': self.mu_norm, 'X_norm': self.X_norm,
            'grad_f_max': self.grad_f_max,
        }


@dataclass(frozen=True)
class HarnackReport:
    """Harnack 球內不等式 R(y) ≥ R(x)/2 的檢查結果"""
    applicable: bool
    violations: int
    pairs: int
    worst_ratio: float


@dataclass(frozen=True)
class MonotonicityReport:
    """R_min 單調性 (ρ ≤ 0) 或比較 ODE (ρ > 0) 的檢查結果"""
    rho: float
    branch: str
    violations: int
    worst_deficit: float
    tolerance: float


def _kind(state) -> str:
    if isinstance(state, RotationalState):
        return 'rotational'
    if isinstance(state, MeshFlowState):
        return 'mesh'
    raise UnsupportedStateError('diagnostics', type(state).__name__)


# ============== 基本量 ==============

def curvature(state: State) -> np.ndarray:
    """節點 (1-D) 或頂點 (網格) 的純量曲率"""
    if _kind(state) == 'rotational':
        return curvature_profile(state)
    return discrete_curvature(state)


def node_areas(state: State) -> np.ndarray:
    """每個節點的面積權重 dA_i"""
    if _kind(state) == 'rotational':
        return state.area_weights
    return mesh_geometry(state).vertex_areas


def total_area(state: State) -> float:
    """1-D: 2π Σ V_i e^{2w_i}；網格: 三角形面積和"""
    _kind(state)
    return state.area


def gauss_bonnet_residual(state: State) -> float:
    """|∫K dA - 2πχ(M,β)|"""
    if _kind(state) == 'mesh':
        return mesh_gauss_bonnet_residual(state)
    total = math.fsum(0.5 * curvature_profile(state) * state.area_weights)
    return abs(total - 2.0 * math.pi * (state.beta_minus + state.beta_plus))


def conformal_factor(state: State) -> np.ndarray:
    """相對背景度量的共形因子：1-D 為 log(g/g₀) = 2(w - w₀)，網格為 φ (g = e^{2φ} g₀)"""
    if _kind(state) == 'rotational':
        return 2.0 * (state.w - state.w_background)
    return state.phi


# ============== 能量 ==============

def energy_F(state: State) -> float:
    """
    F(u) = ∫|∇₀u|² dA₀ + 2∫R₀ u dA₀，u = log(g/g₀)

    1-D 背景為 w_background (u = 2(w - w₀))。網格背景為 φ = 0，使用離散共形的精確位勢
    8(E(φ) - E(0))，其中 ∂E/∂φ_i = 2πβ_i - Σθ_i，因此 dF/dt 與 dissipation 一致。
    """
    if _kind(state) == 'rotational':
        background = RotationalState(state.t, state.x, state.w_background,
                                     state.beta_minus, state.beta_plus)
        u = conformal_factor(state)
        dirichlet = 2.0 * math.pi * np.sum(np.diff(u) ** 2) / state.dx
        linear = 2.0 * np.sum(curvature_profile(background) * u * background.area_weights)
        return float(dirichlet + linear)

    background = MeshFlowState(state.mesh, np.zeros_like(state.phi), state.t, state.beta_current)
    return 8.0 * (_mesh_potential(state) - _mesh_potential(background))


def clausen(theta) -> np.ndarray:
    """
    Clausen 函數 Cl₂(θ) = -∫_0^θ log|2 sin(t/2)| dt，θ ∈ [0, 2π]

    |θ| ≤ π 用 ζ(2k) 級數，(π, 2π] 以 Cl₂(θ) = -Cl₂(2π - θ) 反射。
    """
    theta = np.asarray(theta, dtype=float)
    reflected = theta > math.pi
    z = np.where(reflected, 2.0 * math.pi - theta, theta)
    k = np.arange(1, 31)
    coefficients = zeta(2 * k) / (k * (2 * k + 1) * (2.0 * math.pi) ** (2 * k))
    safe = np.where(z > 0, z, 1.0)
    value = np.where(z > 0, z - z * np.log(safe), 0.0)
    value = value + np.sum(coefficients * np.power.outer(z, 2 * k + 1), axis=-1)
    return np.where(reflected, -value, value)


def lobachevsky(x) -> np.ndarray:
    """Л(x) = -∫_0^x log|2 sin t| dt = ½Cl₂(2x)，x ∈ [0, π]"""
    return 0.5 * clausen(2.0 * np.asarray(x, dtype=float))


def _mesh_potential(state: MeshFlowState) -> float:
    """
    E(φ) = 2Σ_T f_T + Σ_i (2πβ_i - π·deg_i) φ_i

    f_T = ½Σ θ_k λ_k + Σ Л(θ_k)，λ_k = 2 log l_k 為目前邊長，∂f_T/∂φ_i = (π - θ_i)/2。
    """
    mesh = state.mesh
    geometry = mesh_geometry(state)
    log_lengths = 2.0 * np.log(geometry.corner_lengths)
    faces_term = np.sum(0.5 * geometry.angles * log_lengths + lobachevsky(geometry.angles))
    degree = np.bincount(mesh.faces.ravel(), minlength=mesh.n_vertices)
    targets = 2.0 * math.pi * targets_array(mesh, state.beta_current)
    return float(2.0 * faces_term + np.sum((targets - math.pi * degree) * state.phi))


def dissipation(state: State, rho: float) -> float:
    """
    dF/dt 的預期值 -2c∫(R - ρ)² dA

    c 為 log(g/g₀) 相對 ρ - R 的速度：1-D 為 1；網格 dφ/dt = ρ - R 而 u = 2φ，故為 2。
    """
    speed = 1.0 if _kind(state) == 'rotational' else 2.0
    return float(-2.0 * speed * np.sum((curvature(state) - rho) ** 2 * node_areas(state)))


def _check_single_backend(trajectory) -> None:
    kinds = {_kind(s) for s in trajectory.states}
    if len(kinds) > 1:
        raise MixedBackendError(kinds)


def energy_dissipation_check(trajectory) -> float:
    """
    比較 (F(t₂) - F(t₁))/(t₂ - t₁) 與兩端 -2∫(R-ρ)²dA 的平均

    Returns:
    --------
    float
        最大絕對偏差 (少於兩個狀態時為 0)
    """
    _check_single_backend(trajectory)
    states = trajectory.states
    rho = trajectory.rho
    deviation = 0.0
    for first, second in zip(states[:-1], states[1:]):
        slope = (energy_F(second) - energy_F(first)) / (second.t - first.t)
        rate = 0.5 * (dissipation(first, rho) + dissipation(second, rho))
        deviation = max(deviation, abs(slope - rate))
    return deviation


# ============== 熵 ==============

def default_entropy_shift(r_min: float) -> float:
    """R > 0 時 s = 0 (未修正熵)，否則 s = R_min - 1"""
    return 0.0 if r_min > 0 else r_min - 1.0


def shift_curve(s0: float, rho: float, t):
    """
    s' = s(s - ρ) 的解析解 s(t) = ρ s₀ / (s₀ + (ρ - s₀)e^{ρt})

    同一條 ODE 也是 R_min 的比較函數 r(t)。分母歸零後回傳 inf。
    """
    t = np.asarray(t, dtype=float)
    if s0 == 0.0:
        result = np.zeros_like(t)
    elif rho == 0.0:
        denominator = 1.0 - s0 * t
        with np.errstate(divide='ignore'):
            result = np.where(denominator > 0, s0 / denominator, np.inf)
    else:
        denominator = s0 + (rho - s0) * np.exp(rho * t)
        with np.errstate(divide='ignore', invalid='ignore'):
            result = np.where(denominator * np.sign(rho) > 0, rho * s0 / denominator, np.inf)
    return float(result) if result.ndim == 0 else result


comparison_curve = shift_curve


def entropy(state: State, s: float = 0.0) -> float:
    """
    N = ∫(R - s) log(R - s) dA

    Raises:
    -------
    EntropyDomainError
        某節點 R - s ≤ 0
    """
    shifted = curvature(state) - s
    if np.any(shifted <= 0):
        node = int(np.argmin(shifted))
        raise EntropyDomainError(node, float(shifted[node]))
    return float(np.sum(shifted * np.log(shifted) * node_areas(state)))


def entropy_dissipation(state: RotationalState, s: float, rho: float = None) -> float:
    """-∫(2|μ|² + |∇R + (R-s)∇f|²/(R-s)) dA，與 entropy 同樣對所有節點累加 (端點 μ 與 X 為 0)"""
    fields = _soliton_fields(state, rho)
    shifted = fields['R'] - s
    x_shifted = np.exp(-fields['w']) * np.abs(fields['R_x'] + shifted * fields['f_x'])
    integrand = 2.0 * fields['mu'] ** 2 + x_shifted ** 2 / shifted
    return float(-np.sum(integrand * fields['dA']))


def entropy_derivative_check(trajectory) -> float:
    """
    有限差分 dN/dt 與 -∫(2|μ|² + |X|²/(R-s)) dA 的最大偏差 (僅 1-D)

    s(t) 由第一個狀態的 R_min 起沿 s' = s(s - ρ) 演化。
    """
    _check_single_backend(trajectory)
    states = trajectory.states
    if states and _kind(states[0]) != 'rotational':
        raise UnsupportedStateError('entropy_derivative_check', 'MeshFlowState')
    if len(states) < 2:
        return 0.0
    rho = trajectory.rho
    t0 = states[0].t
    s0 = default_entropy_shift(float(np.min(curvature(states[0]))))
    deviation = 0.0
    for first, second in zip(states[:-1], states[1:]):
        s1 = shift_curve(s0, rho, first.t - t0)
        s2 = shift_curve(s0, rho, second.t - t0)
        slope = (entropy(second, s2) - entropy(first, s1)) / (second.t - first.t)
        rate = 0.5 * (entropy_dissipation(first, s1) + entropy_dissipation(second, s2))
        deviation = max(deviation, abs(slope - rate))
    return deviation


# ============== 位勢 ==============

def _rotational_laplacian(state: RotationalState) -> csc_matrix:
    """零通量有限體積算子 (f_{i+1} - 2f_i + f_{i-1})/dx"""
    n = state.n
    off = np.full(n - 1, 1.0 / state.dx)
    main = np.zeros(n)
    main[:-1] -= off
    main[1:] -= off
    return diags([off, main, off], [-1, 0, 1], format='csc')


def _mesh_laplacian(state: MeshFlowState, angles: np.ndarray) -> csc_matrix:
    """餘切 Laplacian: (Lf)_i = Σ_j w_ij (f_j - f_i)"""
    mesh = state.mesh
    weights = cotangent_weights(mesh, angles)
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    n = mesh.n_vertices
    off = coo_matrix((np.concatenate([weights, weights]),
                      (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n))
    degree = np.zeros(n)
    np.add.at(degree, i, weights)
    np.add.at(degree, j, weights)
    return (off - diags(degree)).tocsc()


def potential_solve(state: State, rho: float = None, compat_tol: float = None) -> np.ndarray:
    """
    求解 Δf = R - ρ，∫f dA = 0

    以加邊 (bordered) 稀疏系統同時施加平均為零的條件；右端先投影到相容子空間。
    ρ 預設為平均曲率 (此時恰好相容)。

    Raises:
    -------
    CompatibilityError
        |∫(R - ρ)dA| 超過 compat_tol·∫|R|dA
    """
    compat_tol = DIAGNOSTIC_DEFAULTS['compat_tol'] if compat_tol is None else compat_tol
    scalar = curvature(state)
    areas = node_areas(state)
    if rho is None:
        rho = float(np.sum(scalar * areas) / np.sum(areas))

    integral = float(np.sum((scalar - rho) * areas))
    scale = float(np.sum(np.abs(scalar) * areas))
    if abs(integral) > compat_tol * max(scale, np.finfo(float).tiny):
        raise CompatibilityError(integral, compat_tol)

    if _kind(state) == 'rotational':
        operator = _rotational_laplacian(state)
        rhs = (scalar - rho) * areas / (2.0 * math.pi)
        weights = areas / (2.0 * math.pi)
    else:
        geometry = mesh_geometry(state)
        operator = _mesh_laplacian(state, geometry.angles)
        rhs = (scalar - rho) * areas
        weights = areas
    rhs = rhs - weights * (np.sum(rhs) / np.sum(weights))

    border = csc_matrix(weights[:, None])
    system = bmat([[operator, border], [border.T, None]], format='csc')
    solution = spsolve(system, np.concatenate([rhs, [0.0]]))
    f = solution[:-1]
    return f - np.sum(f * areas) / np.sum(areas)


def grad_f_max(state: State, f: np.ndarray) -> float:
    """max |∇f| (1-D 於邊中點，網格於每個三角形)"""
    if _kind(state) == 'rotational':
        w_mid = 0.5 * (state.w[1:] + state.w[:-1])
        return float(np.max(np.exp(-w_mid) * np.abs(np.diff(f)) / state.dx))

    lengths = face_lengths(state.mesh, state.phi)
    l0, l1, l2 = lengths[:, 0], lengths[:, 1], lengths[:, 2]
    x2 = (l1 ** 2 + l2 ** 2 - l0 ** 2) / (2.0 * l2)
    y2 = np.sqrt(np.maximum(l1 ** 2 - x2 ** 2, 0.0))
    values = f[state.mesh.faces]
    gx = (values[:, 1] - values[:, 0]) / l2
    gy = ((values[:, 2] - values[:, 0]) - x2 * gx) / y2
    return float(np.max(np.hypot(gx, gy)))


# ============== 孤立子殘差 ==============

def _interior_mask(state: RotationalState, ratio: float = None) -> np.ndarray:
    ratio = DIAGNOSTIC_DEFAULTS['interior_h_ratio'] if ratio is None else ratio
    h = state.h
    mask = h >= ratio * np.max(h)
    mask[0] = mask[-1] = False
    return mask


def _soliton_fields(state: RotationalState, rho: float = None) -> Dict[str, np.ndarray]:
    """
    |μ| = |(e^{-2w} f_x)_x| / √2，X = ∇R + R∇f，|X| = e^{-w}|R_x + R f_x|

    端點節點的值設為 0 且不在遮罩內。
    """
    f = potential_solve(state, rho)
    scalar = curvature_profile(state)
    dx = state.dx
    w = state.w

    flux = np.exp(-(w[1:] + w[:-1])) * np.diff(f) / dx
    mu = np.zeros(state.n)
    mu[1:-1] = np.abs(np.diff(flux)) / dx / math.sqrt(2.0)

    r_x = np.zeros(state.n)
    f_x = np.zeros(state.n)
    r_x[1:-1] = (scalar[2:] - scalar[:-2]) / (2.0 * dx)
    f_x[1:-1] = (f[2:] - f[:-2]) / (2.0 * dx)
    x_field = np.exp(-w) * np.abs(r_x + scalar * f_x)
    return {
        'f': f, 'R': scalar, 'w': w, 'mu': mu, 'X': x_field, 'R_x': r_x, 'f_x': f_x,
        'dA': state.area_weights, 'mask': _interior_mask(state),
    }


def soliton_residual(state: State, rho: float = None) -> Tuple[float, float]:
    """
    內部節點上 (sup|μ|, sup|X|)

    Raises:
    -------
    UnsupportedStateError
        網格狀態
    """
    if _kind(state) != 'rotational':
        raise UnsupportedStateError('soliton_residual', 'MeshFlowState')
    fields = _soliton_fields(state, rho)
    mask = fields['mask']
    return float(np.max(fields['mu'][mask])), float(np.max(fields['X'][mask]))


# ============== 曲率比較 ==============

def _sample_centers(n: int, n_samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=min(n_samples, n), replace=False))


def harnack_check(state: State, n_samples: int = None, seed: int = None) -> HarnackReport:
    """
    抽樣中心 x，檢查 d(x, y) < 1/(8√R(x)) 內的 y 是否滿足 R(y) ≥ R(x)/2

    1-D 以子午線弧長為距離 (旋轉對稱下球內的 R 值即子午線上的值)；
    網格以 metric_distances。R ≤ 0 時回報不適用。
    """
    n_samples = DIAGNOSTIC_DEFAULTS['harnack_samples'] if n_samples is None else n_samples
    seed = RUN_DEFAULTS['seed'] if seed is None else seed
    scalar = curvature(state)
    if np.any(scalar <= 0):
        return HarnackReport(False, 0, 0, float('nan'))

    violations = 0
    pairs = 0
    worst = float('inf')
    arc = state.arc_length() if _kind(state) == 'rotational' else None
    for center in _sample_centers(len(scalar), n_samples, seed):
        radius = 1.0 / (8.0 * math.sqrt(scalar[center]))
        if arc is not None:
            inside = np.abs(arc - arc[center]) < radius
        else:
            inside = np.isfinite(metric_distances(state, int(center), limit=radius))
        ratio = scalar[inside] / scalar[center]
        pairs += int(np.sum(inside))
        violations += int(np.sum(ratio < 0.5))
        worst = min(worst, float(np.min(ratio)))
    return HarnackReport(True, violations, pairs, worst)


def rmin_rmax_track(trajectory, tolerance: float = None) -> MonotonicityReport:
    """
    ρ ≤ 0: R_min 不得下降超過容差；ρ > 0: R_min(t) ≥ r(t) - 容差，
    r 由 r' = r(r - ρ)、r(0) = R_min(0) 的解析解給出。

    容差預設為 rmin_tol_factor × dt。
    """
    times = np.asarray(trajectory.times, dtype=float)
    r_min = trajectory.column('R_min')
    rho = trajectory.rho
    if tolerance is None:
        dt = trajectory.reports.get('dt')
        if dt is None:
            dt = float(np.min(np.diff(times))) if len(times) > 1 else 0.0
        tolerance = DIAGNOSTIC_DEFAULTS['rmin_tol_factor'] * dt

    if rho <= 0:
        running = np.maximum.accumulate(r_min)
        deficit = running - r_min
        branch = 'monotone'
    else:
        reference = np.atleast_1d(comparison_curve(float(r_min[0]), rho, times - times[0]))
        deficit = reference - r_min
        branch = 'comparison'
    violations = int(np.sum(deficit > tolerance))
    return MonotonicityReport(rho, branch, violations, float(np.max(deficit, initial=0.0)), tolerance)


def _band_area(s: np.ndarray, h: np.ndarray, low: float, high: float) -> float:
    """2π∫_low^high h ds (剖面線性內插，截在 [0, L] 內)"""
    low, high = max(low, s[0]), min(high, s[-1])
    inner = (s > low) & (s < high)
    nodes = np.concatenate([[low], s[inner], [high]])
    values = np.interp(nodes, s, h)
    return float(2.0 * math.pi * np.trapezoid(values, nodes))


def noncollapsing_check(state: State, n_samples: int = None, seed: int = None) -> float:
    """
    min Area(B(p, R_max^{-1/2}))·R_max

    1-D 中心為兩個極點加上子午線上的抽樣節點，球為弧長區間 [s - r, s + r] 繞軸一周；
    網格取抽樣頂點，球面積為球內頂點面積和。
    """
    n_samples = DIAGNOSTIC_DEFAULTS['harnack_samples'] if n_samples is None else n_samples
    seed = RUN_DEFAULTS['seed'] if seed is None else seed
    scalar = curvature(state)
    r_max = float(np.max(scalar))
    if r_max <= 0:
        return float('nan')
    radius = 1.0 / math.sqrt(r_max)

    if _kind(state) == 'rotational':
        s, h = state.profile()
        arc = state.arc_length()
        centers = np.concatenate([[0.0, s[-1]], arc[_sample_centers(len(arc), n_samples, seed)]])
        return min(_band_area(s, h, c - radius, c + radius) for c in centers) * r_max

    areas = mesh_geometry(state).vertex_areas
    values = []
    for center in _sample_centers(len(scalar), n_samples, seed):
        inside = np.isfinite(metric_distances(state, int(center), limit=radius))
        values.append(float(np.sum(areas[inside])))
    return min(values) * r_max


# ============== 紀錄與摘要 ==============

def residual_sup(record: DiagnosticsRecord) -> float:
    """||R - ρ||∞ = max(R_max - ρ, ρ - R_min)"""
    return max(record.R_max - record.rho, record.rho - record.R_min)


def convergence_rate(trajectory, tail_fraction: float = None) -> Tuple[float, float]:
    """
    對 log||R - ρ||∞ 的尾段做線性回歸

    Returns:
    --------
    tuple of (slope, r_squared)
        斜率為負代表指數收斂
    """
    tail_fraction = DIAGNOSTIC_DEFAULTS['tail_fraction'] if tail_fraction is None else tail_fraction
    residual = np.array([residual_sup(r) for r in trajectory.records])
    with np.errstate(divide='ignore'):
        logs = np.log(residual)
    return tail_regression(np.asarray(trajectory.times), logs, tail_fraction)


def compute_record(state: State, rho: float, s_shift: float = None) -> DiagnosticsRecord:
    """
    計算一筆完整的診斷紀錄

    指定的 s_shift 使某節點 R - s ≤ 0 時改用 default_entropy_shift(R_min)，
    紀錄中的 s_shift 為實際使用的值。
    """
    scalar = curvature(state)
    r_min = float(np.min(scalar))
    s_shift = default_entropy_shift(r_min) if s_shift is None else float(s_shift)
    try:
        entropy_value = entropy(state, s_shift)
    except EntropyDomainError as exc:
        logger.debug(f't={state.t:.6g} s={s_shift:.6g} 超出熵定義域 ({exc})，改用預設平移')
        s_shift = default_entropy_shift(r_min)
        entropy_value = entropy(state, s_shift)

    f = potential_solve(state)
    phi = conformal_factor(state)
    mu_norm = x_norm = None
    if _kind(state) == 'rotational':
        mu_norm, x_norm = soliton_residual(state)

    return DiagnosticsRecord(
        t=float(state.t),
        area=total_area(state),
        rho=float(rho),
        R_min=r_min,
        R_max=float(np.max(scalar)),
        energy_F=energy_F(state),
        entropy_N=entropy_value,
        s_shift=s_shift,
        gauss_bonnet_residual=gauss_bonnet_residual(state),
        phi_min=float(np.min(phi)),
        phi_max=float(np.max(phi)),
        mu_norm=mu_norm,
        X_norm=x_norm,
        grad_f_max=grad_f_max(state, f),
    )
