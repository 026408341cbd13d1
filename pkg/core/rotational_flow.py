"""
旋轉對稱錐球面上的正規化 Ricci 流

在圓柱共形座標 x 下 g = e^{2w(x,t)}(dx² + dy²)，流方程為
∂_t(2w) = ρ - R，R = -2e^{-2w}w_xx。兩端為錐點，截斷處 w_x = β₋ 與 -β₊。

空間採有限體積：端點控制體積包含截斷外的整個錐帽 (精確錐剖面)，
因此離散 Gauss-Bonnet 為恆等式，錐點處曲率不會被截斷放大。
"""
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from config import ROTATIONAL_DEFAULTS, SOLITON_DEFAULTS
from .exceptions import (
    DegenerateStateError,
    ParameterRangeError,
    ParameterValidationError,
    ShootingFailureError,
    StepRejectedError,
)
from .validators import ParameterValidator
from .utils import trapezoid_weights
from .logging_config import get_logger, LogContext, log_step_rejection, log_run_result

logger = get_logger(__name__)


def _validate_tip_beta(value: float, name: str) -> None:
    if not (0.0 < value <= 1.0):
        raise ParameterRangeError(name, value, 0.0, 1.0)


@dataclass(frozen=True)
class RotationalState:
    """
    旋轉對稱錐度量 (共形規範)

    Attributes:
    -----------
    t : float
        流時間
    x : np.ndarray
        均勻共形座標節點
    w : np.ndarray
        共形因子對數，h = e^w
    beta_minus, beta_plus : float
        x₋ (s = 0) 與 x₊ (s = L) 的錐角參數，1 代表光滑極點
    w_background : np.ndarray
        能量泛函的背景度量 (預設為初始度量)
    shift : int
        累積的整格平移
    """
    t: float
    x: np.ndarray
    w: np.ndarray
    beta_minus: float
    beta_plus: float
    w_background: Optional[np.ndarray] = None
    shift: int = 0

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        w = np.array(self.w, dtype=float)
        if x.ndim != 1 or len(x) < 4:
            raise DegenerateStateError('RotationalState', '至少需要 4 個節點')
        if w.shape != x.shape:
            raise ParameterValidationError('w', w.shape, f'形狀必須為 {x.shape}')
        spacing = np.diff(x)
        if np.any(spacing <= 0) or not np.allclose(spacing, spacing[0], rtol=1e-9, atol=0.0):
            raise ParameterValidationError('x', len(x), '共形節點必須均勻遞增')
        if not np.all(np.isfinite(w)):
            raise DegenerateStateError('RotationalState', '共形因子含非有限值')
        _validate_tip_beta(self.beta_minus, 'beta_minus')
        _validate_tip_beta(self.beta_plus, 'beta_plus')
        background = w.copy() if self.w_background is None else np.array(self.w_background, dtype=float)
        if background.shape != x.shape:
            raise ParameterValidationError('w_background', background.shape, f'形狀必須為 {x.shape}')
        x.setflags(write=False)
        w.setflags(write=False)
        background.setflags(write=False)
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'w', w)
        object.__setattr__(self, 'w_background', background)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def dx(self) -> float:
        return float((self.x[-1] - self.x[0]) / (self.n - 1))

    @property
    def beta_tips(self) -> Tuple[float, float]:
        return (self.beta_minus, self.beta_plus)

    @property
    def h(self) -> np.ndarray:
        """剖面 h = e^w (弧長參數下的旋轉半徑)"""
        return np.exp(self.w)

    @property
    def volumes(self) -> np.ndarray:
        """控制體積 (x 單位)，端點含錐帽"""
        return control_volumes(self.n, self.dx, self.beta_minus, self.beta_plus)

    @property
    def area_weights(self) -> np.ndarray:
        """每個節點的面積 dA_i = 2π V_i e^{2w_i}"""
        return 2.0 * np.pi * self.volumes * np.exp(2.0 * self.w)

    @property
    def area(self) -> float:
        return float(np.sum(self.area_weights))

    def arc_length(self) -> np.ndarray:
        """節點的弧長座標 (s = 0 於 x₋ 的錐點)"""
        h = self.h
        s0 = h[0] / self.beta_minus
        return s0 + np.concatenate(([0.0], np.cumsum(0.5 * (h[1:] + h[:-1]) * self.dx)))

    @property
    def length(self) -> float:
        """子午線總長 L"""
        return float(self.arc_length()[-1] + self.h[-1] / self.beta_plus)

    def profile(self) -> Tuple[np.ndarray, np.ndarray]:
        """含兩端錐點的 (s, h) 剖面，h(0) = h(L) = 0"""
        s = np.concatenate(([0.0], self.arc_length(), [self.length]))
        h = np.concatenate(([0.0], self.h, [0.0]))
        return s, h


@dataclass(frozen=True)
class SolitonProfile:
    """梯度 Ricci 孤立子剖面 (弧長參數)"""
    s: np.ndarray
    h: np.ndarray
    f: np.ndarray
    C: float
    rho: float
    beta_tip: float
    beta_far: float
    length: float
    mu_norm: float = float('nan')
    X_norm: float = float('nan')
    scan_report: Tuple[Tuple[float, float], ...] = ()

    @property
    def area(self) -> float:
        return float(2.0 * np.pi * np.sum(trapezoid_weights(self.s) * self.h))


# ============== 離散算子 ==============

def control_volumes(n: int, dx: float, beta_minus: float, beta_plus: float) -> np.ndarray:
    """
    有限體積控制體積

    內部節點為 dx；端點為 ∫_{-∞}^{x₀+dx/2} e^{2β(x-x₀)} dx = e^{βdx}/(2β)。
    """
    volumes = np.full(n, dx)
    volumes[0] = math.exp(beta_minus * dx) / (2.0 * beta_minus)
    volumes[-1] = math.exp(beta_plus * dx) / (2.0 * beta_plus)
    return volumes


def _divergence(w: np.ndarray, dx: float, beta_minus: float, beta_plus: float) -> np.ndarray:
    """通量差 F_{i+1/2} - F_{i-1/2}，邊界通量 β₋ 與 -β₊"""
    flux = np.empty(len(w) + 1)
    flux[0] = beta_minus
    flux[1:-1] = np.diff(w) / dx
    flux[-1] = -beta_plus
    return np.diff(flux)


def curvature_profile(state: RotationalState) -> np.ndarray:
    """
    純量曲率 R = -2e^{-2w}w_xx (有限體積形式)

    Returns:
    --------
    np.ndarray
        每個共形節點的 R
    """
    div = _divergence(state.w, state.dx, state.beta_minus, state.beta_plus)
    return -2.0 * div / (state.volumes * np.exp(2.0 * state.w))


def curvature_from_profile(s: np.ndarray, h: np.ndarray) -> np.ndarray:
    """
    由弧長剖面計算 R = -2h''/h

    內部以中央差分；h = 0 的閉合端點以 R = a + b s² 由相鄰兩點外插
    (R 在錐點附近為 s 的偶函數)。

    Raises:
    -------
    DegenerateStateError
        內部出現 h ≤ 0
    """
    s = np.asarray(s, dtype=float)
    h = np.asarray(h, dtype=float)
    if len(s) < 5:
        raise DegenerateStateError('profile', '至少需要 5 個節點')
    if np.any(h[1:-1] <= 0):
        bad = int(np.flatnonzero(h[1:-1] <= 0)[0]) + 1
        raise DegenerateStateError('profile', f'節點 {bad} 的 h ≤ 0')

    h_left = s[1:-1] - s[:-2]
    h_right = s[2:] - s[1:-1]
    second = 2.0 * (h_right * h[:-2] - (h_left + h_right) * h[1:-1] + h_left * h[2:]) / (
        h_left * h_right * (h_left + h_right))
    curvature = np.empty_like(h)
    curvature[1:-1] = -2.0 * second / h[1:-1]

    curvature[0] = curvature[1] if h[0] > 0 else _extrapolate_even(
        s[1] - s[0], s[2] - s[0], curvature[1], curvature[2])
    curvature[-1] = curvature[-2] if h[-1] > 0 else _extrapolate_even(
        s[-1] - s[-2], s[-1] - s[-3], curvature[-2], curvature[-3])
    return curvature


def _extrapolate_even(d1: float, d2: float, v1: float, v2: float) -> float:
    """以 a + b d² 通過 (d1, v1), (d2, v2)，回傳 a"""
    return (v1 * d2 ** 2 - v2 * d1 ** 2) / (d2 ** 2 - d1 ** 2)


# ============== 初始度量 ==============

def _log_cosh(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(z, -z) - math.log(2.0)


def _grid(x_minus: float, x_plus: float, n_nodes: Optional[int], dx: Optional[float]) -> np.ndarray:
    if n_nodes is None:
        dx = ROTATIONAL_DEFAULTS['dx'] if dx is None else dx
        n_nodes = int(math.ceil((x_plus - x_minus) / dx)) + 1
    if n_nodes < 4:
        raise ParameterRangeError('n_nodes', n_nodes, min_val=4)
    return np.linspace(x_minus, x_plus, n_nodes)


def suspension_metric(beta: float, rho: float, n_nodes: int = None, dx: float = None,
                      tip_radius: float = None) -> RotationalState:
    """
    標準懸垂度量 h = βa sin(s/a)，a = sqrt(2/ρ)，使 R ≡ ρ

    共形座標下 e^w = βa sech(βx)；截斷點取在 h = tip_radius 處。

    Parameters:
    -----------
    beta : float
        兩端共同的錐角參數 ∈ (0,1]
    rho : float
        目標曲率 > 0
    n_nodes : int, optional
        節點數；未指定時以 dx 決定
    """
    _validate_tip_beta(beta, 'beta')
    ParameterValidator.validate_positive(rho, 'rho')
    tip_radius = ROTATIONAL_DEFAULTS['tip_radius'] if tip_radius is None else tip_radius
    a = math.sqrt(2.0 / rho)
    half_width = math.log(2.0 * beta * a / tip_radius) / beta
    x = _grid(-half_width, half_width, n_nodes, dx)
    w = math.log(beta * a) - _log_cosh(beta * x)
    return RotationalState(0.0, x, w, beta, beta)


def initial_profile(beta_minus: float, beta_plus: float, scale: float = 1.0,
                    perturbation: float = 0.0, n_nodes: int = None, dx: float = None,
                    tip_radius: float = None) -> RotationalState:
    """
    一般兩端錐點的初始剖面

    w = log(scale) - log cosh(bx) + dx·x，b = (β₋+β₊)/2，d = (β₋-β₊)/2，
    兩端漸近斜率為 β₋ 與 -β₊；等角時即為懸垂度量。可加上中央局部擾動
    perturbation·exp(-(bx)²)，擾動在錐點附近為零，不破壞錐結構。
    """
    _validate_tip_beta(beta_minus, 'beta_minus')
    _validate_tip_beta(beta_plus, 'beta_plus')
    ParameterValidator.validate_positive(scale, 'scale')
    tip_radius = ROTATIONAL_DEFAULTS['tip_radius'] if tip_radius is None else tip_radius
    b = 0.5 * (beta_minus + beta_plus)
    d = 0.5 * (beta_minus - beta_plus)
    c = math.log(scale)
    offset = math.log(tip_radius) - c - math.log(2.0)
    x = _grid(offset / beta_minus, -offset / beta_plus, n_nodes, dx)
    w = c - _log_cosh(b * x) + d * x + perturbation * np.exp(-(b * x) ** 2)
    return RotationalState(0.0, x, w, beta_minus, beta_plus)


def conic_characteristic(state: RotationalState) -> float:
    """兩錐點球面的 χ(M,β) = β₋ + β₊"""
    return state.beta_minus + state.beta_plus


def rotational_target_rho(state: RotationalState) -> float:
    """以目前面積計算保持面積的 ρ = 4πχ/A"""
    return 4.0 * math.pi * conic_characteristic(state) / state.area


def rescale_to_area(state: RotationalState, area: float) -> RotationalState:
    """w 整體平移 -½log(A/area)，使總面積恰為 area (剖面形狀不變)"""
    ParameterValidator.validate_positive(area, 'area')
    return replace(state, w=state.w - 0.5 * math.log(state.area / area))


# ============== 時間推進 ==============

def _semi_implicit_step(state: RotationalState, dt: float, rho: float) -> np.ndarray:
    """擴散項隱式 (係數 e^{-2w} 凍結於舊時間層)，三對角求解"""
    n, dx = state.n, state.dx
    diffusivity = np.exp(-2.0 * state.w) / state.volumes
    coupling = dt * diffusivity / dx

    lower = np.zeros(n)
    upper = np.zeros(n)
    lower[1:] = -coupling[1:]
    upper[:-1] = -coupling[:-1]
    diag = 1.0 - lower - upper

    rhs = state.w + 0.5 * dt * rho
    rhs[0] -= dt * diffusivity[0] * state.beta_minus
    rhs[-1] -= dt * diffusivity[-1] * state.beta_plus

    banded = np.zeros((3, n))
    banded[0, 1:] = upper[:-1]
    banded[1, :] = diag
    banded[2, :-1] = lower[1:]
    return solve_banded((1, 1), banded, rhs)


def _rk4_rate(w: np.ndarray, state: RotationalState, rho: float) -> np.ndarray:
    div = _divergence(w, state.dx, state.beta_minus, state.beta_plus)
    return 0.5 * rho + np.exp(-2.0 * w) * div / state.volumes


def rk4_stable_dt(state: RotationalState, cfl: float = None) -> float:
    """顯式 RK4 的穩定步長估計"""
    cfl = ROTATIONAL_DEFAULTS['rk4_cfl'] if cfl is None else cfl
    return float(cfl * np.min(state.volumes * np.exp(2.0 * state.w)) * state.dx)


def _rk4_step(state: RotationalState, dt: float, rho: float) -> np.ndarray:
    limit = rk4_stable_dt(state)
    if dt > limit:
        raise StepRejectedError(dt, limit, 'RK4 超過穩定步長')
    w = state.w
    k1 = _rk4_rate(w, state, rho)
    k2 = _rk4_rate(w + 0.5 * dt * k1, state, rho)
    k3 = _rk4_rate(w + 0.5 * dt * k2, state, rho)
    k4 = _rk4_rate(w + dt * k3, state, rho)
    return w + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def flow_step_rotational(state: RotationalState, dt: float, rho: float,
                         scheme: str = None, max_dw: float = None) -> RotationalState:
    """
    推進一步 g ↦ g + dt·(ρ - R)g

    Parameters:
    -----------
    state : RotationalState
    dt : float
        時間步長 ≥ 0 (0 為恆等)
    rho : float
        正規化常數
    scheme : str
        'semi_implicit' (預設) 或 'rk4'

    Raises:
    -------
    StepRejectedError
        RK4 超過穩定步長、結果非有限或單步變化過大
    """
    ParameterValidator.validate_non_negative(dt, 'dt')
    if dt == 0:
        return state
    scheme = ROTATIONAL_DEFAULTS['scheme'] if scheme is None else scheme
    max_dw = ROTATIONAL_DEFAULTS['max_dw'] if max_dw is None else max_dw

    if scheme == 'semi_implicit':
        w_new = _semi_implicit_step(state, dt, rho)
    elif scheme == 'rk4':
        w_new = _rk4_step(state, dt, rho)
    else:
        raise ParameterValidationError('scheme', scheme, "必須是 'semi_implicit' 或 'rk4'")

    if not np.all(np.isfinite(w_new)):
        raise StepRejectedError(dt, 0.5 * dt, '結果含非有限值')
    change = float(np.max(np.abs(w_new - state.w)))
    if change > max_dw:
        raise StepRejectedError(dt, 0.5 * dt, f'單步 |Δw| = {change:.3g} 超過 {max_dw}')

    return replace(state, t=state.t + dt, w=w_new)


def recenter(state: RotationalState, threshold_cells: int = None) -> RotationalState:
    """
    整格平移使面積質心回到網格中央

    孤立子在圓柱座標中等速平移；平移以整格進行，露出的端點以
    精確錐剖面延伸，因此不引入插值誤差。
    """
    threshold_cells = ROTATIONAL_DEFAULTS['recenter_cells'] if threshold_cells is None else threshold_cells
    weights = state.area_weights
    centroid = float(np.sum(state.x * weights) / np.sum(weights))
    middle = 0.5 * (state.x[0] + state.x[-1])
    offset = (centroid - middle) / state.dx
    if abs(offset) <= threshold_cells:
        return state
    cells = int(round(offset))
    return replace(
        state,
        w=_shift_cells(state.w, cells, state),
        w_background=_shift_cells(state.w_background, cells, state),
        shift=state.shift + cells,
    )


def _shift_cells(values: np.ndarray, cells: int, state: RotationalState) -> np.ndarray:
    n, dx = state.n, state.dx
    source = np.arange(n) + cells
    shifted = np.empty(n)
    inside = (source >= 0) & (source < n)
    shifted[inside] = values[source[inside]]
    below = source < 0
    shifted[below] = values[0] + state.beta_minus * source[below] * dx
    above = source >= n
    shifted[above] = values[-1] - state.beta_plus * (source[above] - (n - 1)) * dx
    return shifted


# ============== 剖面比較 ==============

def normalized_curvature_profile(state: RotationalState, n_samples: int = 101) -> np.ndarray:
    """R 對正規化弧長 s/L 的取樣 (與規範無關)"""
    s = state.arc_length() / state.length
    sigma = np.linspace(s[0], s[-1], n_samples)
    return np.interp(sigma, s, curvature_profile(state))


def suspension_distance(state: RotationalState) -> float:
    """正規化後 h·π/L 與 β sin(sπ/L) 的 sup 距離 (僅等角)"""
    if abs(state.beta_minus - state.beta_plus) > 1e-12:
        raise ParameterValidationError('beta_tips', state.beta_tips, '懸垂距離僅適用於等角')
    s, h = state.profile()
    scale = math.pi / s[-1]
    return float(np.max(np.abs(h * scale - state.beta_minus * np.sin(s * scale))))


def soliton_distance(state: RotationalState, soliton: SolitonProfile) -> float:
    """正規化弧長 σ = s/L 上 h/L 的 sup 距離"""
    s, h = state.profile()
    sigma = s / s[-1]
    reference = np.interp(sigma, soliton.s / soliton.length, soliton.h) / soliton.length
    return float(np.max(np.abs(h / s[-1] - reference)))


# ============== 孤立子打靶 ==============

def _soliton_rhs(s, y, c, rho):
    h, hp, _ = y
    return [hp, -0.5 * rho * h - c * h * hp, c * h]


def _closing_event(s, y, c, rho):
    return y[0]


_closing_event.terminal = True
_closing_event.direction = -1


def _integrate_soliton(beta_tip: float, c: float, rho: float, s_max: float):
    s0 = 1e-6
    y0 = [beta_tip * s0, beta_tip, 0.5 * c * beta_tip * s0 ** 2]
    return solve_ivp(
        _soliton_rhs, (s0, s_max), y0, args=(c, rho), method='DOP853',
        rtol=SOLITON_DEFAULTS['rtol'], atol=SOLITON_DEFAULTS['atol'],
        events=_closing_event, dense_output=True,
    )


def _closing_mismatch(beta_tip: float, beta_far: float, c: float, rho: float, s_max: float) -> float:
    sol = _integrate_soliton(beta_tip, c, rho, s_max)
    if sol.status != 1 or len(sol.t_events[0]) == 0:
        return float('nan')
    return float(abs(sol.y_events[0][0][1]) - beta_far)


def soliton_shoot(beta_tip: float, beta_far: float, rho: float,
                  tol: float = 1e-6, n_samples: int = None) -> SolitonProfile:
    """
    打靶求解 h'' = -(ρ/2)h - C h h'，h(0) = 0，h'(0) = beta_tip

    對 C 掃描後以 brentq 找出使剖面閉合且 |h'(L)| = beta_far 的根，
    位勢 f' = C h (平均為零)。殘差 μ、X 以 Chebyshev 插值直接由 (h, f) 計算。

    Raises:
    -------
    ShootingFailureError
        掃描範圍內無符號變化，或殘差超過 tol
    """
    _validate_tip_beta(beta_tip, 'beta_tip')
    _validate_tip_beta(beta_far, 'beta_far')
    ParameterValidator.validate_positive(rho, 'rho')
    n_samples = SOLITON_DEFAULTS['n_samples'] if n_samples is None else n_samples
    s_max = 20.0 * math.pi * math.sqrt(2.0 / rho)

    scan: List[Tuple[float, float]] = []
    if abs(beta_tip - beta_far) <= 1e-14:
        c_root = 0.0
    else:
        c_max = SOLITON_DEFAULTS['scan_scale'] * math.sqrt(rho)
        grid = np.linspace(-c_max, c_max, SOLITON_DEFAULTS['scan_points'])
        scan = [(float(c), _closing_mismatch(beta_tip, beta_far, c, rho, s_max)) for c in grid]
        brackets = [
            (a, b) for (a, fa), (b, fb) in zip(scan[:-1], scan[1:])
            if math.isfinite(fa) and math.isfinite(fb) and fa * fb <= 0
        ]
        if not brackets:
            raise ShootingFailureError('掃描範圍內 |h\'(L)| - beta_far 無符號變化', scan)
        a, b = min(brackets, key=lambda pair: abs(pair[0] + pair[1]))
        c_root = brentq(lambda c: _closing_mismatch(beta_tip, beta_far, c, rho, s_max),
                        a, b, xtol=1e-14, rtol=1e-14)

    sol = _integrate_soliton(beta_tip, c_root, rho, s_max)
    if len(sol.t_events[0]) == 0:
        raise ShootingFailureError('剖面未閉合', scan)
    length = float(sol.t_events[0][0])

    s = np.linspace(0.0, length, n_samples)
    states = sol.sol(np.clip(s, sol.t[0], length))
    h = states[0].copy()
    h[0], h[-1] = 0.0, 0.0
    f = states[2]
    weights = trapezoid_weights(s) * h
    f = f - np.sum(f * weights) / np.sum(weights)

    mu_norm, x_norm = _shooting_residuals(sol, length, c_root, rho)
    logger.info(f'孤立子打靶: β=({beta_tip}, {beta_far}) C={c_root:.10g} L={length:.10g} '
                f'|μ|={mu_norm:.2e} |X|={x_norm:.2e}')
    if not (mu_norm < tol and x_norm < tol):
        raise ShootingFailureError(f'殘差 |μ|={mu_norm:.2e}, |X|={x_norm:.2e} 超過 {tol:.1e}', scan)

    return SolitonProfile(
        s=s, h=h, f=f, C=float(c_root), rho=float(rho),
        beta_tip=beta_tip, beta_far=beta_far, length=length,
        mu_norm=mu_norm, X_norm=x_norm, scan_report=tuple(scan),
    )


def _shooting_residuals(sol, length: float, c: float, rho: float) -> Tuple[float, float]:
    """
    |μ| = |f'' - h'f'/h|/√2，|X| = |R' + R f'|，R = -2h''/h

    h 與 f 各自以 Chebyshev 插值，導數由插值多項式取得；
    只在距兩端 1% 以外的內部節點取 sup。
    """
    degree = SOLITON_DEFAULTS['chebyshev_degree']
    lo = sol.t[0]

    def component(index):
        return lambda s: sol.sol(np.clip(s, lo, length))[index]

    h_poly = Chebyshev.interpolate(component(0), degree, domain=[0.0, length])
    hp_poly = Chebyshev.interpolate(component(1), degree, domain=[0.0, length])
    f_poly = Chebyshev.interpolate(component(2), degree, domain=[0.0, length])

    s = np.linspace(0.01 * length, 0.99 * length, 400)
    h = h_poly(s)
    hp = hp_poly(s)
    hpp = hp_poly.deriv(1)(s)
    hppp = hp_poly.deriv(2)(s)
    fp = f_poly.deriv(1)(s)
    fpp = f_poly.deriv(2)(s)

    curvature = -2.0 * hpp / h
    curvature_prime = -2.0 * (hppp * h - hpp * hp) / h ** 2
    mu = np.abs(fpp - hp * fp / h) / math.sqrt(2.0)
    x_field = np.abs(curvature_prime + curvature * fp)
    return float(np.max(mu)), float(np.max(x_field))


# ============== 流計算 ==============

def run_rotational(initial: RotationalState, config: Dict = None, rho: float = None):
    """
    執行旋轉對稱正規化 Ricci 流

    A = A(0) 是不穩定平衡 (dA/dt = ρ(A - A(0)))，每個接受的步後以 rescale_to_area
    拉回 A(0)；A(0) 可由 config['initial_area'] 指定，接續快照執行時沿用原本的面積。
    結束條件: t_end、||R - ρ||∞ < converge_tol (常曲率)，或 R 對正規化弧長的
    剖面變化率低於 stationary_tol 而 ||R - ρ|| 仍大 (孤立子)。孤立子判定另外要求
    相對面積漂移不超過 area_tol 且 R_max ≥ ρ/2，排除已經放大或塌縮的度量。
    時間步被拒絕時減半，低於 dt_min 則以 step_failure 結束並保留部分軌跡。

    Parameters:
    -----------
    initial : RotationalState
    config : dict
        覆寫 ROTATIONAL_DEFAULTS 的鍵，另含 't_end'
    rho : float, optional
        預設為保持初始面積的 ρ

    Returns:
    --------
    Trajectory
    """
    from .diagnostics import compute_record, default_entropy_shift, residual_sup, shift_curve
    from .trajectory import Trajectory

    cfg = {**ROTATIONAL_DEFAULTS, 't_end': 1.0, **(config or {})}
    area0 = float(cfg.get('initial_area') or initial.area)
    rho = 4.0 * math.pi * conic_characteristic(initial) / area0 if rho is None else rho
    t_end = float(cfg['t_end'])
    dt_nominal = float(cfg['dt'])
    dt = float(cfg.get('dt_current', dt_nominal))

    trajectory = Trajectory(kind='rotational', rho=rho)
    state = initial
    shift0 = default_entropy_shift(float(np.min(curvature_profile(state))))
    trajectory.append(state, compute_record(state, rho, shift0))
    previous_profile = normalized_curvature_profile(state)
    previous_t = state.t
    step = 0

    with LogContext(logger, f'旋轉對稱流 β=({state.beta_minus}, {state.beta_plus}) ρ={rho:.6g}'):
        while state.t < t_end - 1e-12 * dt_nominal:
            try:
                candidate = flow_step_rotational(state, dt, rho, cfg['scheme'], cfg['max_dw'])
            except StepRejectedError as exc:
                log_step_rejection(state.t, dt, exc.reason)
                dt = min(exc.suggested_dt, 0.5 * dt)
                if dt < cfg['dt_min']:
                    trajectory.finish('step_failure', failure=str(exc))
                    break
                continue

            state = recenter(candidate, cfg['recenter_cells']) if cfg['recenter'] else candidate
            state = rescale_to_area(state, area0)
            step += 1
            dt = min(2.0 * dt, dt_nominal)
            at_end = state.t >= t_end - 1e-12 * dt_nominal
            if step % cfg['check_every'] != 0 and not at_end:
                continue

            record = compute_record(state, rho, shift_curve(shift0, rho, state.t))
            trajectory.append(state, record)
            residual = residual_sup(record)
            if step % (cfg['check_every'] * 10) == 0:
                logger.info(f't={state.t:.4f} ||R-ρ||∞={residual:.3e} 面積={record.area:.8g}')

            if residual < cfg['converge_tol']:
                trajectory.finish('converged', limit='constant_curvature')
                break
            current_profile = normalized_curvature_profile(state)
            rate = float(np.max(np.abs(current_profile - previous_profile))) / (state.t - previous_t)
            previous_profile, previous_t = current_profile, state.t
            if (rate < cfg['stationary_tol'] and residual > 10.0 * cfg['converge_tol']
                    and soliton_scale_consistent(record, area0, cfg['area_tol'])):
                trajectory.finish('converged', limit='soliton', stationarity=rate)
                break

        if trajectory.termination is None:
            trajectory.finish('t_end')

    if state.t > trajectory.times[-1]:
        trajectory.append(state, compute_record(state, rho, shift_curve(shift0, rho, state.t)))
    trajectory.reports['dt_next'] = dt
    trajectory.reports['dt'] = dt_nominal
    trajectory.reports['initial_area'] = area0
    log_run_result('rotational', trajectory.termination, trajectory.final_record)
    return trajectory


def soliton_scale_consistent(record, area0: float, area_tol: float = None) -> bool:
    """面積相對 A(0) 的漂移不超過 area_tol，且 R_max ≥ ρ/2 (R 與 ρ 同尺度)"""
    area_tol = ROTATIONAL_DEFAULTS['area_tol'] if area_tol is None else area_tol
    drift = abs(record.area - area0) / area0
    return drift <= area_tol and record.R_max >= 0.5 * record.rho
