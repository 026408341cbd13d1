"""
模型錐模組

精確錐 g_β = dr² + β²r²dy² 上的線性實驗室：指標根、逐模 Poisson 求解、
Bessel 級數熱核、熱半群作用、錐點展開指數擬合與縮放律殘差。
"""
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special
from scipy.integrate import cumulative_simpson

from config import HEAT_KERNEL_DEFAULTS
from .exceptions import (
    ParameterRangeError,
    ParameterValidationError,
    SeriesTruncationError,
    InsufficientResolutionError,
    UnboundedDataError,
)
from .validators import ParameterValidator
from .utils import loglog_fit, trapezoid_weights
from .logging_config import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class ModelCone:
    """精確錐，β ∈ (0,1]，β = 1 為歐氏平面"""
    beta: float
    r_max: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise ParameterRangeError('beta', self.beta, 0.0, 1.0)
        ParameterValidator.validate_positive(self.r_max, 'r_max')


@dataclass(frozen=True)
class HeatKernelConfig:
    """熱核級數截斷與求積參數"""
    max_angular_mode: int = HEAT_KERNEL_DEFAULTS['max_angular_mode']
    series_tolerance: float = HEAT_KERNEL_DEFAULTS['series_tolerance']
    quadrature_nodes: int = 800

    def __post_init__(self):
        ParameterValidator.validate_non_negative(self.max_angular_mode, 'max_angular_mode')
        ParameterValidator.validate_positive(self.series_tolerance, 'series_tolerance')
        ParameterValidator.validate_positive(self.quadrature_nodes, 'quadrature_nodes')


@dataclass(frozen=True)
class PolarField:
    """
    極座標取樣場

    Attributes:
    -----------
    radii : np.ndarray
        嚴格遞增的徑向節點，radii[0] > 0
    angles : np.ndarray
        [0, 2π) 上的均勻角向節點
    values : np.ndarray
        形狀 (n_r, n_y)
    """
    radii: np.ndarray
    angles: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        radii = np.array(self.radii, dtype=float)
        angles = np.array(self.angles, dtype=float)
        values = np.array(self.values, dtype=float)
        if radii.ndim != 1 or len(radii) < 2:
            raise ParameterValidationError('radii', radii.shape, '至少需要兩個徑向節點')
        if radii[0] <= 0 or np.any(np.diff(radii) <= 0):
            raise ParameterValidationError('radii', radii[0], '徑向節點必須為正且嚴格遞增')
        n_y = len(angles)
        expected = 2.0 * np.pi * np.arange(n_y) / max(n_y, 1)
        if n_y < 1 or not np.allclose(angles, expected, rtol=0.0, atol=1e-12):
            raise ParameterValidationError('angles', n_y, '角向節點必須為 2πn/N')
        if values.shape != (len(radii), n_y):
            raise ParameterValidationError('values', values.shape,
                                           f'形狀必須為 {(len(radii), n_y)}')
        object.__setattr__(self, 'radii', radii)
        object.__setattr__(self, 'angles', angles)
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_function(cls, radii: np.ndarray, n_angles: int,
                      func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> 'PolarField':
        """以 func(r, y) 在網格上取樣"""
        angles = 2.0 * np.pi * np.arange(n_angles) / n_angles
        rr, yy = np.meshgrid(np.asarray(radii, dtype=float), angles, indexing='ij')
        return cls(radii, angles, func(rr, yy))

    @property
    def n_angles(self) -> int:
        return len(self.angles)

    def angular_coefficients(self) -> np.ndarray:
        """rfft 係數 / N，形狀 (n_r, N//2 + 1)"""
        return np.fft.rfft(self.values, axis=1) / self.n_angles

    def mass(self, beta: float) -> float:
        """∫ v dA，dA = β r dr dy (梯形求積)"""
        mode0 = self.values.mean(axis=1)
        w = trapezoid_weights(self.radii)
        return float(2.0 * np.pi * beta * np.sum(w * self.radii * mode0))


class ExpansionFit(NamedTuple):
    """錐點展開 u = a0 + r^s (a11 cos y + a12 sin y) + O(r^p) 的擬合結果"""
    a0: float
    a11: float
    a12: float
    remainder_exponent: float
    mode1_exponent: float


def geometric_radii(r_max: float, n: int, r_min_ratio: float = None) -> np.ndarray:
    """朝 r = 0 幾何加密的徑向節點 [r_min_ratio·r_max, r_max]"""
    r_min_ratio = HEAT_KERNEL_DEFAULTS['r_min_ratio'] if r_min_ratio is None else r_min_ratio
    return r_max * np.geomspace(r_min_ratio, 1.0, n)


def conformal_to_polar(beta: float, rho: np.ndarray) -> np.ndarray:
    """共形模型 |z|^{2β-2}|dz|² 的 ρ = |z| 轉為極座標半徑 r = ρ^β / β"""
    return np.asarray(rho, dtype=float) ** beta / beta


def euclidean_heat_kernel(t: float, r: float, y: float, r2: float, y2: float) -> float:
    """平面熱核 (4πt)^{-1} exp(-|z - z'|²/4t)，作為 β = 1 的校準"""
    dist2 = r * r + r2 * r2 - 2.0 * r * r2 * math.cos(y - y2)
    return math.exp(-dist2 / (4.0 * t)) / (4.0 * math.pi * t)


def indicial_roots(cone: ModelCone, max_value: float) -> List[Tuple[float, int]]:
    """
    指標根 (j/β, j)，j ≥ 0 且 j/β ≤ max_value，依指數排序

    Examples:
    ---------
    >>> indicial_roots(ModelCone(0.5), 4)
    [(0.0, 0), (2.0, 1), (4.0, 2)]
    """
    ParameterValidator.validate_positive(max_value, 'max_value')
    roots = []
    j = 0
    while j / cone.beta <= max_value * (1.0 + 1e-12):
        roots.append((j / cone.beta, j))
        j += 1
    return roots


def _check_bounded(radii: np.ndarray, rhs: np.ndarray) -> None:
    """內層十進位區間的 log-log 斜率顯著為負即視為無界"""
    if not np.all(np.isfinite(rhs)):
        raise UnboundedDataError('rhs', float('-inf'))
    inner = radii <= 10.0 * radii[0]
    mags = np.abs(rhs[inner])
    nonzero = mags > 0
    if np.count_nonzero(nonzero) < 3:
        return
    slope, _ = loglog_fit(radii[inner][nonzero], mags[nonzero])
    if slope < -0.25:
        raise UnboundedDataError('rhs', slope)


def mode_poisson_solve(cone: ModelCone, mode: int, radii: np.ndarray,
                       rhs: Union[np.ndarray, Callable, float], outer_bc: float) -> np.ndarray:
    """
    逐模徑向 Poisson 方程

    (∂_r² + r⁻¹∂_r - ν²r⁻²) u = rhs，ν = mode/β，u 於 0 有界 (Friedrichs 選取)，
    u(r_max) = outer_bc，其中 r_max 取 radii[-1]。

    以參數變易法寫成兩個積分，內層 [0, r_0] 以常數 rhs 的級數解補上，
    因此不會混入對偶解 r^{-ν} 或 log r。

    Parameters:
    -----------
    cone : ModelCone
    mode : int
        角向模數 ≥ 0
    radii : np.ndarray
        嚴格遞增徑向節點 (建議幾何分布)
    rhs : array, callable or float
        右端取樣
    outer_bc : float
        外邊界值

    Returns:
    --------
    np.ndarray
        節點上的解
    """
    if isinstance(mode, bool) or int(mode) != mode:
        raise ParameterValidationError('mode', mode, '必須為整數')
    if mode < 0:
        raise ParameterRangeError('mode', mode, min_val=0)
    radii = np.asarray(radii, dtype=float)
    if radii[0] <= 0 or np.any(np.diff(radii) <= 0):
        raise ParameterValidationError('radii', radii[0], '徑向節點必須為正且嚴格遞增')
    if callable(rhs):
        f = np.asarray(rhs(radii), dtype=float) * np.ones_like(radii)
    else:
        f = np.asarray(rhs, dtype=float) * np.ones_like(radii)
    _check_bounded(radii, f)

    nu = mode / cone.beta
    x = np.log(radii)
    r0, big_r, f0 = radii[0], radii[-1], f[0]

    if mode == 0:
        a_int = f0 * r0 ** 2 / 2.0 + cumulative_simpson(radii ** 2 * f, x=x, initial=0.0)
        b_int = (f0 * (0.5 * r0 ** 2 * math.log(r0) - 0.25 * r0 ** 2)
                 + cumulative_simpson(radii ** 2 * x * f, x=x, initial=0.0))
        u_p = x * a_int - b_int
        return u_p + (outer_bc - u_p[-1])

    p_int = f0 * r0 ** (2.0 + nu) / (2.0 + nu) + cumulative_simpson(
        radii ** (2.0 + nu) * f, x=x, initial=0.0)
    # ∫_r^R 由外往內累積，避免大數相消
    rev = cumulative_simpson((radii ** (2.0 - nu) * f)[::-1], x=-x[::-1], initial=0.0)
    q_int = rev[::-1]
    u_p = -(radii ** nu * q_int + radii ** (-nu) * p_int) / (2.0 * nu)
    return u_p + (outer_bc - u_p[-1]) * (radii / big_r) ** nu


def _validate_time(t: float) -> None:
    if not (t > 0) or not math.isfinite(t):
        raise ParameterRangeError('t', t, min_val=0)


def _truncation_index(nus: np.ndarray, bounds: np.ndarray, x: float,
                      tol: float, max_mode: int) -> int:
    """回傳截斷後保留的項數；未收斂時拋出 SeriesTruncationError"""
    partial = np.cumsum(bounds)
    for ell in range(1, len(bounds)):
        if nus[ell] > x and bounds[ell] <= tol * partial[ell - 1]:
            return ell
    raise SeriesTruncationError(max_mode, float(bounds[-1]), tol)


def heat_kernel_eval(cone: ModelCone, cfg: HeatKernelConfig, t: float,
                     r: float, y: float, r2: float, y2: float) -> float:
    """
    模型錐 Friedrichs 熱核的截斷級數值

    H = (4πβt)⁻¹ Σ_ℓ ε_ℓ e^{-(r-r')²/4t} ive(ℓ/β, rr'/2t) cos ℓ(y-y')，
    ε_0 = 1、ε_ℓ = 2；ive 為指數縮放的 I_ν。β = 1 時等於平面熱核。

    Raises:
    -------
    ParameterRangeError
        t ≤ 0 或半徑非正
    SeriesTruncationError
        L 之內未達截斷容差
    """
    _validate_time(t)
    ParameterValidator.validate_positive(r, 'r')
    ParameterValidator.validate_positive(r2, 'r2')

    x = r * r2 / (2.0 * t)
    n_terms = cfg.max_angular_mode + 2
    ells = np.arange(n_terms)
    nus = ells / cone.beta
    eps = np.where(ells == 0, 1.0, 2.0)
    bounds = eps * special.ive(nus, x)
    stop = _truncation_index(nus, bounds, x, cfg.series_tolerance, cfg.max_angular_mode)

    series = np.sum(bounds[:stop] * np.cos(ells[:stop] * (y - y2)))
    prefactor = math.exp(-(r - r2) ** 2 / (4.0 * t)) / (4.0 * math.pi * cone.beta * t)
    return float(prefactor * series)


def heat_apply(cone: ModelCone, cfg: HeatKernelConfig, t: float, field: PolarField,
               radii: Optional[np.ndarray] = None) -> PolarField:
    """
    熱半群作用 v = ∫ H(t,z,z') φ(z') dA(z')

    角向以 FFT 分解，每個模態 ℓ 的徑向核為
    (2t)⁻¹ e^{-(r-r')²/4t} ive(ℓ/β, rr'/2t)，對輸入節點以梯形求積。

    Parameters:
    -----------
    field : PolarField
        輸入場 (外邊界處可忽略)
    radii : np.ndarray, optional
        輸出徑向節點，預設與輸入相同

    Returns:
    --------
    PolarField
        輸出場 (角向節點與輸入相同)
    """
    _validate_time(t)
    r_in = field.radii
    r_out = r_in if radii is None else np.asarray(radii, dtype=float)
    coeffs = field.angular_coefficients()
    n_modes = min(coeffs.shape[1] - 1, cfg.max_angular_mode)

    scale = np.max(np.abs(coeffs)) if coeffs.size else 0.0
    weights = trapezoid_weights(r_in) * r_in
    gauss = np.exp(-(r_out[:, None] - r_in[None, :]) ** 2 / (4.0 * t))
    arg = r_out[:, None] * r_in[None, :] / (2.0 * t)

    out = np.zeros((len(r_out), coeffs.shape[1]), dtype=complex)
    for ell in range(n_modes + 1):
        column = coeffs[:, ell]
        if scale == 0.0 or np.max(np.abs(column)) <= cfg.series_tolerance * scale:
            continue
        kernel = gauss * special.ive(ell / cone.beta, arg)
        out[:, ell] = kernel @ (column * weights) / (2.0 * t)

    values = np.fft.irfft(out * field.n_angles, n=field.n_angles, axis=1)
    logger.debug(f'熱半群作用: β={cone.beta} t={t:.3g} 模數={n_modes + 1}')
    return PolarField(r_out, field.angles, values)


def fit_power_offset(radii: np.ndarray, values: np.ndarray,
                     noise: float) -> Tuple[float, float, float]:
    """
    擬合 values ≈ a0 + c·r^p (幾何網格差分法，不需先知道 a0)

    相鄰差分 d_i = c·r_i^p (q^p - 1)，對 log|d_i| 與 log r_i 作回歸。

    Returns:
    --------
    tuple of (a0, c, p)
        差分全在雜訊以下時 c = 0、p = nan
    """
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    ratios = radii[1:] / radii[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-6, atol=0.0):
        raise InsufficientResolutionError('fit_power_offset', '擬合區間必須為幾何網格')
    diffs = np.diff(values)
    significant = np.abs(diffs) > noise
    if np.count_nonzero(significant) < 3:
        return float(np.mean(values)), 0.0, float('nan')

    p, k = loglog_fit(radii[:-1][significant], diffs[significant])
    q = float(ratios[0])
    sign = 1.0 if np.median(diffs[significant]) > 0 else -1.0
    c = sign * k / (q ** p - 1.0)
    a0 = float(np.mean(values - c * radii ** p))
    return a0, float(c), float(p)


def expansion_fit(field: PolarField, cone: ModelCone,
                  fit_decades: float = None) -> ExpansionFit:
    """
    擬合錐點展開 u = a0 + r^{1/β}(a11 cos y + a12 sin y) + O(r^p)

    投影到角向模態 0 與 1；模態 1 的振幅以 log-log 回歸得到指數 s；
    模態 0 以幾何差分擬合 a0 與餘項指數 p。模態 0 無可辨識的餘項時，
    改對扣除擬合項後的整體餘項 (角向取 sup) 回歸。

    Raises:
    -------
    InsufficientResolutionError
        內層取樣不足 fit_decades 個十進位或節點過少
    """
    fit_decades = HEAT_KERNEL_DEFAULTS['fit_decades'] if fit_decades is None else fit_decades
    radii = field.radii
    r_edge = radii[0] * 10.0 ** fit_decades
    if radii[-1] < r_edge * (1.0 - 1e-9):
        raise InsufficientResolutionError(
            'expansion_fit', f'取樣僅涵蓋 {math.log10(radii[-1] / radii[0]):.2f} 個十進位'
        )
    window = radii <= r_edge * (1.0 + 1e-9)
    if np.count_nonzero(window) < HEAT_KERNEL_DEFAULTS['min_fit_nodes']:
        raise InsufficientResolutionError('expansion_fit', '內層節點過少')
    if field.n_angles < 3:
        raise InsufficientResolutionError('expansion_fit', '角向節點至少 3 個')

    r_w = radii[window]
    coeffs = field.angular_coefficients()[window]
    mode0 = coeffs[:, 0].real
    cos1 = 2.0 * coeffs[:, 1].real
    sin1 = -2.0 * coeffs[:, 1].imag

    scale = max(float(np.max(np.abs(field.values[window]))), 1e-300)
    noise = HEAT_KERNEL_DEFAULTS['noise_floor'] * scale

    # 模態 1
    amplitude = np.hypot(cos1, sin1)
    significant = amplitude > noise
    if np.count_nonzero(significant) >= 3:
        s, c1 = loglog_fit(r_w[significant], amplitude[significant])
        theta = math.atan2(float(np.sum(sin1[significant] / amplitude[significant])),
                           float(np.sum(cos1[significant] / amplitude[significant])))
        a11, a12 = c1 * math.cos(theta), c1 * math.sin(theta)
    else:
        s, a11, a12 = float('nan'), 0.0, 0.0

    # 模態 0
    a0, _, p = fit_power_offset(r_w, mode0, noise)

    if math.isnan(p):
        yy = field.angles[None, :]
        model = np.full((len(r_w), field.n_angles), a0)
        if not math.isnan(s):
            model = model + r_w[:, None] ** s * (a11 * np.cos(yy) + a12 * np.sin(yy))
        remainder = np.max(np.abs(field.values[window] - model), axis=1)
        keep = remainder > noise
        if np.count_nonzero(keep) >= 3:
            p, _ = loglog_fit(r_w[keep], remainder[keep])

    return ExpansionFit(float(a0), float(a11), float(a12), float(p), float(s))


def leading_exponent(fit: ExpansionFit) -> float:
    """第一個非常數項的指數：模態 1 指數與餘項指數中較小者"""
    candidates = [e for e in (fit.mode1_exponent, fit.remainder_exponent) if not math.isnan(e)]
    return min(candidates) if candidates else float('nan')


def scaling_residual(cone: ModelCone, cfg: HeatKernelConfig, lam: float,
                     samples: Iterable[Sequence[float]]) -> float:
    """
    縮放律殘差 max |λ²H(λ²t, λr, y, λr', y') - H(t, r, y, r', y')|

    Parameters:
    -----------
    samples : iterable of (t, r, y, r2, y2)
    """
    ParameterValidator.validate_positive(lam, 'lambda')
    worst = 0.0
    for t, r, y, r2, y2 in samples:
        base = heat_kernel_eval(cone, cfg, t, r, y, r2, y2)
        scaled = heat_kernel_eval(cone, cfg, lam * lam * t, lam * r, y, lam * r2, y2)
        worst = max(worst, abs(lam * lam * scaled - base))
    return worst
