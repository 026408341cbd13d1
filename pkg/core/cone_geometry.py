"""
錐面幾何模組

錐面問題資料、錐面 Euler 示性數、正規化常數 ρ、Troyanov 條件與長時間極限分類。
"""
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from config import GEOMETRY_DEFAULTS
from .exceptions import ParameterRangeError, ParameterValidationError, ParameterConflictError
from .validators import ParameterValidator, validate_betas
from .logging_config import get_logger

logger = get_logger(__name__)

SIGN_CLASSES = ('negative', 'zero', 'positive')

LIMIT_KINDS = (
    'constant_curvature',
    'soliton_teardrop',
    'soliton_football',
    'constant_curvature_modulo_scale',
    'constant_curvature_modulo_mobius',
    'blowup_expected',
)


@dataclass(frozen=True)
class ConicSurfaceSpec:
    """
    錐面問題資料

    Attributes:
    -----------
    genus : int
        可定向閉曲面的虧格
    betas : tuple of float
        錐角參數 β_j ∈ (0,1)，錐角為 2πβ_j
    labels : tuple of str
        錐點標籤 (預設 p0, p1, ...)
    positions : tuple
        可選的錐點位置 (僅網格模組使用)
    """
    genus: int
    betas: Tuple[float, ...] = ()
    labels: Tuple[str, ...] = ()
    positions: Tuple[Optional[Tuple[float, ...]], ...] = ()

    def __post_init__(self):
        if isinstance(self.genus, bool) or not isinstance(self.genus, int):
            raise ParameterValidationError('genus', self.genus, '必須為整數')
        ParameterValidator.validate_non_negative(self.genus, 'genus')

        betas = tuple(float(b) for b in self.betas)
        validate_betas(betas)
        object.__setattr__(self, 'betas', betas)

        labels = tuple(self.labels) or tuple(f'p{j}' for j in range(len(betas)))
        if len(labels) != len(betas):
            raise ParameterConflictError(
                {'labels': labels, 'betas': betas}, '標籤數必須等於錐點數'
            )
        if len(set(labels)) != len(labels):
            raise ParameterValidationError('labels', labels, '錐點標籤不可重複')
        object.__setattr__(self, 'labels', labels)

        positions = tuple(self.positions) or tuple(None for _ in betas)
        if len(positions) != len(betas):
            raise ParameterConflictError(
                {'positions': positions, 'betas': betas}, '位置數必須等於錐點數'
            )
        object.__setattr__(self, 'positions', positions)

    @property
    def k(self) -> int:
        """錐點數"""
        return len(self.betas)

    @property
    def smooth_euler_characteristic(self) -> int:
        """χ(M) = 2 - 2g"""
        return 2 - 2 * self.genus

    def with_cone(self, beta: float, label: str = None) -> 'ConicSurfaceSpec':
        """附加一個錐點"""
        label = label or f'p{self.k}'
        return ConicSurfaceSpec(
            genus=self.genus,
            betas=self.betas + (beta,),
            labels=self.labels + (label,),
            positions=self.positions + (None,),
        )


@dataclass(frozen=True)
class TroyanovReport:
    """Troyanov 條件檢查結果"""
    chi_conic: float
    holds: bool
    failing_indices: Tuple[int, ...] = ()
    sign_class: str = 'positive'


@dataclass(frozen=True)
class LimitClass:
    """預測的長時間極限"""
    kind: str
    notes: str = ''


def alpha_parameters(spec: ConicSurfaceSpec) -> List[float]:
    """α_j = β_j - 1 ∈ (-1, 0)"""
    return [b - 1.0 for b in spec.betas]


def conic_euler_characteristic(spec: ConicSurfaceSpec) -> float:
    """
    錐面 Euler 示性數 χ(M,β) = χ(M) + Σ(β_j - 1)

    Examples:
    ---------
    >>> conic_euler_characteristic(ConicSurfaceSpec(0, (0.5, 0.5, 0.5)))
    0.5
    """
    return float(spec.smooth_euler_characteristic + math.fsum(alpha_parameters(spec)))


def target_rho(spec: ConicSurfaceSpec, initial_area: float) -> float:
    """
    正規化常數 ρ = 4πχ(M,β) / A(0)，使流保持面積

    Parameters:
    -----------
    spec : ConicSurfaceSpec
    initial_area : float
        初始面積，必須為正

    Raises:
    -------
    ParameterRangeError
        面積非正時拋出
    """
    if not initial_area > 0 or not math.isfinite(initial_area):
        raise ParameterRangeError('initial_area', initial_area, min_val=0)
    return 4.0 * math.pi * conic_euler_characteristic(spec) / initial_area


def _sign_class(chi: float, zero_tol: float) -> str:
    if abs(chi) <= zero_tol:
        return 'zero'
    return 'positive' if chi > 0 else 'negative'


def troyanov_margin(spec: ConicSurfaceSpec) -> float:
    """
    min_j (2α_j - Σα_i)；χ > 0 時為正即條件成立

    無錐點時回傳 +inf。
    """
    alphas = alpha_parameters(spec)
    if not alphas:
        return math.inf
    total = math.fsum(alphas)
    return min(2.0 * a - total for a in alphas)


def troyanov_equivalent_bound(spec: ConicSurfaceSpec) -> bool:
    """
    等價形式 0 < χ(M,β) < 2·min β_j (僅於虧格 0 且 χ > 0 時有意義)

    由 2α_j > Σα 與 χ = 2 + Σα 可得 χ < 2β_j 對所有 j。
    """
    chi = conic_euler_characteristic(spec)
    if not spec.betas:
        return chi > 0
    return 0.0 < chi < 2.0 * min(spec.betas)


def troyanov_check(spec: ConicSurfaceSpec, zero_tol: float = None) -> TroyanovReport:
    """
    檢查 Troyanov 條件

    χ ≤ 0 時恆成立；χ > 0 時須對每個 j 有 2α_j > Σα_i。

    Returns:
    --------
    TroyanovReport
        failing_indices 列出所有違反不等式的索引
    """
    zero_tol = GEOMETRY_DEFAULTS['zero_tol'] if zero_tol is None else zero_tol
    chi = conic_euler_characteristic(spec)
    sign = _sign_class(chi, zero_tol)

    if sign != 'positive':
        return TroyanovReport(chi_conic=chi, holds=True, failing_indices=(), sign_class=sign)

    alphas = alpha_parameters(spec)
    total = math.fsum(alphas)
    failing = tuple(j for j, a in enumerate(alphas) if not 2.0 * a > total)
    return TroyanovReport(
        chi_conic=chi,
        holds=len(failing) == 0,
        failing_indices=failing,
        sign_class=sign,
    )


def classify_limit(spec: ConicSurfaceSpec, zero_tol: float = None) -> LimitClass:
    """
    依 (虧格, β) 分類預測的長時間極限

    Returns:
    --------
    LimitClass
        kind 屬於 LIMIT_KINDS
    """
    zero_tol = GEOMETRY_DEFAULTS['zero_tol'] if zero_tol is None else zero_tol
    beta_tol = GEOMETRY_DEFAULTS['beta_equal_tol']
    report = troyanov_check(spec, zero_tol)

    if report.sign_class == 'zero':
        return LimitClass('constant_curvature_modulo_scale',
                          'χ(M,β) = 0: 平坦錐度量，唯一至縮放')

    if spec.genus == 0 and spec.k == 0:
        return LimitClass('constant_curvature_modulo_mobius',
                          '光滑球面: 常曲率度量唯一至 Möbius 變換')

    if spec.genus == 0 and spec.k == 1:
        return LimitClass('soliton_teardrop',
                          '單錐點球面 (淚滴) 無常曲率度量，收斂至孤立子')

    if spec.genus == 0 and spec.k == 2:
        b1, b2 = spec.betas
        if abs(b1 - b2) <= beta_tol:
            return LimitClass('constant_curvature',
                              '等角足球: 標準懸垂度量，唯一至固定錐點的 Möbius 變換')
        return LimitClass('soliton_football',
                          '不等角足球無常曲率度量，收斂至孤立子')

    if report.holds:
        return LimitClass('constant_curvature', f'Troyanov 條件成立 (χ={report.chi_conic:.6g})')

    return LimitClass('blowup_expected',
                      f'Troyanov 條件於索引 {list(report.failing_indices)} 不成立，'
                      '共形因子預期於一點爆破')
