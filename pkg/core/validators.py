"""
參數驗證器模組
"""
import math
from typing import Any, Dict, List, Optional, Sequence, Union
from .exceptions import (
    ParameterValidationError,
    ParameterRangeError,
    ParameterTypeError,
    ParameterConflictError,
)


class ParameterValidator:
    """參數驗證器"""

    @staticmethod
    def validate_range(value: Union[int, float],
                       param_name: str,
                       min_val: Optional[Union[int, float]] = None,
                       max_val: Optional[Union[int, float]] = None) -> None:
        """
        驗證參數範圍 (閉區間)

        Raises:
        -------
        ParameterRangeError
            超出範圍時拋出
        """
        if min_val is not None and value < min_val:
            raise ParameterRangeError(param_name, value, min_val, max_val)
        if max_val is not None and value > max_val:
            raise ParameterRangeError(param_name, value, min_val, max_val)

    @staticmethod
    def validate_open_interval(value: float, param_name: str,
                               low: float = 0.0, high: float = 1.0) -> None:
        """驗證參數位於開區間 (low, high)"""
        if not math.isfinite(value) or value <= low or value >= high:
            raise ParameterRangeError(param_name, value, low, high)

    @staticmethod
    def validate_positive(value: Union[int, float], param_name: str) -> None:
        """驗證參數為正數"""
        if not value > 0:
            raise ParameterRangeError(param_name, value, min_val=0)

    @staticmethod
    def validate_non_negative(value: Union[int, float], param_name: str) -> None:
        """驗證參數為非負數"""
        if not value >= 0:
            raise ParameterRangeError(param_name, value, min_val=0)

    @staticmethod
    def validate_finite(value: float, param_name: str) -> None:
        """驗證參數為有限實數"""
        if not math.isfinite(value):
            raise ParameterValidationError(param_name, value, "必須為有限實數")

    @staticmethod
    def validate_in_list(value: Any, allowed_values: List, param_name: str) -> None:
        """驗證參數在允許的值列表中"""
        if value not in allowed_values:
            raise ParameterValidationError(
                param_name,
                value,
                f"必須是以下其中之一: {allowed_values}"
            )


def validate_betas(betas: Sequence[float], param_name: str = 'betas',
                   allow_one: bool = False) -> None:
    """
    驗證錐角參數列表

    Parameters:
    -----------
    betas : sequence of float
        錐角參數 β_j (錐角 = 2πβ_j)
    allow_one : bool
        是否接受 β = 1 (光滑極點)
    """
    for j, beta in enumerate(betas):
        name = f'{param_name}[{j}]'
        if allow_one:
            if not math.isfinite(beta) or beta <= 0.0 or beta > 1.0:
                raise ParameterRangeError(name, beta, 0.0, 1.0)
        else:
            ParameterValidator.validate_open_interval(beta, name, 0.0, 1.0)


def float_list(value) -> List[float]:
    """將 '0.5, 0.5' 或序列轉為 float 列表"""
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(',')]
        return [float(p) for p in parts if p]
    return [float(v) for v in value]


def str_list(value) -> List[str]:
    """將 'a, b' 或序列轉為字串列表"""
    if isinstance(value, str):
        return [p.strip() for p in value.split(',') if p.strip()]
    return [str(v) for v in value]


def boolean(value) -> bool:
    """將 true/false/yes/no/1/0 轉為 bool"""
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ('true', 'yes', 'on', '1'):
        return True
    if text in ('false', 'no', 'off', '0'):
        return False
    raise ValueError(f'無法解析布林值: {value}')


class RunParamsValidator:
    """執行設定參數驗證器"""

    # 參數定義：{參數名: (類型, 最小值, 最大值, 預設值, 描述)}
    RUN_PARAMS = {
        'kind': (str, None, None, None, '實驗類型 rotational/mesh/soliton/heatkernel/classify'),
        'name': (str, None, None, 'run', '執行名稱'),
        'seed': (int, 0, 2**31 - 1, 42, '診斷取樣用亂數種子'),
    }

    SURFACE_PARAMS = {
        'genus': (int, 0, 2, 0, '虧格'),
        'betas': (float_list, None, None, [], '錐角參數 β_j'),
        'labels': (str_list, None, None, [], '錐點標籤'),
    }

    NUMERICS_PARAMS = {
        't_end': (float, 0.0, 1e6, 1.0, '結束時間'),
        'dt': (float, 1e-12, 10.0, 0.01, '初始時間步長'),
        'dt_min': (float, 1e-16, 10.0, 1e-8, '時間步長下限'),
        'scheme': (str, None, None, 'semi_implicit', '旋轉對稱流時間積分法'),
        'dx': (float, 1e-4, 1.0, 0.05, '共形座標網格間距'),
        'tip_radius': (float, 1e-8, 0.1, 1e-4, '錐點截斷半徑'),
        'resolution': (int, 0, 6, 2, '網格解析度'),
        'cfl': (float, 1e-3, 2.0, 0.4, '顯式步長安全係數'),
        'phi_cap': (float, 0.1, 100.0, 12.0, '爆破門檻 φ_max'),
        'gap': (float, 0.0, 100.0, 1.0, '集中判定 φ 間隙'),
        'ball_fraction': (float, 1e-3, 1.0, 0.1, '監測球半徑 / 直徑'),
        'check_every': (int, 1, 100000, 10, '每幾步記錄診斷'),
        'converge_tol': (float, 1e-14, 1.0, 1e-6, '||R-ρ||∞ 收斂門檻'),
        'stationary_tol': (float, 1e-14, 1.0, 1e-5, '孤立子靜止門檻'),
        'area_tol': (float, 1e-14, 1.0, 1e-3, '孤立子判定的相對面積漂移上限'),
        'recenter': (boolean, None, None, True, '整格平移置中'),
        'perturbation': (float, -1.0, 1.0, 0.0, '初始擾動振幅'),
        'area': (float, 0.0, 1e6, 0.0, '初始面積 (0 表示使用預設尺度)'),
        'rho': (float, 1e-6, 1e6, 2.0, '孤立子打靶 / 懸垂度量的 ρ'),
        'max_angular_mode': (int, 0, 100000, 400, '熱核角向模數上限'),
        'series_tolerance': (float, 1e-16, 1.0, 1e-12, '熱核級數容差'),
        'heat_time': (float, 1e-12, 1e6, 0.1, '熱核時間 t'),
        'max_dphi': (float, 1e-6, 10.0, 0.2, '網格單步 φ 最大變化'),
        'grading_rings': (int, 0, 10, 0, '錐點附近分級環數'),
        'grading_rate': (float, 0.0, 0.9, 0.3, '分級縮放率'),
        'radial_nodes': (int, 16, 4096, 160, '熱核徑向節點數'),
        'angular_nodes': (int, 4, 1024, 32, '熱核角向節點數'),
        'kernel_samples': (int, 1, 100000, 20, '熱核表取樣點數'),
    }

    OUTPUT_PARAMS = {
        'out_dir': (str, None, None, '', '輸出資料夾'),
        'plots': (str_list, None, None, [], '繪圖量'),
        'snapshot': (boolean, None, None, True, '是否寫入最終快照'),
        'plot_format': (str, None, None, 'svg', '圖檔格式 svg / pdf / html'),
    }

    EXPERIMENT_KINDS = ['rotational', 'mesh', 'soliton', 'heatkernel', 'classify']
    SCHEMES = ['semi_implicit', 'rk4']

    @classmethod
    def validate_run_params(cls, params: Dict[str, Any]) -> Dict[str, Any]:
        """驗證 [run] 區段"""
        validated = cls._validate_params(params, cls.RUN_PARAMS)
        ParameterValidator.validate_in_list(validated['kind'], cls.EXPERIMENT_KINDS, 'kind')
        return validated

    @classmethod
    def validate_surface_params(cls, params: Dict[str, Any]) -> Dict[str, Any]:
        """驗證 [surface] 區段"""
        validated = cls._validate_params(params, cls.SURFACE_PARAMS)
        validate_betas(validated['betas'])
        labels = validated['labels']
        if labels and len(labels) != len(validated['betas']):
            raise ParameterConflictError(
                {'labels': labels, 'betas': validated['betas']},
                '標籤數必須等於錐點數'
            )
        return validated

    @classmethod
    def validate_numerics_params(cls, params: Dict[str, Any]) -> Dict[str, Any]:
        """驗證 [numerics] 區段"""
        validated = cls._validate_params(params, cls.NUMERICS_PARAMS)
        ParameterValidator.validate_in_list(validated['scheme'], cls.SCHEMES, 'scheme')

        # 額外檢查：步長下限不能大於初始步長
        if validated['dt_min'] > validated['dt']:
            raise ParameterConflictError(
                {'dt_min': validated['dt_min'], 'dt': validated['dt']},
                'dt_min 必須小於等於 dt'
            )
        return validated

    @classmethod
    def validate_output_params(cls, params: Dict[str, Any]) -> Dict[str, Any]:
        """驗證 [output] 區段"""
        return cls._validate_params(params, cls.OUTPUT_PARAMS)

    @classmethod
    def _validate_params(cls, params: Dict[str, Any],
                         param_defs: Dict[str, tuple]) -> Dict[str, Any]:
        """
        通用參數驗證

        Parameters:
        -----------
        params : dict
            待驗證參數
        param_defs : dict
            參數定義

        Returns:
        --------
        dict
            驗證後的參數（含預設值）
        """
        validated = {}

        for param_name, (expected_type, min_val, max_val, default, desc) in param_defs.items():
            value = params.get(param_name, default)
            if value is None:
                raise ParameterValidationError(param_name, value, f'必須提供 ({desc})')

            # 類型轉換
            try:
                value = expected_type(value)
            except (ValueError, TypeError):
                type_name = getattr(expected_type, '__name__', str(expected_type))
                raise ParameterTypeError(param_name, type_name, type(value).__name__)

            # 範圍驗證
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                ParameterValidator.validate_finite(value, param_name)
                ParameterValidator.validate_range(value, param_name, min_val, max_val)

            validated[param_name] = value

        return validated

    @classmethod
    def section_defs(cls) -> Dict[str, Dict[str, tuple]]:
        """各區段的參數定義"""
        return {
            'run': cls.RUN_PARAMS,
            'surface': cls.SURFACE_PARAMS,
            'numerics': cls.NUMERICS_PARAMS,
            'output': cls.OUTPUT_PARAMS,
        }
