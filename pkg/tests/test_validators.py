"""
參數驗證器測試
"""
import math

import pytest
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from core.exceptions import (
    ConicRicciBaseException,
    ParameterConflictError,
    ParameterRangeError,
    ParameterTypeError,
    ParameterValidationError,
    ValidationException,
)
from core.validators import (
    ParameterValidator,
    RunParamsValidator,
    boolean,
    float_list,
    str_list,
    validate_betas,
)


class TestParameterValidator:
    """基本驗證函數"""

    def test_range(self):
        ParameterValidator.validate_range(1.0, 'x', 0.0, 1.0)
        with pytest.raises(ParameterRangeError):
            ParameterValidator.validate_range(1.5, 'x', 0.0, 1.0)

    def test_open_interval(self):
        with pytest.raises(ParameterRangeError):
            ParameterValidator.validate_open_interval(1.0, 'beta')
        with pytest.raises(ParameterRangeError):
            ParameterValidator.validate_open_interval(math.nan, 'beta')

    def test_positive(self):
        with pytest.raises(ParameterRangeError):
            ParameterValidator.validate_positive(0.0, 'rho')

    def test_in_list(self):
        with pytest.raises(ParameterValidationError):
            ParameterValidator.validate_in_list('euler', ['rk4'], 'scheme')


class TestListParsing:
    """設定值轉換"""

    def test_float_list(self):
        assert float_list('0.5, 0.7') == [0.5, 0.7]
        assert float_list('') == []

    def test_str_list(self):
        assert str_list('a, b') == ['a', 'b']

    @pytest.mark.parametrize('text, expected', [('true', True), ('No', False), ('1', True), ('off', False)])
    def test_boolean(self, text, expected):
        assert boolean(text) is expected

    def test_boolean_invalid(self):
        with pytest.raises(ValueError):
            boolean('maybe')


class TestBetas:
    """錐角參數驗證"""

    def test_open_interval_default(self):
        with pytest.raises(ParameterRangeError):
            validate_betas([0.5, 1.0])

    def test_allow_one(self):
        validate_betas([0.5, 1.0], allow_one=True)
        with pytest.raises(ParameterRangeError):
            validate_betas([1.2], allow_one=True)


class TestRunParamsValidator:
    """執行設定區段驗證"""

    def test_numerics_defaults(self):
        numerics = RunParamsValidator.validate_numerics_params({})
        assert numerics['scheme'] == 'semi_implicit'
        assert numerics['phi_cap'] == 12.0

    def test_non_finite_rejected(self):
        """nan 不可繞過範圍檢查"""
        with pytest.raises(ParameterValidationError):
            RunParamsValidator.validate_numerics_params({'t_end': 'nan'})

    def test_type_error(self):
        with pytest.raises(ParameterTypeError):
            RunParamsValidator.validate_numerics_params({'check_every': 'often'})

    def test_dt_min_conflict(self):
        with pytest.raises(ParameterConflictError):
            RunParamsValidator.validate_numerics_params({'dt': 1e-3, 'dt_min': 1e-2})

    def test_unknown_kind(self):
        with pytest.raises(ParameterValidationError):
            RunParamsValidator.validate_run_params({'kind': 'ricci'})

    def test_label_count(self):
        with pytest.raises(ParameterConflictError):
            RunParamsValidator.validate_surface_params({'genus': '0', 'betas': '0.5, 0.5', 'labels': 'a'})

    def test_hierarchy(self):
        """驗證錯誤都屬於同一個基礎類別"""
        assert issubclass(ParameterConflictError, ValidationException)
        assert issubclass(ValidationException, ConicRicciBaseException)
