"""
錐面幾何模組測試
"""
import math

import pytest
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from core.cone_geometry import (
    ConicSurfaceSpec,
    LIMIT_KINDS,
    classify_limit,
    conic_euler_characteristic,
    target_rho,
    troyanov_check,
    troyanov_equivalent_bound,
    troyanov_margin,
)
from core.exceptions import (
    ParameterConflictError,
    ParameterRangeError,
    ParameterValidationError,
)


class TestConicSurfaceSpec:
    """錐面資料建構測試"""

    def test_default_labels(self):
        """未給標籤時自動命名 p0, p1, ..."""
        spec = ConicSurfaceSpec(0, (0.5, 0.7))
        assert spec.labels == ('p0', 'p1')
        assert spec.k == 2

    def test_beta_out_of_range(self):
        """β 必須在開區間 (0,1)"""
        with pytest.raises(ParameterRangeError):
            ConicSurfaceSpec(0, (1.2,))
        with pytest.raises(ParameterRangeError):
            ConicSurfaceSpec(0, (0.0,))
        with pytest.raises(ParameterRangeError):
            ConicSurfaceSpec(0, (1.0,))

    def test_negative_genus(self):
        """虧格不可為負"""
        with pytest.raises(ParameterRangeError):
            ConicSurfaceSpec(-1)

    def test_non_integer_genus(self):
        """虧格必須為整數"""
        with pytest.raises(ParameterValidationError):
            ConicSurfaceSpec(1.5)

    def test_duplicate_labels(self):
        """標籤不可重複"""
        with pytest.raises(ParameterValidationError):
            ConicSurfaceSpec(0, (0.5, 0.5), labels=('a', 'a'))

    def test_label_count_mismatch(self):
        """標籤數與錐點數不同"""
        with pytest.raises(ParameterConflictError):
            ConicSurfaceSpec(0, (0.5, 0.5), labels=('a',))

    def test_with_cone(self):
        """附加錐點不改變原資料"""
        spec = ConicSurfaceSpec(1)
        extended = spec.with_cone(0.4, 'q')
        assert spec.k == 0
        assert extended.betas == (0.4,)
        assert extended.labels == ('q',)


class TestEulerCharacteristic:
    """錐面 Euler 示性數測試"""

    def test_three_halves(self, troyanov_spec):
        """β = (0.5, 0.5, 0.5) 的 χ = 0.5"""
        assert conic_euler_characteristic(troyanov_spec) == pytest.approx(0.5, abs=1e-15)

    def test_nontroyanov_value(self, nontroyanov_spec):
        """β = (0.2, 0.9, 0.9) 的 χ = 2 - 0.8 - 0.1 - 0.1 = 1.0"""
        assert conic_euler_characteristic(nontroyanov_spec) == pytest.approx(1.0, abs=1e-14)

    def test_smooth_surfaces(self):
        """無錐點時等於 2 - 2g"""
        for genus in range(4):
            spec = ConicSurfaceSpec(genus)
            assert conic_euler_characteristic(spec) == 2 - 2 * genus

    def test_target_rho(self, troyanov_spec):
        """ρ = 4πχ / A"""
        assert target_rho(troyanov_spec, 2.0 * math.pi) == pytest.approx(1.0)

    def test_target_rho_requires_positive_area(self, troyanov_spec):
        """面積非正時拋出 ParameterRangeError"""
        with pytest.raises(ParameterRangeError):
            target_rho(troyanov_spec, 0.0)


class TestTroyanov:
    """Troyanov 條件測試"""

    def test_holds_for_equal_angles(self, troyanov_spec):
        """三個相等錐角滿足條件"""
        report = troyanov_check(troyanov_spec)
        assert report.holds
        assert report.sign_class == 'positive'
        assert report.failing_indices == ()

    def test_fails_for_small_angle(self, nontroyanov_spec):
        """β = 0.2 的錐點違反 2α_j > Σα"""
        report = troyanov_check(nontroyanov_spec)
        assert not report.holds
        assert report.failing_indices == (0,)
        assert troyanov_margin(nontroyanov_spec) < 0

    def test_equivalent_bound_agrees(self, troyanov_spec, nontroyanov_spec):
        """虧格 0 時與 0 < χ < 2 min β 等價"""
        assert troyanov_equivalent_bound(troyanov_spec)
        assert not troyanov_equivalent_bound(nontroyanov_spec)

    def test_nonpositive_chi_always_holds(self):
        """χ ≤ 0 時條件自動成立"""
        report = troyanov_check(ConicSurfaceSpec(2, (0.1,)))
        assert report.holds
        assert report.sign_class == 'negative'

    def test_zero_class(self):
        """四個 β = 0.5 的球面 χ = 0"""
        report = troyanov_check(ConicSurfaceSpec(0, (0.5, 0.5, 0.5, 0.5)))
        assert report.sign_class == 'zero'

    def test_permutation_invariant(self, nontroyanov_spec):
        """重排錐點只會移動違反的索引"""
        permuted = troyanov_check(ConicSurfaceSpec(0, (0.9, 0.2, 0.9)))
        original = troyanov_check(nontroyanov_spec)
        assert permuted.holds == original.holds
        assert permuted.chi_conic == pytest.approx(original.chi_conic)
        assert permuted.failing_indices == (1,)

    def test_four_cones_failing_index(self):
        """四個錐點時找出唯一過小的錐角"""
        spec = ConicSurfaceSpec(0, (0.95, 0.95, 0.3, 0.95))
        report = troyanov_check(spec)
        assert not report.holds
        assert report.failing_indices == (2,)
        assert not troyanov_equivalent_bound(spec)

    def test_four_cones_holds(self):
        spec = ConicSurfaceSpec(0, (0.9, 0.8, 0.9, 0.9))
        assert troyanov_check(spec).holds
        assert troyanov_equivalent_bound(spec)


class TestClassifyLimit:
    """長時間極限分類測試"""

    @pytest.mark.parametrize('spec, expected', [
        (ConicSurfaceSpec(0), 'constant_curvature_modulo_mobius'),
        (ConicSurfaceSpec(0, (0.7,)), 'soliton_teardrop'),
        (ConicSurfaceSpec(0, (0.3, 0.9)), 'soliton_football'),
        (ConicSurfaceSpec(0, (0.6, 0.6)), 'constant_curvature'),
        (ConicSurfaceSpec(0, (0.5, 0.5, 0.5)), 'constant_curvature'),
        (ConicSurfaceSpec(0, (0.2, 0.9, 0.9)), 'blowup_expected'),
        (ConicSurfaceSpec(1), 'constant_curvature_modulo_scale'),
        (ConicSurfaceSpec(2), 'constant_curvature'),
        (ConicSurfaceSpec(0, (0.5, 0.5, 0.5, 0.5)), 'constant_curvature_modulo_scale'),
    ])
    def test_examples(self, spec, expected):
        """典型錐面資料的分類"""
        result = classify_limit(spec)
        assert result.kind == expected
        assert result.kind in LIMIT_KINDS
