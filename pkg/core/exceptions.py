"""
自訂異常類別
"""


class ConicRicciBaseException(Exception):
    """基礎異常類別"""
    pass


# ============== 參數驗證異常 ==============

class ValidationException(ConicRicciBaseException):
    """參數驗證異常基礎類別"""
    pass


class ParameterValidationError(ValidationException):
    """參數驗證失敗"""

    def __init__(self, param_name: str, value, message: str = None):
        self.param_name = param_name
        self.value = value
        self.message = message
        error_msg = f"參數驗證失敗: {param_name}={value}"
        if message:
            error_msg += f" - {message}"
        super().__init__(error_msg)


class ParameterRangeError(ValidationException):
    """參數超出範圍"""

    def __init__(self, param_name: str, value, min_val=None, max_val=None):
        self.param_name = param_name
        self.value = value
        self.min_val = min_val
        self.max_val = max_val
        if min_val is not None and max_val is not None:
            message = f"參數 {param_name}={value} 超出範圍 [{min_val}, {max_val}]"
        elif min_val is not None:
            message = f"參數 {param_name}={value} 必須大於 {min_val}"
        elif max_val is not None:
            message = f"參數 {param_name}={value} 必須小於 {max_val}"
        else:
            message = f"參數 {param_name}={value} 超出範圍"
        super().__init__(message)


class ParameterTypeError(ValidationException):
    """參數類型錯誤"""

    def __init__(self, param_name: str, expected_type: str, actual_type: str):
        self.param_name = param_name
        self.expected_type = expected_type
        self.actual_type = actual_type
        super().__init__(f"參數 {param_name} 類型錯誤: 預期 {expected_type}，實際 {actual_type}")


class ParameterConflictError(ValidationException):
    """參數衝突"""

    def __init__(self, params: dict, message: str):
        self.params = params
        super().__init__(f"參數衝突: {message} - {params}")


# ============== 幾何相關異常 ==============

class GeometryException(ConicRicciBaseException):
    """幾何相關異常基礎類別"""
    pass


class DegenerateStateError(GeometryException):
    """狀態退化 (面積為零、網格過少等)"""

    def __init__(self, what: str, reason: str = None):
        self.what = what
        self.reason = reason
        message = f"退化狀態: {what}"
        if reason:
            message += f" - {reason}"
        super().__init__(message)


class MeshConstructionError(GeometryException):
    """無法建構符合錐角的背景網格"""

    def __init__(self, reason: str, vertex: int = None):
        self.reason = reason
        self.vertex = vertex
        message = f"網格建構失敗: {reason}"
        if vertex is not None:
            message += f" (頂點 {vertex})"
        super().__init__(message)


class TriangleInequalityError(GeometryException):
    """三角不等式不成立"""

    def __init__(self, face: int, lengths=None):
        self.face = face
        self.lengths = lengths
        message = f"三角形 {face} 違反三角不等式"
        if lengths is not None:
            message += f": 邊長 {tuple(float(x) for x in lengths)}"
        super().__init__(message)


# ============== 求解器異常 ==============

class SolverException(ConicRicciBaseException):
    """數值求解異常基礎類別"""
    pass


class StepRejectedError(SolverException):
    """單步被拒絕，附建議時間步長"""

    def __init__(self, dt: float, suggested_dt: float, reason: str, face: int = None):
        self.dt = dt
        self.suggested_dt = suggested_dt
        self.reason = reason
        self.face = face
        super().__init__(f"時間步 dt={dt:.3e} 被拒絕: {reason} (建議 dt={suggested_dt:.3e})")


class StepFailureError(SolverException):
    """時間步長減半至下限仍失敗"""

    def __init__(self, t: float, dt: float, reason: str, face: int = None, trajectory=None):
        self.t = t
        self.dt = dt
        self.reason = reason
        self.face = face
        self.trajectory = trajectory
        message = f"於 t={t:.6g} 推進失敗 (dt={dt:.3e}): {reason}"
        if face is not None:
            message += f" (三角形 {face})"
        super().__init__(message)


class SeriesTruncationError(SolverException):
    """級數在模數上限內未收斂"""

    def __init__(self, max_mode: int, last_term: float, tolerance: float):
        self.max_mode = max_mode
        self.last_term = last_term
        self.tolerance = tolerance
        super().__init__(
            f"級數截斷失敗: L={max_mode} 時末項 {last_term:.3e} 仍大於容差 {tolerance:.1e}"
        )


class ShootingFailureError(SolverException):
    """孤立子打靶未找到根"""

    def __init__(self, reason: str, scan_report=None):
        self.reason = reason
        self.scan_report = scan_report or []
        super().__init__(f"孤立子打靶失敗: {reason} (掃描 {len(self.scan_report)} 點)")


class CompatibilityError(SolverException):
    """Poisson 方程右端不相容"""

    def __init__(self, integral: float, tolerance: float):
        self.integral = integral
        self.tolerance = tolerance
        super().__init__(f"右端積分 {integral:.3e} 超過相容容差 {tolerance:.1e}")


class InsufficientResolutionError(SolverException):
    """網格解析度不足以進行擬合或求解"""

    def __init__(self, what: str, reason: str):
        self.what = what
        self.reason = reason
        super().__init__(f"解析度不足 ({what}): {reason}")


class UnboundedDataError(SolverException):
    """資料在錐點附近無界"""

    def __init__(self, what: str, slope: float):
        self.what = what
        self.slope = slope
        super().__init__(f"{what} 在 r→0 處無界 (log-log 斜率 {slope:.3f})")


# ============== 診斷異常 ==============

class DiagnosticException(ConicRicciBaseException):
    """診斷相關異常基礎類別"""
    pass


class EntropyDomainError(DiagnosticException):
    """熵定義域錯誤: R - s <= 0"""

    def __init__(self, node: int, value: float):
        self.node = node
        self.value = value
        super().__init__(f"熵未定義: 節點 {node} 的 R - s = {value:.3e} <= 0")


class UnsupportedStateError(DiagnosticException):
    """此診斷不支援該狀態類型"""

    def __init__(self, diagnostic: str, state_type: str):
        self.diagnostic = diagnostic
        self.state_type = state_type
        super().__init__(f"診斷 {diagnostic} 不支援 {state_type}")


class MixedBackendError(DiagnosticException):
    """軌跡混合了不同後端的狀態"""

    def __init__(self, kinds):
        self.kinds = sorted(kinds)
        super().__init__(f"軌跡混合後端: {self.kinds}")


class UnknownQuantityError(DiagnosticException):
    """未知的輸出量名稱"""

    def __init__(self, name: str, allowed):
        self.name = name
        self.allowed = list(allowed)
        super().__init__(f"未知的量: {name}，可用: {self.allowed}")


# ============== 執行與檔案異常 ==============

class RunIOException(ConicRicciBaseException):
    """執行設定與檔案異常基礎類別"""
    pass


class ConfigParseError(RunIOException):
    """設定檔語法或型別錯誤"""

    def __init__(self, line_no: int, line: str, reason: str):
        self.line_no = line_no
        self.line = line
        self.reason = reason
        super().__init__(f"設定檔第 {line_no} 行錯誤: {reason} -> {line.strip()!r}")


class UnknownConfigKeyError(RunIOException):
    """設定檔含未知鍵"""

    def __init__(self, section: str, key: str, line_no: int = None):
        self.section = section
        self.key = key
        self.line_no = line_no
        message = f"未知設定鍵: [{section}] {key}"
        if line_no is not None:
            message += f" (第 {line_no} 行)"
        super().__init__(message)


class MissingConfigKeysError(RunIOException):
    """缺少必要設定鍵"""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"缺少必要設定鍵: {', '.join(self.missing)}")


class SnapshotVersionError(RunIOException):
    """快照版本不符"""

    def __init__(self, found: str, expected: str):
        self.found = found
        self.expected = expected
        super().__init__(f"快照版本不符: 讀到 {found!r}，預期 {expected!r}")


class SnapshotChecksumError(RunIOException):
    """快照校驗和不符或檔案截斷"""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"快照校驗失敗 ({path}): {reason}")


class ExperimentError(RunIOException):
    """實驗執行失敗 (包裝底層錯誤與執行情境)"""

    def __init__(self, run_name: str, reason: str):
        self.run_name = run_name
        self.reason = reason
        super().__init__(f"實驗 {run_name} 失敗: {reason}")
