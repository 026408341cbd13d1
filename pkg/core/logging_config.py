"""
統一日誌配置模組

所有模組透過 get_logger(__name__) 取得 'conicricci.*' 之下的 logger，
由命令列程式呼叫一次 setup_logging 決定輸出位置與等級。
"""
import logging
import sys
import time
from pathlib import Path
from datetime import datetime
from typing import Optional, TextIO


ROOT_LOGGER_NAME = 'conicricci'

# 日誌格式
LOG_FORMATS = {
    'default': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    'detailed': '%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s',
    'simple': '%(levelname)s - %(message)s',
}


def setup_logging(
    level: int = logging.INFO,
    log_file: Optional[str] = None,
    log_dir: Optional[Path] = None,
    format_style: str = 'default',
    name: Optional[str] = None,
    stream: Optional[TextIO] = None,
) -> logging.Logger:
    """
    設定日誌配置

    重複呼叫時不會再加 handler，只更新等級 (例如 CLI 的 -v)。

    Parameters:
    -----------
    level : int
        日誌等級
    log_file : str, optional
        日誌檔名；與 log_dir 皆未指定時只輸出到 stdout
    log_dir : Path, optional
        日誌目錄，預設為專案根目錄下的 logs
    format_style : str
        'default'、'detailed' 或 'simple' (檔案一律使用 detailed)
    name : str, optional
        Logger 名稱，預設為 'conicricci'
    stream : TextIO, optional
        主控台輸出串流，預設為 stdout

    Returns:
    --------
    logging.Logger
    """
    log_format = LOG_FORMATS.get(format_style, LOG_FORMATS['default'])
    logger = logging.getLogger(name or ROOT_LOGGER_NAME)
    logger.setLevel(level)

    if logger.handlers:
        for handler in logger.handlers:
            handler.setLevel(level)
        return logger

    console_handler = logging.StreamHandler(stream or sys.stdout)
    console_handler.setLevel(level)
    console_handler.setFormatter(logging.Formatter(log_format))
    logger.addHandler(console_handler)

    if log_file or log_dir:
        log_dir = Path(log_dir) if log_dir is not None else Path(__file__).parent.parent / 'logs'
        log_dir.mkdir(parents=True, exist_ok=True)
        log_file = log_file or f"conicricci_{datetime.now().strftime('%Y%m%d')}.log"

        file_handler = logging.FileHandler(log_dir / log_file, encoding='utf-8')
        file_handler.setLevel(level)
        file_handler.setFormatter(logging.Formatter(LOG_FORMATS['detailed']))
        logger.addHandler(file_handler)

    return logger


def get_logger(name: str = None) -> logging.Logger:
    """
    取得 Logger 實例

    Parameters:
    -----------
    name : str, optional
        模組名稱，會自動加上 'conicricci.' 前綴
    """
    if name:
        return logging.getLogger(f'{ROOT_LOGGER_NAME}.{name}')
    return logging.getLogger(ROOT_LOGGER_NAME)


class LogContext:
    """
    記錄一段計算的開始、結束與耗時

    離開後 elapsed 為耗時秒數；發生例外時記錄錯誤並讓例外繼續傳遞。

    Example:
    --------
    >>> with LogContext(logger, '旋轉對稱流') as ctx:
    ...     trajectory = run_rotational(state, options)
    >>> ctx.elapsed
    """

    def __init__(self, logger: logging.Logger, operation: str, level: int = logging.INFO):
        self.logger = logger
        self.operation = operation
        self.level = level
        self.start_time = None
        self.elapsed = 0.0

    def __enter__(self):
        self.start_time = time.perf_counter()
        self.logger.log(self.level, f'開始: {self.operation}')
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.elapsed = time.perf_counter() - self.start_time
        if exc_type is not None:
            self.logger.error(f'失敗: {self.operation} - {exc_val} (耗時 {self.elapsed:.2f}秒)')
            return False
        self.logger.log(self.level, f'完成: {self.operation} (耗時 {self.elapsed:.2f}秒)')
        return False


def log_run_result(kind: str, termination: str, record=None):
    """記錄流計算結果"""
    logger = get_logger('run')
    if record is None:
        logger.info(f'流計算結束: {kind} | 結束原因: {termination}')
        return
    logger.info(
        f'流計算結束: {kind} | 結束原因: {termination} | '
        f't={record.t:.4g} | 面積={record.area:.6g} | '
        f'R∈[{record.R_min:.4g}, {record.R_max:.4g}] | ρ={record.rho:.4g}'
    )


def log_step_rejection(t: float, dt: float, reason: str):
    """記錄時間步拒絕"""
    get_logger('step').warning(f'步長拒絕: t={t:.6g} dt={dt:.3e} - {reason}')
