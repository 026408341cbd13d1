"""
數值工具函數
"""
import numpy as np
from scipy import stats
from typing import Tuple


def format_float(value: float) -> str:
    """17 位有效數字十進位表示 (可精確還原 float64)"""
    return '%.17g' % float(value)


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    """
    非均勻節點的梯形積分權重

    Parameters:
    -----------
    x : np.ndarray
        遞增節點

    Returns:
    --------
    np.ndarray
        權重 w，使得 ∫ f dx ≈ Σ w_i f(x_i)
    """
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    if len(x) < 2:
        return w
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def loglog_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    """
    log|y| 對 log x 的最小平方直線

    Returns:
    --------
    tuple of (slope, coefficient)
        y ≈ coefficient * x**slope
    """
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(np.exp(intercept))


def tail_regression(t: np.ndarray, y: np.ndarray, tail_fraction: float = 0.3) -> Tuple[float, float]:
    """
    對序列尾段做線性回歸

    Returns:
    --------
    tuple of (slope, r_squared)
        尾段點數不足三點時回傳 (nan, nan)
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = np.isfinite(y)
    t, y = t[mask], y[mask]
    n_tail = max(3, int(np.ceil(len(t) * tail_fraction)))
    if len(t) < 3:
        return float('nan'), float('nan')
    result = stats.linregress(t[-n_tail:], y[-n_tail:])
    return float(result.slope), float(result.rvalue ** 2)
