"""
輸出報告

時間序列 (逗號分隔文字，固定欄位順序)、量對時間圖 (plotly) 與執行摘要 JSON。
"""
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import plotly.graph_objects as go

from config import DIAGNOSTIC_DEFAULTS, TIMESERIES_COLUMNS
from ..diagnostics import convergence_rate, residual_sup
from ..exceptions import UnknownQuantityError
from ..logging_config import get_logger

logger = get_logger(__name__)

DERIVED_QUANTITIES = ('log_residual',)
PLOT_QUANTITIES = tuple(c for c in TIMESERIES_COLUMNS if c != 't') + DERIVED_QUANTITIES

QUANTITY_LABELS = {
    'area': '面積',
    'R_min': 'min R',
    'R_max': 'max R',
    'energy_F': '能量 F',
    'entropy_N': '熵 N',
    'gb_residual': 'Gauss-Bonnet 殘差',
    'log_residual': 'log ||R - ρ||∞',
}


def emit_timeseries(trajectory, path: Union[str, Path]) -> Path:
    """
    寫出時間序列

    欄位順序固定為 TIMESERIES_COLUMNS；浮點數以 17 位有效數字寫出，
    同樣輸入產生相同位元組。空軌跡只寫標頭。
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = trajectory.to_frame()
    frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
    logger.debug(f'時間序列已寫入: {path} ({len(frame)} 列)')
    return path


def quantity_series(trajectory, quantity: str) -> np.ndarray:
    """取出繪圖用的序列 (含衍生量 log_residual)"""
    if quantity not in PLOT_QUANTITIES:
        raise UnknownQuantityError(quantity, PLOT_QUANTITIES)
    if quantity == 'log_residual':
        with np.errstate(divide='ignore'):
            return np.log(np.array([residual_sup(r) for r in trajectory.records], dtype=float))
    return trajectory.column(quantity)


def create_quantity_chart(trajectory, quantity: str, title: str = None) -> go.Figure:
    """
    建立量對時間的折線圖

    log_residual 會附上尾段回歸直線與斜率標註。
    """
    values = quantity_series(trajectory, quantity)
    times = np.asarray(trajectory.times, dtype=float)
    label = QUANTITY_LABELS.get(quantity, quantity)

    fig = go.Figure()
    fig.add_trace(
        go.Scatter(
            x=times,
            y=values,
            mode='lines+markers',
            name=label,
            line=dict(color='#1E90FF', width=2),
            marker=dict(size=4),
        )
    )

    if quantity == 'log_residual' and len(times) >= 3:
        slope, r_squared = convergence_rate(trajectory)
        if math.isfinite(slope):
            finite = np.isfinite(values)
            t_start, t_end = times[finite][0], times[finite][-1]
            cut = t_start + (1.0 - DIAGNOSTIC_DEFAULTS['tail_fraction']) * (t_end - t_start)
            tail = times[finite & (times >= cut)]
            anchor = values[finite][-1]
            fig.add_trace(
                go.Scatter(
                    x=tail,
                    y=anchor + slope * (tail - t_end),
                    mode='lines',
                    name=f'斜率 {slope:.4g} (R²={r_squared:.4f})',
                    line=dict(color='#FFA500', width=1, dash='dash'),
                )
            )

    fig.update_layout(
        title=title or f'{label} 對 t ({trajectory.kind})',
        xaxis_title='t',
        yaxis_title=label,
        template='plotly_white',
        height=450,
        showlegend=True,
    )
    return fig


def emit_plot(trajectory, quantity: str, path: Union[str, Path]) -> Path:
    """
    寫出量對時間圖

    副檔名 .html 寫互動式檔案，其餘 (.svg / .pdf) 以 kaleido 輸出向量圖。

    Raises:
    -------
    UnknownQuantityError
        量名稱不在 PLOT_QUANTITIES
    """
    fig = create_quantity_chart(trajectory, quantity)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == '.html':
        fig.write_html(str(path), include_plotlyjs='cdn')
    else:
        fig.write_image(str(path))
    logger.debug(f'圖表已寫入: {path}')
    return path


def to_jsonable(value: Any) -> Any:
    """轉為可寫入 JSON 的結構 (dataclass、numpy、非有限浮點數)"""
    if is_dataclass(value) and not isinstance(value, type):
        return to_jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_summary(summary: Dict[str, Any], path: Union[str, Path]) -> Path:
    """寫出執行摘要 JSON (鍵排序，非有限值寫為 null)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(to_jsonable(summary), f, ensure_ascii=False, indent=2, sort_keys=True)
    return path
