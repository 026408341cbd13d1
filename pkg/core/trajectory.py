"""
流軌跡

依時間排序的 (t, 狀態, DiagnosticsRecord)，以及結束原因。
"""
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from config import EXIT_CODES, TIMESERIES_COLUMNS
from .exceptions import ParameterValidationError

TERMINATIONS = ('converged', 't_end', 'blowup_cap', 'step_failure')


@dataclass
class Trajectory:
    """
    流軌跡

    Attributes:
    -----------
    kind : str
        'rotational' 或 'mesh'
    rho : float
        整段使用的正規化常數 (角度排程時為初始值)
    times : list of float
        嚴格遞增的記錄時間
    states : list
        每筆記錄對應的狀態
    records : list of DiagnosticsRecord
    termination : str
        結束原因，屬於 TERMINATIONS
    limit : str
        收斂時辨識到的極限類型 (constant_curvature / soliton)
    reports : dict
        附帶報告 (集中報告、失敗原因、下一步 dt 等)
    """
    kind: str
    rho: float = float('nan')
    times: List[float] = field(default_factory=list)
    states: List[Any] = field(default_factory=list)
    records: List[Any] = field(default_factory=list)
    termination: Optional[str] = None
    limit: Optional[str] = None
    reports: Dict[str, Any] = field(default_factory=dict)

    def append(self, state, record) -> None:
        """附加一筆記錄；時間必須嚴格遞增"""
        if self.times and not state.t > self.times[-1]:
            raise ParameterValidationError('t', state.t, f'必須大於上一筆 {self.times[-1]}')
        self.times.append(float(state.t))
        self.states.append(state)
        self.records.append(record)

    def finish(self, termination: str, limit: str = None, **reports) -> None:
        if termination not in TERMINATIONS:
            raise ParameterValidationError('termination', termination, f'必須是 {TERMINATIONS}')
        self.termination = termination
        self.limit = limit
        self.reports.update(reports)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final_state(self):
        return self.states[-1] if self.states else None

    @property
    def final_record(self):
        return self.records[-1] if self.records else None

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.termination]

    def column(self, name: str) -> np.ndarray:
        """取出某個診斷量的時間序列 (欄位名稱或紀錄屬性名稱皆可)"""
        values = []
        for record in self.records:
            row = record.as_row()
            value = row[name] if name in row else getattr(record, name)
            values.append(np.nan if value is None else value)
        return np.array(values, dtype=float)

    def to_frame(self) -> pd.DataFrame:
        """轉為固定欄位順序的 DataFrame (無記錄時只有欄位名稱)"""
        rows = [record.as_row() for record in self.records]
        return pd.DataFrame(rows, columns=TIMESERIES_COLUMNS)

    def summary(self) -> Dict[str, Any]:
        """可寫成 JSON 的摘要"""
        final = self.final_record
        return {
            'kind': self.kind,
            'termination': self.termination,
            'limit': self.limit,
            'exit_code': self.exit_code if self.termination else None,
            'rho': self.rho,
            'n_records': len(self),
            't_final': self.times[-1] if self.times else None,
            'final': asdict(final) if final is not None else None,
        }
