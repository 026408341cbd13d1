"""
狀態快照 (CONICRICCI-SNAPSHOT v1)

純文字格式，浮點數以 17 位有效數字寫出，讀回後逐位元相同。最後一行為
前面所有文字的 SHA-256 校驗和；檔案截斷或被改動都會被偵測。
"""
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from config import SNAPSHOT_HEADER
from ..conformal_flow import MeshFlowState
from ..conic_mesh import mesh_from_lines, mesh_to_lines
from ..exceptions import ConfigParseError, SnapshotChecksumError, SnapshotVersionError
from ..model_cone import PolarField
from ..rotational_flow import RotationalState
from ..utils import format_float
from ..logging_config import get_logger

logger = get_logger(__name__)

STATE_KINDS = ('rotational', 'mesh', 'polar')


@dataclass
class Snapshot:
    """讀回的快照：狀態與附帶的中繼資料 (ρ、下一步 dt 等)"""
    kind: str
    state: Any
    metadata: Dict[str, Any] = field(default_factory=dict)


def _array_line(name: str, values: np.ndarray) -> str:
    values = np.asarray(values, dtype=float).ravel()
    return ' '.join(['array', name, str(len(values))] + [format_float(v) for v in values])


def _meta_line(key: str, value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        value = int(value)
    if isinstance(value, (int, np.integer)):
        return f'meta {key} int {int(value)}'
    if isinstance(value, (float, np.floating)):
        return f'meta {key} float {format_float(value)}'
    return f'meta {key} str {value}'


def _body_lines(state, metadata: Dict[str, Any]) -> List[str]:
    if isinstance(state, RotationalState):
        lines = [
            'kind rotational',
            f't {format_float(state.t)}',
            f'beta_minus {format_float(state.beta_minus)}',
            f'beta_plus {format_float(state.beta_plus)}',
            f'shift {int(state.shift)}',
            _array_line('x', state.x),
            _array_line('w', state.w),
            _array_line('w_background', state.w_background),
        ]
    elif isinstance(state, MeshFlowState):
        lines = ['kind mesh', f't {format_float(state.t)}', 'mesh begin']
        lines += mesh_to_lines(state.mesh)
        lines += [
            'mesh end',
            _array_line('beta_current', state.beta_current),
            _array_line('phi', state.phi),
        ]
    elif isinstance(state, PolarField):
        lines = [
            'kind polar',
            _array_line('radii', state.radii),
            _array_line('angles', state.angles),
            _array_line('values', state.values),
        ]
    else:
        raise TypeError(f'不支援的狀態類型: {type(state).__name__}')
    return lines + [_meta_line(key, value) for key, value in sorted(metadata.items())]


def snapshot_text(state, metadata: Dict[str, Any] = None) -> str:
    """快照的完整文字 (含校驗和行)"""
    body = '\n'.join([SNAPSHOT_HEADER] + _body_lines(state, metadata or {})) + '\n'
    digest = hashlib.sha256(body.encode('utf-8')).hexdigest()
    return body + f'checksum sha256 {digest}\n'


def snapshot_write(state, path: Union[str, Path], metadata: Dict[str, Any] = None) -> Path:
    """
    寫入狀態快照

    Parameters:
    -----------
    state : RotationalState, MeshFlowState or PolarField
    path : str or Path
    metadata : dict, optional
        額外的純量 (int / float / str)，例如 rho、dt_next、initial_area
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(snapshot_text(state, metadata), encoding='utf-8')
    logger.debug(f'快照已寫入: {path}')
    return path


def _verify(text: str, path: str) -> List[str]:
    """檢查標頭與校驗和，回傳本文各行"""
    first = text.split('\n', 1)[0].strip()
    if first != SNAPSHOT_HEADER:
        raise SnapshotVersionError(first, SNAPSHOT_HEADER)

    body, sep, tail = text.rstrip('\n').rpartition('\n')
    parts = tail.split()
    if not sep or len(parts) != 3 or parts[:2] != ['checksum', 'sha256']:
        raise SnapshotChecksumError(path, '缺少校驗和行 (檔案可能被截斷)')
    digest = hashlib.sha256((body + '\n').encode('utf-8')).hexdigest()
    if digest != parts[2]:
        raise SnapshotChecksumError(path, '校驗和不符')
    return body.split('\n')[1:]


def _parse_array(parts: Sequence[str], line_no: int, line: str) -> np.ndarray:
    count = int(parts[2])
    values = np.array([float(v) for v in parts[3:]], dtype=float)
    if len(values) != count:
        raise ConfigParseError(line_no, line, f'陣列長度 {len(values)} 與宣告 {count} 不符')
    return values


def _parse_meta(parts: Sequence[str]) -> Any:
    kind, raw = parts[2], ' '.join(parts[3:])
    if kind == 'int':
        return int(raw)
    if kind == 'float':
        return float(raw)
    return raw


def parse_snapshot(text: str, path: str = '<text>') -> Snapshot:
    """
    解析快照文字

    Raises:
    -------
    SnapshotVersionError
        標頭不是 CONICRICCI-SNAPSHOT v1
    SnapshotChecksumError
        校驗和缺失或不符
    ConfigParseError
        本文語法錯誤
    """
    lines = _verify(text, path)
    scalars: Dict[str, str] = {}
    arrays: Dict[str, np.ndarray] = {}
    metadata: Dict[str, Any] = {}
    mesh = None

    index = 0
    while index < len(lines):
        line = lines[index]
        line_no = index + 2
        parts = line.split()
        try:
            if not parts:
                pass
            elif parts == ['mesh', 'begin']:
                end = lines.index('mesh end', index)
                mesh = mesh_from_lines(lines[index + 1:end], first_line_no=line_no + 1)
                index = end
            elif parts[0] == 'array':
                arrays[parts[1]] = _parse_array(parts, line_no, line)
            elif parts[0] == 'meta':
                metadata[parts[1]] = _parse_meta(parts)
            elif len(parts) == 2:
                scalars[parts[0]] = parts[1]
            else:
                raise ConfigParseError(line_no, line, '無法辨識的快照行')
        except (IndexError, ValueError) as exc:
            raise ConfigParseError(line_no, line, f'快照行格式錯誤: {exc}')
        index += 1

    kind = scalars.get('kind')
    if kind not in STATE_KINDS:
        raise ConfigParseError(2, lines[0] if lines else '', f'未知的快照類型 {kind!r}')

    try:
        state = _build_state(kind, scalars, arrays, mesh)
    except KeyError as exc:
        raise ConfigParseError(2, lines[0], f'快照缺少欄位 {exc}')
    return Snapshot(kind, state, metadata)


def _build_state(kind: str, scalars: Dict[str, str], arrays: Dict[str, np.ndarray], mesh):
    if kind == 'rotational':
        return RotationalState(
            t=float(scalars['t']),
            x=arrays['x'],
            w=arrays['w'],
            beta_minus=float(scalars['beta_minus']),
            beta_plus=float(scalars['beta_plus']),
            w_background=arrays['w_background'],
            shift=int(scalars['shift']),
        )
    if kind == 'mesh':
        if mesh is None:
            raise KeyError('mesh')
        return MeshFlowState(mesh, arrays['phi'], float(scalars['t']),
                             tuple(float(b) for b in arrays['beta_current']))
    radii, angles = arrays['radii'], arrays['angles']
    return PolarField(radii, angles, arrays['values'].reshape(len(radii), len(angles)))


def read_snapshot(path: Union[str, Path]) -> Snapshot:
    """讀取快照 (含中繼資料)"""
    path = Path(path)
    return parse_snapshot(path.read_text(encoding='utf-8'), str(path))


def snapshot_read(path: Union[str, Path]):
    """讀取快照，只回傳狀態"""
    return read_snapshot(path).state
