"""
執行設定檔解析

格式為 `key = value`、`[section]` 區段與 `#` 註解。區段:
[run]、[surface]、[numerics]、[schedule] (每行 `t = β1, β2, ...`)、[output]。
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from ..cone_geometry import ConicSurfaceSpec
from ..conformal_flow import BetaSchedule
from ..exceptions import (
    ConfigParseError,
    MissingConfigKeysError,
    UnknownConfigKeyError,
    ValidationException,
)
from ..validators import RunParamsValidator, float_list
from ..logging_config import get_logger

logger = get_logger(__name__)

REQUIRED_KEYS = (('run', 'kind'), ('surface', 'genus'))
SECTIONS = ('run', 'surface', 'numerics', 'schedule', 'output')
KEY_ALIASES = {('surface', 'beta'): 'betas'}


@dataclass(frozen=True)
class RunConfig:
    """
    驗證後的執行設定

    Attributes:
    -----------
    kind : str
        rotational / mesh / soliton / heatkernel / classify
    spec : ConicSurfaceSpec
    numerics : dict
        數值參數 (含預設值)
    schedule : BetaSchedule, optional
        錐角排程，僅網格流使用
    output : dict
    seed : int
        診斷取樣與初始擾動的亂數種子
    """
    kind: str
    name: str
    spec: ConicSurfaceSpec
    numerics: Dict[str, Any]
    output: Dict[str, Any]
    seed: int
    schedule: Optional[BetaSchedule] = None
    source: Optional[str] = field(default=None, compare=False)

    def with_overrides(self, **numerics) -> 'RunConfig':
        """覆寫數值參數 (CLI 旗標)，重新驗證"""
        merged = {**self.numerics, **{k: v for k, v in numerics.items() if v is not None}}
        validated = RunParamsValidator.validate_numerics_params(merged)
        return RunConfig(self.kind, self.name, self.spec, validated, self.output,
                         self.seed, self.schedule, self.source)

    def with_seed(self, seed: Optional[int]) -> 'RunConfig':
        if seed is None:
            return self
        RunParamsValidator.validate_run_params({'kind': self.kind, 'name': self.name, 'seed': seed})
        return RunConfig(self.kind, self.name, self.spec, self.numerics, self.output,
                         int(seed), self.schedule, self.source)


def _strip_comment(line: str) -> str:
    return line.split('#', 1)[0].strip()


def _tokenize(text: str) -> Tuple[Dict[str, Dict[str, str]], Dict[Tuple[str, str], Tuple[int, str]],
                                   list]:
    """
    逐行切出 (區段, 鍵, 值)

    Returns:
    --------
    tuple
        (sections, locations, schedule_rows)；locations 記錄每個鍵的 (行號, 原始行)
    """
    sections: Dict[str, Dict[str, str]] = {name: {} for name in SECTIONS if name != 'schedule'}
    locations: Dict[Tuple[str, str], Tuple[int, str]] = {}
    schedule_rows = []
    defs = RunParamsValidator.section_defs()
    current = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if line.startswith('['):
            if not line.endswith(']'):
                raise ConfigParseError(line_no, raw, '區段標頭缺少 ]')
            current = line[1:-1].strip().lower()
            if current not in SECTIONS:
                raise ConfigParseError(line_no, raw, f'未知區段，可用: {list(SECTIONS)}')
            continue
        if '=' not in line:
            raise ConfigParseError(line_no, raw, '必須為 key = value')
        if current is None:
            raise ConfigParseError(line_no, raw, '設定鍵必須位於區段之內')

        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigParseError(line_no, raw, '鍵名不可為空')

        if current == 'schedule':
            try:
                schedule_rows.append((line_no, raw, float(key), tuple(float_list(value))))
            except ValueError:
                raise ConfigParseError(line_no, raw, '排程列必須為 t = β1, β2, ...')
            continue

        key = KEY_ALIASES.get((current, key), key)
        if key not in defs[current]:
            raise UnknownConfigKeyError(current, key, line_no)
        if (current, key) in locations:
            raise ConfigParseError(line_no, raw, f'鍵 {key} 重複')
        sections[current][key] = value
        locations[(current, key)] = (line_no, raw)

    return sections, locations, schedule_rows


def _validation_failure(exc: ValidationException, section: str,
                        locations: Dict[Tuple[str, str], Tuple[int, str]]) -> ConfigParseError:
    """將驗證錯誤轉為帶行號的 ConfigParseError"""
    name = str(getattr(exc, 'param_name', '') or '').split('[', 1)[0]
    if (section, name) not in locations:
        name = next((key for (sec, key) in locations if sec == section), '')
    line_no, raw = locations.get((section, name), (0, ''))
    error = ConfigParseError(line_no, raw, str(exc))
    error.__cause__ = exc
    return error


def parse_config(text: str, source: str = None) -> RunConfig:
    """
    解析並驗證執行設定

    Parameters:
    -----------
    text : str
        設定檔內容
    source : str, optional
        來源路徑，僅用於記錄

    Returns:
    --------
    RunConfig

    Raises:
    -------
    ConfigParseError
        語法、型別或不變量錯誤 (附行號)
    UnknownConfigKeyError
        未知的鍵
    MissingConfigKeysError
        缺少 run.kind 或 surface.genus
    """
    sections, locations, schedule_rows = _tokenize(text)

    missing = [f'{sec}.{key}' for sec, key in REQUIRED_KEYS if key not in sections[sec]]
    if missing:
        raise MissingConfigKeysError(missing)

    validated = {}
    for section, validate in (
        ('run', RunParamsValidator.validate_run_params),
        ('surface', RunParamsValidator.validate_surface_params),
        ('numerics', RunParamsValidator.validate_numerics_params),
        ('output', RunParamsValidator.validate_output_params),
    ):
        try:
            validated[section] = validate(sections[section])
        except ValidationException as exc:
            raise _validation_failure(exc, section, locations)

    surface = validated['surface']
    try:
        spec = ConicSurfaceSpec(surface['genus'], tuple(surface['betas']), tuple(surface['labels']))
    except ValidationException as exc:
        raise _validation_failure(exc, 'surface', locations)

    schedule = None
    if schedule_rows:
        try:
            schedule = BetaSchedule(tuple(row[2] for row in schedule_rows),
                                    tuple(row[3] for row in schedule_rows))
        except ValidationException as exc:
            line_no, raw = schedule_rows[0][0], schedule_rows[0][1]
            raise ConfigParseError(line_no, raw, str(exc)) from exc
        if len(schedule.values[0]) != spec.k:
            line_no, raw = schedule_rows[0][0], schedule_rows[0][1]
            raise ConfigParseError(line_no, raw, f'排程每列必須有 {spec.k} 個錐角')

    run = validated['run']
    config = RunConfig(
        kind=run['kind'],
        name=run['name'],
        spec=spec,
        numerics=validated['numerics'],
        output=validated['output'],
        seed=run['seed'],
        schedule=schedule,
        source=source,
    )
    logger.debug(f'設定解析完成: {config.name} ({config.kind})')
    return config


def load_config(path: Union[str, Path]) -> RunConfig:
    """讀取並解析設定檔"""
    path = Path(path)
    return parse_config(path.read_text(encoding='utf-8'), source=str(path))
