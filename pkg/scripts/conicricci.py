#!/usr/bin/env python3
"""
錐面 Ricci 流實驗室命令列工具

子命令: classify、flow-rotational、flow-mesh、soliton、heatkernel、
diagnose <snapshot>、preset list|run <name>。
結束碼: 0 收斂 (或非流類實驗成功)、1 使用錯誤、2 t_end、3 爆破、4 步長失敗。
"""
import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

sys.path.insert(0, str(Path(__file__).parent.parent))

from config import EXIT_CODES
from core.exceptions import ConicRicciBaseException
from core.logging_config import setup_logging, get_logger
from core.runner import (
    diagnose_snapshot,
    load_config,
    load_preset,
    parse_config,
    preset_names,
    run_experiment,
)
from core.runner.reporting import to_jsonable
from core.validators import float_list

logger = get_logger(__name__)

SUBCOMMAND_KINDS = {
    'classify': 'classify',
    'flow-rotational': 'rotational',
    'flow-mesh': 'mesh',
    'soliton': 'soliton',
    'heatkernel': 'heatkernel',
}


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', type=str, help='執行設定檔')
    parser.add_argument('--genus', type=int, help='虧格 (未給設定檔時使用)')
    parser.add_argument('--betas', type=str, help='錐角參數，例如 "0.5,0.5,0.5"')
    parser.add_argument('--out-dir', type=str, help='輸出資料夾')
    parser.add_argument('--seed', type=int, help='亂數種子')
    parser.add_argument('--resolution', type=int, help='網格解析度')
    parser.add_argument('--dt', type=float, help='初始時間步長')
    parser.add_argument('--t-end', type=float, help='結束時間')
    parser.add_argument('--restart', type=str, help='自快照接續 (僅流計算)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='錐面正規化 Ricci 流數值實驗室')
    parser.add_argument('-v', '--verbose', action='store_true', help='顯示除錯訊息')
    sub = parser.add_subparsers(dest='command', required=True)

    for command in SUBCOMMAND_KINDS:
        _add_run_flags(sub.add_parser(command, help=f'{command} 實驗'))

    diagnose = sub.add_parser('diagnose', help='對快照計算診斷量')
    diagnose.add_argument('snapshot', type=str, help='快照檔')
    diagnose.add_argument('--seed', type=int, help='取樣種子')

    preset = sub.add_parser('preset', help='預設實驗')
    preset_sub = preset.add_subparsers(dest='preset_command', required=True)
    preset_sub.add_parser('list', help='列出預設')
    run = preset_sub.add_parser('run', help='執行預設')
    run.add_argument('name', type=str, help='預設名稱')
    for flag, kind in (('--out-dir', str), ('--seed', int), ('--resolution', int),
                       ('--dt', float), ('--t-end', float)):
        run.add_argument(flag, type=kind)
    return parser


def _config_from_args(args, kind: str):
    """由 --config 或 --genus/--betas 建立設定並套用 CLI 覆寫"""
    if args.config:
        config = load_config(args.config)
    else:
        genus = 0 if args.genus is None else args.genus
        betas = ', '.join(str(b) for b in float_list(args.betas or ''))
        config = parse_config(
            f'[run]\nkind = {kind}\nname = {kind}\n[surface]\ngenus = {genus}\nbetas = {betas}\n'
        )
    config = dataclasses.replace(config, kind=kind)
    config = config.with_overrides(resolution=args.resolution, dt=args.dt, t_end=args.t_end)
    return config.with_seed(args.seed)


def _print_json(payload) -> None:
    print(json.dumps(to_jsonable(payload), ensure_ascii=False, indent=2, sort_keys=True))


def main(argv: Optional[List[str]] = None) -> int:
    """主程式，回傳結束碼"""
    parser = build_parser()
    args = parser.parse_args(argv)
    # stdout 保留給 JSON 結果
    setup_logging(level=logging.DEBUG if args.verbose else logging.INFO, format_style='simple',
                  stream=sys.stderr)

    try:
        if args.command == 'diagnose':
            _print_json(diagnose_snapshot(args.snapshot, seed=args.seed))
            return 0

        if args.command == 'preset':
            if args.preset_command == 'list':
                for name in preset_names():
                    print(name)
                return 0
            config = load_preset(args.name)
            config = config.with_overrides(resolution=args.resolution, dt=args.dt, t_end=args.t_end)
            result = run_experiment(config.with_seed(args.seed), args.out_dir)
        else:
            config = _config_from_args(args, SUBCOMMAND_KINDS[args.command])
            result = run_experiment(config, args.out_dir, restart=args.restart)

    except ConicRicciBaseException as exc:
        logger.error(str(exc))
        print(f'錯誤: {exc}', file=sys.stderr)
        return EXIT_CODES['usage_error']

    _print_json({'name': result.name, 'kind': result.kind, 'termination': result.termination,
                 'exit_code': result.exit_code, 'report': result.report,
                 'artifacts': {k: str(v) for k, v in result.artifacts.items()}})
    return result.exit_code


if __name__ == '__main__':
    sys.exit(main())
