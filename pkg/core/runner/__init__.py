# Runner module
from .run_config import RunConfig, parse_config, load_config
from .snapshot import Snapshot, snapshot_write, snapshot_read, read_snapshot
from .reporting import emit_timeseries, emit_plot, write_summary
from .experiment import (
    ExperimentResult,
    run_experiment,
    run_preset,
    run_sweep,
    preset_names,
    load_preset,
    diagnose_snapshot,
)

__all__ = [
    'RunConfig', 'parse_config', 'load_config',
    'Snapshot', 'snapshot_write', 'snapshot_read', 'read_snapshot',
    'emit_timeseries', 'emit_plot', 'write_summary',
    'ExperimentResult', 'run_experiment', 'run_preset', 'run_sweep',
    'preset_names', 'load_preset', 'diagnose_snapshot',
]
