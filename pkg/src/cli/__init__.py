from .commands import COMMANDS, overrides_from_args, read_lines, write_lines
from .pipeline import PipelineSettings, run_synthetic_pipeline

__all__ = ['COMMANDS', 'overrides_from_args', 'read_lines', 'write_lines', 'PipelineSettings', 'run_synthetic_pipeline']
