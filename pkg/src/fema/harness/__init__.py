"""Experiment harness: configs, training runs, sweeps, reports, eval."""

from .ablate import cmd_ablate
from .config import RunConfig, SchemaWarning, parse_config, parse_text, render_config
from .evaluate import cmd_eval
from .report import cmd_report
from .train import cmd_train, run_config, run_seed

__all__ = [
    "RunConfig",
    "SchemaWarning",
    "cmd_ablate",
    "cmd_eval",
    "cmd_report",
    "cmd_train",
    "parse_config",
    "parse_text",
    "render_config",
    "run_config",
    "run_seed",
]
