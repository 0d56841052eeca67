"""Benchmark harness: configuration, pipeline commands, reports and figures."""

from .config import PipelineConfig, load_config, synthetic_preset
from .pipeline import (
    DescriptorCache,
    cmd_ablate,
    cmd_eval,
    cmd_sweep_dict,
    cmd_synth,
    cmd_train,
)

__all__ = [
    "DescriptorCache",
    "PipelineConfig",
    "cmd_ablate",
    "cmd_eval",
    "cmd_sweep_dict",
    "cmd_synth",
    "cmd_train",
    "load_config",
    "synthetic_preset",
]
