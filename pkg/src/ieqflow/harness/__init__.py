"""Configuration, runs, experiment sweeps, output files and the CLI."""
from .config import PRESETS, ConfigError, RunConfig, load_config, preset_config
from .experiments import (RunError, RunResult, experiment_drop_shear, experiment_iterations,
                          experiment_spatial_convergence, experiment_temporal_convergence,
                          run)
from .io import CheckpointFormatError, checkpoint_read, checkpoint_write

__all__ = ["PRESETS", "ConfigError", "RunConfig", "load_config", "preset_config", "RunError",
           "RunResult", "experiment_drop_shear", "experiment_iterations",
           "experiment_spatial_convergence", "experiment_temporal_convergence", "run",
           "CheckpointFormatError", "checkpoint_read", "checkpoint_write"]
