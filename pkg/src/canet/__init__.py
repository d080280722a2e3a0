"""Uplink-aided downlink CSI acquisition for FDD massive MIMO.

Channel simulation, a small numpy network engine, pilot design, channel
estimation and feedback frameworks, quantization and pruning, and an
experiment harness.
"""

from .channel import ScmConfig, generate_dataset, load_dataset, save_dataset
from .frameworks import Kind, TrainConfig, build_framework, evaluate, load_framework, save_framework
from .harness import ExperimentConfig, NmseReport, run_experiment, sweep
from .kernels import BACKEND
from .metrics import nmse_db

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ExperimentConfig",
    "Kind",
    "NmseReport",
    "ScmConfig",
    "TrainConfig",
    "build_framework",
    "evaluate",
    "generate_dataset",
    "load_dataset",
    "load_framework",
    "nmse_db",
    "run_experiment",
    "save_dataset",
    "save_framework",
    "sweep",
]
