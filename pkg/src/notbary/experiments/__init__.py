"""Experiment orchestration: presets, checkpoints, evaluation and the runner."""

from .checkpoint import checkpoint_paths, load_checkpoint, read_manifest, save_checkpoint
from .evaluation import evaluate, sample_dumps
from .presets import ExperimentSetup, GaussianOracle, build_problem
from .runner import RunResult, evaluate_checkpoint, run_experiment

__all__ = [
    "ExperimentSetup",
    "GaussianOracle",
    "RunResult",
    "build_problem",
    "checkpoint_paths",
    "evaluate",
    "evaluate_checkpoint",
    "load_checkpoint",
    "read_manifest",
    "run_experiment",
    "sample_dumps",
    "save_checkpoint",
]
