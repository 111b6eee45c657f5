"""Run an experiment end to end and write its artifacts.

Layout of an output directory::

    config.effective.json      complete config with defaults applied
    history.csv                epoch, v_f, v_t_1..v_t_K, wall_ms
    metrics.json               MetricReport (partial when training failed)
    samples/<stem>.csv         input, pushforward, pooled and ground-truth samples
    checkpoints/epoch-NNNNNN   periodic checkpoints (.json + .bin)
    checkpoints/final          state after the last completed epoch
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..config import Settings, load_settings
from ..errors import AppError, DivergenceError, ErrorPayload, to_error_payload
from ..schemas import ExperimentConfig, HistoryRecord, MetricReport
from ..solver import TrainState, init_state, train
from ..utils import atomic_write_json, write_csv
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluation import evaluate, sample_dumps
from .presets import ExperimentSetup, build_problem

logger = logging.getLogger(__name__)

HISTORY_SCHEMA = "history"
SAMPLES_SCHEMA = "samples"


@dataclass
class RunResult:
    """Outcome of `run_experiment`.

    Attributes:
        status: ``ok``, ``diverged`` or ``failed``.
        output_dir: Directory holding the artifacts.
        report: The report written to ``metrics.json``.
        error: Error payload when the run did not finish.
    """

    status: str
    output_dir: Path
    report: MetricReport
    error: Optional[ErrorPayload] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def output_dir_for(config: ExperimentConfig, settings: Settings) -> Path:
    if config.output_dir is not None:
        return Path(config.output_dir)
    return settings.output_dir / config.experiment


def write_history(path: Path, history: list[HistoryRecord], K: int) -> Path:
    header = ["epoch", "v_f", *[f"v_t_{k + 1}" for k in range(K)], "wall_ms"]
    return write_csv(path, header, (r.row() for r in history), schema=HISTORY_SCHEMA)


def write_samples(out: Path, state: TrainState, setup: ExperimentSetup, rows: int) -> None:
    header = [f"x{i + 1}" for i in range(setup.problem.dim)]
    for stem, values in sample_dumps(state, setup, rows).items():
        write_csv(out / "samples" / f"{stem}.csv", header, (list(map(float, r)) for r in values), schema=SAMPLES_SCHEMA)


def _failure_report(config: ExperimentConfig, state: Optional[TrainState], status: str, error: ErrorPayload) -> MetricReport:
    return MetricReport(
        experiment=config.experiment,
        seed=config.train.seed,
        status=status,  # type: ignore[arg-type]
        partial=True,
        error=dict(error),
        epochs_completed=state.epoch if state is not None else 0,
    )


def run_experiment(
    config: ExperimentConfig,
    *,
    settings: Optional[Settings] = None,
    resume: Optional[str | Path] = None,
) -> RunResult:
    """Train, evaluate and write every artifact for ``config``.

    Args:
        config: Validated experiment config.
        settings: Process settings; loaded from the environment when omitted.
        resume: Checkpoint to continue from instead of fresh networks.

    Returns:
        The run outcome. Divergence and other application errors are
        recorded in ``metrics.json`` with ``partial: true`` and returned
        rather than raised.
    """
    settings = settings or load_settings()
    out = output_dir_for(config, settings)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_json(out / "config.effective.json", config.effective())
    logger.info("running %s (config %s) into %s", config.experiment, config.config_hash()[:12], out)

    setup = build_problem(config)
    problem = setup.problem
    state: Optional[TrainState] = None
    every = config.train.checkpoint_every

    def on_epoch(s: TrainState) -> None:
        if not settings.record_wall_clock:
            s.history[-1].wall_ms = 0.0
        if every and s.epoch % every == 0:
            save_checkpoint(s, problem, config, out / "checkpoints" / f"epoch-{s.epoch:06d}")

    try:
        state = load_checkpoint(resume, problem, config) if resume is not None else init_state(problem, config.train)
        state = train(problem, config.train, state, on_epoch=on_epoch)
        save_checkpoint(state, problem, config, out / "checkpoints" / "final")
        write_history(out / "history.csv", state.history, problem.K)
        report = evaluate(state, setup, config)
        rows = config.eval.sample_dump_rows or settings.sample_dump_rows
        write_samples(out, state, setup, rows)
    except DivergenceError as exc:
        logger.error("run %s diverged: %s", config.experiment, exc)
        return _finish_failed(out, config, state, problem.K, "diverged", exc)
    except AppError as exc:
        logger.error("run %s failed: %s", config.experiment, exc)
        return _finish_failed(out, config, state, problem.K, "failed", exc)

    atomic_write_json(out / "metrics.json", report.model_dump(mode="json"))
    logger.info("wrote metrics, history and samples to %s", out)
    return RunResult("ok", out, report)


def _finish_failed(
    out: Path, config: ExperimentConfig, state: Optional[TrainState], K: int, status: str, exc: Exception
) -> RunResult:
    error = to_error_payload(exc)
    if state is not None:
        write_history(out / "history.csv", state.history, K)
    report = _failure_report(config, state, status, error)
    atomic_write_json(out / "metrics.json", report.model_dump(mode="json"))
    return RunResult(status, out, report, error)


def evaluate_checkpoint(checkpoint: str | Path, config: ExperimentConfig) -> MetricReport:
    """Load a checkpoint written for ``config`` and report on it."""
    setup = build_problem(config)
    state = load_checkpoint(checkpoint, setup.problem, config)
    return evaluate(state, setup, config)
