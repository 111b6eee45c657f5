"""Command-line entry point.

    notbary run <config.json>... [--out DIR] [--seed N] [--jobs J] [--resume CKPT]
    notbary eval <checkpoint> <config.json>
    notbary oracle gaussian <instance.json>

Exit status is 0 on success, 2 for usage and config errors, 3 when
training diverged and 1 for any other failure. Errors are printed to
stderr as a JSON payload ``{code, message, details}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple

from .config import Settings, apply_thread_cap, configure_logging, load_settings
from .errors import AppError, ConfigError, DivergenceError, IOErrorApp, to_error_payload
from .gaussian_oracle import solve_instance
from .schemas import ExperimentConfig, validate_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3


def _read_json(path: str | Path) -> Any:
    p = Path(path)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IOErrorApp(f"file not readable: {p}", {"path": str(p)}) from exc
    except json.JSONDecodeError as exc:
        raise IOErrorApp(f"invalid JSON in {p}: {exc.msg}", {"path": str(p), "line": exc.lineno}) from exc


def parse_config(path: str | Path) -> ExperimentConfig:
    """Read and validate an experiment config file.

    Raises:
        ConfigError: If the file is not a JSON object, has unknown keys or
            violates an invariant.
        IOErrorApp: If the file cannot be read or parsed.
    """
    data = _read_json(path)
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", {"path": str(path)})
    return validate_config(data)


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, (ConfigError, IOErrorApp)):
        return EXIT_USAGE
    if isinstance(error, DivergenceError):
        return EXIT_DIVERGED
    return EXIT_FAILURE


def _print_error(payload: Any) -> None:
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def _override(config: ExperimentConfig, out: Optional[Path], seed: Optional[int]) -> ExperimentConfig:
    data = config.effective()
    if out is not None:
        data["output_dir"] = str(out)
    if seed is not None:
        data["train"]["seed"] = seed
    return validate_config(data)


def _run_one(job: Tuple[str, Optional[str], Optional[int], Optional[str], str]) -> Tuple[int, Any]:
    """Run one config in the current process; returns ``(exit_code, summary)``."""
    from .experiments import run_experiment

    path, out, seed, resume, log_level = job
    configure_logging(log_level)
    try:
        config = _override(parse_config(path), Path(out) if out else None, seed)
        result = run_experiment(config, resume=resume)
    except AppError as exc:
        return exit_code_for(exc), to_error_payload(exc, path_hint=path)
    if result.status == "diverged":
        return EXIT_DIVERGED, result.error
    if not result.ok:
        return EXIT_FAILURE, result.error
    return EXIT_OK, {"config": path, "output_dir": str(result.output_dir)}


def _cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    configs: List[str] = args.configs
    if args.resume and len(configs) != 1:
        raise ConfigError("--resume takes exactly one config", {"key": "resume"})
    jobs = []
    for path in configs:
        out = args.out
        if out is not None and len(configs) > 1:
            out = str(Path(out) / Path(path).stem)
        jobs.append((path, out, args.seed, args.resume, settings.log_level))

    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]

    worst = EXIT_OK
    for code, summary in results:
        if code == EXIT_OK:
            print(json.dumps(summary, sort_keys=True))
        else:
            _print_error(summary)
            worst = max(worst, code)
    return worst


def _cmd_eval(args: argparse.Namespace, settings: Settings) -> int:
    from .experiments import evaluate_checkpoint

    config = parse_config(args.config)
    report = evaluate_checkpoint(args.checkpoint, config)
    print(report.model_dump_json(indent=2))
    return EXIT_OK


def _cmd_oracle(args: argparse.Namespace, settings: Settings) -> int:
    payload = _read_json(args.instance)
    if not isinstance(payload, dict):
        raise ConfigError("instance must be a JSON object", {"path": args.instance})
    print(json.dumps(solve_instance(payload), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="notbary", description="Weak optimal-transport barycenter solver")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train and evaluate one or more experiment configs")
    run.add_argument("configs", nargs="+", help="experiment config JSON files")
    run.add_argument("--out", help="output directory (one subdirectory per config when several are given)")
    run.add_argument("--seed", type=int, help="override train.seed")
    run.add_argument("--jobs", type=int, default=1, help="run configs in this many processes")
    run.add_argument("--resume", help="checkpoint to continue training from")
    run.set_defaults(handler=_cmd_run)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("checkpoint", help="checkpoint manifest or stem")
    ev.add_argument("config", help="config the checkpoint was trained with")
    ev.set_defaults(handler=_cmd_eval)

    oracle = sub.add_parser("oracle", help="closed-form oracles")
    oracle_sub = oracle.add_subparsers(dest="oracle", required=True)
    gauss = oracle_sub.add_parser("gaussian", help="fixed-point barycenter and Monge maps of Gaussians")
    gauss.add_argument("instance", help='JSON file {"gaussians": [{"mean", "cov"}], "weights"}')
    gauss.set_defaults(handler=_cmd_oracle)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, dispatch the sub-command and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if getattr(args, "jobs", 1) < 1:
        _print_error({"code": "BAD_CONFIG", "message": "--jobs must be >= 1", "details": {"key": "jobs"}})
        return EXIT_USAGE

    settings = load_settings()
    apply_thread_cap(settings)
    configure_logging(settings.log_level)
    try:
        return args.handler(args, settings)
    except AppError as exc:
        _print_error(to_error_payload(exc))
        return exit_code_for(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
