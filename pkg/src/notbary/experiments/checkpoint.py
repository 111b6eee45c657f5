"""Checkpoints: a JSON manifest next to a float64 parameter blob.

``<stem>.json`` holds a `CheckpointManifest`; ``<stem>.bin`` holds every
tensor listed in the manifest, back to back as little-endian doubles:
map parameters, potential parameters, then the Adam first moments and
second moments of both optimizers in the same order.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
from pydantic import ValidationError

from ..diffmath import AdamState, Node, pack_arrays, unpack_arrays
from ..errors import ContractError, CorruptCheckpointError
from ..schemas import CheckpointManifest, ExperimentConfig, OptimizerMeta, TensorEntry
from ..solver import BarycenterProblem, TrainState, init_state
from ..utils import atomic_write_bytes, atomic_write_text

logger = logging.getLogger(__name__)


def checkpoint_paths(path: str | Path) -> Tuple[Path, Path]:
    """Manifest and blob paths for a stem (a ``.json``/``.bin`` suffix is ignored)."""
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return Path(f"{p}.json"), Path(f"{p}.bin")


def _named_map_params(state: TrainState) -> List[Tuple[str, Node]]:
    named: List[Tuple[str, Node]] = []
    for k, model in enumerate(state.models):
        named.extend(model.named_parameters(f"T{k + 1}."))
    return named


def _named_tensors(state: TrainState) -> List[Tuple[str, np.ndarray]]:
    maps = _named_map_params(state)
    pots = state.bank.named_parameters("f.")
    out: List[Tuple[str, np.ndarray]] = [(n, p.value) for n, p in maps + pots]
    for tag, named, opt in (("opt_t", maps, state.opt_t), ("opt_f", pots, state.opt_f)):
        out.extend((f"{tag}.m.{n}", m) for (n, _), m in zip(named, opt.m))
    for tag, named, opt in (("opt_t", maps, state.opt_t), ("opt_f", pots, state.opt_f)):
        out.extend((f"{tag}.v.{n}", v) for (n, _), v in zip(named, opt.v))
    return out


def save_checkpoint(
    state: TrainState, problem: BarycenterProblem, config: ExperimentConfig, path: str | Path
) -> Path:
    """Write the manifest and blob atomically; returns the manifest path."""
    manifest_path, blob_path = checkpoint_paths(path)
    entries, blob = pack_arrays(_named_tensors(state))
    manifest = CheckpointManifest(
        config_hash=config.config_hash(),
        epoch=state.epoch,
        tensors=[TensorEntry.model_validate(e) for e in entries],
        optimizers={
            "opt_f": OptimizerMeta(step=state.opt_f.step, lr=state.opt_f.lr),
            "opt_t": OptimizerMeta(step=state.opt_t.step, lr=state.opt_t.lr),
        },
        rng=problem.rng_states(),
        models=[m.manifest() for m in state.models],
        potentials=state.bank.manifest(),
        history=list(state.history),
    )
    # blob first, so a manifest on disk always has its blob
    atomic_write_bytes(blob_path, blob)
    atomic_write_text(manifest_path, manifest.model_dump_json(indent=2) + "\n")
    logger.debug("checkpoint at epoch %d written to %s", state.epoch, manifest_path)
    return manifest_path


def read_manifest(path: str | Path) -> CheckpointManifest:
    """Parse a checkpoint manifest.

    Raises:
        CorruptCheckpointError: If the file is missing or not a valid manifest.
    """
    manifest_path, _ = checkpoint_paths(path)
    try:
        return CheckpointManifest.model_validate(json.loads(manifest_path.read_text(encoding="utf-8")))
    except (OSError, ValueError, ValidationError) as exc:
        raise CorruptCheckpointError("checkpoint manifest unreadable", {"path": str(manifest_path)}) from exc


def _restore_optimizer(opt: AdamState, meta: OptimizerMeta, tag: str, names: List[str], arrays: Dict[str, np.ndarray]) -> None:
    opt.step = meta.step
    opt.lr = meta.lr
    opt.m = [arrays[f"{tag}.m.{n}"].copy() for n in names]
    opt.v = [arrays[f"{tag}.v.{n}"].copy() for n in names]


def load_checkpoint(path: str | Path, problem: BarycenterProblem, config: ExperimentConfig) -> TrainState:
    """Rebuild the training state saved by `save_checkpoint`.

    Networks are rebuilt from ``config`` and overwritten with the stored
    values; the problem's random streams are moved to the recorded states.

    Raises:
        CorruptCheckpointError: On a config hash mismatch, a blob whose
            length disagrees with the manifest, or tensors that do not match
            the configured networks.
    """
    manifest = read_manifest(path)
    _, blob_path = checkpoint_paths(path)
    expected = config.config_hash()
    if manifest.config_hash != expected:
        raise CorruptCheckpointError(
            "checkpoint was written for a different config",
            {"checkpoint": manifest.config_hash, "config": expected},
        )
    try:
        blob = blob_path.read_bytes()
    except OSError as exc:
        raise CorruptCheckpointError("checkpoint blob unreadable", {"path": str(blob_path)}) from exc
    arrays = unpack_arrays([e.model_dump() for e in manifest.tensors], blob)

    state = init_state(problem, config.train)
    if [m.manifest() for m in state.models] != manifest.models:
        raise CorruptCheckpointError("stored plan models differ from the configured ones")
    maps = _named_map_params(state)
    pots = state.bank.named_parameters("f.")
    for name, node in maps + pots:
        stored = arrays.get(name)
        if stored is None or stored.shape != node.shape:
            raise CorruptCheckpointError("tensor missing or misshapen", {"name": name})
        node.value = stored.copy()
    try:
        _restore_optimizer(state.opt_t, manifest.optimizers["opt_t"], "opt_t", [n for n, _ in maps], arrays)
        _restore_optimizer(state.opt_f, manifest.optimizers["opt_f"], "opt_f", [n for n, _ in pots], arrays)
    except KeyError as exc:
        raise CorruptCheckpointError("optimizer state incomplete", {"missing": str(exc)}) from exc

    try:
        problem.set_rng_states(manifest.rng)
    except ContractError as exc:
        raise CorruptCheckpointError("stored random streams do not match the problem", exc.details) from exc
    state.epoch = manifest.epoch
    state.history = list(manifest.history)
    logger.info("resumed from %s at epoch %d", path, state.epoch)
    return state
