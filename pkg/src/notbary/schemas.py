"""Pydantic schemas for experiment configs, history rows, reports and checkpoints.

These models are the stable JSON contracts of the CLI. Experiment configs
reject unknown keys and are completed from a named preset, so the
effective config written next to the artifacts is a full document that
parses back to the same model.

Example:
    >>> cfg = ExperimentConfig.model_validate({"experiment": "twister"})
    >>> cfg.train.batch_size, cfg.train.inner_steps, cfg.train.epochs
    (1024, 3, 1200)
"""

from __future__ import annotations

import copy
import hashlib
import json
from typing import Any, Dict, List, Literal, Optional

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    ValidationInfo,
    field_validator,
    model_validator,
)

from .errors import ConfigError

ExperimentName = Literal["twister", "gaussian-benchmark", "dirac-sanity"]
CostFamily = Literal["classical", "kl", "energy"]
GroundName = Literal["sqeuclidean", "twisted"]
PlanKindName = Literal["deterministic", "stochastic", "gaussian"]

WEIGHT_SUM_TOL = 1e-12


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PriorConfig(_Strict):
    """Diagonal Gaussian prior ``N(mean, diag(variance))``."""

    mean: List[float]
    variance: List[float]

    @model_validator(mode="after")
    def _check(self) -> "PriorConfig":
        if len(self.mean) != len(self.variance) or not self.mean:
            raise ValueError("prior mean and variance must have the same nonzero length")
        if any(v <= 0 for v in self.variance):
            raise ValueError("prior variances must be positive")
        return self


class CostConfig(_Strict):
    """Weak cost family and its parameters.

    Attributes:
        family: ``classical``, ``kl`` (epsilon-KL) or ``energy`` (gamma-Energy).
        ground: Ground cost; ``twisted`` uses the twister rotation.
        epsilon: KL weight (KL family only).
        gamma: Energy weight (Energy family only).
        alpha: Semimetric exponent in ``|y - y'|^alpha``.
        prior: Prior for the regularized families.
    """

    family: CostFamily = "classical"
    ground: GroundName = "sqeuclidean"
    epsilon: Optional[float] = Field(default=None, gt=0)
    gamma: Optional[float] = Field(default=None, gt=0)
    alpha: float = Field(default=1.0, ge=1.0, le=2.0)
    prior: Optional[PriorConfig] = None

    @model_validator(mode="after")
    def _check(self) -> "CostConfig":
        if self.family == "kl" and (self.epsilon is None or self.prior is None):
            raise ValueError("kl cost needs epsilon and prior")
        if self.family == "energy" and (self.gamma is None or self.prior is None):
            raise ValueError("energy cost needs gamma and prior")
        return self


class TwisterConfig(_Strict):
    radius: float = Field(default=3.0, gt=0)
    sigma: float = Field(default=0.5, gt=0)
    kappa: float = 1.0


class TrainConfig(_Strict):
    """Hyperparameters of the ascent-descent loop.

    Attributes:
        batch_size: Inputs drawn per reference and step.
        inner_steps: Map updates per potential update.
        noise_batch_size: Conditional draws per input for noise-driven models.
        prior_batch_size: Prior draws per input for the Energy cost.
        lr_f: Potential learning rate.
        lr_t: Map learning rate.
        epochs: Outer iterations (one potential step plus ``inner_steps`` map steps).
        seed: Run seed; every random stream derives from it.
        hidden_widths: Hidden layer widths of maps and potentials.
        plan_kind: Transport-plan model.
        noise_dim: Auxiliary noise dimension; defaults to the data dimension.
        log_every: Progress log interval in epochs.
        checkpoint_every: Checkpoint interval in epochs; 0 keeps only the final one.
    """

    batch_size: int = Field(default=1024, ge=1)
    inner_steps: int = Field(default=3, ge=1)
    noise_batch_size: int = Field(default=4, ge=1)
    prior_batch_size: int = Field(default=4, ge=1)
    lr_f: float = Field(default=1e-3, gt=0)
    lr_t: float = Field(default=1e-3, gt=0)
    epochs: int = Field(default=1200, ge=1)
    seed: int = Field(default=0, ge=0)
    hidden_widths: List[int] = Field(default_factory=lambda: [128, 128, 128])
    plan_kind: PlanKindName = "deterministic"
    noise_dim: Optional[int] = Field(default=None, ge=1)
    log_every: int = Field(default=100, ge=1)
    checkpoint_every: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be >= 1")
        return self


class EvalConfig(_Strict):
    """Sample counts for the final report.

    Attributes:
        n: Samples for transport costs and the pooled energy test.
        uvp_samples: Inputs for L2-UVP.
        conditional_draws: Noise draws averaged per input for stochastic models.
        delta1: Whether to estimate the duality gap after training.
        delta1_steps: Inner re-minimization steps for the gap.
        delta1_batch_size: Inputs per step and for the fixed evaluation batch.
        delta1_lr: Learning rate of the inner re-minimization.
        delta1_warm_start: Start the re-minimization from the trained maps.
        sample_dump_rows: Rows per sample CSV; defaults to the process setting.
    """

    n: int = Field(default=4096, ge=2)
    uvp_samples: int = Field(default=10_000, ge=1)
    conditional_draws: int = Field(default=64, ge=1)
    delta1: bool = False
    delta1_steps: int = Field(default=200, ge=0)
    delta1_batch_size: int = Field(default=1024, ge=1)
    delta1_lr: float = Field(default=1e-3, gt=0)
    delta1_warm_start: bool = False
    sample_dump_rows: Optional[int] = Field(default=None, ge=1)


_TOY = {"batch_size": 1024, "inner_steps": 3, "lr_f": 1e-3, "lr_t": 1e-3, "epochs": 1200}

PRESETS: Dict[str, Dict[str, Any]] = {
    "twister": {
        "dim": 2,
        "K": 3,
        "weights": [1.0 / 3.0] * 3,
        "cost": {"family": "classical", "ground": "twisted"},
        "twister": {},
        "train": dict(_TOY),
    },
    "gaussian-benchmark": {
        "dim": 2,
        "K": 3,
        "weights": [0.25, 0.25, 0.5],
        "cost": {"family": "classical", "ground": "sqeuclidean"},
        "train": dict(_TOY),
    },
    "dirac-sanity": {
        "dim": 1,
        "K": 2,
        "weights": [0.5, 0.5],
        "cost": {"family": "classical", "ground": "sqeuclidean"},
        "train": {"batch_size": 64, "inner_steps": 3, "epochs": 2000, "hidden_widths": [32, 32]},
    },
}

# regularized families default to the twister prior N((5, 5), I) and unit weights
_FAMILY_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "kl": {"epsilon": 1.0},
    "energy": {"gamma": 1.0},
}
_FAMILY_PLAN = {"kl": "gaussian", "energy": "stochastic"}


def _merge(defaults: Dict[str, Any], given: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


class ExperimentConfig(_Strict):
    """A complete experiment description.

    Attributes:
        experiment: Preset name supplying defaults.
        dim: Data dimension D.
        K: Number of reference distributions.
        weights: Barycenter weights, positive and summing to 1.
        cost: Weak cost shared by all references.
        twister: Twister instance parameters (twister preset).
        train: Training hyperparameters.
        eval: Evaluation sample counts.
        output_dir: Artifact directory; defaults to ``<settings.output_dir>/<experiment>``.
    """

    experiment: ExperimentName
    dim: int = Field(ge=1)
    K: int = Field(ge=2)
    weights: List[float]
    cost: CostConfig = Field(default_factory=CostConfig)
    twister: Optional[TwisterConfig] = None
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    output_dir: Optional[str] = None

    @model_validator(mode="before")
    @classmethod
    def _apply_preset(cls, data: Any) -> Any:
        if not isinstance(data, dict) or data.get("experiment") not in PRESETS:
            return data
        merged = _merge(PRESETS[data["experiment"]], data)
        cost = merged.setdefault("cost", {})
        family = cost.get("family", "classical")
        if family in _FAMILY_DEFAULTS:
            for key, value in _FAMILY_DEFAULTS[family].items():
                cost.setdefault(key, value)
            cost.setdefault("prior", {"mean": [5.0] * merged["dim"], "variance": [1.0] * merged["dim"]})
            merged.setdefault("train", {}).setdefault("plan_kind", _FAMILY_PLAN[family])
        return merged

    @field_validator("weights")
    @classmethod
    def _check_weights(cls, weights: List[float], info: ValidationInfo) -> List[float]:
        if any(w <= 0 for w in weights):
            raise ValueError("weights must be positive")
        if abs(sum(weights) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("weights must sum to 1")
        k = info.data.get("K")
        if k is not None and len(weights) != k:
            raise ValueError(f"weights must have K={k} entries")
        return weights

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if self.experiment == "twister" and (self.dim != 2 or self.K != 3):
            raise ValueError("twister experiment is 2-D with K=3")
        if self.experiment == "dirac-sanity" and self.K != 2:
            raise ValueError("dirac-sanity experiment has K=2")
        if self.cost.ground == "twisted" and self.dim != 2:
            raise ValueError("twisted ground cost needs dim=2")
        if self.cost.prior is not None and len(self.cost.prior.mean) != self.dim:
            raise ValueError("prior dimension must equal dim")
        if self.cost.family == "kl" and self.train.plan_kind != "gaussian":
            raise ValueError("kl cost needs the gaussian plan model")
        if (
            self.cost.family == "energy"
            and self.train.plan_kind != "deterministic"
            and self.train.noise_batch_size < 2
        ):
            raise ValueError("energy cost needs noise_batch_size >= 2")
        if self.train.plan_kind == "gaussian" and self.train.noise_dim not in (None, self.dim):
            raise ValueError("gaussian plan model uses noise_dim equal to dim")
        return self

    def effective(self) -> Dict[str, Any]:
        """The complete config as JSON-ready data."""
        return self.model_dump(mode="json")

    def config_hash(self) -> str:
        """SHA-256 of the canonical effective config without ``output_dir``."""
        payload = self.model_dump(mode="json", exclude={"output_dir"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _field_name(loc: Any) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def validate_config(data: Any) -> ExperimentConfig:
    """Validate raw JSON data into an `ExperimentConfig`.

    Raises:
        ConfigError: Naming the unknown key or the offending field.
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = _field_name(first.get("loc", ()))
        if first.get("type") == "extra_forbidden":
            raise ConfigError(f"unknown key: {field}", {"key": field}) from exc
        raise ConfigError(
            f"invalid config field {field}: {first.get('msg')}",
            {"field": field, "errors": [{"loc": list(map(str, e["loc"])), "msg": e["msg"]} for e in exc.errors()]},
        ) from exc


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------


class HistoryRecord(BaseModel):
    """One history row: objective estimates after an epoch."""

    epoch: int
    v_f: float
    v_t: List[float]
    wall_ms: float = 0.0

    def row(self) -> List[Any]:
        return [self.epoch, self.v_f, *self.v_t, self.wall_ms]


class MetricReport(BaseModel):
    """Final evaluation of a run (``metrics.json``).

    Transport costs use the ``1/2 |x - y|^2`` convention; ``transport_cost_full``
    drops the 1/2. Every statistic records its sample counts in ``counts``.
    """

    experiment: str
    seed: int
    status: Literal["ok", "diverged", "failed"] = "ok"
    partial: bool = False
    error: Optional[Dict[str, Any]] = None
    epochs_completed: int = 0
    l2_uvp: Optional[List[float]] = None
    l2_uvp_weighted: Optional[float] = None
    transport_cost: Optional[List[float]] = None
    transport_cost_full: Optional[List[float]] = None
    oracle_transport_cost: Optional[List[float]] = None
    plan_energy: Optional[List[float]] = None
    energy_statistic: Optional[float] = None
    pooled_mean: Optional[List[float]] = None
    pooled_mean_norm: Optional[float] = None
    prior_projection: Optional[float] = None
    map_outputs: Optional[List[List[float]]] = None
    delta1: Optional[float] = None
    delta1_converged: Optional[bool] = None
    quality_bound: Optional[float] = None
    counts: Dict[str, int] = Field(default_factory=dict)


class TensorEntry(BaseModel):
    name: str
    shape: List[int]


class OptimizerMeta(BaseModel):
    step: int
    lr: float


class CheckpointManifest(BaseModel):
    """JSON half of a checkpoint; the blob holds tensors in ``tensors`` order."""

    format_version: int = 1
    config_hash: str
    epoch: int
    tensors: List[TensorEntry]
    optimizers: Dict[str, OptimizerMeta]
    rng: Dict[str, Any]
    models: List[Dict[str, Any]]
    potentials: Dict[str, Any]
    history: List[HistoryRecord] = Field(default_factory=list)
