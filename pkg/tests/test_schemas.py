"""Experiment config validation, presets and hashing."""

from __future__ import annotations

import pytest

from notbary.errors import ConfigError
from notbary.schemas import ExperimentConfig, HistoryRecord, MetricReport, validate_config


def test_twister_preset_defaults() -> None:
    cfg = validate_config({"experiment": "twister"})
    assert (cfg.dim, cfg.K) == (2, 3)
    assert cfg.cost.ground == "twisted"
    assert cfg.twister is not None and cfg.twister.radius == 3.0
    assert cfg.train.batch_size == 1024 and cfg.train.inner_steps == 3
    assert cfg.train.epochs == 1200
    assert sum(cfg.weights) == pytest.approx(1.0)


def test_gaussian_benchmark_defaults_and_overrides() -> None:
    cfg = validate_config({"experiment": "gaussian-benchmark", "dim": 4, "train": {"epochs": 7}})
    assert cfg.weights == [0.25, 0.25, 0.5]
    assert cfg.train.epochs == 7
    assert cfg.train.lr_f == 1e-3


def test_weights_must_sum_to_one() -> None:
    with pytest.raises(ConfigError) as info:
        validate_config({"experiment": "dirac-sanity", "weights": [0.6, 0.6]})
    assert info.value.details["field"] == "weights"


def test_weight_sum_is_reported_before_length() -> None:
    with pytest.raises(ConfigError) as info:
        validate_config({"experiment": "gaussian-benchmark", "weights": [0.6, 0.6]})
    assert info.value.details["field"] == "weights"
    assert "must sum to 1" in info.value.message


@pytest.mark.parametrize("weights", [[0.5, 0.25, 0.25], [1.5, -0.5]])
def test_weights_need_k_positive_entries(weights) -> None:
    with pytest.raises(ConfigError):
        validate_config({"experiment": "dirac-sanity", "weights": weights})


def test_unknown_keys_are_named() -> None:
    with pytest.raises(ConfigError) as info:
        validate_config({"experiment": "dirac-sanity", "train": {"learning_rate": 0.1}})
    assert info.value.details == {"key": "train.learning_rate"}
    assert info.value.code == "BAD_CONFIG"


def test_unknown_experiment_is_rejected() -> None:
    with pytest.raises(ConfigError):
        validate_config({"experiment": "swiss-roll", "dim": 2, "K": 2, "weights": [0.5, 0.5]})


def test_twister_shape_is_fixed() -> None:
    with pytest.raises(ConfigError):
        validate_config({"experiment": "twister", "dim": 3})


def test_regularized_family_defaults() -> None:
    kl = validate_config({"experiment": "twister", "cost": {"family": "kl"}})
    assert kl.cost.epsilon == 1.0
    assert kl.cost.prior is not None and kl.cost.prior.mean == [5.0, 5.0]
    assert kl.train.plan_kind == "gaussian"

    energy = validate_config({"experiment": "twister", "cost": {"family": "energy", "gamma": 0.5}})
    assert energy.cost.gamma == 0.5 and energy.cost.alpha == 1.0
    assert energy.train.plan_kind == "stochastic"
    assert energy.train.noise_batch_size == 4


def test_kl_needs_the_gaussian_plan_model() -> None:
    with pytest.raises(ConfigError):
        validate_config(
            {"experiment": "twister", "cost": {"family": "kl"}, "train": {"plan_kind": "deterministic"}}
        )


def test_prior_dimension_must_match() -> None:
    with pytest.raises(ConfigError):
        validate_config(
            {
                "experiment": "gaussian-benchmark",
                "cost": {"family": "energy", "prior": {"mean": [0.0], "variance": [1.0]}},
            }
        )


def test_effective_config_round_trips() -> None:
    cfg = validate_config({"experiment": "gaussian-benchmark", "cost": {"family": "energy"}})
    again = validate_config(cfg.effective())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_config_hash_ignores_output_dir_only() -> None:
    base = validate_config({"experiment": "dirac-sanity"})
    moved = ExperimentConfig.model_validate({**base.effective(), "output_dir": "elsewhere"})
    assert moved.config_hash() == base.config_hash()
    reseeded = validate_config({"experiment": "dirac-sanity", "train": {"seed": 1}})
    assert reseeded.config_hash() != base.config_hash()
    assert len(base.config_hash()) == 64


def test_history_row_layout() -> None:
    rec = HistoryRecord(epoch=3, v_f=0.5, v_t=[1.0, 2.0], wall_ms=4.0)
    assert rec.row() == [3, 0.5, 1.0, 2.0, 4.0]


def test_metric_report_defaults() -> None:
    report = MetricReport(experiment="dirac-sanity", seed=0)
    dumped = report.model_dump(mode="json")
    assert dumped["status"] == "ok" and dumped["partial"] is False
    assert dumped["l2_uvp"] is None and dumped["counts"] == {}
