"""Shared fixtures: the desk-scale synthetic task and a model trained on it.

The trained model is session-scoped because several modules (estimator
contract, acceptance suite) reuse the same run.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

import codeflow as cf

SYNTH_SEED = 11
SPLIT_SEED = 5


@pytest.fixture(scope="session")
def synthetic_task():
    """Dataset, splits, and codebook for the 4-class desk-scale task."""
    spec = cf.SyntheticSpec(
        num_classes=4,
        dim=64,
        num_layers=3,
        samples_per_class=500,
        mean_scale=0.3,
        within_std=0.06,
        condition_noise=0.06,
        seed=SYNTH_SEED,
    )
    t_start = time.perf_counter()
    dataset = cf.generate_synthetic(spec)
    gen_seconds = time.perf_counter() - t_start
    train, val, test = cf.split(dataset, (0.8, 0.1, 0.1), seed=SPLIT_SEED)
    codebook = cf.build_codebook(dataset.taxonomy(), dataset.dim)
    return {
        "spec": spec,
        "dataset": dataset,
        "train": train,
        "val": val,
        "test": test,
        "codebook": codebook,
        "gen_seconds": gen_seconds,
    }


@pytest.fixture(scope="session")
def trained_model(synthetic_task):
    """mlp-baseline estimator trained on the synthetic task (2000 steps)."""
    train_config = cf.TrainConfig(
        batch_size=64,
        total_steps=2000,
        learning_rate=1e-3,
        seed=0,
        eval_every=500,
        val_num_steps=1,
    )
    est_config = cf.EstimatorConfig(
        dim=synthetic_task["dataset"].dim,
        num_condition_layers=synthetic_task["dataset"].num_condition_layers,
        trunk_variant="mlp-baseline",
        trunk_depth=2,
        trunk_width=128,
        time_embed_dim=32,
    )
    t_start = time.perf_counter()
    state, metrics = cf.train_loop(
        synthetic_task["train"],
        synthetic_task["val"],
        synthetic_task["codebook"],
        train_config,
        est_config,
    )
    train_seconds = time.perf_counter() - t_start
    return {
        "state": state,
        "metrics": metrics,
        "train_config": train_config,
        "est_config": est_config,
        "train_seconds": train_seconds,
        **synthetic_task,
    }


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
