"""Shared fixtures: one desk-scale dataset + trained model per session.

Training takes ~20 s once; everything downstream (latent structure,
closed-loop, acceptance) reuses the same artifacts.
"""

import numpy as np
import pytest

from gaitspace import io_formats
from gaitspace.config import default_config
from gaitspace.oracle import GaitParams, QuadrupedGeometry, generate_trot, synthesize_dataset
from gaitspace.sim import calibrate_model_threshold
from gaitspace.vae import fit_drive_signal, train

DATA_SEED = 11
TRAIN_SEED = 7


@pytest.fixture(scope="session")
def run_config():
    return default_config()


@pytest.fixture(scope="session")
def dataset(run_config):
    cfg = run_config
    return synthesize_dataset(
        cfg.data.n_trajectories, cfg.data.twist_range, cfg.gait,
        duration=cfg.data.duration_s, sample_rate=cfg.model.f_c,
        seed=DATA_SEED, gait_ranges=cfg.data.gait_ranges,
    )


@pytest.fixture(scope="session")
def trained(run_config, dataset):
    """(model, history) after the full desk-scale training budget."""
    cfg = run_config
    model, history = train(cfg.model, dataset, steps=cfg.training.steps,
                           seed=TRAIN_SEED)
    nominal = generate_trot(cfg.gait, QuadrupedGeometry(),
                            cfg.data.duration_s, cfg.model.f_c)
    fit_drive_signal(model, nominal)
    return model, history


@pytest.fixture(scope="session")
def model(trained):
    return trained[0]


@pytest.fixture(scope="session")
def theta(model, run_config):
    value, _, _ = calibrate_model_threshold(model, sim_cfg=run_config.sim,
                                            seed=3)
    return value


@pytest.fixture(scope="session")
def model_path(model, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "model.json"
    io_formats.save_checkpoint(model, path)
    return path


@pytest.fixture(scope="session")
def dataset_path(dataset, tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "train.gsp"
    io_formats.write_dataset(dataset, path)
    return path


@pytest.fixture(scope="session")
def tiny_dataset():
    """Two short trajectories; enough for format/plumbing tests."""
    return synthesize_dataset(
        2, ((-0.2, 0.2), (-0.1, 0.1), (-0.2, 0.2)), GaitParams(),
        duration=3.0, seed=0,
    )


def interior_swings(contacts: np.ndarray):
    """Airborne interval lengths not clipped by the slice boundaries."""
    from gaitspace.sim import measure_swing_durations

    n = contacts.shape[0]
    return sorted(length for (_, start, length)
                  in measure_swing_durations(contacts)
                  if start > 0 and start + length < n)


def interior_full_stance_runs(contacts: np.ndarray):
    """Four-foot-support run lengths not clipped at the slice start."""
    full = contacts.all(axis=1)
    runs, start = [], None
    for k, flag in enumerate(full):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            if start > 0:
                runs.append(k - start)
            start = None
    return sorted(runs)
