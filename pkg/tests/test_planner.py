"""State buffering, window assembly, ELBO monitor, plan extraction."""

import numpy as np
import pytest

from gaitspace.drive import DriveSignalState, design_butterworth
from gaitspace.errors import InsufficientHistory
from gaitspace.oracle import GaitParams, QuadrupedGeometry, generate_trot
from gaitspace.planner import (
    ElboMonitor,
    StateBuffer,
    build_window,
    calibrate_threshold,
    elbo_monitor_update,
    extract_plan,
    plan_tick,
)
from gaitspace.vae import ModelConfig, VaeModel


@pytest.fixture(scope="module")
def trot():
    return generate_trot(GaitParams(), QuadrupedGeometry(), 5.0, 100.0)


@pytest.fixture(scope="module")
def blank_model(trot):
    rows = np.stack([s.as_vector() for s in trot.states])
    return VaeModel.init(ModelConfig(hidden=16, n_hidden=1),
                         rows.mean(axis=0), rows.std(axis=0) + 1e-8)


def test_buffer_contiguity_and_eviction(trot):
    buf = StateBuffer(capacity=3)
    for k in range(5):
        buf.push(k, trot.states[k])
    assert len(buf) == 3
    assert buf.newest_tick == 4
    assert all(a is b for a, b in zip(buf.tail(2), trot.states[3:5]))
    with pytest.raises(ValueError):
        buf.push(9, trot.states[0])


def test_build_window_requires_full_span(trot, blank_model):
    need = blank_model.config.stride * (blank_model.config.window_len - 1) + 1
    buf = StateBuffer(capacity=need)
    for k in range(need - 1):
        buf.push(k, trot.states[k])
    with pytest.raises(InsufficientHistory):
        build_window(buf, blank_model)
    buf.push(need - 1, trot.states[need - 1])
    window = build_window(buf, blank_model)
    assert window.shape == (blank_model.config.window_len * 60,)


def test_build_window_strides_and_normalizes(trot, blank_model):
    cfg = blank_model.config
    need = cfg.stride * (cfg.window_len - 1) + 1
    buf = StateBuffer(capacity=need)
    for k in range(need):
        buf.push(k, trot.states[k])
    window = build_window(buf, blank_model).reshape(cfg.window_len, 60)
    picked = trot.states[:need][::cfg.stride]
    expect = blank_model.normalize(np.stack([s.as_vector() for s in picked]))
    assert np.allclose(window, expect)
    # newest buffered state lands in the last window row
    assert np.allclose(window[-1],
                       blank_model.normalize(trot.states[need - 1].as_vector()))


def test_build_window_zeroes_unloaded_feet(trot, blank_model):
    from dataclasses import replace

    cfg = blank_model.config
    need = cfg.stride * (cfg.window_len - 1) + 1
    states = list(trot.states[:need])
    loaded = states[-1]
    assert loaded.contact[0] and np.any(loaded.lam[0] != 0)
    fake_contact = loaded.contact.copy()
    fake_contact[0] = False
    states[-1] = replace(loaded, contact=fake_contact)
    buf = StateBuffer(capacity=need)
    for k, s in enumerate(states):
        buf.push(k, s)
    window = build_window(buf, blank_model).reshape(cfg.window_len, 60)
    denorm = blank_model.denormalize(window[-1])
    assert np.allclose(denorm[36:39], 0.0, atol=1e-9)


def test_monitor_spike_response_and_restore():
    mon = ElboMonitor(threshold=10.0, t_nominal_ticks=50, t_response_ticks=25,
                      response_duration_ticks=3)
    drive = DriveSignalState(period_ticks=50)
    mon, drive = elbo_monitor_update(mon, 20.0, drive)
    assert mon.response_active and drive.period_ticks == 25
    assert mon.response_remaining == 3
    mon, drive = elbo_monitor_update(mon, 0.0, drive)
    assert mon.response_remaining == 2 and drive.period_ticks == 25
    # a new spike re-arms the full window
    mon, drive = elbo_monitor_update(mon, 20.0, drive)
    assert mon.response_remaining == 3
    for _ in range(3):
        mon, drive = elbo_monitor_update(mon, 0.0, drive)
    assert not mon.response_active and drive.period_ticks == 50


def test_monitor_disabled_ignores_spikes():
    mon = ElboMonitor(threshold=10.0, t_nominal_ticks=50, t_response_ticks=25,
                      response_duration_ticks=3, enabled=False)
    drive = DriveSignalState(period_ticks=50)
    mon, drive = elbo_monitor_update(mon, 1e9, drive)
    assert not mon.response_active and drive.period_ticks == 50


def test_calibrate_threshold_formula():
    trace = [1.0, 2.0, 3.0, 4.0]
    theta, mean, std = calibrate_threshold(trace, k_sigma=2.0)
    assert mean == pytest.approx(2.5)
    assert std == pytest.approx(np.sqrt(1.25))
    assert theta == pytest.approx(2.5 + 2.0 * np.sqrt(1.25))


def test_extract_plan_exact_on_quadratic():
    f_c = 100.0
    k = np.arange(5)[:, None]
    q = 0.3 + 0.2 * k + 0.05 * k**2 + np.zeros((1, 12))
    qd, qdd = extract_plan(q, f_c)
    expect_qd = (0.2 + 0.1 * k) * f_c
    assert np.allclose(qd[1:-1], np.broadcast_to(expect_qd, (5, 12))[1:-1])
    # one-sided endpoint velocities bias the neighbouring second
    # difference; only fully interior accelerations are exact
    assert np.allclose(qdd[2:-2], 0.1 * f_c**2)
    with pytest.raises(ValueError):
        extract_plan(q[:2], f_c)


def test_plan_tick_outputs(model, trot):
    cfg = model.config
    need = cfg.stride * (cfg.window_len - 1) + 1
    buf = StateBuffer(capacity=need)
    for k in range(need):
        buf.push(k, trot.states[k])
    drive = DriveSignalState(amplitude=model.drive_amplitude,
                             period_ticks=100, stance_ticks=0)
    filt = design_butterworth(10.0, cfg.f_c, channels=cfg.latent_dim)
    mon = ElboMonitor(threshold=np.inf, t_nominal_ticks=100,
                      t_response_ticks=50, response_duration_ticks=150,
                      enabled=False)
    tick, new_drive, mon = plan_tick(model, buf, drive, filt,
                                     np.zeros(3), mon)
    assert tick.tick == buf.newest_tick
    assert tick.prediction.shape == (cfg.future_len + 1, 60)
    assert tick.q.shape == (cfg.future_len + 1, 12)
    assert tick.contact_probs.shape == (cfg.contact_steps, 4)
    assert tick.z.shape == (cfg.latent_dim,)
    assert np.isfinite(tick.elbo_value) and tick.elbo_value >= 0
    assert new_drive.phase > drive.phase  # phase advanced one tick
    assert not tick.response_active
