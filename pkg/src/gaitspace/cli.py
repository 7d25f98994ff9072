"""Operator command surface: data synthesis, training, rollouts,
evaluation suites, and the live telemetry service.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every
subcommand is reproducible from (config, seed); `GAITSPACE_SEED` is the
seed fallback when --seed is not given.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np
import yaml

from . import io_formats
from .config import RunConfig, default_config, load_config
from .errors import GaitspaceError
from .oracle import GaitParams, QuadrupedGeometry, generate_trot, synthesize_dataset
from .sim import Disturbance, Scenario, ScenarioEvent


def _fail(exc: Exception):
    """Machine-parseable error line, exit 1."""
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


def _resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get("GAITSPACE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise click.UsageError(f"GAITSPACE_SEED is not an integer: {env!r}")
    return 0


def _load_run_config(path) -> RunConfig:
    if path is None:
        return default_config()
    return load_config(path)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Run configuration YAML.")
@click.pass_context
def main(ctx, config_path):
    """Latent-space gait planner toolchain."""
    try:
        ctx.obj = _load_run_config(config_path)
    except (GaitspaceError, OSError, yaml.YAMLError) as exc:
        _fail(exc)


@main.command("gen-data")
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.pass_obj
def gen_data(cfg: RunConfig, out, seed):
    """Synthesizes a trot dataset and writes it to --out."""
    seed = _resolve_seed(seed)
    try:
        dataset = synthesize_dataset(
            cfg.data.n_trajectories, cfg.data.twist_range, cfg.gait,
            duration=cfg.data.duration_s, sample_rate=cfg.model.f_c,
            seed=seed, gait_ranges=cfg.data.gait_ranges,
        )
        io_formats.write_dataset(dataset, out)
    except (GaitspaceError, OSError, ValueError) as exc:
        _fail(exc)
    n = sum(len(t) for t in dataset.trajectories)
    click.echo(f"wrote {out}: {len(dataset.trajectories)} trajectories, "
               f"{n} states, seed {seed}")


@main.command("train")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--steps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_obj
def train_cmd(cfg: RunConfig, data_path, out, steps, seed):
    """Trains the model on --data, identifies the drive dimension, and
    writes a checkpoint to --out."""
    from .vae import fit_drive_signal, train

    seed = _resolve_seed(seed)
    steps = steps if steps is not None else cfg.training.steps
    try:
        dataset = io_formats.read_dataset(data_path)
        model, history = train(
            cfg.model, dataset, steps=steps,
            batch_size=cfg.training.batch_size,
            lr=cfg.training.learning_rate, seed=seed,
            holdout_fraction=cfg.training.holdout_fraction,
        )
        nominal = generate_trot(cfg.gait, QuadrupedGeometry(),
                                cfg.data.duration_s, cfg.model.f_c)
        fit_drive_signal(model, nominal)
        io_formats.save_checkpoint(model, out, metadata={
            "seed": seed, "steps": steps,
            "final_loss": float(np.mean(history["total"][-100:])),
        })
    except (GaitspaceError, OSError, ValueError) as exc:
        _fail(exc)
    total = np.asarray(history["total"])
    first = total[:100].mean()
    last = total[-100:].mean()
    click.echo(f"wrote {out}: {steps} steps, loss {first:.3f} -> {last:.3f} "
               f"({(1 - last / first) * 100:.1f}% drop), "
               f"drive dim {model.d_drive}")


def load_scenario(path) -> Scenario:
    """Declarative scenario timeline from YAML."""
    with open(path) as f:
        doc = yaml.safe_load(f) or {}
    known = {"duration_s", "action", "step_height", "gait", "events",
             "disturbances", "monitor"}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    gait = GaitParams(**doc.get("gait", {}))
    events = [
        ScenarioEvent(time_s=float(e["time_s"]), name=str(e["name"]),
                      value=e["value"])
        for e in doc.get("events", [])
    ]
    disturbances = [
        Disturbance(onset_s=float(d["onset_s"]),
                    impulse=tuple(d["impulse"]),
                    decay_s=float(d.get("decay_s", 0.2)))
        for d in doc.get("disturbances", [])
    ]
    monitor = doc.get("monitor", {})
    return Scenario(
        duration_s=float(doc.get("duration_s", 10.0)),
        action=tuple(doc.get("action", (0.0, 0.0, 0.0))),
        step_height=float(doc.get("step_height", 0.10)),
        gait=gait,
        events=events,
        disturbances=disturbances,
        monitor_enabled=bool(monitor.get("enabled", bool(disturbances))),
        threshold=monitor.get("threshold"),
        k_sigma=float(monitor.get("k_sigma", 6.0)),
    )


@main.command("rollout")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True))
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.pass_obj
def rollout_cmd(cfg: RunConfig, model_path, scenario_path, report_path, seed):
    """Runs a closed-loop rollout for a scripted scenario."""
    from .sim import calibrate_model_threshold, run_rollout

    seed = _resolve_seed(seed)
    try:
        model = io_formats.load_checkpoint(model_path)
        scenario = load_scenario(scenario_path)
        if scenario.monitor_enabled and scenario.threshold is None:
            theta, _, _ = calibrate_model_threshold(
                model, sim_cfg=cfg.sim, seed=seed, k_sigma=scenario.k_sigma)
            scenario.threshold = theta
        report = run_rollout(model, scenario, sim_cfg=cfg.sim, seed=seed)
    except (GaitspaceError, OSError, ValueError) as exc:
        _fail(exc)
    doc = {
        "scenario": scenario_path,
        "seed": seed,
        "threshold": report.threshold if np.isfinite(report.threshold) else None,
        "detection_latency_s": report.detection_latency_s,
        "recovery_steps": report.recovery_steps,
        "max_tracking_error": report.max_tracking_error,
        "termination": report.termination,
        "f_c": report.f_c,
        "elbo": report.elbo.tolist(),
        "contacts_executed": report.contacts_executed.astype(int).tolist(),
        "contact_probs": report.contact_probs.tolist(),
        "response_active": report.response_active.astype(bool).tolist(),
        "swing_period_cmd_ticks": report.swing_period_cmd.tolist(),
        "stance_cmd_ticks": report.stance_cmd.tolist(),
    }
    with open(report_path, "w") as f:
        json.dump(doc, f)
    click.echo(f"wrote {report_path}: {len(report.elbo)} ticks, "
               f"termination {report.termination}")


def _suite_gradcheck(cfg: RunConfig, model, dataset, seed):
    from .nn import gradient_check
    from .vae import ModelConfig, TrainingData, VaeModel, batch_loss

    mcfg = cfg.model
    rng = np.random.default_rng(seed)
    probe = VaeModel.init(mcfg, np.zeros(mcfg.state_dim),
                          np.ones(mcfg.state_dim), seed=seed)
    b = 4
    # moderate input scale keeps the summed loss small enough that
    # central-difference cancellation noise stays well under tolerance
    wins = 0.3 * rng.standard_normal((b, mcfg.window_len * mcfg.state_dim))
    tgts = 0.3 * rng.standard_normal((b, (mcfg.future_len + 1) * mcfg.state_dim))
    cts = (rng.random((b, mcfg.contact_steps * 4)) > 0.5).astype(np.float64)
    acts = 0.3 * rng.standard_normal((b, mcfg.action_dim))
    noise = rng.standard_normal((b, mcfg.latent_dim))
    params = probe.params()

    def loss_and_grads():
        loss, grads, _ = batch_loss(probe, wins, tgts, cts, acts, noise)
        return loss, grads

    report = gradient_check(loss_and_grads, params, n_coords=10, seed=seed)
    return [("gradcheck", "max_rel_error", report["max_rel_error"],
             "< 1e-4", report["passed"])]


def _eval_split(dataset, mcfg, seed):
    from .vae import TrainingData

    data = TrainingData(dataset, mcfg)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(data))
    n_hold = max(1, int(0.1 * len(data)))
    return data, perm[n_hold:], perm[:n_hold]


def _suite_clustering(cfg: RunConfig, model, dataset, seed):
    from .vae import (encode_trajectory, gait_frequency, knn_stance_accuracy,
                      spectral_powers)

    data, ref, hold = _eval_split(dataset, model.config, seed)
    acc = knn_stance_accuracy(model, data, ref, hold[:1000], seed=seed)
    nominal = generate_trot(cfg.gait, QuadrupedGeometry(), 10.0,
                            model.config.f_c)
    latents = encode_trajectory(model, nominal)
    powers = spectral_powers(latents, gait_frequency(cfg.gait),
                             model.config.f_c)
    ratio = float(powers.max() / np.median(powers))
    return [
        ("clustering", "knn_stance_accuracy", acc, ">= 0.8", acc >= 0.8),
        ("clustering", "drive_power_ratio", ratio, ">= 3.0", ratio >= 3.0),
    ]


def _suite_contacts(cfg: RunConfig, model, dataset, seed):
    from .vae import holdout_metrics

    data, _, hold = _eval_split(dataset, model.config, seed)
    metrics = holdout_metrics(model, data, hold)
    acc = metrics["contact_accuracy"]
    return [("contacts", "holdout_accuracy", acc, ">= 0.9", acc >= 0.9)]


def _suite_envelope(cfg: RunConfig, model, dataset, seed):
    from .sim import calibrate_model_threshold, disturbance_envelope

    theta, _, _ = calibrate_model_threshold(model, sim_cfg=cfg.sim, seed=seed)
    magnitudes = (0.4, 0.8, 1.2, 1.6)
    with_resp = disturbance_envelope(model, magnitudes, True, trials=5,
                                     seed=seed, theta=theta, sim_cfg=cfg.sim)
    without = disturbance_envelope(model, magnitudes, False, trials=5,
                                   seed=seed, theta=theta, sim_cfg=cfg.sim)
    ok = with_resp["envelope"] >= without["envelope"]
    return [
        ("envelope", "with_response", with_resp["envelope"], "", True),
        ("envelope", "without_response", without["envelope"], "", True),
        ("envelope", "response_benefit", with_resp["envelope"],
         f">= {without['envelope']}", ok),
    ]


_SUITES = {
    "gradcheck": _suite_gradcheck,
    "clustering": _suite_clustering,
    "contacts": _suite_contacts,
    "envelope": _suite_envelope,
}


@main.command("eval")
@click.option("--model", "model_path", type=click.Path(exists=True),
              default=None)
@click.option("--data", "data_path", type=click.Path(exists=True),
              default=None)
@click.option("--suite", required=True,
              type=click.Choice(sorted(_SUITES)))
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Also write results as CSV.")
@click.option("--seed", type=int, default=None)
@click.pass_obj
def eval_cmd(cfg: RunConfig, model_path, data_path, suite, csv_path, seed):
    """Runs an evaluation suite and prints a pass/fail table."""
    seed = _resolve_seed(seed)
    needs_model = suite != "gradcheck"
    needs_data = suite in ("clustering", "contacts")
    if needs_model and model_path is None:
        raise click.UsageError(f"--model is required for suite '{suite}'")
    if needs_data and data_path is None:
        raise click.UsageError(f"--data is required for suite '{suite}'")
    try:
        model = io_formats.load_checkpoint(model_path) if model_path else None
        dataset = io_formats.read_dataset(data_path) if data_path else None
        rows = _SUITES[suite](cfg, model, dataset, seed)
    except (GaitspaceError, OSError, ValueError) as exc:
        _fail(exc)
    lines = ["suite,check,value,requirement,result"]
    failed = False
    for suite_name, check, value, req, ok in rows:
        result = "PASS" if ok else "FAIL"
        failed = failed or not ok
        lines.append(f"{suite_name},{check},{value:.6g},{req},{result}")
        click.echo(f"[{result}] {suite_name}.{check} = {value:.6g} {req}")
    if csv_path:
        with open(csv_path, "w") as f:
            f.write("\n".join(lines) + "\n")
    if failed:
        sys.exit(1)


@main.command("serve")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True))
@click.option("--port", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_obj
def serve_cmd(cfg: RunConfig, model_path, port, seed):
    """Hosts the live planner session and telemetry stream."""
    from .service import serve

    seed = _resolve_seed(seed)
    try:
        model = io_formats.load_checkpoint(model_path)
        serve(model, cfg, port=port, seed=seed)
    except (GaitspaceError, OSError, ValueError) as exc:
        _fail(exc)
    except KeyboardInterrupt:
        click.echo("shutdown")


if __name__ == "__main__":
    main()
