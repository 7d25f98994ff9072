"""Latent-space trot planner at desk scale.

Pipeline: a kinematic trot oracle synthesizes motion data, a small
variational autoencoder learns a latent gait space from it, and the
closed loop steers locomotion by overwriting one latent coordinate with
a cubed-sine drive signal. Reconstruction error doubles as a disturbance
monitor that can temporarily raise the step cadence.
"""

from .drive import (
    BiquadFilter,
    DriveSignalState,
    advance_phase,
    apply_drive,
    design_butterworth,
    drive_value,
    scheduled_support,
)
from .errors import GaitspaceError
from .oracle import (
    GaitParams,
    QuadrupedGeometry,
    RobotState,
    Dataset,
    generate_trot,
    synthesize_dataset,
)
from .planner import ElboMonitor, PlanTick, StateBuffer, calibrate_threshold, plan_tick
from .sim import (
    Disturbance,
    RolloutReport,
    Scenario,
    ScenarioEvent,
    SimConfig,
    calibrate_model_threshold,
    disturbance_envelope,
    measure_swing_durations,
    run_rollout,
)
from .vae import ModelConfig, VaeModel, fit_drive_signal, train

__all__ = [
    "BiquadFilter",
    "Disturbance",
    "DriveSignalState",
    "ElboMonitor",
    "GaitParams",
    "GaitspaceError",
    "ModelConfig",
    "PlanTick",
    "QuadrupedGeometry",
    "RobotState",
    "RolloutReport",
    "Scenario",
    "ScenarioEvent",
    "SimConfig",
    "StateBuffer",
    "Dataset",
    "VaeModel",
    "advance_phase",
    "apply_drive",
    "calibrate_model_threshold",
    "calibrate_threshold",
    "design_butterworth",
    "disturbance_envelope",
    "drive_value",
    "fit_drive_signal",
    "generate_trot",
    "measure_swing_durations",
    "plan_tick",
    "run_rollout",
    "scheduled_support",
    "synthesize_dataset",
    "train",
]
