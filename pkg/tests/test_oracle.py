"""Kinematic trot oracle: legs, schedules, forces, dataset synthesis."""

import numpy as np
import pytest

from gaitspace.errors import InfeasibleGait, OutOfReach
from gaitspace.oracle import (
    PAIR_A,
    PAIR_B,
    GaitParams,
    QuadrupedGeometry,
    base_pose_at,
    feature_names,
    generate_trot,
    leg_fk,
    leg_ik,
    leg_jacobian,
    stance_set_at,
    swing_profile,
    synthesize_dataset,
)

GEOM = QuadrupedGeometry()
GRAVITY = 9.81


def random_reachable_targets(n, rng, leg=0):
    """Foot targets safely inside the workspace, below the hip."""
    out = []
    while len(out) < n:
        r = rng.uniform(0.3 * GEOM.max_reach, 0.95 * GEOM.max_reach)
        theta = rng.uniform(-1.2, 1.2)   # polar angle from straight down
        phi = rng.uniform(0, 2 * np.pi)
        local = r * np.array([
            np.sin(theta) * np.cos(phi),
            np.sin(theta) * np.sin(phi),
            -np.cos(theta),
        ])
        if local[2] < -0.1:
            out.append(GEOM.hip_offsets[leg] + local)
    return out


def test_fk_ik_roundtrip():
    rng = np.random.default_rng(0)
    for target in random_reachable_targets(1000, rng):
        q = leg_ik(target, GEOM, 0)
        back = leg_fk(q, GEOM, 0)
        assert np.linalg.norm(back - target) < 1e-9


def test_ik_out_of_reach():
    target = GEOM.hip_offsets[0] + np.array([0.0, 0.0, -(GEOM.max_reach + 0.01)])
    with pytest.raises(OutOfReach):
        leg_ik(target, GEOM, 0)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(20):
        q = rng.uniform([-0.5, -1.0, 0.1], [0.5, 1.0, 2.0])
        J = leg_jacobian(q, GEOM)
        h = 1e-7
        for j in range(3):
            qp, qm = q.copy(), q.copy()
            qp[j] += h
            qm[j] -= h
            fd = (leg_fk(qp, GEOM, 0) - leg_fk(qm, GEOM, 0)) / (2 * h)
            assert np.allclose(J[:, j], fd, atol=1e-6)


def test_swing_profile_endpoints_and_peak():
    stride = np.array([0.2, 0.05, 0.0])
    start = swing_profile(0.0, 0.1, stride)
    end = swing_profile(1.0, 0.1, stride)
    assert np.allclose(start, 0.0, atol=1e-12)
    assert np.allclose(end, stride, atol=1e-12)
    mid = swing_profile(0.5, 0.1, stride)
    assert abs(mid[2] - (0.1 + 0.0)) < 1e-12  # peak height at mid-swing


def test_swing_profile_vertical_is_cubed_sine():
    s = np.linspace(0, 1, 41)
    heights = [swing_profile(v, 0.1, np.zeros(3))[2] for v in s]
    assert np.allclose(heights, 0.1 * np.sin(np.pi * s) ** 3, atol=1e-12)


def test_stance_set_cycle_layout():
    p = GaitParams(swing_duration=0.5, full_stance_duration=0.075)
    assert stance_set_at(0.0, p).all()                      # full support
    mid_b = 0.075 + 0.25
    assert not stance_set_at(mid_b, p)[list(PAIR_B)].any()  # B airborne
    mid_a = 2 * 0.075 + 1.5 * 0.5
    assert not stance_set_at(mid_a, p)[list(PAIR_A)].any()  # A airborne


def test_base_pose_straight_and_turning():
    xy, yaw = base_pose_at(2.0, (0.3, 0.0, 0.0))
    assert np.allclose(xy, [0.6, 0.0]) and yaw == 0.0
    # quarter turn at wz: end point on the turning circle
    w = np.pi / 4
    xy, yaw = base_pose_at(2.0, (0.3, 0.0, w))
    assert abs(yaw - np.pi / 2) < 1e-12
    radius = 0.3 / w
    assert np.allclose(xy, [radius, radius], atol=1e-9)


def test_trot_contact_patterns_exhaustive():
    traj = generate_trot(GaitParams(), GEOM, 10.0, 100.0)
    allowed = {(True,) * 4,
               tuple(i not in PAIR_A for i in range(4)),
               tuple(i not in PAIR_B for i in range(4))}
    for s in traj.states:
        assert tuple(s.contact) in allowed


def test_trot_static_forces_sum_to_weight():
    traj = generate_trot(GaitParams(base_twist_cmd=(0.2, 0.0, 0.1)),
                         GEOM, 5.0, 100.0)
    for s in traj.states:
        assert abs(s.lam[:, 2].sum() - GEOM.mass * GRAVITY) < 1e-9
        assert not s.lam[~s.contact].any()


def test_trot_schedule_durations_in_ticks():
    p = GaitParams(swing_duration=0.5, full_stance_duration=0.075)
    traj = generate_trot(p, GEOM, 10.0, 100.0)
    contacts = traj.contacts()
    airborne = ~contacts[:, 0]
    # first full swing of LF: 50 ticks at 100 Hz
    starts = np.nonzero(np.diff(airborne.astype(int)) == 1)[0]
    ends = np.nonzero(np.diff(airborne.astype(int)) == -1)[0]
    lengths = [e - s for s, e in zip(starts, ends[ends > starts[0]])]
    # the oracle samples a continuous-time schedule, so boundary ticks can
    # round either way; exact-tick timing is the phase automaton's job
    assert all(abs(n - 50) <= 1 for n in lengths)
    assert len(lengths) >= 8


def test_trot_requires_two_cycles():
    with pytest.raises(ValueError):
        generate_trot(GaitParams(), GEOM, 1.0, 100.0)


def test_trot_infeasible_stride():
    with pytest.raises(InfeasibleGait):
        generate_trot(GaitParams(base_twist_cmd=(3.0, 0.0, 0.0)),
                      GEOM, 5.0, 100.0)


def test_feature_names_match_state_layout():
    names = feature_names()
    assert len(names) == 60
    assert names[0] == "q_LF_abd"
    assert names[12] == "ee_LF_x"
    assert names[36] == "lam_LF_x"
    assert names[48] == "twist_vx"
    assert names[54] == "dpose_x"


def test_synthesize_dataset_deterministic_and_varied():
    args = (3, ((-0.2, 0.2), (-0.1, 0.1), (-0.2, 0.2)), GaitParams())
    kw = dict(duration=3.0, seed=4,
              gait_ranges={"swing": (0.2, 0.4), "height": (0.05, 0.12)})
    a = synthesize_dataset(*args, **kw)
    b = synthesize_dataset(*args, **kw)
    for ta, tb in zip(a.trajectories, b.trajectories):
        assert np.array_equal(ta.to_matrix(), tb.to_matrix())
    swings = {t.params.swing_duration for t in a.trajectories}
    assert len(swings) == 3
    assert all(0.2 <= s <= 0.4 for s in swings)
    # stance key omitted: kept from the base params
    assert all(t.params.full_stance_duration == 0.075 for t in a.trajectories)


def test_dataset_stats_match_body(tiny_dataset):
    rows = np.concatenate([t.to_matrix() for t in tiny_dataset.trajectories])
    assert np.allclose(rows.mean(axis=0), tiny_dataset.feature_mean)
