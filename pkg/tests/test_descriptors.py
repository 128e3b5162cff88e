from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from _builders import moving_joint, random_rotation, rest_pose, static_sequence, whole_window, window_at
from lmaemotion.descriptors import (DEFAULT_SCHEMA, DescriptorError, FeatureSchema, FeatureTable,
                                    FeatureVector, LMAFeatureExtractor, ThresholdPolicy,
                                    dispersion_series, effort_flow_jerk, effort_space,
                                    effort_space_total, effort_time, effort_weight, extract_dataset,
                                    extract_features, movement_initiation, shape_volume_series,
                                    space_features)
from lmaemotion.geometry import convex_hull_volume
from lmaemotion.motion import MotionSequence, Skeleton, WindowSpec, make_windows
from lmaemotion.synth import SynthConfig, generate

HAND = Skeleton.default().index("hand_l")
KINETIC = ["effort_weight_mean", "effort_weight_max", "effort_time_total", "effort_flow_total",
           *[f"effort_flow_jerk_{j}" for j in Skeleton.default().tracked]]


def only_tracked(*joints, weights=None):
    return Skeleton.default().with_overrides(weights or {j: 1.0 for j in joints}, tracked=joints)


def line(n, velocity, fps=25.0, start=(0.0, 0.0, 0.0)):
    return np.asarray(start) + np.outer(np.arange(n) / fps, velocity)


def body_path(offsets, fps=25.0):
    """Rest pose carried rigidly along ``offsets`` (frames, 3)."""
    pos = rest_pose()[None] + np.asarray(offsets)[:, None, :]
    return MotionSequence(Skeleton.default(), fps, pos, None, None, "s0")


# ---------------------------------------------------------------- schema

def test_schema_audit():
    assert len(DEFAULT_SCHEMA) == 54
    assert len(set(DEFAULT_SCHEMA.names)) == 54
    sizes = {g: len(n) for g, n in DEFAULT_SCHEMA.by_group().items()}
    assert sizes == {"Body": 28, "EffortSpace": 7, "EffortWeight": 2, "EffortTime": 1,
                     "EffortFlow": 7, "Shape": 5, "Space": 4}
    assert sorted(n for names in DEFAULT_SCHEMA.by_group().values() for n in names) == \
        sorted(DEFAULT_SCHEMA.names)
    assert len(DEFAULT_SCHEMA.hash) == 16


def test_schema_rejects_duplicates_and_ungrouped():
    with pytest.raises(ValueError):
        FeatureSchema(("a", "a"), {"a": "Body"})
    with pytest.raises(ValueError):
        FeatureSchema(("a", "b"), {"a": "Body"})


def test_feature_vector_rejects_non_finite():
    vals = np.zeros(54)
    vals[3] = np.inf
    with pytest.raises(DescriptorError, match=DEFAULT_SCHEMA.names[3]):
        FeatureVector(DEFAULT_SCHEMA, vals)
    with pytest.raises(ValueError):
        FeatureVector(DEFAULT_SCHEMA, np.zeros(53))


# ---------------------------------------------------------------- initiation

def test_initiation_stationary():
    w = whole_window(static_sequence(30))
    assert movement_initiation(w, "hand_l") == 0.0


def test_initiation_fast_joint():
    w = whole_window(moving_joint(line(30, (0.6, 0, 0))))
    w = replace(w, speed_std=0.2)
    assert movement_initiation(w, "hand_l") == 1.0


def test_initiation_half_window_matches_enumeration():
    fps, n, sub, tau = 25.0, 50, 5, 0.3
    steps = np.where(np.arange(n) < 25, 2 * tau / fps, 0.0)
    track = np.zeros((n, 3))
    track[:, 0] = np.concatenate([[0.0], np.cumsum(steps[:-1])])
    w = replace(whole_window(moving_joint(track, fps=fps), sub), speed_std=tau)
    hits = 0
    for t in range(n - sub):
        disp = abs(track[t + sub, 0] - track[t, 0])
        hits += disp / (sub / fps) > tau
    expected = hits / (n - sub)
    got = movement_initiation(w, "hand_l")
    assert got == expected
    assert abs(got - 0.5) <= 1 / n


def test_initiation_multiplier_and_unknown_joint():
    w = replace(whole_window(moving_joint(line(30, (0.6, 0, 0)))), speed_std=0.2)
    assert movement_initiation(w, "hand_l", ThresholdPolicy(4.0)) == 0.0
    with pytest.raises(DescriptorError, match="tail"):
        movement_initiation(w, "tail")
    with pytest.raises(ValueError):
        ThresholdPolicy(0.0)


# ---------------------------------------------------------------- effort space

def test_effort_space_straight_line():
    w = whole_window(moving_joint(line(25, (0.3, -0.2, 0.1))))
    assert abs(effort_space(w, "hand_l") - 1.0) < 1e-9


def test_effort_space_out_and_back_is_capped():
    x = np.concatenate([np.linspace(0, 0.5, 13), np.linspace(0.5, 0, 13)[1:]])
    track = np.stack([x, np.zeros_like(x), np.zeros_like(x)], axis=1)
    w = whole_window(moving_joint(track))
    assert effort_space(w, "hand_l") == 100.0
    assert effort_space(w, "hand_l", cap=7.0) == 7.0


@pytest.mark.parametrize("n", [26, 23])
def test_effort_space_zigzag_polyline(n):
    sub = 5
    hops = list(range(0, n, sub))
    if hops[-1] != n - 1:
        hops.append(n - 1)
    rng = np.random.default_rng(n)
    vertices = np.column_stack([np.arange(len(hops)) * 0.1, rng.uniform(-0.2, 0.2, len(hops)), np.zeros(len(hops))])
    track = np.column_stack([np.interp(np.arange(n), hops, vertices[:, k]) for k in range(3)])
    w = whole_window(moving_joint(track), sub)
    path = 0.0
    for a, b in zip(vertices[:-1], vertices[1:]):
        path += ((b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2) ** 0.5
    chord = ((vertices[-1][0] - vertices[0][0]) ** 2 + (vertices[-1][1] - vertices[0][1]) ** 2) ** 0.5
    assert abs(effort_space(w, "hand_l") - path / chord) < 1e-9


def test_effort_space_total_reductions():
    w = whole_window(body_path(line(30, (0.2, 0.0, 0.1))))
    sk = Skeleton.default()
    total_weight = sum(sk.weight(j) for j in sk.tracked)
    assert abs(effort_space_total(w) - total_weight) < 1e-9
    single = only_tracked("hand_l")
    assert effort_space_total(w, single) == effort_space(w, "hand_l")


def test_effort_space_total_is_weighted_sum():
    seq = generate(SynthConfig(sequences_per_class=1, frames=30, seed=2))[1]
    w = whole_window(seq)
    sk = seq.skeleton
    expected = sum(sk.weight(j) * effort_space(w, j) for j in sk.tracked)
    assert effort_space_total(w) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_effort_space_ratio_at_least_one(seed):
    rng = np.random.default_rng(seed)
    track = np.cumsum(rng.normal(0, 0.02, size=(25, 3)), axis=0)
    w = whole_window(moving_joint(track))
    assert effort_space(w, "hand_l") >= 1 - 1e-9


# ---------------------------------------------------------------- weight, time, flow

def test_effort_weight_stationary_and_single_joint():
    assert np.all(effort_weight(whole_window(static_sequence(20))) == 0.0)
    w = whole_window(moving_joint(line(20, (0.0, 2.0, 0.0))))
    np.testing.assert_allclose(effort_weight(w, only_tracked("hand_l")), 2.0, rtol=1e-12)


def test_effort_weight_three_joint_hand_computation():
    fps = 25.0
    velocities = {"hand_l": (1.0, 0.0, 0.0), "head": (0.0, 0.5, 0.5), "pelvis": (0.3, 0.0, -0.4)}
    alpha = {"hand_l": 1.0, "head": 1.0, "pelvis": 0.5}
    sk = only_tracked(*velocities, weights=alpha)
    pos = np.repeat(rest_pose()[None], 20, axis=0)
    for j, v in velocities.items():
        pos[:, sk.index(j)] += line(20, v, fps)
    w = whole_window(MotionSequence(sk, fps, pos))
    expected = sum(0.5 * alpha[j] * (v[0] ** 2 + v[1] ** 2 + v[2] ** 2) for j, v in velocities.items())
    assert np.max(np.abs(effort_weight(w) - expected)) < 1e-9


def test_effort_time_constant_velocity_and_acceleration():
    w = whole_window(moving_joint(line(30, (0.4, 0.1, 0.0))))
    assert effort_time(w, only_tracked("hand_l")) < 1e-9
    t = np.arange(60) / 25.0
    track = np.column_stack([t**2, np.zeros_like(t), np.zeros_like(t)])
    w = window_at(moving_joint(track), 10, 25)
    assert abs(effort_time(w, only_tracked("hand_l")) - 2.0) < 1e-9


def test_effort_time_sinusoid():
    fps, amp, omega = 50.0, 0.1, 2 * np.pi
    t = np.arange(300) / fps
    track = np.column_stack([amp * np.sin(omega * t), np.zeros_like(t), np.zeros_like(t)])
    w = window_at(moving_joint(track, fps=fps), 50, 100)
    expected = amp * omega**2 * 2 / np.pi
    assert abs(effort_time(w, only_tracked("hand_l")) - expected) / expected < 0.02


def test_jerk_cases():
    t = np.arange(60) / 25.0
    quad = np.column_stack([t**2, 0.5 * t**2, np.zeros_like(t)])
    cubic = np.column_stack([t**3, np.zeros_like(t), np.zeros_like(t)])
    assert effort_flow_jerk(window_at(moving_joint(quad), 10, 25), "hand_l") < 1e-6
    assert effort_flow_jerk(whole_window(static_sequence(20)), "hand_l") == 0.0
    assert abs(effort_flow_jerk(window_at(moving_joint(cubic), 10, 25), "hand_l") - 6.0) < 1e-3
    with pytest.raises(DescriptorError):
        effort_flow_jerk(whole_window(static_sequence(20)), "tail")


# ---------------------------------------------------------------- shape

def test_shape_rigid_translation_constant():
    vols = shape_volume_series(whole_window(body_path(line(25, (0.5, 0.0, 0.2)))))
    assert np.std(vols) < 1e-12 * vols.mean()


def test_shape_scaled_pose():
    pose = rest_pose()
    center = pose.mean(axis=0)
    pos = np.repeat(pose[None], 20, axis=0)
    pos[10:] = center + 2.0 * (pose - center)
    vols = shape_volume_series(whole_window(MotionSequence(Skeleton.default(), 25.0, pos)))
    np.testing.assert_allclose(vols[10:], 8.0 * vols[:10], rtol=1e-9)


def test_shape_matches_geometry():
    rng = np.random.default_rng(9)
    pos = rng.normal(size=(12, 22, 3))
    w = whole_window(MotionSequence(Skeleton.default(), 25.0, pos))
    assert shape_volume_series(w).tolist() == [convex_hull_volume(f) for f in pos]


# ---------------------------------------------------------------- space

def test_space_stationary():
    sp = space_features(whole_window(static_sequence(20)))
    assert sp["path_length"] == 0.0 and sp["dispersion_std"] == 0.0 and sp["curvature_mean"] == 0.0


def test_space_pelvis_circle():
    r, n = 0.5, 100
    theta = np.arange(n) * 2 * np.pi / n
    offsets = np.column_stack([r * np.cos(theta), np.zeros(n), r * np.sin(theta)])
    sp = space_features(whole_window(body_path(offsets)))
    assert sp["curvature_mean"] == pytest.approx(1 / r, rel=1e-2)
    assert sp["path_length"] == pytest.approx((n - 1) * 2 * r * np.sin(np.pi / n), rel=1e-12)


def arm_pose(kind):
    sk = Skeleton.default()
    pose = rest_pose()
    sl, sr = pose[sk.index("shoulder_l")], pose[sk.index("shoulder_r")]
    if kind == "t":
        out = {"elbow_l": sl + (0.3, 0, 0), "hand_l": sl + (0.58, 0, 0),
               "elbow_r": sr - (0.3, 0, 0), "hand_r": sr - (0.58, 0, 0)}
    else:
        out = {"elbow_l": sl + (-0.05, -0.1, 0.25), "hand_l": sr + (0.0, 0.0, 0.15),
               "elbow_r": sr + (0.05, -0.1, 0.25), "hand_r": sl + (0.0, 0.0, 0.15)}
    for j, p in out.items():
        pose[sk.index(j)] = p
    return pose


def dispersion_by_hand(pose):
    sk = Skeleton.default()
    chest, pelvis = pose[sk.index("chest")], pose[sk.index("pelvis")]
    upper = ["head", "neck", "clavicle_l", "clavicle_r", "shoulder_l", "shoulder_r",
             "elbow_l", "elbow_r", "hand_l", "hand_r"]
    lower = ["hip_l", "hip_r", "knee_l", "knee_r", "ankle_l", "ankle_r", "foot_l", "foot_r"]
    up = sum(np.sqrt(np.sum((pose[sk.index(j)] - chest) ** 2)) for j in upper) / len(upper)
    lo = sum(np.sqrt(np.sum((pose[sk.index(j)] - pelvis) ** 2)) for j in lower) / len(lower)
    return up + lo


def test_dispersion_t_pose_beats_crossed_arms():
    sk = Skeleton.default()
    t_pose, crossed = arm_pose("t"), arm_pose("x")
    d_t = dispersion_series(t_pose[None], sk)[0]
    d_x = dispersion_series(crossed[None], sk)[0]
    assert d_t == pytest.approx(dispersion_by_hand(t_pose), abs=1e-12)
    assert d_x == pytest.approx(dispersion_by_hand(crossed), abs=1e-12)
    assert d_t > d_x


# ---------------------------------------------------------------- full vector

def test_stationary_window_vector():
    w = whole_window(static_sequence(25))
    fv = extract_features(w)
    for name in KINETIC + [f"body_init_{j}" for j in Skeleton.default().tracked] + ["space_path_length"]:
        assert fv[name] == 0.0, name
    pose = rest_pose()
    sk = Skeleton.default()
    hand_gap = np.linalg.norm(pose[sk.index("hand_l")] - pose[sk.index("hand_r")])
    assert fv["body_dist_hand_l_hand_r_mean"] == pytest.approx(hand_gap, abs=1e-12)
    assert fv["body_dist_hand_l_hand_r_std"] == pytest.approx(0.0, abs=1e-12)
    assert fv["shape_volume_mean"] == pytest.approx(convex_hull_volume(pose), rel=1e-12)
    assert fv["shape_volume_rate"] == 0.0


def test_extract_is_deterministic():
    seq = generate(SynthConfig(sequences_per_class=1, frames=40, seed=1))[5]
    a = [extract_features(w).values for w in make_windows(seq, WindowSpec())]
    b = [extract_features(w).values for w in make_windows(seq, WindowSpec())]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(np.isfinite(x).all() and x.shape == (54,) for x in a)


def test_degenerate_angle_flagged():
    sk = Skeleton.default()
    pos = np.repeat(rest_pose()[None], 25, axis=0)
    pos[:, sk.index("hand_l")] = pos[:, sk.index("elbow_l")]
    fv = extract_features(whole_window(MotionSequence(sk, 25.0, pos)))
    assert "degenerate_angle_elbow_l" in fv.flags
    assert fv["body_angle_elbow_l_mean"] == 0.0


def synth_sequences(n=2, frames=60, seed=0):
    return generate(SynthConfig(sequences_per_class=1, frames=frames, seed=seed))[:n]


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 11))
def test_rigid_motion_invariance(seed, which):
    seq = generate(SynthConfig(sequences_per_class=1, frames=45, seed=3))[which]
    rng = np.random.default_rng(seed)
    rot, shift = random_rotation(rng), rng.uniform(-10, 10, size=3)
    moved = MotionSequence(seq.skeleton, seq.fps, seq.positions @ rot.T + shift, seq.label)
    spec = WindowSpec(25, 5, 5)
    for w0, w1 in zip(make_windows(seq, spec), make_windows(moved, spec)):
        a, b = extract_features(w0).values, extract_features(w1).values
        np.testing.assert_allclose(b, a, rtol=1e-6, atol=1e-9)


def test_doubling_fps_scales_by_predicted_powers():
    seq = generate(SynthConfig(sequences_per_class=1, frames=40, seed=7))[2]
    fast = MotionSequence(seq.skeleton, 2 * seq.fps, seq.positions)
    factor = {name: 1.0 for name in DEFAULT_SCHEMA.names}
    factor.update({"effort_weight_mean": 4.0, "effort_weight_max": 4.0, "effort_time_total": 4.0,
                   "shape_volume_rate": 2.0})
    factor.update({n: 8.0 for n in DEFAULT_SCHEMA.names if n.startswith("effort_flow")})
    spec = WindowSpec(25, 3, 5)
    for w0, w1 in zip(make_windows(seq, spec), make_windows(fast, spec)):
        a, b = extract_features(w0), extract_features(w1)
        for name in DEFAULT_SCHEMA.names:
            assert b[name] == pytest.approx(factor[name] * a[name], rel=1e-12, abs=1e-15), name


def test_feature_table_csv_round_trip(tmp_path):
    table = extract_dataset(synth_sequences(), WindowSpec(25, 7, 5))
    text = table.to_csv(tmp_path / "f.csv")
    assert text.splitlines()[0].split(",") == list(DEFAULT_SCHEMA.names) + ["label", "sequence_id",
                                                                           "start_frame"]
    back = FeatureTable.read_csv(tmp_path / "f.csv")
    assert np.array_equal(back.X, table.X)
    assert back.labels == table.labels and back.sequence_ids == table.sequence_ids
    assert back.start_frames == table.start_frames and back.schema.hash == DEFAULT_SCHEMA.hash


def test_extract_dataset_parallel_matches_serial():
    seqs = synth_sequences(3)
    a = extract_dataset(seqs, WindowSpec(25, 4, 5))
    b = extract_dataset(seqs, WindowSpec(25, 4, 5), n_jobs=2)
    assert np.array_equal(a.X, b.X) and a.sequence_ids == b.sequence_ids
    assert len(a) == 3 * ((60 - 25) // 4 + 1)


def test_extract_dataset_skips_short_sequences():
    seqs = synth_sequences(2, frames=20)
    assert len(extract_dataset(seqs, WindowSpec(25, 1, 5))) == 0


def test_feature_extractor_estimator_api():
    seqs = synth_sequences(2)
    ext = LMAFeatureExtractor(window_length=20, stride=10)
    assert clone(ext).get_params()["window_length"] == 20
    X = ext.fit_transform(seqs)
    assert X.shape == (2 * 5, 54)
    assert list(ext.labels_) == [seqs[0].label] * 5 + [seqs[1].label] * 5
    assert len(set(ext.groups_)) == 2
    assert list(ext.get_feature_names_out()) == list(DEFAULT_SCHEMA.names)
