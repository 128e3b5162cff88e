"""Laban Body / Effort / Shape / Space descriptors computed per sliding window."""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin

from .geometry import curvature, hull_volume_series, joint_angles
from .io_utils import atomic_write_text
from .motion import MotionSequence, Skeleton, Window, WindowSpec, make_windows

GROUPS = ("Body", "EffortSpace", "EffortWeight", "EffortTime", "EffortFlow", "Shape", "Space")

DISTANCE_PAIRS = (
    ("hand_l", "hand_r"), ("shoulder_l", "shoulder_r"), ("knee_l", "knee_r"),
    ("ankle_l", "ankle_r"), ("hand_l", "pelvis"), ("hand_r", "pelvis"),
    ("ankle_l", "pelvis"), ("ankle_r", "pelvis"),
)

# name -> (end, vertex, end)
ANGLES = (
    ("elbow_l", ("shoulder_l", "elbow_l", "hand_l")),
    ("elbow_r", ("shoulder_r", "elbow_r", "hand_r")),
    ("knee_l", ("hip_l", "knee_l", "ankle_l")),
    ("knee_r", ("hip_r", "knee_r", "ankle_r")),
    ("shoulder_l", ("hip_l", "shoulder_l", "elbow_l")),
    ("shoulder_r", ("hip_r", "shoulder_r", "elbow_r")),
)

UPPER_BODY = ("head", "neck", "clavicle_l", "clavicle_r", "shoulder_l", "shoulder_r",
              "elbow_l", "elbow_r", "hand_l", "hand_r")
LOWER_BODY = ("hip_l", "hip_r", "knee_l", "knee_r", "ankle_l", "ankle_r", "foot_l", "foot_r")
TORSO = "chest"
ROOT = "pelvis"

DISPLACEMENT_GUARD = 1e-6
SPACE_CAP = 100.0


class DescriptorError(ValueError):
    pass


@dataclass(frozen=True)
class ThresholdPolicy:
    """Initiation threshold = ``multiplier`` x std of tracked-joint speeds of the parent sequence."""

    multiplier: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.multiplier) and self.multiplier > 0):
            raise ValueError("threshold multiplier must be finite and > 0")

    def tau(self, window: Window) -> float:
        return self.multiplier * window.speed_std


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...]
    groups: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        missing = [n for n in self.names if n not in self.groups]
        if missing:
            raise ValueError(f"features without a group: {missing}")

    def __len__(self):
        return len(self.names)

    def __hash__(self):
        return hash(self.names)

    @property
    def hash(self) -> str:
        text = "\n".join(f"{n}:{self.groups[n]}" for n in self.names)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def by_group(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {g: [] for g in GROUPS}
        for n in self.names:
            out.setdefault(self.groups[n], []).append(n)
        return out

    @classmethod
    def for_skeleton(cls, skeleton: Skeleton) -> "FeatureSchema":
        entries: list[tuple[str, str]] = []
        for a, b in DISTANCE_PAIRS:
            entries.append((f"body_dist_{a}_{b}_mean", "Body"))
        for a, b in DISTANCE_PAIRS:
            entries.append((f"body_dist_{a}_{b}_std", "Body"))
        for name, _ in ANGLES:
            entries.append((f"body_angle_{name}_mean", "Body"))
        for j in skeleton.tracked:
            entries.append((f"body_init_{j}", "Body"))
        entries.append(("effort_space_total", "EffortSpace"))
        entries += [(f"effort_space_{j}", "EffortSpace") for j in skeleton.tracked]
        entries += [("effort_weight_mean", "EffortWeight"), ("effort_weight_max", "EffortWeight")]
        entries.append(("effort_time_total", "EffortTime"))
        entries.append(("effort_flow_total", "EffortFlow"))
        entries += [(f"effort_flow_jerk_{j}", "EffortFlow") for j in skeleton.tracked]
        entries += [(f"shape_volume_{s}", "Shape") for s in ("mean", "std", "min", "max", "rate")]
        entries += [("space_path_length", "Space"), ("space_curvature_mean", "Space"),
                    ("space_dispersion_mean", "Space"), ("space_dispersion_std", "Space")]
        return cls(tuple(n for n, _ in entries), dict(entries))


DEFAULT_SCHEMA = FeatureSchema.for_skeleton(Skeleton.default())


@dataclass(frozen=True)
class FeatureVector:
    schema: FeatureSchema
    values: np.ndarray
    label: str | None = None
    window_origin: tuple[str | None, int] = (None, 0)
    flags: frozenset = frozenset()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.schema),):
            raise ValueError(f"expected {len(self.schema)} values, got shape {values.shape}")
        if not np.isfinite(values).all():
            bad = [self.schema.names[i] for i in np.flatnonzero(~np.isfinite(values))]
            raise DescriptorError(f"non-finite feature values: {', '.join(bad)}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.schema.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.schema.names, self.values.tolist()))


# ------------------------------------------------------------------ components

def _joint_track(window: Window, joint: str) -> int:
    try:
        return window.skeleton.index(joint)
    except KeyError:
        raise DescriptorError(f"unknown joint {joint!r}") from None


def movement_initiation(window: Window, joint: str, policy: ThresholdPolicy = ThresholdPolicy()) -> float:
    """Fraction of window frames where the joint's displacement rate over the
    sub-window horizon exceeds the sequence threshold."""
    j = _joint_track(window, joint)
    w = window.sub_window
    p = window.positions[:, j]
    if w >= len(p):
        raise DescriptorError("sub_window must be shorter than the window")
    rate = np.linalg.norm(p[w:] - p[:-w], axis=1) / (w / window.fps)
    return float(np.mean(rate > policy.tau(window)))


def effort_space(window: Window, joint: str, cap: float = SPACE_CAP,
                 guard: float = DISPLACEMENT_GUARD) -> float:
    """Path length sampled every ``sub_window`` frames over the net displacement.

    Windows whose joint ends where it started return ``cap``.
    """
    j = _joint_track(window, joint)
    p = window.positions[:, j]
    w = window.sub_window
    if w >= len(p):
        raise DescriptorError("sub_window must be shorter than the window")
    idx = list(range(0, len(p), w))
    if idx[-1] != len(p) - 1:
        idx.append(len(p) - 1)
    hops = p[idx]
    path = float(np.sum(np.linalg.norm(np.diff(hops, axis=0), axis=1)))
    net = float(np.linalg.norm(p[-1] - p[0]))
    if net < guard:
        return float(cap)
    return path / net


def effort_space_total(window: Window, skeleton: Skeleton | None = None,
                       cap: float = SPACE_CAP) -> float:
    skeleton = skeleton or window.skeleton
    return float(sum(skeleton.weight(j) * effort_space(window, j, cap) for j in skeleton.tracked))


def effort_weight(window: Window, skeleton: Skeleton | None = None) -> np.ndarray:
    """Per-frame kinetic energy proxy: sum over tracked joints of 0.5 * weight * |v|^2."""
    skeleton = skeleton or window.skeleton
    idx = [_joint_track(window, j) for j in skeleton.tracked]
    alpha = np.array([skeleton.weight(j) for j in skeleton.tracked])
    speed_sq = np.sum(window.kinematics.velocity[:, idx] ** 2, axis=-1)
    return 0.5 * speed_sq @ alpha


def _mean_norm(arr: np.ndarray) -> float:
    return float(np.mean(np.linalg.norm(arr, axis=-1)))


def effort_time(window: Window, skeleton: Skeleton | None = None) -> float:
    skeleton = skeleton or window.skeleton
    acc = window.kinematics.acceleration
    return float(sum(skeleton.weight(j) * _mean_norm(acc[:, _joint_track(window, j)])
                     for j in skeleton.tracked))


def effort_flow_jerk(window: Window, joint: str) -> float:
    return _mean_norm(window.kinematics.jerk[:, _joint_track(window, joint)])


def shape_volume_series(window: Window) -> np.ndarray:
    if window.hull_volumes is not None:
        return np.asarray(window.hull_volumes, dtype=float)
    return hull_volume_series(window.positions)


def volume_stats(volumes: np.ndarray, fps: float) -> dict[str, float]:
    rate = float(np.mean(np.abs(np.diff(volumes)))) * fps if len(volumes) > 1 else 0.0
    return {"mean": float(np.mean(volumes)), "std": float(np.std(volumes)),
            "min": float(np.min(volumes)), "max": float(np.max(volumes)), "rate": rate}


def dispersion_series(positions: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Per-frame kinesphere use: mean upper-body distance to the chest plus
    mean lower-body distance to the pelvis."""
    upper = [skeleton.index(j) for j in UPPER_BODY if j in skeleton.joints]
    lower = [skeleton.index(j) for j in LOWER_BODY if j in skeleton.joints]
    torso = positions[:, skeleton.index(TORSO)][:, None]
    root = positions[:, skeleton.index(ROOT)][:, None]
    out = np.zeros(positions.shape[0])
    if upper:
        out += np.linalg.norm(positions[:, upper] - torso, axis=-1).mean(axis=1)
    if lower:
        out += np.linalg.norm(positions[:, lower] - root, axis=-1).mean(axis=1)
    return out


def space_features(window: Window, skeleton: Skeleton | None = None) -> dict[str, float]:
    skeleton = skeleton or window.skeleton
    pelvis = window.positions[:, skeleton.index(ROOT)]
    path = float(np.sum(np.linalg.norm(np.diff(pelvis, axis=0), axis=1)))
    kappa = curvature(pelvis, window.dt) if len(pelvis) >= 3 else np.zeros(1)
    disp = dispersion_series(window.positions, skeleton)
    return {"path_length": path, "curvature_mean": float(np.mean(kappa)),
            "dispersion_mean": float(np.mean(disp)), "dispersion_std": float(np.std(disp))}


# ------------------------------------------------------------------ assembly

def extract_features(window: Window, skeleton: Skeleton | None = None,
                     policy: ThresholdPolicy = ThresholdPolicy(),
                     schema: FeatureSchema | None = None, cap: float = SPACE_CAP) -> FeatureVector:
    skeleton = skeleton or window.skeleton
    schema = schema or FeatureSchema.for_skeleton(skeleton)
    pos = window.positions
    flags = set()
    values: list[float] = []
    try:
        dists = []
        for a, b in DISTANCE_PAIRS:
            dists.append(np.linalg.norm(pos[:, skeleton.index(a)] - pos[:, skeleton.index(b)], axis=1))
        values += [float(np.mean(d)) for d in dists]
        values += [float(np.std(d)) for d in dists]
        for name, (a, v, c) in ANGLES:
            ang, bad = joint_angles(pos[:, skeleton.index(a)], pos[:, skeleton.index(v)],
                                    pos[:, skeleton.index(c)])
            if bad.any():
                flags.add(f"degenerate_angle_{name}")
            values.append(float(np.mean(ang)))
    except KeyError as exc:
        raise DescriptorError(f"Body features: {exc.args[0]}") from None
    values += [movement_initiation(window, j, policy) for j in skeleton.tracked]

    per_joint_space = [effort_space(window, j, cap) for j in skeleton.tracked]
    alpha = np.array([skeleton.weight(j) for j in skeleton.tracked])
    values.append(float(alpha @ np.array(per_joint_space)))
    values += per_joint_space

    energy = effort_weight(window, skeleton)
    values += [float(np.mean(energy)), float(np.max(energy))]
    values.append(effort_time(window, skeleton))

    per_joint_jerk = [effort_flow_jerk(window, j) for j in skeleton.tracked]
    values.append(float(alpha @ np.array(per_joint_jerk)))
    values += per_joint_jerk

    try:
        volumes = shape_volume_series(window)
    except ValueError as exc:
        raise DescriptorError(f"Shape features: {exc}") from None
    if np.any(volumes == 0.0):
        flags.add("degenerate_hull")
    stats = volume_stats(volumes, window.fps)
    values += [stats[k] for k in ("mean", "std", "min", "max", "rate")]

    try:
        space = space_features(window, skeleton)
    except KeyError as exc:
        raise DescriptorError(f"Space features: {exc.args[0]}") from None
    values += [space[k] for k in ("path_length", "curvature_mean", "dispersion_mean", "dispersion_std")]

    if len(values) != len(schema):
        raise DescriptorError(f"computed {len(values)} features but the schema has {len(schema)}")
    return FeatureVector(schema, np.array(values), window.label,
                         (window.sequence_id, window.start), frozenset(flags))


@dataclass
class FeatureTable:
    """Stacked feature vectors with their labels and window origins."""

    schema: FeatureSchema
    X: np.ndarray
    labels: list
    sequence_ids: list
    start_frames: list

    def __len__(self):
        return self.X.shape[0]

    @property
    def groups(self) -> np.ndarray:
        return np.asarray(self.sequence_ids, dtype=object)

    def vector(self, i: int) -> FeatureVector:
        return FeatureVector(self.schema, self.X[i], self.labels[i],
                             (self.sequence_ids[i], self.start_frames[i]))

    @classmethod
    def from_vectors(cls, vectors: Sequence[FeatureVector], schema: FeatureSchema | None = None):
        schema = schema or (vectors[0].schema if vectors else DEFAULT_SCHEMA)
        X = np.array([v.values for v in vectors]).reshape(len(vectors), len(schema))
        return cls(schema, X, [v.label for v in vectors],
                   [v.window_origin[0] for v in vectors], [v.window_origin[1] for v in vectors])

    def to_csv(self, path: str | os.PathLike | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(self.schema.names) + ["label", "sequence_id", "start_frame"])
        for row, lab, sid, start in zip(self.X, self.labels, self.sequence_ids, self.start_frames):
            writer.writerow([repr(float(v)) for v in row] +
                            ["" if lab is None else lab, "" if sid is None else sid, start])
        text = buf.getvalue()
        if path is not None:
            atomic_write_text(path, text)
        return text

    @classmethod
    def read_csv(cls, path: str | os.PathLike, schema: FeatureSchema | None = None) -> "FeatureTable":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        if header[-3:] != ["label", "sequence_id", "start_frame"]:
            raise ValueError(f"{path}: not a feature table (missing trailing label columns)")
        names = tuple(header[:-3])
        if schema is None:
            schema = DEFAULT_SCHEMA if names == DEFAULT_SCHEMA.names else FeatureSchema(
                names, {n: _guess_group(n) for n in names})
        elif schema.names != names:
            raise ValueError(f"{path}: feature columns do not match the schema")
        X = np.array([[float(v) for v in r[:-3]] for r in rows]).reshape(len(rows), len(names))
        return cls(schema, X, [r[-3] or None for r in rows], [r[-2] or None for r in rows],
                   [int(r[-1]) for r in rows])


def _guess_group(name: str) -> str:
    prefix = {"body": "Body", "shape": "Shape", "space": "Space"}
    head = name.split("_")[0]
    if head in prefix:
        return prefix[head]
    if name.startswith("effort_"):
        return {"space": "EffortSpace", "weight": "EffortWeight", "time": "EffortTime",
                "flow": "EffortFlow"}[name.split("_")[1]]
    raise ValueError(f"cannot infer the group of feature {name!r}")


def sequence_features(seq: MotionSequence, spec: WindowSpec,
                      policy: ThresholdPolicy = ThresholdPolicy(),
                      schema: FeatureSchema | None = None) -> list[FeatureVector]:
    windows = make_windows(seq, spec)
    if not windows:
        return []
    # one hull per frame, shared across overlapping windows
    volumes = hull_volume_series(seq.positions)
    schema = schema or FeatureSchema.for_skeleton(seq.skeleton)
    return [extract_features(replace(w, hull_volumes=volumes[w.start:w.start + w.length]),
                             seq.skeleton, policy, schema) for w in windows]


def extract_dataset(sequences: Iterable[MotionSequence], spec: WindowSpec,
                    policy: ThresholdPolicy = ThresholdPolicy(), n_jobs: int = 1) -> FeatureTable:
    """Features for every window of every sequence, in input order."""
    sequences = list(sequences)
    if not sequences:
        return FeatureTable(DEFAULT_SCHEMA, np.zeros((0, len(DEFAULT_SCHEMA))), [], [], [])
    schema = FeatureSchema.for_skeleton(sequences[0].skeleton)
    if n_jobs == 1:
        chunks = [sequence_features(s, spec, policy, schema) for s in sequences]
    else:
        chunks = Parallel(n_jobs=n_jobs)(delayed(sequence_features)(s, spec, policy, schema)
                                         for s in sequences)
    vectors = [v for chunk in chunks for v in chunk]
    return FeatureTable.from_vectors(vectors, schema)


class LMAFeatureExtractor(TransformerMixin, BaseEstimator):
    """Turns a list of motion sequences into the windowed LMA feature matrix.

    Stateless: ``fit`` only records the schema.  After ``transform`` the
    per-row labels and sequence ids are available as ``labels_`` and
    ``groups_`` so they can be fed to grouped cross-validation.
    """

    def __init__(self, window_length=25, stride=1, sub_window=5, threshold_multiplier=1.0,
                 n_jobs=1):
        self.window_length = window_length
        self.stride = stride
        self.sub_window = sub_window
        self.threshold_multiplier = threshold_multiplier
        self.n_jobs = n_jobs

    def _spec(self):
        return WindowSpec(self.window_length, self.stride, min(self.sub_window, self.window_length - 1))

    def fit(self, sequences, y=None):
        sequences = list(sequences)
        skeleton = sequences[0].skeleton if sequences else Skeleton.default()
        self.schema_ = FeatureSchema.for_skeleton(skeleton)
        self.feature_names_out_ = np.array(self.schema_.names, dtype=object)
        return self

    def transform(self, sequences):
        table = extract_dataset(sequences, self._spec(), ThresholdPolicy(self.threshold_multiplier),
                                self.n_jobs)
        self.table_ = table
        self.labels_ = np.asarray(table.labels, dtype=object)
        self.groups_ = table.groups
        return table.X

    def get_feature_names_out(self, input_features=None):
        return np.array(FeatureSchema.for_skeleton(Skeleton.default()).names
                        if not hasattr(self, "schema_") else self.schema_.names, dtype=object)
