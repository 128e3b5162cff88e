"""Skeletons, motion sequences, finite-difference kinematics and sliding windows."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .geometry import finite_difference
from .io_utils import atomic_write_text


class MotionFormatError(ValueError):
    """Raised when a motion file or array cannot be turned into a valid sequence."""


# SMPL-style 22-joint body; ``foot_*`` sits at the toe base.
DEFAULT_JOINTS = (
    "pelvis", "hip_l", "hip_r", "spine", "knee_l", "knee_r", "spine_mid",
    "ankle_l", "ankle_r", "chest", "foot_l", "foot_r", "neck", "clavicle_l",
    "clavicle_r", "head", "shoulder_l", "shoulder_r", "elbow_l", "elbow_r",
    "hand_l", "hand_r",
)

DEFAULT_EDGES = (
    ("pelvis", "hip_l"), ("pelvis", "hip_r"), ("pelvis", "spine"),
    ("hip_l", "knee_l"), ("hip_r", "knee_r"), ("spine", "spine_mid"),
    ("knee_l", "ankle_l"), ("knee_r", "ankle_r"), ("spine_mid", "chest"),
    ("ankle_l", "foot_l"), ("ankle_r", "foot_r"), ("chest", "neck"),
    ("chest", "clavicle_l"), ("chest", "clavicle_r"), ("neck", "head"),
    ("clavicle_l", "shoulder_l"), ("clavicle_r", "shoulder_r"),
    ("shoulder_l", "elbow_l"), ("shoulder_r", "elbow_r"),
    ("elbow_l", "hand_l"), ("elbow_r", "hand_r"),
)

DEFAULT_TRACKED = ("hand_l", "hand_r", "foot_l", "foot_r", "head", "pelvis")


def default_weights(joints: Sequence[str] = DEFAULT_JOINTS) -> dict[str, float]:
    """Extremities 1.0, pelvis 0.5, everything else 0.25."""
    weights = {}
    for name in joints:
        if name.startswith(("hand", "foot")) or name == "head":
            weights[name] = 1.0
        elif name == "pelvis":
            weights[name] = 0.5
        else:
            weights[name] = 0.25
    return weights


@dataclass(frozen=True)
class Skeleton:
    joints: tuple[str, ...]
    edges: tuple[tuple[str, str], ...] = ()
    weight_of: Mapping[str, float] = field(default_factory=dict)
    tracked: tuple[str, ...] = ()

    def __post_init__(self):
        joints = tuple(self.joints)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        object.__setattr__(self, "tracked", tuple(self.tracked))
        object.__setattr__(self, "weight_of", dict(self.weight_of))
        if len(set(joints)) != len(joints):
            raise ValueError("joint names must be unique")
        known = set(joints)
        for a, b in self.edges:
            if a not in known or b not in known:
                raise ValueError(f"edge ({a}, {b}) references an unknown joint")
        for name in self.tracked:
            if name not in known:
                raise ValueError(f"tracked joint {name!r} is not in the skeleton")
        for name, w in self.weight_of.items():
            if name not in known:
                raise ValueError(f"weight given for unknown joint {name!r}")
            if not (w >= 0 and math.isfinite(w)):
                raise ValueError(f"weight of {name!r} must be finite and >= 0")
        if self.tracked and not any(self.weight(j) > 0 for j in self.tracked):
            raise ValueError("at least one tracked joint needs a positive weight")

    @classmethod
    def default(cls) -> "Skeleton":
        return cls(DEFAULT_JOINTS, DEFAULT_EDGES, default_weights(), DEFAULT_TRACKED)

    @classmethod
    def from_joint_names(cls, joints: Sequence[str]) -> "Skeleton":
        """Skeleton for an arbitrary joint list, borrowing defaults where names match."""
        joints = tuple(joints)
        known = set(joints)
        edges = [e for e in DEFAULT_EDGES if e[0] in known and e[1] in known]
        tracked = [j for j in DEFAULT_TRACKED if j in known] or list(joints)
        return cls(joints, edges, default_weights(joints), tracked)

    def weight(self, joint: str) -> float:
        return float(self.weight_of.get(joint, 0.0))

    def index(self, joint: str) -> int:
        try:
            return self.joints.index(joint)
        except ValueError:
            raise KeyError(f"unknown joint {joint!r}") from None

    def with_overrides(self, weights: Mapping[str, float] | None = None,
                       tracked: Sequence[str] | None = None) -> "Skeleton":
        new_weights = dict(self.weight_of)
        if weights:
            new_weights.update(weights)
        return Skeleton(self.joints, self.edges, new_weights,
                        self.tracked if tracked is None else tuple(tracked))


@dataclass(frozen=True)
class MotionSequence:
    """Positions of every skeleton joint over time, shape (frames, joints, 3), meters."""

    skeleton: Skeleton
    fps: float
    positions: np.ndarray
    label: str | None = None
    performer_id: str | None = None
    sequence_id: str | None = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 3 or pos.shape[2] != 3:
            raise MotionFormatError(f"positions must have shape (frames, joints, 3), got {pos.shape}")
        if pos.shape[1] != len(self.skeleton.joints):
            raise MotionFormatError(
                f"expected {len(self.skeleton.joints)} joints per frame, got {pos.shape[1]}")
        if pos.shape[0] < 2:
            raise MotionFormatError("a motion sequence needs at least 2 frames")
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise MotionFormatError(f"fps must be a positive number, got {self.fps}")
        bad = ~np.isfinite(pos)
        if bad.any():
            frame = int(np.argwhere(bad)[0][0])
            raise MotionFormatError(f"non-finite coordinate at frame {frame}")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    def joint(self, name: str) -> np.ndarray:
        return self.positions[:, self.skeleton.index(name)]


@dataclass(frozen=True)
class WindowSpec:
    length_frames: int = 25
    stride_frames: int = 1
    sub_window: int = 5

    def __post_init__(self):
        if int(self.length_frames) != self.length_frames or self.length_frames < 2:
            raise ValueError("length_frames must be an integer >= 2")
        if int(self.stride_frames) != self.stride_frames or self.stride_frames < 1:
            raise ValueError("stride_frames must be an integer >= 1")
        if int(self.sub_window) != self.sub_window or self.sub_window < 1:
            raise ValueError("sub_window must be an integer >= 1")
        if self.sub_window >= self.length_frames:
            raise ValueError("sub_window must be shorter than the window")


@dataclass(frozen=True)
class Kinematics:
    velocity: np.ndarray
    acceleration: np.ndarray
    jerk: np.ndarray

    def slice(self, start: int, stop: int) -> "Kinematics":
        return Kinematics(self.velocity[start:stop], self.acceleration[start:stop],
                          self.jerk[start:stop])


@dataclass(frozen=True)
class Window:
    positions: np.ndarray
    kinematics: Kinematics
    fps: float
    skeleton: Skeleton
    start: int
    sub_window: int
    speed_std: float
    label: str | None = None
    sequence_id: str | None = None
    hull_volumes: np.ndarray | None = None

    @property
    def length(self) -> int:
        return self.positions.shape[0]

    @property
    def dt(self) -> float:
        return 1.0 / self.fps


def derive_kinematics(seq: MotionSequence) -> Kinematics:
    dt = 1.0 / seq.fps
    vel = finite_difference(seq.positions, dt)
    acc = finite_difference(vel, dt)
    jerk = finite_difference(acc, dt)
    for a in (vel, acc, jerk):
        a.setflags(write=False)
    return Kinematics(vel, acc, jerk)


def tracked_speed_std(seq: MotionSequence, kin: Kinematics | None = None) -> float:
    """Standard deviation of per-frame tracked-joint speeds over the whole sequence."""
    kin = kin if kin is not None else derive_kinematics(seq)
    idx = [seq.skeleton.index(j) for j in (seq.skeleton.tracked or seq.skeleton.joints)]
    speeds = np.linalg.norm(kin.velocity[:, idx], axis=-1)
    return float(np.std(speeds))


def window_starts(n_frames: int, spec: WindowSpec) -> list[int]:
    if n_frames < spec.length_frames:
        return []
    count = (n_frames - spec.length_frames) // spec.stride_frames + 1
    return [i * spec.stride_frames for i in range(count)]


def make_windows(seq: MotionSequence, spec: WindowSpec) -> list[Window]:
    """Slice ``seq`` into windows; a sequence shorter than one window yields ``[]``."""
    starts = window_starts(seq.n_frames, spec)
    if not starts:
        return []
    kin = derive_kinematics(seq)
    std = tracked_speed_std(seq, kin)
    windows = []
    for s in starts:
        e = s + spec.length_frames
        windows.append(Window(seq.positions[s:e], kin.slice(s, e), seq.fps, seq.skeleton,
                              s, spec.sub_window, std, seq.label, seq.sequence_id))
    return windows


# ---------------------------------------------------------------- file I/O

_META_RE = re.compile(r"(\w+)=(\S+)")


def _sequence_id_from(path: Path) -> str:
    return path.stem


def read_jsonl(path: str | os.PathLike, skeleton: Skeleton | None = None) -> MotionSequence:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines()]
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append((lineno, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise MotionFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    if not records:
        raise MotionFormatError(f"{path}: empty file")
    lineno, header = records[0]
    if not isinstance(header, dict) or "fps" not in header or "joints" not in header:
        raise MotionFormatError(f"{path}:{lineno}: header must contain 'fps' and 'joints'")
    joints = [str(j) for j in header["joints"]]
    try:
        fps = float(header["fps"])
    except (TypeError, ValueError):
        raise MotionFormatError(f"{path}:{lineno}: fps must be a number") from None
    if not (math.isfinite(fps) and fps > 0):
        raise MotionFormatError(f"{path}:{lineno}: fps must be > 0, got {header['fps']}")
    skeleton = _resolve_skeleton(joints, skeleton, path)
    order = [joints.index(j) for j in skeleton.joints]
    frames = []
    for frame_no, (lineno, rec) in enumerate(records[1:]):
        pos = rec.get("pos") if isinstance(rec, dict) else None
        if pos is None:
            raise MotionFormatError(f"{path}:{lineno}: frame record needs 'pos'")
        try:
            arr = np.asarray(pos, dtype=float)
        except (TypeError, ValueError):
            raise MotionFormatError(f"{path}:{lineno}: frame {frame_no} has malformed positions") from None
        if arr.shape != (len(joints), 3):
            raise MotionFormatError(
                f"{path}:{lineno}: frame {frame_no} has shape {arr.shape}, "
                f"expected ({len(joints)}, 3)")
        if not np.isfinite(arr).all():
            raise MotionFormatError(f"{path}:{lineno}: non-finite coordinate at frame {frame_no}")
        frames.append(arr[order])
    if len(frames) < 2:
        raise MotionFormatError(f"{path}: need at least 2 frames, found {len(frames)}")
    return MotionSequence(skeleton, fps, np.stack(frames), header.get("label"),
                          header.get("performer"), header.get("sequence_id", _sequence_id_from(path)))


def read_csv(path: str | os.PathLike, skeleton: Skeleton | None = None,
             fps: float | None = None, label: str | None = None) -> MotionSequence:
    path = Path(path)
    meta: dict[str, str] = {}
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        body = []
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#"):
                meta.update(dict(_META_RE.findall(line)))
            elif line.strip():
                body.append((lineno, line))
    if not body:
        raise MotionFormatError(f"{path}: no header row")
    reader = csv.reader(io.StringIO("".join(line for _, line in body)))
    header = next(reader)
    if not header or header[0].strip() != "frame":
        raise MotionFormatError(f"{path}:{body[0][0]}: first column must be 'frame'")
    columns = [c.strip() for c in header[1:]]
    joints = []
    for c in columns:
        name = c.rsplit("_", 1)[0]
        if name not in joints:
            joints.append(name)
    col_index = {c: i for i, c in enumerate(columns)}
    for j in joints:
        for axis in "xyz":
            if f"{j}_{axis}" not in col_index:
                raise MotionFormatError(f"{path}: missing column {j}_{axis}")
    fps = fps if fps is not None else (float(meta["fps"]) if "fps" in meta else None)
    if fps is None:
        raise MotionFormatError(f"{path}: fps not given (use '# fps=..' or pass fps)")
    if not (math.isfinite(fps) and fps > 0):
        raise MotionFormatError(f"{path}: fps must be > 0, got {fps}")
    skeleton = _resolve_skeleton(joints, skeleton, path)
    cols = [col_index[f"{j}_{axis}"] for j in skeleton.joints for axis in "xyz"]
    for frame_no, row in enumerate(reader):
        lineno = body[frame_no + 1][0]
        values = row[1:]
        if len(values) != len(columns):
            raise MotionFormatError(f"{path}:{lineno}: frame {frame_no} has {len(values)} values, "
                                    f"expected {len(columns)}")
        try:
            arr = np.array([float(values[c]) for c in cols])
        except ValueError:
            raise MotionFormatError(f"{path}:{lineno}: frame {frame_no} has a non-numeric value") from None
        if not np.isfinite(arr).all():
            raise MotionFormatError(f"{path}:{lineno}: non-finite coordinate at frame {frame_no}")
        rows.append(arr.reshape(-1, 3))
    if len(rows) < 2:
        raise MotionFormatError(f"{path}: need at least 2 frames, found {len(rows)}")
    return MotionSequence(skeleton, fps, np.stack(rows), label or meta.get("label"),
                          meta.get("performer"), meta.get("sequence_id", _sequence_id_from(path)))


def _resolve_skeleton(joints: list[str], skeleton: Skeleton | None, path: Path) -> Skeleton:
    if len(set(joints)) != len(joints):
        raise MotionFormatError(f"{path}: duplicate joint names in header")
    if skeleton is None:
        if set(joints) == set(DEFAULT_JOINTS):
            return Skeleton.default()
        return Skeleton.from_joint_names(joints)
    missing = [j for j in skeleton.joints if j not in joints]
    if missing:
        raise MotionFormatError(f"{path}: missing joint column(s) {', '.join(missing)}")
    return skeleton


def load_sequence(path: str | os.PathLike, format: str | None = None,
                  skeleton: Skeleton | None = None, **csv_options) -> MotionSequence:
    """Load a motion file; ``format`` defaults to the file extension."""
    fmt = (format or Path(path).suffix.lstrip(".")).lower()
    if fmt == "jsonl":
        return read_jsonl(path, skeleton)
    if fmt == "csv":
        return read_csv(path, skeleton, **csv_options)
    raise MotionFormatError(f"unsupported motion format {fmt!r}")


def _jsonl_text(seq: MotionSequence) -> str:
    header = {"fps": seq.fps, "joints": list(seq.skeleton.joints)}
    if seq.label is not None:
        header["label"] = seq.label
    if seq.performer_id is not None:
        header["performer"] = seq.performer_id
    if seq.sequence_id is not None:
        header["sequence_id"] = seq.sequence_id
    lines = [json.dumps(header)]
    for t, frame in enumerate(seq.positions):
        lines.append(json.dumps({"t": t, "pos": frame.tolist()}))
    return "\n".join(lines) + "\n"


def _csv_text(seq: MotionSequence) -> str:
    meta = [f"fps={seq.fps!r}"]
    for key, value in (("label", seq.label), ("performer", seq.performer_id),
                       ("sequence_id", seq.sequence_id)):
        if value is not None:
            meta.append(f"{key}={value}")
    buf = io.StringIO()
    buf.write("# " + " ".join(meta) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["frame"] + [f"{j}_{a}" for j in seq.skeleton.joints for a in "xyz"])
    for t, frame in enumerate(seq.positions):
        writer.writerow([t] + [repr(float(v)) for v in frame.ravel()])
    return buf.getvalue()


def write_sequence(seq: MotionSequence, path: str | os.PathLike, format: str | None = None) -> Path:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "jsonl":
        text = _jsonl_text(seq)
    elif fmt == "csv":
        text = _csv_text(seq)
    else:
        raise MotionFormatError(f"unsupported motion format {fmt!r}")
    atomic_write_text(path, text)
    return path
