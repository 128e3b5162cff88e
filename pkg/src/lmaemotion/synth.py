"""Seeded synthetic dancers: labelled motion sequences whose LMA features
differ by class.  A test fixture only; no claim of realistic emotion."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .motion import DEFAULT_JOINTS, MotionSequence, Skeleton, write_sequence


@dataclass(frozen=True)
class ClassStyle:
    name: str
    amplitude: float
    tempo_hz: float
    jitter: float
    openness: float
    pause: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0 or self.tempo_hz < 0 or self.jitter < 0:
            raise ValueError(f"{self.name}: amplitude, tempo and jitter must be >= 0")
        if not 0.0 <= self.openness <= 1.0:
            raise ValueError(f"{self.name}: openness must lie in [0, 1]")
        if not 0.0 <= self.pause < 1.0:
            raise ValueError(f"{self.name}: pause must lie in [0, 1)")


# high-arousal emotions get large, fast movement; fearful, bored and low
# moods move intermittently (the still phases of Afraid keep its tremor)
DEFAULT_STYLES = (
    ClassStyle("Afraid", 0.70, 2.8, 0.010, 0.15, pause=0.5),
    ClassStyle("Angry", 1.00, 2.4, 0.008, 0.90),
    ClassStyle("Annoyed", 0.75, 1.8, 0.006, 0.50, pause=0.3),
    ClassStyle("Bored", 0.25, 0.6, 0.002, 0.35, pause=0.4),
    ClassStyle("Excited", 0.95, 2.0, 0.003, 1.00),
    ClassStyle("Happy", 0.85, 1.5, 0.002, 0.75),
    ClassStyle("Miserable", 0.40, 0.9, 0.005, 0.05, pause=0.4),
    ClassStyle("Pleased", 0.60, 1.2, 0.0015, 0.60),
    ClassStyle("Relaxed", 0.45, 0.7, 0.001, 0.80),
    ClassStyle("Sad", 0.30, 0.5, 0.0015, 0.15, pause=0.2),
    ClassStyle("Satisfied", 0.55, 1.0, 0.003, 0.45),
    ClassStyle("Tired", 0.15, 0.4, 0.001, 0.25, pause=0.3),
)


@dataclass(frozen=True)
class SynthConfig:
    classes: tuple[ClassStyle, ...] = DEFAULT_STYLES
    sequences_per_class: int = 5
    frames: int = 150
    fps: float = 25.0
    seed: int = 0
    performer_spread: float = 0.08

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.classes:
            raise ValueError("at least one class is required")
        if self.sequences_per_class < 1:
            raise ValueError("sequences_per_class must be >= 1")
        if self.frames < 2:
            raise ValueError("frames must be >= 2")
        if not self.fps > 0:
            raise ValueError("fps must be > 0")


PAUSE_CYCLE = 2.4  # seconds per still/move cycle
PAUSE_RAMP = 0.2


def _gate(t: np.ndarray, pause: float, offset: float) -> np.ndarray:
    """1 while moving, 0 while still; the still part covers ``pause`` of each
    cycle and the transitions are raised-cosine ramps."""
    if pause <= 0:
        return np.ones_like(t)
    u = ((t / PAUSE_CYCLE + offset) % 1.0) * PAUSE_CYCLE
    still = pause * PAUSE_CYCLE
    rise = np.clip((u - still) / PAUSE_RAMP, 0.0, 1.0)
    fall = np.clip((PAUSE_CYCLE - u) / PAUSE_RAMP, 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(np.pi * np.minimum(rise, fall))


def _limb(root, length, spread, swing, bend, side):
    """Two-segment limb hanging from ``root``.

    ``spread`` opens the limb sideways, ``swing`` rotates it forward about the
    lateral axis and ``bend`` adds extra forward flexion to the distal segment.
    """
    def direction(extra):
        dx = side * np.sin(spread)
        dy = -np.cos(spread)
        ang = swing + extra
        return np.stack([dx * np.ones_like(ang), dy * np.cos(ang), -dy * np.sin(ang)], axis=-1)

    mid = root + length[0] * direction(0.0)
    end = mid + length[1] * direction(bend)
    return mid, end


def animate(style: ClassStyle, n_frames: int, fps: float, rng: np.random.Generator,
            spread: float = 0.08) -> np.ndarray:
    """Joint positions (frames, 22, 3) for one performance of ``style``."""
    scale = 1.0 + spread * rng.uniform(-1, 1)
    amp = style.amplitude * (1.0 + spread * rng.uniform(-1, 1))
    tempo = style.tempo_hz * (1.0 + 0.5 * spread * rng.uniform(-1, 1))
    phase = rng.uniform(0, 2 * np.pi)
    heading = rng.uniform(0, 2 * np.pi)
    t = np.arange(n_frames) / fps
    gate = _gate(t, style.pause, rng.uniform())
    # time only advances while moving, so a pause freezes the pose
    clock = np.concatenate([[0.0], np.cumsum(gate[:-1])]) / fps
    w = 2 * np.pi * tempo * clock + phase
    live = amp * gate
    o = style.openness

    # pelvis wanders on a circle whose size grows with amplitude
    radius = 0.8 * amp
    orbit = heading + 2 * np.pi * (tempo / 4.0) * clock
    pelvis = np.stack([radius * np.cos(orbit), 1.0 + 0.04 * live * np.sin(2 * w), radius * np.sin(orbit)],
                      axis=-1)
    hunch = 0.12 * (1.0 - o)
    up = np.array([0.0, 1.0, 0.0])
    fwd = np.array([0.0, 0.0, 1.0])
    side = np.array([1.0, 0.0, 0.0])

    def body(offset_up, offset_fwd=0.0, offset_side=0.0):
        return pelvis + scale * (offset_up * up + offset_fwd * fwd + offset_side * side)

    spine = body(0.10, 0.25 * hunch)
    spine_mid = body(0.25, 0.5 * hunch)
    chest = body(0.40, hunch)
    neck = body(0.55, 1.3 * hunch)
    head = neck + scale * (0.15 * up + (0.05 * live * np.sin(w + 1.0))[:, None] * fwd)
    hip_l, hip_r = body(-0.05, 0, 0.10), body(-0.05, 0, -0.10)
    clav_l, clav_r = body(0.50, hunch, 0.08), body(0.50, hunch, -0.08)
    sh_w = 0.20 - 0.05 * (1.0 - o)
    sh_l, sh_r = body(0.48, hunch, sh_w), body(0.48, hunch, -sh_w)

    arm_spread = np.radians(12 + 75 * o)
    arm_swing = np.radians(65) * live * np.sin(w)
    elbow_bend = np.radians(20 + 40 * (1 - o)) + np.radians(35) * live * (1 + np.sin(w + 0.7)) / 2
    arm_len = (0.30 * scale, 0.28 * scale)
    elb_l, hand_l = _limb(sh_l, arm_len, arm_spread, arm_swing, elbow_bend, +1)
    elb_r, hand_r = _limb(sh_r, arm_len, arm_spread, -arm_swing, elbow_bend, -1)

    leg_spread = np.radians(3 + 12 * o)
    leg_swing = np.radians(30) * live * np.sin(w + np.pi / 2)
    knee_bend = -np.radians(25) * live * (1 + np.sin(w)) / 2
    leg_len = (0.45 * scale, 0.45 * scale)
    knee_l, ankle_l = _limb(hip_l, leg_len, leg_spread, leg_swing, knee_bend, +1)
    knee_r, ankle_r = _limb(hip_r, leg_len, leg_spread, -leg_swing, knee_bend, -1)
    foot_l = ankle_l + scale * (-0.05 * up + 0.12 * fwd)
    foot_r = ankle_r + scale * (-0.05 * up + 0.12 * fwd)

    joints = {
        "pelvis": pelvis, "hip_l": hip_l, "hip_r": hip_r, "spine": spine, "knee_l": knee_l,
        "knee_r": knee_r, "spine_mid": spine_mid, "ankle_l": ankle_l, "ankle_r": ankle_r,
        "chest": chest, "foot_l": foot_l, "foot_r": foot_r, "neck": neck, "clavicle_l": clav_l,
        "clavicle_r": clav_r, "head": head, "shoulder_l": sh_l, "shoulder_r": sh_r,
        "elbow_l": elb_l, "elbow_r": elb_r, "hand_l": hand_l, "hand_r": hand_r,
    }
    pos = np.stack([np.broadcast_to(joints[j], (n_frames, 3)) for j in DEFAULT_JOINTS], axis=1)
    if style.jitter > 0:
        pos = pos + rng.normal(0.0, style.jitter, size=pos.shape)
    return pos


def generate(config: SynthConfig = SynthConfig()) -> list[MotionSequence]:
    """One sequence per (class, performer); performer ``p`` of every class
    shares the index ``p`` so grouped folds can split by performer too."""
    skeleton = Skeleton.default()
    out = []
    index = 0
    for c, style in enumerate(config.classes):
        for p in range(config.sequences_per_class):
            rng = np.random.default_rng([config.seed, index])
            pos = animate(style, config.frames, config.fps, rng, config.performer_spread)
            out.append(MotionSequence(skeleton, config.fps, pos, style.name, f"p{p}",
                                      f"{style.name.lower()}_p{p}"))
            index += 1
    return out


def reversal_dataset(n_per_class: int = 6, frames: int = 120, fps: float = 25.0,
                     half_period: int = 20, speed: float = 0.6, jitter: float = 0.0005,
                     seed: int = 0) -> list[MotionSequence]:
    """Two classes that only differ over long horizons.

    Both dancers keep every tracked joint moving at the same constant speed;
    ``shuttle`` reverses direction every ``half_period`` frames while
    ``glide`` keeps going straight.  Windows shorter than ``half_period``
    often see no reversal at all and are ambiguous.
    """
    skeleton = Skeleton.default()
    base = _rest_pose()
    out = []
    for label in ("glide", "shuttle"):
        for i in range(n_per_class):
            rng = np.random.default_rng([seed, 0 if label == "glide" else 1, i])
            step = speed / fps
            direction = rng.normal(size=3)
            direction[1] = 0.0
            direction /= np.linalg.norm(direction)
            offset = int(rng.integers(0, 2 * half_period))
            if label == "glide":
                s = np.arange(frames) * step
            else:
                k = np.arange(frames) + offset
                phase = k % (2 * half_period)
                tri = np.where(phase < half_period, phase, 2 * half_period - phase)
                s = (tri - tri[0]) * step
            pos = base[None] + s[:, None, None] * direction[None, None, :]
            pos = pos + rng.normal(0.0, jitter, size=pos.shape)
            out.append(MotionSequence(skeleton, fps, pos, label, f"p{i}", f"{label}_{i}"))
    return out


def _rest_pose() -> np.ndarray:
    style = ClassStyle("rest", 0.0, 0.0, 0.0, 0.5)
    return animate(style, 1, 25.0, np.random.default_rng(0), spread=0.0)[0]


def write_dataset(sequences: Sequence[MotionSequence], directory: str | os.PathLike) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return [write_sequence(s, directory / f"{s.sequence_id}.jsonl") for s in sequences]
