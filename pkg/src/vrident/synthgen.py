"""Seeded synthetic multi-week VR telemetry with per-participant identity.

Each participant gets a :class:`ParticipantProfile` (body size, hand rest
offsets, sway frequencies and directions, amplitudes). Motion is a sum of
sinusoids per device modulated by a slowly varying activity envelope, plus
white tracking noise. Week-to-week change is a random walk on the profile
parameters scaled by a :class:`DriftModel`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import quat
from .corpus import CorpusIndex, SessionEntry
from .telemetry import Recording, write_recording

FREQ_RANGE = (0.1, 3.0)
HEIGHT_RANGE = (1.4, 2.1)
POSITION_DECIMALS = 6
QUAT_DECIMALS = 9


@dataclass(frozen=True)
class ParticipantProfile:
    index: int
    height: float
    arm_length: float
    left_rest: np.ndarray
    right_rest: np.ndarray
    head_freqs: np.ndarray
    left_freqs: np.ndarray
    right_freqs: np.ndarray
    left_dirs: np.ndarray   # (k, 3) unit directions, one per left-hand sinusoid
    right_dirs: np.ndarray
    left_orient: np.ndarray   # rest yaw/pitch/roll of the controller, radians
    right_orient: np.ndarray
    head_pitch: float
    head_sway: float          # radians
    gesture_amplitude: float  # meters
    noise_scale: float        # meters

    def check(self) -> None:
        if not HEIGHT_RANGE[0] <= self.height <= HEIGHT_RANGE[1]:
            raise ValueError(f"height {self.height} outside {HEIGHT_RANGE}")
        for f in (self.head_freqs, self.left_freqs, self.right_freqs):
            if np.any(f < FREQ_RANGE[0]) or np.any(f > FREQ_RANGE[1]):
                raise ValueError("sway frequency outside [0.1, 3] Hz")
        if min(self.arm_length, self.head_sway, self.gesture_amplitude, self.noise_scale) < 0:
            raise ValueError("scales must be non-negative")

    def to_json(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in asdict(self).items()}


@dataclass(frozen=True)
class DriftModel:
    """Per-week random-walk standard deviations for the drifting profile fields."""

    height: float = 0.0
    arm_length: float = 0.0
    rest: float = 0.0         # m, applied to both hand rest offsets
    freqs: float = 0.0        # Hz, applied to every sway frequency
    orient: float = 0.0       # rad, controller rest orientation
    head_pitch: float = 0.0
    head_sway: float = 0.0
    gesture_amplitude: float = 0.0
    noise_scale: float = 0.0

    def __post_init__(self):
        if any(getattr(self, f.name) < 0 for f in fields(self)):
            raise ValueError("drift standard deviations must be >= 0")

    @classmethod
    def scaled(cls, level: float) -> "DriftModel":
        """A preset whose magnitude grows linearly with ``level`` (0 disables drift)."""
        return cls(height=0.004 * level, arm_length=0.004 * level, rest=0.02 * level,
                   freqs=0.08 * level, orient=0.08 * level, head_pitch=0.04 * level,
                   head_sway=0.01 * level, gesture_amplitude=0.006 * level,
                   noise_scale=0.0001 * level)

    def is_zero(self) -> bool:
        return all(getattr(self, f.name) == 0 for f in fields(self))


def _unit_rows(rng, k):
    d = rng.normal(size=(k, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _freqs(rng):
    k = int(rng.integers(2, 5))
    # distinct frequencies, spread on a log scale
    return np.sort(np.exp(rng.uniform(np.log(0.15), np.log(2.5), size=k)))


def gen_profile(seed: int, participant_index: int) -> ParticipantProfile:
    rng = np.random.default_rng([int(seed), int(participant_index), 0])
    arm = rng.uniform(0.55, 0.8)
    scale = arm / 0.7

    def rest(side):
        return np.array([side * rng.uniform(0.12, 0.32), -rng.uniform(0.4, 0.65),
                         -rng.uniform(0.18, 0.45)]) * scale

    left_rest, right_rest = rest(-1.0), rest(1.0)
    head_f, left_f, right_f = _freqs(rng), _freqs(rng), _freqs(rng)
    p = ParticipantProfile(
        index=int(participant_index),
        height=float(rng.uniform(1.5, 1.95)),
        arm_length=float(arm),
        left_rest=left_rest, right_rest=right_rest,
        head_freqs=head_f, left_freqs=left_f, right_freqs=right_f,
        left_dirs=_unit_rows(rng, len(left_f)), right_dirs=_unit_rows(rng, len(right_f)),
        left_orient=rng.uniform([-0.6, -0.9, -0.5], [0.6, 0.3, 0.5]),
        right_orient=rng.uniform([-0.6, -0.9, -0.5], [0.6, 0.3, 0.5]),
        head_pitch=float(rng.uniform(-0.35, 0.1)),
        head_sway=float(rng.uniform(0.03, 0.12)),
        gesture_amplitude=float(rng.uniform(0.02, 0.08)),
        noise_scale=float(rng.uniform(0.0003, 0.0012)),
    )
    p.check()
    return p


def week_parameters(profile: ParticipantProfile, week: int, drift: Optional[DriftModel],
                    seed: int) -> ParticipantProfile:
    """Profile after ``week - 1`` random-walk steps (week 1 is the profile itself)."""
    if drift is None or drift.is_zero() or week <= 1:
        return profile
    steps = week - 1

    def fwalk(name, value, sd):
        # one stream per field; the first w-1 draws are shared by all later weeks
        r = np.random.default_rng([int(seed), profile.index, 1, _FIELD_IDS[name]])
        v = np.asarray(value, dtype=float)
        return v + sd * r.normal(size=(steps, *v.shape)).sum(axis=0)

    lo, hi = FREQ_RANGE
    out = replace(
        profile,
        height=float(np.clip(fwalk("height", profile.height, drift.height), *HEIGHT_RANGE)),
        arm_length=float(max(0.0, fwalk("arm_length", profile.arm_length, drift.arm_length))),
        left_rest=fwalk("left_rest", profile.left_rest, drift.rest),
        right_rest=fwalk("right_rest", profile.right_rest, drift.rest),
        head_freqs=np.clip(fwalk("head_freqs", profile.head_freqs, drift.freqs), lo, hi),
        left_freqs=np.clip(fwalk("left_freqs", profile.left_freqs, drift.freqs), lo, hi),
        right_freqs=np.clip(fwalk("right_freqs", profile.right_freqs, drift.freqs), lo, hi),
        left_orient=fwalk("left_orient", profile.left_orient, drift.orient),
        right_orient=fwalk("right_orient", profile.right_orient, drift.orient),
        head_pitch=float(fwalk("head_pitch", profile.head_pitch, drift.head_pitch)),
        head_sway=float(abs(fwalk("head_sway", profile.head_sway, drift.head_sway))),
        gesture_amplitude=float(abs(fwalk("gesture_amplitude", profile.gesture_amplitude,
                                          drift.gesture_amplitude))),
        noise_scale=float(abs(fwalk("noise_scale", profile.noise_scale, drift.noise_scale))),
    )
    return out


_FIELD_IDS = {name: i for i, name in enumerate([
    "height", "arm_length", "left_rest", "right_rest", "head_freqs", "left_freqs",
    "right_freqs", "left_orient", "right_orient", "head_pitch", "head_sway",
    "gesture_amplitude", "noise_scale"])}


def _envelope(rng, t, variability, knot_seconds=20.0):
    """Slowly varying positive activity level (log-normal knots, linear in between)."""
    if variability <= 0:
        return np.ones_like(t)
    n_knots = int(np.ceil((t[-1] - t[0]) / knot_seconds)) + 2
    knots = np.exp(variability * rng.normal(size=n_knots) - 0.5 * variability ** 2)
    return np.interp(t, t[0] + knot_seconds * np.arange(n_knots), knots)


def _sines(rng, t, freqs, weights=None):
    """(n, k) sinusoids with seeded phases."""
    phases = rng.uniform(0, 2 * np.pi, size=len(freqs))
    s = np.sin(2 * np.pi * t[:, None] * freqs[None, :] + phases[None, :])
    if weights is not None:
        s = s * weights[None, :]
    return s


def gen_session(profile: ParticipantProfile, week: int, minutes: float, rate: float = 90.0,
                drift: Optional[DriftModel] = None, seed: int = 0,
                variability: float = 0.4, noise_level: float = 1.0) -> Recording:
    """One weekly session of ``minutes`` at ``rate`` Hz.

    ``variability`` controls the log-scale spread of the activity envelope
    (how much gesturing intensity wanders within a session) and
    ``noise_level`` multiplies the tracking noise.
    """
    if minutes <= 0:
        raise ValueError("minutes must be positive")
    if noise_level < 0:
        raise ValueError("noise_level must be non-negative")
    p = week_parameters(profile, week, drift, seed)
    rng = np.random.default_rng([int(seed), profile.index, 2, int(week)])
    n = int(round(minutes * 60.0 * rate))
    t = np.arange(n) / rate

    facing = rng.uniform(-np.pi, np.pi)
    origin = np.array([rng.uniform(-3, 3), 0.0, rng.uniform(-3, 3)])

    # head: sway in yaw/pitch driven by the head frequencies
    head_env = _envelope(rng, t, variability)
    k = len(p.head_freqs)
    w = 1.0 / np.arange(1, k + 1)
    yaw_s = _sines(rng, t, p.head_freqs, w).sum(axis=1)
    pitch_s = _sines(rng, t, p.head_freqs, w[::-1]).sum(axis=1)
    head_yaw = facing + p.head_sway * head_env * yaw_s
    head_pitch = p.head_pitch + 0.5 * p.head_sway * head_env * pitch_s
    head_q = quat.from_euler_yxz(head_yaw, head_pitch, 0.02 * pitch_s)
    bob = 0.01 * _sines(rng, t, p.head_freqs[:1]).sum(axis=1)
    lean = 0.02 * _sines(rng, t, p.head_freqs[-1:]).sum(axis=1)
    head_local = np.stack([lean, p.height + bob, 0.5 * lean], axis=1)
    face_q = quat.about_y(np.full(n, facing))
    head_pos = origin + quat.rotate(face_q, head_local)

    positions = [head_pos]
    orientations = [head_q]
    for rest, freqs, dirs, orient in ((p.left_rest, p.left_freqs, p.left_dirs, p.left_orient),
                                      (p.right_rest, p.right_freqs, p.right_dirs, p.right_orient)):
        env = _envelope(rng, t, variability)
        w = 1.0 / np.sqrt(np.arange(1, len(freqs) + 1))
        s = _sines(rng, t, freqs, w)  # (n, k)
        offset = rest + p.gesture_amplitude * env[:, None] * (s @ dirs)
        world = head_pos + quat.rotate(face_q, offset)
        world += noise_level * p.noise_scale * rng.normal(size=world.shape)
        positions.append(world)

        # controller orientation: rest pose wobbling about the gesture directions
        wobble = 4.0 * p.gesture_amplitude * env[:, None] * s
        q = quat.from_euler_yxz(orient[0], orient[1], orient[2])
        for j in range(len(freqs)):
            q = quat.multiply(q, quat.from_axis_angle(dirs[j], wobble[:, j]))
        orientations.append(quat.multiply(face_q, q))

    P = np.round(np.stack(positions, axis=1), POSITION_DECIMALS)
    Q = np.stack(orientations, axis=1)
    Q = np.round(Q / np.linalg.norm(Q, axis=2, keepdims=True), QUAT_DECIMALS)
    return Recording(f"P{profile.index:03d}", int(week), t, P, Q, float(rate))


@dataclass
class GeneratorConfig:
    n_participants: int = 20
    weeks: int = 8
    minutes_per_session: float = 10.0
    rate: float = 90.0
    seed: int = 0
    thin_prob: float = 0.0
    variability: float = 0.4
    noise_level: float = 1.0
    drift: DriftModel = field(default_factory=DriftModel)

    def to_json(self) -> dict:
        d = asdict(self)
        d["drift"] = asdict(self.drift)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratorConfig":
        obj = dict(obj)
        drift = obj.pop("drift", {}) or {}
        if isinstance(drift, (int, float)):
            drift = DriftModel.scaled(float(drift))
        else:
            drift = DriftModel(**drift)
        return cls(drift=drift, **obj)

    @classmethod
    def load(cls, path) -> "GeneratorConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


def gen_corpus(out_dir, n_participants: int = 20, weeks: int = 8,
               minutes_per_session: float = 10.0, drift: Optional[DriftModel] = None,
               seed: int = 0, thin_prob: float = 0.0, rate: float = 90.0,
               variability: float = 0.4, noise_level: float = 1.0) -> CorpusIndex:
    """Write ``telemetry/<participant>/week<w>.jsonl`` files and ``index.json`` under ``out_dir``.

    Each session is independently skipped with probability ``thin_prob``.
    """
    if n_participants < 2:
        raise ValueError("need at least 2 participants")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    thin = np.random.default_rng([int(seed), 3])
    entries = {}
    for i in range(n_participants):
        prof = gen_profile(seed, i)
        sessions = {}
        for w in range(1, weeks + 1):
            if thin_prob > 0 and thin.random() < thin_prob:
                continue
            rec = gen_session(prof, w, minutes_per_session, rate, drift, seed, variability,
                              noise_level)
            rel = Path("telemetry") / rec.participant_id / f"week{w:02d}.jsonl"
            write_recording(rec, out_dir / rel)
            sessions[w] = SessionEntry(duration=rec.duration, telemetry=str(rel),
                                       start_t=float(rec.t[0]))
        if sessions:
            entries[f"P{i:03d}"] = sessions
    idx = CorpusIndex(entries, max_week=max(weeks, 1), root=str(out_dir))
    idx.save(out_dir / "index.json")
    return idx


def gen_corpus_from_config(cfg: GeneratorConfig, out_dir) -> CorpusIndex:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "generator.json").write_text(json.dumps(cfg.to_json(), indent=1) + "\n")
    return gen_corpus(out_dir, cfg.n_participants, cfg.weeks, cfg.minutes_per_session,
                      cfg.drift, cfg.seed, cfg.thin_prob, cfg.rate, cfg.variability,
                      cfg.noise_level)
