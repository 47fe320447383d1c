"""Seeded synthetic gait benchmark.

Normal tracks walk with anti-phase sinusoidal feet around a midpoint that
advances at constant speed, so the kinematic series have closed forms that
double as test oracles: with no jitter the stride is A*|sin(2*pi*t/P)| and
the displacement is exactly the walking speed.  Anomalous tracks switch,
inside a labeled interval, to skateboard-like gliding (frozen stride,
raised speed), running (halved period, higher speed and amplitude), or a
fall (feet freeze, neck drops over a few frames and stays down).

Realism is a non-goal; the point is a deterministic, learnable benchmark
that runs in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .skeleton_data import (
    DatasetManifest,
    PersonTrack,
    VideoLabels,
    save_labels,
    save_manifest,
    save_tracks,
)

NECK_OFFSET = 40.0  # px above the feet midpoint (y grows downward)
FALL_DROP_FRAMES = 5
ANOMALY_KINDS = ("skateboard", "run", "fall")

JOINT_MAP = {"left_foot": 0, "right_foot": 1, "neck": 2}

SKATEBOARD_SPEED_FACTOR = 2.5
SKATEBOARD_STRIDE_FRACTION = 0.25  # stride frozen at this fraction of A
RUN_SPEED_FACTOR = 2.0
RUN_AMPLITUDE_FACTOR = 1.5


@dataclass(frozen=True)
class GaitParams:
    speed: float = 2.0          # px per frame along the heading
    amplitude: float = 10.0     # peak feet separation A
    period: int = 20            # gait cycle length in frames
    heading: float = 0.0        # radians
    jitter: float = 0.1         # per-joint Gaussian noise, px
    start: tuple[float, float] = (200.0, 200.0)

    def __post_init__(self) -> None:
        if self.speed < 0 or self.amplitude < 0 or self.jitter < 0:
            raise ValidationError("speed, amplitude and jitter must be >= 0")
        if self.period < 2:
            raise ValidationError(f"gait period must be >= 2 frames, got {self.period}")


@dataclass(frozen=True)
class AnomalySpec:
    kind: str
    onset: int
    duration: int

    def __post_init__(self) -> None:
        if self.kind not in ANOMALY_KINDS:
            raise ValidationError(f"anomaly kind {self.kind!r} not in {ANOMALY_KINDS}")
        if self.onset < 0 or self.duration < 1:
            raise ValidationError("anomaly onset must be >= 0 and duration >= 1")
        if self.kind == "fall" and self.duration < FALL_DROP_FRAMES:
            raise ValidationError(
                f"fall anomalies need duration >= {FALL_DROP_FRAMES} (the drop itself)"
            )

    @property
    def end(self) -> int:
        return self.onset + self.duration


def _geometry(params: GaitParams, n_frames: int, spec: AnomalySpec | None) -> np.ndarray:
    """Noise-free joint positions, shape (T, 3, 2): left foot, right foot, neck."""
    e = np.array([math.cos(params.heading), math.sin(params.heading)])
    up = np.array([0.0, -1.0])  # image coordinates: smaller y is higher
    mid = np.array(params.start, dtype=np.float64)
    xy = np.zeros((n_frames, 3, 2))
    frozen_feet: np.ndarray | None = None
    neck_base: np.ndarray | None = None

    for t in range(n_frames):
        in_anomaly = spec is not None and spec.onset <= t < spec.end
        kind = spec.kind if in_anomaly else None

        if kind == "fall":
            if frozen_feet is None:
                # Freeze feet and neck where the previous frame left them, so
                # the neck's per-frame delta during the drop is exactly the
                # drop rate (no bob carry-over).
                if t > 0:
                    frozen_feet = xy[t - 1, :2].copy()
                    neck_base = xy[t - 1, 2].copy()
                else:
                    frozen_feet = np.stack([mid, mid])
                    neck_base = mid + NECK_OFFSET * up
            drop = 3.0 * NECK_OFFSET * min(t - spec.onset + 1, FALL_DROP_FRAMES) / FALL_DROP_FRAMES
            xy[t, :2] = frozen_feet
            xy[t, 2] = neck_base - drop * up
            continue

        frozen_feet = None
        if kind == "skateboard":
            speed = SKATEBOARD_SPEED_FACTOR * params.speed
            half_sep = 0.5 * SKATEBOARD_STRIDE_FRACTION * params.amplitude
        elif kind == "run":
            speed = RUN_SPEED_FACTOR * params.speed
            half_sep = 0.5 * RUN_AMPLITUDE_FACTOR * params.amplitude * math.sin(
                4.0 * math.pi * t / params.period
            )
        else:
            speed = params.speed
            half_sep = 0.5 * params.amplitude * math.sin(2.0 * math.pi * t / params.period)

        if t > 0:
            mid = mid + speed * e
        xy[t, 0] = mid + half_sep * e
        xy[t, 1] = mid - half_sep * e
        bob = (params.amplitude / 10.0) * math.sin(4.0 * math.pi * t / params.period)
        xy[t, 2] = mid + (NECK_OFFSET + bob) * up
    return xy


def _make_track(
    xy: np.ndarray, params: GaitParams, rng: np.random.Generator, video_id: str, person_id: str
) -> PersonTrack:
    noisy = xy + rng.normal(0.0, params.jitter, size=xy.shape) if params.jitter > 0 else xy
    return PersonTrack(
        video_id=video_id,
        person_id=person_id,
        start_frame=0,
        xy=noisy,
        confidence=np.ones(noisy.shape[:2]),
        joint_map=dict(JOINT_MAP),
    )


def generate_walk(
    params: GaitParams,
    n_frames: int,
    seed,
    *,
    video_id: str = "walk",
    person_id: str = "p0",
) -> PersonTrack:
    """A normal walking track; deterministic given (params, seed)."""
    if n_frames < 1:
        raise ValidationError(f"n_frames must be >= 1, got {n_frames}")
    rng = np.random.default_rng(seed)
    return _make_track(_geometry(params, n_frames, None), params, rng, video_id, person_id)


def generate_anomaly(
    params: GaitParams,
    spec: AnomalySpec,
    n_frames: int,
    seed,
    *,
    video_id: str = "anomaly",
    person_id: str = "p0",
) -> tuple[PersonTrack, VideoLabels]:
    """A track that walks normally except inside the labeled interval."""
    if n_frames < 1:
        raise ValidationError(f"n_frames must be >= 1, got {n_frames}")
    if spec.end > n_frames:
        raise ValidationError(
            f"anomaly interval [{spec.onset}, {spec.end}) exceeds track length {n_frames}"
        )
    rng = np.random.default_rng(seed)
    track = _make_track(_geometry(params, n_frames, spec), params, rng, video_id, person_id)
    labels = np.zeros(n_frames, dtype=np.int64)
    labels[spec.onset : spec.end] = 1
    return track, VideoLabels(video_id, labels)


def _sample_params(rng: np.random.Generator) -> GaitParams:
    return GaitParams(
        speed=rng.uniform(1.5, 2.5),
        amplitude=rng.uniform(8.0, 12.0),
        period=int(rng.integers(16, 25)),
        heading=rng.uniform(0.0, 2.0 * math.pi),
        jitter=rng.uniform(0.05, 0.15),
        start=(rng.uniform(100.0, 900.0), rng.uniform(100.0, 900.0)),
    )


def _sample_spec(rng: np.random.Generator, kind: str, n_frames: int) -> AnomalySpec:
    onset = int(rng.integers(25, 36))
    if kind == "fall":
        # Fallen people stay down, so the interval runs to the end of the
        # track and scoring sees no unlabeled recovery jump.
        return AnomalySpec(kind, onset, n_frames - onset)
    duration = int(rng.integers(30, 41))
    return AnomalySpec(kind, onset, min(duration, n_frames - onset))


def generate_dataset(
    n_normal: int,
    n_anomalous: int,
    out_dir,
    *,
    kinds: tuple[str, ...] = ANOMALY_KINDS,
    seed: int = 0,
    n_frames: int = 100,
    name: str = "synthetic",
) -> DatasetManifest:
    """Write tracks.jsonl, labels.csv and manifest.json under out_dir.

    One track per video; normal videos carry all-zero labels.  Everything
    derives from per-track seeds spawned off ``seed``, so the files are
    byte-identical across runs.
    """
    if n_normal < 0 or n_anomalous < 0:
        raise ValidationError("track counts must be >= 0")
    for kind in kinds:
        if kind not in ANOMALY_KINDS:
            raise ValidationError(f"anomaly kind {kind!r} not in {ANOMALY_KINDS}")
    if n_anomalous > 0 and not kinds:
        raise ValidationError("need at least one anomaly kind")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    children = np.random.SeedSequence(seed).spawn(n_normal + n_anomalous)
    tracks, labels = [], []
    for i in range(n_normal):
        rng = np.random.default_rng(children[i])
        params = _sample_params(rng)
        vid = f"{name}_n{i:04d}"
        tracks.append(_make_track(_geometry(params, n_frames, None), params, rng, vid, "p0"))
        labels.append(VideoLabels(vid, np.zeros(n_frames, dtype=np.int64)))
    for j in range(n_anomalous):
        rng = np.random.default_rng(children[n_normal + j])
        params = _sample_params(rng)
        kind = kinds[j % len(kinds)]
        spec = _sample_spec(rng, kind, n_frames)
        vid = f"{name}_a{j:04d}"
        tracks.append(_make_track(_geometry(params, n_frames, spec), params, rng, vid, "p0"))
        lab = np.zeros(n_frames, dtype=np.int64)
        lab[spec.onset : spec.end] = 1
        labels.append(VideoLabels(vid, lab))

    save_tracks(tracks, out / "tracks.jsonl")
    save_labels(labels, out / "labels.csv")
    manifest = DatasetManifest(
        name=name,
        track_files=("tracks.jsonl",),
        label_files=("labels.csv",),
        frame_counts={t.video_id: n_frames for t in tracks},
        base_dir=out,
    )
    save_manifest(manifest, out / "manifest.json")
    return manifest
