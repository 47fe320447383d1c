"""Data model and file I/O for tracked skeleton sequences and frame labels.

On-disk formats, all plain text:

* track file: JSON Lines, one track per line::

    {"video_id": str, "person_id": str, "start_frame": int,
     "joint_map": {"left_foot": int, "right_foot": int, "neck": int},
     "frames": [[[x, y, conf?], ... k joints], ... T poses]}

  ``neck`` and the per-joint confidence are optional.  Tracks are assumed
  temporally contiguous: pose ``j`` belongs to video frame
  ``start_frame + j``; trackers that drop frames must split tracks.

* label file: CSV with header ``video_id,frame,label`` and one row per frame
  (dense over ``[0, n_frames)``), or JSON Lines with one
  ``{"video_id": str, "labels": [0/1, ...]}`` object per video.

* manifest: JSON ``{"name": str, "track_files": [...], "label_files": [...],
  "frame_counts": {video_id: n_frames}}`` with paths relative to the
  manifest's directory.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

REQUIRED_ROLES = ("left_foot", "right_foot")
KNOWN_ROLES = ("left_foot", "right_foot", "neck")


@dataclass(frozen=True)
class Joint:
    """One 2-D keypoint in pixel coordinates."""

    x: float
    y: float
    confidence: float = 1.0


@dataclass(frozen=True)
class PersonTrack:
    """One tracked person's contiguous skeleton sequence.

    ``xy`` has shape (T, k, 2) in pixels; ``confidence`` has shape (T, k).
    Both arrays are copied and frozen at construction, so tracks are safe to
    share across threads.
    """

    video_id: str
    person_id: str
    start_frame: int
    xy: np.ndarray
    confidence: np.ndarray
    joint_map: dict[str, int]

    def __post_init__(self) -> None:
        xy = np.array(self.xy, dtype=np.float64)
        if xy.ndim != 3 or xy.shape[2] != 2 or xy.shape[0] < 1 or xy.shape[1] < 1:
            raise ValidationError(
                f"track {self.video_id}/{self.person_id}: xy must have shape "
                f"(T, k, 2) with T, k >= 1, got {xy.shape}"
            )
        if not np.isfinite(xy).all():
            raise ValidationError(
                f"track {self.video_id}/{self.person_id}: non-finite coordinate"
            )
        conf = np.array(self.confidence, dtype=np.float64)
        if conf.shape != xy.shape[:2]:
            raise ValidationError(
                f"track {self.video_id}/{self.person_id}: confidence shape "
                f"{conf.shape} does not match poses {xy.shape[:2]}"
            )
        if not isinstance(self.start_frame, int) or self.start_frame < 0:
            raise ValidationError(
                f"track {self.video_id}/{self.person_id}: start_frame must be "
                f"a non-negative integer, got {self.start_frame!r}"
            )
        k = xy.shape[1]
        for role in REQUIRED_ROLES:
            if role not in self.joint_map:
                raise ValidationError(
                    f"track {self.video_id}/{self.person_id}: joint_map is "
                    f"missing required role '{role}'"
                )
        for role, idx in self.joint_map.items():
            if not isinstance(idx, int) or not 0 <= idx < k:
                raise ValidationError(
                    f"track {self.video_id}/{self.person_id}: joint_map['{role}'] "
                    f"= {idx!r} is not a joint index in [0, {k})"
                )
        xy.setflags(write=False)
        conf.setflags(write=False)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "joint_map", dict(self.joint_map))

    @property
    def n_frames(self) -> int:
        return self.xy.shape[0]

    @property
    def n_joints(self) -> int:
        return self.xy.shape[1]

    @property
    def end_frame(self) -> int:
        """One past the last covered video frame."""
        return self.start_frame + self.n_frames

    def joint(self, t: int, role: str) -> Joint:
        idx = self.joint_map[role]
        return Joint(self.xy[t, idx, 0], self.xy[t, idx, 1], self.confidence[t, idx])


@dataclass(frozen=True)
class VideoLabels:
    """Per-frame binary ground truth for one video (0 normal, 1 anomalous)."""

    video_id: str
    labels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.labels, dtype=np.int64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValidationError(f"labels for {self.video_id}: need a non-empty vector")
        if not np.isin(arr, (0, 1)).all():
            bad = arr[~np.isin(arr, (0, 1))][0]
            raise ValidationError(f"labels for {self.video_id}: label {bad} not in {{0,1}}")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def n_frames(self) -> int:
        return self.labels.size


@dataclass(frozen=True)
class DatasetManifest:
    """Pointers to track/label files plus per-video frame counts."""

    name: str
    track_files: tuple[str, ...]
    label_files: tuple[str, ...]
    frame_counts: dict[str, int]
    base_dir: Path = field(default_factory=Path)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def load_all_tracks(self) -> list[PersonTrack]:
        """Load every referenced track file and check manifest consistency."""
        tracks: list[PersonTrack] = []
        for rel in self.track_files:
            tracks.extend(load_tracks(self.resolve(rel)))
        for tr in tracks:
            if tr.video_id not in self.frame_counts:
                raise ValidationError(
                    f"manifest {self.name}: track video '{tr.video_id}' has no frame count"
                )
            n = self.frame_counts[tr.video_id]
            if tr.end_frame > n:
                raise ValidationError(
                    f"manifest {self.name}: track {tr.video_id}/{tr.person_id} covers "
                    f"frames up to {tr.end_frame} but the video has only {n}"
                )
        return tracks

    def load_all_labels(self) -> list[VideoLabels]:
        labels: list[VideoLabels] = []
        for rel in self.label_files:
            labels.extend(load_labels(self.resolve(rel)))
        for vl in labels:
            expected = self.frame_counts.get(vl.video_id)
            if expected is not None and expected != vl.n_frames:
                raise ValidationError(
                    f"manifest {self.name}: labels for '{vl.video_id}' cover "
                    f"{vl.n_frames} frames, manifest says {expected}"
                )
        return labels


def _reject_nonfinite(token: str) -> float:
    raise ValidationError(f"non-finite number {token!r}")


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where}: expected a finite number, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(f"{where}: expected a finite number, got {value!r}")
    return float(value)


def _track_from_record(rec: dict, where: str) -> PersonTrack:
    if not isinstance(rec, dict):
        raise ValidationError(f"{where}: expected a JSON object, got {type(rec).__name__}")
    for key in ("video_id", "person_id", "start_frame", "joint_map", "frames"):
        if key not in rec:
            raise ValidationError(f"{where}: missing key '{key}'")
    frames = rec["frames"]
    if not isinstance(frames, list) or not frames:
        raise ValidationError(f"{where}: frames must be a non-empty list of poses")
    k = None
    xy_rows: list[list[list[float]]] = []
    conf_rows: list[list[float]] = []
    for t, pose in enumerate(frames):
        if not isinstance(pose, list) or not pose:
            raise ValidationError(f"{where}: frames[{t}] must be a non-empty list of joints")
        if k is None:
            k = len(pose)
        elif len(pose) != k:
            raise ValidationError(
                f"{where}: frames[{t}] has {len(pose)} joints, expected {k} "
                f"(all poses must share the same joint count)"
            )
        xy_row, conf_row = [], []
        for j, joint in enumerate(pose):
            if not isinstance(joint, list) or len(joint) not in (2, 3):
                raise ValidationError(
                    f"{where}: frames[{t}][{j}] must be [x, y] or [x, y, conf]"
                )
            x = _as_number(joint[0], f"{where}: frames[{t}][{j}].x")
            y = _as_number(joint[1], f"{where}: frames[{t}][{j}].y")
            c = _as_number(joint[2], f"{where}: frames[{t}][{j}].conf") if len(joint) == 3 else 1.0
            xy_row.append([x, y])
            conf_row.append(c)
        xy_rows.append(xy_row)
        conf_rows.append(conf_row)
    joint_map = rec["joint_map"]
    if not isinstance(joint_map, dict):
        raise ValidationError(f"{where}: joint_map must be an object")
    start = rec["start_frame"]
    if isinstance(start, bool) or not isinstance(start, int):
        raise ValidationError(f"{where}: start_frame must be an integer, got {start!r}")
    try:
        return PersonTrack(
            video_id=str(rec["video_id"]),
            person_id=str(rec["person_id"]),
            start_frame=start,
            xy=np.array(xy_rows, dtype=np.float64),
            confidence=np.array(conf_rows, dtype=np.float64),
            joint_map=joint_map,
        )
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def load_tracks(path) -> list[PersonTrack]:
    """Parse a JSON-Lines track file; fails on the first invalid record."""
    tracks: list[PersonTrack] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}: line {lineno}"
            try:
                rec = json.loads(line, parse_constant=_reject_nonfinite)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{where}: malformed JSON ({exc.msg})") from None
            except ValidationError as exc:
                raise ValidationError(f"{where}: {exc}") from None
            tracks.append(_track_from_record(rec, where))
    return tracks


def save_tracks(tracks, path) -> None:
    """Write tracks as JSON Lines; float values round-trip exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for tr in tracks:
            rec = {
                "video_id": tr.video_id,
                "person_id": tr.person_id,
                "start_frame": tr.start_frame,
                "joint_map": tr.joint_map,
                "frames": [
                    [
                        [tr.xy[t, j, 0], tr.xy[t, j, 1], tr.confidence[t, j]]
                        for j in range(tr.n_joints)
                    ]
                    for t in range(tr.n_frames)
                ],
            }
            fh.write(json.dumps(rec, allow_nan=False) + "\n")


def _labels_from_csv(path) -> list[VideoLabels]:
    per_video: dict[str, dict[int, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if [h.strip() for h in header] != ["video_id", "frame", "label"]:
            raise ValidationError(
                f"{path}: expected header 'video_id,frame,label', got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}: line {lineno}: expected 3 columns, got {len(row)}")
            vid, frame_s, label_s = (c.strip() for c in row)
            try:
                frame = int(frame_s)
            except ValueError:
                raise ValidationError(f"{path}: line {lineno}: frame {frame_s!r} is not an integer") from None
            if frame < 0:
                raise ValidationError(f"{path}: line {lineno}: frame {frame} is negative")
            if label_s not in ("0", "1"):
                raise ValidationError(f"{path}: line {lineno}: label {label_s!r} not in {{0,1}}")
            frames = per_video.setdefault(vid, {})
            if frame in frames:
                raise ValidationError(f"{path}: line {lineno}: duplicate frame {frame} for video '{vid}'")
            frames[frame] = int(label_s)
    out = []
    for vid, frames in per_video.items():
        n = max(frames) + 1
        missing = sorted(set(range(n)) - set(frames))
        if missing:
            raise ValidationError(
                f"{path}: video '{vid}' has label gaps (first missing frame {missing[0]} of {n})"
            )
        out.append(VideoLabels(vid, np.array([frames[i] for i in range(n)])))
    return out


def _labels_from_jsonl(path) -> list[VideoLabels]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}: line {lineno}"
            try:
                rec = json.loads(line, parse_constant=_reject_nonfinite)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{where}: malformed JSON ({exc.msg})") from None
            except ValidationError as exc:
                raise ValidationError(f"{where}: {exc}") from None
            if not isinstance(rec, dict) or "video_id" not in rec or "labels" not in rec:
                raise ValidationError(f"{where}: expected {{'video_id', 'labels'}}")
            labels = rec["labels"]
            if not isinstance(labels, list) or any(v not in (0, 1) for v in labels):
                raise ValidationError(f"{where}: labels must be a list of 0/1")
            try:
                out.append(VideoLabels(str(rec["video_id"]), np.array(labels)))
            except ValidationError as exc:
                raise ValidationError(f"{where}: {exc}") from None
    return out


def load_labels(path) -> list[VideoLabels]:
    """Parse a label file; dense per-video vectors, gaps are an error."""
    with open(path, encoding="utf-8") as fh:
        head = fh.read(4096).lstrip()
    if head.startswith("{"):
        return _labels_from_jsonl(path)
    return _labels_from_csv(path)


def save_labels(labels, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", "frame", "label"])
        for vl in labels:
            for frame, lab in enumerate(vl.labels):
                writer.writerow([vl.video_id, frame, int(lab)])


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            rec = json.load(fh, parse_constant=_reject_nonfinite)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: malformed JSON ({exc.msg})") from None
    for key in ("name", "track_files", "label_files", "frame_counts"):
        if key not in rec:
            raise ValidationError(f"{path}: manifest is missing key '{key}'")
    counts = rec["frame_counts"]
    if not isinstance(counts, dict):
        raise ValidationError(f"{path}: frame_counts must be an object")
    for vid, n in counts.items():
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ValidationError(f"{path}: frame_counts['{vid}'] must be a positive integer")
    return DatasetManifest(
        name=str(rec["name"]),
        track_files=tuple(rec["track_files"]),
        label_files=tuple(rec["label_files"]),
        frame_counts={str(k): int(v) for k, v in counts.items()},
        base_dir=path.parent,
    )


def save_manifest(manifest: DatasetManifest, path) -> None:
    rec = {
        "name": manifest.name,
        "track_files": list(manifest.track_files),
        "label_files": list(manifest.label_files),
        "frame_counts": manifest.frame_counts,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rec, fh, indent=1)
        fh.write("\n")
