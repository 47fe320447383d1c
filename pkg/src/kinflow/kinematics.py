"""Kinematic time series extracted from tracked skeletons.

Three per-frame series, all Euclidean norms in pixel units:

* stride: distance between the two feet within one pose.  Periodic during
  normal walking, flat during e.g. skateboarding.
* displacement: distance between the feet midpoints of consecutive poses,
  a per-frame speed proxy.  The first value is 0 by convention.
* neck_displacement: per-frame movement of the neck joint, a rough proxy
  for the body's centre of mass.  First value 0.

A variant selects which series feed the density model; feature matrices
stack them as columns in the fixed order (stride, displacement,
neck_displacement) so trained models stay portable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .skeleton_data import PersonTrack


class FeatureKind(enum.Enum):
    STRIDE = "stride"
    DISPLACEMENT = "displacement"
    NECK_DISPLACEMENT = "neck_displacement"


# Fixed column order for feature matrices.
FEATURE_ORDER = (FeatureKind.STRIDE, FeatureKind.DISPLACEMENT, FeatureKind.NECK_DISPLACEMENT)

_FEATURE_ROLES = {
    FeatureKind.STRIDE: ("left_foot", "right_foot"),
    FeatureKind.DISPLACEMENT: ("left_foot", "right_foot"),
    FeatureKind.NECK_DISPLACEMENT: ("neck",),
}


class Variant(enum.Enum):
    """Feature-set variants, ordered by how many series they use."""

    HKVAD1 = "HKVAD1"
    HKVAD2 = "HKVAD2"
    HKVAD3 = "HKVAD3"

    @property
    def features(self) -> tuple[FeatureKind, ...]:
        if self is Variant.HKVAD1:
            return (FeatureKind.DISPLACEMENT,)
        if self is Variant.HKVAD2:
            return (FeatureKind.STRIDE, FeatureKind.DISPLACEMENT)
        return (FeatureKind.STRIDE, FeatureKind.DISPLACEMENT, FeatureKind.NECK_DISPLACEMENT)

    @property
    def n_features(self) -> int:
        return len(self.features)


def parse_variant(text: str) -> Variant:
    """Accepts '1', 'hkvad2', 'HKVAD-3' and similar spellings."""
    key = str(text).upper().replace("-", "").replace("_", "").strip()
    if key in ("1", "2", "3"):
        key = "HKVAD" + key
    try:
        return Variant(key)
    except ValueError:
        raise ValidationError(
            f"unknown variant {text!r}; expected one of HKVAD1, HKVAD2, HKVAD3"
        ) from None


@dataclass(frozen=True)
class FeatureSeries:
    """A named univariate series aligned to a track's frames."""

    kind: FeatureKind
    values: np.ndarray
    video_id: str
    person_id: str
    start_frame: int

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if not np.isfinite(v).all() or (v < 0).any():
            raise ValidationError(
                f"{self.kind.value} series for {self.video_id}/{self.person_id}: "
                f"values must be finite and non-negative"
            )
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def _joint_index(track: PersonTrack, role: str, context: str) -> int:
    try:
        return track.joint_map[role]
    except KeyError:
        raise ValidationError(
            f"track {track.video_id}/{track.person_id}: joint_map is missing "
            f"'{role}' ({context})"
        ) from None


def _norms(diff: np.ndarray) -> np.ndarray:
    return np.hypot(diff[:, 0], diff[:, 1])


def _series(track: PersonTrack, kind: FeatureKind, values: np.ndarray) -> FeatureSeries:
    return FeatureSeries(kind, values, track.video_id, track.person_id, track.start_frame)


def stride_series(track: PersonTrack) -> FeatureSeries:
    """Per-pose distance between the two feet."""
    lf = _joint_index(track, "left_foot", "needed for stride")
    rf = _joint_index(track, "right_foot", "needed for stride")
    return _series(track, FeatureKind.STRIDE, _norms(track.xy[:, rf] - track.xy[:, lf]))


def _midpoints(track: PersonTrack) -> np.ndarray:
    lf = _joint_index(track, "left_foot", "needed for displacement")
    rf = _joint_index(track, "right_foot", "needed for displacement")
    return 0.5 * (track.xy[:, lf] + track.xy[:, rf])


def displacement_series(track: PersonTrack) -> FeatureSeries:
    """Per-frame movement of the feet midpoint; first value 0."""
    mids = _midpoints(track)
    values = np.concatenate(([0.0], _norms(np.diff(mids, axis=0))))
    return _series(track, FeatureKind.DISPLACEMENT, values)


def neck_displacement_series(track: PersonTrack) -> FeatureSeries:
    """Per-frame movement of the neck joint; first value 0."""
    neck = _joint_index(track, "neck", "required by HKVAD3")
    pos = track.xy[:, neck]
    values = np.concatenate(([0.0], _norms(np.diff(pos, axis=0))))
    return _series(track, FeatureKind.NECK_DISPLACEMENT, values)


_SERIES_FUNCS = {
    FeatureKind.STRIDE: stride_series,
    FeatureKind.DISPLACEMENT: displacement_series,
    FeatureKind.NECK_DISPLACEMENT: neck_displacement_series,
}


def feature_series(track: PersonTrack, kind: FeatureKind) -> FeatureSeries:
    return _SERIES_FUNCS[kind](track)


def assemble_features(track: PersonTrack, variant: Variant) -> np.ndarray:
    """Stack the variant's series as a (T, F) matrix in the fixed column order."""
    cols = [feature_series(track, kind).values for kind in variant.features]
    return np.column_stack(cols)


def scale_to_unit(track: PersonTrack, width: float, height: float) -> PersonTrack:
    """Divide x by the frame width and y by the frame height.

    Optional coordinate normalization for mixing cameras with different
    resolutions; off by default throughout the pipeline.
    """
    if width <= 0 or height <= 0:
        raise ValidationError(f"frame size must be positive, got {width} x {height}")
    return PersonTrack(
        video_id=track.video_id,
        person_id=track.person_id,
        start_frame=track.start_frame,
        xy=track.xy / np.array([width, height]),
        confidence=track.confidence,
        joint_map=track.joint_map,
    )
