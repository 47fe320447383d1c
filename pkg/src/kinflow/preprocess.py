"""Series cleaning and sliding-window segmentation.

Per feature series, in this order: zero out values farther than
``sigma_k`` population standard deviations from the series mean, then apply
a truncated moving average of half-width ``w``.  The cleaned per-track
feature matrix is cut into overlapping windows of ``L`` frames, which are
flattened time-major into the vectors the flow models.

Standardization (per feature channel, training statistics) is not part of
the cleaning itself but is fitted here and applied identically at training
and scoring time; it is a monotone affine map per channel, so it shifts
every segment's log-density by the same constant and leaves score rankings
untouched while keeping the flow numerically comfortable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .kinematics import Variant, assemble_features
from .skeleton_data import PersonTrack

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class PreprocessConfig:
    """Cleaning and windowing knobs; the defaults are the reference settings."""

    w: int = 2
    L: int = 24
    stride: int = 1
    sigma_k: float = 3.0
    standardize: bool = True

    def __post_init__(self) -> None:
        if self.w < 0:
            raise ValidationError(f"preprocess.w must be >= 0, got {self.w}")
        if self.L < 2:
            raise ValidationError(f"preprocess.L must be >= 2, got {self.L}")
        if self.stride < 1:
            raise ValidationError(f"preprocess.stride must be >= 1, got {self.stride}")
        if not self.sigma_k > 0:
            raise ValidationError(f"preprocess.sigma_k must be > 0, got {self.sigma_k}")

    def to_dict(self) -> dict:
        return {
            "w": self.w,
            "L": self.L,
            "stride": self.stride,
            "sigma_k": self.sigma_k,
            "standardize": self.standardize,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        return cls(
            w=int(d["w"]),
            L=int(d["L"]),
            stride=int(d["stride"]),
            sigma_k=float(d["sigma_k"]),
            standardize=bool(d["standardize"]),
        )


def remove_outliers(values, sigma_k: float = 3.0) -> np.ndarray:
    """Replace values with |x - mean| > sigma_k * std by 0.

    Statistics are the mean and population standard deviation of the input
    series itself; a zero-variance series is returned unchanged.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    m = x.mean()
    s = x.std()
    if s == 0.0:
        return x.copy()
    out = x.copy()
    out[np.abs(x - m) > sigma_k * s] = 0.0
    return out


def smooth(values, w: int) -> np.ndarray:
    """Moving average of half-width w; windows are truncated at the ends.

    Each output is the mean of the input over [t-w, t+w] clipped to valid
    indices, so the length is preserved and no data is fabricated.
    """
    if w < 0:
        raise ValidationError(f"smoothing half-width must be >= 0, got {w}")
    x = np.asarray(values, dtype=np.float64)
    if w == 0 or x.size == 0:
        return x.copy()
    n = x.size
    csum = np.concatenate(([0.0], np.cumsum(x)))
    t = np.arange(n)
    lo = np.maximum(t - w, 0)
    hi = np.minimum(t + w, n - 1)
    return (csum[hi + 1] - csum[lo]) / (hi - lo + 1)


def clean_series(values, cfg: PreprocessConfig) -> np.ndarray:
    """Outlier removal followed by smoothing."""
    return smooth(remove_outliers(values, cfg.sigma_k), cfg.w)


@dataclass(frozen=True)
class Segment:
    """One fixed-length window of a person's feature matrix.

    ``data`` is (L, F); ``vector`` flattens it time-major, so element
    t*F + f is feature f at window offset t.  ``start_frame`` is the first
    video frame the window covers.
    """

    data: np.ndarray
    video_id: str
    person_id: str
    start_frame: int

    def __post_init__(self) -> None:
        d = np.array(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise ValidationError(f"segment data must be 2-D, got shape {d.shape}")
        if not np.isfinite(d).all():
            raise ValidationError(
                f"segment {self.video_id}/{self.person_id}@{self.start_frame}: non-finite entry"
            )
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def length(self) -> int:
        return self.data.shape[0]

    @property
    def n_features(self) -> int:
        return self.data.shape[1]

    @property
    def vector(self) -> np.ndarray:
        return self.data.reshape(-1)


def segment(
    features: np.ndarray,
    cfg: PreprocessConfig,
    *,
    video_id: str = "",
    person_id: str = "",
    track_start: int = 0,
) -> list[Segment]:
    """Slide a length-L window over a (T, F) matrix; T < L yields nothing."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ValidationError(f"feature matrix must be 2-D, got shape {feats.shape}")
    T = feats.shape[0]
    out = []
    for start in range(0, T - cfg.L + 1, cfg.stride):
        out.append(
            Segment(
                data=feats[start : start + cfg.L],
                video_id=video_id,
                person_id=person_id,
                start_frame=track_start + start,
            )
        )
    return out


@dataclass(frozen=True)
class Standardizer:
    """Per-feature-channel affine map fitted on training data."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.mean, dtype=np.float64).reshape(-1)
        s = np.array(self.std, dtype=np.float64).reshape(-1)
        if m.shape != s.shape:
            raise ValidationError("standardizer mean/std shapes differ")
        if (s < STD_FLOOR).any():
            raise ValidationError(f"standardizer std below floor {STD_FLOOR}")
        m.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "std", s)

    def apply(self, data: np.ndarray) -> np.ndarray:
        """Standardize along the last (feature) axis."""
        return (np.asarray(data, dtype=np.float64) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.array(d["mean"]), np.array(d["std"]))


def fit_standardizer(segments: Sequence[Segment]) -> Standardizer:
    """Per-channel mean/std over all training frames, std clamped upward."""
    if not segments:
        raise ValidationError("cannot fit a standardizer on zero segments")
    stacked = np.concatenate([seg.data for seg in segments], axis=0)
    return Standardizer(stacked.mean(axis=0), np.maximum(stacked.std(axis=0), STD_FLOOR))


def preprocess_track(track: PersonTrack, variant: Variant, cfg: PreprocessConfig) -> list[Segment]:
    """Features -> per-column cleaning -> sliding windows, for one track."""
    feats = assemble_features(track, variant)
    cleaned = np.column_stack([clean_series(feats[:, f], cfg) for f in range(feats.shape[1])])
    return segment(
        cleaned,
        cfg,
        video_id=track.video_id,
        person_id=track.person_id,
        track_start=track.start_frame,
    )


def tracks_to_segments(
    tracks: Iterable[PersonTrack], variant: Variant, cfg: PreprocessConfig
) -> list[Segment]:
    out: list[Segment] = []
    for track in tracks:
        out.extend(preprocess_track(track, variant, cfg))
    return out


def segments_to_matrix(segments: Sequence[Segment], standardizer: Standardizer | None) -> np.ndarray:
    """Flattened (standardized) segment vectors as an (N, L*F) matrix."""
    if not segments:
        return np.zeros((0, 0))
    rows = []
    for seg in segments:
        data = standardizer.apply(seg.data) if standardizer is not None else seg.data
        rows.append(np.asarray(data).reshape(-1))
    return np.stack(rows, axis=0)
