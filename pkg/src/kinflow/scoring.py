"""Per-frame normality scores from per-segment log-densities.

A frame's score is the minimum log-density over every scored window that
covers it, across all persons, so one anomalous individual is enough to
pull the frame down.  Frames no window covers default to the most normal
score seen in that video (an empty scene is treated as maximally normal);
a constant fill can be requested instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NumericError, ValidationError
from .flow_model import FlowModel
from .preprocess import Segment, segments_to_matrix


@dataclass(frozen=True)
class SegmentScore:
    """Log-density of one window plus enough provenance to place it."""

    video_id: str
    person_id: str
    start_frame: int
    length: int
    log_prob: float


@dataclass(frozen=True)
class ScoredVideo:
    """Per-frame normality scores (higher = more normal) for one video."""

    video_id: str
    scores: np.ndarray
    covered: np.ndarray

    def __post_init__(self) -> None:
        s = np.array(self.scores, dtype=np.float64)
        c = np.array(self.covered, dtype=bool)
        if s.shape != c.shape or s.ndim != 1:
            raise ValidationError(f"scored video {self.video_id}: shape mismatch")
        s.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "covered", c)

    @property
    def n_frames(self) -> int:
        return self.scores.size


def score_segments(model: FlowModel, segments: Sequence[Segment]) -> list[SegmentScore]:
    """Log-density per segment, standardized with the model's statistics."""
    if not segments:
        return []
    data = segments_to_matrix(segments, model.standardizer)
    log_probs = model.log_prob_batch(data)
    out = []
    for seg, lp in zip(segments, log_probs):
        if not np.isfinite(lp):
            raise NumericError(
                f"non-finite score for segment {seg.video_id}/{seg.person_id}"
                f"@{seg.start_frame}"
            )
        out.append(SegmentScore(seg.video_id, seg.person_id, seg.start_frame, seg.length, float(lp)))
    return out


def frame_scores(
    scores: Iterable[SegmentScore],
    video_id: str,
    n_frames: int,
    fill: float | None = None,
) -> ScoredVideo:
    """Fold segment scores into per-frame minima over covering windows."""
    if n_frames < 1:
        raise ValidationError(f"video {video_id}: n_frames must be >= 1")
    frame = np.full(n_frames, np.inf)
    covered = np.zeros(n_frames, dtype=bool)
    for seg in scores:
        if seg.start_frame < 0 or seg.start_frame + seg.length > n_frames:
            raise ValidationError(
                f"segment {seg.video_id}/{seg.person_id}@{seg.start_frame} covers frames "
                f"outside [0, {n_frames})"
            )
        window = slice(seg.start_frame, seg.start_frame + seg.length)
        np.minimum(frame[window], seg.log_prob, out=frame[window])
        covered[window] = True
    if fill is None:
        fill = float(frame[covered].max()) if covered.any() else 0.0
    frame[~covered] = fill
    return ScoredVideo(video_id, frame, covered)


def group_by_video(scores: Iterable[SegmentScore]) -> dict[str, list[SegmentScore]]:
    grouped: dict[str, list[SegmentScore]] = {}
    for s in scores:
        grouped.setdefault(s.video_id, []).append(s)
    return grouped


def render_score_svg(
    scored: ScoredVideo,
    path,
    labels: np.ndarray | None = None,
    width: int = 720,
    height: int = 200,
) -> None:
    """Write a self-contained SVG: score polyline with label shading."""
    n = scored.n_frames
    margin = 10
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    lo = float(scored.scores.min())
    hi = float(scored.scores.max())
    span = (hi - lo) or 1.0

    def px(t: int) -> float:
        return margin + plot_w * (t / max(1, n - 1))

    def py(v: float) -> float:
        return margin + plot_h * (1.0 - (v - lo) / span)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if labels is not None:
        labels = np.asarray(labels)
        if labels.size != n:
            raise ValidationError(
                f"svg for {scored.video_id}: {labels.size} labels for {n} frames"
            )
        t = 0
        while t < n:
            if labels[t] == 1:
                t1 = t
                while t1 < n and labels[t1] == 1:
                    t1 += 1
                x0, x1 = px(t), px(t1 - 1)
                parts.append(
                    f'<rect x="{x0:.2f}" y="{margin}" width="{max(x1 - x0, 1.0):.2f}" '
                    f'height="{plot_h}" fill="#f4c7c3"/>'
                )
                t = t1
            else:
                t += 1
    points = " ".join(f"{px(t):.2f},{py(float(v)):.2f}" for t, v in enumerate(scored.scores))
    parts.append(f'<polyline points="{points}" fill="none" stroke="#2b6cb0" stroke-width="1.5"/>')
    parts.append(f'<text x="{margin}" y="{height - 2}" font-size="10">{scored.video_id}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
