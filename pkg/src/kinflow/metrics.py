"""Frame-level micro-AUC over the concatenated test videos.

The AUC is the rank statistic with average ranks for ties:

    AUC = (sum of positive ranks - P*(P+1)/2) / (P*N)

which equals the probability a random positive outscores a random negative,
counting ties as half.  Ties are handled deterministically, and the result
is invariant under any strictly increasing transform of the scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .scoring import ScoredVideo
from .skeleton_data import VideoLabels


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    new_group = np.concatenate(([True], sv[1:] != sv[:-1]))
    group = np.cumsum(new_group) - 1
    counts = np.bincount(group)
    first_rank = np.concatenate(([0], np.cumsum(counts)[:-1])) + 1
    avg = first_rank + (counts - 1) / 2.0
    ranks = np.empty_like(v)
    ranks[order] = avg[group]
    return ranks


def micro_auc(scores, labels) -> float:
    """ROC AUC of anomaly scores (higher = more anomalous) vs binary labels."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValidationError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    pos = y == 1
    p = int(pos.sum())
    n = s.size - p
    if p == 0 or n == 0:
        raise ValidationError("undefined AUC: only one class present")
    ranks = average_ranks(s)
    return float((ranks[pos].sum() - p * (p + 1) / 2.0) / (p * n))


def roc_points(scores, labels) -> np.ndarray:
    """(fpr, tpr, threshold) rows, one per distinct score, descending."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos = y == 1
    p = int(pos.sum())
    n = s.size - p
    if p == 0 or n == 0:
        raise ValidationError("undefined ROC: only one class present")
    order = np.argsort(-s, kind="mergesort")
    sorted_s = s[order]
    sorted_pos = pos[order].astype(np.float64)
    tp = np.cumsum(sorted_pos)
    fp = np.cumsum(1.0 - sorted_pos)
    last_of_run = np.concatenate((sorted_s[1:] != sorted_s[:-1], [True]))
    idx = np.flatnonzero(last_of_run)
    rows = np.column_stack((fp[idx] / n, tp[idx] / p, sorted_s[idx]))
    return np.vstack(([0.0, 0.0, np.inf], rows))


@dataclass(frozen=True)
class EvalReport:
    micro_auc: float
    n_frames: int
    n_positive: int
    n_negative: int
    per_video_auc: dict[str, float | None]

    def to_dict(self) -> dict:
        return {
            "micro_auc": self.micro_auc,
            "n_frames": self.n_frames,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "per_video_auc": self.per_video_auc,
        }


def evaluate(scored: Mapping[str, ScoredVideo], labels: Sequence[VideoLabels]) -> EvalReport:
    """Micro-AUC over all labeled frames; normality scores are negated.

    Videos are concatenated in label order (the rank statistic makes the
    result order-invariant); per-video AUCs are reported as a diagnostic
    where both classes occur.
    """
    if not labels:
        raise ValidationError("no labeled videos to evaluate")
    all_scores, all_labels = [], []
    per_video: dict[str, float | None] = {}
    for vl in labels:
        sv = scored.get(vl.video_id)
        if sv is None:
            raise ValidationError(f"no scores for labeled video '{vl.video_id}'")
        if sv.n_frames != vl.n_frames:
            raise ValidationError(
                f"video '{vl.video_id}': {sv.n_frames} scored frames but "
                f"{vl.n_frames} labels"
            )
        anomaly = -sv.scores
        all_scores.append(anomaly)
        all_labels.append(vl.labels)
        if 0 < int(vl.labels.sum()) < vl.n_frames:
            per_video[vl.video_id] = micro_auc(anomaly, vl.labels)
        else:
            per_video[vl.video_id] = None
    scores = np.concatenate(all_scores)
    y = np.concatenate(all_labels)
    p = int((y == 1).sum())
    return EvalReport(
        micro_auc=micro_auc(scores, y),
        n_frames=int(y.size),
        n_positive=p,
        n_negative=int(y.size - p),
        per_video_auc=per_video,
    )
