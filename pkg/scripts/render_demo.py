#!/usr/bin/env python3
"""Render a demo score curve: one anomalous synthetic track end to end.

Trains a small model on normal walks, scores a single track with a labeled
anomaly in the middle, and writes an SVG of the per-frame normality score
with the anomalous interval shaded.
"""

import argparse
from pathlib import Path

from kinflow.kinematics import parse_variant
from kinflow.preprocess import PreprocessConfig, fit_standardizer, preprocess_track, tracks_to_segments
from kinflow.scoring import frame_scores, render_score_svg, score_segments
from kinflow.synth import AnomalySpec, GaitParams, generate_anomaly, generate_walk
from kinflow.training import TrainConfig, train


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="demo_score.svg")
    p.add_argument("--kind", default="skateboard", choices=["skateboard", "run", "fall"])
    p.add_argument("--variant", default="HKVAD3")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    variant = parse_variant(args.variant)
    pre = PreprocessConfig()
    walks = [
        generate_walk(GaitParams(speed=1.5 + 0.02 * i, period=18 + i % 6, jitter=0.1),
                      100, seed=i, video_id=f"train_{i}")
        for i in range(80)
    ]
    segments = tracks_to_segments(walks, variant, pre)
    standardizer = fit_standardizer(segments)
    model, _ = train(segments, TrainConfig(seed=args.seed),
                     standardizer=standardizer, variant=variant, preprocess=pre)

    spec = AnomalySpec(args.kind, onset=35, duration=35)
    track, labels = generate_anomaly(GaitParams(jitter=0.1), spec, 100,
                                     seed=args.seed + 1, video_id="demo")
    seg_scores = score_segments(model, preprocess_track(track, variant, pre))
    scored = frame_scores(seg_scores, "demo", 100)
    render_score_svg(scored, args.out, labels.labels)
    print(f"wrote {Path(args.out).resolve()} ({args.kind}, {variant.value})")


if __name__ == "__main__":
    main()
