"""Command-line pipeline: gen, extract, train, score, eval.

Settings resolve as CLI flags > config file > built-in defaults, and every
run writes the resolved settings to an ``effective_config.json`` that can be
fed back via ``--config`` to reproduce the run.  Config files are flat
``section.key = value`` text (or JSON with the same nesting); known keys::

    variant               = "HKVAD2"   # HKVAD1 | HKVAD2 | HKVAD3
    seed                  = 0
    preprocess.w          = 2          # smoothing half-width
    preprocess.L          = 24         # segment length
    preprocess.stride     = 1          # segment stride
    preprocess.sigma_k    = 3.0        # outlier threshold in std units
    preprocess.standardize = true
    train.batch_size      = 256
    train.learning_rate   = 5e-4
    train.epochs          = 8
    train.blocks          = 3          # flow blocks
    train.hidden          = 16         # hidden units per block (0 = direct)
    train.optimizer       = "adamax"   # or "adam"

Exit codes: 0 success, 1 invalid input or flags, 2 numeric/runtime failure.
``KINFLOW_THREADS`` caps scoring parallelism (1 forces serial mode).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NumericError, ValidationError
from .kinematics import FEATURE_ORDER, Variant, feature_series, parse_variant, scale_to_unit
from .metrics import evaluate, roc_points
from .preprocess import (
    PreprocessConfig,
    clean_series,
    fit_standardizer,
    tracks_to_segments,
)
from .flow_model import FlowModel
from .scoring import ScoredVideo, frame_scores, group_by_video, render_score_svg, score_segments
from .skeleton_data import load_labels, load_manifest, load_tracks
from .synth import ANOMALY_KINDS, generate_dataset
from .training import TrainConfig, save_loss_history, train


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage with exit code 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _threads() -> int:
    raw = os.environ.get("KINFLOW_THREADS", "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValidationError(f"KINFLOW_THREADS={raw!r} is not an integer") from None
        if value < 1:
            raise ValidationError(f"KINFLOW_THREADS must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# config resolution


def _parse_flat_config(text: str, path) -> dict:
    """Parse ``section.key = value`` lines; values use JSON literals."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}: line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ValidationError(f"{path}: line {lineno}: empty key")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value.strip("\"'")
    return out


def _flatten(prefix: str, obj, into: dict) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, into)
    else:
        into[prefix] = obj


def _load_config(path) -> dict:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".json":
        flat: dict = {}
        _flatten("", json.loads(text), flat)
        return flat
    return _parse_flat_config(text, p)


@dataclass
class Settings:
    variant: Variant = Variant.HKVAD2
    seed: int = 0
    preprocess: PreprocessConfig = PreprocessConfig()
    train: TrainConfig = TrainConfig()
    frame_size: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "seed": self.seed,
            "frame_size": list(self.frame_size) if self.frame_size else None,
            "preprocess": self.preprocess.to_dict(),
            "train": self.train.to_dict(),
        }


_CONFIG_KEYS = {
    "variant",
    "seed",
    "frame_size",
    "preprocess.w",
    "preprocess.L",
    "preprocess.stride",
    "preprocess.sigma_k",
    "preprocess.standardize",
    "train.batch_size",
    "train.learning_rate",
    "train.epochs",
    "train.seed",
    "train.blocks",
    "train.hidden",
    "train.optimizer",
}


def _resolve_settings(args) -> Settings:
    cfg: dict = {}
    if getattr(args, "config", None):
        cfg = _load_config(args.config)
        unknown = [k for k in cfg if k in _CONFIG_KEYS]
        # Unknown keys (e.g. the metadata in a reused effective_config.json)
        # are ignored; only recognized ones participate.
        cfg = {k: cfg[k] for k in unknown}

    def pick(flag_value, key: str, default):
        if flag_value is not None:
            return flag_value
        if key in cfg:
            return cfg[key]
        return default

    seed = int(pick(getattr(args, "seed", None), "seed", 0))
    variant = pick(getattr(args, "variant", None), "variant", "HKVAD2")
    if not isinstance(variant, Variant):
        variant = parse_variant(str(variant))
    pre = PreprocessConfig(
        w=int(pick(getattr(args, "w", None), "preprocess.w", 2)),
        L=int(pick(getattr(args, "L", None), "preprocess.L", 24)),
        stride=int(pick(getattr(args, "stride", None), "preprocess.stride", 1)),
        sigma_k=float(pick(getattr(args, "sigma_k", None), "preprocess.sigma_k", 3.0)),
        standardize=bool(
            pick(getattr(args, "standardize", None), "preprocess.standardize", True)
        ),
    )
    tr = TrainConfig(
        batch_size=int(pick(getattr(args, "batch_size", None), "train.batch_size", 256)),
        learning_rate=float(
            pick(getattr(args, "learning_rate", None), "train.learning_rate", 5e-4)
        ),
        epochs=int(pick(getattr(args, "epochs", None), "train.epochs", 8)),
        seed=seed,
        n_blocks=int(pick(getattr(args, "blocks", None), "train.blocks", 3)),
        hidden=int(pick(getattr(args, "hidden", None), "train.hidden", 16)),
        optimizer=str(pick(getattr(args, "optimizer", None), "train.optimizer", "adamax")),
    )
    frame_size = getattr(args, "frame_size", None)
    if frame_size is None and "frame_size" in cfg and cfg["frame_size"]:
        frame_size = cfg["frame_size"]
    if frame_size is not None:
        frame_size = (float(frame_size[0]), float(frame_size[1]))
    return Settings(variant=variant, seed=seed, preprocess=pre, train=tr, frame_size=frame_size)


def _write_effective_config(path: Path, command: str, settings: Settings, io: dict) -> None:
    payload = {
        "command": command,
        "version": __version__,
        "threads": _threads(),
        "io": io,
        **settings.to_dict(),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def _load_manifest_tracks(manifest_path, frame_size):
    manifest = load_manifest(manifest_path)
    tracks = manifest.load_all_tracks()
    if frame_size is not None:
        tracks = [scale_to_unit(t, frame_size[0], frame_size[1]) for t in tracks]
    return manifest, tracks


def cmd_gen(args) -> int:
    settings = _resolve_settings(args)
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    out = Path(args.out)
    manifest = generate_dataset(
        args.normal,
        args.anomalous,
        out,
        kinds=kinds,
        seed=settings.seed,
        n_frames=args.frames,
        name=args.name,
    )
    _write_effective_config(
        out / "effective_config.json",
        "gen",
        settings,
        {
            "out": str(out),
            "normal": args.normal,
            "anomalous": args.anomalous,
            "kinds": list(kinds),
            "frames": args.frames,
            "name": args.name,
        },
    )
    print(json.dumps({"manifest": str(out / "manifest.json"), "videos": len(manifest.frame_counts)}))
    return 0


def _extract_rows(track, kinds, cfg, apply_cleaning):
    columns = {}
    for kind in kinds:
        values = feature_series(track, kind).values
        columns[kind] = clean_series(values, cfg) if apply_cleaning else values
    return columns


def cmd_extract(args) -> int:
    settings = _resolve_settings(args)
    if args.tracks:
        tracks = load_tracks(args.tracks)
        if settings.frame_size is not None:
            tracks = [scale_to_unit(t, *settings.frame_size) for t in tracks]
    else:
        _, tracks = _load_manifest_tracks(args.manifest, settings.frame_size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for track in tracks:
        if args.variant is not None:
            kinds = settings.variant.features
        else:
            kinds = tuple(
                k
                for k in FEATURE_ORDER
                if k.value != "neck_displacement" or "neck" in track.joint_map
            )
        columns = _extract_rows(track, kinds, settings.preprocess, args.preprocessed)
        name = f"{track.video_id}__{track.person_id}__{track.start_frame}.csv"
        with open(out / name, "w", encoding="utf-8") as fh:
            fh.write("frame,stride,displacement,neck_displacement\n")
            for t in range(track.n_frames):
                cells = [str(track.start_frame + t)]
                for kind in FEATURE_ORDER:
                    cells.append(repr(float(columns[kind][t])) if kind in columns else "")
                fh.write(",".join(cells) + "\n")
        written.append(name)
    _write_effective_config(
        out / "effective_config.json",
        "extract",
        settings,
        {"out": str(out), "tracks": args.tracks, "manifest": args.manifest, "files": len(written)},
    )
    print(json.dumps({"out": str(out), "files": len(written)}))
    return 0


def cmd_train(args) -> int:
    settings = _resolve_settings(args)
    _, tracks = _load_manifest_tracks(args.manifest, settings.frame_size)
    segments = tracks_to_segments(tracks, settings.variant, settings.preprocess)
    if not segments:
        raise ValidationError(
            f"no training segments: every track is shorter than L={settings.preprocess.L}"
        )
    standardizer = fit_standardizer(segments) if settings.preprocess.standardize else None
    model, history = train(
        segments,
        settings.train,
        standardizer=standardizer,
        variant=settings.variant,
        preprocess=settings.preprocess,
        frame_size=settings.frame_size,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    loss_path = Path(args.loss_csv) if args.loss_csv else out.with_suffix(".loss.csv")
    save_loss_history(history, loss_path)
    _write_effective_config(
        out.parent / "effective_config.json",
        "train",
        settings,
        {"manifest": str(args.manifest), "model": str(out), "loss_csv": str(loss_path)},
    )
    print(
        json.dumps(
            {
                "model": str(out),
                "param_count": model.param_count(),
                "segments": len(segments),
                "initial_nll": history[0].mean_nll,
                "final_nll": history[-1].mean_nll,
                "train_seconds": round(sum(h.seconds for h in history), 3),
            }
        )
    )
    return 0


def _score_one_video(items):
    video_id, seg_scores, n_frames, fill, out_dir, svg_dir, label_map = items
    scored = frame_scores(seg_scores, video_id, n_frames, fill)
    with open(out_dir / f"{video_id}.csv", "w", encoding="utf-8") as fh:
        fh.write("frame,score,covered\n")
        for t in range(scored.n_frames):
            fh.write(f"{t},{float(scored.scores[t])!r},{int(scored.covered[t])}\n")
    if svg_dir is not None:
        labels = label_map.get(video_id)
        render_score_svg(scored, svg_dir / f"{video_id}.svg", labels)
    return video_id


def cmd_score(args) -> int:
    model = FlowModel.load(args.model)
    if model.preprocess is None or model.variant is None:
        raise ValidationError(f"{args.model}: model file lacks preprocessing metadata")
    if args.variant is not None:
        requested = parse_variant(args.variant)
        if requested.value != model.variant:
            raise ValidationError(
                f"model was trained for {model.variant}, refusing to score as {requested.value}"
            )
    variant = parse_variant(model.variant)
    manifest, tracks = _load_manifest_tracks(args.manifest, model.frame_size)
    segments = tracks_to_segments(tracks, variant, model.preprocess)
    seg_scores = score_segments(model, segments)
    grouped = group_by_video(seg_scores)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    svg_dir = None
    if args.svg:
        svg_dir = Path(args.svg)
        svg_dir.mkdir(parents=True, exist_ok=True)
    label_map = {}
    if svg_dir is not None and manifest.label_files:
        label_map = {vl.video_id: vl.labels for vl in manifest.load_all_labels()}

    jobs = [
        (vid, grouped.get(vid, []), n, args.fill, out, svg_dir, label_map)
        for vid, n in manifest.frame_counts.items()
    ]
    n_threads = _threads()
    if n_threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(_score_one_video, jobs))
    else:
        for job in jobs:
            _score_one_video(job)

    settings = _resolve_settings(args)
    settings.variant = variant
    settings.preprocess = model.preprocess
    _write_effective_config(
        out / "effective_config.json",
        "score",
        settings,
        {"model": str(args.model), "manifest": str(args.manifest), "out": str(out)},
    )
    print(json.dumps({"out": str(out), "videos": len(jobs), "segments": len(seg_scores)}))
    return 0


def _read_score_csv(path) -> ScoredVideo:
    scores, covered = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "frame,score,covered":
            raise ValidationError(f"{path}: expected header 'frame,score,covered'")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != 3:
                raise ValidationError(f"{path}: line {lineno}: expected 3 columns")
            scores.append(float(parts[1]))
            covered.append(parts[2] == "1")
    return ScoredVideo(Path(path).stem, np.array(scores), np.array(covered, dtype=bool))


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    labels = manifest.load_all_labels()
    if not labels:
        raise ValidationError(f"manifest {manifest.name} has no label files")
    scores_dir = Path(args.scores)
    scored = {}
    for vl in labels:
        csv_path = scores_dir / f"{vl.video_id}.csv"
        if not csv_path.exists():
            raise ValidationError(f"no score file for video '{vl.video_id}' in {scores_dir}")
        scored[vl.video_id] = _read_score_csv(csv_path)
    report = evaluate(scored, labels)
    text = json.dumps(report.to_dict(), indent=1)
    print(text)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n", encoding="utf-8")
    if args.roc:
        all_scores = np.concatenate([-scored[vl.video_id].scores for vl in labels])
        all_labels = np.concatenate([vl.labels for vl in labels])
        points = roc_points(all_scores, all_labels)
        with open(args.roc, "w", encoding="utf-8") as fh:
            fh.write("fpr,tpr,threshold\n")
            for fpr, tpr, thr in points:
                fh.write(f"{float(fpr)!r},{float(tpr)!r},{float(thr)!r}\n")
    settings = _resolve_settings(args)
    config_path = (
        Path(args.out).parent / "effective_config.json"
        if args.out
        else scores_dir / "effective_config.eval.json"
    )
    _write_effective_config(
        config_path,
        "eval",
        settings,
        {"manifest": str(args.manifest), "scores": str(scores_dir), "out": args.out, "roc": args.roc},
    )
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file (flat 'section.key = value' text or JSON)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")


def _add_preprocess_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", help="HKVAD1 | HKVAD2 | HKVAD3 (default HKVAD2)")
    p.add_argument("--L", type=int, dest="L", help="segment length (default 24)")
    p.add_argument("--w", type=int, dest="w", help="smoothing half-width (default 2)")
    p.add_argument("--stride", type=int, help="segment stride (default 1)")
    p.add_argument("--sigma-k", type=float, dest="sigma_k", help="outlier threshold (default 3)")
    p.add_argument(
        "--no-standardize",
        dest="standardize",
        action="store_const",
        const=False,
        default=None,
        help="disable per-channel standardization",
    )
    p.add_argument(
        "--frame-size",
        nargs=2,
        type=float,
        metavar=("W", "H"),
        help="divide coordinates by the frame size before feature extraction",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="kinflow",
        description="Gait-kinematics anomaly detection with a masked autoregressive flow.",
        epilog=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"kinflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "gen",
        help="generate a synthetic benchmark split",
        description="Generate synthetic walking tracks plus labeled anomalies.",
    )
    p.add_argument("--normal", type=int, required=True, help="number of normal tracks")
    p.add_argument("--anomalous", type=int, required=True, help="number of anomalous tracks")
    p.add_argument("--kinds", default=",".join(ANOMALY_KINDS), help="comma list of anomaly kinds")
    p.add_argument("--frames", type=int, default=100, help="frames per track (default 100)")
    p.add_argument("--name", default="synthetic", help="dataset/video name prefix")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser(
        "extract",
        help="dump kinematic feature series as CSV",
        description="Write per-track CSVs of the kinematic series for inspection.",
    )
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--tracks", help="JSON-Lines track file")
    src.add_argument("--manifest", help="dataset manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--preprocessed",
        action="store_true",
        help="apply outlier removal and smoothing before writing",
    )
    _add_preprocess_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser(
        "train",
        help="fit the flow on a manifest's tracks",
        description="Train the flow on all tracks of a manifest (normal data only).",
    )
    p.add_argument("--manifest", required=True, help="dataset manifest")
    p.add_argument("--out", required=True, help="output model file (JSON)")
    p.add_argument("--loss-csv", help="loss history CSV (default: <model>.loss.csv)")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--epochs", type=int)
    p.add_argument("--blocks", type=int, help="number of flow blocks (default 3)")
    p.add_argument("--hidden", type=int, help="hidden units per block (default 16)")
    p.add_argument("--optimizer", choices=["adamax", "adam"])
    _add_preprocess_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "score",
        help="score a manifest's videos with a trained model",
        description="Write per-video frame,score,covered CSVs.",
    )
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--manifest", required=True, help="dataset manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--variant", help="must match the model's variant if given")
    p.add_argument("--fill", type=float, help="constant score for uncovered frames")
    p.add_argument("--svg", help="also render score curves into this directory")
    _add_common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser(
        "eval",
        help="micro-AUC of scored videos against labels",
        description="Evaluate frame-level micro-AUC; report goes to stdout as JSON.",
    )
    p.add_argument("--manifest", required=True, help="manifest with label files")
    p.add_argument("--scores", required=True, help="directory produced by 'score'")
    p.add_argument("--out", help="also write the report JSON here")
    p.add_argument("--roc", help="write ROC curve points CSV here")
    _add_common(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
