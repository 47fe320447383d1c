import json

import numpy as np
import pytest

from kinflow.cli import main
from kinflow.flow_model import FlowModel


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def small_benchmark(tmp_path_factory):
    """gen + train once for the CLI tests that need artifacts."""
    root = tmp_path_factory.mktemp("bench")
    assert main(["gen", "--normal", "12", "--anomalous", "0", "--seed", "0",
                 "--out", str(root / "train"), "--frames", "60"]) == 0
    assert main(["gen", "--normal", "4", "--anomalous", "4", "--seed", "1",
                 "--out", str(root / "test"), "--frames", "60"]) == 0
    assert main(["train", "--manifest", str(root / "train" / "manifest.json"),
                 "--variant", "HKVAD2", "--seed", "0", "--epochs", "2",
                 "--out", str(root / "model.json")]) == 0
    return root


@pytest.mark.parametrize("cmd", [[], ["gen"], ["extract"], ["train"], ["score"], ["eval"]])
def test_help_exits_zero(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main(cmd + ["--help"])
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out.lower()


def test_missing_required_flag_exits_one(capsys):
    code, _, err = run(capsys, "train")
    assert code == 1
    assert "usage" in err.lower()


def test_unknown_flag_exits_one(capsys):
    code, _, err = run(capsys, "gen", "--normal", "1", "--anomalous", "0",
                       "--out", "x", "--bogus")
    assert code == 1
    assert "usage" in err.lower()


def test_missing_file_exits_one(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--manifest", str(tmp_path / "nope.json"),
                       "--out", str(tmp_path / "m.json"))
    assert code == 1
    assert "error" in err.lower()


def test_gen_writes_dataset_and_effective_config(tmp_path, capsys):
    code, out, _ = run(capsys, "gen", "--normal", "3", "--anomalous", "2",
                       "--seed", "5", "--out", str(tmp_path / "d"))
    assert code == 0
    info = json.loads(out)
    assert info["videos"] == 5
    cfg = json.loads((tmp_path / "d" / "effective_config.json").read_text())
    assert cfg["command"] == "gen" and cfg["seed"] == 5
    assert (tmp_path / "d" / "tracks.jsonl").exists()
    assert (tmp_path / "d" / "labels.csv").exists()


def test_full_pipeline_end_to_end(small_benchmark, tmp_path, capsys):
    root = small_benchmark
    scores_dir = tmp_path / "scores"
    code, out, _ = run(capsys, "score", "--model", str(root / "model.json"),
                       "--manifest", str(root / "test" / "manifest.json"),
                       "--out", str(scores_dir))
    assert code == 0
    assert (scores_dir / "effective_config.json").exists()
    csvs = sorted(scores_dir.glob("synthetic_*.csv"))
    assert len(csvs) == 8
    header = csvs[0].read_text().splitlines()[0]
    assert header == "frame,score,covered"

    code, out, _ = run(capsys, "eval",
                       "--manifest", str(root / "test" / "manifest.json"),
                       "--scores", str(scores_dir),
                       "--roc", str(tmp_path / "roc.csv"))
    assert code == 0
    report = json.loads(out)
    assert set(report) >= {"micro_auc", "n_frames", "n_positive", "n_negative"}
    assert 0.0 <= report["micro_auc"] <= 1.0
    assert report["n_frames"] == 8 * 60
    roc_lines = (tmp_path / "roc.csv").read_text().splitlines()
    assert roc_lines[0] == "fpr,tpr,threshold"
    assert (scores_dir / "effective_config.eval.json").exists()


def test_train_outputs(small_benchmark, capsys):
    root = small_benchmark
    assert (root / "model.json").exists()
    assert (root / "model.loss.csv").exists()
    lines = (root / "model.loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,mean_nll,seconds"
    assert len(lines) == 4  # header + epochs 0..2
    cfg = json.loads((root / "effective_config.json").read_text())
    assert cfg["command"] == "train" and cfg["variant"] == "HKVAD2"
    model = FlowModel.load(root / "model.json")
    assert model.variant == "HKVAD2"
    assert model.preprocess.L == 24


def test_score_refuses_variant_mismatch(small_benchmark, tmp_path, capsys):
    root = small_benchmark
    code, _, err = run(capsys, "score", "--model", str(root / "model.json"),
                       "--manifest", str(root / "test" / "manifest.json"),
                       "--out", str(tmp_path / "s"), "--variant", "HKVAD1")
    assert code == 1
    assert "HKVAD2" in err


def test_score_accepts_matching_variant(small_benchmark, tmp_path, capsys):
    root = small_benchmark
    code, _, _ = run(capsys, "score", "--model", str(root / "model.json"),
                     "--manifest", str(root / "test" / "manifest.json"),
                     "--out", str(tmp_path / "s"), "--variant", "2")
    assert code == 0


def test_extract_csv_shape(small_benchmark, tmp_path, capsys):
    root = small_benchmark
    code, out, _ = run(capsys, "extract", "--tracks", str(root / "test" / "tracks.jsonl"),
                       "--out", str(tmp_path / "feat"))
    assert code == 0
    files = sorted((tmp_path / "feat").glob("*.csv"))
    assert len(files) == 8
    lines = files[0].read_text().splitlines()
    assert lines[0] == "frame,stride,displacement,neck_displacement"
    assert len(lines) == 61
    first = lines[1].split(",")
    assert first[0] == "0" and len(first) == 4


def test_extract_variant_limits_columns(small_benchmark, tmp_path, capsys):
    root = small_benchmark
    code, _, _ = run(capsys, "extract", "--tracks", str(root / "test" / "tracks.jsonl"),
                     "--out", str(tmp_path / "feat1"), "--variant", "HKVAD1")
    assert code == 0
    line = sorted((tmp_path / "feat1").glob("*.csv"))[0].read_text().splitlines()[1]
    cells = line.split(",")
    assert cells[1] == "" and cells[2] != "" and cells[3] == ""


def test_config_file_flat_format(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# comment\n"
        'variant = "HKVAD1"\n'
        "seed = 9\n"
        "preprocess.L = 12\n"
        "train.epochs = 1\n"
    )
    code, _, _ = run(capsys, "gen", "--normal", "2", "--anomalous", "0",
                     "--config", str(cfg), "--out", str(tmp_path / "d"))
    assert code == 0
    eff = json.loads((tmp_path / "d" / "effective_config.json").read_text())
    assert eff["seed"] == 9
    assert eff["variant"] == "HKVAD1"
    assert eff["preprocess"]["L"] == 12
    assert eff["train"]["epochs"] == 1


def test_cli_flag_overrides_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed = 9\n")
    code, _, _ = run(capsys, "gen", "--normal", "1", "--anomalous", "0",
                     "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / "d"))
    assert code == 0
    eff = json.loads((tmp_path / "d" / "effective_config.json").read_text())
    assert eff["seed"] == 4


def test_effective_config_reusable_as_config(tmp_path, capsys):
    code, _, _ = run(capsys, "gen", "--normal", "2", "--anomalous", "1",
                     "--seed", "3", "--out", str(tmp_path / "a"))
    assert code == 0
    eff = tmp_path / "a" / "effective_config.json"
    code, _, _ = run(capsys, "gen", "--normal", "2", "--anomalous", "1",
                     "--config", str(eff), "--out", str(tmp_path / "b"))
    assert code == 0
    assert (tmp_path / "a" / "tracks.jsonl").read_bytes() == (tmp_path / "b" / "tracks.jsonl").read_bytes()


def test_serial_mode_byte_identical_runs(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("KINFLOW_THREADS", "1")
    outputs = []
    for run_dir in ("r1", "r2"):
        base = tmp_path / run_dir
        assert main(["gen", "--normal", "8", "--anomalous", "0", "--seed", "0",
                     "--out", str(base / "train"), "--frames", "40"]) == 0
        assert main(["gen", "--normal", "3", "--anomalous", "3", "--seed", "1",
                     "--out", str(base / "test"), "--frames", "40"]) == 0
        assert main(["train", "--manifest", str(base / "train" / "manifest.json"),
                     "--seed", "0", "--epochs", "2", "--L", "16",
                     "--out", str(base / "model.json")]) == 0
        assert main(["score", "--model", str(base / "model.json"),
                     "--manifest", str(base / "test" / "manifest.json"),
                     "--out", str(base / "scores")]) == 0
        capsys.readouterr()
        assert main(["eval", "--manifest", str(base / "test" / "manifest.json"),
                     "--scores", str(base / "scores"),
                     "--out", str(base / "report.json")]) == 0
        capsys.readouterr()
        outputs.append((
            (base / "model.json").read_bytes(),
            (base / "report.json").read_bytes(),
        ))
    assert outputs[0][0] == outputs[1][0]
    assert outputs[0][1] == outputs[1][1]


def test_threads_env_validation(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("KINFLOW_THREADS", "zero")
    code, _, err = run(capsys, "gen", "--normal", "1", "--anomalous", "0",
                       "--out", str(tmp_path / "d"))
    assert code == 1
    assert "KINFLOW_THREADS" in err


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "kinflow" in capsys.readouterr().out
