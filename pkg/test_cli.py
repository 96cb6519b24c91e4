import numpy as np
import pytest

from aet_encoding.tensor_io import load_tensor
from cli import main
from data_generation.create_dataset import read_manifest
from nn_micro.checkpoint import load_args, load_checkpoint

ENCODER = ["--mhat", "8", "--groups", "2", "--channels", "1,2", "--kernel", "3"]
NETWORK = ["--feature_dim", "4", "--widths", "4,4", "--k1", "2", "--k2", "2"]


def gen_args(out, *extra):
    return ["gen", "--task", "direction", "--per_class", "5", "--width", "16", "--height", "16", "--no_progress",
            "--out", str(out)] + list(extra)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(gen_args(root / "data")) == 0
    manifest = root / "data" / "manifest.txt"
    checkpoint = root / "model" / "efn.efnw"
    assert main(["train", "--manifest", str(manifest), "--epochs", "1", "--batch_size", "4", "--checkpoint",
                 str(checkpoint), "--no_progress"] + ENCODER + NETWORK) == 0
    return manifest, checkpoint


def test_gen_writes_manifest(trained):
    manifest, _ = trained
    entries = read_manifest(manifest)
    assert len(entries) == 10
    assert [split for _, _, split in entries].count("train") == 6
    assert {label for _, label, _ in entries} == {0, 1}
    assert all(path.exists() for path, _, _ in entries)


def test_gen_is_deterministic(tmp_path):
    assert main(gen_args(tmp_path / "a", "--seed", "4")) == 0
    assert main(gen_args(tmp_path / "b", "--seed", "4")) == 0
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_invalid_usage_returns_2(tmp_path):
    assert main(["gen", "--task", "sorting", "--out", str(tmp_path)]) == 2
    assert main(["gen", "--per_class", "2", "--out", str(tmp_path)]) == 2
    assert main(["train", "--manifest", "m.txt", "--mhat", "10", "--groups", "3", "--channels", "1,2"]) == 2


def test_config_file_prefills_flags(tmp_path):
    config = tmp_path / "gen.cfg"
    config.write_text("# small static shapes run\ntask=static-shapes\nper_class=5\nwidth=16\nheight=16\n")
    assert main(["gen", "--config", str(config), "--task", "direction", "--out", str(tmp_path / "d"),
                 "--no_progress"]) == 0
    entries = read_manifest(tmp_path / "d" / "manifest.txt")
    assert len(entries) == 10
    assert {label for _, label, _ in entries} == {0, 1}
    config.write_text("colour=blue\n")
    assert main(["gen", "--config", str(config), "--out", str(tmp_path / "e")]) == 2


def test_train_writes_checkpoint_and_settings(trained):
    _, checkpoint = trained
    state = load_checkpoint(checkpoint)
    assert "encoder.stages.0.weight" in state
    assert state["synthesis.acc"].shape == (5, 2)
    settings = load_args(checkpoint)
    assert settings["groups"] == "2" and settings["widths"] == "4,4" and settings["num_classes"] == "2"


def test_eval_modes(trained, tmp_path, capsys):
    manifest, checkpoint = trained
    for mode in ("synthesis", "average", "frame-only", "video-only"):
        summary = tmp_path / ("%s.txt" % mode)
        report = tmp_path / ("%s_report.txt" % mode)
        assert main(["eval", "--manifest", str(manifest), "--checkpoint", str(checkpoint), "--mode", mode,
                     "--summary", str(summary), "--report", str(report), "--no_progress"]) == 0
        lines = summary.read_text().splitlines()
        assert lines[0] == "mode=%s" % mode
        accuracy = float(lines[1].split("=")[1])
        assert 0.0 <= accuracy <= 1.0
        assert "confusion matrix" in report.read_text()
    assert "accuracy:" in capsys.readouterr().out


def test_eval_missing_checkpoint(trained, tmp_path):
    manifest, _ = trained
    assert main(["eval", "--manifest", str(manifest), "--checkpoint", str(tmp_path / "none.efnw")]) == 1


def test_encode_and_viz(trained, tmp_path):
    manifest, _ = trained
    out = tmp_path / "quantized"
    assert main(["encode", "--input", str(manifest), "--mode", "quantize-only", "--out", str(out),
                 "--no_progress"] + ENCODER) == 0
    tensors = sorted(out.glob("*.aetf"))
    assert len(tensors) == 10
    assert load_tensor(tensors[0]).shape == (1, 4, 16, 16)

    out = tmp_path / "aet"
    assert main(["encode", "--input", str(manifest), "--out", str(out), "--no_progress"] + ENCODER) == 0
    tensor = sorted(out.glob("*.aetf"))[0]
    values = load_tensor(tensor)
    assert values.shape == (2, 4, 16, 16)
    frames = tmp_path / "frames"
    assert main(["viz", "--input", str(tensor), "--out", str(frames)]) == 0
    assert len(list(frames.glob("*.ppm"))) == 4


def test_encode_single_file_with_windows(trained, tmp_path):
    manifest, _ = trained
    path = read_manifest(manifest)[0][0]
    out = tmp_path / "windows"
    assert main(["encode", "--input", str(path), "--slice", "--window_us", "50000", "--step_us", "25000",
                 "--out", str(out), "--no_progress"] + ENCODER) == 0
    names = sorted(p.name for p in out.glob("*.aetf"))
    assert names and all("_w" in name for name in names)


def test_bench_smoke(trained, tmp_path, capsys):
    _, checkpoint = trained
    summary = tmp_path / "bench.txt"
    assert main(["bench", "--num_samples", "10", "--num_events", "200", "--width", "16", "--height", "16",
                 "--warmup", "1", "--summary", str(summary), "--no_progress"] + ENCODER) == 0
    values = dict(line.split("=", 1) for line in summary.read_text().splitlines())
    assert int(values["encode-only.num_samples"]) == 10
    assert int(values["encode-only.total_events"]) == 2000
    assert float(values["encode-only.doubling_factor"]) > 0
    assert "doubling_factor" in capsys.readouterr().out

    summary = tmp_path / "bench_full.txt"
    assert main(["bench", "--stage", "both", "--checkpoint", str(checkpoint), "--num_samples", "10",
                 "--num_events", "200", "--width", "16", "--height", "16", "--warmup", "1", "--scaling",
                 "--scaling_counts", "100,1000", "--repeats", "2", "--summary", str(summary), "--no_progress"]) == 0
    values = dict(line.split("=", 1) for line in summary.read_text().splitlines())
    assert "full.median_ms" in values and "scaling.1000.ratio" in values
    assert np.isfinite(float(values["full.throughput_kev_s"]))
    assert "reference (GPU)" in capsys.readouterr().out
    assert main(["bench", "--stage", "full"]) == 2


def test_log_folder(tmp_path):
    logs = tmp_path / "logs"
    assert main(gen_args(tmp_path / "data", "--path_log", str(logs))) == 0
    runs = list(logs.iterdir())
    assert len(runs) == 1 and runs[0].name.endswith("_gen")
    assert "classes: right, left" in (runs[0] / "logfile.txt").read_text()
