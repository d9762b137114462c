"""CLI subcommands: full workflow plus usage and error paths."""
import csv
import json

import pytest

from pvelseg import cli
from pvelseg.annotate import validate_voc
from pvelseg.config import PipelineConfig, parse_config


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0


def test_init_config_stdout_roundtrips(capsys):
    assert cli.main(["init-config"]) == 0
    text = capsys.readouterr().out
    assert parse_config(text) == PipelineConfig()


def test_init_config_writes_file(tmp_path, capsys):
    out = tmp_path / "run.cfg"
    assert cli.main(["init-config", "--preset", "desk", "--out", str(out)]) == 0
    cfg = parse_config(out.read_text())
    assert cfg.model_scale == "desk"
    assert cfg.ssim_disparity_window == 3


def test_missing_config_file_is_a_usage_error(tmp_path):
    code = cli.main(["synth", "--config", str(tmp_path / "absent.cfg"),
                     "--out", str(tmp_path / "data")])
    assert code == 2


def test_full_workflow(tmp_path, capsys):
    data = tmp_path / "data"
    run = tmp_path / "run"
    cfg_path = tmp_path / "fast.cfg"
    cfg_path.write_text("train.max_epochs = 2\ntrain.validate_every = 1\n")

    assert cli.main(["synth", "--preset", "desk", "--out", str(data),
                     "--count", "10", "--defect-rate", "0.4", "--seed", "3"]) == 0
    assert (data / "manifest.json").is_file()
    assert len(list((data / "images").glob("*.png"))) == 10
    assert len(list((data / "masks").glob("*.png"))) == 10
    out = capsys.readouterr().out
    assert "wrote 10 cells" in out

    assert cli.main(["train", "--preset", "desk", "--config", str(cfg_path),
                     "--data", str(data), "--out", str(run), "--seed", "3"]) == 0
    capsys.readouterr()
    assert (run / "model.bin").is_file()
    report = json.loads((run / "train_report.json").read_text())
    assert report["epochs_run"] == 2
    with open(run / "losses.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["epoch"] for r in rows] == ["1", "2"]
    assert (run / "loss_curve.png").stat().st_size > 0

    store = tmp_path / "store"
    figures = tmp_path / "figures"
    assert cli.main(["infer", "--preset", "desk", "--model", str(run / "model.bin"),
                     "--data", str(data), "--store", str(store),
                     "--figures", str(figures)]) == 0
    out = capsys.readouterr().out
    assert "annotated 10/10" in out
    assert (store / "records").is_dir()
    assert len(list((store / "records").glob("*.json"))) == 10
    assert len(list(figures.glob("*_disparity.png"))) == 10
    assert len(list(figures.glob("*_overlay.png"))) == 10

    metrics_dir = tmp_path / "metrics"
    assert cli.main(["evaluate", "--preset", "desk", "--store", str(store),
                     "--truth", str(data), "--out", str(metrics_dir)]) == 0
    capsys.readouterr()
    metrics = json.loads((metrics_dir / "metrics.json").read_text())
    assert metrics["n_images"] == 10
    assert "cost_seconds_per_image" in metrics
    with open(metrics_dir / "per_image.csv", newline="") as fh:
        per_image = list(csv.DictReader(fh))
    assert len(per_image) == 10
    assert {"image_id", "defective", "iou", "n_polygons", "detected"} <= \
        set(per_image[0])
    assert (metrics_dir / "iou_histogram.png").stat().st_size > 0

    coco_path = tmp_path / "out" / "annotations.json"
    assert cli.main(["export", "--store", str(store), "--format", "coco",
                     "--out", str(coco_path), "--status", "all"]) == 0
    capsys.readouterr()
    doc = json.loads(coco_path.read_text())
    assert len(doc["images"]) == 10

    voc_dir = tmp_path / "voc"
    assert cli.main(["export", "--store", str(store), "--format", "voc",
                     "--out", str(voc_dir), "--status", "all"]) == 0
    capsys.readouterr()
    xml_files = sorted(voc_dir.glob("*.xml"))
    assert len(xml_files) == 10
    for path in xml_files:
        assert validate_voc(path.read_text()) == []


def test_infer_with_no_images_fails(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    code = cli.main(["infer", "--preset", "desk", "--model", "missing.bin",
                     "--data", str(empty), "--store", str(tmp_path / "s")])
    assert code == 1


def test_train_needs_defect_free_images(tmp_path, capsys):
    data = tmp_path / "data"
    assert cli.main(["synth", "--preset", "desk", "--out", str(data),
                     "--count", "3", "--defect-rate", "1.0"]) == 0
    capsys.readouterr()
    code = cli.main(["train", "--preset", "desk", "--data", str(data),
                     "--out", str(tmp_path / "run")])
    assert code == 1
    assert "defect-free" in capsys.readouterr().err
