"""Command-line interface for the annotation pipeline.

Subcommands: init-config, synth, train, infer, evaluate, serve, export.
Exit codes: 0 success, 1 runtime failure (including partial batch failures),
2 configuration or usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .config import ConfigError, PipelineConfig, apply_env_overrides, load_config, preset, serialize_config

log = logging.getLogger(__name__)


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = preset(args.preset)
    if getattr(args, "config", None):
        cfg = load_config(args.config, base=cfg)
    cfg = apply_env_overrides(cfg)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", "-c", help="config file overriding the preset")
    parser.add_argument("--preset", choices=("desk", "full"), default="full",
                        help="base configuration preset (default: full)")
    parser.add_argument("--seed", type=int, default=None, help="override the run seed")


def cmd_init_config(args: argparse.Namespace) -> int:
    text = serialize_config(preset(args.preset))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    from .synth import CellSpec, generate_dataset, save_dataset

    cfg = _resolve_config(args)
    count = args.count if args.count is not None else cfg.synth_count
    rate = args.defect_rate if args.defect_rate is not None else cfg.synth_defect_rate
    spec = CellSpec(width=cfg.synth_width, height=cfg.synth_height,
                    busbar_count=cfg.synth_busbar_count,
                    busbar_width=cfg.synth_busbar_width,
                    background_level=cfg.synth_background_level,
                    texture_amplitude=cfg.synth_texture_amplitude,
                    corner_rounding=cfg.synth_corner_rounding)
    cells = generate_dataset(count, rate, spec, cfg.seed,
                             kinds=cfg.synth_defect_kinds,
                             inset=cfg.synth_defect_inset)
    manifest = save_dataset(cells, args.out)
    defective = sum(c.defective for c in cells)
    print(f"wrote {count} cells ({defective} defective) under {args.out}")
    print(f"manifest: {manifest}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    import numpy as np

    from . import report as report_mod
    from .autoenc import TrainConfig, build_model, save_model, train
    from .images import split_dataset
    from .synth import load_dataset

    cfg = _resolve_config(args)
    cells = load_dataset(args.data)
    clean = [c.image for c in cells if not c.defective]
    if len(clean) < 2:
        print(f"error: need at least 2 defect-free images, found {len(clean)}",
              file=sys.stderr)
        return 1
    split = split_dataset(clean, cfg.train_split_fraction, cfg.seed)
    model = build_model(scale=cfg.model_scale, seed=cfg.seed)
    expected = model.input_shape[:2]
    if clean[0].shape != expected:
        print(f"error: dataset images are {clean[0].shape}, model expects {expected}",
              file=sys.stderr)
        return 1
    tconf = TrainConfig(learning_rate=cfg.train_learning_rate,
                        batch_size=cfg.train_batch_size,
                        max_epochs=cfg.train_max_epochs,
                        validate_every=cfg.train_validate_every,
                        patience=cfg.train_patience,
                        seed=cfg.seed)
    print(f"training {cfg.model_scale} model on {len(split.train)} images "
          f"({len(split.validation)} validation)")
    report = train(model, split.train, split.validation, tconf)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    save_model(model, outdir / "model.bin", provenance={
        "dataset": str(args.data),
        "train_images": len(split.train),
        "best_epoch": report.best_epoch,
        "best_validation_loss": report.best_validation_loss,
    })
    (outdir / "train_report.json").write_text(
        json.dumps(asdict(report), indent=2), encoding="utf-8")
    report_mod.write_csv(
        [{"epoch": i + 1, "train_loss": loss}
         for i, loss in enumerate(report.train_losses)],
        outdir / "losses.csv")
    report_mod.write_loss_curve(report, outdir / "loss_curve.png")
    print(f"stopped after epoch {report.epochs_run} "
          f"(best validation loss {report.best_validation_loss:.6f} "
          f"at epoch {report.best_epoch})")
    print(f"model written to {outdir / 'model.bin'}")
    return 0


def _image_paths(data_dir: Path) -> list[Path]:
    manifest = data_dir / "manifest.json"
    if manifest.exists():
        entries = json.loads(manifest.read_text(encoding="utf-8"))["entries"]
        return [data_dir / e["image"] for e in entries]
    paths = sorted(p for p in data_dir.iterdir()
                   if p.suffix.lower() in (".png", ".pgm"))
    return paths


def cmd_infer(args: argparse.Namespace) -> int:
    from .autoenc import load_model
    from .pipeline import run_infer

    cfg = _resolve_config(args)
    model, _ = load_model(args.model)
    paths = _image_paths(Path(args.data))
    if not paths:
        print(f"error: no images under {args.data}", file=sys.stderr)
        return 1
    summary = run_infer(model, paths, args.store, cfg, workers=args.workers,
                        keep_results=bool(args.figures))
    if args.figures:
        from . import report as report_mod

        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        for res in summary.results:
            report_mod.write_disparity_figure(
                res.disparity, fig_dir / f"{res.record.image_id}_disparity.png")
            report_mod.write_overlay_figure(
                res.image, res.record.polygons,
                fig_dir / f"{res.record.image_id}_overlay.png")
    print(f"annotated {summary.processed}/{len(paths)} images into {args.store} "
          f"(mean inference {summary.t_inference_mean:.3f}s)")
    if summary.failed:
        print(f"failed: {', '.join(summary.failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    from . import report as report_mod
    from .annotate import CostModel
    from .pipeline import evaluate_records
    from .review.store import AnnotationStore
    from .synth import load_dataset

    cfg = _resolve_config(args)
    store = AnnotationStore(args.store)
    records = store.records()
    if not records:
        print(f"error: no records under {args.store}", file=sys.stderr)
        return 1
    truth_cells = load_dataset(args.truth)
    manifest = json.loads((Path(args.truth) / "manifest.json").read_text("utf-8"))
    truth_masks = {Path(e["image"]).stem: cell.mask
                   for e, cell in zip(manifest["entries"], truth_cells)}
    meta = store.manifest_meta()
    cost = None
    if meta.get("t_inference_mean") is not None:
        cost = CostModel(t_inference=float(meta["t_inference_mean"]),
                         t_revision=cfg.cost_t_revision,
                         t_tuning=cfg.cost_t_tuning,
                         n_images=len(records))
    summary = evaluate_records(records, truth_masks, cost)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "metrics.json").write_text(
        json.dumps(summary.to_dict(), indent=2), encoding="utf-8")
    report_mod.write_csv([asdict(r) for r in summary.rows], outdir / "per_image.csv")
    report_mod.write_iou_histogram(
        [r.iou for r in summary.rows if r.defective], outdir / "iou_histogram.png")
    print(json.dumps(summary.to_dict(), indent=2))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .review import serve

    serve(args.store, host=args.host, port=args.port, ui_dir=args.ui)
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    from .annotate import to_coco, to_voc
    from .review.store import AnnotationStore

    store = AnnotationStore(args.store)
    status = None if args.status == "all" else args.status
    records = store.records(status)
    if args.format == "coco":
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(to_coco(records), encoding="utf-8")
        print(f"wrote {len(records)} records to {out}")
    else:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        for rec in records:
            (outdir / f"{rec.image_id}.xml").write_text(to_voc(rec), encoding="utf-8")
        print(f"wrote {len(records)} VOC files under {outdir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvelseg",
        description="Defect-segmentation annotations for PV electroluminescence images")
    parser.add_argument("--version", action="version", version=f"pvelseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-config", help="print or write a commented default config")
    p.add_argument("--preset", choices=("desk", "full"), default="full")
    p.add_argument("--out", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_init_config)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--count", type=int, default=None, help="number of cells")
    p.add_argument("--defect-rate", type=float, default=None,
                   help="fraction of defective cells")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the autoencoder on defect-free cells")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory from synth")
    p.add_argument("--out", required=True, help="output directory for model and report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="annotate images into a review store")
    _add_common(p)
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--data", required=True, help="image or dataset directory")
    p.add_argument("--store", required=True, help="review store directory")
    p.add_argument("--workers", type=int, default=1, help="parallel workers")
    p.add_argument("--figures", default=None,
                   help="also write disparity/overlay figures to this directory")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="score a store against dataset ground truth")
    _add_common(p)
    p.add_argument("--store", required=True, help="review store directory")
    p.add_argument("--truth", required=True, help="dataset directory with masks")
    p.add_argument("--out", required=True, help="metrics output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the review HTTP service")
    p.add_argument("--store", required=True, help="review store directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--ui", default=None, help="static UI directory to serve at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export", help="export annotations as COCO or VOC")
    p.add_argument("--store", required=True, help="review store directory")
    p.add_argument("--format", choices=("coco", "voc"), required=True)
    p.add_argument("--out", required=True, help="output file (coco) or directory (voc)")
    p.add_argument("--status", choices=("silver", "gold", "rejected", "all"),
                   default="gold", help="records to include (default: gold)")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit code 1
        log.error("%s", exc, exc_info=log.isEnabledFor(logging.DEBUG))
        return 1


if __name__ == "__main__":
    sys.exit(main())
