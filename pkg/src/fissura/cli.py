"""Command-line interface.

Subcommands cover the whole workflow: ``init`` scaffolds a project,
``annotate --serve`` starts the annotation service, ``extract-features``
builds the feature store, ``train`` grid-searches the classifier head,
``detect`` / ``detect-staged`` run sliding-window detection, and
``evaluate`` scores a model on a labeled crop tree. The project root comes
from ``--project`` or the ``FISSURA_PROJECT`` environment variable.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from fissura import detector, imaging, store, trainer, workbench
from fissura.backend import (DEFAULT_EXTRACTION_BATCH, BackendDescriptor,
                             blockstats_descriptor, extract_features,
                             load_backend)
from fissura.errors import DimensionError, FissuraError, LayoutError
from fissura.evaluator import evaluate_directory, format_report, write_report_csv

logger = logging.getLogger("fissura")


def _threshold(value: str) -> float:
    t = float(value)
    if not 0.0 < t < 1.0:
        raise argparse.ArgumentTypeError(f"threshold must be in (0, 1), got {value}")
    return t


def _step_fraction(value: str) -> float:
    s = float(value)
    if not 0.0 < s <= 1.0:
        raise argparse.ArgumentTypeError(f"step must be in (0, 1], got {value}")
    return s


def _c_grid(value: str) -> tuple[float, ...]:
    try:
        grid = tuple(float(v) for v in value.split(",") if v)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad C grid {value!r}") from exc
    if not grid:
        raise argparse.ArgumentTypeError("C grid must not be empty")
    return grid


def _resolve_project(args, parser) -> workbench.ProjectLayout:
    root = args.project or os.environ.get("FISSURA_PROJECT")
    if not root:
        parser.error("no project given: use --project or set FISSURA_PROJECT")
    return workbench.open_project(root)


def _resolve_backend(args, model=None):
    """Backend handle from --backend, falling back to the model's metadata."""
    spec = getattr(args, "backend", None)
    tile = getattr(args, "tile_size", None) or (model.tile_size if model else 224)
    if spec is None or spec == "blockstats":
        return load_backend(blockstats_descriptor(input_size=tile))
    path = Path(spec)
    dim = getattr(args, "backend_dim", None) or (model.backend.output_dim if model else None)
    if dim is None:
        raise FissuraError("--backend-dim is required for a model-asset backend")
    descriptor = BackendDescriptor(
        name=getattr(args, "backend_name", None) or path.stem,
        output_dim=dim, input_size=tile,
        channel_order=args.backend_channel_order,
        input_layout=args.backend_layout, model_asset_path=str(path))
    return load_backend(descriptor)


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", default=None,
                   help="'blockstats' (default) or path to a TorchScript asset")
    p.add_argument("--backend-dim", type=int, default=None,
                   help="feature dimension of a model-asset backend")
    p.add_argument("--backend-name", default=None,
                   help="backend name recorded in model metadata")
    p.add_argument("--backend-channel-order", choices=("RGB", "BGR"), default="RGB")
    p.add_argument("--backend-layout", choices=("NHWC", "NCHW"), default="NHWC")


def _cleanup(paths) -> None:
    for p in paths:
        try:
            Path(p).unlink(missing_ok=True)
        except OSError:
            pass


def cmd_init(args, parser) -> int:
    labels = [s for s in args.labels.split(",") if s]
    layout = workbench.init_project(args.project or os.environ.get("FISSURA_PROJECT")
                                    or parser.error("no project given"), labels)
    print(f"initialized project at {layout.root} with labels {layout.labels()}")
    return 0


def cmd_annotate(args, parser) -> int:
    if not args.serve:
        parser.error("annotate requires --serve (browser-based annotation)")
    layout = _resolve_project(args, parser)
    from fissura.service import serve

    serve(layout, host=args.host, port=args.port)
    return 0


def cmd_extract_features(args, parser) -> int:
    layout = _resolve_project(args, parser)
    labels = layout.labels()
    if not labels:
        raise LayoutError("project has no label directories under datapoints/")
    backend = _resolve_backend(args)
    pp = imaging.PreprocessConfig(target_tile_size=backend.descriptor.input_size,
                                  channel_means=backend.descriptor.channel_means,
                                  channel_order=backend.descriptor.channel_order)
    out = Path(args.out) if args.out else layout.features_dir / "dataset.kfs"
    files = [(idx, path)
             for idx, label in enumerate(labels)
             for path in sorted(layout.label_dir(label).glob("*.png"))]
    if not files:
        raise LayoutError("no crops found; annotate images first")
    writer = store.StoreWriter(out, backend.descriptor.output_dim, labels,
                               buffer_rows=args.batch_size)
    try:
        for lo in range(0, len(files), args.batch_size):
            chunk = files[lo:lo + args.batch_size]
            tiles = []
            for _, path in chunk:
                img = imaging.load_image(path)
                if img.shape[0] != pp.target_tile_size:
                    img = imaging.resize(img, pp.target_tile_size)
                tiles.append(imaging.preprocess(img, pp))
            feats = extract_features(backend, tiles)
            writer.append(feats, [idx for idx, _ in chunk])
        header = writer.finalize()
    except BaseException:
        writer.abort()
        _cleanup([out, str(out) + ".labels.part", str(out) + ".features.part"])
        raise
    print(f"wrote {header.row_count} rows x {header.feature_dim} features "
          f"({sorted(labels)}) to {out}")
    return 0


def cmd_train(args, parser) -> int:
    layout = _resolve_project(args, parser)
    store_path = Path(args.store) if args.store else layout.features_dir / "dataset.kfs"
    scale = args.scale_factor
    if scale is None:
        scale = workbench.infer_scale_factor(layout)
        if scale is None:
            scale = 1.0
            logger.warning("no unique scale factor in crop names; using 1.0 "
                           "(override with --scale-factor)")
    backend = _resolve_backend(args)
    config = trainer.TrainConfig(c_grid=args.c_grid, folds=args.folds,
                                 max_iterations=args.max_iterations,
                                 split_ratio=args.split, shuffle_seed=args.seed)
    out = Path(args.out) if args.out else layout.models_dir / "model.klm"
    with store.read_store(store_path) as reader:
        model, report = trainer.grid_search(
            reader, config, backend=backend.descriptor,
            tile_size=args.tile_size, scale_factor=scale)
    try:
        trainer.save_model(model, out)
    except BaseException:
        _cleanup([out])
        raise
    print(trainer.format_train_report(report))
    print(f"saved model (C={model.regularization_c:g}, scale={scale:g}) to {out}")
    return 0


def _load_model_and_backend(args):
    model = trainer.load_model(args.model)
    backend = _resolve_backend(args, model=model)
    return model, backend


def cmd_detect(args, parser) -> int:
    model, backend = _load_model_and_backend(args)
    config = detector.DetectionConfig(confidence_threshold=args.threshold,
                                      step_fraction=args.step,
                                      batch_size=args.batch_size)
    out_dir = Path(args.out) if args.out else Path("output") / Path(args.input).stem
    result = detector.detect(args.input, model, backend, config)
    written = []
    try:
        written = detector.write_detection_outputs(result, args.input, out_dir)
    except BaseException:
        _cleanup(written)
        raise
    for label, det in result.per_class.items():
        print(f"{label}: {len(det.boxes)} box(es), {det.mask.count()} mask px")
    print(f"evaluated {len(result.positions)} windows; outputs in {out_dir}")
    return 0


def cmd_detect_staged(args, parser) -> int:
    model, backend = _load_model_and_backend(args)
    config = detector.DetectionConfig(confidence_threshold=args.threshold,
                                      step_fraction=args.step,
                                      batch_size=args.batch_size)
    stage_dir = Path(args.stage2_dir)
    stage_models = {p.stem: trainer.load_model(p)
                    for p in sorted(stage_dir.glob("*.klm"))}
    if not stage_models:
        raise FissuraError(f"no .klm stage models in {stage_dir}")
    out_dir = Path(args.out) if args.out else Path("output") / Path(args.input).stem
    stage1 = detector.detect(args.input, model, backend, config)
    staged = detector.multi_stage(args.input, stage1, stage_models, backend, config)
    written = []
    try:
        written += detector.write_detection_outputs(stage1, args.input,
                                                    out_dir / "stage1")
        for label, result in staged.items():
            written += detector.write_detection_outputs(
                result, args.input, out_dir / "stage2" / label)
    except BaseException:
        _cleanup(written)
        raise
    print(f"stage 1: {len(stage1.positions)} windows; "
          f"stage 2 labels: {sorted(staged)}; outputs in {out_dir}")
    return 0


def cmd_evaluate(args, parser) -> int:
    model, backend = _load_model_and_backend(args)
    report = evaluate_directory(model, backend, args.dataset_dir,
                                threshold=args.threshold)
    print(format_report(report.confusion, report.metrics))
    if report.skipped or report.below_threshold:
        print(f"skipped {report.skipped} unreadable crop(s); "
              f"{report.below_threshold} below threshold")
    if args.report_csv:
        write_report_csv(args.report_csv, report.confusion, report.metrics)
        print(f"report written to {args.report_csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fissura",
        description="Sliding-window surface defect detection workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="scaffold a project directory")
    p.add_argument("--project", default=None)
    p.add_argument("--labels", default="Background,Crack",
                   help="comma-separated class labels")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("annotate", help="start the annotation service")
    p.add_argument("--project", default=None)
    p.add_argument("--serve", action="store_true")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8641)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("extract-features", help="embed crops into a feature store")
    p.add_argument("--project", default=None)
    p.add_argument("--batch-size", type=int, default=DEFAULT_EXTRACTION_BATCH)
    p.add_argument("--tile-size", type=int, default=imaging.DEFAULT_TILE_SIZE)
    p.add_argument("--out", default=None)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_extract_features)

    p = sub.add_parser("train", help="grid-search the classifier head")
    p.add_argument("--project", default=None)
    p.add_argument("--store", default=None)
    p.add_argument("--c-grid", type=_c_grid, default=trainer.DEFAULT_C_GRID)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--split", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iterations", type=int, default=512)
    p.add_argument("--tile-size", type=int, default=imaging.DEFAULT_TILE_SIZE)
    p.add_argument("--scale-factor", type=float, default=None,
                   help="default: inferred from crop file names")
    p.add_argument("--out", default=None)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_train)

    for name, fn in (("detect", cmd_detect), ("detect-staged", cmd_detect_staged)):
        p = sub.add_parser(name, help="run sliding-window detection")
        p.add_argument("--model", required=True)
        p.add_argument("--in", dest="input", required=True,
                       help="input image (PNG/JPEG, or .npy raster for streaming)")
        p.add_argument("--out", default=None)
        p.add_argument("--threshold", type=_threshold,
                       default=detector.DEFAULT_CONFIDENCE_THRESHOLD)
        p.add_argument("--step", type=_step_fraction,
                       default=imaging.DEFAULT_STEP_FRACTION)
        p.add_argument("--batch-size", type=int, default=DEFAULT_EXTRACTION_BATCH)
        if name == "detect-staged":
            p.add_argument("--stage2-dir", required=True,
                           help="directory of <label>.klm stage-2 models")
        _add_backend_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("evaluate", help="score a model on a labeled crop tree")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset-dir", required=True)
    p.add_argument("--threshold", type=_threshold, default=0.5)
    p.add_argument("--report-csv", default=None)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except FissuraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
