"""Command-line entry points.

Batch work (data generation, training, evaluation) calls the library
directly; `serve` hosts the HTTP review service; `export` pulls decided
labels out of a service data directory.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from .architectures import (
    build_logisticnet,
    build_logisticnet_small,
    receptive_field,
    spec_from_json,
)
from .dataset import (
    generate_synthetic,
    load_manifest,
    load_stage_arrays,
    relabel_for_stage,
    split_stratified,
)
from .imaging import AugmentationConfig, ImageFormatError, read_ppm
from .pipeline import (
    TrainConfig,
    TrainingDiverged,
    classify_two_stage,
    compute_metrics,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .service import ReviewStore, ServiceConfig, create_app


@click.group()
def main():
    """Truck load-safety assessment toolkit."""


@main.command("gen-data")
@click.option("--out", type=click.Path(), default="synthetic-data",
              show_default=True, help="Output directory for images + manifest.")
@click.option("--per-class", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", type=int, default=128, show_default=True,
              help="Rendered image edge length in pixels.")
@click.option("--ratio", type=click.Choice(["balanced", "imbalanced"]),
              default="balanced", show_default=True,
              help="Class balance: equal counts, or the reference corpus mix.")
def gen_data(out, per_class, seed, size, ratio):
    """Render a synthetic labeled corpus."""
    manifest = generate_synthetic(per_class, seed, size=size, root=out,
                                  ratio=ratio)
    for label, count in sorted((k.value, v) for k, v in manifest.counts().items()):
        click.echo(f"{label:9s} {count}")
    click.echo(f"wrote {len(manifest.records)} images under {out}")


def _stage_spec(arch, resolution):
    if arch == "small":
        return build_logisticnet_small(input_resolution=resolution)
    return build_logisticnet(input_resolution=resolution)


@main.command("train")
@click.option("--manifest", type=click.Path(exists=True), required=True,
              help="Dataset manifest (JSON lines).")
@click.option("--stage", type=click.IntRange(1, 2), required=True,
              help="1 = usable/unusable screen, 2 = safe/unsafe.")
@click.option("--out", type=click.Path(), required=True,
              help="Checkpoint output path.")
@click.option("--epochs", type=int, default=30, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--resolution", type=int, default=64, show_default=True)
@click.option("--arch", type=click.Choice(["small", "full"]), default="small",
              show_default=True, help="Network variant.")
@click.option("--val-fraction", type=float, default=0.2, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--momentum", type=float, default=0.9, show_default=True)
@click.option("--patience", type=int, default=5, show_default=True)
@click.option("--min-delta", type=float, default=0.005, show_default=True)
@click.option("--augment/--no-augment", default=False, show_default=True)
@click.option("--history", type=click.Path(), default=None,
              help="Optional CSV path for the per-epoch history.")
def train_cmd(manifest, stage, out, epochs, seed, resolution, arch,
              val_fraction, batch_size, lr, momentum, patience, min_delta,
              augment, history):
    """Train one stage of the decision tree on a labeled manifest."""
    data = load_manifest(manifest)
    train_split, val_split = split_stratified(data, val_fraction, seed)
    train_view = relabel_for_stage(train_split, stage)
    val_view = relabel_for_stage(val_split, stage)
    for view in (train_view, val_view):
        if view.warning:
            click.echo(f"warning: {view.warning}", err=True)
    train_set = load_stage_arrays(train_view, resolution)
    val_set = load_stage_arrays(val_view, resolution)

    augmentation = AugmentationConfig(seed=seed) if augment else None
    cfg = TrainConfig(epochs=epochs, batch_size=batch_size, lr=lr,
                      momentum=momentum, seed=seed, augmentation=augmentation,
                      patience=patience, min_delta=min_delta,
                      resolution=resolution)
    try:
        checkpoint, hist = train(_stage_spec(arch, resolution), train_set,
                                 val_set, cfg,
                                 class_names=train_view.class_names)
    except TrainingDiverged as exc:
        raise click.ClickException(f"training diverged: {exc}")
    for row in hist.rows:
        click.echo(f"epoch {row.epoch:3d}  loss {row.loss:.4f}  "
                   f"valloss {row.valloss:.4f}  valacc {row.valacc:.4f}")
    save_checkpoint(checkpoint, out)
    if history:
        hist.to_csv(history)
    best = hist.rows[checkpoint.epoch]
    click.echo(f"saved best epoch {checkpoint.epoch} "
               f"(valloss {best.valloss:.4f}, valacc {best.valacc:.4f}) to {out}")


@main.command("eval")
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--stage", type=click.IntRange(1, 2), required=True)
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--positive", default=None,
              help="Positive class name [default: second checkpoint class].")
def eval_cmd(manifest, stage, checkpoint, positive):
    """Evaluate a checkpoint over a manifest; print confusion + metrics."""
    ckpt = load_checkpoint(checkpoint)
    view = relabel_for_stage(load_manifest(manifest), stage)
    if tuple(ckpt.class_names) != view.class_names:
        raise click.ClickException(
            f"checkpoint classifies {ckpt.class_names} but stage {stage} "
            f"labels are {view.class_names}")
    resolution = ckpt.spec.input_shape[1]
    labeled = load_stage_arrays(view, resolution)
    cm = evaluate(ckpt, labeled, positive or ckpt.class_names[1])
    report = compute_metrics(cm)
    click.echo(f"positive class: {cm.positive}")
    click.echo(f"tp={cm.tp} fp={cm.fp} fn={cm.fn} tn={cm.tn}")
    for name in ("accuracy", "precision", "recall", "f1", "mcc"):
        click.echo(f"{name:9s} {getattr(report, name):.4f}")
    if report.degenerate:
        click.echo("note: one or more denominators were zero", err=True)


@main.command("rf")
@click.option("--arch", type=click.Choice(["small", "full"]), default="full",
              show_default=True)
@click.option("--resolution", type=int, default=None,
              help="Input resolution [default: the variant's native size].")
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None,
              help="Architecture spec JSON (overrides --arch).")
def rf_cmd(arch, resolution, spec_path):
    """Print the receptive-field table of an architecture."""
    if spec_path:
        spec = spec_from_json(Path(spec_path).read_text())
    elif arch == "small":
        spec = build_logisticnet_small(input_resolution=resolution or 64)
    else:
        spec = build_logisticnet(input_resolution=resolution or 227)
    click.echo(f"{spec.name} (input {spec.input_shape})")
    click.echo(f"{'layer':>5s}  {'kind':8s} {'rf':>6s} {'jump':>6s} {'start':>8s}")
    for row in receptive_field(spec):
        click.echo(f"{row.index:5d}  {row.kind:8s} {row.rf:6d} "
                   f"{row.jump:6d} {row.start:8.1f}")


@main.command("classify")
@click.argument("images", nargs=-1, required=True,
                type=click.Path(exists=True))
@click.option("--stage1", type=click.Path(exists=True), required=True,
              help="Stage-1 (usable/unusable) checkpoint.")
@click.option("--stage2", type=click.Path(exists=True), default=None,
              help="Optional stage-2 (safe/unsafe) checkpoint.")
@click.option("--threshold", type=float, default=0.8, show_default=True,
              help="Stage-2 confidence below this routes to human review.")
def classify_cmd(images, stage1, stage2, threshold):
    """Run the two-stage classifier on PPM images."""
    ckpt1 = load_checkpoint(stage1)
    ckpt2 = load_checkpoint(stage2) if stage2 else None
    for path in images:
        try:
            image = read_ppm(path)
        except ImageFormatError as exc:
            raise click.ClickException(f"{path}: {exc}")
        verdict = classify_two_stage(image, ckpt1, ckpt2,
                                     review_threshold=threshold)
        line = f"{path}: {verdict.outcome.value} (stage1 {verdict.stage1_confidence:.3f}"
        if verdict.stage2_confidence is not None:
            line += f", stage2 {verdict.stage2_confidence:.3f}"
        click.echo(line + ")")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True,
              envvar="LOADSAFETY_HOST")
@click.option("--port", type=int, default=8000, show_default=True,
              envvar="LOADSAFETY_PORT")
@click.option("--data-dir", type=click.Path(), required=True,
              envvar="LOADSAFETY_DATA_DIR")
@click.option("--stage1", type=click.Path(exists=True), required=True,
              envvar="LOADSAFETY_STAGE1", help="Stage-1 checkpoint path.")
@click.option("--stage2", type=click.Path(exists=True), default=None,
              envvar="LOADSAFETY_STAGE2", help="Stage-2 checkpoint path.")
@click.option("--review-threshold", type=float, default=0.8, show_default=True,
              envvar="LOADSAFETY_REVIEW_THRESHOLD")
@click.option("--lease-seconds", type=float, default=300.0, show_default=True,
              envvar="LOADSAFETY_LEASE_SECONDS")
def serve_cmd(host, port, data_dir, stage1, stage2, review_threshold,
              lease_seconds):
    """Host the submission + review HTTP service."""
    import uvicorn

    config = ServiceConfig(data_dir, stage1, stage2,
                           review_threshold=review_threshold,
                           lease_seconds=lease_seconds)
    uvicorn.run(create_app(config), host=host, port=port)


@main.command("export")
@click.option("--data-dir", type=click.Path(exists=True), required=True,
              help="Service data directory (event log + images).")
@click.option("--out", type=click.Path(), required=True,
              help="Destination for the labeled manifest + image copies.")
def export_cmd(data_dir, out):
    """Export operator-decided labels as a training manifest."""
    from .service.store import StateError

    store = ReviewStore(data_dir)
    try:
        manifest = store.export_labels(out)
    except StateError as exc:
        raise click.ClickException(str(exc))
    counts = json.dumps({k.value: v for k, v in manifest.counts().items()},
                        sort_keys=True)
    click.echo(f"exported {len(manifest.records)} labeled images to {out} "
               f"{counts}")


if __name__ == "__main__":
    main()
