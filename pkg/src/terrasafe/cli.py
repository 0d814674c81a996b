"""Command-line pipeline: ingest -> label -> generate -> validate/sweep.

Every command resolves its parameters from an optional TOML config plus
flag overrides (flags win) and writes the resolved snapshot next to its
outputs. Exit codes: 2 usage, 3 cloud I/O, 4 configuration, 5 generation,
6 validation input.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import cloud_io, dataset, evaluate, geometry, labeling
from .config import ConfigError, PipelineConfig

EXIT_CLOUD_IO = 3
EXIT_CONFIG = 4
EXIT_GENERATE = 5
EXIT_VALIDATE = 6


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _resolve(config_path, **overrides) -> PipelineConfig:
    try:
        return PipelineConfig.load(config_path, overrides)
    except (ConfigError, OSError) as exc:
        _fail(EXIT_CONFIG, str(exc))


@click.group()
def main():
    """Terrain survey to landing-safety segmentation dataset pipeline."""


config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False),
    default=None, help="TOML config file; flags override its values.")
seed_option = click.option("--seed", type=int, default=None,
                           help="Override the pipeline seed.")
out_option = click.option("--out", "out_path", required=True,
                          type=click.Path(), help="Output path.")


@main.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", required=True,
              type=click.Choice(cloud_io.FORMATS), help="Input cloud format.")
@click.option("--cell", type=float, default=None,
              help="Voxel cell size in meters.")
@config_option
@seed_option
@out_option
def ingest(input_path, fmt, cell, config_path, seed, out_path):
    """Load a cloud, normalize its density, and write it as binary PLY."""
    cfg = _resolve(config_path, voxel_cell=cell, seed=seed)
    out_path = Path(out_path)
    try:
        cloud, report = cloud_io.load_cloud(input_path, fmt, with_report=True)
        cloud = cloud_io.voxel_downsample(cloud, cfg.voxel_cell)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        cloud_io.save_cloud(cloud, out_path, "ply_binary_le")
    except cloud_io.CloudIOError as exc:
        _fail(EXIT_CLOUD_IO, str(exc))
    cfg.snapshot(out_path.parent)
    click.echo(json.dumps({"load_report": report.to_json(),
                           "points_out": len(cloud)}))


@main.command()
@click.argument("cloud_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--overrides", "overrides_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON file of polygon override regions.")
@click.option("--verticality-threshold", type=float, default=None)
@click.option("--surface-variation-threshold", type=float, default=None)
@click.option("--sigma", type=float, default=None,
              help="Gaussian smoothing width in meters.")
@config_option
@seed_option
@out_option
def label(cloud_path, overrides_path, verticality_threshold,
          surface_variation_threshold, sigma, config_path, seed, out_path):
    """Compute features, classify safety, apply overrides, smooth, and
    write the labeled cloud as binary PLY."""
    cfg = _resolve(config_path, verticality_threshold=verticality_threshold,
                   surface_variation_threshold=surface_variation_threshold,
                   smooth_sigma=sigma, seed=seed)
    out_path = Path(out_path)
    regions = []
    if overrides_path:
        with open(overrides_path) as fh:
            try:
                regions = [labeling.OverrideRegion.from_json(o)
                           for o in json.load(fh)]
            except (ValueError, KeyError) as exc:
                _fail(EXIT_CONFIG, f"bad overrides file: {exc}")
    try:
        cloud = cloud_io.load_cloud(cloud_path, "ply_binary_le")
    except cloud_io.CloudIOError as exc:
        _fail(EXIT_CLOUD_IO, str(exc))
    index = geometry.NeighborIndex(cloud)
    features = geometry.compute_features(
        cloud, radius=cfg.feature_radius, min_neighbors=cfg.min_neighbors,
        index=index)
    thresholds = labeling.SafetyThresholds(
        verticality=cfg.verticality_threshold,
        surface_variation=cfg.surface_variation_threshold)
    labeled = labeling.classify_safety(cloud, features, thresholds)
    labeled = labeling.apply_overrides(labeled, regions)
    labeled = labeling.smooth_safety(labeled, index, sigma=cfg.smooth_sigma)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        cloud_io.save_cloud(labeled.to_cloud(), out_path, "ply_binary_le")
    except cloud_io.CloudIOError as exc:
        _fail(EXIT_CLOUD_IO, str(exc))
    cfg.snapshot(out_path.parent)
    click.echo(json.dumps({
        "points": len(labeled),
        "unsafe_fraction": float(1.0 - labeled.raw_safety.mean()),
    }))


@main.command()
@click.argument("labeled_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-n", "n_samples", type=int, required=True,
              help="Number of image/mask pairs to generate.")
@config_option
@seed_option
@out_option
def generate(labeled_path, n_samples, config_path, seed, out_path):
    """Slice the labeled cloud and render a paired image/mask dataset."""
    cfg = _resolve(config_path, seed=seed)
    try:
        cloud = cloud_io.load_cloud(labeled_path, "ply_binary_le")
        labeled = labeling.labeled_from_cloud(cloud)
    except (cloud_io.CloudIOError, ValueError) as exc:
        _fail(EXIT_CLOUD_IO, str(exc))
    slices = labeling.slice_terrain(labeled, chunk=cfg.chunk,
                                    overlap=cfg.feature_radius)
    gen_config = dataset.GeneratorConfig(
        cell=cfg.heightfield_cell, resolution=cfg.resolution, vfov=cfg.vfov,
        h_min=cfg.h_min, h_max=cfg.h_max, d_max_deg=cfg.d_max_deg,
        min_coverage=cfg.min_coverage, retry_cap=cfg.retry_cap,
        seed=cfg.seed, backend=cfg.backend)
    try:
        manifest = dataset.generate_dataset(slices, n_samples, gen_config,
                                            out_path)
    except (dataset.GenerationError, ValueError) as exc:
        _fail(EXIT_GENERATE, str(exc))
    cfg.snapshot(out_path)
    click.echo(json.dumps({"entries": len(manifest.entries),
                           "out": str(out_path)}))


def _load_videos(pred_dirs):
    videos, truths, metas = [], [], []
    for pred_dir in pred_dirs:
        try:
            frames, meta = evaluate.load_prediction_video(pred_dir)
        except (ValueError, OSError) as exc:
            _fail(EXIT_VALIDATE, str(exc))
        videos.append(frames)
        truths.append(meta.get("truth"))
        meta.setdefault("site_id", Path(pred_dir).name)
        metas.append(meta)
    return videos, truths, metas


@main.command()
@click.argument("pred_dirs", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
@click.option("--e1/--no-e1", "use_e1", default=False,
              help="Apply the spatial box blur.")
@click.option("--e2/--no-e2", "use_e2", default=False,
              help="Apply the temporal max filter.")
@click.option("--safety-threshold", type=float, default=None)
@config_option
@seed_option
@out_option
def validate(pred_dirs, use_e1, use_e2, safety_threshold, config_path, seed,
             out_path):
    """Score prediction videos and write a JSON report."""
    cfg = _resolve(config_path, safety_threshold=safety_threshold, seed=seed)
    videos, truths, metas = _load_videos(pred_dirs)
    verdicts = []
    for frames, truth, meta in zip(videos, truths, metas):
        verdicts.append(evaluate.score_video(
            frames, truth=truth, t=evaluate.Thresholds(cfg.safety_threshold),
            use_e1=use_e1, use_e2=use_e2, k=cfg.blur_kernel,
            n_history=cfg.temporal_window,
            region_fraction=meta.get("region_fraction", cfg.region_fraction),
            site_id=meta["site_id"]))
    judged = [v for v in verdicts if v.correct is not None]
    report = {
        "safety_threshold": cfg.safety_threshold,
        "e1": use_e1, "e2": use_e2,
        "videos": [v.to_json() for v in verdicts],
        "accuracy": (sum(v.correct for v in judged) / len(judged)
                     if judged else None),
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    cfg.snapshot(out_path.parent)
    click.echo(json.dumps({"accuracy": report["accuracy"],
                           "videos": len(verdicts)}))


@main.command()
@click.argument("pred_dirs", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
@click.option("--e1/--no-e1", "use_e1", default=True)
@click.option("--e2/--no-e2", "use_e2", default=True)
@config_option
@seed_option
@out_option
def sweep(pred_dirs, use_e1, use_e2, config_path, seed, out_path):
    """Sweep the safety threshold over its nine standard values and write
    the accuracy table."""
    cfg = _resolve(config_path, seed=seed)
    videos, truths, metas = _load_videos(pred_dirs)
    if any(t is None for t in truths):
        _fail(EXIT_VALIDATE, "sweep requires a truth tag in every video.json")
    rows = evaluate.sweep_thresholds(
        videos, truths, use_e1=use_e1, use_e2=use_e2,
        k=cfg.blur_kernel, n_history=cfg.temporal_window,
        region_fraction=cfg.region_fraction)
    best = max(rows, key=lambda r: r.accuracy)
    table = [{"safety_threshold": r.safety_threshold, "accuracy": r.accuracy}
             for r in rows]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        json.dump({"table": table,
                   "best": {"safety_threshold": best.safety_threshold,
                            "accuracy": best.accuracy}}, fh, indent=2)
        fh.write("\n")
    cfg.snapshot(out_path.parent)
    for row in table:
        click.echo(f"theta_s={row['safety_threshold']:.1f} "
                   f"accuracy={row['accuracy']:.3f}")


if __name__ == "__main__":
    main()
