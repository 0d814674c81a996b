"""Command line: train a checkpoint, or run one over a frame directory."""

from __future__ import annotations

import json

import click

from .config import TrainConfig
from .predict import predict as run_predict
from .train import train as run_train


@click.group()
def main():
    """Small U-Net safety-segmentation trainer."""


@main.command()
@click.argument("manifest_train", type=click.Path(exists=True, dir_okay=False))
@click.argument("manifest_test", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--stages", type=int, default=4)
@click.option("--base-width", type=int, default=8)
@click.option("--resolution", type=int, default=512)
@click.option("--max-epochs", type=int, default=100)
@click.option("--patience", type=int, default=15)
@click.option("--learning-rate", type=float, default=5e-5)
@click.option("--batch-size", type=int, default=4)
@click.option("--repeats", type=int, default=1)
@click.option("--seed", type=int, default=0)
@click.option("--coral-compat", is_flag=True, default=False)
def train(manifest_train, manifest_test, out_dir, **kw):
    """Train on two dataset manifests and write model.keras + history.csv."""
    config = TrainConfig(**kw)
    result = run_train(manifest_train, manifest_test, config, out_dir)
    click.echo(json.dumps({
        "checkpoint": str(result.checkpoint_path),
        "history": str(result.history_path),
        "best_test_loss": result.best_test_loss,
        "epochs_run": result.epochs_run,
    }))


@main.command()
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("image_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--site-id", required=True)
@click.option("--truth", type=click.Choice(["safe", "unsafe"]), default=None)
@click.option("--fps", type=float, default=None)
@click.option("--resolution", type=int, default=512)
def predict(checkpoint, image_dir, out_dir, site_id, truth, fps, resolution):
    """Emit safe/danger prediction PNG pairs plus video.json."""
    names = run_predict(checkpoint, image_dir, out_dir, site_id, truth=truth,
                        fps=fps, resolution=resolution)
    click.echo(json.dumps({"frames": len(names), "out": str(out_dir)}))


if __name__ == "__main__":
    main()
