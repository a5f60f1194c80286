"""Command-line interface for dataset generation, training, and evaluation."""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import click
import numpy as np
import yaml

from . import data as data_mod
from .config import load_config
from .dynamics import load_bank, load_dynamics_config, train_dynamics
from .harness import evaluate, evaluate_dynamics, export_slots, load_checkpoint, train
from .harness import dataset_from_source


def _load_scene_config(path) -> data_mod.SpriteSceneConfig:
    if path is None:
        return data_mod.SpriteSceneConfig()
    with open(path) as fh:
        flat = yaml.safe_load(fh) or {}
    known = {f.name for f in dataclasses.fields(data_mod.SpriteSceneConfig)}
    unknown = set(flat) - known
    if unknown:
        raise click.ClickException(f"unknown scene config keys: {sorted(unknown)}")
    if "shapes" in flat:
        flat["shapes"] = tuple(flat["shapes"])
    return data_mod.SpriteSceneConfig(**flat)


def _emit_report(report, out_file=None):
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    click.echo(payload)
    if out_file:
        Path(out_file).write_text(payload)


@click.group()
def main():
    """Slot-based temporally consistent video object discovery."""


@main.command("generate-data")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="Scene config YAML.")
@click.option("--n-clips", type=int, required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
@click.option("--split", type=str, default="train", show_default=True)
def generate_data(config_path, n_clips, out_dir, seed, split):
    """Generate a synthetic sprite dataset and write its manifest."""
    cfg = _load_scene_config(config_path)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    manifest = data_mod.generate_dataset(cfg, n_clips, out_dir, split=split)
    click.echo(f"wrote {manifest.count} clips to {out_dir} ({data_mod.MANIFEST_NAME})")


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True, help="Training manifest.")
@click.option("--val-data", type=click.Path(exists=True), default=None, help="Validation manifest.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def train_cmd(config_path, data_path, val_data, out_dir):
    """Train the grouping model."""
    model_cfg, train_cfg = load_config(config_path)
    train_set = dataset_from_source(data_path)
    val_set = dataset_from_source(val_data) if val_data else None
    result = train(model_cfg, train_cfg, train_set, out_dir, val_data=val_set)
    click.echo(f"final checkpoint: {result.checkpoint_path}")
    if result.best_checkpoint_path:
        click.echo(f"best checkpoint: {result.best_checkpoint_path}")


@main.command("eval")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--occluded-subset", is_flag=True, help="Score only occlusion clips, on occluded objects.")
@click.option("--image-metrics/--no-image-metrics", default=True, show_default=True)
@click.option("--report-file", type=click.Path(), default=None)
def eval_cmd(ckpt, data_path, occluded_subset, image_metrics, report_file):
    """Evaluate a checkpoint on a dataset."""
    model, _, _ = load_checkpoint(ckpt)
    manifest = data_mod.load_manifest(data_path)
    keep = None
    if occluded_subset:
        manifest = data_mod.select_occluded_subset(manifest)
        keep = manifest.occluded_objects
    dataset = data_mod.ClipDataset.from_manifest(manifest)
    report = evaluate(model, dataset, image_metrics=image_metrics, keep_objects=keep)
    _emit_report(report, report_file)


@main.command("export-slots")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def export_slots_cmd(ckpt, data_path, out_path):
    """Run a frozen checkpoint over a dataset, saving its slots as a bank."""
    model, _, _ = load_checkpoint(ckpt)
    bank = export_slots(model, dataset_from_source(data_path), out_path)
    click.echo(f"exported {len(bank.slots)} clips to {out_path}")


@main.command("train-dynamics")
@click.option("--bank", "bank_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
def train_dynamics_cmd(bank_path, config_path, out_path):
    """Fit the slot dynamics forecaster on an exported slot bank."""
    import torch

    from .dynamics import DynamicsConfig

    cfg = load_dynamics_config(config_path) if config_path else DynamicsConfig()
    bank = load_bank(bank_path)
    model, log = train_dynamics(bank, cfg)
    torch.save(
        {
            "model": model.state_dict(),
            "config": dataclasses.asdict(cfg),
            "slot_shape": list(bank.slot_shape),
            "bank_checkpoint_hash": bank.checkpoint_hash,
            "loss": log.loss,
        },
        out_path,
    )
    click.echo(f"final rollout MSE: {log.loss[-1]:.6g}; saved to {out_path}")


@main.command("eval-dynamics")
@click.option("--ckpt", "dyn_ckpt", type=click.Path(exists=True), required=True, help="Dynamics checkpoint.")
@click.option("--grouping-ckpt", type=click.Path(exists=True), required=True)
@click.option("--bank", "bank_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--report-file", type=click.Path(), default=None)
def eval_dynamics_cmd(dyn_ckpt, grouping_ckpt, bank_path, data_path, report_file):
    """Decode rolled-out slots and score them against future ground truth."""
    import torch

    from .dynamics import DynamicsConfig, SlotDynamicsModel

    payload = torch.load(dyn_ckpt, map_location="cpu", weights_only=True)
    cfg = DynamicsConfig(**payload["config"])
    k, d = payload["slot_shape"]
    dyn = SlotDynamicsModel(d, k, cfg)
    dyn.load_state_dict(payload["model"])
    grouping, _, _ = load_checkpoint(grouping_ckpt)
    bank = load_bank(bank_path)
    report = evaluate_dynamics(dyn, bank, grouping, dataset_from_source(data_path))
    _emit_report(report, report_file)


@main.command("visualize")
@click.option("--kind", type=click.Choice(["masks", "pca", "slot-sim", "slot-hist"]), required=True)
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--clip-index", type=int, default=0, show_default=True)
def visualize_cmd(kind, ckpt, data_path, out_dir, clip_index):
    """Emit diagnostic figures for a checkpoint on a dataset."""
    from . import visualize as viz
    from .harness import pixel_masks_for_slots, slots_for_clip

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, _, _ = load_checkpoint(ckpt)
    dataset = dataset_from_source(data_path)
    clip = dataset[clip_index]
    if kind == "masks":
        slots = slots_for_clip(model, clip)
        masks = pixel_masks_for_slots(model, slots, *clip.resolution)
        path = viz.mask_overlay_strip(clip, masks, out_dir / f"masks_{clip.clip_id}.png")
    elif kind == "pca":
        path = viz.pca_comparison(model, clip, out_dir / f"pca_{clip.clip_id}.png")
    elif kind == "slot-sim":
        path = viz.slot_similarity_heatmaps(model, clip, out_dir / f"slot_sim_{clip.clip_id}.png")
    else:
        report = evaluate(model, dataset, image_metrics=False)
        gt_counts = [int(dataset[i].num_objects) for i in range(len(dataset))]
        path = viz.active_slot_histogram(report, gt_counts, out_dir / "slot_hist.png")
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
