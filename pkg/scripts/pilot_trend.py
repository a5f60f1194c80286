"""Pilot run: check the loss-ablation trend at desk scale before pinning acceptance."""
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import torch

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from slotvideo.config import ModelConfig, TrainConfig
from slotvideo.data import ClipDataset, SpriteSceneConfig, generate_dataset, load_dataset, select_occluded_subset
from slotvideo.harness import evaluate, train

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("/tmp/pilot")
N_TRAIN = int(sys.argv[2]) if len(sys.argv) > 2 else 400
N_VAL = int(sys.argv[3]) if len(sys.argv) > 3 else 60
STEPS = int(sys.argv[4]) if len(sys.argv) > 4 else 2500
SEEDS = [int(s) for s in sys.argv[5].split(",")] if len(sys.argv) > 5 else [0]

SCENE = SpriteSceneConfig(
    num_frames=12, height=48, width=48, size_min=10, size_max=16,
    num_objects_min=3, num_objects_max=5, occlusion_prob=1.0, seed=100,
)
MODEL = ModelConfig(
    num_slots=6, slot_dim=64, feature_dim=48, image_size=48, patch_size=8,
    decoder_hidden=192, decoder_layers=3, precision="float32",
)
BASE = TrainConfig(
    steps=STEPS, batch_size=16, segment_length=4, peak_lr=4e-4,
    warmup_steps=300, decay_steps=STEPS, eval_every=max(500, STEPS // 5), eval_clips=40,
)

VARIANTS = {
    "rec": dict(contrast_weight=0.0),
    "intra": dict(contrast_mode="intra"),
    "ssc": dict(),
}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    data_dir = OUT / "data"
    if not (data_dir / "train" / "manifest.yaml").exists():
        print("generating data...", flush=True)
        generate_dataset(SCENE, N_TRAIN, data_dir / "train", split="train")
        generate_dataset(replace(SCENE, seed=SCENE.seed + 1), N_VAL, data_dir / "val", split="val")
    train_set = load_dataset(data_dir / "train" / "manifest.yaml")
    val_set = load_dataset(data_dir / "val" / "manifest.yaml")

    from slotvideo.data import load_manifest

    val_manifest = load_manifest(data_dir / "val" / "manifest.yaml")
    occluded = select_occluded_subset(val_manifest)
    occluded_set = ClipDataset.from_manifest(occluded)
    print(f"occluded subset: {occluded.count}/{val_manifest.count} clips", flush=True)

    results = {}
    for seed in SEEDS:
        for name, overrides in VARIANTS.items():
            key = f"{name}_s{seed}"
            run_dir = OUT / key
            result_file = run_dir / "result.json"
            if result_file.exists():
                results[key] = json.loads(result_file.read_text())
                print(f"{key}: cached {results[key]}", flush=True)
                continue
            cfg = replace(BASE, seed=seed, **overrides)
            t0 = time.time()
            res = train(MODEL, cfg, train_set, run_dir, val_data=val_set)
            report = evaluate(res.model, val_set, image_metrics=True)
            occ_report = evaluate(
                res.model, occluded_set, image_metrics=False, keep_objects=occluded.occluded_objects
            )
            init_slots = res.model.slot_init(1)[0].detach().numpy()
            import numpy as np

            norms = np.linalg.norm(init_slots, axis=1, keepdims=True)
            sim = (init_slots / norms) @ (init_slots / norms).T
            k = sim.shape[0]
            offdiag = float((sim.sum() - np.trace(sim)) / (k * (k - 1)))
            entry = {
                "video_fg_ari": report.video_fg_ari,
                "image_fg_ari": report.image_fg_ari,
                "video_mbo": report.video_mbo,
                "occluded_mbo": occ_report.video_mbo,
                "occluded_fg_ari": occ_report.video_fg_ari,
                "mean_active_slots": report.mean_active_slots,
                "init_offdiag_cosine": offdiag,
                "final_rec": res.runlog.rec[-1],
                "minutes": round((time.time() - t0) / 60, 1),
            }
            result_file.write_text(json.dumps(entry))
            results[key] = entry
            print(f"{key}: {json.dumps(entry)}", flush=True)

    print("\nSUMMARY")
    for key, entry in sorted(results.items()):
        print(
            f"  {key:12s} vFG-ARI={entry['video_fg_ari']:.3f} iFG-ARI={entry['image_fg_ari']:.3f} "
            f"mBO={entry['video_mbo']:.3f} occ-mBO={entry['occluded_mbo']:.3f} "
            f"active={entry['mean_active_slots']:.2f} offdiag={entry['init_offdiag_cosine']:.3f}"
        )


if __name__ == "__main__":
    torch.set_num_threads(2)
    main()
