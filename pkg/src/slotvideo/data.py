"""Synthetic moving-sprite videos with exact instance masks and occlusions.

Sprites (circles, squares, triangles) move with constant velocity and bounce
off the frame borders. Depth order is fixed per clip: a later object index
always occludes an earlier one, so ground truth is rendered back-to-front
with the painter's algorithm and per-object visibility is counted from the
rendered id map. A clip can additionally contain a forced occlusion event:
two sprites are aimed at a shared waypoint so that the later-indexed, larger
sprite fully covers the earlier one for at least one frame.

Each clip is one container file (see ``container``) holding frames (uint8,
decoded to floats in [0, 1]), the id map, and the visibility table. A
dataset is a manifest file listing clip paths relative to its directory.
All randomness derives from (seed, clip index), so generating the same
config twice yields byte-identical files and distinct clips may be generated
in parallel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import yaml

from .config import config_from_dict, config_hash, config_to_dict
from .container import load_arrays, save_arrays
from .core import VideoClip

MANIFEST_NAME = "manifest.yaml"
# Reference occlusion-visibility floor: 400 px at 336x336, scaled by pixel count.
OCCLUSION_MIN_PIXELS_REF = 400
OCCLUSION_REF_RESOLUTION = 336


@dataclass(frozen=True)
class SpriteSceneConfig:
    """Knobs of the sprite scene generator."""

    num_objects_min: int = 3
    num_objects_max: int = 5
    shapes: tuple[str, ...] = ("circle", "square", "triangle")
    size_min: int = 10  # sprite diameter, pixels
    size_max: int = 16
    speed_min: float = 1.5  # pixels per frame
    speed_max: float = 3.0
    num_frames: int = 12
    height: int = 48
    width: int = 48
    background: str = "flat"  # flat | noise
    occlusion_prob: float = 0.5
    palette_size: int = 10
    patch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.num_objects_min < 1:
            raise ValueError("num_objects_min must be >= 1")
        if self.num_frames < 2:
            raise ValueError("num_frames must be >= 2")
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ValueError("resolution must be divisible by patch_size")
        if self.background not in ("flat", "noise"):
            raise ValueError(f"unknown background mode: {self.background}")
        for s in self.shapes:
            if s not in ("circle", "square", "triangle"):
                raise ValueError(f"unknown shape: {s}")
        if self.size_max + 4 > min(self.height, self.width):
            raise ValueError("objects larger than frame: infeasible config")


@dataclass(frozen=True)
class DatasetManifest:
    """Index of a generated split: clip files relative to the manifest dir."""

    root: Path
    split: str
    config_hash: str
    clip_paths: tuple[str, ...]
    occluded_objects: dict | None = None  # clip_id -> list of qualifying ids

    @property
    def count(self) -> int:
        return len(self.clip_paths)


def default_palette(size: int) -> np.ndarray:
    """Evenly hue-spaced saturated colors as uint8 RGB."""
    import colorsys

    colors = []
    for i in range(size):
        r, g, b = colorsys.hsv_to_rgb(i / size, 0.9, 1.0)
        colors.append([round(r * 255), round(g * 255), round(b * 255)])
    return np.asarray(colors, dtype=np.uint8)


_FLAT_BACKGROUND = np.array([40, 40, 40], dtype=np.uint8)


def _outer_radius(shape: str, r: float) -> float:
    return r * math.sqrt(2.0) if shape == "square" else r


def _shape_mask(shape: str, cy: float, cx: float, r: float, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    dy, dx = yy - cy, xx - cx
    if shape == "circle":
        return dy * dy + dx * dx <= r * r
    if shape == "square":
        return np.maximum(np.abs(dy), np.abs(dx)) <= r
    # upward triangle with circumradius r
    ay, ax = -r, 0.0
    by, bx = r / 2.0, -r * math.sqrt(3.0) / 2.0
    cy2, cx2 = r / 2.0, r * math.sqrt(3.0) / 2.0

    def side(py, px, qy, qx):
        return (qx - px) * (dy - py) - (qy - py) * (dx - px)

    s1 = side(ay, ax, by, bx)
    s2 = side(by, bx, cy2, cx2)
    s3 = side(cy2, cx2, ay, ax)
    # interior points have consistently signed edge cross products
    return ((s1 >= 0) & (s2 >= 0) & (s3 >= 0)) | ((s1 <= 0) & (s2 <= 0) & (s3 <= 0))


def _simulate_bounce(p0: np.ndarray, v: np.ndarray, lo: np.ndarray, hi: np.ndarray, steps: int) -> np.ndarray:
    """Centers over time with reflection at per-axis bounds [lo, hi]."""
    pos = p0.astype(np.float64).copy()
    vel = v.astype(np.float64).copy()
    out = [pos.copy()]
    for _ in range(steps - 1):
        pos = pos + vel
        for axis in range(2):
            if pos[axis] < lo[axis]:
                pos[axis] = 2 * lo[axis] - pos[axis]
                vel[axis] = -vel[axis]
            elif pos[axis] > hi[axis]:
                pos[axis] = 2 * hi[axis] - pos[axis]
                vel[axis] = -vel[axis]
        out.append(pos.copy())
    return np.stack(out)


def _sample_forced_pair(rng, cfg: SpriteSceneConfig, radii, shapes, idx_a: int, idx_b: int):
    """Aim objects a and b (b occludes a) at a shared waypoint.

    Start positions are sampled on opposite sides of the waypoint and
    velocities derived from the crossing frame, so the paths are linear and
    meet exactly; the crossing happens in the first half of the clip, which
    guarantees at least as much post-crossing separation as pre-crossing.
    Returns (p0_a, v_a, p0_b, v_b, r_b, shape_b), or None if no valid
    placement was found.
    """
    t_total = cfg.num_frames
    r_a = radii[idx_a]
    r_b = max(radii[idx_b], math.ceil(_outer_radius(shapes[idx_a], r_a)) + 2.0)
    shape_b = ("circle", "square")[rng.integers(0, 2)]
    t_lo = max(1, t_total // 3)
    t_hi = max(t_lo, (t_total - 1) // 2)

    for _ in range(500):
        t_star = int(rng.integers(t_lo, t_hi + 1))
        way = np.array(
            [
                rng.uniform(r_b + 1, cfg.height - 2 - r_b),
                rng.uniform(r_b + 1, cfg.width - 2 - r_b),
            ]
        )
        phi = rng.uniform(0, 2 * math.pi)
        jitter = rng.uniform(-math.pi / 6, math.pi / 6)
        placed = []
        for r, angle in ((r_a, phi), (r_b, phi + math.pi + jitter)):
            dist = rng.uniform(cfg.speed_min * t_star, cfg.speed_max * t_star)
            p0 = way + dist * np.array([math.sin(angle), math.cos(angle)])
            lo = np.array([r, r])
            hi = np.array([cfg.height - 1 - r, cfg.width - 1 - r])
            if (p0 < lo).any() or (p0 > hi).any():
                placed = None
                break
            placed.append((p0, (way - p0) / t_star))
        if placed is None:
            continue
        if np.linalg.norm(placed[0][0] - placed[1][0]) < r_a + r_b + 2:
            continue
        return placed[0][0], placed[0][1], placed[1][0], placed[1][1], r_b, shape_b
    return None


def generate_clip(cfg: SpriteSceneConfig, clip_index: int, clip_id: str) -> VideoClip:
    """Render one clip; all randomness derives from (cfg.seed, clip_index)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, clip_index])))
    h, w, t_total = cfg.height, cfg.width, cfg.num_frames
    yy, xx = np.mgrid[0:h, 0:w]

    n_obj = int(rng.integers(cfg.num_objects_min, cfg.num_objects_max + 1))
    palette = default_palette(cfg.palette_size)
    color_idx = rng.choice(cfg.palette_size, size=min(n_obj, cfg.palette_size), replace=False)
    if n_obj > cfg.palette_size:
        extra = rng.choice(cfg.palette_size, size=n_obj - cfg.palette_size, replace=True)
        color_idx = np.concatenate([color_idx, extra])
    colors = palette[color_idx]

    shapes = [cfg.shapes[rng.integers(0, len(cfg.shapes))] for _ in range(n_obj)]
    radii = [float(rng.integers(cfg.size_min, cfg.size_max + 1)) / 2.0 for _ in range(n_obj)]
    speeds = rng.uniform(cfg.speed_min, cfg.speed_max, size=n_obj)
    angles = rng.uniform(0, 2 * math.pi, size=n_obj)
    velocities = [s * np.array([math.sin(a), math.cos(a)]) for s, a in zip(speeds, angles)]
    starts = [
        np.array([rng.uniform(r, h - 1 - r), rng.uniform(r, w - 1 - r)]) for r in radii
    ]

    if n_obj >= 2 and rng.random() < cfg.occlusion_prob:
        idx_a = int(rng.integers(0, n_obj - 1))
        idx_b = int(rng.integers(idx_a + 1, n_obj))
        if shapes[idx_a] == "square":
            shapes[idx_a] = "circle"  # keeps the occluder size (and re-cover churn) small
        forced = _sample_forced_pair(rng, cfg, radii, shapes, idx_a, idx_b)
        if forced is not None:
            starts[idx_a], velocities[idx_a], starts[idx_b], velocities[idx_b], radii[idx_b], shapes[idx_b] = forced

    tracks = []
    for i in range(n_obj):
        r = radii[i]
        lo = np.array([r, r])
        hi = np.array([h - 1 - r, w - 1 - r])
        start = np.clip(starts[i], lo, hi)
        tracks.append(_simulate_bounce(start, velocities[i], lo, hi, t_total))

    if cfg.background == "flat":
        bg = np.broadcast_to(_FLAT_BACKGROUND, (h, w, 3)).copy()
    else:
        bg = rng.integers(0, 128, size=(h, w, 3)).astype(np.uint8)

    frames = np.empty((t_total, h, w, 3), dtype=np.uint8)
    gt = np.zeros((t_total, h, w), dtype=np.uint8)
    for t in range(t_total):
        frame = bg.copy()
        ids = np.zeros((h, w), dtype=np.uint8)
        for i in range(n_obj):  # ascending index: later objects overwrite
            mask = _shape_mask(shapes[i], tracks[i][t, 0], tracks[i][t, 1], radii[i], yy, xx)
            frame[mask] = colors[i]
            ids[mask] = i + 1
        frames[t] = frame
        gt[t] = ids

    visibility = np.stack(
        [np.bincount(gt[t].ravel(), minlength=n_obj + 1)[1 : n_obj + 1] for t in range(t_total)]
    ).astype(np.int32)
    return VideoClip(
        frames=frames.astype(np.float32) / 255.0,
        gt_masks=gt.astype(np.int32),
        visibility=visibility,
        clip_id=clip_id,
    )


def save_clip(path, clip: VideoClip) -> None:
    frames_u8 = np.round(clip.frames * 255.0).astype(np.uint8)
    save_arrays(
        path,
        {
            "frames": frames_u8,
            "gt_masks": clip.gt_masks.astype(np.uint8 if clip.num_objects < 256 else np.int32),
            "visibility": clip.visibility.astype(np.int32),
        },
        meta={"clip_id": clip.clip_id, "kind": "video_clip", "version": 1},
    )


def load_clip(path) -> VideoClip:
    arrays, meta = load_arrays(path)
    return VideoClip(
        frames=arrays["frames"].astype(np.float32) / 255.0,
        gt_masks=arrays["gt_masks"].astype(np.int32),
        visibility=arrays["visibility"].astype(np.int32),
        clip_id=meta.get("clip_id", Path(path).stem),
    )


class ClipDataset(Sequence):
    """Lazy, indexable collection of clips (from files or in memory)."""

    def __init__(self, loaders, clip_ids):
        self._loaders = list(loaders)
        self.clip_ids = list(clip_ids)

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest) -> "ClipDataset":
        paths = [manifest.root / rel for rel in manifest.clip_paths]
        for p in paths:
            if not p.exists():
                raise FileNotFoundError(f"manifest lists missing clip file: {p}")
        return cls(
            [lambda p=p: load_clip(p) for p in paths],
            [Path(rel).stem for rel in manifest.clip_paths],
        )

    @classmethod
    def from_clips(cls, clips) -> "ClipDataset":
        clips = list(clips)
        return cls([lambda c=c: c for c in clips], [c.clip_id for c in clips])

    def __len__(self) -> int:
        return len(self._loaders)

    def __getitem__(self, index: int) -> VideoClip:
        return self._loaders[index]()


def save_manifest(manifest: DatasetManifest, path=None) -> Path:
    path = Path(path) if path is not None else manifest.root / MANIFEST_NAME
    payload = {
        "split": manifest.split,
        "config_hash": manifest.config_hash,
        "count": manifest.count,
        "clips": list(manifest.clip_paths),
    }
    if manifest.occluded_objects is not None:
        payload["occluded_objects"] = {k: list(v) for k, v in manifest.occluded_objects.items()}
    with open(path, "w") as fh:
        yaml.safe_dump(payload, fh, sort_keys=True)
    return path


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    with open(path) as fh:
        payload = yaml.safe_load(fh)
    return DatasetManifest(
        root=path.parent,
        split=payload["split"],
        config_hash=payload["config_hash"],
        clip_paths=tuple(payload["clips"]),
        occluded_objects=payload.get("occluded_objects"),
    )


def generate_dataset(cfg: SpriteSceneConfig, n_clips: int, out_dir, split: str = "train") -> DatasetManifest:
    """Render n_clips to out_dir and write a manifest.

    Deterministic given (cfg, split): clip randomness is keyed by index, and
    the split name only selects the filename prefix.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rel_paths = []
    for i in range(n_clips):
        clip_id = f"{split}_{i:06d}"
        clip = generate_clip(cfg, i, clip_id)
        rel = f"{clip_id}.npz"
        save_clip(out_dir / rel, clip)
        rel_paths.append(rel)
    manifest = DatasetManifest(
        root=out_dir,
        split=split,
        config_hash=config_hash(cfg),
        clip_paths=tuple(rel_paths),
    )
    save_manifest(manifest)
    return manifest


def load_dataset(manifest_path) -> ClipDataset:
    return ClipDataset.from_manifest(load_manifest(manifest_path))


@dataclass(frozen=True)
class SegmentBatch:
    """A batch of frame windows: frames [B, L, H, W, C] plus provenance."""

    frames: np.ndarray
    clip_ids: tuple[str, ...]
    starts: tuple[int, ...]


def batch_segments(
    dataset: Sequence, segment_len: int, batch_size: int, seed: int
) -> Iterator[SegmentBatch]:
    """One epoch of segment batches: a random window from each clip, shuffled.

    Windows are segment_len consecutive frames; trailing clips that do not
    fill a batch are dropped. Deterministic given seed.
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    buffer_frames, buffer_ids, buffer_starts = [], [], []
    for idx in order:
        clip = dataset[int(idx)]
        t = clip.num_frames
        if segment_len > t:
            raise ValueError(f"segment_len {segment_len} exceeds clip length {t} ({clip.clip_id})")
        start = int(rng.integers(0, t - segment_len + 1))
        buffer_frames.append(clip.frames[start : start + segment_len])
        buffer_ids.append(clip.clip_id)
        buffer_starts.append(start)
        if len(buffer_frames) == batch_size:
            yield SegmentBatch(
                frames=np.stack(buffer_frames).astype(np.float32),
                clip_ids=tuple(buffer_ids),
                starts=tuple(buffer_starts),
            )
            buffer_frames, buffer_ids, buffer_starts = [], [], []


def occlusion_min_pixels(height: int, width: int) -> int:
    """Visibility floor for the occluded-subset protocol, scaled by area."""
    scale = (height * width) / float(OCCLUSION_REF_RESOLUTION**2)
    return max(1, round(OCCLUSION_MIN_PIXELS_REF * scale))


def _qualifying_objects(visibility: np.ndarray, n_min: int) -> list[int]:
    """Objects visible (>= n_min), then fully occluded (0), then visible again."""
    ids = []
    for m in range(visibility.shape[1]):
        trace = visibility[:, m]
        state = 0  # 0: waiting for visible, 1: waiting for zero, 2: waiting for re-visible
        for v in trace:
            if state == 0 and v >= n_min:
                state = 1
            elif state == 1 and v == 0:
                state = 2
            elif state == 2 and v >= n_min:
                state = 3
                break
        if state == 3:
            ids.append(m + 1)
    return ids


def select_occluded_subset(
    manifest: DatasetManifest, dataset: Sequence | None = None, n_min: int | None = None
) -> DatasetManifest:
    """Restrict a manifest to clips with a full occlusion-and-reappearance event.

    A clip qualifies if some object reaches visibility >= n_min, later drops
    to exactly 0, and later again reaches >= n_min. The returned manifest
    carries the qualifying object ids per clip; evaluation keeps only those
    objects' ground-truth masks.
    """
    dataset = dataset if dataset is not None else ClipDataset.from_manifest(manifest)
    kept_paths, kept_objects = [], {}
    for rel, idx in sorted(zip(manifest.clip_paths, range(len(dataset)))):
        clip = dataset[idx]
        floor = n_min if n_min is not None else occlusion_min_pixels(*clip.resolution)
        ids = _qualifying_objects(clip.visibility, floor)
        if ids:
            kept_paths.append(rel)
            kept_objects[clip.clip_id] = ids
    return DatasetManifest(
        root=manifest.root,
        split=manifest.split,
        config_hash=manifest.config_hash,
        clip_paths=tuple(kept_paths),
        occluded_objects=kept_objects,
    )
