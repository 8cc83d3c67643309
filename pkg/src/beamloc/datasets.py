"""Reproducible synthetic datasets: scene files plus a ground-truth file.

All randomness flows from one seeded generator, so a (config, seed) pair
always produces byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluation import GroundTruth, save_ground_truth
from .providers import Scene, save_scene
from .tensors import PixelRect


@dataclass(frozen=True)
class DatasetConfig:
    count: int = 50
    class_count: int = 4
    channels: int = 32
    image_w: int = 60
    image_h: int = 60
    objects_min: int = 1
    objects_max: int = 1
    object_min_px: int = 12
    object_max_px: int = 30
    margin: int = 0
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not 1 <= self.objects_min <= self.objects_max:
            raise ValueError("objects range must satisfy 1 <= min <= max")
        if not 1 <= self.object_min_px <= self.object_max_px:
            raise ValueError("object size range must satisfy 1 <= min <= max")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.object_max_px + 2 * self.margin > min(self.image_w, self.image_h):
            raise ValueError("objects plus margins cannot exceed the image")


def generate_scene(cfg: DatasetConfig, rng: np.random.Generator, seed: int) -> Scene:
    n_objects = int(rng.integers(cfg.objects_min, cfg.objects_max + 1))
    objects = []
    for _ in range(n_objects):
        w = int(rng.integers(cfg.object_min_px, cfg.object_max_px + 1))
        h = int(rng.integers(cfg.object_min_px, cfg.object_max_px + 1))
        x = int(rng.integers(cfg.margin, cfg.image_w - cfg.margin - w + 1))
        y = int(rng.integers(cfg.margin, cfg.image_h - cfg.margin - h + 1))
        class_id = int(rng.integers(0, cfg.class_count))
        objects.append((class_id, PixelRect(x, y, w, h)))
    return Scene(
        image_w=cfg.image_w,
        image_h=cfg.image_h,
        class_count=cfg.class_count,
        channels=cfg.channels,
        objects=tuple(objects),
        noise_sigma=cfg.sigma,
        seed=seed,
    )


def generate_dataset(cfg: DatasetConfig) -> list[Scene]:
    rng = np.random.default_rng(cfg.seed)
    return [generate_scene(cfg, rng, seed=cfg.seed + 1 + i) for i in range(cfg.count)]


def ground_truth_of(scenes: dict[str, Scene]) -> GroundTruth:
    return GroundTruth(
        {name: [(c, r) for c, r in scene.objects] for name, scene in scenes.items()}
    )


def write_dataset(cfg: DatasetConfig, out_dir) -> tuple[dict[str, Path], Path]:
    """Write scene JSONs under ``out_dir``/scenes and the ground-truth JSONL.

    Returns (scene name -> path, ground-truth path). Scene names are the
    zero-padded file stems, used as image ids everywhere downstream.
    """
    out_dir = Path(out_dir)
    scene_dir = out_dir / "scenes"
    scene_dir.mkdir(parents=True, exist_ok=True)

    scenes = generate_dataset(cfg)
    paths: dict[str, Path] = {}
    named: dict[str, Scene] = {}
    for i, scene in enumerate(scenes):
        name = f"scene_{i:05d}"
        path = scene_dir / f"{name}.json"
        save_scene(scene, path)
        paths[name] = path
        named[name] = scene

    gt_path = out_dir / "ground_truth.jsonl"
    save_ground_truth(ground_truth_of(named), gt_path)
    return paths, gt_path


def load_dataset(root) -> tuple[dict[str, Path], Path]:
    """Locate the scene files and ground-truth file of a written dataset."""
    root = Path(root)
    scene_dir = root / "scenes"
    if not scene_dir.is_dir():
        raise FileNotFoundError(f"no scenes directory under {root}")
    paths = {p.stem: p for p in sorted(scene_dir.glob("*.json"))}
    gt_path = root / "ground_truth.jsonl"
    if not gt_path.is_file():
        raise FileNotFoundError(f"missing ground truth file {gt_path}")
    return paths, gt_path
