"""Feature extraction providers.

A provider answers "give me the activation tensor for this crop of this
image". The synthetic provider computes activations from scene geometry so
tests have an exact oracle: channel t (owned by class k) holds, per lattice
cell, the fraction of the cell covered by class-k objects. All overlap
areas are computed in integer units of (pixel / L) so the geometry is exact
regardless of crop alignment; optional clipped Gaussian noise is derived
functionally from (seed, crop), never from call order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import BoxBoundsError, DimensionError
from .scoring import softmax
from .tensors import FeatureMap, PixelRect
from .validation import check_nonnegative, check_positive_int


@runtime_checkable
class FeatureProvider(Protocol):
    """Deterministic (image_ref, crop) -> FeatureMap extraction contract."""

    grid_size: int
    channels: int

    def extract(self, image_ref, crop: PixelRect) -> FeatureMap: ...


def round_robin_owners(channels: int, class_count: int) -> tuple[int, ...]:
    """Default channel ownership: channel t belongs to class t mod K."""
    if channels < class_count:
        raise DimensionError(f"{channels} channels cannot cover {class_count} classes")
    return tuple(t % class_count for t in range(channels))


@dataclass(frozen=True)
class Scene:
    """Synthetic image: axis-aligned class-labelled rectangles plus noise."""

    image_w: int
    image_h: int
    class_count: int
    channels: int
    objects: tuple[tuple[int, PixelRect], ...]
    noise_sigma: float = 0.0
    seed: int = 0
    channel_owner: tuple[int, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        check_positive_int(self.image_w, "image_w")
        check_positive_int(self.image_h, "image_h")
        check_positive_int(self.class_count, "class_count")
        check_positive_int(self.channels, "channels")
        check_nonnegative(self.noise_sigma, "noise_sigma")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.channel_owner is None:
            object.__setattr__(
                self, "channel_owner", round_robin_owners(self.channels, self.class_count)
            )
        owners = set(self.channel_owner)
        if len(self.channel_owner) != self.channels or not owners <= set(range(self.class_count)):
            raise DimensionError("channel_owner must map every channel to a valid class")
        if owners != set(range(self.class_count)):
            raise DimensionError("every class must own at least one channel")
        bounds = PixelRect(0, 0, self.image_w, self.image_h)
        normalized = []
        for class_id, rect in self.objects:
            if not 0 <= class_id < self.class_count:
                raise ValueError(f"object class {class_id} out of range")
            if not bounds.contains_rect(rect):
                raise BoxBoundsError(f"object {rect.as_tuple()} outside the image")
            normalized.append((int(class_id), rect))
        object.__setattr__(self, "objects", tuple(normalized))

    @property
    def labels(self) -> set[int]:
        return {class_id for class_id, _ in self.objects}

    def to_json(self) -> str:
        payload = {
            "image_w": self.image_w,
            "image_h": self.image_h,
            "classes": self.class_count,
            "channels": self.channels,
            "sigma": self.noise_sigma,
            "seed": self.seed,
            "objects": [
                {"class_id": c, "x": r.x, "y": r.y, "w": r.w, "h": r.h}
                for c, r in self.objects
            ],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        payload = json.loads(text)
        return cls(
            image_w=payload["image_w"],
            image_h=payload["image_h"],
            class_count=payload["classes"],
            channels=payload["channels"],
            objects=tuple(
                (obj["class_id"], PixelRect(obj["x"], obj["y"], obj["w"], obj["h"]))
                for obj in payload["objects"]
            ),
            noise_sigma=payload.get("sigma", 0.0),
            seed=payload.get("seed", 0),
        )


def load_scene(path) -> Scene:
    return Scene.from_json(Path(path).read_text())


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(scene.to_json() + "\n")


def _class_cell_coverage(
    scene: Scene, crop: PixelRect, grid_size: int, class_id: int
) -> np.ndarray:
    """Fraction of each lattice cell covered by the union of class rects.

    Works in integer units of (pixel / grid_size): cell i on the x axis
    spans [crop.x * L + i * crop.w, crop.x * L + (i + 1) * crop.w], so all
    boundaries, including non-divisible crops, stay integers and the union
    area is exact.
    """
    L = grid_size
    x0, y0 = crop.x * L, crop.y * L
    clipped = []
    for obj_class, rect in scene.objects:
        if obj_class != class_id:
            continue
        lox = max(rect.x * L, x0)
        hix = min((rect.x + rect.w) * L, x0 + crop.w * L)
        loy = max(rect.y * L, y0)
        hiy = min((rect.y + rect.h) * L, y0 + crop.h * L)
        if lox < hix and loy < hiy:
            clipped.append((lox, loy, hix, hiy))

    if not clipped:
        return np.zeros((L, L), dtype=np.float64)

    cell_bounds_x = [x0 + i * crop.w for i in range(L + 1)]
    cell_bounds_y = [y0 + j * crop.h for j in range(L + 1)]
    xs = sorted({b for lox, _, hix, _ in clipped for b in (lox, hix)} | set(cell_bounds_x))
    ys = sorted({b for _, loy, _, hiy in clipped for b in (loy, hiy)} | set(cell_bounds_y))

    covered_units = np.zeros((L, L), dtype=np.int64)
    for ci in range(len(xs) - 1):
        ax, bx = xs[ci], xs[ci + 1]
        col = (ax - x0) // crop.w
        for cj in range(len(ys) - 1):
            ay, by = ys[cj], ys[cj + 1]
            if any(lox <= ax and bx <= hix and loy <= ay and by <= hiy
                   for lox, loy, hix, hiy in clipped):
                row = (ay - y0) // crop.h
                covered_units[row, col] += (bx - ax) * (by - ay)
    return covered_units / (crop.w * crop.h)


class SyntheticProvider:
    """Computes feature maps from scene geometry; the test-scale oracle."""

    def __init__(self, grid_size: int, channels: int, class_count: int):
        self.grid_size = check_positive_int(grid_size, "grid_size", minimum=2)
        self.channels = check_positive_int(channels, "channels")
        self.class_count = check_positive_int(class_count, "class_count")
        self._cache: dict[str, Scene] = {}

    def _resolve(self, image_ref) -> Scene:
        if isinstance(image_ref, Scene):
            scene = image_ref
        else:
            key = str(image_ref)
            if key not in self._cache:
                self._cache[key] = load_scene(key)
            scene = self._cache[key]
        if scene.channels != self.channels or scene.class_count != self.class_count:
            raise DimensionError(
                f"scene ({scene.class_count} classes, {scene.channels} channels) does not "
                f"match provider ({self.class_count}, {self.channels})"
            )
        return scene

    def image_size(self, image_ref) -> tuple[int, int]:
        scene = self._resolve(image_ref)
        return scene.image_w, scene.image_h

    def extract(self, image_ref, crop: PixelRect) -> FeatureMap:
        scene = self._resolve(image_ref)
        bounds = PixelRect(0, 0, scene.image_w, scene.image_h)
        if not bounds.contains_rect(crop):
            raise BoxBoundsError(f"crop {crop.as_tuple()} outside {scene.image_w}x{scene.image_h}")

        per_class = {
            class_id: _class_cell_coverage(scene, crop, self.grid_size, class_id)
            for class_id in range(scene.class_count)
        }
        values = np.empty((self.grid_size, self.grid_size, self.channels), dtype=np.float64)
        for t, owner in enumerate(scene.channel_owner):
            values[:, :, t] = per_class[owner]

        if scene.noise_sigma > 0:
            entropy = (scene.seed, crop.x, crop.y, crop.w, crop.h)
            rng = np.random.default_rng(np.random.SeedSequence(entropy))
            noise = rng.normal(0.0, scene.noise_sigma, size=values.shape)
            values += np.maximum(noise, 0.0)
        return FeatureMap(values)


class MeanActivationHead:
    """Scores a map by the beta-scaled mean activation of each class's channels.

    Built to pair with the synthetic provider: crops centered on a class's
    objects raise that class's channel means and therefore its score.
    """

    def __init__(
        self,
        class_count: int,
        channels: int,
        channel_owner: Sequence[int] | None = None,
        beta: float = 10.0,
    ):
        self.class_count = check_positive_int(class_count, "class_count")
        self.channels = check_positive_int(channels, "channels")
        owner = tuple(channel_owner) if channel_owner is not None else round_robin_owners(
            channels, class_count
        )
        if len(owner) != channels:
            raise DimensionError("channel_owner length must equal channels")
        self.channel_owner = owner
        self.beta = check_nonnegative(beta, "beta")
        self._class_channels = [
            np.array([t for t, o in enumerate(owner) if o == k], dtype=np.intp)
            for k in range(class_count)
        ]
        if any(len(chans) == 0 for chans in self._class_channels):
            raise DimensionError("every class must own at least one channel")

    @classmethod
    def for_scene(cls, scene: Scene, beta: float = 10.0) -> "MeanActivationHead":
        return cls(scene.class_count, scene.channels, scene.channel_owner, beta)

    def score(self, fmap: FeatureMap) -> np.ndarray:
        if fmap.channels != self.channels:
            raise DimensionError(
                f"feature map has {fmap.channels} channels, head expects {self.channels}"
            )
        logits = np.array(
            [self.beta * fmap.values[:, :, chans].mean() for chans in self._class_channels]
        )
        return softmax(logits)
