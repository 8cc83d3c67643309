"""Feature-map tensors, grid/pixel geometry, and the FMAP1 exchange format.

A feature map is the L x L x T activation block produced for one image
region. Localization candidates are integer sub-boxes of the L x L lattice;
``truncate_and_resize`` rebuilds a full-size map from such a sub-box so a
classifier head can score it, and ``backproject`` maps the sub-box to a
pixel rectangle of the region it was taken from.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BoxBoundsError, DimensionError
from .validation import check_feature_values

FMAP1_MAGIC = b"FMAP"
FMAP1_VERSION = 1
_FMAP1_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class GridBox:
    """Integer box [x, y, w, h] on an L x L cell lattice."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for field in ("x", "y", "w", "h"):
            value = getattr(self, field)
            if value != int(value):
                raise BoxBoundsError(f"grid box {field} must be an integer, got {value!r}")
            object.__setattr__(self, field, int(value))
        if self.w < 1 or self.h < 1 or self.x < 0 or self.y < 0:
            raise BoxBoundsError(f"degenerate grid box {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)

    def validate_within(self, grid_size: int) -> "GridBox":
        if self.x + self.w > grid_size or self.y + self.h > grid_size:
            raise BoxBoundsError(f"grid box {self.as_tuple()} exceeds a {grid_size}x{grid_size} grid")
        return self

    def is_full(self, grid_size: int) -> bool:
        return self.as_tuple() == (0, 0, grid_size, grid_size)


@dataclass(frozen=True)
class PixelRect:
    """Integer pixel rectangle [x, y, w, h), half-open on both axes."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise BoxBoundsError(f"degenerate pixel rect {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)

    @property
    def area(self) -> int:
        return self.w * self.h

    def contains_rect(self, other: "PixelRect") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.x + other.w <= self.x + self.w
            and other.y + other.h <= self.y + self.h
        )


class FeatureMap:
    """Immutable L x L x T activation tensor, indexed (row, col, channel)."""

    __slots__ = ("values", "grid_size", "channels")

    def __init__(self, values):
        arr = check_feature_values(values, "feature map")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "grid_size", arr.shape[0])
        object.__setattr__(self, "channels", arr.shape[2])

    def __setattr__(self, name, value):
        raise AttributeError("FeatureMap is immutable")

    def __eq__(self, other):
        return isinstance(other, FeatureMap) and np.array_equal(self.values, other.values)

    def flatten(self) -> np.ndarray:
        """Row-major (row, col, channel) flattening, the FMAP1 value order."""
        return self.values.reshape(-1)


def _axis_samples(extent: int, grid_size: int):
    """Corner-aligned sample positions for resizing ``extent`` cells to ``grid_size``.

    Target index a maps to source offset a * (extent - 1) / (grid_size - 1);
    an extent of 1 pins every sample to offset 0 (constant axis).
    """
    if extent == 1:
        zeros = np.zeros(grid_size, dtype=np.intp)
        return zeros, zeros, np.zeros(grid_size)
    pos = np.arange(grid_size) * (extent - 1) / (grid_size - 1)
    lo = np.minimum(np.floor(pos).astype(np.intp), extent - 1)
    frac = pos - lo
    hi = np.minimum(lo + 1, extent - 1)
    return lo, hi, frac


def truncate_and_resize(fmap: FeatureMap, box: GridBox) -> FeatureMap:
    """Resample the activations under ``box`` back to the full grid.

    Each channel is treated independently: the w x h sub-block at
    (box.x, box.y) is bilinearly interpolated onto the L x L lattice with
    corner-aligned sampling, so the full-grid box is an exact identity and
    constant sub-blocks stay constant.
    """
    box.validate_within(fmap.grid_size)
    if box.is_full(fmap.grid_size):
        return fmap

    sub = fmap.values[box.y : box.y + box.h, box.x : box.x + box.w, :]
    x_lo, x_hi, fx = _axis_samples(box.w, fmap.grid_size)
    y_lo, y_hi, fy = _axis_samples(box.h, fmap.grid_size)

    wx = fx[np.newaxis, :, np.newaxis]
    wy = fy[:, np.newaxis, np.newaxis]
    top = (1.0 - wx) * sub[np.ix_(y_lo, x_lo)] + wx * sub[np.ix_(y_lo, x_hi)]
    bottom = (1.0 - wx) * sub[np.ix_(y_hi, x_lo)] + wx * sub[np.ix_(y_hi, x_hi)]
    return FeatureMap((1.0 - wy) * top + wy * bottom)


def _div_floor(num: int, den: int) -> int:
    return num // den


def _div_round_half_up(num: int, den: int) -> int:
    return (2 * num + den) // (2 * den)


def backproject(box: GridBox, grid_size: int, image_w: int, image_h: int) -> PixelRect:
    """Map a grid box to the pixel rectangle it covers in a W x H image.

    Origins use floor, extents round half-up, and the result is clamped to
    the image; the full-grid box always maps to the full image. All
    arithmetic is integer-exact.
    """
    if grid_size < 2:
        raise DimensionError(f"grid size must be >= 2, got {grid_size}")
    box.validate_within(grid_size)
    if image_w < 1 or image_h < 1:
        raise ValueError(f"image dimensions must be >= 1, got {image_w}x{image_h}")

    x = _div_floor(box.x * image_w, grid_size)
    y = _div_floor(box.y * image_h, grid_size)
    w = max(1, _div_round_half_up(box.w * image_w, grid_size))
    h = max(1, _div_round_half_up(box.h * image_h, grid_size))
    w = min(w, image_w - x)
    h = min(h, image_h - y)
    return PixelRect(x, y, w, h)


def compose_rect(parent: PixelRect, local: PixelRect) -> PixelRect:
    """Place a rect expressed in a parent crop's frame into absolute pixels."""
    return PixelRect(parent.x + local.x, parent.y + local.y, local.w, local.h)


def write_fmap1(fmap: FeatureMap) -> bytes:
    """Serialize to FMAP1: 16-byte header then float32 LE values.

    Header fields are magic ``FMAP``, version, L, and T as little-endian
    u32; values follow in (row, col, channel) order.
    """
    header = _FMAP1_HEADER.pack(FMAP1_MAGIC, FMAP1_VERSION, fmap.grid_size, fmap.channels)
    return header + fmap.values.astype("<f4").tobytes(order="C")


def read_fmap1(blob: bytes) -> FeatureMap:
    """Parse an FMAP1 blob produced by ``write_fmap1`` or a bridge worker."""
    if len(blob) < _FMAP1_HEADER.size:
        raise DimensionError(f"FMAP1 blob truncated at {len(blob)} bytes")
    magic, version, grid_size, channels = _FMAP1_HEADER.unpack_from(blob)
    if magic != FMAP1_MAGIC:
        raise DimensionError(f"bad FMAP1 magic {magic!r}")
    if version != FMAP1_VERSION:
        raise DimensionError(f"unsupported FMAP1 version {version}")
    expected = _FMAP1_HEADER.size + grid_size * grid_size * channels * 4
    if len(blob) != expected:
        raise DimensionError(f"FMAP1 payload is {len(blob)} bytes, expected {expected}")
    values = np.frombuffer(blob, dtype="<f4", offset=_FMAP1_HEADER.size)
    return FeatureMap(values.astype(np.float64).reshape(grid_size, grid_size, channels))


def save_fmap1(fmap: FeatureMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_fmap1(fmap))


def load_fmap1(path) -> FeatureMap:
    with open(path, "rb") as fh:
        return read_fmap1(fh.read())
