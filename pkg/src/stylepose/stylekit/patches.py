"""Crop / scale / patch training data pipeline.

Per training example: crop both images of a weak pair with the same
expanded box derived from the synthetic mask, rescale each crop
independently to a random size on the longest axis, and cut one 64x64
patch at an independent uniform position per image. There is no flip
augmentation anywhere, which every emitted PatchProvenance can prove:
replaying its recorded draws reproduces the patch exactly, so each patch
is an axis-aligned crop of a scaled crop of the source image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..boxes import BBox2D, bbox_from_mask, crop, expand_bbox, round_half_up
from ..imgio import resize_bilinear


@dataclass(frozen=True)
class PatchSpec:
    expand_factor: float = 1.2
    scale_range: tuple = (170, 512)  # longest side after rescale, inclusive
    patch_size: int = 64

    def __post_init__(self):
        lo, hi = self.scale_range
        if not (isinstance(lo, int) and isinstance(hi, int) and 1 <= lo <= hi):
            raise ValueError(f"bad scale range {self.scale_range}")
        if self.expand_factor < 1.0:
            raise ValueError("expand_factor must be >= 1")
        if not (1 <= self.patch_size <= lo):
            # A patch larger than the smallest scale would force padding on
            # every draw; treat it as a misconfiguration.
            raise ValueError(
                f"patch_size {self.patch_size} exceeds min scale bound {lo}"
            )


def instance_crop_box(mask: np.ndarray, expand_factor: float, bounds) -> BBox2D:
    """Expanded crop box shared by both images of a weak pair."""
    return expand_bbox(bbox_from_mask(mask), expand_factor, bounds)


def crop_instance_region(image: np.ndarray, mask, expand_factor: float = 1.2) -> np.ndarray:
    """Crop the image at the expanded bounding box of the (synthetic) mask.

    The mask decides the box; callers crop the real image with the very
    same box to stay pixel-aligned across the pair.
    """
    mask = getattr(mask, "mask", mask)
    if mask.shape != image.shape[:2]:
        raise ValueError(f"mask {mask.shape} does not match image {image.shape[:2]}")
    box = instance_crop_box(mask, expand_factor, (image.shape[1], image.shape[0]))
    return crop(image, box)


def draw_scale(rng, spec: PatchSpec) -> int:
    lo, hi = spec.scale_range
    return int(rng.integers(lo, hi + 1))


def scale_to(image: np.ndarray, longest: int) -> np.ndarray:
    """Bilinear rescale so the longest side equals `longest`, aspect kept
    (short side rounded half-up, floor 1 pixel)."""
    h, w = image.shape[:2]
    if w >= h:
        out_w = longest
        out_h = max(1, round_half_up(h * longest / w))
    else:
        out_h = longest
        out_w = max(1, round_half_up(w * longest / h))
    return resize_bilinear(image, out_h, out_w)


def random_scale(cropped: np.ndarray, rng, spec: PatchSpec = PatchSpec()) -> np.ndarray:
    return scale_to(cropped, draw_scale(rng, spec))


def pad_to_min(image: np.ndarray, size: int) -> np.ndarray:
    """Edge-replicate so both sides are at least `size` (centered padding);
    replication adds no colors that were not in the image."""
    h, w = image.shape[:2]
    dy, dx = max(0, size - h), max(0, size - w)
    if dy == 0 and dx == 0:
        return image
    pad = [(dy // 2, dy - dy // 2), (dx // 2, dx - dx // 2)]
    if image.ndim == 3:
        pad.append((0, 0))
    return np.pad(image, pad, mode="edge")


def draw_patch_pos(rng, shape, spec: PatchSpec) -> tuple:
    h, w = shape[:2]
    p = spec.patch_size
    if h < p or w < p:
        raise ValueError(f"image {h}x{w} smaller than patch {p}; pad first")
    return int(rng.integers(0, h - p + 1)), int(rng.integers(0, w - p + 1))


def patch_at(image: np.ndarray, pos: tuple, size: int) -> np.ndarray:
    y, x = pos
    return image[y:y + size, x:x + size]


def sample_patch(scaled: np.ndarray, rng, spec: PatchSpec = PatchSpec()) -> np.ndarray:
    padded = pad_to_min(scaled, spec.patch_size)
    return patch_at(padded, draw_patch_pos(rng, padded.shape, spec), spec.patch_size)


@dataclass(frozen=True)
class PatchProvenance:
    """Every random draw behind one emitted patch, sufficient to replay it."""

    box: BBox2D  # expanded crop box in source-image coordinates
    scale: int  # longest-side draw
    scaled_shape: tuple  # (h, w) after rescale
    pos: tuple  # (y, x) top-left inside the padded scaled crop


def extract_patch(image: np.ndarray, box: BBox2D, rng, spec: PatchSpec = PatchSpec()):
    """Crop at `box`, rescale by a fresh draw, cut one patch.

    Returns (patch, PatchProvenance). Draw order is fixed: scale, then
    position; replay_patch() reproduces the result bit-exactly.
    """
    cropped = crop(image, box)
    s = draw_scale(rng, spec)
    scaled = scale_to(cropped, s)
    padded = pad_to_min(scaled, spec.patch_size)
    pos = draw_patch_pos(rng, padded.shape, spec)
    patch = patch_at(padded, pos, spec.patch_size)
    prov = PatchProvenance(box=box, scale=s, scaled_shape=scaled.shape[:2], pos=pos)
    return patch, prov


def replay_patch(image: np.ndarray, prov: PatchProvenance,
                 spec: PatchSpec = PatchSpec()) -> np.ndarray:
    """Recompute a patch from its provenance with no randomness. Used to
    prove the pipeline emits only axis-aligned crops (no flips)."""
    scaled = scale_to(crop(image, prov.box), prov.scale)
    if scaled.shape[:2] != tuple(prov.scaled_shape):
        raise ValueError("provenance does not match this image")
    return patch_at(pad_to_min(scaled, spec.patch_size), prov.pos, spec.patch_size)


@dataclass(frozen=True)
class PatchBatch:
    """One training batch: synthetic patches x, real patches y."""

    x: np.ndarray  # (B, S, S, 3) float32 in [0,1]
    y: np.ndarray

    def __post_init__(self):
        if self.x.shape != self.y.shape:
            raise ValueError(f"batch halves differ: {self.x.shape} vs {self.y.shape}")
        for name, arr in (("x", self.x), ("y", self.y)):
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError(f"{name} values outside [0,1]")
