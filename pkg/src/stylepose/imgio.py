"""Image file I/O and the one resize filter used everywhere.

Images travel as float32 RGB in [0,1] inside the pipeline and as 8-bit PNG
on disk. Masks are single-channel PNGs with 0 = background, 255 = instance.
Instance-id maps are 16-bit PNGs; depth is stored as 16-bit binary PGM in
millimeters.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

DEPTH_PGM_SCALE = 1000.0  # meters -> millimeters


def quantize(image: np.ndarray) -> np.ndarray:
    """float [0,1] -> uint8, round-half-away, the single quantizer used on save."""
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def to_float(image: np.ndarray) -> np.ndarray:
    """uint8 -> float32 in [0,1]; float input is passed through as float32."""
    a = np.asarray(image)
    if a.dtype == np.uint8:
        return a.astype(np.float32) / 255.0
    return a.astype(np.float32)


def write_rgb(path, image: np.ndarray) -> None:
    """Save an (H,W,3) image as 8-bit RGB PNG; float input is quantized."""
    a = np.asarray(image)
    if a.dtype != np.uint8:
        a = quantize(a)
    Image.fromarray(a, mode="RGB").save(Path(path), format="PNG")


def read_rgb(path) -> np.ndarray:
    """Load an 8-bit RGB PNG as (H,W,3) uint8."""
    with Image.open(Path(path)) as im:
        return np.asarray(im.convert("RGB"))


def write_mask(path, mask: np.ndarray) -> None:
    a = np.where(np.asarray(mask, dtype=bool), np.uint8(255), np.uint8(0))
    Image.fromarray(a, mode="L").save(Path(path), format="PNG")


def read_mask(path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        return np.asarray(im.convert("L")) >= 128


def write_id_map(path, ids: np.ndarray) -> None:
    a = np.asarray(ids)
    if a.min() < 0 or a.max() > 0xFFFF:
        raise ValueError("instance ids must fit in uint16")
    Image.fromarray(a.astype(np.uint16), mode="I;16").save(Path(path), format="PNG")


def read_id_map(path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        return np.asarray(im, dtype=np.uint16)


def write_depth_pgm(path, depth_m: np.ndarray) -> None:
    """16-bit binary PGM (big-endian samples), millimeter units, 0 = no hit."""
    d = np.asarray(depth_m, dtype=np.float64)
    mm = np.clip(np.rint(d * DEPTH_PGM_SCALE), 0, 65535).astype(">u2")
    h, w = mm.shape
    with open(Path(path), "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(mm.tobytes())


def read_depth_pgm(path) -> np.ndarray:
    with open(Path(path), "rb") as f:
        data = f.read()
    # header: magic, width, height, maxval separated by whitespace (no comments)
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 65535:
        raise ValueError(f"{path}: expected 16-bit PGM, maxval={maxval}")
    raw = data[len(data) - 2 * w * h :]
    mm = np.frombuffer(raw, dtype=">u2").reshape(h, w)
    return mm.astype(np.float32) / DEPTH_PGM_SCALE


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H,W,C) float image; exact passthrough at equal size."""
    import torch

    a = np.asarray(image, dtype=np.float32)
    if a.ndim != 3:
        raise ValueError("expected (H,W,C)")
    if a.shape[0] == out_h and a.shape[1] == out_w:
        return a.copy()
    t = torch.from_numpy(np.ascontiguousarray(a.transpose(2, 0, 1)))[None]
    out = torch.nn.functional.interpolate(
        t, size=(out_h, out_w), mode="bilinear", align_corners=False
    )
    return out[0].numpy().transpose(1, 2, 0)
