"""Toy-scale networks: generator with encoder taps, patch discriminator,
and the two-layer projection head used by the contrastive loss.

The generator is residual with a zero-initialized output head, so an
untrained network is the identity map. Encoder activations are exposed at
fixed taps for the multilayer contrastive loss.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


class Generator(nn.Module):
    """Encoder/decoder with stride-2 downsampling and a residual output.

    Input and output are (B, 3, H, W) in [0,1]; H and W must be divisible
    by 2**depth. encode() returns activations at 1 stem + `depth` down
    stages + 1 bottleneck tap, shallow to deep.
    """

    def __init__(self, width: int = 32, depth: int = 2):
        super().__init__()
        if width < 1 or depth < 1:
            raise ValueError("width and depth must be >= 1")
        self.width = width
        self.depth = depth
        self.stem = nn.Conv2d(3, width, 3, 1, 1)
        downs, ch = [], width
        for _ in range(depth):
            out = min(2 * width, 2 * ch)
            downs.append(nn.Conv2d(ch, out, 3, 2, 1))
            ch = out
        self.downs = nn.ModuleList(downs)
        self.mid = nn.Conv2d(ch, ch, 3, 1, 1)
        ups = []
        for i in reversed(range(depth)):
            out = width if i == 0 else min(2 * width, 2 * width * (2 ** (i - 1)))
            ups.append(nn.Conv2d(ch, out, 3, 1, 1))
            ch = out
        self.ups = nn.ModuleList(ups)
        self.head = nn.Conv2d(width, 3, 3, 1, 1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    @property
    def feature_channels(self) -> tuple:
        chans = [self.stem.out_channels]
        chans += [d.out_channels for d in self.downs]
        chans.append(self.mid.out_channels)
        return tuple(chans)

    def encode(self, x: torch.Tensor) -> list:
        feats = []
        h = F.relu(self.stem(x))
        feats.append(h)
        for d in self.downs:
            h = F.relu(d(h))
            feats.append(h)
        h = F.relu(self.mid(h))
        feats.append(h)
        return feats

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.encode(x)
        h = feats[-1]
        for u in self.ups:
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = F.relu(u(h))
        delta = self.head(h)
        return torch.clamp(x + delta, 0.0, 1.0)


class Discriminator(nn.Module):
    """Patch discriminator: stride-2 conv stack over fixed-size inputs,
    one logit per patch."""

    def __init__(self, width: int = 32, depth: int = 3, patch_size: int = 64):
        super().__init__()
        if width < 1 or depth < 1:
            raise ValueError("width and depth must be >= 1")
        if patch_size % (2 ** depth) != 0:
            raise ValueError(f"patch_size {patch_size} not divisible by 2^{depth}")
        layers, ch = [], 3
        for i in range(depth):
            out = width * (2 ** min(i, 2))
            layers.append(nn.Conv2d(ch, out, 3, 2, 1))
            ch = out
        self.convs = nn.ModuleList(layers)
        side = patch_size // (2 ** depth)
        self.fc = nn.Linear(ch * side * side, 1)
        self.patch_size = patch_size

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = x
        for c in self.convs:
            h = F.leaky_relu(c(h), 0.2)
        return self.fc(h.flatten(1))


class ProjectionHead(nn.Module):
    """Per-tap two-layer MLP projecting encoder features for the
    contrastive loss; outputs are unit-normalized."""

    def __init__(self, channels: tuple, width: int = 256):
        super().__init__()
        if width < 1:
            raise ValueError("width must be >= 1")
        self.mlps = nn.ModuleList(
            nn.Sequential(nn.Linear(c, width), nn.ReLU(), nn.Linear(width, width))
            for c in channels
        )

    def forward(self, feats_per_layer: list) -> list:
        """feats_per_layer: list of (B, N, C_l) location features."""
        if len(feats_per_layer) != len(self.mlps):
            raise ValueError(
                f"expected {len(self.mlps)} layers, got {len(feats_per_layer)}"
            )
        out = []
        for f, mlp in zip(feats_per_layer, self.mlps):
            b, n, c = f.shape
            h = mlp(f.reshape(b * n, c)).reshape(b, n, -1)
            out.append(F.normalize(h, dim=-1))
        return out


def gather_locations(feat: torch.Tensor, flat_ids) -> torch.Tensor:
    """Pick spatial locations from a (B, C, H, W) map -> (B, N, C).

    flat_ids indexes the flattened H*W grid; the same ids must be used for
    the query and key maps of a layer so positives correspond spatially.
    """
    b, c, h, w = feat.shape
    ids = torch.as_tensor(flat_ids, dtype=torch.long, device=feat.device)
    flat = feat.flatten(2)  # (B, C, H*W)
    picked = flat[:, :, ids]  # (B, C, N)
    return picked.permute(0, 2, 1)
