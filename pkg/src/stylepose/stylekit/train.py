"""Training loop for the per-class style-transfer network.

One network triple (generator G, discriminator D, projection head H) is
trained per object class from that class's weak pairs. Every step draws a
fresh batch through the crop/scale/patch pipeline, then runs one
discriminator update and one generator update on the composite losses:

    L_G = NCE(x) + NCE(y) + adversarial + l1_weight * L1
    L_D = adversarial + lazy R1

All randomness derives from the config seed through named substreams, and
single-worker mode is bit-reproducible on CPU.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .. import imgio
from ..manifest import json_hash
from ..seeding import substream
from .losses import gan_losses, identity_l1, patchnce_loss, r1_penalty
from .networks import Discriminator, Generator, ProjectionHead, gather_locations
from .patches import PatchBatch, PatchSpec, extract_patch, instance_crop_box
from .weights import load_weights, save_weights

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("step", "L_NCE_X", "L_NCE_Y", "L_G_adv", "L_L1", "L_D_adv", "R1")


@dataclass(frozen=True)
class TransNetConfig:
    gen_width: int = 32
    gen_depth: int = 2
    disc_width: int = 32
    disc_depth: int = 3
    head_width: int = 256
    tau: float = 0.07
    r1_gamma: float = 1.0
    r1_interval: int = 16  # lazy R1: applied every this many D steps
    l1_weight: float = 1.0
    l1_mode: str = "identity"  # "identity": |G(y)-y|; "paired": |G(x)-y|
    lr: float = 2e-3
    betas: tuple = (0.0, 0.99)
    batch_size: int = 16
    epochs: int = 16
    nce_patches: int = 64  # sampled locations per tap layer
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(self.betas))
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.r1_gamma < 0:
            raise ValueError("r1_gamma must be >= 0")
        if min(self.gen_width, self.gen_depth, self.disc_width, self.disc_depth,
               self.head_width) < 1:
            raise ValueError("network widths/depths must be >= 1")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.nce_patches < 2:
            raise ValueError("nce_patches must be >= 2 (the loss needs negatives)")
        if self.r1_interval < 1:
            raise ValueError("r1_interval must be >= 1")
        if self.l1_mode not in ("identity", "paired"):
            raise ValueError(f"unknown l1_mode {self.l1_mode!r}")

    def hash(self) -> str:
        return json_hash(asdict(self))


@dataclass(frozen=True)
class TransNetWeights:
    """Trained parameters plus everything needed to rebuild the modules."""

    class_name: str
    step: int
    config: TransNetConfig
    tensors: dict  # {"G.*"/"D.*"/"H.*": np.ndarray}

    def __post_init__(self):
        for name, arr in self.tensors.items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite parameter tensor {name}")

    @property
    def config_hash(self) -> str:
        return self.config.hash()

    def save(self, path) -> Path:
        meta = {
            "class_name": self.class_name,
            "step": self.step,
            "config": asdict(self.config),
            "config_hash": self.config_hash,
        }
        return save_weights(path, self.tensors, meta)

    @classmethod
    def load(cls, path) -> "TransNetWeights":
        meta, tensors = load_weights(path)
        cfg_dict = dict(meta["config"])
        cfg_dict["betas"] = tuple(cfg_dict["betas"])
        return cls(
            class_name=meta["class_name"],
            step=int(meta["step"]),
            config=TransNetConfig(**cfg_dict),
            tensors=tensors,
        )

    def build_modules(self):
        g, d, h = build_networks(self.config)
        _load_module(g, self.tensors, "G.")
        _load_module(d, self.tensors, "D.")
        _load_module(h, self.tensors, "H.")
        for m in (g, d, h):
            m.eval()
        return g, d, h

    def build_generator(self) -> Generator:
        g = Generator(self.config.gen_width, self.config.gen_depth)
        _load_module(g, self.tensors, "G.")
        g.eval()
        return g


def build_networks(cfg: TransNetConfig):
    g = Generator(cfg.gen_width, cfg.gen_depth)
    d = Discriminator(cfg.disc_width, cfg.disc_depth)
    h = ProjectionHead(g.feature_channels, cfg.head_width)
    return g, d, h


def _load_module(module, tensors, prefix):
    state = {
        k[len(prefix):]: torch.from_numpy(np.array(v))
        for k, v in tensors.items()
        if k.startswith(prefix)
    }
    module.load_state_dict(state)


def _dump_module(module, prefix) -> dict:
    return {
        prefix + k: v.detach().cpu().numpy().copy()
        for k, v in module.state_dict().items()
    }


class NonFiniteLossError(RuntimeError):
    """Training produced NaN/inf; carries a diagnostic snapshot."""

    def __init__(self, step: int, losses: dict, snapshot: dict):
        self.step = step
        self.losses = losses
        self.snapshot = snapshot
        bad = sorted(k for k, v in losses.items() if not math.isfinite(v))
        super().__init__(
            f"non-finite loss at step {step}: {bad}; losses={losses}; "
            f"batch stats={snapshot}"
        )


@dataclass
class TrainState:
    G: Generator
    D: Discriminator
    H: ProjectionHead
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    step: int = 0
    config: TransNetConfig = field(default_factory=TransNetConfig)


def make_state(cfg: TransNetConfig) -> TrainState:
    """Seeded module construction; parameter init draws from the torch
    global generator, so the seed pins the whole run."""
    torch.manual_seed(cfg.seed)
    g, d, h = build_networks(cfg)
    opt_g = torch.optim.Adam(
        list(g.parameters()) + list(h.parameters()), lr=cfg.lr, betas=cfg.betas
    )
    opt_d = torch.optim.Adam(d.parameters(), lr=cfg.lr, betas=cfg.betas)
    return TrainState(G=g, D=d, H=h, opt_g=opt_g, opt_d=opt_d, config=cfg)


def _multilayer_nce(state: TrainState, src: torch.Tensor, out: torch.Tensor,
                    ids_per_layer: list, tau: float) -> torch.Tensor:
    """Mean over tap layers of the patch contrastive loss between the
    generator encoder's view of the source and of the translation.
    Keys (source side) are detached after projection, matching the usual
    contrastive translation setup: queries chase fixed keys."""
    feats_k = state.G.encode(src)
    feats_q = state.G.encode(out)
    q = state.H([gather_locations(f, ids) for f, ids in zip(feats_q, ids_per_layer)])
    k = state.H([gather_locations(f, ids) for f, ids in zip(feats_k, ids_per_layer)])
    losses = [patchnce_loss(qi, ki.detach(), tau) for qi, ki in zip(q, k)]
    return torch.stack(losses).mean()


def _nce_location_ids(state: TrainState, rng, patch_size: int, n: int) -> list:
    ids = []
    side = patch_size
    # Tap resolutions: stem at full size, then one halving per down stage,
    # bottleneck at the deepest resolution.
    sizes = [side] + [max(1, side // 2 ** (i + 1)) for i in range(state.G.depth)]
    sizes.append(sizes[-1])
    for s in sizes:
        hw = s * s
        take = min(n, hw)
        ids.append(rng.permutation(hw)[:take])
    return ids


def discriminator_step(state: TrainState, x: torch.Tensor, y: torch.Tensor) -> dict:
    """One update of D on real y vs G(x); R1 every r1_interval steps,
    scaled by the interval so the effective regularization matches the
    every-step schedule."""
    cfg = state.config
    with torch.no_grad():
        fake = state.G(x)
    real_logits = state.D(y)
    fake_logits = state.D(fake)
    _, l_d_adv = gan_losses(real_logits, fake_logits)
    loss = l_d_adv
    r1_value = 0.0
    if cfg.r1_gamma > 0 and state.step % cfg.r1_interval == 0:
        r1 = r1_penalty(state.D, y, cfg.r1_gamma)
        r1_value = float(r1.detach())
        loss = loss + r1 * cfg.r1_interval
    state.opt_d.zero_grad(set_to_none=True)
    loss.backward()
    state.opt_d.step()
    return {"L_D_adv": float(l_d_adv.detach()), "R1": r1_value}


def generator_step(state: TrainState, x: torch.Tensor, y: torch.Tensor,
                   nce_ids: list) -> dict:
    """One update of G and H on the composite generator objective."""
    cfg = state.config
    gx = state.G(x)
    gy = state.G(y)
    l_nce_x = _multilayer_nce(state, x, gx, nce_ids, cfg.tau)
    l_nce_y = _multilayer_nce(state, y, gy, nce_ids, cfg.tau)
    l_g_adv, _ = gan_losses(real_logits=torch.zeros(1), fake_logits=state.D(gx))
    if cfg.l1_mode == "identity":
        l_l1 = identity_l1(gy, y)
    else:
        # Paired mode compares the translation against the weakly-aligned
        # real patch; misalignment makes this a blunt instrument.
        l_l1 = identity_l1(gx, y)
    loss = l_nce_x + l_nce_y + l_g_adv + cfg.l1_weight * l_l1
    state.opt_g.zero_grad(set_to_none=True)
    loss.backward()
    state.opt_g.step()
    return {
        "L_NCE_X": float(l_nce_x.detach()),
        "L_NCE_Y": float(l_nce_y.detach()),
        "L_G_adv": float(l_g_adv.detach()),
        "L_L1": float(l_l1.detach()),
    }


def _check_finite(step: int, losses: dict, x: np.ndarray, y: np.ndarray):
    if all(math.isfinite(v) for v in losses.values()):
        return
    snapshot = {
        "x": {"min": float(x.min()), "max": float(x.max()), "mean": float(x.mean())},
        "y": {"min": float(y.min()), "max": float(y.max()), "mean": float(y.mean())},
    }
    raise NonFiniteLossError(step, losses, snapshot)


class _PairData:
    """Weak pairs of one class loaded into memory: images, masks, boxes."""

    def __init__(self, pairs, class_name: str, pairs_root, spec: PatchSpec):
        self.examples = []  # (real_img, synth_img, crop box)
        root = Path(pairs_root)
        cache = {}

        def _img(rel):
            if rel not in cache:
                cache[rel] = imgio.to_float(imgio.read_rgb(root / rel))
            return cache[rel]

        for pair in pairs:
            insts = [i for i in pair.instances if i.class_name == class_name]
            if not insts:
                raise ValueError(
                    f"pair {pair.scene_id}/{pair.view_id} has no instance of "
                    f"class {class_name!r}"
                )
            real = _img(pair.real_image)
            synth = _img(pair.synth_image)
            if real.shape != synth.shape:
                raise ValueError(
                    f"pair {pair.scene_id}/{pair.view_id}: resolution mismatch "
                    f"{real.shape} vs {synth.shape}"
                )
            bounds = (real.shape[1], real.shape[0])
            for inst in insts:
                mask = imgio.read_mask(root / inst.mask)
                box = instance_crop_box(mask, spec.expand_factor, bounds)
                self.examples.append((real, synth, box))

    def __len__(self):
        return len(self.examples)


def assemble_batch(data: _PairData, seed: int, step: int, spec: PatchSpec,
                   batch_size: int, workers: int = 1):
    """Draw one training batch.

    Slot draws come from per-worker substreams keyed (seed, "patch",
    worker, step); slots are assigned round-robin, so any worker count is
    deterministic and workers=1 reproduces the canonical sequence.
    Per slot the draw order is: example index, synthetic scale+position,
    real scale+position (independent draws; the box is shared).
    """
    xs = [None] * batch_size
    ys = [None] * batch_size
    provs = [None] * batch_size
    for worker in range(workers):
        rng = substream(seed, "patch", worker, step)
        for slot in range(worker, batch_size, workers):
            idx = int(rng.integers(0, len(data)))
            real, synth, box = data.examples[idx]
            x_patch, x_prov = extract_patch(synth, box, rng, spec)
            y_patch, y_prov = extract_patch(real, box, rng, spec)
            xs[slot], ys[slot] = x_patch, y_patch
            provs[slot] = (idx, x_prov, y_prov)
    batch = PatchBatch(
        x=np.stack(xs).astype(np.float32), y=np.stack(ys).astype(np.float32)
    )
    return batch, provs


def train_transnet(
    pairs,
    class_name: str,
    config: TransNetConfig = TransNetConfig(),
    patch_spec: PatchSpec = PatchSpec(),
    pairs_root=".",
    out_dir=None,
    workers: int = 1,
    sample_every: int = 0,  # 0 = four sample dumps over the run
):
    """Train one class's network from its weak pairs.

    Returns (TransNetWeights, history) where history is one dict per step
    with the HISTORY_COLUMNS fields. If out_dir is given, sample
    translations are written periodically under out_dir/samples.
    """
    if not pairs:
        raise ValueError("train_transnet needs at least one weak pair")
    data = _PairData(pairs, class_name, pairs_root, patch_spec)
    if workers == 1:
        torch.set_num_threads(1)  # bit-reproducibility on CPU
    state = make_state(config)
    steps_per_epoch = max(1, math.ceil(len(data) / config.batch_size))
    total_steps = config.epochs * steps_per_epoch
    if sample_every <= 0:
        sample_every = max(1, total_steps // 4)
    history = []
    for step in range(total_steps):
        state.step = step
        batch, _ = assemble_batch(
            data, config.seed, step, patch_spec, config.batch_size, workers
        )
        x = torch.from_numpy(batch.x).permute(0, 3, 1, 2).contiguous()
        y = torch.from_numpy(batch.y).permute(0, 3, 1, 2).contiguous()
        d_losses = discriminator_step(state, x, y)
        ids = _nce_location_ids(
            state, substream(config.seed, "nce", step), patch_spec.patch_size,
            config.nce_patches,
        )
        g_losses = generator_step(state, x, y, ids)
        row = {"step": step, **g_losses, **d_losses}
        _check_finite(step, {k: v for k, v in row.items() if k != "step"},
                      batch.x, batch.y)
        history.append(row)
        if out_dir is not None and (step % sample_every == 0 or step == total_steps - 1):
            _write_sample(state, x, y, Path(out_dir) / "samples", class_name, step)
    tensors = {}
    tensors.update(_dump_module(state.G, "G."))
    tensors.update(_dump_module(state.D, "D."))
    tensors.update(_dump_module(state.H, "H."))
    tw = TransNetWeights(
        class_name=class_name, step=total_steps, config=config, tensors=tensors
    )
    return tw, history


def _write_sample(state: TrainState, x, y, out_dir: Path, class_name: str, step: int):
    with torch.no_grad():
        gx = state.G(x[:1])
        gy = state.G(y[:1])
    tiles = [t[0].permute(1, 2, 0).numpy() for t in (x[:1], gx, y[:1], gy)]
    grid = np.concatenate(tiles, axis=1)
    imgio.write_rgb(out_dir / f"{class_name}_step{step:06d}.png", grid)


def save_history(history, path) -> Path:
    """Loss history CSV with one row per step, fixed column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=HISTORY_COLUMNS)
        writer.writeheader()
        for row in history:
            writer.writerow({k: repr(row[k]) if k != "step" else row[k]
                             for k in HISTORY_COLUMNS})
    return path
