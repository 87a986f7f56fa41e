"""Loss functions for adversarial instance style transfer.

All losses are plain differentiable torch expressions; nothing here owns
parameters or optimizers. Conventions: discriminator outputs are raw
logits; features fed to the contrastive loss are unit-normalized
internally, so callers may pass projected features directly.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


def patchnce_loss(feat_q: torch.Tensor, feat_k: torch.Tensor,
                  tau: float = 0.07) -> torch.Tensor:
    """Patchwise InfoNCE over spatial locations.

    feat_q, feat_k: (N, C) or (B, N, C); row i of q matches row i of k
    (same spatial location before/after translation), all other rows of k
    are negatives. Returns the mean over locations of
    -log( exp(q.k+/tau) / sum_j exp(q.k_j/tau) ), so the positive appears
    once in the denominator: with all similarities equal the loss is
    exactly ln N.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if feat_q.shape != feat_k.shape:
        raise ValueError(f"feature shapes differ: {feat_q.shape} vs {feat_k.shape}")
    if feat_q.dim() == 2:
        feat_q, feat_k = feat_q[None], feat_k[None]
    if feat_q.dim() != 3:
        raise ValueError(f"expected (N,C) or (B,N,C), got {tuple(feat_q.shape)}")
    n = feat_q.shape[1]
    if n < 2:
        raise ValueError(f"need at least 2 locations, got {n}")
    q = F.normalize(feat_q, dim=-1)
    k = F.normalize(feat_k, dim=-1)
    logits = torch.bmm(q, k.transpose(1, 2)) / tau  # (B, N, N)
    pos = torch.diagonal(logits, dim1=1, dim2=2)
    return (torch.logsumexp(logits, dim=2) - pos).mean()


def gan_losses(real_logits: torch.Tensor, fake_logits: torch.Tensor):
    """Non-saturating GAN losses from discriminator logits.

    Returns (generator adversarial loss, discriminator adversarial loss):
    L_G = E softplus(-D(fake)), L_D = E softplus(-D(real)) + E softplus(D(fake)).
    """
    l_g = F.softplus(-fake_logits).mean()
    l_d = F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean()
    return l_g, l_d


def r1_penalty(discriminator, real: torch.Tensor, gamma: float = 1.0) -> torch.Tensor:
    """(gamma/2) * E over the batch of ||d D / d input||^2 at real samples.

    Differentiable in the discriminator parameters (second-order graph), so
    it can be added to the discriminator loss directly.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    real = real.detach().requires_grad_(True)
    logits = discriminator(real)
    (grad,) = torch.autograd.grad(
        outputs=logits.sum(), inputs=real, create_graph=True
    )
    return (gamma / 2.0) * grad.flatten(1).square().sum(dim=1).mean()


def identity_l1(translated: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean per-element |G(y) - y|: keeps the generator near identity on
    already-real inputs. Callers pass the generator output explicitly so
    one forward pass can serve several losses."""
    if translated.shape != target.shape:
        raise ValueError(f"shapes differ: {translated.shape} vs {target.shape}")
    return (translated - target).abs().mean()
