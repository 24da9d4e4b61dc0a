"""Composite style-transfer losses: adversarial (least-squares), feature
matching, identity mapping, cyclic reconstruction, scheduled loss
normalization, and the attention-weighted multi-camera total.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import torch

from ..errors import ConfigError
from .msssim import structural_dissimilarity

_SIMPLEX_TOL = 1e-9


@dataclass
class LossWeights:
    """The six loss coefficients; the two groups each sum to one."""

    lambda_gan: float = 0.25
    lambda_fm: float = 0.1
    lambda_id: float = 0.15
    lambda_cyc: float = 0.5
    lambda_ss: float = 0.7
    lambda_l1: float = 0.3

    def validate(self) -> None:
        vals = (self.lambda_gan, self.lambda_fm, self.lambda_id, self.lambda_cyc, self.lambda_ss, self.lambda_l1)
        if any(v < 0 for v in vals):
            raise ConfigError("loss weights must be non-negative")
        if abs(self.lambda_gan + self.lambda_fm + self.lambda_id + self.lambda_cyc - 1.0) > _SIMPLEX_TOL:
            raise ConfigError("lambda_gan + lambda_fm + lambda_id + lambda_cyc must equal 1")
        if abs(self.lambda_ss + self.lambda_l1 - 1.0) > _SIMPLEX_TOL:
            raise ConfigError("lambda_ss + lambda_l1 must equal 1")


@dataclass
class SLNState:
    """Running-magnitude tracker for scheduled loss normalization."""

    magnitude: float | None = None
    decay: float = 0.99
    step_count: int = 0
    frozen: bool = False
    eps: float = 1e-8

    def validate(self) -> None:
        if not (0.0 < self.decay < 1.0):
            raise ConfigError("SLN decay must lie in (0, 1)")


def sln(loss_value, state: SLNState):
    """Normalize a loss by its running magnitude; the update carries no gradient."""
    state.validate()
    raw = float(abs(loss_value.detach())) if torch.is_tensor(loss_value) else abs(float(loss_value))
    if not state.frozen:
        if state.magnitude is None:
            state.magnitude = raw
        else:
            state.magnitude = state.decay * state.magnitude + (1.0 - state.decay) * raw
        state.step_count += 1
    m = state.magnitude if state.magnitude is not None else 1.0
    return loss_value / (m + state.eps)


def _check_same_resolution(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape[-2:] != b.shape[-2:]:
        raise ValueError(f"resolution mismatch: {tuple(a.shape[-2:])} vs {tuple(b.shape[-2:])}")


def identity_loss(G, F, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """E|F(x) - x| + E|G(y) - y|: generators should leave in-domain images alone."""
    if x.numel() == 0 or y.numel() == 0:
        raise ValueError("identity_loss requires non-empty batches")
    _check_same_resolution(x, y)
    return (F(x) - x).abs().mean() + (G(y) - y).abs().mean()


def gan_loss(D, real_batch: torch.Tensor, fake_batch: torch.Tensor):
    """Least-squares adversarial losses averaged over the patch grid.

    Returns (d_loss, g_loss); the caller detaches fake_batch for the
    discriminator step.
    """
    if real_batch.numel() == 0 or fake_batch.numel() == 0:
        raise ValueError("gan_loss requires non-empty batches")
    pred_real = D(real_batch)
    pred_fake = D(fake_batch)
    d_loss = ((pred_real - 1.0) ** 2).mean() + (pred_fake**2).mean()
    g_loss = ((pred_fake - 1.0) ** 2).mean()
    return d_loss, g_loss


def feature_matching_loss(D, real_batch: torch.Tensor, fake_batch: torch.Tensor) -> torch.Tensor:
    """Mean-L1 distance between D's per-layer features on real vs fake, averaged
    over layers. Real-image features carry no gradient."""
    _, feats_fake = D(fake_batch, return_features=True)
    with torch.no_grad():
        _, feats_real = D(real_batch, return_features=True)
    terms = [(ff - fr.detach()).abs().mean() for ff, fr in zip(feats_fake, feats_real)]
    return torch.stack(terms).mean()


def cyclic_loss(
    G,
    F,
    x: torch.Tensor,
    y: torch.Tensor,
    lambda_ss: float,
    lambda_l1: float,
) -> torch.Tensor:
    """Reconstruction loss on F(G(x)) vs x and G(F(y)) vs y.

    Structural term is (1 - MS-SSIM)/2; both terms are averaged over the two
    cycle directions.
    """
    if abs(lambda_ss + lambda_l1 - 1.0) > _SIMPLEX_TOL:
        raise ConfigError("lambda_ss + lambda_l1 must equal 1")
    rec_x = F(G(x))
    rec_y = G(F(y))
    l1 = ((rec_x - x).abs().mean() + (rec_y - y).abs().mean()) / 2.0
    if lambda_ss == 0.0:
        return lambda_l1 * l1
    ss = (structural_dissimilarity(rec_x, x) + structural_dissimilarity(rec_y, y)) / 2.0
    return lambda_ss * ss + lambda_l1 * l1


def unitygan_loss(model, x_batch: torch.Tensor, y_batch: torch.Tensor, _cache: dict | None = None):
    """Generator-side total objective with per-term breakdown.

    `model` provides G, F, D_X, D_Y, loss_weights and an `sln` mapping with
    states for 'gan', 'fm', 'id', 'cyc'. A cache dict may be passed to reuse
    the x-dependent passes across multiple y references in one step.
    """
    w: LossWeights = model.loss_weights
    w.validate()
    _check_same_resolution(x_batch, y_batch)
    cache = _cache if _cache is not None else {}
    if "fake_y" not in cache:
        cache["fake_y"] = model.G(x_batch)
        cache["rec_x"] = model.F(cache["fake_y"])
        cache["idt_x"] = model.F(x_batch)
    fake_y, rec_x, idt_x = cache["fake_y"], cache["rec_x"], cache["idt_x"]
    fake_x = model.F(y_batch)
    rec_y = model.G(fake_x)
    idt_y = model.G(y_batch)

    _, g_x = gan_loss(model.D_X, x_batch, fake_x)
    _, g_y = gan_loss(model.D_Y, y_batch, fake_y)
    l_gan = g_x + g_y
    l_fm = feature_matching_loss(model.D_X, x_batch, fake_x) + feature_matching_loss(model.D_Y, y_batch, fake_y)
    l_id = (idt_x - x_batch).abs().mean() + (idt_y - y_batch).abs().mean()
    l_l1 = ((rec_x - x_batch).abs().mean() + (rec_y - y_batch).abs().mean()) / 2.0
    l_ss = (structural_dissimilarity(rec_x, x_batch) + structural_dissimilarity(rec_y, y_batch)) / 2.0
    l_cyc = w.lambda_ss * l_ss + w.lambda_l1 * l_l1

    total = (
        w.lambda_gan * sln(l_gan, model.sln["gan"])
        + w.lambda_fm * sln(l_fm, model.sln["fm"])
        + w.lambda_id * sln(l_id, model.sln["id"])
        + w.lambda_cyc * sln(l_cyc, model.sln["cyc"])
    )
    breakdown = {
        "L_GAN": float(l_gan.detach()),
        "L_FM": float(l_fm.detach()),
        "L_ID": float(l_id.detach()),
        "L_CYC": float(l_cyc.detach()),
        "total": float(total.detach()),
    }
    return total, breakdown


def unitystyle_loss(
    x_i: torch.Tensor,
    per_camera_refs: Mapping[int, torch.Tensor],
    model,
    weights: LossWeights | None = None,
    return_details: bool = False,
):
    """Attention-weighted sum of per-camera totals: sum_c A(y_c) * L(x, y_c).

    Attention weights keep their gradient; the x-dependent generator passes are
    shared across cameras.
    """
    if model.G.attention is None:
        raise ConfigError("unitystyle_loss needs a generator built with attention enabled")
    expected = getattr(model, "training_meta", {}).get("cameras")
    if expected is not None:
        missing = set(expected) - set(per_camera_refs)
        if missing:
            raise ValueError(f"missing reference images for cameras {sorted(missing)}")
    if not per_camera_refs:
        raise ValueError("unitystyle_loss needs at least one per-camera reference")
    if weights is not None:
        old, model.loss_weights = model.loss_weights, weights
    try:
        cache: dict = {}
        total = None
        details = []
        for cam in sorted(per_camera_refs):
            y_c = per_camera_refs[cam]
            a = model.G.style_attention(y_c).weight.mean()
            term_total, detail = unitygan_loss(model, x_i, y_c, _cache=cache)
            detail["attention"] = float(a.detach())
            details.append(detail)
            total = a * term_total if total is None else total + a * term_total
    finally:
        if weights is not None:
            model.loss_weights = old
    if return_details:
        return total, details
    return total
