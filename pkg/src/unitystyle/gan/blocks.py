"""Building blocks: IBN normalization, IBN-Res residual block, style attention head."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..errors import ConfigError


class IBNNorm(nn.Module):
    """Instance norm on the first half of channels, batch norm on the rest.

    IN gives robustness to appearance/style shifts while the retained BN half
    preserves content-discriminative statistics.
    """

    def __init__(self, channels: int, affine: bool = True):
        super().__init__()
        if channels % 2 != 0:
            raise ConfigError(f"IBNNorm needs an even channel count, got {channels}")
        self.half = channels // 2
        self.inorm = nn.InstanceNorm2d(self.half, affine=affine)
        self.bnorm = nn.BatchNorm2d(channels - self.half, affine=affine)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        a, b = torch.split(x, [self.half, x.shape[1] - self.half], dim=1)
        return torch.cat([self.inorm(a.contiguous()), self.bnorm(b.contiguous())], dim=1)


class IBNResBlock(nn.Module):
    """Residual block: conv-IBN-ReLU-conv-BN branch added to the input.

    With use_instance_norm=False the first normalization is plain BN (used at
    deep scales, where IN would wash out class-relevant statistics).
    """

    def __init__(self, channels: int, use_instance_norm: bool = True):
        super().__init__()
        if use_instance_norm and channels % 2 != 0:
            raise ConfigError(f"IBN-Res block needs an even channel count, got {channels}")
        norm1: nn.Module = IBNNorm(channels) if use_instance_norm else nn.BatchNorm2d(channels)
        self.branch = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            norm1,
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            nn.BatchNorm2d(channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.branch(x)


@dataclass
class StyleAttentionOutput:
    """Sigmoid-gated per-image style weight and its pre-activation logit."""

    weight: torch.Tensor  # (B,), strictly in (0,1)
    pre_activation: torch.Tensor  # (B,)


class StyleAttentionHead(nn.Module):
    """Small conv head pooling shallow features to one scalar per image.

    The final conv is zero-initialized so an untrained head outputs exactly 0.5
    after the sigmoid.
    """

    def __init__(self, channels: int):
        super().__init__()
        mid = max(channels // 4, 1)
        self.conv1 = nn.Conv2d(channels, mid, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(mid, 1, kernel_size=3, padding=1)
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)
        self.act = nn.ReLU(inplace=True)

    def forward(self, features: torch.Tensor) -> StyleAttentionOutput:
        h = self.conv2(self.act(self.conv1(features)))
        pre = h.mean(dim=(1, 2, 3))
        return StyleAttentionOutput(weight=torch.sigmoid(pre), pre_activation=pre)
