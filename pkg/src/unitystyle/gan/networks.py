"""Style-transfer generator and patch discriminator.

The generator is a multi-scale encoder-decoder with IBN-Res blocks, skip
connections at matching scales, and a sigmoid output head. The head is
deliberately not identity-initialized: the running-magnitude loss
normalization divides each term by its own scale, so a generator started at
the reconstruction minimum gets an enormous effective gradient pinning it
there and never learns the style shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from ..errors import ConfigError, UnsupportedOperationError
from .blocks import IBNResBlock, StyleAttentionHead, StyleAttentionOutput


@dataclass
class GeneratorSpec:
    input_resolution: tuple[int, int] = (256, 256)
    base_channels: int = 64
    num_scales: int = 3
    ibn_res_blocks_per_scale: int = 1
    skip_connections: bool = True
    attention_enabled: bool = True

    def validate(self) -> None:
        h, w = self.input_resolution
        if self.num_scales < 2:
            raise ConfigError("generator needs num_scales >= 2")
        if self.num_scales > math.log2(min(h, w)):
            raise ConfigError(
                f"num_scales={self.num_scales} too deep for resolution {self.input_resolution}"
            )
        if self.base_channels % 2 != 0:
            raise ConfigError("base_channels must be even (IBN splits channels in half)")
        if self.ibn_res_blocks_per_scale < 1:
            raise ConfigError("need at least one residual block per scale")


class UnityGenerator(nn.Module):
    """Shape-preserving image-to-image generator with style attention tap."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        spec.validate()
        self.spec = spec
        s, c = spec.num_scales, spec.base_channels
        chans = [c * 2**k for k in range(s)]
        shallow_cut = (s + 1) // 2  # IN only in the shallow half of the hierarchy

        self.stem = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(3, chans[0], kernel_size=7),
            nn.BatchNorm2d(chans[0]),
            nn.ReLU(inplace=True),
        )
        self.enc_blocks = nn.ModuleList()
        self.downs = nn.ModuleList()
        for k in range(s):
            n_blocks = spec.ibn_res_blocks_per_scale * (3 if k == s - 1 else 1)
            use_in = k < shallow_cut
            self.enc_blocks.append(
                nn.Sequential(*[IBNResBlock(chans[k], use_instance_norm=use_in) for _ in range(n_blocks)])
            )
            if k < s - 1:
                self.downs.append(
                    nn.Sequential(
                        nn.Conv2d(chans[k], chans[k + 1], kernel_size=3, stride=2, padding=1),
                        nn.BatchNorm2d(chans[k + 1]),
                        nn.ReLU(inplace=True),
                    )
                )
        self.ups = nn.ModuleList()
        self.fuses = nn.ModuleList()
        for k in range(s - 2, -1, -1):
            self.ups.append(
                nn.Sequential(
                    nn.ConvTranspose2d(chans[k + 1], chans[k], kernel_size=4, stride=2, padding=1),
                    nn.BatchNorm2d(chans[k]),
                    nn.ReLU(inplace=True),
                )
            )
            if spec.skip_connections:
                self.fuses.append(
                    nn.Sequential(
                        nn.Conv2d(2 * chans[k], chans[k], kernel_size=3, padding=1),
                        nn.BatchNorm2d(chans[k]),
                        nn.ReLU(inplace=True),
                    )
                )
            else:
                self.fuses.append(nn.Identity())
        self.head = nn.Sequential(nn.ReflectionPad2d(3), nn.Conv2d(chans[0], 3, kernel_size=7))
        nn.init.normal_(self.head[1].weight, std=0.02)
        nn.init.zeros_(self.head[1].bias)
        self.attention = StyleAttentionHead(chans[0]) if spec.attention_enabled else None

    def _first_block_features(self, x: torch.Tensor) -> torch.Tensor:
        h = self.stem(x)
        return self.enc_blocks[0][0](h)

    def style_attention(self, x: torch.Tensor) -> StyleAttentionOutput:
        """Sigmoid-gated scalar style weight computed from shallow features."""
        if self.attention is None:
            raise UnsupportedOperationError("generator was built with attention_enabled=False")
        return self.attention(self._first_block_features(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.stem(x)
        skips = []
        for k, blocks in enumerate(self.enc_blocks):
            h = blocks(h)
            if k < len(self.downs):
                skips.append(h)
                h = self.downs[k](h)
        for up, fuse, skip in zip(self.ups, self.fuses, reversed(skips)):
            h = up(h)
            if self.spec.skip_connections:
                h = fuse(torch.cat([h, skip], dim=1))
        return torch.sigmoid(self.head(h))


def build_generator(spec: GeneratorSpec) -> UnityGenerator:
    return UnityGenerator(spec)


class PatchDiscriminator(nn.Module):
    """PatchGAN discriminator exposing per-layer features for feature matching."""

    def __init__(self, base_channels: int = 64, in_channels: int = 3, num_layers: int = 4):
        super().__init__()
        if num_layers < 1:
            raise ConfigError("discriminator needs at least one layer")
        c_in, blocks = in_channels, []
        for k in range(num_layers):
            c_out = base_channels * 2 ** min(k, 3)
            stride = 2 if k < 3 else 1
            layers: list[nn.Module] = [nn.Conv2d(c_in, c_out, kernel_size=4, stride=stride, padding=1)]
            if k > 0:
                layers.append(nn.InstanceNorm2d(c_out))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
            blocks.append(nn.Sequential(*layers))
            c_in = c_out
        self.blocks = nn.ModuleList(blocks)
        self.final = nn.Conv2d(c_in, 1, kernel_size=4, stride=1, padding=1)

    def forward(self, x: torch.Tensor, return_features: bool = False):
        feats = []
        h = x
        for block in self.blocks:
            h = block(h)
            feats.append(h)
        out = self.final(h)
        if return_features:
            return out, feats
        return out
