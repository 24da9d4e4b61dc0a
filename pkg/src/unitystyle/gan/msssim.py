"""Differentiable multi-scale structural similarity (MS-SSIM) in PyTorch.

Constants k1=0.01, k2=0.03, Gaussian window 11/sigma 1.5. Window size and
scale count shrink automatically for small inputs so the loss stays defined
down to tiny test tensors.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

_MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def _gaussian_kernel(size: int, sigma: float, dtype, device) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2.0
    g = torch.exp(-(coords**2) / (2 * sigma**2))
    return g / g.sum()


def _filter2d(x: torch.Tensor, kernel_1d: torch.Tensor) -> torch.Tensor:
    c = x.shape[1]
    kh = kernel_1d.view(1, 1, -1, 1).expand(c, 1, -1, 1)
    kw = kernel_1d.view(1, 1, 1, -1).expand(c, 1, 1, -1)
    x = F.conv2d(x, kh, groups=c)
    return F.conv2d(x, kw, groups=c)


def _ssim_terms(x, y, window_size, sigma, c1, c2):
    k = _gaussian_kernel(window_size, sigma, x.dtype, x.device)
    mu_x, mu_y = _filter2d(x, k), _filter2d(y, k)
    sxx = _filter2d(x * x, k) - mu_x * mu_x
    syy = _filter2d(y * y, k) - mu_y * mu_y
    sxy = _filter2d(x * y, k) - mu_x * mu_y
    lum = (2 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return lum, cs


def ms_ssim(
    x: torch.Tensor,
    y: torch.Tensor,
    data_range: float = 1.0,
    window_size: int = 11,
    scales: int = 3,
    k1: float = 0.01,
    k2: float = 0.03,
    sigma: float = 1.5,
) -> torch.Tensor:
    """MS-SSIM over a batch of NCHW tensors; returns a scalar in [~0, 1]."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(y.shape)}")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    min_side = min(x.shape[-2], x.shape[-1])
    win = min(window_size, min_side if min_side % 2 == 1 else min_side - 1)
    # every scale must still fit the window after repeated 2x downsampling
    levels = 1
    while levels < scales and (min_side // 2**levels) >= win:
        levels += 1
    weights = torch.tensor(_MSSSIM_WEIGHTS[:levels], dtype=x.dtype, device=x.device)
    weights = weights / weights.sum()

    vals = []
    for lv in range(levels):
        lum, cs = _ssim_terms(x, y, win, sigma, c1, c2)
        if lv == levels - 1:
            vals.append(torch.clamp((lum * cs).mean(), min=1e-6))
        else:
            vals.append(torch.clamp(cs.mean(), min=1e-6))
            x = F.avg_pool2d(x, kernel_size=2)
            y = F.avg_pool2d(y, kernel_size=2)
    stacked = torch.stack(vals)
    return torch.prod(stacked**weights)


def structural_dissimilarity(x: torch.Tensor, y: torch.Tensor, **kwargs) -> torch.Tensor:
    """(1 - MS-SSIM) / 2, the structural half of the cyclic reconstruction loss."""
    return (1.0 - ms_ssim(x, y, **kwargs)) / 2.0
