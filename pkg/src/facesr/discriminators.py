"""Global (conditional) and local (face-masked) least-squares critics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn

from .layers import ConvBlock, activation, count_convs, down_conv, init_weights, same_conv

N_LAYERS = 7


@dataclass
class DiscriminatorConfig:
    base_channels: int = 32
    in_channels: int = 3
    input_size: int = 256
    seed: int = 0
    smooth: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


class Discriminator(nn.Module):
    """Seven convolutions ending in a one-channel map averaged to a raw score.

    Up to six 4x4 stride-2 convs shrink the input to 4x4 (256px needs all
    six); smaller inputs pad the schedule with 3x3 stride-1 convs. The last
    layer is a 4x4 stride-1 conv to one channel. There is no sigmoid.
    """

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        size = cfg.input_size
        if size < 8 or size & (size - 1):
            raise ValueError(f"discriminator input size must be a power of two >= 8, got {size}")
        n_down = min(N_LAYERS - 1, int(math.log2(size)) - 2)
        c = cfg.base_channels
        layers = []
        cin = cfg.in_channels
        for i in range(N_LAYERS - 1):
            cout = min(c * 2**i, 8 * c)
            conv = down_conv(cin, cout) if i < n_down else same_conv(cin, cout)
            # no norm on the first layer
            layers.append(ConvBlock(conv, norm=i > 0, act=activation("leaky", cfg.smooth)))
            cin = cout
        layers.append(ConvBlock(nn.Conv2d(cin, 1, kernel_size=4, stride=1, padding=1), norm=False))
        self.layers = nn.ModuleList(layers)
        init_weights(self, cfg.seed)

    def score_map(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        size = self.cfg.input_size
        if x.ndim != 4 or tuple(x.shape[1:]) != (self.cfg.in_channels, size, size):
            raise ValueError(
                f"expected input (N, {self.cfg.in_channels}, {size}, {size}), got {tuple(x.shape)}"
            )
        return self.score_map(x).mean(dim=(1, 2, 3))

    def conv_count(self) -> int:
        return count_convs(self)


class GlobalDiscriminator(Discriminator):
    """D_g: scores an HR image conditioned on the upscaled input features."""

    def __init__(self, feature_channels: int, base_channels: int = 32, input_size: int = 256, seed: int = 0, smooth: bool = False):
        super().__init__(DiscriminatorConfig(base_channels, 3 + feature_channels, input_size, seed, smooth))

    def forward(self, lr_f: torch.Tensor, hr_img: torch.Tensor) -> torch.Tensor:
        if lr_f.shape[0] != hr_img.shape[0] or lr_f.shape[-2:] != hr_img.shape[-2:]:
            raise ValueError(f"shape mismatch: {tuple(lr_f.shape)} vs {tuple(hr_img.shape)}")
        return super().forward(torch.cat([lr_f, hr_img], dim=1))


class LocalDiscriminator(Discriminator):
    """D_l: scores a face-masked HR image."""

    def __init__(self, base_channels: int = 32, input_size: int = 256, seed: int = 0, smooth: bool = False):
        super().__init__(DiscriminatorConfig(base_channels, 3, input_size, seed, smooth))


def mask_apply(img, mask):
    """Element-wise product of an image with a binary mask, broadcast over channels.

    Works on ``(H, W, C)`` arrays with ``(H, W, 1)`` masks and on
    ``(N, C, H, W)`` tensors with ``(N, 1, H, W)`` masks.
    """
    if isinstance(img, torch.Tensor):
        binary = bool(torch.all((mask == 0) | (mask == 1)))
        spatial_ok = img.shape[-2:] == mask.shape[-2:] and mask.shape[-3] == 1
    else:
        binary = bool(np.all((mask == 0) | (mask == 1)))
        spatial_ok = img.shape[:2] == mask.shape[:2] and mask.shape[2] == 1
    if not binary:
        raise ValueError("mask must be binary (values 0 or 1)")
    if not spatial_ok:
        raise ValueError(f"mask shape {tuple(mask.shape)} does not match image {tuple(img.shape)}")
    return img * mask
