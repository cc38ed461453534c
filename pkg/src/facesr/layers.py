"""Building blocks shared by the generator and the discriminators."""

from __future__ import annotations

from typing import Callable, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

# A noise hook receives a conv output and returns it perturbed.
NoiseFn = Optional[Callable[[torch.Tensor], torch.Tensor]]


class SmoothLeakyReLU(nn.Module):
    """C-infinity stand-in for LeakyReLU: ``slope*x + (1-slope)*softplus(x)``."""

    def __init__(self, negative_slope: float = 0.2):
        super().__init__()
        self.negative_slope = negative_slope

    def forward(self, x):
        s = self.negative_slope
        return s * x + (1.0 - s) * F.softplus(x)


def activation(kind: str, smooth: bool = False) -> nn.Module:
    if kind == "leaky":
        return SmoothLeakyReLU(0.2) if smooth else nn.LeakyReLU(0.2)
    if kind == "relu":
        return nn.Softplus() if smooth else nn.ReLU()
    raise ValueError(f"unknown activation {kind!r}")


class ConvBlock(nn.Module):
    """conv -> (+noise) -> optional InstanceNorm -> optional activation."""

    def __init__(self, conv: nn.Module, norm: bool = True, act: nn.Module | None = None):
        super().__init__()
        self.conv = conv
        self.norm = nn.InstanceNorm2d(conv.out_channels) if norm else None
        self.act = act

    def forward(self, x, noise: NoiseFn = None):
        x = self.conv(x)
        if noise is not None:
            x = noise(x)
        if self.norm is not None:
            x = self.norm(x)
        if self.act is not None:
            x = self.act(x)
        return x


def down_conv(cin: int, cout: int) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, kernel_size=4, stride=2, padding=1)


def up_conv(cin: int, cout: int) -> nn.ConvTranspose2d:
    return nn.ConvTranspose2d(cin, cout, kernel_size=4, stride=2, padding=1)


def same_conv(cin: int, cout: int) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, kernel_size=3, stride=1, padding=1)


def count_convs(module: nn.Module) -> int:
    return sum(isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)) for m in module.modules())


def init_weights(module: nn.Module, seed: int, std: float = 0.02) -> None:
    """Gaussian(0, std) conv weights and zero biases, drawn from ``seed``."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen, dtype=m.weight.dtype) * std)
                if m.bias is not None:
                    m.bias.zero_()


def gaussian_noise(sigma: float, seed: int) -> NoiseFn:
    """Noise hook drawing i.i.d. N(0, sigma^2) from a private generator."""
    gen = torch.Generator().manual_seed(int(seed))

    def add(x: torch.Tensor) -> torch.Tensor:
        eps = torch.randn(x.shape, generator=gen, dtype=x.dtype)
        return x + sigma * eps.to(x.device)

    return add
