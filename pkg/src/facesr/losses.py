"""Training objective: least-squares adversarial, L1 pixel and perceptual terms.

Reduction: per-element mean inside a term, terms summed, then averaged over
the batch by the caller.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

N_TAPS = 5


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 100.0  # pixel
    lambda2: float = 10.0  # perceptual

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be non-negative")


def _check_finite(*values) -> None:
    for v in values:
        ok = bool(torch.isfinite(v).all()) if isinstance(v, torch.Tensor) else math.isfinite(v)
        if not ok:
            raise ValueError(f"non-finite score: {v}")


def _square(x):
    return x * x


def lsgan_d_loss(real_score, fake_score):
    """``(real - 1)^2 + fake^2``; element-wise for tensors."""
    _check_finite(real_score, fake_score)
    return _square(real_score - 1.0) + _square(fake_score)


def lsgan_g_loss(fake_score):
    """``(fake - 1)^2``; element-wise for tensors."""
    _check_finite(fake_score)
    return _square(fake_score - 1.0)


def total_adversarial(g_term, l_term):
    return g_term + l_term


def _mae(target, pred):
    if tuple(target.shape) != tuple(pred.shape):
        raise ValueError(f"shape mismatch: {tuple(target.shape)} vs {tuple(pred.shape)}")
    diff = target - pred
    return (diff.abs() if isinstance(diff, torch.Tensor) else np.abs(diff)).mean()


def pixel_loss(m_pair, hr_pair, hrb_pair):
    """Sum of mean absolute errors over the masked, sharp and blurred pairs.

    Each pair is ``(ground_truth, reconstruction)``.
    """
    return _mae(*m_pair) + _mae(*hr_pair) + _mae(*hrb_pair)


def perceptual_loss(hr_hat: torch.Tensor, hr: torch.Tensor, fx: nn.Module) -> torch.Tensor:
    taps_hat, taps_ref = fx(hr_hat), fx(hr)
    if len(taps_hat) != N_TAPS or len(taps_ref) != N_TAPS:
        raise ValueError(f"feature extractor must expose {N_TAPS} taps, got {len(taps_hat)}")
    total = hr_hat.new_zeros(())
    for a, b in zip(taps_hat, taps_ref):
        total = total + (a - b).abs().mean()
    return total


def total_generator_loss(adv, pix, perc, w: LossWeights = LossWeights()):
    return adv + w.lambda1 * pix + w.lambda2 * perc


# ---------------------------------------------------------------------------
# feature extractors


class FeatureExtractor(nn.Module):
    """Frozen image-to-features map with five tap points."""

    extractor_id = "abstract"

    def freeze(self) -> FeatureExtractor:
        for p in self.parameters():
            p.requires_grad_(False)
        return self.eval()

    def train(self, mode: bool = True):
        # frozen: always behaves as in eval mode
        return super().train(False)

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        """Spatially averaged deepest tap, ``(N, D)``; the FID feature vector."""
        return self(x)[-1].mean(dim=(2, 3))


class RandomFeatureExtractor(FeatureExtractor):
    """Seeded random conv stack with five 2x pooling stages.

    ``smooth`` swaps ReLU/max-pool for softplus/avg-pool so the map is
    differentiable everywhere.
    """

    def __init__(self, seed: int = 0, widths=(16, 32, 64, 64, 64), smooth: bool = False):
        super().__init__()
        self.seed = seed
        self.smooth = smooth
        self.widths = tuple(widths)
        gen = torch.Generator().manual_seed(seed)
        convs = []
        cin = 3
        for cout in self.widths:
            conv = nn.Conv2d(cin, cout, 3, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * math.sqrt(2.0 / (cin * 9)))
                conv.bias.copy_(torch.randn(cout, generator=gen) * 0.01)
            convs.append(conv)
            cin = cout
        self.convs = nn.ModuleList(convs)
        self.extractor_id = f"random-s{seed}{'-smooth' if smooth else ''}"
        self.freeze()

    def forward(self, x):
        taps = []
        x = x - 0.5
        for conv in self.convs:
            x = conv(x)
            if self.smooth:
                x = F.avg_pool2d(F.softplus(x), 2)
            else:
                x = F.max_pool2d(F.relu(x), 2)
            taps.append(x)
        return taps


VGG_POOL_INDICES = (4, 9, 18, 27, 36)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class VGG19Extractor(FeatureExtractor):
    """Pool1..Pool5 of VGG-19; expects inputs in ``[0, 1]``."""

    extractor_id = "vgg19"

    def __init__(self, weights_path: str | Path | None = None):
        super().__init__()
        from torchvision.models import vgg19

        net = vgg19(weights=None)
        if weights_path is not None:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            net.load_state_dict(state)
        self.features = net.features[: VGG_POOL_INDICES[-1] + 1]
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1), persistent=False)
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1), persistent=False)
        self.freeze()

    def forward(self, x):
        x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        taps = []
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i in VGG_POOL_INDICES:
                taps.append(x)
        return taps


VGG_ENV = "FACESR_VGG19_WEIGHTS"


def _vgg_weights_on_disk() -> Path | None:
    env = os.environ.get(VGG_ENV)
    if env and Path(env).is_file():
        return Path(env)
    cached = Path(torch.hub.get_dir()) / "checkpoints" / "vgg19-dcbb9e9d.pth"
    return cached if cached.is_file() else None


def make_extractor(kind: str = "auto", seed: int = 0, smooth: bool = False) -> FeatureExtractor:
    """``auto`` uses pretrained VGG-19 when weights exist locally, else a random stack."""
    if kind == "auto":
        path = _vgg_weights_on_disk()
        if path is not None and not smooth:
            return VGG19Extractor(path)
        return RandomFeatureExtractor(seed, smooth=smooth)
    if kind == "random":
        return RandomFeatureExtractor(seed, smooth=smooth)
    if kind == "vgg19":
        path = _vgg_weights_on_disk()
        if path is None:
            raise FileNotFoundError(f"VGG-19 weights not found; set {VGG_ENV}")
        return VGG19Extractor(path)
    raise ValueError(f"unknown extractor {kind!r}")
