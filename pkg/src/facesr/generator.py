"""Dual-decoder generator: 8x upscaling head, shared encoder, blur and sharp decoders."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn

from .data import bicubic_matrix
from .layers import (
    ConvBlock,
    NoiseFn,
    activation,
    count_convs,
    down_conv,
    gaussian_noise,
    init_weights,
    same_conv,
    up_conv,
)

UPPER_SKIPS = (1, 2, 3)


@dataclass
class GeneratorConfig:
    base_channels: int = 32
    encoder_depth: int = 7
    noise_enabled: bool = False
    noise_sigma: float = 0.05
    seed: int = 0
    lr_size: int = 32
    use_head: bool = True
    smooth: bool = False

    def __post_init__(self):
        if self.encoder_depth < 5:
            raise ValueError(f"encoder_depth must be >= 5, got {self.encoder_depth}")
        if self.base_channels < 8:
            raise ValueError(f"base_channels must be >= 8, got {self.base_channels}")
        if self.hr_size >> self.encoder_depth < 2:
            raise ValueError(
                f"encoder_depth {self.encoder_depth} too deep for {self.hr_size}px output"
            )

    @property
    def hr_size(self) -> int:
        return self.lr_size * 8

    @property
    def feature_channels(self) -> int:
        """Channels of the upscaled map fed to the encoder (and to D_g)."""
        return self.base_channels if self.use_head else 3

    def stage_channels(self, level: int) -> int:
        if level == 0:
            return self.base_channels
        return min(self.base_channels * 2**level, 8 * self.base_channels)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GeneratorOutput:
    hrb_hat: torch.Tensor
    hr_hat: torch.Tensor
    i_f: torch.Tensor
    lr_f: torch.Tensor


def image_to_tensor(imgs) -> torch.Tensor:
    """``(H, W, C)`` array or a list of them to a float32 ``(N, C, H, W)`` tensor."""
    if isinstance(imgs, np.ndarray) and imgs.ndim == 3:
        imgs = [imgs]
    arr = np.stack([np.asarray(i) for i in imgs]).transpose(0, 3, 1, 2)
    return torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32))


def tensor_to_image(t: torch.Tensor) -> np.ndarray:
    """First image of an ``(N, C, H, W)`` tensor as ``(H, W, C)`` float64."""
    return t.detach()[0].permute(1, 2, 0).cpu().double().numpy()


def _saturate(x: torch.Tensor) -> torch.Tensor:
    return (torch.tanh(x) + 1.0) / 2.0


class UpscaleHead(nn.Module):
    """Five convolutions, three of them stride-2 transposed (x8 in total)."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        c = cfg.base_channels
        act = lambda: activation("relu", cfg.smooth)  # noqa: E731
        self.layers = nn.ModuleList(
            [
                ConvBlock(same_conv(3, c), norm=False, act=act()),
                ConvBlock(up_conv(c, c), act=act()),
                ConvBlock(up_conv(c, c), act=act()),
                ConvBlock(up_conv(c, c), act=act()),
                ConvBlock(same_conv(c, c), act=act()),
            ]
        )

    def forward(self, x, noise: NoiseFn = None):
        for layer in self.layers:
            x = layer(x, noise)
        return x


class BicubicHead(nn.Module):
    """Fixed 8x Catmull-Rom upsampling; replaces the learned head in ablations."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        m = torch.from_numpy(bicubic_matrix(cfg.lr_size, cfg.hr_size)).float()
        self.register_buffer("matrix", m, persistent=False)

    def forward(self, x, noise: NoiseFn = None):
        m = self.matrix.to(x.dtype)
        return torch.einsum("ij,ncjk,lk->ncil", m, x, m)


class Encoder(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.depth = cfg.encoder_depth
        stages = []
        cin = cfg.feature_channels
        for level in range(1, cfg.encoder_depth + 1):
            cout = cfg.stage_channels(level)
            stages.append(ConvBlock(down_conv(cin, cout), act=activation("leaky", cfg.smooth)))
            cin = cout
        self.stages = nn.ModuleList(stages)

    def forward(self, x, noise: NoiseFn = None) -> list[torch.Tensor]:
        feats = []
        for stage in self.stages:
            x = stage(x, noise)
            feats.append(x)
        return feats


class Decoder(nn.Module):
    """Mirror decoder from the bottleneck up to full resolution.

    ``skip_stages`` lists the encoder levels concatenated laterally into the
    decoder; the deepest stage always enters as the decoder input.
    ``extra_channels`` widens the output conv for the ``i_f`` connection.
    """

    def __init__(self, cfg: GeneratorConfig, skip_stages: tuple[int, ...], extra_channels: int = 0):
        super().__init__()
        depth = cfg.encoder_depth
        if any(not 1 <= s < depth for s in skip_stages):
            raise ValueError(f"skip stages {skip_stages} outside 1..{depth - 1}")
        self.depth = depth
        self.skip_stages = tuple(sorted(skip_stages))
        self.input_stage = depth
        ups = []
        for level in range(depth - 1, -1, -1):
            src = level + 1
            cin = cfg.stage_channels(src)
            if src in self.skip_stages:
                cin += cfg.stage_channels(src)
            ups.append(ConvBlock(up_conv(cin, cfg.stage_channels(level)), act=activation("relu", cfg.smooth)))
        self.ups = nn.ModuleList(ups)
        self.extra_channels = extra_channels
        self.out = ConvBlock(same_conv(cfg.base_channels + extra_channels, 3), norm=False)

    @property
    def connected_stages(self) -> tuple[int, ...]:
        return self.skip_stages + (self.input_stage,)

    def features(self, enc: list[torch.Tensor], noise: NoiseFn = None) -> torch.Tensor:
        if len(enc) != self.depth:
            raise ValueError(f"expected {self.depth} encoder features, got {len(enc)}")
        x = enc[-1]
        for up, level in zip(self.ups, range(self.depth - 1, -1, -1)):
            x = up(x, noise)
            if level in self.skip_stages:
                x = torch.cat([x, enc[level - 1]], dim=1)
        return x

    def forward(self, enc, extra=None, noise: NoiseFn = None):
        feat = self.features(enc, noise)
        if self.extra_channels:
            if extra is None or extra.shape[-2:] != feat.shape[-2:]:
                got = None if extra is None else tuple(extra.shape[-2:])
                raise ValueError(f"i_f spatial size {got} does not match {tuple(feat.shape[-2:])}")
            x = torch.cat([feat, extra], dim=1)
        else:
            x = feat
        return _saturate(self.out(x, noise)), feat


class Generator(nn.Module):
    def __init__(self, cfg: GeneratorConfig | None = None):
        super().__init__()
        cfg = cfg or GeneratorConfig()
        self.cfg = cfg
        self.head = UpscaleHead(cfg) if cfg.use_head else BicubicHead(cfg)
        self.encoder = Encoder(cfg)
        self.upper = Decoder(cfg, UPPER_SKIPS)
        self.lower = Decoder(cfg, tuple(range(1, cfg.encoder_depth)), extra_channels=cfg.base_channels)
        init_weights(self, cfg.seed)

    def _noise(self, noise_seed: int | None) -> NoiseFn:
        if not self.cfg.noise_enabled:
            return None
        return gaussian_noise(self.cfg.noise_sigma, 0 if noise_seed is None else noise_seed)

    def _check_input(self, lr: torch.Tensor) -> None:
        size = self.cfg.lr_size
        if lr.ndim != 4 or tuple(lr.shape[1:]) != (3, size, size):
            raise ValueError(f"expected input (N, 3, {size}, {size}), got {tuple(lr.shape)}")

    def upscale(self, lr: torch.Tensor, noise: NoiseFn = None) -> torch.Tensor:
        self._check_input(lr)
        return self.head(lr, noise)

    def encode(self, lr_f: torch.Tensor, noise: NoiseFn = None) -> list[torch.Tensor]:
        size = self.cfg.hr_size
        if tuple(lr_f.shape[-2:]) != (size, size):
            raise ValueError(f"encoder expects {size}x{size} features, got {tuple(lr_f.shape[-2:])}")
        return self.encoder(lr_f, noise)

    def decode_blur(self, enc, noise: NoiseFn = None) -> tuple[torch.Tensor, torch.Tensor]:
        return self.upper(enc, noise=noise)

    def decode_sharp(self, enc, i_f: torch.Tensor, noise: NoiseFn = None) -> torch.Tensor:
        hr_hat, _ = self.lower(enc, extra=i_f, noise=noise)
        return hr_hat

    def forward(self, lr: torch.Tensor, noise_seed: int | None = None) -> GeneratorOutput:
        noise = self._noise(noise_seed)
        lr_f = self.upscale(lr, noise)
        enc = self.encode(lr_f, noise)
        hrb_hat, i_f = self.decode_blur(enc, noise)
        hr_hat = self.decode_sharp(enc, i_f, noise)
        return GeneratorOutput(hrb_hat=hrb_hat, hr_hat=hr_hat, i_f=i_f, lr_f=lr_f)

    def head_conv_count(self) -> int:
        return count_convs(self.head)
