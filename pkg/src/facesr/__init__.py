"""Joint 8x face super-resolution and deblurring with a dual-decoder GAN."""

from .config import TrainConfig, load_config
from .data import FaceSample, build_manifest, synthesize_sample
from .generator import Generator, GeneratorConfig, GeneratorOutput
from .metrics import MetricsReport, evaluate, fid, psnr, ssim

__version__ = "0.1.0"

__all__ = [
    "FaceSample",
    "Generator",
    "GeneratorConfig",
    "GeneratorOutput",
    "MetricsReport",
    "TrainConfig",
    "build_manifest",
    "evaluate",
    "fid",
    "load_config",
    "psnr",
    "ssim",
    "synthesize_sample",
]
