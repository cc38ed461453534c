"""PSNR, SSIM and FID computed from first principles, plus test-set evaluation."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy.signal import convolve2d

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
FID_EPS = 1e-6
LUMA = np.array([0.299, 0.587, 0.114])


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak-1.0 PSNR in dB; zero error is reported as ``PSNR_CAP``."""
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    _same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def to_luma(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, np.float64)
    if img.ndim == 2:
        return img
    if img.shape[2] == 1:
        return img[:, :, 0]
    return img @ LUMA


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean single-scale SSIM on luminance, Gaussian 11x11 window (valid region)."""
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    _same_shape(a, b)
    x, y = to_luma(a), to_luma(b)
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"image {x.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    win = gaussian_window()

    def filt(z):
        return convolve2d(z, win, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    var_x = filt(x * x) - mu_x * mu_x
    var_y = filt(y * y) - mu_y * mu_y
    cov = filt(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(num / den))


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.T) / 2.0)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def fid(feats_a: np.ndarray, feats_b: np.ndarray, eps: float = FID_EPS) -> float:
    """Frechet distance between Gaussian fits of two feature sets (rows = samples).

    ``Tr((Sa Sb)^(1/2))`` is evaluated as ``Tr((Sa^(1/2) Sb Sa^(1/2))^(1/2))``,
    which only needs symmetric eigendecompositions. Both covariances get
    ``eps`` added to the diagonal.
    """
    a = np.asarray(feats_a, np.float64)
    b = np.asarray(feats_b, np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"feature dimension mismatch: {a.shape} vs {b.shape}")
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each feature set needs at least two rows")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("non-finite features")
    d = a.shape[1]
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.cov(a, rowvar=False).reshape(d, d) + eps * np.eye(d)
    cov_b = np.cov(b, rowvar=False).reshape(d, d) + eps * np.eye(d)
    root_a = _sqrt_psd(cov_a)
    inner = root_a @ cov_b @ root_a
    eig = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_sqrt = float(np.sum(np.sqrt(np.clip(eig, 0.0, None))))
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)
    if -1e-6 <= value < 0.0:
        value = 0.0
    return value


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricsReport:
    psnr_mean: float
    ssim_mean: float
    fid: float
    n_samples: int
    extractor_id: str = ""
    checkpoint_id: str = ""
    per_sample: list[tuple[str, float, float]] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("a report needs at least one sample")

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("per_sample")
        return d

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report = out_dir / "report.json"
        report.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        table = out_dir / "per_sample.csv"
        with table.open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["id", "psnr", "ssim"])
            for sid, p, s in self.per_sample:
                w.writerow([sid, repr(float(p)), repr(float(s))])
        return report, table


def format_table(reports: dict[str, MetricsReport]) -> str:
    """One row per model, columns PSNR / SSIM / FID."""
    width = max([5] + [len(k) for k in reports])
    lines = [f"{'Model':<{width}} | {'PSNR':>8} | {'SSIM':>7} | {'FID':>9}"]
    lines.append("-" * len(lines[0]))
    for name, r in reports.items():
        lines.append(f"{name:<{width}} | {r.psnr_mean:8.2f} | {r.ssim_mean:7.4f} | {r.fid:9.4f}")
    return "\n".join(lines)


def file_id(path: str | Path | None) -> str:
    if path is None:
        return ""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _embed(fx, images: list[np.ndarray], batch: int = 16) -> np.ndarray:
    from .generator import image_to_tensor

    rows = []
    with torch.no_grad():
        for i in range(0, len(images), batch):
            rows.append(fx.embed(image_to_tensor(images[i : i + batch])).double().numpy())
    return np.concatenate(rows)


def evaluate(
    generator,
    manifest,
    fx,
    noise_seed: int | None = None,
    self_check: bool = False,
    checkpoint_id: str = "",
    batch: int = 16,
) -> MetricsReport:
    """Run the generator on every test LR and score ``hr_hat`` against GT HR.

    Samples are processed in id order. With ``self_check`` the ground truth
    is scored against itself and the generator is not needed. Noise is only
    injected when ``noise_seed`` is given and the generator was built with it.
    """
    from .generator import image_to_tensor, tensor_to_image

    entries = sorted(manifest.entries, key=lambda e: e["id"])
    if not entries:
        raise ValueError("manifest is empty")
    manifest.validate()
    gts, preds, rows = [], [], []
    for i in range(0, len(entries), batch):
        chunk = [manifest.load_sample(e) for e in entries[i : i + batch]]
        if self_check:
            outs = [s.hr for s in chunk]
        else:
            generator.eval()
            seed = noise_seed if generator.cfg.noise_enabled else None
            with torch.no_grad():
                out = generator(image_to_tensor([s.lr for s in chunk]), noise_seed=seed)
            outs = [tensor_to_image(out.hr_hat[j : j + 1]) for j in range(len(chunk))]
        for s, pred in zip(chunk, outs):
            rows.append((s.id, psnr(s.hr, pred), ssim(s.hr, pred)))
            gts.append(s.hr)
            preds.append(pred)
    fid_value = fid(_embed(fx, preds), _embed(fx, gts))
    return MetricsReport(
        psnr_mean=float(np.mean([r[1] for r in rows])),
        ssim_mean=float(np.mean([r[2] for r in rows])),
        fid=fid_value,
        n_samples=len(rows),
        extractor_id=getattr(fx, "extractor_id", type(fx).__name__),
        checkpoint_id=checkpoint_id,
        per_sample=rows,
    )
