"""Synthetic degradation pipeline: motion blur, 8x downsampling, manifests.

Images are ``numpy`` float arrays shaped ``(H, W, C)`` with values in
``[0, 1]``; masks carry a single channel holding exactly 0.0 or 1.0.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

SCALE = 8
BLUR_SAMPLES = 17
DEFAULT_MAX_BLUR = 15.0
DEFAULT_SMOOTHNESS = 1.0
N_BASIS = 4
MAX_FREQUENCY = 1.0  # cycles per image side


class DatasetError(ValueError):
    """Raised for malformed inputs to the degradation pipeline."""


# ---------------------------------------------------------------------------
# image helpers


def _check_image(img: np.ndarray, name: str = "image") -> None:
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise DatasetError(f"{name} must be HxWxC with C in (1, 3), got {img.shape}")


def _check_binary(mask: np.ndarray) -> None:
    _check_image(mask, "mask")
    if mask.shape[2] != 1:
        raise DatasetError(f"mask must have one channel, got {mask.shape[2]}")
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise DatasetError("mask must be binary (values 0.0 or 1.0)")


def load_image(path: str | Path, gray: bool = False) -> np.ndarray:
    with PILImage.open(path) as im:
        im = im.convert("L" if gray else "RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def load_mask(path: str | Path) -> np.ndarray:
    return (load_image(path, gray=True) >= 0.5).astype(np.float64)


def to_uint8(img: np.ndarray) -> np.ndarray:
    # round half up
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(path: str | Path, img: np.ndarray) -> None:
    _check_image(img)
    data = to_uint8(img)
    mode = "L" if data.shape[2] == 1 else "RGB"
    if mode == "L":
        data = data[:, :, 0]
    PILImage.fromarray(data, mode=mode).save(path, format="PNG")


# ---------------------------------------------------------------------------
# resampling


def _keys_cubic(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


def bicubic_matrix(n_in: int, n_out: int) -> np.ndarray:
    """1-D Catmull-Rom interpolation matrix (``n_out x n_in``).

    Pixel centres are aligned (half-pixel convention), borders are clamped and
    no antialiasing prefilter is applied.
    """
    mat = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        center = (i + 0.5) * scale - 0.5
        base = math.floor(center)
        for k in range(base - 1, base + 3):
            w = float(_keys_cubic(np.array(center - k)))
            mat[i, min(max(k, 0), n_in - 1)] += w
    return mat


def resize_bicubic(img: np.ndarray, height: int, width: int) -> np.ndarray:
    _check_image(img)
    rows = bicubic_matrix(img.shape[0], height)
    cols = bicubic_matrix(img.shape[1], width)
    out = np.einsum("ij,jkc,lk->ilc", rows, img, cols)
    return np.clip(out, 0.0, 1.0)


def downsample8(img: np.ndarray) -> np.ndarray:
    _check_image(img)
    h, w = img.shape[:2]
    if h % SCALE or w % SCALE:
        raise DatasetError(f"dimensions {h}x{w} are not divisible by {SCALE}")
    return resize_bicubic(img, h // SCALE, w // SCALE)


# ---------------------------------------------------------------------------
# motion blur


@dataclass(frozen=True)
class MotionField:
    """Per-pixel displacement ``(dx, dy)`` in pixels, each shaped ``(H, W)``."""

    dx: np.ndarray
    dy: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.dx.shape

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.dx, self.dy)

    def max_gradient(self) -> float:
        """Largest finite-difference gradient magnitude over both components."""
        worst = 0.0
        for comp in (self.dx, self.dy):
            gy, gx = np.gradient(comp)
            worst = max(worst, float(np.hypot(gx, gy).max()))
        return worst


def sample_motion_field(
    seed: int,
    size: int,
    max_blur: float = DEFAULT_MAX_BLUR,
    smoothness: float = DEFAULT_SMOOTHNESS,
) -> MotionField:
    """Draw a smooth random motion field from a sum of low-frequency sinusoids.

    The field is rescaled so its largest vector has length ``max_blur``,
    unless that would push a component's gradient above ``smoothness``, in
    which case it is scaled down further.
    """
    if not isinstance(size, (int, np.integer)) or size <= 0:
        raise DatasetError(f"size must be a positive integer, got {size!r}")
    if max_blur < 0:
        raise DatasetError(f"max_blur must be >= 0, got {max_blur}")
    zeros = np.zeros((size, size))
    if max_blur == 0:
        return MotionField(zeros, zeros.copy())

    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size] / size
    comps = []
    for _ in range(2):
        comp = np.zeros((size, size))
        amp = rng.normal(size=N_BASIS)
        freq = rng.uniform(-MAX_FREQUENCY, MAX_FREQUENCY, size=(N_BASIS, 2))
        phase = rng.uniform(0.0, 2.0 * np.pi, size=N_BASIS)
        for k in range(N_BASIS):
            comp += amp[k] * np.sin(2.0 * np.pi * (freq[k, 0] * xs + freq[k, 1] * ys) + phase[k])
        comps.append(comp)
    raw = MotionField(comps[0], comps[1])
    peak = float(raw.magnitude().max())
    if peak == 0.0:
        return MotionField(zeros, zeros.copy())
    scale = max_blur / peak
    grad = raw.max_gradient()
    if grad * scale > smoothness:
        scale = smoothness / grad
    return MotionField(raw.dx * scale, raw.dy * scale)


def apply_motion_blur(img: np.ndarray, field: MotionField, n_samples: int = BLUR_SAMPLES) -> np.ndarray:
    """Average ``n_samples`` bilinear taps along each pixel's motion segment.

    Taps run from ``p - v/2`` to ``p + v/2`` and are clamped at the borders.
    The result is accumulated as an offset from the source pixel so zero-length
    segments and flat regions come back bit-exact.
    """
    _check_image(img)
    h, w, _ = img.shape
    if field.shape != (h, w):
        raise DatasetError(f"field shape {field.shape} does not match image {h}x{w}")
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    acc = np.zeros_like(img)
    for t in np.linspace(-0.5, 0.5, n_samples):
        sx = np.clip(xs + t * field.dx, 0.0, w - 1)
        sy = np.clip(ys + t * field.dy, 0.0, h - 1)
        x0 = np.floor(sx).astype(np.intp)
        y0 = np.floor(sy).astype(np.intp)
        fx = (sx - x0)[:, :, None]
        fy = (sy - y0)[:, :, None]
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        v00, v01 = img[y0, x0], img[y0, x1]
        v10, v11 = img[y1, x0], img[y1, x1]
        sample = v00 + fx * (v01 - v00) + fy * (v10 - v00) + fx * fy * (v11 - v10 - v01 + v00)
        acc += sample - img
    return np.clip(img + acc / n_samples, 0.0, 1.0)


def composite_blur(hr: np.ndarray, mask: np.ndarray, field: MotionField) -> np.ndarray:
    """Blur the masked foreground and paste it back over the sharp background."""
    _check_image(hr, "hr")
    _check_binary(mask)
    if mask.shape[:2] != hr.shape[:2]:
        raise DatasetError(f"mask {mask.shape[:2]} does not match image {hr.shape[:2]}")
    blurred = apply_motion_blur(mask * hr, field)
    return mask * blurred + (1.0 - mask) * hr


def dilate_mask(mask: np.ndarray, radius: float) -> np.ndarray:
    from scipy import ndimage

    r = int(math.ceil(radius))
    if r <= 0:
        return mask.copy()
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    disk = (xx * xx + yy * yy) <= radius * radius
    return ndimage.binary_dilation(mask[:, :, 0] > 0, structure=disk)[:, :, None].astype(np.float64)


# ---------------------------------------------------------------------------
# samples


@dataclass(frozen=True)
class FaceSample:
    id: str
    hr: np.ndarray
    hrb: np.ndarray
    lr: np.ndarray
    mask: np.ndarray
    seed: int = 0

    def __post_init__(self):
        h, w = self.hr.shape[:2]
        if self.lr.shape[:2] != (h // SCALE, w // SCALE):
            raise DatasetError(f"lr shape {self.lr.shape[:2]} is not hr/{SCALE} for {self.id}")

    def equals(self, other: FaceSample) -> bool:
        return (
            self.id == other.id
            and self.seed == other.seed
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("hr", "hrb", "lr", "mask")
            )
        )


def synthesize_sample(
    hr: np.ndarray,
    mask: np.ndarray,
    seed: int,
    max_blur: float = DEFAULT_MAX_BLUR,
    sample_id: str = "sample",
) -> FaceSample:
    _check_image(hr, "hr")
    h, w = hr.shape[:2]
    if h != w:
        raise DatasetError(f"hr must be square, got {h}x{w}")
    field = sample_motion_field(seed, h, max_blur)
    hrb = composite_blur(hr, mask, field)
    return FaceSample(id=sample_id, hr=hr, hrb=hrb, lr=downsample8(hrb), mask=mask, seed=seed)


def augment_flip(sample: FaceSample, flip: bool) -> FaceSample:
    if not flip:
        return sample
    return replace(
        sample,
        hr=sample.hr[:, ::-1].copy(),
        hrb=sample.hrb[:, ::-1].copy(),
        lr=sample.lr[:, ::-1].copy(),
        mask=sample.mask[:, ::-1].copy(),
    )


def sample_seed(seed: int, sample_id: str) -> int:
    digest = hashlib.sha256(f"{seed}/{sample_id}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


# ---------------------------------------------------------------------------
# manifests

FILES = ("hr", "hrb", "lr", "mask")


@dataclass
class DatasetManifest:
    root: Path
    split: str
    seed: int
    max_blur: float
    hr_size: int
    entries: list[dict] = field(default_factory=list)

    @property
    def ids(self) -> list[str]:
        return [e["id"] for e in self.entries]

    def path(self, entry: dict, kind: str) -> Path:
        return self.root / entry[kind]

    def to_json(self) -> str:
        doc = {
            "split": self.split,
            "seed": self.seed,
            "max_blur": self.max_blur,
            "hr_size": self.hr_size,
            "count": len(self.entries),
            "entries": self.entries,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self) -> Path:
        path = self.root / "manifest.json"
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, path: str | Path) -> DatasetManifest:
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        if not path.exists():
            raise DatasetError(f"manifest not found: {path}")
        doc = json.loads(path.read_text())
        return cls(
            root=path.parent,
            split=doc["split"],
            seed=doc["seed"],
            max_blur=doc["max_blur"],
            hr_size=doc["hr_size"],
            entries=doc["entries"],
        )

    def validate(self) -> None:
        lr_size = self.hr_size // SCALE
        expected = {"hr": self.hr_size, "hrb": self.hr_size, "mask": self.hr_size, "lr": lr_size}
        for entry in self.entries:
            for kind, size in expected.items():
                p = self.path(entry, kind)
                if not p.exists():
                    raise DatasetError(f"missing file {p}")
                with PILImage.open(p) as im:
                    if im.size != (size, size):
                        raise DatasetError(f"{p} is {im.size}, expected {size}x{size}")

    def load_sample(self, entry: dict) -> FaceSample:
        return FaceSample(
            id=entry["id"],
            hr=load_image(self.path(entry, "hr")),
            hrb=load_image(self.path(entry, "hrb")),
            lr=load_image(self.path(entry, "lr")),
            mask=load_mask(self.path(entry, "mask")),
            seed=entry["seed"],
        )

    def load_samples(self) -> list[FaceSample]:
        return [self.load_sample(e) for e in self.entries]


def _pair_inputs(hr_dir: Path, mask_dir: Path) -> list[tuple[str, Path, Path]]:
    if not hr_dir.is_dir():
        raise DatasetError(f"missing hr directory: {hr_dir}")
    if not mask_dir.is_dir():
        raise DatasetError(f"missing mask directory: {mask_dir}")
    pairs = []
    for hr_path in sorted(hr_dir.glob("*.png")):
        mask_path = mask_dir / hr_path.name
        if not mask_path.exists():
            raise DatasetError(f"missing mask for '{hr_path.stem}' (expected {mask_path})")
        pairs.append((hr_path.stem, hr_path, mask_path))
    return pairs


def _synthesize_entry(args) -> dict:
    sid, hr_path, mask_path, split_dir, seed, max_blur, hr_size = args
    hr = load_image(hr_path)
    mask = load_mask(mask_path)
    if hr.shape[:2] != (hr_size, hr_size):
        hr = resize_bicubic(hr, hr_size, hr_size)
    if mask.shape[:2] != (hr_size, hr_size):
        mask = (resize_bicubic(mask, hr_size, hr_size) >= 0.5).astype(np.float64)
    s = sample_seed(seed, sid)
    sample = synthesize_sample(hr, mask, s, max_blur, sample_id=sid)
    out = split_dir / sid
    out.mkdir(parents=True, exist_ok=True)
    entry = {"id": sid, "seed": s}
    for kind in FILES:
        save_image(out / f"{kind}.png", getattr(sample, kind))
        entry[kind] = f"{sid}/{kind}.png"
    return entry


def build_manifest(
    hr_dir: str | Path,
    mask_dir: str | Path,
    out_dir: str | Path,
    n_train: int = 28_800,
    n_test: int = 1_200,
    seed: int = 0,
    max_blur: float = DEFAULT_MAX_BLUR,
    hr_size: int = 256,
    workers: int = 1,
) -> tuple[DatasetManifest, DatasetManifest]:
    """Split paired HR/mask images, synthesize every sample and write manifests.

    Writes ``{out_dir}/{split}/{id}/{hr,hrb,lr,mask}.png`` and
    ``{out_dir}/{split}/manifest.json`` for ``split`` in ``train``/``test``.
    """
    if hr_size % SCALE:
        raise DatasetError(f"hr_size must be divisible by {SCALE}")
    pairs = _pair_inputs(Path(hr_dir), Path(mask_dir))
    if n_train < 0 or n_test < 0:
        raise DatasetError("split sizes must be non-negative")
    if n_train + n_test > len(pairs):
        raise DatasetError(
            f"insufficient images: requested {n_train} + {n_test}, found {len(pairs)}"
        )
    order = np.random.default_rng(seed).permutation(len(pairs))
    splits = {
        "train": sorted(pairs[i] for i in order[:n_train]),
        "test": sorted(pairs[i] for i in order[n_train : n_train + n_test]),
    }
    manifests = []
    for split, items in splits.items():
        split_dir = Path(out_dir) / split
        split_dir.mkdir(parents=True, exist_ok=True)
        jobs = [(sid, h, m, split_dir, seed, max_blur, hr_size) for sid, h, m in items]
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                entries = list(pool.map(_synthesize_entry, jobs))
        else:
            entries = [_synthesize_entry(j) for j in jobs]
        manifest = DatasetManifest(split_dir, split, seed, float(max_blur), hr_size, entries)
        manifest.save()
        manifests.append(manifest)
    return manifests[0], manifests[1]


# ---------------------------------------------------------------------------
# toy data


def make_toy_face(rng: np.random.Generator, size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Procedural face-like RGB image with a centred elliptical face mask."""
    ys, xs = (np.mgrid[0:size, 0:size] + 0.5) / size
    top = rng.uniform(0.2, 0.8, 3)
    bottom = rng.uniform(0.2, 0.8, 3)
    img = top * (1 - ys[..., None]) + bottom * ys[..., None]
    img += 0.04 * np.sin(2 * np.pi * rng.uniform(2, 6) * xs)[..., None]

    cx, cy = 0.5 + rng.uniform(-0.04, 0.04), 0.52 + rng.uniform(-0.04, 0.04)
    ax, ay = rng.uniform(0.26, 0.32), rng.uniform(0.34, 0.40)
    face = ((xs - cx) / ax) ** 2 + ((ys - cy) / ay) ** 2 <= 1.0
    skin = np.array([0.85, 0.65, 0.5]) * rng.uniform(0.6, 1.1)
    shade = 1.0 - 0.25 * (((xs - cx) / ax) ** 2 + ((ys - cy) / ay) ** 2)
    img = np.where(face[..., None], skin * shade[..., None], img)

    hair = face & (ys < cy - 0.6 * ay)
    img[hair] = rng.uniform(0.05, 0.4, 3)
    eye_dy = cy - 0.15 * ay
    for side in (-1, 1):
        ex = cx + side * 0.38 * ax
        eye = ((xs - ex) / 0.05) ** 2 + ((ys - eye_dy) / 0.025) ** 2 <= 1.0
        img[eye] = [0.95, 0.95, 0.95]
        pupil = ((xs - ex) / 0.018) ** 2 + ((ys - eye_dy) / 0.018) ** 2 <= 1.0
        img[pupil] = rng.uniform(0.0, 0.3, 3)
    mouth = ((xs - cx) / (0.35 * ax)) ** 2 + ((ys - (cy + 0.5 * ay)) / 0.02) ** 2 <= 1.0
    img[mouth] = [0.7, 0.2, 0.25]
    nose = (np.abs(xs - cx) < 0.012) & (ys > eye_dy + 0.03) & (ys < cy + 0.3 * ay)
    img[nose] *= 0.8

    return np.clip(img, 0.0, 1.0), face[..., None].astype(np.float64)


def make_toy_dataset(out_dir: str | Path, n: int = 10, size: int = 256, seed: int = 0) -> tuple[Path, Path]:
    """Write ``n`` toy faces to ``out_dir/hr`` and their masks to ``out_dir/masks``."""
    out_dir = Path(out_dir)
    hr_dir, mask_dir = out_dir / "hr", out_dir / "masks"
    hr_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n):
        img, mask = make_toy_face(rng, size)
        save_image(hr_dir / f"toy_{i:04d}.png", img)
        save_image(mask_dir / f"toy_{i:04d}.png", mask)
    return hr_dir, mask_dir
