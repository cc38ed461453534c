"""Staged adversarial training, checkpointing and inference."""

from __future__ import annotations

import json
import logging
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from .config import TrainConfig
from .data import DatasetError, DatasetManifest, FaceSample, augment_flip
from .discriminators import GlobalDiscriminator, LocalDiscriminator, mask_apply
from .generator import Generator, GeneratorConfig, GeneratorOutput, image_to_tensor
from .losses import (
    FeatureExtractor,
    lsgan_d_loss,
    lsgan_g_loss,
    make_extractor,
    perceptual_loss,
    pixel_loss,
    total_adversarial,
    total_generator_loss,
)

log = logging.getLogger(__name__)


class NonFiniteLossError(RuntimeError):
    pass


def derive_seed(seed: int, *keys) -> int:
    """Stable 32-bit seed from ``seed`` and a tuple of ints/strings."""
    words = [seed] + [k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in keys]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def flip_for(seed: int, sample_id: str, epoch: int) -> bool:
    return bool(np.random.default_rng(derive_seed(seed, "flip", sample_id, epoch)).random() < 0.5)


@dataclass
class TrainState:
    cfg: TrainConfig
    generator: Generator
    d_global: GlobalDiscriminator | None
    d_local: LocalDiscriminator | None
    opt_g: torch.optim.Optimizer
    opt_dg: torch.optim.Optimizer | None
    opt_dl: torch.optim.Optimizer | None
    extractor: FeatureExtractor
    epoch: int = 0
    step: int = 0
    stage: int = 1

    def networks(self) -> dict[str, torch.nn.Module]:
        nets = {"generator": self.generator}
        if self.d_global is not None:
            nets["d_global"] = self.d_global
        if self.d_local is not None:
            nets["d_local"] = self.d_local
        return nets

    def optimizers(self) -> dict[str, torch.optim.Optimizer]:
        opts = {"g": self.opt_g}
        if self.opt_dg is not None:
            opts["d_global"] = self.opt_dg
        if self.opt_dl is not None:
            opts["d_local"] = self.opt_dl
        return opts


def _adam(params, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), foreach=False)


def init_state(cfg: TrainConfig) -> TrainState:
    gen = Generator(cfg.generator_config())
    hr_size = cfg.lr_size * 8
    d_global = d_local = None
    if cfg.use_global:
        d_global = GlobalDiscriminator(
            gen.cfg.feature_channels, cfg.disc_channels, hr_size, derive_seed(cfg.seed, "d_global"), cfg.smooth
        )
    if cfg.use_local:
        d_local = LocalDiscriminator(cfg.disc_channels, hr_size, derive_seed(cfg.seed, "d_local"), cfg.smooth)
    return TrainState(
        cfg=cfg,
        generator=gen,
        d_global=d_global,
        d_local=d_local,
        opt_g=_adam(gen.parameters(), cfg),
        opt_dg=_adam(d_global.parameters(), cfg) if d_global else None,
        opt_dl=_adam(d_local.parameters(), cfg) if d_local else None,
        extractor=make_extractor(cfg.extractor, cfg.extractor_seed, cfg.smooth),
        stage=1 if cfg.stage1_epochs > 0 else 2,
    )


def collate(batch: list[FaceSample]) -> dict[str, torch.Tensor]:
    return {k: image_to_tensor([getattr(s, k) for s in batch]) for k in ("hr", "hrb", "lr", "mask")}


def _checked(name: str, value: torch.Tensor, step: int) -> torch.Tensor:
    if not torch.isfinite(value).all():
        raise NonFiniteLossError(f"non-finite {name} loss at step {step}: {value.item()}")
    return value


def _set_grad(module: torch.nn.Module | None, flag: bool) -> None:
    if module is not None:
        for p in module.parameters():
            p.requires_grad_(flag)


def generator_losses(state: TrainState, out: GeneratorOutput, t: dict, local: bool) -> dict[str, torch.Tensor]:
    """Every generator-side loss term for one forward pass."""
    cfg = state.cfg
    hr, mask = t["hr"], t["mask"]
    terms = {}
    if state.d_global is not None:
        g_term = lsgan_g_loss(state.d_global(out.lr_f, out.hr_hat)).mean()
        l_term = lsgan_g_loss(state.d_local(mask_apply(out.hr_hat, mask))).mean() if local else 0.0
        terms["adversarial"] = total_adversarial(g_term, l_term)
    terms["pixel"] = pixel_loss(
        (mask_apply(hr, mask), mask_apply(out.hr_hat, mask)),
        (hr, out.hr_hat),
        (t["hrb"], out.hrb_hat),
    )
    terms["perceptual"] = perceptual_loss(out.hr_hat, hr, state.extractor)
    terms["total"] = total_generator_loss(terms.get("adversarial", 0.0), terms["pixel"], terms["perceptual"], cfg.weights)
    return terms


def discriminator_losses(state: TrainState, out: GeneratorOutput, t: dict, local: bool) -> dict[str, torch.Tensor]:
    terms = {}
    hr, mask = t["hr"], t["mask"]
    lr_f, fake = out.lr_f.detach(), out.hr_hat.detach()
    if state.d_global is not None:
        terms["d_global"] = lsgan_d_loss(state.d_global(lr_f, hr), state.d_global(lr_f, fake)).mean()
    if local:
        real_m, fake_m = mask_apply(hr, mask), mask_apply(fake, mask)
        terms["d_local"] = lsgan_d_loss(state.d_local(real_m), state.d_local(fake_m)).mean()
    return terms


def train_step(state: TrainState, batch: list[FaceSample], cfg: TrainConfig | None = None) -> tuple[TrainState, dict]:
    """One alternating update: discriminators first, then the generator.

    The state is updated in place and returned alongside the step log.
    """
    cfg = cfg or state.cfg
    if not batch:
        raise ValueError("empty batch")
    t = collate(batch)
    local = state.stage == 2 and state.d_local is not None
    step_log: dict = {"step": state.step, "epoch": state.epoch, "stage": state.stage}

    state.generator.train()
    out = state.generator(t["lr"], noise_seed=derive_seed(cfg.seed, "noise", state.step))

    # discriminator update on detached generator outputs
    _set_grad(state.d_global, True)
    _set_grad(state.d_local, local)
    d_terms = {}
    try:
        d_terms = discriminator_losses(state, out, t, local)
    except ValueError as exc:
        raise NonFiniteLossError(f"discriminator score at step {state.step}: {exc}") from exc
    for name, opt in (("d_global", state.opt_dg), ("d_local", state.opt_dl)):
        if name in d_terms:
            _checked(name, d_terms[name], state.step)
            opt.zero_grad(set_to_none=True)
            d_terms[name].backward()
            opt.step()

    # generator update against the refreshed discriminators
    _set_grad(state.d_global, False)
    _set_grad(state.d_local, False)
    try:
        g_terms = generator_losses(state, out, t, local)
    except ValueError as exc:
        raise NonFiniteLossError(f"generator adversarial score at step {state.step}: {exc}") from exc
    for name, value in g_terms.items():
        _checked(name, value, state.step)
    state.opt_g.zero_grad(set_to_none=True)
    g_terms["total"].backward()
    state.opt_g.step()

    for name, value in {**d_terms, **g_terms}.items():
        step_log[name] = float(value.detach())
    state.step += 1
    return state, step_log


# ---------------------------------------------------------------------------
# checkpoints


def checkpoint_record(state: TrainState) -> dict:
    return {
        "train": state.cfg.to_dict(paths=False),
        "generator": state.generator.cfg.to_dict(),
        "state": {"epoch": state.epoch, "step": state.step, "stage": state.stage},
    }


def save_checkpoint(state: TrainState, path: str | Path) -> Path:
    arrays = {}
    for section, net in state.networks().items():
        arrays.update(ckpt.module_arrays(net, section))
    for section, opt in state.optimizers().items():
        arrays.update(ckpt.optimizer_arrays(opt, f"optim/{section}"))
    return ckpt.save_archive(path, checkpoint_record(state), arrays)


def save_generator(generator: Generator, path: str | Path) -> Path:
    """Generator-only archive, enough for inference."""
    record = {"generator": generator.cfg.to_dict()}
    return ckpt.save_archive(path, record, ckpt.module_arrays(generator, "generator"))


def load_state(path: str | Path, cfg: TrainConfig | None = None) -> TrainState:
    record, arrays = ckpt.load_archive(path)
    if "train" not in record:
        raise ckpt.CheckpointError(f"{path} holds no training state")
    saved = TrainConfig.from_dict(record["train"])
    if cfg is None:
        cfg = saved
    elif cfg.to_dict(paths=False) != saved.to_dict(paths=False):
        raise ckpt.CheckpointError(f"{path} was written with a different configuration")
    state = init_state(cfg)
    for section, net in state.networks().items():
        ckpt.load_module(net, arrays, section)
    for section, opt in state.optimizers().items():
        ckpt.load_optimizer(opt, arrays, f"optim/{section}")
    s = record["state"]
    state.epoch, state.step, state.stage = s["epoch"], s["step"], s["stage"]
    return state


def load_generator(path: str | Path) -> Generator:
    """Rebuild the generator alone; discriminator sections are never read."""
    record, arrays = ckpt.load_archive(path, prefix="generator")
    if "generator" not in record:
        raise ckpt.CheckpointError(f"{path} holds no generator")
    gen = Generator(GeneratorConfig(**record["generator"]))
    ckpt.load_module(gen, arrays, "generator")
    return gen.eval()


def infer(generator: Generator | str | Path, lr, noise_seed: int | None = None) -> GeneratorOutput:
    """Pure forward pass. ``lr`` is an ``(H, W, 3)`` array or an ``(N, 3, H, W)`` tensor."""
    if not isinstance(generator, Generator):
        generator = load_generator(generator)
    x = lr if isinstance(lr, torch.Tensor) else image_to_tensor(lr)
    generator.eval()
    with torch.no_grad():
        return generator(x.to(next(generator.parameters()).dtype), noise_seed=noise_seed)


# ---------------------------------------------------------------------------
# main loop


def _load_train_samples(cfg: TrainConfig) -> list[FaceSample]:
    if not cfg.train_manifest:
        raise DatasetError("train_manifest is not set")
    samples = DatasetManifest.load(cfg.train_manifest).load_samples()
    if not samples:
        raise DatasetError("training set is empty")
    want = (cfg.lr_size, cfg.lr_size)
    for s in samples:
        if s.lr.shape[:2] != want:
            raise DatasetError(f"sample {s.id} has LR size {s.lr.shape[:2]}, config expects {want}")
    return samples


class JsonlLog:
    def __init__(self, path: Path | None):
        self.path = path
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, record: dict) -> None:
        if self.path is None:
            return
        with self.path.open("a") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")


def train(
    cfg: TrainConfig,
    resume: str | Path | None = None,
    stop_after_epoch: int | None = None,
    samples: list[FaceSample] | None = None,
    on_step=None,
) -> TrainState:
    """Stage 1 (G + D_g) for ``stage1_epochs``, then stage 2 adds D_l.

    Checkpoints go to ``{out_dir}/checkpoints`` every ``checkpoint_every``
    epochs and after the last one; step records are appended to
    ``{out_dir}/train_log.jsonl``.
    """
    torch.manual_seed(cfg.seed)
    samples = samples if samples is not None else _load_train_samples(cfg)
    if not samples:
        raise DatasetError("training set is empty")
    state = load_state(resume, cfg) if resume else init_state(cfg)
    out_dir = Path(cfg.out_dir)
    ckpt_dir = out_dir / "checkpoints"
    logger = JsonlLog(out_dir / "train_log.jsonl")

    n = len(samples)
    for epoch in range(state.epoch, cfg.total_epochs):
        stage = 1 if epoch < cfg.stage1_epochs else 2
        if epoch == 0 or epoch == cfg.stage1_epochs:
            logger.write({"event": "stage_start", "stage": stage, "epoch": epoch})
            log.info("epoch %d: entering stage %d", epoch, stage)
        state.stage = stage
        state.epoch = epoch
        order = np.random.default_rng(derive_seed(cfg.seed, "order", epoch)).permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = [
                augment_flip(samples[i], flip_for(cfg.seed, samples[i].id, epoch))
                for i in order[start : start + cfg.batch_size]
            ]
            t0 = time.perf_counter()
            state, record = train_step(state, batch, cfg)
            record["wall_time"] = time.perf_counter() - t0
            logger.write(record)
            if on_step is not None:
                on_step(record)
        state.epoch = epoch + 1
        last = epoch + 1 == cfg.total_epochs
        if last or (cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0):
            save_checkpoint(state, ckpt_dir / f"epoch_{epoch + 1:04d}.ckpt")
            save_checkpoint(state, ckpt_dir / "latest.ckpt")
        if stop_after_epoch is not None and epoch + 1 >= stop_after_epoch:
            break
    return state


def mean_pixel_loss(generator: Generator, samples: list[FaceSample]) -> float:
    """Noise-free pixel loss averaged over ``samples``."""
    t = collate(samples)
    out = infer(generator, t["lr"])
    mask = t["mask"]
    value = pixel_loss(
        (mask_apply(t["hr"], mask), mask_apply(out.hr_hat, mask)),
        (t["hr"], out.hr_hat),
        (t["hrb"], out.hrb_hat),
    )
    return float(value)


__all__ = [
    "NonFiniteLossError",
    "TrainState",
    "derive_seed",
    "flip_for",
    "infer",
    "init_state",
    "load_generator",
    "load_state",
    "mean_pixel_loss",
    "save_checkpoint",
    "save_generator",
    "train",
    "train_step",
]
