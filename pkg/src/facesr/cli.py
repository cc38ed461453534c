"""Command-line entry point: ``facesr {toy,synth,train,infer,eval,ablate}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .checkpoint import CheckpointError
from .config import ConfigError, TrainConfig, load_config
from .data import DEFAULT_MAX_BLUR, DatasetError, DatasetManifest, build_manifest, load_image, make_toy_dataset, resize_bicubic, save_image

log = logging.getLogger("facesr")

_EXPECTED = (ConfigError, DatasetError, CheckpointError, OSError, ValueError)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    """One ``--flag`` per TrainConfig field; ``None`` means "keep the config value"."""
    defaults = TrainConfig()
    group = p.add_argument_group("config overrides")
    for f in fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        default = getattr(defaults, f.name)
        if f.type == "bool":
            group.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None,
                               help=f"(default: {str(default).lower()})")
        else:
            kind = {"int": int, "float": float}.get(f.type, str)
            group.add_argument(flag, dest=f.name, type=kind, default=None, help=f"(default: {default!r})")


def _overrides(args) -> dict:
    return {f.name: getattr(args, f.name) for f in fields(TrainConfig)}


def cmd_toy(args) -> int:
    hr_dir, mask_dir = make_toy_dataset(args.out, n=args.n, size=args.size, seed=args.seed)
    print(f"wrote {args.n} toy faces to {hr_dir} and masks to {mask_dir}")
    return 0


def cmd_synth(args) -> int:
    train, test = build_manifest(
        args.hr_dir, args.mask_dir, args.out,
        n_train=args.n_train, n_test=args.n_test, seed=args.seed,
        max_blur=args.max_blur, hr_size=args.hr_size, workers=args.workers,
    )
    print(f"train: {len(train.entries)} samples -> {train.root / 'manifest.json'}")
    print(f"test:  {len(test.entries)} samples -> {test.root / 'manifest.json'}")
    print(f"seed={args.seed} max_blur={args.max_blur} out={args.out}")
    return 0


def cmd_train(args) -> int:
    from .training import train

    cfg = load_config(args.config, **_overrides(args))
    state = train(cfg, resume=args.resume)
    print(f"trained {state.epoch} epochs ({state.step} steps); checkpoints in {Path(cfg.out_dir) / 'checkpoints'}")
    return 0


def _variant_path(out: Path, k: int, n: int, suffix: str = "") -> Path:
    stem = out.stem + suffix + (f"_{k}" if n > 1 else "")
    return out.with_name(stem + (out.suffix or ".png"))


def cmd_infer(args) -> int:
    from .generator import tensor_to_image
    from .training import infer, load_generator

    gen = load_generator(args.checkpoint)
    size = gen.cfg.lr_size
    img = load_image(args.input)
    if img.shape[:2] != (size, size):
        log.warning("input is %dx%d; resizing to %dx%d with bicubic", img.shape[1], img.shape[0], size, size)
        img = resize_bicubic(img, size, size)
    if args.variants < 1:
        raise ValueError("--variants must be >= 1")
    if args.variants > 1 and not gen.cfg.noise_enabled:
        log.warning("checkpoint has noise disabled; all %d variants will be identical", args.variants)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    for k in range(args.variants):
        result = infer(gen, img, noise_seed=args.noise_seed + k)
        path = _variant_path(out, k, args.variants)
        save_image(path, tensor_to_image(result.hr_hat))
        print(path)
        if args.emit_blur:
            blur_path = _variant_path(out, k, args.variants, "_blur")
            save_image(blur_path, tensor_to_image(result.hrb_hat))
            print(blur_path)
    return 0


def cmd_eval(args) -> int:
    from .losses import make_extractor
    from .metrics import evaluate, file_id, format_table
    from .training import load_generator

    if args.checkpoint is None and not args.self_check:
        raise ValueError("--checkpoint is required unless --self-check is given")
    manifest = DatasetManifest.load(args.manifest)
    gen = load_generator(args.checkpoint) if args.checkpoint else None
    fx = make_extractor(args.extractor, args.extractor_seed)
    report = evaluate(gen, manifest, fx, noise_seed=args.noise_seed, self_check=args.self_check,
                      checkpoint_id=file_id(args.checkpoint))
    report_path, csv_path = report.write(args.out)
    print(format_table({"GT" if args.self_check else "Ours": report}))
    print(f"report: {report_path}\nper-sample: {csv_path}")
    return 0


def cmd_ablate(args) -> int:
    from .ablation import parse_modes, run_ablation

    modes = parse_modes(args.modes)
    cfg = load_config(args.config, **_overrides(args))
    out = Path(args.out) if args.out else Path(cfg.out_dir) / "ablation"
    results = run_ablation(cfg, modes, out)
    print((out / "ablation.txt").read_text(), end="")
    for mode, r in results.items():
        print(f"{mode}: seed spread {r['seed_spread']:.3g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="facesr", description="Joint 8x face super-resolution and deblurring GAN.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy", help="write a procedural toy face dataset", formatter_class=fmt)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("synth", help="synthesize blurred LR/HR training data", formatter_class=fmt)
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--mask-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=28_800)
    p.add_argument("--n-test", type=int, default=1_200)
    p.add_argument("--max-blur", type=float, default=DEFAULT_MAX_BLUR)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hr-size", type=int, default=256)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run staged adversarial training", formatter_class=fmt)
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="reconstruct HR faces from an LR image", formatter_class=fmt)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--variants", type=int, default=1)
    p.add_argument("--emit-blur", action="store_true", help="also write the blurred reconstruction")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="PSNR/SSIM/FID over a test manifest", formatter_class=fmt)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--self-check", action="store_true", help="score ground truth against itself")
    p.add_argument("--extractor", default="auto", choices=["auto", "random", "vgg19"])
    p.add_argument("--extractor-seed", type=int, default=0)
    p.add_argument("--noise-seed", type=int, default=None, help="inject noise (noise-enabled checkpoints only)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare component ablations", formatter_class=fmt)
    p.add_argument("--config", default=None)
    p.add_argument("--modes", default="baseline,no-head,no-discs,no-local,with-noise")
    p.add_argument("--out", default=None, help="defaults to <out_dir>/ablation")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except _EXPECTED as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:  # non-finite losses
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
