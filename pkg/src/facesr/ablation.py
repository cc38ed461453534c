"""Component ablations: train each variant, evaluate it, tabulate the results."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .data import DatasetManifest
from .losses import make_extractor
from .metrics import MetricsReport, evaluate, format_table
from .training import infer, train

# model1 = no learned head, model2 = no discriminators, model3 = no local critic
MODES: dict[str, dict] = {
    "baseline": {},
    "no-head": {"use_head": False},
    "no-discs": {"use_global": False, "use_local": False},
    "no-local": {"use_local": False},
    "with-noise": {"noise_enabled": True},
}

EVAL_NOISE_SEED = 0


def parse_modes(text: str) -> list[str]:
    modes = [m.strip() for m in text.split(",") if m.strip()]
    unknown = [m for m in modes if m not in MODES]
    if unknown:
        raise ValueError(f"unknown mode(s) {', '.join(unknown)}; choose from {', '.join(MODES)}")
    if not modes:
        raise ValueError("no modes given")
    return modes


def seed_spread(generator, lr: np.ndarray, seeds=(0, 1)) -> float:
    """Max absolute difference between ``hr_hat`` for two noise seeds."""
    a = infer(generator, lr, noise_seed=seeds[0]).hr_hat
    b = infer(generator, lr, noise_seed=seeds[1]).hr_hat
    return float((a - b).abs().max())


def run_ablation(cfg: TrainConfig, modes: list[str], out_dir: str | Path) -> dict[str, dict]:
    """Train and evaluate each mode under ``out_dir/<mode>``; returns per-mode results."""
    if not cfg.test_manifest:
        raise ValueError("ablation needs test_manifest in the config")
    out_dir = Path(out_dir)
    test = DatasetManifest.load(cfg.test_manifest)
    fx = make_extractor(cfg.extractor, cfg.extractor_seed)
    first_lr = test.load_sample(sorted(test.entries, key=lambda e: e["id"])[0]).lr
    results: dict[str, dict] = {}
    reports: dict[str, MetricsReport] = {}
    for mode in modes:
        run_dir = out_dir / mode
        variant = cfg.replace(**MODES[mode], out_dir=str(run_dir))
        state = train(variant)
        report = evaluate(state.generator, test, fx, noise_seed=EVAL_NOISE_SEED)
        report.write(run_dir / "eval")
        reports[mode] = report
        results[mode] = {**report.summary(), "seed_spread": seed_spread(state.generator, first_lr)}
    (out_dir / "ablation.json").write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
    (out_dir / "ablation.txt").write_text(format_table(reports) + "\n")
    return results
