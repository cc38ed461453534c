import numpy as np
import pytest
import torch

from facesr.config import TrainConfig
from facesr.data import build_manifest, make_toy_dataset

ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(tag, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    tag, title = marker.args
    # shared training runs happen in fixture setup, so count it too
    if rep.when == "setup":
        item._criterion_setup = rep.duration
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        status = "PASS" if rep.passed else "FAIL"
        elapsed = rep.duration + (getattr(item, "_criterion_setup", 0.0) if rep.when == "call" else 0.0)
        line = f"{status} {tag} {title} ({elapsed:.1f}s)"
        ACCEPTANCE_LINES.append(line)
        print(f"\n{line}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_dirs(tmp_path_factory):
    """Ten 64px toy faces and masks."""
    root = tmp_path_factory.mktemp("toy64")
    return make_toy_dataset(root, n=10, size=64, seed=0)


@pytest.fixture(scope="session")
def toy_manifests(toy_dirs, tmp_path_factory):
    hr_dir, mask_dir = toy_dirs
    out = tmp_path_factory.mktemp("ds64")
    return build_manifest(hr_dir, mask_dir, out, n_train=8, n_test=2, seed=1, max_blur=4, hr_size=64)


@pytest.fixture(scope="session")
def toy_samples(toy_manifests):
    return toy_manifests[0].load_samples()


@pytest.fixture
def tiny_cfg(toy_manifests, tmp_path):
    """Smallest legal model on 8x8 -> 64x64 data; a couple of epochs per stage."""
    train, test = toy_manifests
    return TrainConfig(
        lr_size=8,
        base_channels=8,
        disc_channels=8,
        encoder_depth=5,
        batch_size=4,
        stage1_epochs=1,
        stage2_epochs=1,
        checkpoint_every=1,
        extractor="random",
        train_manifest=str(train.root),
        test_manifest=str(test.root),
        out_dir=str(tmp_path / "run"),
    )
