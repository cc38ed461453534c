import pytest

from facesr.config import ConfigError, TrainConfig, dump_config, load_config, parse_config


def test_defaults():
    cfg = TrainConfig()
    assert (cfg.lr, cfg.beta1, cfg.beta2, cfg.batch_size) == (0.0002, 0.5, 0.999, 64)
    assert (cfg.stage1_epochs, cfg.stage2_epochs) == (200, 100)
    assert (cfg.weights.lambda1, cfg.weights.lambda2) == (100.0, 10.0)
    assert cfg.total_epochs == 300


@pytest.mark.parametrize(
    "bad",
    [dict(lr=-1.0), dict(beta1=1.0), dict(beta2=-0.1), dict(batch_size=0), dict(stage1_epochs=-1),
     dict(use_global=False), dict(base_channels=4), dict(lambda1=-1.0)],
)
def test_validation(bad):
    with pytest.raises(ConfigError):
        TrainConfig(**bad)


def test_parse_and_types():
    text = """
    # comment
    lr = 0.001
    batch_size = 4   # trailing
    noise_enabled = yes
    out_dir = "runs/x"
    """
    d = parse_config(text)
    assert d == {"lr": 0.001, "batch_size": 4, "noise_enabled": True, "out_dir": "runs/x"}


@pytest.mark.parametrize(
    "text, msg",
    [("lr 0.1", "cfg:1: expected 'key = value'"), ("\nfoo = 1", "cfg:2: unknown field 'foo'"),
     ("batch_size = many", "cfg:1: field 'batch_size'"), ("smooth = maybe", "field 'smooth'")],
)
def test_parse_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text, "cfg")


def test_load_with_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("lr = 0.5\nseed = 3\n")
    cfg = load_config(path, seed=9, lr=None)
    assert cfg.lr == 0.5 and cfg.seed == 9
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.cfg")


def test_dump_round_trip(tmp_path):
    cfg = TrainConfig(lr=0.01, noise_enabled=True, out_dir="o", extractor="random")
    path = tmp_path / "c.cfg"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


def test_dict_without_paths():
    d = TrainConfig().to_dict(paths=False)
    assert "out_dir" not in d and "train_manifest" not in d and "lr" in d
    assert TrainConfig.from_dict({**d, "future_field": 1}) == TrainConfig(out_dir=TrainConfig().out_dir)
