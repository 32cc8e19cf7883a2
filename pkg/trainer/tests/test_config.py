import pytest

from scnet_trainer.config import TrainConfig, load_config, parse_config


def test_defaults():
    cfg = TrainConfig()
    assert cfg.epochs == 30
    assert cfg.lr == 1e-3
    assert cfg.lr_step == 30 and cfg.lr_gamma == 0.1
    assert cfg.weight_decay == 5e-4
    assert cfg.ema_period == 3 and cfg.ema_decay == 0.5
    assert cfg.eta == 1.0 and cfg.epsilon == 0.1
    assert cfg.use_clu and cfg.use_cot and cfg.use_color
    assert cfg.split_ratio == 0.25
    assert cfg.augment is False
    assert cfg.toolkit == "pointprop"


def test_parse_overrides_and_comments():
    cfg = parse_config(
        """
        # training length
        epochs = 6
        lr = 0.01          # bumped for the smoke run
        use_color = 0
        parity_epochs = 0,3,6
        toolkit = /opt/bin/pointprop
        """
    )
    assert cfg.epochs == 6
    assert cfg.lr == 0.01
    assert cfg.use_color is False
    assert cfg.parity_epoch_list() == [0, 3, 6]
    assert cfg.toolkit == "/opt/bin/pointprop"


def test_parse_rejects_unknown_key():
    with pytest.raises(ValueError, match="unknown key"):
        parse_config("learning_rate = 0.1\n")


def test_parse_rejects_duplicate_key():
    with pytest.raises(ValueError, match="duplicate"):
        parse_config("epochs = 3\nepochs = 4\n")


def test_parse_rejects_non_bool_flag():
    with pytest.raises(ValueError, match="expects 0 or 1"):
        parse_config("use_cot = maybe\n")


def test_parse_rejects_missing_equals():
    with pytest.raises(ValueError, match="key = value"):
        parse_config("epochs 3\n")


@pytest.mark.parametrize(
    "kwargs",
    [
        {"epochs": 0},
        {"lr": -1.0},
        {"ema_period": 0},
        {"ema_decay": 0.0},
        {"ema_decay": 1.5},
        {"split_ratio": 1.5},
        {"val_count": 0},
        {"overlap": 48},  # equal to patch
        {"overlap": -1},
        {"parity_images": 0},
        {"parity_epochs": "-3"},
    ],
)
def test_invariants_rejected(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_parity_epoch_list_sorted_and_empty():
    assert TrainConfig().parity_epoch_list() == []
    assert TrainConfig(parity_epochs="6, 0 ,3").parity_epoch_list() == [0, 3, 6]


def test_load_config(tmp_path):
    path = tmp_path / "train.cfg"
    path.write_text("epochs = 12\nseed = 7\n")
    cfg = load_config(str(path))
    assert cfg.epochs == 12 and cfg.seed == 7
