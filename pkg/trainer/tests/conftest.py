import os

import pytest

from scnet_trainer import data
from scnet_trainer.config import TrainConfig
from scnet_trainer.train import Layout, prepare


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """A small prepared corpus shared by the training/inference tests:
    8 synthetic 48x48 images with toolkit artifacts and id splits."""
    root = tmp_path_factory.mktemp("corpus")
    data.make_dataset(str(root / "data"), n_images=8, size=48, seed=3)
    cfg = TrainConfig(epochs=2, val_count=2, test_count=2, seg_base=8,
                      color_base=8, workers=2)
    layout = Layout(
        images=str(root / "data" / "images"),
        points=str(root / "data" / "points"),
        gt=str(root / "data" / "gt"),
        artifacts=str(root / "artifacts"),
        splits=str(root / "splits"),
        out=str(root / "prepare-out"),
    )
    prepare(cfg, layout)
    return cfg, layout
