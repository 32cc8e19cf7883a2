import os

import torch

from scnet_trainer.cli import main
from scnet_trainer.model import ScNet


def test_make_data_writes_corpus(tmp_path, capsys):
    out = str(tmp_path / "data")
    rc = main(["make-data", "--out", out, "--images", "3", "--size", "48"])
    assert rc == 0
    assert "wrote 3 images" in capsys.readouterr().out
    assert sorted(os.listdir(out)) == ["gt", "images", "points"]
    assert len(os.listdir(os.path.join(out, "images"))) == 3


def test_prepare_then_train_smoke(tmp_path, capsys):
    root = tmp_path
    assert main(["make-data", "--out", str(root / "data"),
                 "--images", "6", "--size", "48"]) == 0
    cfg = root / "train.cfg"
    cfg.write_text(
        "epochs = 1\nval_count = 1\ntest_count = 1\n"
        "use_cot = 0\nuse_color = 0\nseg_base = 4\ncolor_base = 4\n"
    )
    common = [
        "--config", str(cfg),
        "--images", str(root / "data" / "images"),
        "--points", str(root / "data" / "points"),
        "--artifacts", str(root / "artifacts"),
        "--splits", str(root / "splits"),
    ]
    assert main(["prepare"] + common) == 0
    assert main(["train"] + common + ["--out", str(root / "run")]) == 0
    out = capsys.readouterr().out
    assert "best epoch 1" in out
    assert os.path.exists(root / "run" / "best.pt")


def test_infer_command(tmp_path, capsys):
    root = tmp_path
    assert main(["make-data", "--out", str(root / "data"),
                 "--images", "4", "--size", "48"]) == 0
    cfg = root / "train.cfg"
    cfg.write_text("seg_base = 4\ncolor_base = 4\nval_count = 1\ntest_count = 1\n")
    assert main(["prepare",
                 "--config", str(cfg),
                 "--images", str(root / "data" / "images"),
                 "--points", str(root / "data" / "points"),
                 "--artifacts", str(root / "artifacts"),
                 "--splits", str(root / "splits")]) == 0

    torch.manual_seed(0)
    net = ScNet(4, 4, 3, 4)
    ckpt = str(root / "pair.pt")
    torch.save({"epoch": 0, "model_a": net.state_dict(),
                "model_b": net.state_dict()}, ckpt)
    rc = main(["infer",
               "--config", str(cfg),
               "--checkpoint", ckpt,
               "--names", str(root / "splits" / "val.txt"),
               "--artifacts", str(root / "artifacts"),
               "--out", str(root / "maps")])
    assert rc == 0
    assert "wrote 1 stitched maps" in capsys.readouterr().out
    names = (root / "splits" / "val.txt").read_text().split()
    assert os.path.exists(root / "maps" / (names[0] + ".pfg"))


def test_errors_exit_nonzero(tmp_path, capsys):
    rc = main(["train",
               "--images", str(tmp_path), "--points", str(tmp_path),
               "--artifacts", str(tmp_path), "--splits", str(tmp_path),
               "--out", str(tmp_path / "run")])
    assert rc == 1
    assert "scnet-trainer: error:" in capsys.readouterr().err

    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("epochs = 0\n")
    rc = main(["prepare", "--config", str(bad_cfg),
               "--images", str(tmp_path), "--points", str(tmp_path),
               "--artifacts", str(tmp_path), "--splits", str(tmp_path)])
    assert rc == 1
    assert "must be positive" in capsys.readouterr().err