import math
import os

import numpy as np
import pytest

import synth
from pointprop import dataio
from pointprop.cli import main
from pointprop.core_types import InstanceMap, PointSet, ProbMap, RgbImage, TriLabelMap


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv("POINTPROP_SEED", raising=False)


def write_fixture_image(path, seed=0, size=48):
    rng = np.random.default_rng(seed)
    od, _ = synth.two_stain_od(rng, size, size)
    img = RgbImage(np.exp(-od.values))
    dataio.write_rgb(img, path)
    return img


def test_gen_voronoi_cli(tmp_path):
    pts = tmp_path / "p.csv"
    out = tmp_path / "vor.png"
    dataio.write_points(PointSet(((1, 2), (6, 2))), pts)
    assert main(["gen-voronoi", "--points", str(pts), "--size", "8x5", "--out", str(out)]) == 0
    label = dataio.read_trilabel(out)
    assert sorted({x for _, x in zip(*np.where(label.labels == 0))}) == [3, 4]


def test_gen_cluster_cli(tmp_path):
    rng = np.random.default_rng(1)
    imap, pts = synth.disk_instances(rng, 64, 64, n_disks=4)
    img = synth.disk_image(imap, rng)
    dataio.write_rgb(img, tmp_path / "img.png")
    dataio.write_points(pts, tmp_path / "p.csv")
    out = tmp_path / "clu.png"
    rc = main(
        ["gen-cluster", "--image", str(tmp_path / "img.png"),
         "--points", str(tmp_path / "p.csv"), "--out", str(out), "--seed", "0"]
    )
    assert rc == 0
    label = dataio.read_trilabel(out)
    assert set(np.unique(label.labels)) <= {0, 1, 2}
    for x, y in pts:
        assert label.labels[y, x] == 1


def test_stain_separate_cli(tmp_path):
    write_fixture_image(tmp_path / "img.png", seed=2)
    rc = main(
        ["stain-separate", "--in", str(tmp_path / "img.png"),
         "--out-h", str(tmp_path / "h.png"), "--out-e", str(tmp_path / "e.png"),
         "--out-model", str(tmp_path / "model.txt"), "--seed", "0"]
    )
    assert rc == 0
    h = dataio.read_gray(tmp_path / "h.png")
    assert h.height == 48
    model = dataio.read_stain_model(tmp_path / "model.txt")
    assert model.h_column == 0


def test_ema_cli_initializes_then_blends(tmp_path):
    pred1 = ProbMap(np.full((3, 3), 0.8))
    pred2 = ProbMap(np.full((3, 3), 0.4))
    dataio.write_probmap(pred1, tmp_path / "p1.pfg")
    dataio.write_probmap(pred2, tmp_path / "p2.pfg")
    state = tmp_path / "state.pfg"
    assert main(["ema", "--state", str(state), "--pred", str(tmp_path / "p1.pfg"),
                 "--decay", "0.5", "--out", str(state)]) == 0
    np.testing.assert_allclose(dataio.read_probmap(state).values, 0.8, atol=1e-7)
    assert main(["ema", "--state", str(state), "--pred", str(tmp_path / "p2.pfg"),
                 "--decay", "0.5", "--out", str(state)]) == 0
    np.testing.assert_allclose(dataio.read_probmap(state).values, 0.6, atol=1e-7)


def test_merge_cli(tmp_path):
    dataio.write_probmap(ProbMap(np.full((1, 3), 0.3)), tmp_path / "ema.pfg")
    dataio.write_trilabel(TriLabelMap(np.array([[0, 1, 2]])), tmp_path / "clu.png")
    assert main(["merge", "--ema", str(tmp_path / "ema.pfg"),
                 "--cluster", str(tmp_path / "clu.png"),
                 "--out", str(tmp_path / "ps.pfg")]) == 0
    out = dataio.read_probmap(tmp_path / "ps.pfg")
    np.testing.assert_allclose(out.values, [[0.0, 1.0, 0.3]], atol=1e-7)


def test_loss_cli_prints_nine_decimals(tmp_path, capsys):
    dataio.write_probmap(ProbMap(np.full((2, 2), 0.5)), tmp_path / "pred.pfg")
    dataio.write_trilabel(TriLabelMap(np.array([[0, 1], [1, 2]])), tmp_path / "lab.png")
    assert main(["loss", "vor", "--pred", str(tmp_path / "pred.pfg"),
                 "--labels", str(tmp_path / "lab.png")]) == 0
    line = capsys.readouterr().out.strip()
    assert len(line.split(".")[1]) == 9
    assert abs(float(line) - math.log(2.0)) < 1e-6

    dataio.write_probmap(ProbMap(np.ones((2, 2))), tmp_path / "pseudo.pfg")
    assert main(["loss", "cot", "--pseudo", str(tmp_path / "pseudo.pfg"),
                 "--pred", str(tmp_path / "pred.pfg")]) == 0
    assert abs(float(capsys.readouterr().out) - math.log(2.0)) < 1e-4

    a = RgbImage(np.full((2, 2, 3), 100 / 255.0))
    b = RgbImage(np.full((2, 2, 3), 50 / 255.0))
    dataio.write_rgb(a, tmp_path / "a.png")
    dataio.write_rgb(b, tmp_path / "b.png")
    assert main(["loss", "color", "--pred", str(tmp_path / "a.png"),
                 "--target", str(tmp_path / "b.png")]) == 0
    assert abs(float(capsys.readouterr().out) - 3 * (50 / 255.0) ** 2) < 1e-6


def test_eval_cli_with_figure_and_csv(tmp_path, capsys):
    rng = np.random.default_rng(3)
    gt, _ = synth.disk_instances(rng, 48, 48, n_disks=3)
    dataio.write_instancemap(gt, tmp_path / "gt.png")
    dataio.write_probmap(ProbMap((gt.ids > 0).astype(float)), tmp_path / "pred.pfg")
    rc = main(["eval", "--pred", str(tmp_path / "pred.pfg"), "--gt", str(tmp_path / "gt.png"),
               "--csv", str(tmp_path / "m.csv"), "--fig", str(tmp_path / "m.png")])
    assert rc == 0
    out = capsys.readouterr().out.strip()
    assert out == "acc=1.0000 f1=1.0000 dice_obj=1.0000 aji=1.0000"
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "accuracy,f1,dice_obj,aji"
    assert (tmp_path / "m.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_perturb_cli_and_seed_env(tmp_path, monkeypatch):
    pts = PointSet(tuple((i * 5 + 2, i * 3 + 2) for i in range(5)))
    dataio.write_points(pts, tmp_path / "p.csv")
    base = ["perturb", "--points", str(tmp_path / "p.csv"), "--shift", "3",
            "--size", "40x40", "--out", str(tmp_path / "out.csv")]
    assert main(base + ["--seed", "1"]) == 0
    first = dataio.read_points(tmp_path / "out.csv").points
    monkeypatch.setenv("POINTPROP_SEED", "2")
    assert main(base + ["--seed", "1"]) == 0  # env wins over the flag
    second = dataio.read_points(tmp_path / "out.csv").points
    monkeypatch.delenv("POINTPROP_SEED")
    assert main(base + ["--seed", "2"]) == 0
    third = dataio.read_points(tmp_path / "out.csv").points
    assert first != second
    assert second == third


def test_perturb_study_cli(tmp_path):
    rng = np.random.default_rng(4)
    gt, pts = synth.disk_instances(rng, 64, 64, n_disks=4)
    dataio.write_instancemap(gt, tmp_path / "gt.png")
    dataio.write_points(pts, tmp_path / "p.csv")
    rc = main(["perturb-study", "--points", str(tmp_path / "p.csv"),
               "--gt", str(tmp_path / "gt.png"), "--shifts", "0,4",
               "--seeds", "3", "--out-csv", str(tmp_path / "study.csv"),
               "--out-fig", str(tmp_path / "study.png")])
    assert rc == 0
    lines = (tmp_path / "study.csv").read_text().splitlines()
    assert lines[0] == "shift,in_nucleus_ratio"
    assert lines[1].startswith("0,1.000000")
    assert (tmp_path / "study.png").exists()


def test_split_cli(tmp_path):
    ids = tmp_path / "ids.txt"
    ids.write_text("".join("img%02d\n" % i for i in range(20)))
    rc = main(["split", "--ids", str(ids), "--ratio", "0.4", "--seed", "0",
               "--out-a", str(tmp_path / "a.txt"), "--out-b", str(tmp_path / "b.txt")])
    assert rc == 0
    a = (tmp_path / "a.txt").read_text().split()
    b = (tmp_path / "b.txt").read_text().split()
    assert len(a) == 14 and len(set(a) & set(b)) == 5


def test_tile_and_stitch_cli(tmp_path):
    assert main(["tile", "--size", "500x500", "--patch", "224", "--overlap", "80",
                 "--out", str(tmp_path / "grid.csv")]) == 0
    origins = dataio.read_points(tmp_path / "grid.csv")
    assert sorted({x for x, _ in origins}) == [0, 144, 276]

    rng = np.random.default_rng(5)
    vals = rng.uniform(size=(16, 16)).astype(np.float32).astype(np.float64)
    rows = ["x,y,path"]
    for i, (x, y) in enumerate([(0, 0), (8, 0), (0, 8), (8, 8)]):
        name = "patch%d.pfg" % i
        dataio.write_probmap(ProbMap(vals[y : y + 8, x : x + 8]), tmp_path / name)
        rows.append("%d,%d,%s" % (x, y, name))
    (tmp_path / "patches.csv").write_text("\n".join(rows) + "\n")
    assert main(["stitch", "--size", "16x16", "--patches", str(tmp_path / "patches.csv"),
                 "--out", str(tmp_path / "full.pfg")]) == 0
    np.testing.assert_allclose(dataio.read_probmap(tmp_path / "full.pfg").values, vals, atol=1e-7)


def test_cli_errors_exit_nonzero_and_write_nothing(tmp_path, capsys):
    missing = str(tmp_path / "nope.csv")
    out = tmp_path / "vor.png"
    assert main(["gen-voronoi", "--points", missing, "--size", "8x8", "--out", str(out)]) == 1
    assert "error" in capsys.readouterr().err
    assert not out.exists()

    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n1,2\n")
    assert main(["gen-voronoi", "--points", str(bad), "--size", "8x8", "--out", str(out)]) == 1
    assert not out.exists()
    assert not any(n.startswith(".tmp") for n in os.listdir(tmp_path))


def test_cli_rejects_bad_size():
    with pytest.raises(SystemExit):
        main(["gen-voronoi", "--points", "p.csv", "--size", "8by8", "--out", "o.png"])
