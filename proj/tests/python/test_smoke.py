import math

import numpy as np
import pytest

import onetracker


def test_cli_help_runs():
    code, out, err = onetracker.run_cli(["--help"])
    assert code == 0
    assert "gen-data" in out
    assert err == ""


def test_cli_rejects_unknown_subcommand():
    code, out, err = onetracker.run_cli(["frobnicate"])
    assert code == 1
    assert "error" in err


def test_generate_clip_is_deterministic():
    a = onetracker.generate_clip(7, length=3, frame_size=64)
    b = onetracker.generate_clip(7, length=3, frame_size=64)
    assert a["length"] == 3
    assert a["size"] == 64
    for key in ("frames", "masks", "depth", "thermal", "event"):
        for fa, fb in zip(a[key], b[key]):
            np.testing.assert_array_equal(np.asarray(fa), np.asarray(fb))
    assert a["boxes"] == b["boxes"]
    assert a["sentence"] == b["sentence"]

    c = onetracker.generate_clip(8, length=3, frame_size=64)
    assert not np.array_equal(np.asarray(a["frames"][0]), np.asarray(c["frames"][0]))


def test_clip_payload_shapes():
    clip = onetracker.generate_clip(3, length=2, frame_size=48)
    frame = np.asarray(clip["frames"][0])
    assert frame.shape == (3, 48, 48)
    assert frame.min() >= 0.0 and frame.max() <= 1.0
    mask = np.asarray(clip["masks"][0])
    assert mask.shape == (1, 48, 48)
    assert set(np.unique(mask)) <= {0.0, 1.0}
    x, y, w, h = clip["boxes"][0]
    assert w > 0 and h > 0
    assert 0 <= x < 48 and 0 <= y < 48


def test_tokenize():
    ids = onetracker.tokenize("track the red square")
    assert len(ids) == 4
    assert all(i > 1 for i in ids)  # no <pad>/<unk>
    assert onetracker.tokenize("") == [1]
    assert onetracker.tokenize("TRACK the red square!") == ids


def test_hanning_window():
    w = np.asarray(onetracker.hanning_window(5))
    np.testing.assert_allclose(w, [0.0, 0.5, 1.0, 0.5, 0.0], atol=1e-12)
    with pytest.raises(Exception):
        onetracker.hanning_window(1)


def test_success_auc_golden():
    assert onetracker.success_auc([1.0] * 4) == pytest.approx(1.0)
    assert onetracker.success_auc([1.0, 0.0]) == pytest.approx(26.0 / 51.0)


def test_giou():
    box = (50.0, 50.0, 20.0, 20.0)
    assert onetracker.giou(box, box) == pytest.approx(1.0)
    far = (500.0, 500.0, 20.0, 20.0)
    assert onetracker.giou(box, far) < 0.0


def test_end_to_end_pipeline(tmp_path):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text(
        "\n".join(
            [
                "dim=16",
                "depth=2",
                "heads=4",
                "patch_size=8",
                "template_size=32",
                "search_size=64",
                "gen_length=3",
                "gen_clips=1",
                "steps=2",
                "seed=5",
            ]
        )
        + "\n"
    )
    data = tmp_path / "data"
    ckpt = tmp_path / "found.otkr"

    code, out, err = onetracker.run_cli(
        ["gen-data", "--config", str(cfg), "--out", str(data)]
    )
    assert code == 0, err
    assert (data / "clip_0000" / "boxes.txt").exists()

    code, out, err = onetracker.run_cli(
        ["pretrain", "--config", str(cfg), "--data", str(data), "--out", str(ckpt)]
    )
    assert code == 0, err
    assert ckpt.exists()

    code, out, err = onetracker.run_cli(
        [
            "eval",
            "--config",
            str(cfg),
            "--data",
            str(data),
            "--checkpoint",
            str(ckpt),
        ]
    )
    assert code == 0, err
    assert "auc=" in out
    keyvals = dict(
        line.split("=", 1)
        for line in out.splitlines()
        if "=" in line and not line.startswith("config ")
    )
    assert 0.0 <= float(keyvals["auc"]) <= 1.0
    assert math.isfinite(float(keyvals["mean_iou"]))
