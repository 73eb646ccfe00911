"""End-to-end smoke tests for the python surface."""

import json
import math
import os
import tempfile

import numpy as np
import pytest

import sted


def test_voxelize_mass_conservation():
    rng = np.random.default_rng(0)
    n = 500
    t = np.sort(rng.integers(0, 10_000, n).astype(np.uint64))
    x = rng.integers(0, 16, n)
    y = rng.integers(0, 12, n)
    p = rng.choice([-1, 1], n)
    for bins in (1, 3, 6):
        grid = sted.voxelize(t, x, y, p, width=16, height=12, t_start=0, t_end=10_000, bins=bins)
        assert grid.shape == (bins, 12, 16)
        assert abs(grid.sum() - p.sum()) < 1e-6


def test_backward_warp_identity_and_shift():
    rng = np.random.default_rng(1)
    img = rng.random((2, 8, 16))
    same = sted.backward_warp(img, np.zeros((8, 16)))
    np.testing.assert_allclose(same, img)
    shifted = sted.backward_warp(img, np.full((8, 16), 3.0))
    np.testing.assert_allclose(shifted[:, :, 3:], img[:, :, :-3], atol=1e-12)
    np.testing.assert_allclose(shifted[:, :, :3], 0)


def test_pixel_shuffle_round_trip():
    rng = np.random.default_rng(2)
    img = rng.random((3, 8, 8))
    np.testing.assert_array_equal(sted.pixel_shuffle(sted.pixel_unshuffle(img, 2), 2), img)


def test_psnr_analytic():
    rng = np.random.default_rng(3)
    a = rng.random((3, 16, 16)) * 0.9
    assert sted.psnr(a, a) == 99.0
    assert abs(sted.psnr(a, a + 0.1) - 20.0) < 1e-6
    assert abs(sted.ssim(a, a) - 1.0) < 1e-9


def test_simulator_constant_video_silent():
    frames = np.full((4, 6, 6), 0.5)
    ev = sted.simulate_events(frames, [0, 100, 200, 300])
    assert len(ev["t"]) == 0


def test_edi_empty_stream_returns_blurry():
    blurry = np.full((4, 4), 0.3)
    empty = np.array([], dtype=np.uint64)
    frames = sted.edi_deblur(blurry, empty, empty.astype(np.int64), empty.astype(np.int64),
                             empty.astype(np.int64), t_start=0, t_end=1000, c=0.2, m=3)
    assert len(frames) == 3
    for f in frames:
        np.testing.assert_allclose(f, blurry, atol=1e-12)


def test_generate_train_evaluate_round_trip():
    with tempfile.TemporaryDirectory() as tmp:
        data_dir = os.path.join(tmp, "ds")
        out_dir = os.path.join(tmp, "run")
        n = sted.generate_dataset(data_dir, samples=2, height=32, width=32, layers=2, seed=4,
                                  frames=2, channels=1, max_disp=8)
        assert n == 2
        assert os.path.exists(os.path.join(data_dir, "manifest.json"))
        with open(os.path.join(data_dir, "manifest.json")) as fh:
            manifest = json.load(fh)
        assert manifest["n_samples"] == 2

        config = json.dumps({
            "batch": 2, "crop": 32, "voxel_bins": 2, "lr0": 1e-3, "max_steps": 2,
            "dispnet": {"widths": [4, 6, 8, 12], "max_disparity": 8},
            "dblrnet": {"feature_channels": 8, "num_ddfe": 1, "warp_groups": 2,
                        "out_frames": 2, "out_channels": 1, "rdb_growth": 4, "rdb_layers": 2},
            "perceptual": {"plan": [2, -1, 3]},
        })
        losses = sted.train(data_dir, out_dir, config)
        assert len(losses) == 2
        assert all(math.isfinite(v) for v in losses)

        report = sted.evaluate(data_dir, os.path.join(out_dir, "ckpt_final"))
        assert report["n_samples"] == 2
        assert math.isfinite(report["psnr_mid"])
        assert report["epe"] >= 0.0


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
