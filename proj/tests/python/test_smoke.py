"""Python smoke tests for the compiled module and the CLI surface.

These exercise interop (numpy in/out, npz artifacts readable by numpy, CLI
subcommands) rather than numerics; the C++ suites own the math.
"""

import json
import os
import subprocess

import numpy as np
import pytest

import _diffmark as dm


def test_schedule_tables():
    s = dm.make_linear_schedule(100, 1e-3, 0.2)
    assert s.T == 100
    alpha_bar = np.asarray(s.alpha_bar)
    assert alpha_bar[0] == 1.0
    assert np.all(np.diff(alpha_bar) < 0)
    f2 = np.asarray(s.f2_table)
    assert f2[0] == 0.0
    assert abs(f2.max() - 1.0) < 1e-9
    assert dm.compute_f1(s, 0, dm.F1Mode.theorem) == 1.0
    assert dm.compute_f1(s, 5, dm.F1Mode.zero) == 0.0


def test_forward_pair_and_posterior():
    s = dm.make_linear_schedule(50, 2e-3, 0.25)
    pattern = dm.make_pattern(dm.MarkShape.square, dm.MarkPosition.bottom_right, 5, 16, 16)
    spec = dm.WatermarkSpec(pattern, gamma=0.8, t_A=25, f1_mode=dm.F1Mode.zero)
    x0 = np.full((16, 16), -0.5)
    pair = dm.build_training_pair(x0, 10, spec, s, seed=7)
    assert pair["stage"] == "embedding"
    assert pair["x_t_prime"].shape == (16, 16)
    # eps'' = gamma eps' + (1-gamma) K x_A_scaled: off-mark pixels carry only
    # the noise term
    off_mark = pair["target"][0, 0]
    assert off_mark == pytest.approx(0.8 * pair["eps_prime"][0, 0])

    mu, sigma_sq = dm.posterior_params(x0, np.zeros((16, 16)), 1, s, 0.8)
    assert sigma_sq == 0.0
    assert mu.shape == (16, 16)


def test_sampler_with_python_denoiser():
    s = dm.make_linear_schedule(30, 5e-3, 0.3)
    pattern = dm.make_pattern(dm.MarkShape.square, dm.MarkPosition.bottom_right, 4, 8, 8)
    spec = dm.WatermarkSpec(pattern, gamma=0.8, t_A=15, f1_mode=dm.F1Mode.zero)

    calls = []

    def denoiser(x, t):
        calls.append(t)
        return 0.1 * x

    out = dm.sample(denoiser, s, spec, batch_size=3, snapshot_steps=[15],
                    height=8, width=8, seed=11)
    assert sorted(calls, reverse=True) == list(range(30, 0, -1))
    assert out["finals"].shape == (3, 8, 8)
    assert 15 in out["snapshots"]
    assert np.all(np.abs(out["finals"]) <= 1.0)  # gamma-divided + clamped
    avg = dm.average_snapshot(out["snapshots"][15])
    assert avg.shape == (8, 8)


def test_verify_roundtrip():
    pattern = dm.make_pattern(dm.MarkShape.square, dm.MarkPosition.bottom_right, 7, 28, 28)
    report = dm.verify(pattern, pattern, threshold=0.1)
    assert report["verdict"] is True
    assert report["best_similarity"] == 0.0

    rng = np.random.default_rng(0)
    noise = rng.standard_normal((100, 28, 28)).mean(axis=0)
    report2 = dm.verify(noise, pattern, threshold=0.1)
    assert report2["verdict"] is False


def test_metric_kernels_against_numpy():
    rng = np.random.default_rng(1)
    feats = rng.standard_normal((400, 6))
    assert dm.fid_from_features(feats, feats) == pytest.approx(0.0, abs=1e-9)
    shifted = feats + 0.5
    assert dm.fid_from_features(feats, shifted) == pytest.approx(6 * 0.25, rel=0.01)

    mu1, cov1 = np.zeros(3), np.eye(3)
    mu2, cov2 = np.ones(3), np.eye(3)
    assert dm.frechet_distance(mu1, cov1, mu2, cov2) == pytest.approx(3.0, abs=1e-9)

    onehot = np.eye(4)[np.arange(40) % 4]
    mean, _ = dm.inception_score(onehot, splits=1)
    assert mean == pytest.approx(4.0)

    p, r = dm.precision_recall(feats, feats, k=3)
    assert (p, r) == (1.0, 1.0)


def test_synthetic_dataset_deterministic():
    a = dm.make_synthetic_dataset(4, 16, "blobs", seed=5)
    b = dm.make_synthetic_dataset(4, 16, "blobs", seed=5)
    assert a.shape == (4, 16, 16)
    assert np.array_equal(a, b)
    assert a.min() >= -1.0 and a.max() <= 1.0


@pytest.fixture()
def cli():
    path = os.environ.get("DIFFMARK_CLI")
    if not path or not os.path.exists(path):
        pytest.skip("DIFFMARK_CLI not set")
    return path


def test_cli_oracle_sample_verify_and_npz_interop(cli, tmp_path):
    config = {
        "schedule": {"T": 60, "beta_start": 2e-3, "beta_end": 0.3},
        "watermark": {"shape": "square", "position": "bottom_right", "size": 6,
                      "gamma": 0.8, "t_a_fraction": 0.5, "f1_mode": "zero"},
        "sampling": {"batch_size": 50, "snapshot_fractions": [0.5]},
        "paths": {"dataset": "synthetic:blobs:1:16", "output_dir": ""},
        "seed": 3,
    }
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / "run"

    r = subprocess.run([cli, "--config", str(cfg), "--out", str(out), "sample", "--oracle"],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr

    # the trajectory container is a plain npz readable by numpy
    traj = np.load(out / "trajectory.npz")
    assert traj["finals"].shape == (50, 16, 16)
    assert traj["x_avg"].shape == (16, 16)
    meta = json.loads(traj["meta.json"].tobytes() if hasattr(traj["meta.json"], "tobytes")
                      else traj.zip.read("meta.json"))
    assert meta["t_A"] == 30

    manifest = json.loads((out / "manifest.json").read_text())
    assert {a["path"] for a in manifest["artifacts"]} >= {"trajectory.npz", "x_avg.png"}

    vout = tmp_path / "verify"
    v = subprocess.run([cli, "--config", str(cfg), "--out", str(vout), "verify",
                        "--target", str(out / "trajectory.npz")],
                       capture_output=True, text=True)
    assert v.returncode == 0, v.stderr
    report = json.loads((vout / "verification_report.json").read_text())
    assert report["verdict"] is True
    assert set(report) == {"verdict", "best_similarity", "threshold", "contour_counts",
                           "stages", "edgesconvert"}
