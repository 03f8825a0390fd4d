import hashlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rawdiff.isp import demosaic_bilinear, read_ppm
from rawdiff.metrics import psnr
from rawdiff.raw import CFAPattern, LinearImage, ParameterError, read_braw
from rawdiff.sim import (
    SensorNoiseParams, expose, make_dataset, mosaic_scene, read_manifest, synthesize_scene,
)


def test_scene_deterministic_and_distinct():
    a = synthesize_scene(48, 32, 7).data
    b = synthesize_scene(48, 32, 7).data
    c = synthesize_scene(48, 32, 8).data
    assert a.shape == (32, 48, 3)
    assert a.tobytes() == b.tobytes()
    assert hashlib.sha256(a.tobytes()).digest() != hashlib.sha256(c.tobytes()).digest()


def test_scene_range_over_many_seeds():
    for seed in range(1000):
        d = synthesize_scene(16, 16, seed).data
        assert d.min() >= 0.0 and d.max() <= 1.0


def test_mosaic_gray_constant():
    m = mosaic_scene(LinearImage(np.full((6, 8, 3), 0.4)), CFAPattern.GRBG)
    assert m.shape == (6, 8)
    np.testing.assert_array_equal(m, 0.4)


def test_mosaic_picks_cfa_sites():
    scene = np.zeros((2, 2, 3))
    scene[..., 0], scene[..., 1], scene[..., 2] = 1.0, 2.0, 3.0
    np.testing.assert_array_equal(mosaic_scene(scene, CFAPattern.RGGB), [[1, 2], [2, 3]])
    np.testing.assert_array_equal(mosaic_scene(scene, CFAPattern.GBRG), [[2, 3], [1, 2]])


def test_mosaic_demosaic_smooth_scene():
    yy, xx = np.mgrid[0:64, 0:64] / 64.0
    scene = np.stack([0.5 + 0.3 * np.sin(2 * np.pi * xx * 0.5),
                      0.5 + 0.3 * np.cos(2 * np.pi * yy * 0.4),
                      0.4 + 0.2 * xx * yy], axis=-1)
    back = demosaic_bilinear(mosaic_scene(LinearImage(scene)), pattern=CFAPattern.RGGB).data
    assert psnr(back, scene) > 40.0


def test_expose_zero_light_is_black():
    p = SensorNoiseParams(read_noise_dn=0.0)
    img = expose(np.zeros((8, 8)), 1.0, p, seed=0)
    np.testing.assert_array_equal(img.data, p.black_level)


def test_expose_large_full_well_limit():
    p = SensorNoiseParams(full_well_photons=1e6, read_noise_dn=0.0)
    rates = np.random.default_rng(0).uniform(0.2, 0.9, size=(32, 32))
    img = expose(rates, 1.0, p, seed=1)
    expected = p.black_level + rates * (p.white_level - p.black_level)
    rel = np.abs(img.data - expected) / (expected - p.black_level)
    assert rel.max() < 0.01
    img = expose(rates, 0.1, p, seed=1)
    signal = img.data.astype(float) - p.black_level
    assert abs(signal.mean() / (rates * 0.1 * (p.white_level - p.black_level)).mean() - 1) < 0.01


def _analytic_dn_stats(rate, frac, p):
    gain = (p.white_level - p.black_level) / p.full_well_photons
    photons = rate * p.full_well_photons * frac
    mean = p.black_level + photons * gain
    var = photons * gain ** 2 + p.read_noise_dn ** 2 + 1 / 12
    return mean, var


def test_expose_mean_monte_carlo():
    p = SensorNoiseParams()
    img = expose(np.full((250, 400), 0.5), 0.01, p, seed=2)
    mean, var = _analytic_dn_stats(0.5, 0.01, p)
    se = np.sqrt(var / img.data.size)
    assert abs(img.data.mean() - mean) < 3 * se


def test_expose_mean_linear_in_exposure():
    p = SensorNoiseParams()
    for k, frac in enumerate((1.0, 1 / 100, 1 / 300)):
        img = expose(np.full((200, 250), 0.3), frac, p, seed=10 + k)
        mean, var = _analytic_dn_stats(0.3, frac, p)
        assert abs(img.data.mean() - mean) < 3 * np.sqrt(var / img.data.size)


def test_snr_decreases_with_exposure():
    p = SensorNoiseParams()
    scene = synthesize_scene(32, 32, 3)
    rates = mosaic_scene(scene)
    snrs = []
    for frac in (1.0, 1 / 100, 1 / 300):
        shots = np.stack([expose(rates, frac, p, seed=s).data.astype(float) - p.black_level for s in range(64)])
        signal = shots.mean(axis=0)
        noise = shots.std(axis=0)
        mask = rates > 0.1
        snrs.append(np.median(signal[mask] / noise[mask]))
    assert snrs[0] > snrs[1] > snrs[2]


def test_expose_deterministic():
    rates = mosaic_scene(synthesize_scene(16, 16, 0))
    a = expose(rates, 0.01, SensorNoiseParams(), seed=4)
    b = expose(rates, 0.01, SensorNoiseParams(), seed=4)
    assert a.data.tobytes() == b.data.tobytes()
    assert a.exposure_s == pytest.approx(0.1)


def test_expose_rejects_bad_fraction():
    for frac in (0.0, 1.5):
        with pytest.raises(ParameterError):
            expose(np.zeros((2, 2)), frac, SensorNoiseParams())


@settings(max_examples=20, deadline=None)
@given(fw=st.floats(-10, 0), rn=st.floats(-5, -0.01))
def test_noise_params_validation(fw, rn):
    with pytest.raises(ParameterError):
        SensorNoiseParams(full_well_photons=fw)
    with pytest.raises(ParameterError):
        SensorNoiseParams(read_noise_dn=rn)


def test_make_dataset_counts(tmp_path):
    rows = make_dataset(2, [100], SensorNoiseParams(seed=3), tmp_path, width=16, height=16)
    assert len(rows) == 2
    manifest = read_manifest(tmp_path / "manifest.tsv")
    assert len(manifest) == 2
    assert all(r["ratio"] == 100.0 for r in manifest)
    for r in manifest:
        noisy = read_braw(r["noisy"])
        ref = read_ppm(r["reference"])
        assert noisy.data.shape == (16, 16) and ref.data.shape == (16, 16, 3)
        assert noisy.exposure_s * r["ratio"] == pytest.approx(10.0)


def test_make_dataset_multiple_ratios(tmp_path):
    rows = make_dataset(3, [100, 300], SensorNoiseParams(), tmp_path, width=16, height=16)
    assert len(rows) == 6
    assert sorted({r["ratio"] for r in rows}) == [100.0, 300.0]
    text = (tmp_path / "manifest.tsv").read_text().splitlines()
    assert text[0].split("\t") == ["pair_id", "noisy", "reference", "ratio", "seed"]


def test_make_dataset_byte_identical(tmp_path):
    make_dataset(2, [100, 300], SensorNoiseParams(seed=5), tmp_path / "a", width=16, height=16)
    make_dataset(2, [100, 300], SensorNoiseParams(seed=5), tmp_path / "b", width=16, height=16)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_make_dataset_subset_reproduces(tmp_path):
    make_dataset(3, [100], SensorNoiseParams(seed=5), tmp_path / "all", width=16, height=16)
    make_dataset(1, [100], SensorNoiseParams(seed=5), tmp_path / "one", width=16, height=16, first_scene=2)
    name = "scene0002_x100.braw"
    assert (tmp_path / "all" / name).read_bytes() == (tmp_path / "one" / name).read_bytes()


def test_make_dataset_requires_ratio(tmp_path):
    with pytest.raises(ParameterError):
        make_dataset(1, [], SensorNoiseParams(), tmp_path)
