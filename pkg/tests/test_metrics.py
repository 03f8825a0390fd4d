import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rawdiff.isp import write_ppm
from rawdiff.metrics import PSNR_CAP_DB, EvalRecord, EvalReport, evaluate, psnr, ssim
from rawdiff.sim import SensorNoiseParams, make_dataset, read_manifest


def naive_psnr(a, b, max_val=1.0):
    # two passes: accumulate squared error, then convert
    total, count = 0.0, 0
    for x, y in zip(np.ravel(a), np.ravel(b)):
        total += (float(x) - float(y)) ** 2
        count += 1
    return 10.0 * math.log10(max_val ** 2 / (total / count))


def test_psnr_constant_offset_is_20db():
    a = np.full((16, 16, 3), 0.5)
    assert abs(psnr(a, a + 0.1) - 20.0) < 1e-6


def test_psnr_identical_is_inf_and_capped_in_reports():
    a = np.random.default_rng(0).random((8, 8, 3))
    assert psnr(a, a) == math.inf
    rep = EvalReport([EvalRecord("p", 100.0, psnr(a, a), 1.0)])
    assert rep.mean_psnr() == PSNR_CAP_DB == 100.0


def test_psnr_matches_naive_oracle():
    rng = np.random.default_rng(1)
    for _ in range(5):
        a, b = rng.random((12, 10, 3)), rng.random((12, 10, 3))
        assert abs(psnr(a, b) - naive_psnr(a, b)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_psnr_symmetric_and_positive(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((6, 6, 3)), rng.random((6, 6, 3))
    assert psnr(a, b) == psnr(b, a)
    assert psnr(a, b) > 0


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(2)
    x = rng.random((64, 64, 3))
    vals = [psnr(x, x + rng.normal(0, s, x.shape)) for s in (0.01, 0.05, 0.1)]
    assert vals[0] > vals[1] > vals[2]


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


def test_ssim_self_is_one():
    x = np.random.default_rng(3).random((32, 32, 3))
    assert ssim(x, x) == 1.0


def test_ssim_checkerboard_inverse_negative():
    yy, xx = np.mgrid[0:32, 0:32]
    board = ((yy // 4 + xx // 4) % 2).astype(float)
    assert ssim(board, 1.0 - board) < 0


def test_ssim_constant_plus_tiny_noise():
    x = np.full((32, 32), 0.5)
    y = x + np.random.default_rng(4).normal(0, 1e-3, x.shape)
    assert 0.9 < ssim(x, y) < 1.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_ssim_symmetric_bounded(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((16, 16, 3)), rng.random((16, 16, 3))
    s = ssim(a, b)
    assert s == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1.0 <= s <= 1.0


def test_ssim_uses_channel_mean():
    rng = np.random.default_rng(5)
    a, b = rng.random((20, 20, 3)), rng.random((20, 20, 3))
    assert ssim(a, b) == pytest.approx(ssim(a.mean(axis=2), b.mean(axis=2)), abs=1e-12)


def test_ssim_too_small():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


@pytest.fixture
def small_set(tmp_path):
    make_dataset(3, [100, 300], SensorNoiseParams(seed=2), tmp_path / "ds", width=24, height=24)
    return tmp_path / "ds" / "manifest.tsv"


def test_evaluate_identical_outputs(small_set, tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    rows = read_manifest(small_set)
    for r in rows:
        (out / f"{r['pair_id']}.ppm").write_bytes(open(r["reference"], "rb").read())
    rep = evaluate(small_set, out, tmp_path / "report.tsv")
    assert len(rep.records) == len(rows)
    assert rep.mean_ssim() == 1.0 and rep.mean_psnr() == PSNR_CAP_DB
    lines = (tmp_path / "report.tsv").read_text().splitlines()
    assert len(lines) == 1 + len(rows) + 2
    assert lines[-2].startswith("MEAN_x100\t") and lines[-1].startswith("MEAN_x300\t")


def test_evaluate_groups_by_ratio(small_set, tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    rows = read_manifest(small_set)
    for r in rows:
        if r["ratio"] == 100:
            (out / f"{r['pair_id']}.ppm").write_bytes(open(r["reference"], "rb").read())
        else:
            write_ppm(np.zeros((24, 24, 3)), out / f"{r['pair_id']}.ppm")
    rep = evaluate(small_set, out)
    groups = rep.groups()
    assert groups[100.0][0] == 3 and groups[300.0][0] == 3
    assert groups[100.0][1] == PSNR_CAP_DB
    assert groups[300.0][1] < 30
    per300 = [min(r.psnr_db, PSNR_CAP_DB) for r in rep.records if r.ratio == 300.0]
    assert rep.mean_psnr(300.0) == pytest.approx(np.mean(per300))


def test_evaluate_order_independent(small_set, tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    rows = read_manifest(small_set)
    rng = np.random.default_rng(0)
    for r in rows:
        write_ppm(rng.random((24, 24, 3)), out / f"{r['pair_id']}.ppm")
    a = evaluate(rows, out).groups()
    b = evaluate(rows[::-1], out).groups()
    for k in a:
        assert a[k] == pytest.approx(b[k], rel=1e-12)


def test_evaluate_missing_output_names_pair(small_set, tmp_path):
    (tmp_path / "empty").mkdir()
    first = read_manifest(small_set)[0]["pair_id"]
    with pytest.raises(FileNotFoundError, match=first):
        evaluate(small_set, tmp_path / "empty")
