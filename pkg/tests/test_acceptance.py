"""Acceptance criteria 1-10, each at its stated tolerance.

Run alone with ``pytest tests/test_acceptance.py -v``; the terminal summary
ends with one PASS/FAIL line per criterion. Criterion 7 trains the desk-scale
model from scratch and dominates the runtime (roughly a quarter of an hour on
one CPU core).
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from test_raw import naive_bicubic

from rawdiff.cli import main as cli_main
from rawdiff.diffusion import (
    ArchConfig, DiffusionModel, GuidanceConfig, NoiseSchedule, PairDataset, TrainConfig, cfg_dual, reverse_chain,
    sample_batch, train, training_loss,
)
from rawdiff.isp import IspConfig, read_ppm, run_pipeline
from rawdiff.metrics import psnr, ssim
from rawdiff.nn import Tensor
from rawdiff.nn.gradcheck import gradient_suite
from rawdiff.raw import BayerImage, CFAPattern, bicubic_upsample, pack_bayer, preprocess, read_braw, remosaic
from rawdiff.sim import SensorNoiseParams, expose, make_dataset, read_manifest

# desk-scale experiment for criterion 7
DESK_SCENES, DESK_EVAL_SCENES, DESK_SIZE = 64, 16, 96
DESK_RATIOS = (100.0, 300.0)
DESK_TRAIN = TrainConfig(patch=64, batch=16, steps=3000, lr=1e-3, warmup=100, weight_decay=1e-2, ae_steps=1000,
                         ae_patch=32, ae_lr=1e-3, ae_warmup=50, ckpt_every=1000, val_every=500, val_size=16,
                         log_every=0, seed=0)
DESK_GUIDANCE = GuidanceConfig(s_image=1.0, s_text=1.0)
DESK_BUDGET_S = 45 * 60


@pytest.fixture(scope="module", autouse=True)
def _pending_lines():
    for n in range(1, 11):
        ACCEPTANCE_LINES.setdefault(n, f"criterion {n:>2}: NOT RUN (deselected or errored before reporting)")
    yield


def test_criterion_01_pack_roundtrip(acceptance_report):
    t0 = time.perf_counter()
    mismatches = 0
    for pattern in CFAPattern:
        rng = np.random.default_rng(int(pattern))
        for _ in range(100):
            frame = rng.integers(0, 16384, size=(64, 64), dtype=np.uint16)
            back = remosaic(pack_bayer(BayerImage(frame, pattern)), pattern).data
            mismatches += int(back.dtype != np.uint16 or not np.array_equal(back, frame))
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and dt < 5.0
    acceptance_report(1, ok, f"400 frames, {mismatches} mismatches, {dt:.2f} s (< 5 s)")
    assert ok


def test_criterion_02_bicubic_oracle(acceptance_report):
    rng = np.random.default_rng(0)
    inputs = [rng.random((16, 16, 4)) for _ in range(20)]
    t0 = time.perf_counter()
    outs = [bicubic_upsample(x, 2).data for x in inputs]
    dt = time.perf_counter() - t0
    err = max(np.abs(o - naive_bicubic(x, 2)).max() for o, x in zip(outs, inputs))
    ok = outs[0].shape == (32, 32, 4) and err < 1e-6 and dt < 5.0
    acceptance_report(2, ok, f"max abs error {err:.2e} (< 1e-6), {dt:.3f} s (< 5 s)")
    assert ok


def test_criterion_03_gradient_suite(acceptance_report):
    t0 = time.perf_counter()
    errs = gradient_suite(instances=10, seed=0)
    dt = time.perf_counter() - t0
    worst = max(errs, key=errs.get)
    ok = errs[worst] < 1e-4 and dt < 60.0
    acceptance_report(3, ok, f"{len(errs)} ops x 10 instances, worst {worst} {errs[worst]:.1e} (< 1e-4), {dt:.1f} s")
    assert ok


def test_criterion_04_cfg_identities(acceptance_report):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        uu, iu, it = (rng.normal(size=(2, 4, 16, 16)).astype(np.float32) for _ in range(3))
        for (s_i, s_t), expect in (((0, 0), uu), ((1, 0), iu), ((1, 1), it)):
            out = cfg_dual(uu, iu, it, np.float32(s_i), np.float32(s_t))
            assert out.dtype == np.float32
            worst = max(worst, float(np.abs(out - expect).max()))
    ok = worst <= 1e-6
    acceptance_report(4, ok, f"collapse cases max abs error {worst:.1e} (<= 1e-6, float32)")
    assert ok


def test_criterion_05_dropout_frequencies(acceptance_report):
    model = DiffusionModel(ArchConfig(4, (8, 8), (8, 8), (8, 8, 8), 16, 4, 4), seed=0)
    rng = np.random.default_rng(5)
    schedule = NoiseSchedule()
    text_only = both = total = 0
    for _ in range(100):  # 100 batches of 100 independent draws
        _, info = training_loss(model, rng.random((100, 3, 16, 16)), rng.random((100, 4, 16, 16)),
                                np.ones(100, int), rng, schedule, return_info=True)
        text_only += int(info["text_only_null"].sum())
        both += int(info["both_null"].sum())
        total += 100
    f_text, f_both = text_only / total, both / total
    ok = 0.04 <= f_text <= 0.06 and 0.04 <= f_both <= 0.06
    acceptance_report(5, ok, f"{total} draws: text-only null {f_text:.2%}, both null {f_both:.2%} (each in [4%, 6%])")
    assert ok


class _OracleModel:
    """Exact noise predictor for a known clean latent; decode keeps the first three channels."""

    downsample = 4

    def __init__(self, z0, schedule):
        self.z0, self.schedule, self.arch = z0, schedule, ArchConfig()

    def check_image_shape(self, h, w):
        pass

    def encode_cond(self, c):
        return Tensor(np.zeros((c.shape[0], *self.z0.shape[1:]), np.float32))

    def denoise(self, z, t, cond, ids):
        z = np.asarray(z, dtype=np.float64)
        ab = self.schedule.abar(np.asarray(t)).reshape(-1, 1, 1, 1)
        z0 = np.concatenate([self.z0] * (len(z) // len(self.z0)))
        return Tensor((z - np.sqrt(ab) * z0) / np.sqrt(1 - ab))

    def decode(self, z):
        return np.asarray(z)[:, :3]


def test_criterion_06_oracle_reverse_chain(acceptance_report):
    schedule = NoiseSchedule()
    rng = np.random.default_rng(6)
    z0 = rng.uniform(-1.5, 1.5, size=(2, 4, 8, 8))

    def eps_fn(z, t):
        ab = schedule.abar(t)
        return (z.astype(np.float64) - np.sqrt(ab) * z0) / np.sqrt(1 - ab)

    chain_err = float(np.abs(reverse_chain(eps_fn, rng.normal(size=z0.shape), schedule, 50, rng, 0.0) - z0).max())
    # the same check through the sampler, with a clean latent inside the [0, 1] output range
    z_img = rng.uniform(0.05, 0.95, size=(1, 4, 8, 8))
    out = sample_batch(_OracleModel(z_img, schedule), np.zeros((1, 32, 32, 4)), guidance=GuidanceConfig(1, 1),
                       steps=50, seed=6, schedule=schedule, noise_scale=0.0)
    sample_err = float(np.abs(out[0].transpose(2, 0, 1) - z_img[0, :3]).max())
    ok = chain_err < 1e-3 and sample_err < 1e-3
    acceptance_report(6, ok, f"50 strided steps: chain {chain_err:.1e}, sampler {sample_err:.1e} (< 1e-3)")
    assert ok


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    t0 = time.perf_counter()
    params = SensorNoiseParams(seed=1)
    make_dataset(DESK_SCENES, DESK_RATIOS, params, root / "train", DESK_SIZE, DESK_SIZE)
    make_dataset(DESK_EVAL_SCENES, DESK_RATIOS, params, root / "eval", DESK_SIZE, DESK_SIZE,
                 first_scene=DESK_SCENES)
    model = DiffusionModel(seed=0)
    result = train(model, PairDataset.from_manifest(root / "train" / "manifest.tsv"), DESK_TRAIN, root / "run")
    train_s = time.perf_counter() - t0

    rows = read_manifest(root / "eval" / "manifest.tsv")
    refs = {r["pair_id"]: read_ppm(r["reference"]).data for r in rows}
    base = {r["pair_id"]: psnr(run_pipeline(read_braw(r["noisy"]), IspConfig(), r["ratio"]), refs[r["pair_id"]])
            for r in rows}

    def score(guidance):
        scores = {}
        for k in range(0, len(rows), 8):
            part = rows[k:k + 8]
            cond = np.stack([preprocess(read_braw(r["noisy"]), r["ratio"]) for r in part])
            outs = sample_batch(model, cond, None, guidance, 50, seed=k)
            for r, img in zip(part, outs):
                scores[r["pair_id"]] = (psnr(img, refs[r["pair_id"]]), ssim(img, refs[r["pair_id"]]))
        return scores

    model_scores = score(DESK_GUIDANCE)
    total_s = time.perf_counter() - t0
    return {"rows": rows, "result": result, "base": base, "model": model_scores, "model_obj": model,
            "score": score, "train_s": train_s, "total_s": total_s}


def _mean(rows, values, ratio, idx=None):
    v = [values[r["pair_id"]] if idx is None else values[r["pair_id"]][idx] for r in rows if r["ratio"] == ratio]
    return float(np.mean(v))


def test_criterion_07_desk_scale_end_to_end(desk_run, acceptance_report):
    rows, res = desk_run["rows"], desk_run["result"]
    base300 = _mean(rows, desk_run["base"], 300.0)
    model300 = _mean(rows, desk_run["model"], 300.0, 0)
    base100 = _mean(rows, desk_run["base"], 100.0)
    model100 = _mean(rows, desk_run["model"], 100.0, 0)
    last = max(res.val_losses)
    ratio = res.val_losses[last] / res.val_losses[0]
    gain = model300 - base300
    ok = (gain >= 1.0 and ratio <= 0.5 and DESK_TRAIN.steps <= 5000 and desk_run["train_s"] <= DESK_BUDGET_S)
    acceptance_report(7, ok, f"x300 PSNR model {model300:.2f} vs ISP {base300:.2f} dB (gain {gain:+.2f}, need >= +1); "
                             f"x100 {model100:.2f} vs {base100:.2f}; val loss step {last} / step 0 = {ratio:.3f} "
                             f"(<= 0.5); train {desk_run['train_s'] / 60:.1f} min (<= 45)")
    assert ok


def test_desk_image_guidance_beats_unguided(desk_run):
    """(s_I=1, s_T=0) beats (0, 0) on mean eval PSNR."""
    rows = desk_run["rows"]
    img_only = desk_run["score"](GuidanceConfig(1.0, 0.0))
    unguided = desk_run["score"](GuidanceConfig(0.0, 0.0))
    a = np.mean([img_only[r["pair_id"]][0] for r in rows])
    b = np.mean([unguided[r["pair_id"]][0] for r in rows])
    print(f"image guidance {a:.2f} dB vs unguided {b:.2f} dB")
    assert a > b


def test_criterion_08_metric_correctness(acceptance_report):
    rng = np.random.default_rng(8)
    x = rng.uniform(0.0, 0.9, size=(48, 48, 3))
    p20 = psnr(x, x + 0.1)
    s_self = ssim(x, x)
    p = [psnr(x, x + rng.normal(0, s, x.shape)) for s in (0.01, 0.05, 0.1)]
    ok = abs(p20 - 20.0) <= 1e-6 and s_self == 1.0 and p[0] > p[1] > p[2]
    acceptance_report(8, ok, f"offset PSNR {p20:.9f} dB, ssim(x,x) = {s_self!r}, "
                             f"PSNR over sigma 0.01/0.05/0.1 = {p[0]:.2f}/{p[1]:.2f}/{p[2]:.2f}")
    assert ok


DET_INI = """
[paths]
dataset_dir = {root}/data
checkpoint_dir = {root}/run
output_dir = {root}/out

[sim]
n_scenes = 6
ratios = 100, 300
width = 48
height = 48
seed = 9

[model]
ae_channels = 16, 32
cond_channels = 8, 16
unet_channels = 16, 32, 32
emb_dim = 32

[train]
patch = 32
batch = 8
steps = 200
lr = 1e-3
warmup = 20
ae_steps = 50
ae_patch = 32
ckpt_every = 100
val_every = 100
val_size = 8
log_every = 0

[guidance]
steps = 20
seed = 4
"""


def _full_run(root):
    root.mkdir()
    (root / "run.ini").write_text(DET_INI.format(root=root))
    cfg = ["-c", str(root / "run.ini")]
    assert cli_main(["simulate", *cfg]) == 0
    assert cli_main(["train", *cfg]) == 0
    assert cli_main(["infer", "--manifest", str(root / "data" / "manifest.tsv"), *cfg]) == 0
    files = {}
    for sub in ("data", "run", "out"):
        for f in sorted((root / sub).iterdir()):
            if f.suffix in (".drck", ".ppm", ".braw", ".log"):
                files[f"{sub}/{f.name}"] = f.read_bytes()
    return files


def test_criterion_09_determinism(tmp_path, acceptance_report):
    a = _full_run(tmp_path / "a")
    b = _full_run(tmp_path / "b")
    ckpts = [k for k in a if k.endswith(".drck")]
    outs = [k for k in a if k.startswith("out/")]
    differ = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    ok = not differ and len(ckpts) == 3 and len(outs) == 12
    acceptance_report(9, ok, f"{len(ckpts)} checkpoints, {len(outs)} outputs, {len(a)} files compared, "
                             f"{len(differ)} differ")
    assert ok, differ


def test_criterion_10_noise_statistics(acceptance_report):
    p = SensorNoiseParams()
    gain = (p.white_level - p.black_level) / p.full_well_photons
    rate = 0.4
    details, ok = [], True
    for k, frac in enumerate((1.0, 1 / 100, 1 / 300)):
        img = expose(np.full((256, 256), rate), frac, p, seed=100 + k).data.astype(np.float64)
        photons = rate * p.full_well_photons * frac
        mean = p.black_level + photons * gain
        se = np.sqrt((photons * gain ** 2 + p.read_noise_dn ** 2 + 1 / 12) / img.size)
        z = (img.mean() - mean) / se
        ok &= abs(z) < 3
        details.append(f"frac {frac:.4g}: {z:+.2f} SE")
    acceptance_report(10, ok, "Monte Carlo mean vs analytic, " + ", ".join(details) + " (|z| < 3)")
    assert ok
