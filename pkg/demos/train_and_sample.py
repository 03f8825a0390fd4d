"""
Train a tiny conditional latent diffusion model and sample from it
==================================================================

A few minutes on a laptop CPU: simulate pairs, pretrain the autoencoder,
train the denoiser, then sample a held-out scene with and without guidance.
The model is far too small and briefly trained to be good; the point is to
walk through the moving parts.

Run:  python3 demos/train_and_sample.py [work_dir]
"""
import sys
import time
from pathlib import Path

from rawdiff.diffusion import ArchConfig, DiffusionModel, GuidanceConfig, TrainConfig, sample, train
from rawdiff.isp import IspConfig, read_ppm, run_pipeline, write_ppm
from rawdiff.metrics import psnr
from rawdiff.raw import preprocess, read_braw
from rawdiff.sim import MANIFEST_NAME, SensorNoiseParams, make_dataset

work = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_run")
params = SensorNoiseParams(seed=1)
make_dataset(24, (100, 300), params, work / "train", 64, 64)
held_out = make_dataset(2, (300,), params, work / "eval", 64, 64, first_scene=24)

arch = ArchConfig(latent_channels=4, ae_channels=(16, 32), cond_channels=(16, 16),
                  unet_channels=(32, 32, 32), emb_dim=32, groups=8)
cfg = TrainConfig(patch=32, batch=16, steps=1500, lr=1e-3, warmup=50, ae_steps=800, ae_patch=32,
                  ckpt_every=0, val_every=500, val_size=8, log_every=0)
model = DiffusionModel(arch, seed=0)

t0 = time.time()
result = train(model, work / "train" / MANIFEST_NAME, cfg, work / "run")
print(f"trained in {time.time() - t0:.0f} s")
for step, loss in sorted(result.val_losses.items()):
    print(f"  validation loss at step {step:4d}: {loss:.4f}")

row = held_out[0]
noisy = read_braw(work / "eval" / row["noisy"])
reference = read_ppm(work / "eval" / row["reference"])
cond = preprocess(noisy, row["ratio"])

baseline = run_pipeline(noisy, IspConfig(), row["ratio"])
write_ppm(baseline, work / "baseline.ppm")
print(f"ISP baseline           PSNR {psnr(baseline, reference):6.2f} dB")
for s_image, s_text in ((0, 0), (1, 0), (1, 1), (1.5, 1)):
    img = sample(model, cond, guidance=GuidanceConfig(s_image, s_text), steps=20, seed=0)
    write_ppm(img, work / f"sample_si{s_image}_st{s_text}.ppm")
    print(f"guidance ({s_image}, {s_text})  PSNR {psnr(img, reference):6.2f} dB")
