"""Autoencoder pretraining, the noise-prediction loss with conditioning dropout, and the training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..isp import read_ppm
from ..nn import AdamW, Tensor, mse_loss, no_grad
from ..nn.optim import FINETUNE_LR, FINETUNE_WARMUP, FINETUNE_WEIGHT_DECAY
from ..raw import preprocess, read_braw
from ..sim import read_manifest
from .model import DEFAULT_PROMPT, NULL_PROMPT, DiffusionModel
from .schedule import NoiseSchedule, forward_diffuse

log = logging.getLogger(__name__)

TEXT_ONLY_NULL_P = 0.05
BOTH_NULL_P = 0.05


@dataclass
class TrainConfig:
    patch: int = 64
    batch: int = 16
    steps: int = 2000
    lr: float = FINETUNE_LR
    warmup: int = FINETUNE_WARMUP
    weight_decay: float = FINETUNE_WEIGHT_DECAY
    ae_steps: int = 1000
    ae_patch: int = 32
    ae_lr: float = 1e-3
    ae_warmup: int = 50
    ckpt_every: int = 500
    log_every: int = 10
    val_every: int = 250
    val_size: int = 16
    prompt_id: int = DEFAULT_PROMPT
    seed: int = 0


@dataclass
class PairDataset:
    """In-memory aligned pairs: conditioning (N, H, W, 4), reference (N, H, W, 3)."""

    cond: np.ndarray
    ref: np.ndarray
    ratios: np.ndarray
    ids: list = field(default_factory=list)

    def __len__(self):
        return len(self.cond)

    @classmethod
    def from_manifest(cls, manifest) -> "PairDataset":
        rows = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
        if not rows:
            raise ValueError("manifest lists no pairs")
        cond, ref = [], []
        for r in rows:
            cond.append(preprocess(read_braw(r["noisy"]), r["ratio"]).astype(np.float32))
            ref.append(read_ppm(r["reference"]).data.astype(np.float32))
            if cond[-1].shape[:2] != ref[-1].shape[:2]:
                raise ValueError(f"{r['pair_id']}: RAW {cond[-1].shape[:2]} and reference {ref[-1].shape[:2]} differ")
        return cls(np.stack(cond), np.stack(ref), np.array([r["ratio"] for r in rows]),
                   [r["pair_id"] for r in rows])

    def random_batch(self, rng, batch: int, patch: int):
        """Random aligned crops with random horizontal flips, returned NCHW."""
        n, h, w = self.cond.shape[:3]
        if patch > h or patch > w:
            raise ValueError(f"patch {patch} larger than image {h}x{w}")
        idx = rng.integers(0, n, batch)
        ys = rng.integers(0, h - patch + 1, batch)
        xs = rng.integers(0, w - patch + 1, batch)
        flips = rng.random(batch) < 0.5
        c = np.empty((batch, patch, patch, 4), dtype=np.float32)
        r = np.empty((batch, patch, patch, 3), dtype=np.float32)
        for k in range(batch):
            sl = (idx[k], slice(ys[k], ys[k] + patch), slice(xs[k], xs[k] + patch))
            c[k], r[k] = self.cond[sl], self.ref[sl]
            if flips[k]:
                c[k], r[k] = c[k][:, ::-1], r[k][:, ::-1]
        return c.transpose(0, 3, 1, 2), r.transpose(0, 3, 1, 2)

    def center_batch(self, indices, patch: int):
        n, h, w = self.cond.shape[:3]
        y, x = (h - patch) // 2, (w - patch) // 2
        c = self.cond[indices, y:y + patch, x:x + patch]
        r = self.ref[indices, y:y + patch, x:x + patch]
        return c.transpose(0, 3, 1, 2).copy(), r.transpose(0, 3, 1, 2).copy()


def dropout_masks(rng, n: int):
    """Per-example (text_null, image_null): text alone nulled 5%, both nulled another 5%."""
    u = rng.random(n)
    both = (u >= TEXT_ONLY_NULL_P) & (u < TEXT_ONLY_NULL_P + BOTH_NULL_P)
    text = u < TEXT_ONLY_NULL_P + BOTH_NULL_P
    return text, both


def training_loss(model, x_ref, c_image, text_ids, rng, schedule: NoiseSchedule | None = None,
                  return_info: bool = False):
    """Mean squared error between sampled noise and the denoiser's estimate of it.

    ``x_ref`` (N, 3, H, W) sRGB targets, ``c_image`` (N, 4, H, W) preprocessed RAW,
    ``text_ids`` (N,) prompt ids.
    """
    schedule = schedule or NoiseSchedule()
    x_ref = np.asarray(x_ref, dtype=np.float32)
    c_image = np.asarray(c_image, dtype=np.float32)
    if x_ref.shape[0] != c_image.shape[0] or x_ref.shape[2:] != c_image.shape[2:]:
        raise ValueError(f"reference {x_ref.shape} and conditioning {c_image.shape} patches do not align")
    n = x_ref.shape[0]
    z0 = model.encode(x_ref)
    t = rng.integers(1, schedule.T + 1, n)
    eps = rng.standard_normal(z0.shape).astype(np.float32)
    z_t = forward_diffuse(z0, t, eps, schedule).astype(np.float32)
    text_null, image_null = dropout_masks(rng, n)
    cond = model.encode_cond(c_image)
    if image_null.any():
        keep = (~image_null).astype(np.float32).reshape(n, 1, 1, 1)
        cond = cond * Tensor(keep)
    ids = np.where(text_null, NULL_PROMPT, np.broadcast_to(np.asarray(text_ids), (n,)))
    loss = mse_loss(model.denoise(Tensor(z_t), t, cond, ids), Tensor(eps))
    if return_info:
        return loss, {"t": t, "text_only_null": text_null & ~image_null, "both_null": image_null}
    return loss


def fixed_validation_batch(data: PairDataset, cfg: TrainConfig, schedule: NoiseSchedule, latent_shape):
    rng = np.random.default_rng([cfg.seed, 7919])
    k = min(cfg.val_size, len(data))
    idx = np.sort(rng.choice(len(data), size=k, replace=False))
    c, r = data.center_batch(idx, cfg.patch)
    t = np.round(np.linspace(1, schedule.T, k)).astype(np.int64)
    eps = rng.standard_normal((k, *latent_shape)).astype(np.float32)
    return {"cond": c, "ref": r, "t": t, "eps": eps, "ids": np.full(k, cfg.prompt_id)}


def validation_loss(model, val, schedule: NoiseSchedule) -> float:
    """Deterministic loss on a fixed batch: fixed timesteps and noise, no conditioning dropout."""
    with no_grad():
        z0 = model.encode(val["ref"])
        z_t = forward_diffuse(z0, val["t"], val["eps"], schedule).astype(np.float32)
        pred = model.denoise(z_t, val["t"], model.encode_cond(val["cond"]), val["ids"])
        return float(mse_loss(pred, Tensor(val["eps"])).data)


def train_autoencoder(model: DiffusionModel, data: PairDataset, cfg: TrainConfig, rng) -> list:
    """Reconstruction-MSE pretraining of the autoencoder, then latent normalization stats."""
    params = model.autoencoder_parameters()
    opt = AdamW(params, lr_base=cfg.ae_lr, warmup_steps=cfg.ae_warmup, total_steps=cfg.ae_steps,
                weight_decay=0.0)
    refs = np.unique(data.ref, axis=0)
    patch_data = PairDataset(np.zeros(refs.shape[:3] + (4,), np.float32), refs, np.ones(len(refs)))
    losses = []
    for step in range(cfg.ae_steps):
        _, r = patch_data.random_batch(rng, cfg.batch, cfg.ae_patch)
        x = Tensor(r)
        loss = mse_loss(model.reconstruct(x), x)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.data))
        if cfg.log_every and step % cfg.log_every == 0:
            log.info("ae step %d loss %.6f", step, losses[-1])
    model.set_latent_stats(refs.transpose(0, 3, 1, 2))
    return losses


@dataclass
class TrainResult:
    checkpoint: Path
    losses: list
    val_losses: dict
    ae_losses: list


def train(model: DiffusionModel, manifest, cfg: TrainConfig, out_dir, schedule: NoiseSchedule | None = None,
          pretrain_autoencoder: bool = True) -> TrainResult:
    """Pretrain + freeze the autoencoder, then train the conditional denoiser.

    Writes ``loss.log`` (step, loss), ``val.log`` (step, validation loss),
    periodic ``step_XXXXXX.drck`` checkpoints and ``model.drck`` to ``out_dir``.
    """
    schedule = schedule or NoiseSchedule()
    data = manifest if isinstance(manifest, PairDataset) else PairDataset.from_manifest(manifest)
    model.check_image_shape(cfg.patch, cfg.patch)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)

    ae_losses = train_autoencoder(model, data, cfg, rng) if pretrain_autoencoder else []
    d = model.downsample
    val = fixed_validation_batch(data, cfg, schedule,
                                 (model.arch.latent_channels, cfg.patch // d, cfg.patch // d))
    params = model.denoiser_parameters()
    opt = AdamW(params, lr_base=cfg.lr, warmup_steps=cfg.warmup, total_steps=cfg.steps,
                weight_decay=cfg.weight_decay)
    losses, val_losses = [], {0: validation_loss(model, val, schedule)}
    log.info("step 0 validation loss %.6f", val_losses[0])
    with open(out / "loss.log", "w") as loss_log:
        for step in range(1, cfg.steps + 1):
            c, r = data.random_batch(rng, cfg.batch, cfg.patch)
            loss = training_loss(model, r, c, np.full(cfg.batch, cfg.prompt_id), rng, schedule)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
            loss_log.write(f"{step}\t{losses[-1]:.8g}\n")
            if cfg.log_every and step % cfg.log_every == 0:
                log.info("step %d loss %.6f lr %.3g", step, losses[-1], opt.lr())
            if (cfg.val_every and step % cfg.val_every == 0) or step == cfg.steps:
                val_losses[step] = validation_loss(model, val, schedule)
                log.info("step %d validation loss %.6f", step, val_losses[step])
            if cfg.ckpt_every and step % cfg.ckpt_every == 0:
                model.save(out / f"step_{step:06d}.drck")
    with open(out / "val.log", "w") as f:
        for k in sorted(val_losses):
            f.write(f"{k}\t{val_losses[k]:.8g}\n")
    final = out / "model.drck"
    model.save(final)
    return TrainResult(final, losses, val_losses, ae_losses)
