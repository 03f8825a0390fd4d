from __future__ import annotations

import numpy as np

from ..nn import no_grad
from ..raw import LinearImage
from .guidance import GuidanceConfig, cfg_dual
from .model import DEFAULT_PROMPT, NULL_PROMPT
from .schedule import NoiseSchedule, reverse_chain


def guided_eps_fn(model, cond_latent, text_ids, guidance: GuidanceConfig):
    """Closure computing the guided noise estimate; all needed passes share one batched forward."""
    n = cond_latent.shape[0]
    null = np.zeros_like(cond_latent)
    null_ids = np.full(n, NULL_PROMPT)
    inputs = {"uu": (null, null_ids), "iu": (cond_latent, null_ids), "it": (cond_latent, text_ids)}
    passes = guidance.passes()
    cond = np.concatenate([inputs[p][0] for p in passes])
    ids = np.concatenate([inputs[p][1] for p in passes])

    def eps_fn(z, t):
        zz = np.concatenate([z] * len(passes))
        with no_grad():
            out = model.denoise(zz, np.full(len(zz), t), cond, ids).data
        e = dict(zip(passes, np.split(out, len(passes))))
        return cfg_dual(e["uu"], e.get("iu"), e.get("it"), guidance.s_image, guidance.s_text)

    return eps_fn


def sample_batch(model, c_image, text_ids=None, guidance: GuidanceConfig | None = None, steps: int = 50,
                 seed: int = 0, schedule: NoiseSchedule | None = None, noise_scale: float = 1.0,
                 image_shape=None) -> np.ndarray:
    """Generate sRGB images (N, H, W, 3) in [0, 1] from RAW conditioning (N, H, W, 4).

    ``c_image=None`` stands for the null image condition; ``image_shape``
    (N, H, W) is then required.
    """
    guidance = guidance or GuidanceConfig()
    schedule = schedule or NoiseSchedule()
    if c_image is None:
        if image_shape is None:
            raise ValueError("image_shape is required when sampling without image conditioning")
        n, h, w = image_shape
    else:
        c_image = np.asarray(c_image, dtype=np.float32)
        if c_image.ndim != 4 or c_image.shape[-1] != 4:
            raise ValueError(f"conditioning must be (N, H, W, 4), got {c_image.shape}")
        n, h, w = c_image.shape[:3]
    model.check_image_shape(h, w)
    d = model.downsample
    zshape = (n, model.arch.latent_channels, h // d, w // d)
    if c_image is None:
        cond = np.zeros(zshape, dtype=np.float32)
    else:
        with no_grad():
            cond = model.encode_cond(c_image.transpose(0, 3, 1, 2)).data
    ids = np.full(n, DEFAULT_PROMPT) if text_ids is None else np.broadcast_to(np.asarray(text_ids), (n,))
    rng = np.random.default_rng(seed)
    z_start = rng.standard_normal(zshape)
    z0 = reverse_chain(guided_eps_fn(model, cond, ids, guidance), z_start, schedule, steps, rng, noise_scale)
    img = model.decode(z0.astype(np.float32))
    return np.clip(img.transpose(0, 2, 3, 1), 0.0, 1.0).astype(np.float64)


def sample(model, c_image, text_id=DEFAULT_PROMPT, guidance: GuidanceConfig | None = None, steps: int = 50,
           seed: int = 0, schedule: NoiseSchedule | None = None, noise_scale: float = 1.0,
           image_shape=None) -> LinearImage:
    """Single-image wrapper around :func:`sample_batch`; ``c_image`` is (H, W, 4) or None."""
    batch = None if c_image is None else np.asarray(c_image)[None]
    shape = None if image_shape is None else (1, *image_shape)
    out = sample_batch(model, batch, [text_id], guidance, steps, seed, schedule, noise_scale, shape)
    return LinearImage(out[0], "srgb")
