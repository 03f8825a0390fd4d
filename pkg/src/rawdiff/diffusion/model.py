"""Toy latent diffusion networks: autoencoder, RAW conditioning encoder, text table, UNet denoiser."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import (
    CheckpointError, Conv2d, ConvTranspose2d, Embedding, GroupNorm, Linear, Module, Tensor, avg_pool2d, concat,
    load_checkpoint, load_into, no_grad, save_checkpoint, silu, upsample_nearest,
)

# Prompt vocabulary; id 0 is the null prompt.
PROMPTS = (
    "",
    "a photo taken at night",
    "a clean well exposed photo",
    "a low light photo processed to daylight brightness",
)
NULL_PROMPT = 0
DEFAULT_PROMPT = 1


@dataclass(frozen=True)
class ArchConfig:
    latent_channels: int = 4
    ae_channels: tuple = (32, 64)
    cond_channels: tuple = (16, 32)
    unet_channels: tuple = (32, 64, 64)
    emb_dim: int = 64
    vocab: int = len(PROMPTS)
    groups: int = 8

    def to_vector(self) -> np.ndarray:
        return np.array([self.latent_channels, *self.ae_channels, *self.cond_channels, *self.unet_channels,
                         self.emb_dim, self.vocab, self.groups], dtype=np.float32)

    @classmethod
    def from_vector(cls, v) -> "ArchConfig":
        v = [int(round(x)) for x in np.asarray(v).ravel()]
        if len(v) != 11:
            raise CheckpointError(f"architecture record has {len(v)} fields, expected 11")
        return cls(v[0], (v[1], v[2]), (v[3], v[4]), (v[5], v[6], v[7]), v[8], v[9], v[10])


def timestep_embedding(t, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None]
    return np.concatenate([np.cos(args), np.sin(args)], axis=1).astype(np.float32)


class Encoder(Module):
    """Image -> latent with 4x spatial downsampling."""

    def __init__(self, cin, channels, cout, rng):
        c1, c2 = channels
        self.conv_in = Conv2d(cin, c1, 3, rng=rng)
        self.down1 = Conv2d(c1, c2, 3, stride=2, rng=rng)
        self.down2 = Conv2d(c2, c2, 3, stride=2, rng=rng)
        self.conv_out = Conv2d(c2, cout, 1, rng=rng)

    def forward(self, x):
        h = silu(self.conv_in(x))
        h = silu(self.down1(h))
        h = silu(self.down2(h))
        return self.conv_out(h)


class Decoder(Module):
    def __init__(self, cin, channels, cout, rng):
        c1, c2 = channels
        self.conv_in = Conv2d(cin, c2, 3, rng=rng)
        self.up1 = ConvTranspose2d(c2, c2, 4, 2, 1, rng=rng)
        self.up2 = ConvTranspose2d(c2, c1, 4, 2, 1, rng=rng)
        self.refine = Conv2d(c1, c1, 3, rng=rng)
        self.conv_out = Conv2d(c1, cout, 3, rng=rng)

    def forward(self, z):
        h = silu(self.conv_in(z))
        h = silu(self.up1(h))
        h = silu(self.up2(h))
        h = silu(self.refine(h))
        return self.conv_out(h)


class ResBlock(Module):
    def __init__(self, cin, cout, emb_dim, groups, rng):
        self.norm1 = GroupNorm(cin, groups)
        self.conv1 = Conv2d(cin, cout, 3, rng=rng)
        self.emb_proj = Linear(emb_dim, cout, rng=rng)
        self.norm2 = GroupNorm(cout, groups)
        self.conv2 = Conv2d(cout, cout, 3, rng=rng, zero_init=True)
        self.skip = Conv2d(cin, cout, 1, rng=rng) if cin != cout else None

    def forward(self, x, emb):
        h = self.conv1(silu(self.norm1(x)))
        e = self.emb_proj(emb)
        h = h + e.reshape(e.shape[0], e.shape[1], 1, 1)
        h = self.conv2(silu(self.norm2(h)))
        return h + (self.skip(x) if self.skip is not None else x)


class UNet(Module):
    """Three resolutions with skip connections; input is noisy latent concatenated with conditioning latent."""

    def __init__(self, cin, cout, channels, emb_dim, groups, rng):
        c1, c2, c3 = channels
        self.conv_in = Conv2d(cin, c1, 3, rng=rng)
        self.down1 = ResBlock(c1, c1, emb_dim, groups, rng)
        self.down2 = ResBlock(c1, c2, emb_dim, groups, rng)
        self.mid = ResBlock(c2, c3, emb_dim, groups, rng)
        self.up2 = ResBlock(c3 + c2, c2, emb_dim, groups, rng)
        self.up1 = ResBlock(c2 + c1, c1, emb_dim, groups, rng)
        self.norm_out = GroupNorm(c1, groups)
        self.conv_out = Conv2d(c1, cout, 3, rng=rng, zero_init=True)

    def forward(self, x, emb):
        h = self.conv_in(x)
        s1 = self.down1(h, emb)
        s2 = self.down2(avg_pool2d(s1, 2), emb)
        m = self.mid(avg_pool2d(s2, 2), emb)
        u = self.up2(concat([upsample_nearest(m, 2), s2], axis=1), emb)
        u = self.up1(concat([upsample_nearest(u, 2), s1], axis=1), emb)
        return self.conv_out(silu(self.norm_out(u)))


class TextEncoder(Module):
    """Prompt id -> embedding vector (learned lookup table)."""

    def __init__(self, vocab, dim, rng):
        self.table = Embedding(vocab, dim, rng=rng)

    def forward(self, ids):
        return self.table(ids)


class DiffusionModel(Module):
    """Frozen-after-pretraining autoencoder plus the trainable conditional denoiser.

    Latents handed to the diffusion process are normalized per channel with
    ``latent_shift`` / ``latent_scale``, estimated once after autoencoder training.
    """

    downsample = 4

    def __init__(self, arch: ArchConfig | None = None, seed: int = 0):
        self.arch = arch = arch or ArchConfig()
        rng = np.random.default_rng(seed)
        c = arch.latent_channels
        self.ae_encoder = Encoder(3, arch.ae_channels, c, rng)
        self.ae_decoder = Decoder(c, arch.ae_channels, 3, rng)
        self.cond_encoder = Encoder(4, arch.cond_channels, c, rng)
        self.text = TextEncoder(arch.vocab, arch.emb_dim, rng)
        self.time_mlp1 = Linear(arch.emb_dim, arch.emb_dim, rng=rng)
        self.time_mlp2 = Linear(arch.emb_dim, arch.emb_dim, rng=rng)
        self.unet = UNet(2 * c, c, arch.unet_channels, arch.emb_dim, arch.groups, rng)
        self.latent_shift = np.zeros(c, dtype=np.float32)
        self.latent_scale = np.ones(c, dtype=np.float32)

    @property
    def size_multiple(self) -> int:
        return self.downsample * 4

    def autoencoder_parameters(self) -> dict:
        return {k: v for k, v in self.parameters().items() if k.startswith("ae_")}

    def denoiser_parameters(self) -> dict:
        return {k: v for k, v in self.parameters().items() if not k.startswith("ae_")}

    def check_image_shape(self, h, w):
        m = self.size_multiple
        if h % m or w % m or h == 0 or w == 0:
            raise ValueError(f"image size {h}x{w} must be a nonzero multiple of {m}")

    # latent space -------------------------------------------------------

    def _norm(self):
        c = self.arch.latent_channels
        return self.latent_shift.reshape(1, c, 1, 1), self.latent_scale.reshape(1, c, 1, 1)

    def encode(self, x) -> np.ndarray:
        """sRGB images (N, 3, H, W) -> normalized latents, no gradient."""
        with no_grad():
            z = self.ae_encoder(Tensor(np.asarray(x, dtype=np.float32))).data
        shift, scale = self._norm()
        return ((z - shift) / scale).astype(np.float32)

    def decode(self, z) -> np.ndarray:
        shift, scale = self._norm()
        z = np.asarray(z, dtype=np.float32) * scale + shift
        with no_grad():
            return self.ae_decoder(Tensor(z.astype(np.float32))).data

    def reconstruct(self, x: Tensor) -> Tensor:
        return self.ae_decoder(self.ae_encoder(x))

    def set_latent_stats(self, images, batch: int = 32):
        """Per-channel mean/std of raw encoder outputs over ``images`` (N, 3, H, W)."""
        zs = []
        with no_grad():
            for i in range(0, len(images), batch):
                zs.append(self.ae_encoder(Tensor(np.asarray(images[i:i + batch], dtype=np.float32))).data)
        z = np.concatenate(zs)
        self.latent_shift = z.mean(axis=(0, 2, 3)).astype(np.float32)
        self.latent_scale = np.maximum(z.std(axis=(0, 2, 3)), 1e-6).astype(np.float32)

    # denoiser -----------------------------------------------------------

    def encode_cond(self, c_image) -> Tensor:
        """Preprocessed RAW conditioning (N, 4, H, W) -> conditioning latent."""
        if not isinstance(c_image, Tensor):
            c_image = Tensor(np.asarray(c_image, dtype=np.float32))
        return self.cond_encoder(c_image)

    def null_cond(self, z_shape) -> Tensor:
        return Tensor(np.zeros(z_shape, dtype=np.float32))

    def embed(self, t, text_ids) -> Tensor:
        temb = self.time_mlp2(silu(self.time_mlp1(Tensor(timestep_embedding(t, self.arch.emb_dim)))))
        return silu(temb + self.text(np.asarray(text_ids, dtype=np.int64)))

    def denoise(self, z_t, t, cond_latent, text_ids) -> Tensor:
        """Noise estimate for ``z_t`` at timesteps ``t`` (one per row)."""
        if not isinstance(z_t, Tensor):
            z_t = Tensor(np.asarray(z_t, dtype=np.float32))
        if not isinstance(cond_latent, Tensor):
            cond_latent = Tensor(np.asarray(cond_latent, dtype=np.float32))
        if z_t.shape != cond_latent.shape:
            raise ValueError(f"noisy latent {z_t.shape} and conditioning latent {cond_latent.shape} differ")
        t = np.broadcast_to(np.asarray(t), (z_t.shape[0],))
        return self.unet(concat([z_t, cond_latent], axis=1), self.embed(t, text_ids))

    # persistence --------------------------------------------------------

    def state_dict(self) -> dict:
        state = {k: v.data for k, v in self.parameters().items()}
        state["buffers.latent_shift"] = self.latent_shift
        state["buffers.latent_scale"] = self.latent_scale
        state["meta.arch"] = self.arch.to_vector()
        return state

    def load_state_dict(self, state: dict):
        state = dict(state)
        arch = ArchConfig.from_vector(state.pop("meta.arch", self.arch.to_vector()))
        if arch != self.arch:
            raise CheckpointError(f"checkpoint architecture {arch} differs from model {self.arch}")
        for key in ("buffers.latent_shift", "buffers.latent_scale"):
            if key not in state:
                raise CheckpointError(f"checkpoint is missing tensor {key!r}")
        self.latent_shift = state.pop("buffers.latent_shift").astype(np.float32)
        self.latent_scale = state.pop("buffers.latent_scale").astype(np.float32)
        load_into(self.parameters(), state)

    def save(self, path):
        save_checkpoint(self.state_dict(), path)

    @classmethod
    def load(cls, path) -> "DiffusionModel":
        state = load_checkpoint(path)
        if "meta.arch" not in state:
            raise CheckpointError(f"{path}: checkpoint is missing tensor 'meta.arch'")
        model = cls(ArchConfig.from_vector(state["meta.arch"]))
        model.load_state_dict(state)
        return model
