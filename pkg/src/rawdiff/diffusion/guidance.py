"""Classifier-free guidance: single-condition and image + text composition."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class GuidanceConfig:
    s_image: float = 1.0
    s_text: float = 1.0

    def __post_init__(self):
        for name in ("s_image", "s_text"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
            setattr(self, name, v)

    def passes(self) -> tuple:
        """Which denoiser evaluations the guided estimate needs: subset of ('uu', 'iu', 'it')."""
        if self.s_image == 0 and self.s_text == 0:
            return ("uu",)
        if self.s_text == 0:
            return ("uu", "iu")
        return ("uu", "iu", "it")


def cfg_single(e_cond, e_uncond, s):
    return e_uncond + s * (e_cond - e_uncond)


def cfg_dual(e_uu, e_iu, e_it, s_image, s_text):
    """Unconditional estimate pushed toward the image-conditioned one by ``s_image``
    and from there toward the image+text-conditioned one by ``s_text``."""
    out = e_uu
    if s_image:
        out = out + s_image * (e_iu - e_uu)
    if s_text:
        out = out + s_text * (e_it - e_iu)
    return out
