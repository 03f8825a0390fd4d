"""Run configuration: one INI file with fixed sections, strict keys and typed values.

Every key has a type, a default and a range check. Unknown sections or keys
are rejected so that typos fail loudly instead of silently falling back to a
default. Values can be overridden with ``section.key=value`` strings.
"""
from __future__ import annotations

import configparser
from pathlib import Path

import numpy as np

from .diffusion import PROMPTS, ArchConfig, GuidanceConfig, TrainConfig
from .isp import IspConfig
from .nn.optim import FINETUNE_LR, FINETUNE_WARMUP, FINETUNE_WEIGHT_DECAY
from .raw import CFAPattern, ParameterError
from .sim import SensorNoiseParams


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit status 2."""


def _floats(n=None):
    def parse(s):
        vals = tuple(float(v) for v in str(s).replace(",", " ").split())
        if n is not None and len(vals) != n:
            raise ValueError(f"expected {n} numbers, got {len(vals)}")
        return vals
    return parse


def _ints(s):
    return tuple(int(v) for v in str(s).replace(",", " ").split())


def _gamma(s):
    s = str(s).strip().lower()
    return s if s == "srgb" else float(s)


def _pattern(s):
    return CFAPattern.parse(s).name


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


# section -> key -> (parser, default, check or None, description)
SCHEMA = {
    "paths": {
        "dataset_dir": (str, "data", None, "simulated dataset directory"),
        "eval_dir": (str, "", None, "held-out dataset directory (empty: none)"),
        "checkpoint_dir": (str, "runs", None, "training output directory"),
        "output_dir": (str, "outputs", None, "inference output directory"),
    },
    "sim": {
        "n_scenes": (int, 8, _pos, "number of training scenes"),
        "eval_scenes": (int, 0, _nonneg, "number of held-out scenes written to eval_dir"),
        "ratios": (_floats(), (100.0, 300.0), lambda v: len(v) > 0 and min(v) >= 1, "amplification ratios"),
        "width": (int, 64, lambda v: v > 0 and v % 2 == 0, "scene width in pixels"),
        "height": (int, 64, lambda v: v > 0 and v % 2 == 0, "scene height in pixels"),
        "pattern": (_pattern, "RGGB", None, "CFA pattern"),
        "full_well": (float, 10000.0, _pos, "full-well capacity in photons"),
        "read_noise": (float, 2.0, _nonneg, "read noise std in DN"),
        "black_level": (int, 512, _nonneg, "black level in DN"),
        "white_level": (int, 16383, lambda v: 0 < v <= 65535, "white level in DN"),
        "seed": (int, 0, _nonneg, "simulation seed"),
    },
    "isp": {
        "wb_gains": (_floats(3), (1.0, 1.0, 1.0), lambda v: min(v) > 0, "white-balance gains R G B"),
        "ccm": (_floats(9), tuple(float(v) for v in np.eye(3).ravel()), None, "row-major 3x3 color matrix"),
        "gamma": (_gamma, "srgb", lambda v: v == "srgb" or v > 0, "'srgb' or a power-law exponent"),
    },
    "model": {
        "latent_channels": (int, 4, _pos, "latent channels"),
        "ae_channels": (_ints, (32, 64), lambda v: len(v) == 2 and min(v) > 0, "autoencoder widths"),
        "cond_channels": (_ints, (16, 32), lambda v: len(v) == 2 and min(v) > 0, "conditioning encoder widths"),
        "unet_channels": (_ints, (32, 64, 64), lambda v: len(v) == 3 and min(v) > 0, "UNet widths per level"),
        "emb_dim": (int, 64, lambda v: v > 0 and v % 2 == 0, "time/text embedding size"),
        "groups": (int, 8, _pos, "group-norm groups"),
        "seed": (int, 0, _nonneg, "weight initialization seed"),
    },
    "train": {
        "patch": (int, 64, lambda v: v > 0 and v % 16 == 0, "patch size (multiple of 16)"),
        "batch": (int, 16, _pos, "batch size"),
        "steps": (int, 2000, _pos, "denoiser optimizer steps"),
        "lr": (float, FINETUNE_LR, _pos, "peak learning rate"),
        "warmup": (int, FINETUNE_WARMUP, _nonneg, "linear warmup steps"),
        "weight_decay": (float, FINETUNE_WEIGHT_DECAY, _nonneg, "decoupled weight decay"),
        "ae_steps": (int, 1000, _nonneg, "autoencoder pretraining steps"),
        "ae_patch": (int, 32, lambda v: v > 0 and v % 4 == 0, "autoencoder patch size"),
        "ae_lr": (float, 1e-3, _pos, "autoencoder learning rate"),
        "ae_warmup": (int, 50, _nonneg, "autoencoder warmup steps"),
        "ckpt_every": (int, 500, _nonneg, "periodic checkpoint interval (0: off)"),
        "val_every": (int, 250, _nonneg, "validation interval (0: only at the end)"),
        "val_size": (int, 16, _pos, "fixed validation batch size"),
        "log_every": (int, 50, _nonneg, "log interval"),
        "prompt_id": (int, 1, _pos, "prompt id used for training pairs"),
        "seed": (int, 0, _nonneg, "training seed"),
    },
    "guidance": {
        "s_image": (float, 1.0, _nonneg, "image guidance scale"),
        "s_text": (float, 1.0, _nonneg, "text guidance scale"),
        "steps": (int, 50, _pos, "strided reverse steps"),
        "prompt_id": (int, 1, _nonneg, "prompt id at inference"),
        "alpha": (float, 0.0, _nonneg, "amplification for infer (0: use the pair ratio)"),
        "seed": (int, 0, _nonneg, "sampling seed"),
    },
}


class RunConfig:
    """Validated configuration values, accessed as ``cfg.section.key``."""

    def __init__(self, values: dict, source=None):
        self.values = values
        self.source = source
        for section, keys in values.items():
            setattr(self, section, _Section(section, keys))

    def get(self, section, key):
        return self.values[section][key]

    # builders -----------------------------------------------------------

    def noise_params(self) -> SensorNoiseParams:
        s = self.values["sim"]
        return SensorNoiseParams(s["full_well"], s["read_noise"], s["black_level"], s["white_level"], s["seed"])

    def isp_config(self) -> IspConfig:
        s = self.values["isp"]
        return IspConfig(s["wb_gains"], np.reshape(s["ccm"], (3, 3)), s["gamma"])

    def arch(self) -> ArchConfig:
        m = self.values["model"]
        return ArchConfig(m["latent_channels"], tuple(m["ae_channels"]), tuple(m["cond_channels"]),
                          tuple(m["unet_channels"]), m["emb_dim"], len(PROMPTS), m["groups"])

    def train_config(self) -> TrainConfig:
        t = self.values["train"]
        return TrainConfig(**{k: t[k] for k in t})

    def guidance_config(self) -> GuidanceConfig:
        g = self.values["guidance"]
        return GuidanceConfig(g["s_image"], g["s_text"])

    def to_ini(self) -> str:
        lines = []
        for section, keys in self.values.items():
            lines.append(f"[{section}]")
            for key, value in keys.items():
                lines.append(f"{key} = {_format(value)}")
            lines.append("")
        return "\n".join(lines)


class _Section:
    def __init__(self, name, keys):
        self._name = name
        self.__dict__.update(keys)

    def __repr__(self):
        return f"<{self._name} {dict((k, v) for k, v in vars(self).items() if not k.startswith('_'))}>"


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return repr(float(value)) if isinstance(value, float) else str(value)


def _convert(section, key, raw):
    parser, _, check, desc = SCHEMA[section][key]
    try:
        value = parser(raw)
    except (TypeError, ValueError, ParameterError) as e:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {e}") from None
    if check is not None and not check(value):
        raise ConfigError(f"[{section}] {key} = {raw!r} out of range ({desc})")
    return value


def parse_override(text: str):
    """``section.key=value`` -> (section, key, value string)."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    lhs, value = text.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    return section.strip(), key.strip(), value.strip()


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the INI file at ``path`` (optional), then ``overrides``."""
    raw = {s: {} for s in SCHEMA}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            cp.read(path)
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}") from None
        for section in cp.sections():
            for key, value in cp.items(section):
                raw.setdefault(section, {})[key] = value
    for text in overrides:
        section, key, value = parse_override(text)
        raw.setdefault(section, {})[key] = value

    values = {}
    for section, keys in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; expected one of {', '.join(SCHEMA)}")
        unknown = sorted(set(keys) - set(SCHEMA[section]))
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    for section, spec in SCHEMA.items():
        values[section] = {}
        for key, (_, default, _, _) in spec.items():
            values[section][key] = _convert(section, key, raw[section][key]) if key in raw[section] else default
    if values["sim"]["black_level"] >= values["sim"]["white_level"]:
        raise ConfigError("[sim] black_level must be below white_level")
    try:
        cfg = RunConfig(values, path)
        cfg.isp_config()
        cfg.guidance_config()
    except (ParameterError, ValueError) as e:
        raise ConfigError(str(e)) from None
    return cfg


def default_ini() -> str:
    """Fully populated config text with every key at its default."""
    return load_config().to_ini()
