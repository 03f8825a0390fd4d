"""Synthetic paired low-light data: procedural scenes, CFA sampling, shot + read noise."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .isp import IspConfig, run_pipeline, write_ppm
from .raw import BayerImage, CFAPattern, DimensionError, LinearImage, ParameterError, tile_offsets, write_braw

# Exposure of the clean reference capture; short exposures are this divided by the ratio.
REFERENCE_EXPOSURE_S = 10.0
MANIFEST_NAME = "manifest.tsv"
MANIFEST_FIELDS = ("pair_id", "noisy", "reference", "ratio", "seed")


@dataclass
class SensorNoiseParams:
    full_well_photons: float = 10000.0
    read_noise_dn: float = 2.0
    black_level: int = 512
    white_level: int = 16383
    seed: int = 0

    def __post_init__(self):
        if not self.full_well_photons > 0:
            raise ParameterError(f"full_well_photons must be positive, got {self.full_well_photons}")
        if not self.read_noise_dn >= 0:
            raise ParameterError(f"read_noise_dn must be nonnegative, got {self.read_noise_dn}")
        if not 0 <= self.black_level < self.white_level <= 0xFFFF:
            raise ParameterError("need 0 <= black_level < white_level <= 65535")


def _check_even(width, height):
    if width <= 0 or height <= 0 or width % 2 or height % 2:
        raise DimensionError(f"scene dimensions must be even and positive, got {width}x{height}")


def synthesize_scene(width: int, height: int, seed: int) -> LinearImage:
    """Procedural linear RGB scene in [0, 1].

    A smooth four-corner color gradient, a handful of flat or striped
    rectangles and disks, and low-amplitude fine texture on top.
    """
    _check_even(width, height)
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    v, u = yy / max(height - 1, 1), xx / max(width - 1, 1)

    corners = rng.uniform(0.05, 0.6, size=(4, 3))
    img = ((1 - u) * (1 - v))[..., None] * corners[0] + (u * (1 - v))[..., None] * corners[1] \
        + ((1 - u) * v)[..., None] * corners[2] + (u * v)[..., None] * corners[3]

    for _ in range(rng.integers(3, 7)):
        color = rng.uniform(0.0, 1.0, size=3)
        if rng.random() < 0.5:
            x0, y0 = rng.uniform(-0.1, 0.8) * width, rng.uniform(-0.1, 0.8) * height
            w, h = rng.uniform(0.15, 0.5) * width, rng.uniform(0.15, 0.5) * height
            mask = (xx >= x0) & (xx < x0 + w) & (yy >= y0) & (yy < y0 + h)
        else:
            cx, cy = rng.uniform(0, width), rng.uniform(0, height)
            r = rng.uniform(0.08, 0.3) * min(width, height)
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r * r
        if rng.random() < 0.3:
            period = rng.uniform(6.0, 14.0)
            theta = rng.uniform(0, np.pi)
            phase = 2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period
            shade = 0.75 + 0.25 * np.sin(phase)
            img[mask] = color * shade[mask][:, None]
        else:
            img[mask] = color

    texture = rng.normal(0.0, 1.0, size=(height, width))
    texture = 0.5 * texture + 0.25 * (np.roll(texture, 1, 0) + np.roll(texture, 1, 1))
    img = img * (1.0 + 0.04 * texture[..., None])
    return LinearImage(np.clip(img, 0.0, 1.0), "linear")


def mosaic_scene(scene: LinearImage, pattern=CFAPattern.RGGB) -> np.ndarray:
    """Sample one color per site according to the CFA; returns an (H, W) rate map."""
    data = scene.data if isinstance(scene, LinearImage) else np.asarray(scene)
    h, w = data.shape[:2]
    _check_even(w, h)
    out = np.empty((h, w), dtype=np.float64)
    for ch, (r, c) in enumerate(tile_offsets(pattern)):
        out[r::2, c::2] = data[r::2, c::2, (0, 1, 2, 1)[ch]]
    return out


def expose(rates: np.ndarray, exposure_frac: float, params: SensorNoiseParams, seed: int | None = None,
           pattern=CFAPattern.RGGB, base_exposure_s: float = REFERENCE_EXPOSURE_S) -> BayerImage:
    """Capture a rate mosaic for ``exposure_frac`` of the reference exposure.

    photons ~ Poisson(rate * full_well * frac); DN adds black level, the
    photon-to-DN gain and Gaussian read noise, then clips and rounds to u16.
    """
    if not 0 < exposure_frac <= 1:
        raise ParameterError(f"exposure_frac must be in (0, 1], got {exposure_frac}")
    rng = np.random.default_rng(params.seed if seed is None else seed)
    rates = np.clip(np.asarray(rates, dtype=np.float64), 0.0, None)
    photons = rng.poisson(rates * params.full_well_photons * exposure_frac)
    gain = (params.white_level - params.black_level) / params.full_well_photons
    dn = params.black_level + photons * gain + rng.normal(0.0, 1.0, size=rates.shape) * params.read_noise_dn
    dn = np.round(np.clip(dn, 0, params.white_level)).astype(np.uint16)
    return BayerImage(dn, pattern, params.black_level, params.white_level,
                      base_exposure_s * exposure_frac, iso=100)


def _pair_seeds(seed: int, scene: int) -> np.ndarray:
    return np.random.SeedSequence([seed, scene]).generate_state(8, dtype=np.uint32)


def make_dataset(n_scenes: int, ratios, params: SensorNoiseParams, out_dir, width: int = 64, height: int = 64,
                 pattern=CFAPattern.RGGB, isp: IspConfig | None = None, first_scene: int = 0) -> list[dict]:
    """Write noisy ``.braw`` / reference ``.ppm`` pairs and a tab-separated manifest.

    Every scene and ratio derives its RNG streams from ``(params.seed, scene index)``
    alone, so subsets and reruns reproduce byte-identical files.
    """
    ratios = [float(r) for r in ratios]
    if not ratios:
        raise ParameterError("need at least one amplification ratio")
    if any(r < 1 for r in ratios):
        raise ParameterError(f"ratios must be >= 1, got {ratios}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    isp = isp or IspConfig()
    rows = []
    for i in range(first_scene, first_scene + n_scenes):
        seeds = _pair_seeds(params.seed, i)
        scene = synthesize_scene(width, height, int(seeds[0]))
        rates = mosaic_scene(scene, pattern)
        ref_name = f"scene{i:04d}_ref.ppm"
        reference = expose(rates, 1.0, params, int(seeds[1]), pattern)
        try:
            write_ppm(run_pipeline(reference, isp, 1.0), out / ref_name)
        except OSError as e:
            raise OSError(f"{out / ref_name}: {e}") from e
        for k, ratio in enumerate(ratios):
            pair_id = f"scene{i:04d}_x{ratio:g}"
            noisy_seed = int(np.random.SeedSequence([int(seeds[2]), k, int(ratio * 1000)]).generate_state(1)[0])
            noisy = expose(rates, 1.0 / ratio, params, noisy_seed, pattern)
            try:
                write_braw(noisy, out / f"{pair_id}.braw")
            except OSError as e:
                raise OSError(f"{out / pair_id}.braw: {e}") from e
            rows.append({"pair_id": pair_id, "noisy": f"{pair_id}.braw", "reference": ref_name,
                         "ratio": ratio, "seed": noisy_seed})
    write_manifest(rows, out / MANIFEST_NAME)
    return rows


def write_manifest(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for r in rows:
            w.writerow([r["pair_id"], r["noisy"], r["reference"], f"{float(r['ratio']):g}", r["seed"]])


def read_manifest(path) -> list[dict]:
    """Rows with ``noisy``/``reference`` resolved against the manifest's directory."""
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.DictReader(f, delimiter="\t")
        if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
            raise ValueError(f"{path}: expected columns {MANIFEST_FIELDS}, got {reader.fieldnames}")
        rows = []
        for r in reader:
            rows.append({
                "pair_id": r["pair_id"],
                "noisy": path.parent / r["noisy"],
                "reference": path.parent / r["reference"],
                "ratio": float(r["ratio"]),
                "seed": int(r["seed"]),
            })
    return rows
