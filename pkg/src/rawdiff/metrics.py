"""PSNR / SSIM on float sRGB images and per-ratio evaluation reports."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .isp import read_ppm
from .raw import LinearImage
from .sim import read_manifest

PSNR_CAP_DB = 100.0
SSIM_K1, SSIM_K2 = 0.01, 0.03
SSIM_WIN, SSIM_SIGMA = 11, 1.5


def _arr(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, LinearImage) else x, dtype=np.float64)


def psnr(a, b, max_val: float = 1.0) -> float:
    """10 log10(max^2 / MSE) over all pixels and channels; ``inf`` for identical images."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shapes {a.shape} and {b.shape} differ")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / mse)


def _gaussian_window(size=SSIM_WIN, sigma=SSIM_SIGMA):
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-x * x / (2 * sigma * sigma))
    return g / g.sum()


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM of the channel-mean luminance, 11x11 Gaussian windows (sigma 1.5), valid region only."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError(f"ssim: shapes {a.shape} and {b.shape} differ")
    if a.ndim == 3:
        a, b = a.mean(axis=2), b.mean(axis=2)
    if min(a.shape) < SSIM_WIN:
        raise ValueError(f"ssim: image {a.shape} smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    g = _gaussian_window()
    pad = SSIM_WIN // 2

    def blur(x):
        y = correlate1d(correlate1d(x, g, axis=0, mode="reflect"), g, axis=1, mode="reflect")
        return y[pad:-pad, pad:-pad]

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class EvalRecord:
    pair_id: str
    ratio: float
    psnr_db: float
    ssim: float


@dataclass
class EvalReport:
    records: list = field(default_factory=list)

    def groups(self) -> dict:
        """ratio -> (count, mean PSNR, mean SSIM), PSNR capped before averaging."""
        by = defaultdict(list)
        for r in self.records:
            by[r.ratio].append(r)
        return {k: (len(v), float(np.mean([min(r.psnr_db, PSNR_CAP_DB) for r in v])),
                    float(np.mean([r.ssim for r in v])))
                for k, v in sorted(by.items())}

    def mean_psnr(self, ratio=None) -> float:
        recs = [r for r in self.records if ratio is None or r.ratio == ratio]
        return float(np.mean([min(r.psnr_db, PSNR_CAP_DB) for r in recs]))

    def mean_ssim(self, ratio=None) -> float:
        recs = [r for r in self.records if ratio is None or r.ratio == ratio]
        return float(np.mean([r.ssim for r in recs]))

    def write(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, delimiter="\t", lineterminator="\n")
            w.writerow(("pair_id", "ratio", "psnr_db", "ssim"))
            for r in self.records:
                w.writerow((r.pair_id, f"{r.ratio:g}", f"{min(r.psnr_db, PSNR_CAP_DB):.6f}", f"{r.ssim:.6f}"))
            for ratio, (n, p, s) in self.groups().items():
                w.writerow((f"MEAN_x{ratio:g}", f"{ratio:g}", f"{p:.6f}", f"{s:.6f}"))

    def summary(self) -> str:
        lines = [f"{'ratio':>8} {'pairs':>6} {'PSNR dB':>9} {'SSIM':>7}"]
        for ratio, (n, p, s) in self.groups().items():
            lines.append(f"{'x%g' % ratio:>8} {n:>6} {p:>9.3f} {s:>7.4f}")
        return "\n".join(lines)


def evaluate(manifest, outputs_dir, report_path=None) -> EvalReport:
    """Score ``<outputs_dir>/<pair_id>.ppm`` against each manifest pair's reference."""
    rows = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    outputs_dir = Path(outputs_dir)
    report = EvalReport()
    for r in rows:
        out_path = outputs_dir / f"{r['pair_id']}.ppm"
        if not out_path.exists():
            raise FileNotFoundError(f"missing output for pair {r['pair_id']}: {out_path}")
        out, ref = read_ppm(out_path), read_ppm(r["reference"])
        report.records.append(EvalRecord(r["pair_id"], float(r["ratio"]), psnr(out, ref), ssim(out, ref)))
    if report_path is not None:
        report.write(report_path)
    return report
