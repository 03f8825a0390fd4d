"""
Sensor noise statistics
=======================

Expose flat patches at several signal levels and compare the measured
mean and variance of the DN values with the Poisson plus Gaussian model.

Run:  python3 demos/sensor_noise.py
"""
import numpy as np

from rawdiff.sim import SensorNoiseParams, expose

params = SensorNoiseParams()
gain = (params.white_level - params.black_level) / params.full_well_photons
print(f"gain {gain:.4f} DN/photon, read noise {params.read_noise_dn} DN")
print(f"{'rate':>6} {'frac':>7} {'mean DN':>10} {'model':>10} {'var DN^2':>10} {'model':>10}")

for rate in (0.05, 0.2, 0.8):
    for frac in (1.0, 1 / 100, 1 / 300):
        img = expose(np.full((256, 256), rate), frac, params, seed=11)
        dn = img.data.astype(np.float64) - params.black_level
        photons = rate * params.full_well_photons * frac
        # quantization adds 1/12 DN^2 on top of shot and read noise
        var_model = photons * gain ** 2 + params.read_noise_dn ** 2 + 1 / 12
        print(f"{rate:6.2f} {frac:7.4f} {dn.mean():10.2f} {photons * gain:10.2f} "
              f"{dn.var():10.2f} {var_model:10.2f}")
