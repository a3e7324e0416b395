"""Strain gauge resolution and a least-squares sensor calibration.

First the smallest strain one ADC step can resolve, for the ideal 24-bit
converter and for 16 effective bits. Then a noisy linear bench dataset is
fitted and scored.

Run with ``python3 demos/04_strain_gauge_and_calibration.py``.
"""

import numpy as np

from legcontact.sensors import StrainGaugeSpec, accuracy_report, calibrate_linear, min_detectable_strain

spec = StrainGaugeSpec()
print(f"min strain, {spec.adc_bits} bits: {min_detectable_strain(spec):.3g}")
print(f"min strain, ENOB {spec.enob}:  {min_detectable_strain(spec, use_enob=True):.3g}")

rng = np.random.default_rng(0)
counts = np.linspace(0, 2000, 200)
torque = 0.0115 * counts + 5.0069 + rng.normal(0, 0.2, counts.size)
fit = calibrate_linear(counts, torque)
print(f"fit: slope {fit.slope:.5f}, intercept {fit.intercept:.4f}, R^2 {fit.r_squared:.4f}, RMSE {fit.rmse:.3f}")

rep = accuracy_report(fit.slope * counts + fit.intercept, torque)
print(f"accuracy {rep.accuracy_pct:.2f} % ({rep.definition})")
