"""Sensing stack models: virtual FT sensor, strain-gauge bridge math, calibration fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimator import BaseWrench


class DegenerateData(ValueError):
    """Calibration data cannot determine a line."""


@dataclass(frozen=True)
class VirtualFTConfig:
    """Spring-damper base compliance plus white Gaussian reading noise.

    Triplets are ordered like :class:`BaseWrench`: ``(x, z, rotation)``.
    """

    stiffness: tuple = (5000.0, 5000.0, 500.0)
    damping: tuple = (50.0, 50.0, 20.0)
    sigma: tuple = (0.1, 0.1, 0.01)
    seed: int | None = None

    def __post_init__(self):
        for name in ("stiffness", "damping", "sigma"):
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) != 3 or min(values) < 0:
                raise ValueError(f"{name} must be three non-negative numbers, got {values}")
            object.__setattr__(self, name, values)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def virtual_ft_read(config: VirtualFTConfig, base_disp, base_vel, rng=None) -> BaseWrench:
    """Wrench the compliant base applies to the leg, plus sensor noise.

    ``base_disp`` and ``base_vel`` are in generalized order ``(x, phi_y, z)``.
    Noise is skipped when ``rng`` is None.
    """
    disp = np.asarray(base_disp, dtype=float)[..., [0, 2, 1]]
    vel = np.asarray(base_vel, dtype=float)[..., [0, 2, 1]]
    wrench = -np.asarray(config.stiffness) * disp - np.asarray(config.damping) * vel
    if rng is not None:
        wrench = wrench + rng.normal(size=wrench.shape) * np.asarray(config.sigma)
    return BaseWrench.from_array(wrench)


@dataclass(frozen=True)
class StrainGaugeSpec:
    gauge_factor: float = 2.0
    excitation: float = 5.0
    v_ref: float = 2.5
    adc_bits: int = 24
    enob: int = 16
    bridge_resistance: float = 1000.0
    # 4 for a quarter bridge; 1 for a full bridge with four active arms
    bridge_divisor: float = 4.0

    def __post_init__(self):
        if self.gauge_factor <= 0 or self.excitation <= 0 or self.v_ref <= 0:
            raise ValueError("gauge factor, excitation and reference voltage must be positive")
        if not 1 <= self.enob <= self.adc_bits:
            raise ValueError(f"enob {self.enob} must lie in [1, {self.adc_bits}]")


def lsb(spec: StrainGaugeSpec, use_enob=False) -> float:
    bits = spec.enob if use_enob else spec.adc_bits
    return spec.v_ref / 2.0**bits


def min_detectable_strain(spec: StrainGaugeSpec, use_enob=False) -> float:
    """Strain whose bridge output equals one ADC step."""
    return spec.bridge_divisor * lsb(spec, use_enob) / (spec.gauge_factor * spec.excitation)


def bridge_output(spec: StrainGaugeSpec, strain):
    """Bridge voltage (V) for a given strain, linear gauge regime."""
    return spec.excitation * spec.gauge_factor * np.asarray(strain) / spec.bridge_divisor


def bridge_sensitivity(spec: StrainGaugeSpec) -> float:
    """Volts per unit strain."""
    return spec.excitation * spec.gauge_factor / spec.bridge_divisor


@dataclass(frozen=True)
class CalibrationFit:
    slope: float
    intercept: float
    r_squared: float
    rmse: float
    mae: float
    n_samples: int = 0

    def predict(self, x):
        return self.slope * np.asarray(x) + self.intercept


def _r_squared(y, residuals):
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        return 0.0
    return float(1.0 - np.sum(residuals**2) / ss_tot)


def calibrate_linear(x, y=None) -> CalibrationFit:
    """Least-squares line ``y = slope x + intercept`` with fit metrics.

    Accepts either two sequences or a single sequence of ``(x, y)`` pairs.
    """
    if y is None:
        pairs = np.asarray(x, dtype=float).reshape(-1, 2)
        x, y = pairs[:, 0], pairs[:, 1]
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"x and y lengths differ: {x.size} vs {y.size}")
    if x.size < 2 or np.ptp(x) == 0:
        raise DegenerateData("need at least two distinct x values")
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    residuals = y - (slope * x + intercept)
    return CalibrationFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=_r_squared(y, residuals),
        rmse=float(np.sqrt(np.mean(residuals**2))),
        mae=float(np.mean(np.abs(residuals))),
        n_samples=int(x.size),
    )


ACCURACY_DEFINITION = "accuracy_pct = 100 * (1 - MAE / (max(truth) - min(truth)))"


@dataclass(frozen=True)
class AccuracyReport:
    rmse: float
    mae: float
    r_squared: float
    accuracy_pct: float
    n_samples: int
    definition: str = field(default=ACCURACY_DEFINITION)


def accuracy_report(estimates, truth) -> AccuracyReport:
    """Error metrics of a sensor channel against ground truth."""
    est = np.asarray(estimates, dtype=float).ravel()
    ref = np.asarray(truth, dtype=float).ravel()
    if est.shape != ref.shape:
        raise ValueError(f"series lengths differ: {est.size} vs {ref.size}")
    if est.size == 0:
        raise ValueError("empty series")
    err = est - ref
    span = np.ptp(ref)
    mae = float(np.mean(np.abs(err)))
    return AccuracyReport(
        rmse=float(np.sqrt(np.mean(err**2))),
        mae=mae,
        r_squared=_r_squared(ref, err),
        accuracy_pct=float(100.0 * (1.0 - mae / span)) if span > 0 else float("nan"),
        n_samples=int(est.size),
    )
