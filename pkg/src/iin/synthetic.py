"""Seeded multi-sensor fixtures sharing a common periodic trend."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from .core import SensorDataset
from .ingest import EPOCH

DEFAULT_START = int((datetime(2014, 5, 1, tzinfo=timezone.utc) - EPOCH).total_seconds() // 3600)


@dataclass
class GeneratorSpec:
    sensors: int = 3
    steps: int = 2000
    seed: int = 1
    level: float = 50.0
    components: list = field(default_factory=lambda: [[20.0, 24.0], [10.0, 168.0], [5.0, 12.0]])
    amplitude_jitter: float = 0.1  # relative std of per-sensor amplitudes
    phase_jitter: float = 0.3  # max per-sensor phase offset, radians
    noise: float = 1.0
    start_hour: int = DEFAULT_START


def sensor_parameters(spec: GeneratorSpec):
    """Per-sensor ``(amplitudes, phases)`` arrays of shape (sensors, components)."""
    rng = np.random.default_rng(spec.seed)
    n_c = len(spec.components)
    amp = np.array([a for a, _ in spec.components])
    amps = amp * (1.0 + spec.amplitude_jitter * rng.standard_normal((spec.sensors, n_c)))
    phases = rng.uniform(-spec.phase_jitter, spec.phase_jitter, (spec.sensors, n_c))
    return amps, phases, rng


def generate(spec: GeneratorSpec) -> SensorDataset:
    amps, phases, rng = sensor_parameters(spec)
    t = np.arange(spec.steps, dtype=np.float64)
    periods = np.array([p for _, p in spec.components])
    angle = 2 * np.pi * t[:, None, None] / periods[None, None, :] + phases[None]
    values = spec.level + (amps[None] * np.sin(angle)).sum(axis=2)
    if spec.noise > 0:
        values = values + spec.noise * rng.standard_normal(values.shape)
    return SensorDataset(
        sensor_ids=tuple(f"S{k:02d}" for k in range(spec.sensors)),
        timestamps=spec.start_hour + t,
        values=values,
        variable_name="synthetic",
        time_kind="hours",
    )


def header_comment(spec: GeneratorSpec) -> str:
    return "generator " + json.dumps(asdict(spec), sort_keys=True)
