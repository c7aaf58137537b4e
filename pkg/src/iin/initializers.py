"""Statistical fill of every non-observed entry, producing the first dense series.

Holdout entries are treated exactly like Missing ones: the only inputs read
are ``dataset.values`` on the Observed mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .core import SensorDataset
from .errors import ConfigError, InitError


@dataclass(frozen=True)
class TemporalNearest:
    name = "temporal_nearest"


@dataclass(frozen=True)
class WindowMean:
    width: int = 3
    name = "window_mean"

    def __post_init__(self):
        if self.width < 1:
            raise ConfigError("window width must be >= 1")


@dataclass(frozen=True)
class GlobalMean:
    name = "global_mean"


@dataclass(frozen=True)
class SpatialTemporalCombo:
    """IDW across sensors averaged with forward simple exponential smoothing.

    A two-factor stand-in for heavier spatio-temporal initializers.
    ``coordinates`` maps sensor id to ``(x, y)``; without it all sensors are
    equidistant.
    """

    idw_power: float = 1.0
    ses_alpha: float = 0.5
    coordinates: tuple = None  # ((sensor_id, (x, y)), ...)
    name = "spatial_temporal_combo"

    def __post_init__(self):
        if not self.idw_power > 0:
            raise ConfigError("idw_power must be > 0")
        if not 0 < self.ses_alpha <= 1:
            raise ConfigError("ses_alpha must lie in (0, 1]")
        if isinstance(self.coordinates, dict):
            object.__setattr__(self, "coordinates", tuple(sorted(self.coordinates.items())))


InitializerKind = Union[TemporalNearest, WindowMean, GlobalMean, SpatialTemporalCombo]
Initializer = Union[InitializerKind, Callable[[SensorDataset], np.ndarray]]

_BY_NAME = {
    "temporal_nearest": TemporalNearest,
    "window_mean": WindowMean,
    "global_mean": GlobalMean,
    "spatial_temporal_combo": SpatialTemporalCombo,
}


def parse_kind(text: str) -> InitializerKind:
    """``name`` or ``name:arg,arg`` e.g. ``window_mean:5``."""
    name, _, args = text.strip().partition(":")
    name = name.replace("-", "_")
    if name not in _BY_NAME:
        raise ConfigError(f"unknown initializer {text!r}; choose from {sorted(_BY_NAME)}")
    params = [float(a) for a in args.split(",") if a] if args else []
    if name == "window_mean" and params:
        return WindowMean(int(params[0]))
    if name == "spatial_temporal_combo" and params:
        return SpatialTemporalCombo(*params[:2])
    return _BY_NAME[name]()


def kind_label(kind) -> str:
    if isinstance(kind, WindowMean):
        return f"window_mean:{kind.width}"
    if isinstance(kind, SpatialTemporalCombo):
        return f"spatial_temporal_combo:{kind.idw_power:g},{kind.ses_alpha:g}"
    return getattr(kind, "name", getattr(kind, "__name__", type(kind).__name__))


def spatial_weights(positions: dict, target, power: float, among=None) -> dict:
    """Normalized inverse-distance weights of the other sensors w.r.t. ``target``.

    Co-located sensors (distance 0) take all the weight, shared equally.
    """
    others = [s for s in (among if among is not None else positions) if s != target]
    if not others:
        raise InitError(f"no other sensor has coordinates relative to {target!r}")
    x0 = np.asarray(positions[target], dtype=float)
    dist = np.array([np.linalg.norm(np.asarray(positions[s], float) - x0) for s in others])
    if (dist == 0).any():
        raw = (dist == 0).astype(float)
    else:
        raw = dist ** (-power)
    return dict(zip(others, raw / raw.sum()))


def _nearest_fill(times, col, obs):
    out = col.copy()
    idx = np.flatnonzero(obs)
    if len(idx) == 0:
        return None
    miss = np.flatnonzero(~obs)
    if len(miss) == 0:
        return out
    pos = np.searchsorted(idx, miss)
    left = idx[np.clip(pos - 1, 0, len(idx) - 1)]
    right = idx[np.clip(pos, 0, len(idx) - 1)]
    dl = np.where(pos > 0, times[miss] - times[left], np.inf)
    dr = np.where(pos < len(idx), times[right] - times[miss], np.inf)
    src = np.where(dl <= dr, left, right)
    out[miss] = col[src]
    return out


def _fallback_mean(ds):
    obs = ds.observed
    if not obs.any():
        raise InitError("dataset has no observed entries at all")
    return float(ds.values[obs].mean())


def _temporal_nearest(ds):
    out = np.array(ds.values)
    obs = ds.observed
    fallback = None
    for s in range(ds.n_sensors):
        col = _nearest_fill(ds.timestamps, out[:, s], obs[:, s])
        if col is None:
            fallback = _fallback_mean(ds) if fallback is None else fallback
            col = np.full(ds.n_timestamps, fallback)
        out[:, s] = col
    return out


def _window_sums(a, width):
    """Sum over rows t-width..t+width, clipped at the series ends."""
    csum = np.concatenate([np.zeros((1, a.shape[1])), np.cumsum(a, axis=0)])
    n = len(a)
    t = np.arange(n)
    return csum[np.minimum(t + width + 1, n)] - csum[np.maximum(t - width, 0)]


def _window_mean(ds, width):
    num = _window_sums(np.where(ds.observed, ds.values, 0.0), width)
    den = _window_sums(ds.observed.astype(float), width)
    out = _temporal_nearest(ds)
    fill = ~ds.observed & (den > 0)
    out[fill] = num[fill] / den[fill]
    return out


def _global_mean(ds):
    out = np.array(ds.values)
    obs = ds.observed
    for s in range(ds.n_sensors):
        if obs[:, s].any():
            m = ds.values[obs[:, s], s].mean()
        else:
            m = _fallback_mean(ds)
        out[~obs[:, s], s] = m
    return out


def _ses_levels(col, obs, alpha):
    """Level after the latest observation at or before each index (NaN before any)."""
    level = np.full(len(col), np.nan)
    cur = np.nan
    for t in range(len(col)):
        if obs[t]:
            cur = col[t] if np.isnan(cur) else alpha * col[t] + (1 - alpha) * cur
        level[t] = cur
    return level


def _spatial_temporal(ds, kind: SpatialTemporalCombo):
    obs = ds.observed
    coords = dict(kind.coordinates) if kind.coordinates else None
    ids = ds.sensor_ids
    if coords is not None:
        missing = [s for s in ids if s not in coords]
        if missing:
            raise InitError(f"no coordinates for sensors {missing}")
        positions = {s: coords[s] for s in ids}
    else:
        positions = {s: (0.0, 0.0) for s in ids}
    tn = _temporal_nearest(ds)
    out = np.array(ds.values)
    for j, sid in enumerate(ids):
        ses = _ses_levels(ds.values[:, j], obs[:, j], kind.ses_alpha)
        for t in np.flatnonzero(~obs[:, j]):
            contrib = [ids[k] for k in range(ds.n_sensors) if k != j and obs[t, k]]
            idw = np.nan
            if contrib:
                wts = spatial_weights(positions, sid, kind.idw_power, among=contrib)
                idw = sum(wts[s] * ds.values[t, ids.index(s)] for s in contrib)
            parts = [p for p in (idw, ses[t]) if not np.isnan(p)]
            out[t, j] = np.mean(parts) if parts else tn[t, j]
    return out


def initialize(ds: SensorDataset, kind: Initializer = TemporalNearest()) -> np.ndarray:
    """Dense ``[time x sensor]`` matrix; Observed entries pass through unchanged."""
    if isinstance(kind, TemporalNearest):
        out = _temporal_nearest(ds)
    elif isinstance(kind, WindowMean):
        out = _window_mean(ds, kind.width)
    elif isinstance(kind, GlobalMean):
        out = _global_mean(ds)
    elif isinstance(kind, SpatialTemporalCombo):
        out = _spatial_temporal(ds, kind)
    elif callable(kind):
        out = np.array(kind(ds), dtype=np.float64)
        if out.shape != ds.shape:
            raise InitError("custom initializer returned the wrong shape")
        out[ds.observed] = ds.values[ds.observed]
    else:
        raise ConfigError(f"unknown initializer {kind!r}")
    if not np.isfinite(out).all():
        raise InitError("initializer produced non-finite values")
    return out
