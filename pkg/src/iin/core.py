"""Domain types, mask algebra, anchors and missing-block classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError

DEFAULT_BLOCK_LENGTH = 11


class MaskState(enum.IntEnum):
    OBSERVED = 0
    MISSING = 1
    HOLDOUT = 2


class Scenario(enum.Enum):
    GENERAL_MISSING = "general"
    OVERALL_ONLY = "overall_only"
    NOT_MISSING = "not_missing"


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class GroundTruth:
    """True values of Holdout entries, kept apart from the imputation inputs.

    Only evaluation code calls :meth:`reveal`; everything else sees positions
    at most.
    """

    def __init__(self, positions=None, values=None):
        if positions is None:
            positions = np.empty((0, 2), dtype=np.int64)
            values = np.empty(0)
        positions = np.asarray(positions, dtype=np.int64).reshape(-1, 2)
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if len(positions) != len(values):
            raise DataError("ground truth positions and values differ in length")
        order = np.lexsort((positions[:, 1], positions[:, 0]))
        self._positions = _frozen(positions[order].copy())
        self._values = _frozen(values[order].copy())
        if len(positions) > 1:
            p = self._positions
            dup = (p[1:, 0] == p[:-1, 0]) & (p[1:, 1] == p[:-1, 1])
            if dup.any():
                raise DataError("duplicate ground-truth position")

    def __len__(self):
        return len(self._positions)

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    def reveal(self) -> np.ndarray:
        """True values aligned with :attr:`positions`."""
        return self._values

    def _merged(self, other: "GroundTruth") -> "GroundTruth":
        return GroundTruth(
            np.concatenate([self._positions, other._positions]),
            np.concatenate([self._values, other._values]),
        )

    def _take_rows(self, t_index: np.ndarray) -> "GroundTruth":
        # re-index onto a subset of timestamps (t_index is sorted old indices)
        lookup = np.full(int(t_index.max()) + 1 if len(t_index) else 0, -1)
        lookup[t_index] = np.arange(len(t_index))
        p = self._positions
        if len(p) == 0 or len(lookup) == 0:
            return GroundTruth()
        inside = p[:, 0] < len(lookup)
        inside[inside] = lookup[p[inside, 0]] >= 0
        newpos = p[inside].copy()
        newpos[:, 0] = lookup[newpos[:, 0]]
        return GroundTruth(newpos, self._values[inside])

    def __eq__(self, other):
        if not isinstance(other, GroundTruth):
            return NotImplemented
        return np.array_equal(self._positions, other._positions) and np.array_equal(
            self._values, other._values
        )


@dataclass(frozen=True, eq=False)
class SensorDataset:
    """Aligned multi-sensor series, one column per sensor.

    ``values`` is NaN wherever the mask is not Observed, so Holdout truth can
    only be reached through ``ground_truth``. ``time_kind`` is ``"hours"``
    (epoch hours), ``"iso"`` (epoch hours parsed from ISO-8601) or
    ``"index"`` (no calendar).
    """

    sensor_ids: tuple
    timestamps: np.ndarray
    values: np.ndarray
    mask: np.ndarray = None
    variable_name: str = "value"
    time_kind: str = "index"
    ground_truth: GroundTruth = field(default_factory=GroundTruth)

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64).reshape(-1).copy()
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape != (len(ts), len(self.sensor_ids)):
            raise DataError(
                f"values shape {vals.shape} does not match "
                f"{len(ts)} timestamps x {len(self.sensor_ids)} sensors"
            )
        if len(ts) > 1 and not np.all(np.diff(ts) > 0):
            raise DataError("timestamps must be strictly increasing")
        if self.mask is None:
            mask = np.where(np.isfinite(vals), MaskState.OBSERVED, MaskState.MISSING)
        else:
            mask = np.asarray(self.mask)
        mask = mask.astype(np.int8).reshape(vals.shape).copy()
        if not np.isin(mask, [s.value for s in MaskState]).all():
            raise DataError("mask holds an unknown state")
        obs = mask == MaskState.OBSERVED
        if not np.isfinite(vals[obs]).all():
            raise DataError("observed entry carries a non-finite value")
        vals[~obs] = np.nan
        gt = self.ground_truth
        hold = np.argwhere(mask == MaskState.HOLDOUT)
        if not np.array_equal(hold, gt.positions):
            raise DataError("holdout mask and ground-truth positions disagree")
        object.__setattr__(self, "sensor_ids", tuple(self.sensor_ids))
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "mask", _frozen(mask))

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_timestamps(self) -> int:
        return self.values.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.values.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return self.mask == MaskState.OBSERVED

    @property
    def holdout(self) -> np.ndarray:
        return self.mask == MaskState.HOLDOUT

    @property
    def has_calendar(self) -> bool:
        return self.time_kind in ("hours", "iso")

    def replace(self, **changes) -> "SensorDataset":
        fields = dict(
            sensor_ids=self.sensor_ids,
            timestamps=self.timestamps,
            values=self.values,
            mask=self.mask,
            variable_name=self.variable_name,
            time_kind=self.time_kind,
            ground_truth=self.ground_truth,
        )
        fields.update(changes)
        return SensorDataset(**fields)

    def take_timestamps(self, t_index) -> "SensorDataset":
        t_index = np.asarray(t_index, dtype=np.int64)
        return self.replace(
            timestamps=self.timestamps[t_index],
            values=self.values[t_index],
            mask=self.mask[t_index],
            ground_truth=self.ground_truth._take_rows(t_index),
        )

    def take_sensors(self, s_index) -> "SensorDataset":
        s_index = [int(s) for s in np.atleast_1d(s_index)]
        gt = self.ground_truth
        p = gt.positions
        keep = np.isin(p[:, 1], s_index)
        remap = {old: new for new, old in enumerate(s_index)}
        newpos = p[keep].copy()
        newpos[:, 1] = [remap[s] for s in newpos[:, 1]]
        return self.replace(
            sensor_ids=[self.sensor_ids[s] for s in s_index],
            values=self.values[:, s_index],
            mask=self.mask[:, s_index],
            ground_truth=GroundTruth(newpos, gt._values[keep]),
        )

    def equals(self, other: "SensorDataset") -> bool:
        return (
            self.sensor_ids == other.sensor_ids
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values, equal_nan=True)
            and np.array_equal(self.mask, other.mask)
            and self.ground_truth == other.ground_truth
        )


@dataclass(frozen=True)
class Anchor:
    sensor_index: int
    center_index: int
    left: np.ndarray
    right: np.ndarray
    left_observed: np.ndarray
    right_observed: np.ndarray
    center_observed: bool
    observed_count: int
    timestamps: np.ndarray

    @property
    def half_window(self) -> int:
        return len(self.left)

    @property
    def size(self) -> int:
        return 2 * len(self.left) + 1


def is_valid_anchor(a: Anchor) -> bool:
    return 2 * a.observed_count > a.size


def padded_timestamps(timestamps: np.ndarray, w: int) -> np.ndarray:
    """Timestamps extended by ``w`` slots on each side at the median step."""
    ts = np.asarray(timestamps, dtype=np.float64)
    step = float(np.median(np.diff(ts))) if len(ts) > 1 else 1.0
    before = ts[0] - step * np.arange(w, 0, -1)
    after = ts[-1] + step * np.arange(1, w + 1)
    return np.concatenate([before, ts, after])


def extract_anchor(dataset: SensorDataset, sensor: int, t: int, w: int) -> Anchor:
    n_t, n_s = dataset.shape
    if not 0 <= sensor < n_s:
        raise IndexError(f"sensor index {sensor} out of range [0, {n_s})")
    if not 0 <= t < n_t:
        raise IndexError(f"time index {t} out of range [0, {n_t})")
    if w < 1:
        raise ValueError("half-window w must be >= 1")
    col = np.concatenate([np.full(w, np.nan), dataset.values[:, sensor], np.full(w, np.nan)])
    obs = np.concatenate(
        [np.zeros(w, bool), dataset.observed[:, sensor], np.zeros(w, bool)]
    )
    lo = t  # window start in padded coordinates
    win_v = col[lo : lo + 2 * w + 1]
    win_o = obs[lo : lo + 2 * w + 1]
    ts = padded_timestamps(dataset.timestamps, w)[lo : lo + 2 * w + 1]
    return Anchor(
        sensor_index=sensor,
        center_index=t,
        left=win_v[:w].copy(),
        right=win_v[w + 1 :].copy(),
        left_observed=win_o[:w].copy(),
        right_observed=win_o[w + 1 :].copy(),
        center_observed=bool(win_o[w]),
        observed_count=int(win_o.sum()),
        timestamps=ts.copy(),
    )


def window_observed_counts(observed: np.ndarray, w: int) -> np.ndarray:
    """Observed count over every (2w+1)-window, boundary slots unobserved."""
    obs = np.asarray(observed, dtype=np.int64)
    if obs.ndim == 1:
        obs = obs[:, None]
    padded = np.pad(obs, ((w + 1, w), (0, 0)))
    csum = np.cumsum(padded, axis=0)
    return csum[2 * w + 1 :] - csum[: -2 * w - 1]


def valid_anchor_mask(observed: np.ndarray, w: int) -> np.ndarray:
    """Bool matrix: anchor centered at (t, s) is valid."""
    return 2 * window_observed_counts(observed, w) > 2 * w + 1


def runs(flags: Sequence[bool]) -> list:
    """Maximal runs of True as ``(start, length)`` pairs."""
    f = np.concatenate([[False], np.asarray(flags, dtype=bool), [False]])
    edges = np.flatnonzero(f[1:] != f[:-1])
    return [(int(a), int(b - a)) for a, b in zip(edges[::2], edges[1::2])]


@dataclass(frozen=True)
class BlockClassification:
    spatial_blocks: frozenset
    temporal_blocks: tuple  # per sensor: tuple of (start, length)
    min_length: int = DEFAULT_BLOCK_LENGTH

    def block_mask(self, shape) -> np.ndarray:
        """Bool matrix of entries lying in any spatial or temporal block."""
        out = np.zeros(shape, dtype=bool)
        if self.spatial_blocks:
            out[sorted(self.spatial_blocks), :] = True
        for s, blocks in enumerate(self.temporal_blocks):
            for start, length in blocks:
                out[start : start + length, s] = True
        return out


def classify_blocks(dataset: SensorDataset, L: int = DEFAULT_BLOCK_LENGTH) -> BlockClassification:
    if L < 1:
        raise ValueError("run-length threshold must be >= 1")
    missing = ~dataset.observed
    spatial = frozenset(int(t) for t in np.flatnonzero(missing.all(axis=1)))
    temporal = tuple(
        tuple(r for r in runs(missing[:, s]) if r[1] >= L) for s in range(dataset.n_sensors)
    )
    return BlockClassification(spatial, temporal, L)


def scenario_membership(
    dataset: SensorDataset, blocks: BlockClassification, entry
) -> Scenario:
    s, t = entry
    if not (0 <= s < dataset.n_sensors and 0 <= t < dataset.n_timestamps):
        raise IndexError(f"entry {entry} out of range")
    if dataset.observed[t, s]:
        return Scenario.NOT_MISSING
    if t in blocks.spatial_blocks:
        return Scenario.OVERALL_ONLY
    for start, length in blocks.temporal_blocks[s]:
        if start <= t < start + length:
            return Scenario.OVERALL_ONLY
    return Scenario.GENERAL_MISSING
