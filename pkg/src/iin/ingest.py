"""Dataset I/O, missing-value simulation, holdouts and splitting.

CSV layout is long-form ``sensor_id,timestamp,value`` with ``NA`` for absent
readings. Lines starting with ``#`` before the header are comments.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .core import GroundTruth, MaskState, SensorDataset, valid_anchor_mask
from .errors import ConfigError, DataError, ParseError

HEADER = ["sensor_id", "timestamp", "value"]
TRUTH_HEADER = ["sensor_id", "timestamp", "true_value"]
COORD_HEADER = ["sensor_id", "x", "y"]
NA = "NA"
EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


# -- timestamps ---------------------------------------------------------------


def _parse_iso(text: str) -> float:
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    delta = dt - EPOCH
    seconds = delta.days * 86400 + delta.seconds + delta.microseconds / 1e6
    return seconds / 3600.0


def format_timestamp(hours: float, time_kind: str) -> str:
    if time_kind == "iso":
        micros = round(hours * 3600.0 * 1e6)
        dt = EPOCH + timedelta(microseconds=micros)
        text = dt.strftime("%Y-%m-%dT%H:%M:%S")
        if dt.microsecond:
            text += f".{dt.microsecond:06d}"
        return text
    if float(hours).is_integer():
        return str(int(hours))
    return fmt(hours)


def hours_to_datetime(hours: float) -> datetime:
    return EPOCH + timedelta(microseconds=round(hours * 3600.0 * 1e6))


def _parse_timestamps(raw: list, lines: list) -> tuple:
    try:
        return [float(t) for t in raw], "hours"
    except ValueError:
        pass
    out = []
    for text, line in zip(raw, lines):
        try:
            float(text)
        except ValueError:
            pass
        else:
            raise ParseError("timestamps mix numeric and ISO-8601 forms", line)
        try:
            out.append(_parse_iso(text))
        except ValueError:
            raise ParseError(f"unparseable timestamp {text!r}", line) from None
    return out, "iso"


# -- reading / writing --------------------------------------------------------


def _rows(path):
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    header_seen = False
    for lineno, line in enumerate(lines, start=1):
        if not header_seen:
            if not line.strip() or line.startswith("#"):
                continue
            header_seen = True
            yield lineno, None, next(csv.reader([line]))
            continue
        if not line.strip():
            continue
        yield lineno, line, next(csv.reader([line]))


def _read_table(path, header):
    rows = []
    it = _rows(path)
    try:
        lineno, _, head = next(it)
    except StopIteration:
        raise ParseError(f"{path}: empty file") from None
    if [h.strip() for h in head] != header:
        raise ParseError(f"expected header {','.join(header)}", lineno)
    for lineno, _, fields in it:
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(fields)}", lineno)
        rows.append((lineno, [f.strip() for f in fields]))
    return rows


def load_csv(path, truth_path=None, variable_name=None) -> SensorDataset:
    """Load a long-form CSV, aligning sensors on the union of timestamps.

    With ``truth_path`` the ground-truth sidecar is attached and its entries
    become Holdout.
    """
    rows = _read_table(path, HEADER)
    if not rows:
        raise DataError(f"{path}: no data rows")
    lines = [r[0] for r in rows]
    times, kind = _parse_timestamps([r[1][1] for r in rows], lines)
    sensors = []
    seen = {}
    for _, (sid, _, _) in rows:
        if sid not in seen:
            seen[sid] = len(sensors)
            sensors.append(sid)
    grid = np.array(sorted(set(times)))
    t_pos = {t: i for i, t in enumerate(grid)}
    values = np.full((len(grid), len(sensors)), np.nan)
    filled = np.zeros(values.shape, dtype=bool)
    for (lineno, (sid, _, val)), t in zip(rows, times):
        i, j = t_pos[t], seen[sid]
        if filled[i, j]:
            raise DataError(f"line {lineno}: duplicate cell for sensor {sid!r} at {t!r}")
        filled[i, j] = True
        if val == NA:
            continue
        try:
            x = float(val)
        except ValueError:
            raise ParseError(f"bad value {val!r}", lineno) from None
        if not math.isfinite(x):
            raise ParseError(f"non-finite value {val!r}", lineno)
        values[i, j] = x
    ds = SensorDataset(
        sensor_ids=tuple(sensors),
        timestamps=grid,
        values=values,
        variable_name=variable_name or Path(path).stem,
        time_kind=kind,
    )
    if truth_path is not None:
        ds = attach_ground_truth(ds, truth_path)
    return ds


def attach_ground_truth(ds: SensorDataset, truth_path) -> SensorDataset:
    rows = _read_table(truth_path, TRUTH_HEADER)
    lines = [r[0] for r in rows]
    times, _ = _parse_timestamps([r[1][1] for r in rows], lines) if rows else ([], None)
    s_pos = {s: j for j, s in enumerate(ds.sensor_ids)}
    t_pos = {t: i for i, t in enumerate(ds.timestamps.tolist())}
    positions, truth = [], []
    for (lineno, (sid, _, val)), t in zip(rows, times):
        if sid not in s_pos or t not in t_pos:
            raise DataError(f"line {lineno}: truth entry outside the dataset grid")
        i, j = t_pos[t], s_pos[sid]
        if ds.mask[i, j] != MaskState.MISSING:
            raise DataError(f"line {lineno}: truth entry is not missing in the dataset")
        try:
            truth.append(float(val))
        except ValueError:
            raise ParseError(f"bad value {val!r}", lineno) from None
        positions.append((i, j))
    mask = ds.mask.copy()
    for i, j in positions:
        mask[i, j] = MaskState.HOLDOUT
    gt = ds.ground_truth._merged(GroundTruth(np.array(positions).reshape(-1, 2), truth))
    return ds.replace(mask=mask, ground_truth=gt)


def dataset_rows(ds: SensorDataset, dense: np.ndarray | None = None):
    """Long-form rows; ``dense`` overrides values (all cells filled)."""
    for i, t in enumerate(ds.timestamps):
        ts = format_timestamp(t, ds.time_kind)
        for j, sid in enumerate(ds.sensor_ids):
            if dense is not None:
                yield [sid, ts, fmt(dense[i, j])]
            elif ds.mask[i, j] == MaskState.OBSERVED:
                yield [sid, ts, fmt(ds.values[i, j])]
            else:
                yield [sid, ts, NA]


def save_csv(ds: SensorDataset, path, dense=None, comment: str | None = None) -> None:
    """Write the dataset (Holdout cells as ``NA``) or a dense fill of it."""
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    w.writerows(dataset_rows(ds, dense))
    Path(path).write_text(buf.getvalue())


def load_dense_csv(path, like: SensorDataset) -> np.ndarray:
    """Read a fully filled CSV back onto ``like``'s grid."""
    other = load_csv(path)
    if other.sensor_ids != like.sensor_ids or not np.array_equal(
        other.timestamps, like.timestamps
    ):
        raise DataError(f"{path}: grid does not match the reference dataset")
    if not other.observed.all():
        raise DataError(f"{path}: dense file contains NA cells")
    return np.array(other.values)


def load_coordinates(path) -> dict:
    """Sensor coordinates sidecar (``sensor_id,x,y``)."""
    out = {}
    for lineno, (sid, x, y) in _read_table(path, COORD_HEADER):
        try:
            out[sid] = (float(x), float(y))
        except ValueError:
            raise ParseError("bad coordinate", lineno) from None
    return out


# -- missing simulation -------------------------------------------------------


class Mechanism(enum.Enum):
    RANDOM_RATE = "random-rate"
    POSITION_COPY = "position-copy"
    RANDOM_FRACTION_20 = "random-fraction-20"
    BLOCK_INJECTION = "block"


@dataclass(frozen=True)
class MissingSpec:
    mechanism: Mechanism = Mechanism.RANDOM_RATE
    rate: float = 0.2
    block_length_distribution: tuple = (11, 24)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"missing rate must lie in [0, 1), got {self.rate}")
        lo, hi = self.block_length_distribution
        if lo < 1 or hi < lo:
            raise ConfigError("block lengths must satisfy 1 <= min <= max")


def _with_holdout(ds: SensorDataset, positions: np.ndarray) -> SensorDataset:
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 2)
    if len(positions) == 0:
        return ds
    truth = ds.values[positions[:, 0], positions[:, 1]]
    mask = ds.mask.copy()
    mask[positions[:, 0], positions[:, 1]] = MaskState.HOLDOUT
    gt = ds.ground_truth._merged(GroundTruth(positions, truth))
    return ds.replace(mask=mask, ground_truth=gt)


def simulate_missing(ds: SensorDataset, spec: MissingSpec) -> SensorDataset:
    """Turn Observed entries into Holdout entries per ``spec``.

    Random mechanisms convert exactly ``floor(rate * #Observed)`` entries.
    """
    if spec.mechanism is Mechanism.POSITION_COPY:
        raise ConfigError("position-copy needs explicit periods; use holdout_position_copy")
    rate = 0.2 if spec.mechanism is Mechanism.RANDOM_FRACTION_20 else spec.rate
    rng = np.random.default_rng(spec.seed)
    obs = np.argwhere(ds.observed)
    k = math.floor(rate * len(obs))
    if k == 0:
        return ds
    if spec.mechanism is Mechanism.BLOCK_INJECTION:
        chosen = _inject_blocks(ds.observed, k, spec.block_length_distribution, rng)
    else:
        pick = np.sort(rng.choice(len(obs), size=k, replace=False))
        chosen = obs[pick]
    return _with_holdout(ds, chosen)


def _inject_blocks(observed, k, lengths, rng):
    avail = observed.copy()
    n_t, n_s = avail.shape
    picked = []
    lo, hi = lengths
    while len(picked) < k:
        s = int(rng.integers(n_s))
        start = int(rng.integers(n_t))
        length = int(rng.integers(lo, hi + 1))
        for t in range(start, min(start + length, n_t)):
            if avail[t, s]:
                avail[t, s] = False
                picked.append((t, s))
                if len(picked) == k:
                    break
    return np.array(picked)


def holdout_position_copy(ds: SensorDataset, source_period, target_period) -> SensorDataset:
    """Copy the missing pattern of one period onto the next.

    Periods are half-open ``(start, stop)`` timestamp-index ranges of equal
    length; each Missing entry at offset k in the source turns the Observed
    entry at offset k of the target into Holdout.
    """
    s0, s1 = map(int, source_period)
    t0, t1 = map(int, target_period)
    n = ds.n_timestamps
    for a, b in ((s0, s1), (t0, t1)):
        if not 0 <= a <= b <= n:
            raise ConfigError(f"period ({a}, {b}) outside [0, {n}]")
    if s1 - s0 != t1 - t0:
        raise ConfigError(
            f"period lengths differ: source {s1 - s0}, target {t1 - t0}"
        )
    src_missing = ds.mask[s0:s1] == MaskState.MISSING
    tgt_observed = ds.observed[t0:t1]
    offs = np.argwhere(src_missing & tgt_observed)
    offs[:, 0] += t0
    return _with_holdout(ds, offs)


def month_period(ds: SensorDataset, month: str) -> tuple:
    """Index range of a ``YYYY-MM`` calendar month."""
    if not ds.has_calendar:
        raise ConfigError("dataset timestamps carry no calendar")
    try:
        y, m = (int(x) for x in month.split("-"))
        start = datetime(y, m, 1, tzinfo=timezone.utc)
    except ValueError:
        raise ConfigError(f"bad month {month!r}; expected YYYY-MM") from None
    stop = datetime(y + m // 12, m % 12 + 1, 1, tzinfo=timezone.utc)
    h0 = (start - EPOCH).total_seconds() / 3600
    h1 = (stop - EPOCH).total_seconds() / 3600
    ts = ds.timestamps
    return int(np.searchsorted(ts, h0)), int(np.searchsorted(ts, h1))


def month_copy_periods(ds: SensorDataset, source: str, target: str) -> tuple:
    """Aligned equal-length periods for two months (truncated to the shorter)."""
    a0, a1 = month_period(ds, source)
    b0, b1 = month_period(ds, target)
    n = min(a1 - a0, b1 - b0)
    if n <= 0:
        raise ConfigError(f"months {source} / {target} have no data to align")
    return (a0, a0 + n), (b0, b0 + n)


# -- splitting ----------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    test_months: frozenset = field(default_factory=lambda: frozenset({3, 6, 9, 12}))
    validation_fraction: float = 0.1
    seed: int = 0
    w: int = 12
    test_fraction: float = 0.25  # contiguous tail split when there is no calendar

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie strictly in (0, 1)")
        if any(not 1 <= m <= 12 for m in self.test_months):
            raise ConfigError("test months must lie in 1..12")
        object.__setattr__(self, "test_months", frozenset(self.test_months))


def months_of(ds: SensorDataset) -> np.ndarray:
    return np.array([hours_to_datetime(h).month for h in ds.timestamps])


def choose_validation(candidates: np.ndarray, fraction: float, rng) -> np.ndarray:
    """Seeded ``floor(fraction * N)`` subset of candidate rows."""
    k = math.floor(fraction * len(candidates))
    pick = np.sort(rng.choice(len(candidates), size=k, replace=False))
    return candidates[pick]


def split(ds: SensorDataset, spec: SplitSpec):
    """Return ``(train, validation_centers, test)``.

    ``validation_centers`` is a frozenset of ``(t, sensor)`` positions in
    ``train`` coordinates drawn from valid anchors with observed centers.
    """
    if ds.has_calendar:
        in_test = np.isin(months_of(ds), sorted(spec.test_months))
    else:
        n_test = math.floor(spec.test_fraction * ds.n_timestamps)
        in_test = np.zeros(ds.n_timestamps, dtype=bool)
        in_test[ds.n_timestamps - n_test :] = True
    train_idx = np.flatnonzero(~in_test)
    test_idx = np.flatnonzero(in_test)
    if len(train_idx) == 0 or len(test_idx) == 0:
        raise ConfigError("split leaves an empty train or test set")
    train = ds.take_timestamps(train_idx)
    test = ds.take_timestamps(test_idx)
    centers = np.argwhere(valid_anchor_mask(train.observed, spec.w) & train.observed)
    val = choose_validation(centers, spec.validation_fraction, np.random.default_rng(spec.seed))
    return train, frozenset(map(tuple, val.tolist())), test
