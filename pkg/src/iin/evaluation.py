"""Error metrics, scenario-stratified scoring, sweeps and report files.

This is the only module that reads Holdout ground truth.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DEFAULT_BLOCK_LENGTH, BlockClassification, SensorDataset, classify_blocks
from .errors import DataError, MetricError
from .imputer import ImputationRun, TrainConfig, run_cascade
from .ingest import TRUTH_HEADER, MissingSpec, fmt, format_timestamp, simulate_missing
from .initializers import Initializer, TemporalNearest, initialize, kind_label

log = logging.getLogger(__name__)

DEFAULT_RATES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
CSV_COLUMNS = ["scenario", "metric", "iteration", "rate", "sensor", "value"]


def _pair(truth, est):
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    est = np.asarray(est, dtype=np.float64).reshape(-1)
    if truth.shape != est.shape:
        raise MetricError(f"length mismatch: {len(truth)} truths vs {len(est)} estimates")
    if len(truth) == 0:
        raise MetricError("no entries to score")
    return truth, est


def mae(truth, est) -> float:
    truth, est = _pair(truth, est)
    return float(np.abs(truth - est).sum() / len(truth))


def mre(truth, est) -> float:
    truth, est = _pair(truth, est)
    denom = truth.sum()
    if denom == 0:
        raise MetricError("MRE undefined: true values sum to zero")
    return float(np.abs(truth - est).sum() / denom)


@dataclass
class Score:
    count: int
    mae: float | None = None
    mre: float | None = None
    mre_unstable: bool = False  # negative truths make the ratio unreliable

    @classmethod
    def of(cls, truth, est) -> "Score":
        if len(truth) == 0:
            return cls(0)
        try:
            r = mre(truth, est)
        except MetricError:
            r = None
        return cls(len(truth), mae(truth, est), r, bool(np.any(np.asarray(truth) < 0)))

    @property
    def absent(self) -> bool:
        return self.count == 0


@dataclass
class EvalReport:
    initializer: str
    general: Score
    overall: Score
    per_sensor: dict  # sensor_id -> {"general": Score, "overall": Score}
    trajectory: list  # per iteration: {"general": Score, "overall": Score}
    val_mae: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    rate: float | None = None
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def csv_rows(self) -> list:
        rate = "" if self.rate is None else fmt(self.rate)
        rows = []
        for it, step in enumerate(self.trajectory):
            for scen in ("general", "overall"):
                rows += _score_rows(step[scen], scen, it, rate, "all")
        last = len(self.trajectory) - 1
        for sid, scores in self.per_sensor.items():
            for scen in ("general", "overall"):
                rows += _score_rows(scores[scen], scen, last, rate, sid)
        for it, v in enumerate(self.val_mae, start=1):
            rows.append(["validation", "mae", it, rate, "all", fmt(v)])
        return rows


def _score_rows(s: Score, scenario, iteration, rate, sensor):
    out = [[scenario, "count", iteration, rate, sensor, str(s.count)]]
    for metric in ("mae", "mre"):
        v = getattr(s, metric)
        if v is not None:
            out.append([scenario, metric, iteration, rate, sensor, fmt(v)])
    return out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_csv_rows(rows, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def write_report(report: EvalReport, json_path, csv_path=None) -> None:
    Path(json_path).write_text(report.to_json())
    if csv_path is not None:
        write_csv_rows(report.csv_rows(), csv_path)


# -- scoring ------------------------------------------------------------------


def holdout_truth(ds: SensorDataset):
    """``(positions, values)`` of every Holdout entry."""
    gt = ds.ground_truth
    if len(gt) == 0:
        raise DataError("dataset has no holdout entries to score against")
    return gt.positions, gt.reveal()


def scenario_split(ds: SensorDataset, positions, blocks: BlockClassification) -> np.ndarray:
    """True for positions in the general scenario (outside every block)."""
    in_block = blocks.block_mask(ds.shape)
    return ~in_block[positions[:, 0], positions[:, 1]]


def score_series(series: Sequence[np.ndarray], ds: SensorDataset,
                 blocks: BlockClassification | None = None, initializer="") -> EvalReport:
    """Score each dense matrix against the Holdout truth; the last one is final."""
    if blocks is None:
        blocks = classify_blocks(ds, DEFAULT_BLOCK_LENGTH)
    pos, truth = holdout_truth(ds)
    general = scenario_split(ds, pos, blocks)

    def both(est, sel=slice(None)):
        p, tv, g = pos[sel], truth[sel], general[sel]
        e = est[p[:, 0], p[:, 1]]
        return {"general": Score.of(tv[g], e[g]), "overall": Score.of(tv, e)}

    trajectory = [both(T) for T in series]
    final = series[-1]
    per_sensor = {
        sid: both(final, pos[:, 1] == j) for j, sid in enumerate(ds.sensor_ids)
    }
    return EvalReport(
        initializer=initializer,
        general=trajectory[-1]["general"],
        overall=trajectory[-1]["overall"],
        per_sensor=per_sensor,
        trajectory=trajectory,
        counts={
            "holdout": int(len(truth)),
            "general": int(general.sum()),
            "overall": int(len(truth)),
            "block_resident": int((~general).sum()),
        },
    )


def score(run: ImputationRun, ds: SensorDataset, blocks: BlockClassification | None = None) -> EvalReport:
    report = score_series(run.series, ds, blocks, run.initializer)
    report.val_mae = list(run.val_mae)
    report.config = run.config.to_dict()
    return report


def write_ground_truth(ds: SensorDataset, path) -> None:
    """Sidecar ``sensor_id,timestamp,true_value`` for the Holdout entries."""
    gt = ds.ground_truth
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRUTH_HEADER)
    for (t, s), v in zip(gt.positions, gt.reveal()):
        w.writerow([ds.sensor_ids[s], format_timestamp(ds.timestamps[t], ds.time_kind), fmt(v)])
    Path(path).write_text(buf.getvalue())


# -- experiments --------------------------------------------------------------


def rate_seeds(master_seed: int, rate: float) -> tuple:
    """``(missing_seed, train_seed)`` derived from the master seed and rate."""
    a, b = np.random.SeedSequence([int(master_seed), int(round(rate * 1_000_000))]).generate_state(2)
    return int(a), int(b)


def run_at_rate(ds: SensorDataset, rate: float, config: TrainConfig,
                initializer: Initializer = TemporalNearest()) -> EvalReport:
    miss_seed, train_seed = rate_seeds(config.seed, rate)
    sim = simulate_missing(ds, MissingSpec(rate=rate, seed=miss_seed))
    run = run_cascade(sim, dataclasses.replace(config, seed=train_seed), initializer)
    report = score(run, sim)
    report.rate = rate
    return report


def sweep_missing_rates(ds: SensorDataset, rates=DEFAULT_RATES, config: TrainConfig = None,
                        initializer: Initializer = TemporalNearest()) -> list:
    """``[(rate, EvalReport), ...]`` in ascending rate order."""
    config = config or TrainConfig()
    out = []
    for rate in sorted(float(r) for r in rates):
        if not 0.0 < rate < 1.0:
            raise MetricError(f"missing rate {rate} outside (0, 1)")
        log.info("sweep: rate %.3f", rate)
        out.append((rate, run_at_rate(ds, rate, config, initializer)))
    return out


def sweep_rows(results) -> list:
    rows = []
    for _, report in results:
        rows += report.csv_rows()
    return rows


def sweep_json(results) -> str:
    return json.dumps(
        _clean([{"rate": r, "report": rep.to_dict()} for r, rep in results]), indent=2, sort_keys=True
    ) + "\n"


def compare_initializers(ds: SensorDataset, kinds: Sequence[Initializer], config: TrainConfig = None) -> list:
    """Rows of ``{kind, init_mae, final_mae, ...}``: each initializer scored alone and after the cascade."""
    if not kinds:
        raise MetricError("need at least one initializer")
    config = config or TrainConfig()
    rows = []
    for kind in kinds:
        T0 = initialize(ds, kind)
        init = score_series([T0], ds).overall
        run = run_cascade(ds, config, kind)
        final = score(run, ds)
        rows.append({
            "kind": kind_label(kind),
            "init_mae": init.mae,
            "init_mre": init.mre,
            "final_mae": final.overall.mae,
            "final_mre": final.overall.mre,
            "final_general_mae": final.general.mae,
        })
    return rows
