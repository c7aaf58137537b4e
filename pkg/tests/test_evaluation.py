import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from iin.core import GroundTruth, MaskState, SensorDataset, classify_blocks
from iin.errors import DataError, MetricError
from iin.evaluation import (
    CSV_COLUMNS, Score, compare_initializers, holdout_truth, mae, mre, rate_seeds, scenario_split,
    score, score_series, sweep_json, sweep_missing_rates, sweep_rows, write_report,
)
from iin.imputer import TrainConfig, run_cascade
from iin.ingest import MissingSpec, simulate_missing
from iin.initializers import TemporalNearest, WindowMean, initialize

from conftest import make_dataset

FAST = TrainConfig(w=3, hidden=5, max_epochs=2, patience=1, batch_size=64, iter_num=1)


class TestMetrics:
    def test_mae_examples(self):
        assert mae([1, 2, 3], [1, 2, 3]) == 0
        assert mae([10, 20], [12, 18]) == 2.0
        assert mae([5], [7]) == 2

    def test_mre_examples(self):
        assert mre([10, 20], [12, 18]) == 4 / 30
        assert mre([10, 20], [10, 20]) == 0
        with pytest.raises(MetricError):
            mre([1, -1], [0, 0])

    @pytest.mark.parametrize("f", [mae, mre])
    def test_bad_lengths(self, f):
        with pytest.raises(MetricError):
            f([1, 2], [1])
        with pytest.raises(MetricError):
            f([], [])

    @given(st.lists(st.tuples(st.floats(0.1, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=30),
           st.randoms(use_true_random=False), st.floats(0.01, 100))
    def test_invariances(self, pairs, rnd, lam):
        t, e = map(np.array, zip(*pairs))
        perm = list(range(len(t)))
        rnd.shuffle(perm)
        assert mae(t[perm], e[perm]) == pytest.approx(mae(t, e), rel=1e-12, abs=1e-12)
        assert mre(t[perm], e[perm]) == pytest.approx(mre(t, e), rel=1e-12, abs=1e-12)
        assert mae(lam * t, lam * e) == pytest.approx(lam * mae(t, e), rel=1e-9, abs=1e-12)
        assert mre(lam * t, lam * e) == pytest.approx(mre(t, e), rel=1e-9, abs=1e-12)
        assert (mae(t, e) == 0) == bool(np.array_equal(t, e))

    def test_score_flags_negative_truth(self):
        s = Score.of(np.array([-1.0, 3.0]), np.array([0.0, 3.0]))
        assert s.mre_unstable and s.mae == 0.5
        assert Score.of(np.array([]), np.array([])).absent


def held(vals, positions):
    """Dataset whose listed (t, s) entries are Holdout with their values as truth."""
    vals = np.asarray(vals, float)
    mask = np.where(np.isfinite(vals), MaskState.OBSERVED, MaskState.MISSING).astype(np.int8)
    pos = np.asarray(positions).reshape(-1, 2)
    mask[pos[:, 0], pos[:, 1]] = MaskState.HOLDOUT
    gt = GroundTruth(pos, vals[pos[:, 0], pos[:, 1]])
    return SensorDataset(tuple(f"s{j}" for j in range(vals.shape[1])), np.arange(float(len(vals))),
                         np.where(mask == MaskState.OBSERVED, vals, np.nan), mask=mask, ground_truth=gt)


class TestScore:
    def test_isolated_holdout_general_equals_overall(self):
        ds = held(np.arange(40.0).reshape(20, 2) + 1, [[3, 0], [9, 1]])
        est = np.where(ds.observed, ds.values, 0.0)
        rep = score_series([est], ds)
        assert rep.general == rep.overall and rep.overall.count == 2
        assert rep.overall.mae == (7 + 20) / 2

    def test_holdout_only_in_block(self):
        vals = np.arange(60.0).reshape(30, 2) + 1
        ds = held(vals, [[t, 0] for t in range(5, 16)])
        rep = score_series([np.zeros_like(vals)], ds)
        assert rep.general.absent and rep.general.mae is None
        assert rep.overall.count == 11
        assert rep.counts == {"holdout": 11, "general": 0, "overall": 11, "block_resident": 11}
        rows = rep.csv_rows()
        assert ["general", "count", 0, "", "all", "0"] in rows
        assert not any(r[0] == "general" and r[1] == "mae" for r in rows)

    def test_no_holdout(self):
        with pytest.raises(DataError):
            score_series([np.zeros((3, 1))], make_dataset([1.0, 2.0, 3.0]))

    def test_trajectory_length(self):
        ds = simulate_missing(make_dataset(np.sin(np.arange(200) / 5)[:, None] + 3),
                              MissingSpec(rate=0.1, seed=0))
        run = run_cascade(ds, TrainConfig(**{**FAST.to_dict(), "iter_num": 2}))
        rep = score(run, ds)
        assert len(rep.trajectory) == 3 and len(rep.val_mae) == 2
        assert rep.trajectory[0]["overall"].mae == mae(holdout_truth(ds)[1], initialize(ds)[ds.holdout])
        assert rep.config["iter_num"] == 2

    def test_per_sensor_breakdown(self):
        ds = held(np.ones((10, 2)) * [1, 2], [[2, 0], [5, 1], [7, 1]])
        rep = score_series([np.zeros((10, 2))], ds)
        assert rep.per_sensor["s0"]["overall"].mae == 1 and rep.per_sensor["s1"]["overall"].mae == 2

    @given(hnp.arrays(np.int8, st.tuples(st.integers(2, 40), st.integers(1, 4)),
                      elements=st.sampled_from([0, 0, 0, 1, 2])))
    def test_partition(self, states):
        vals = np.arange(states.size, dtype=float).reshape(states.shape) + 1
        vals[states == 1] = np.nan
        if not (states == 2).any():
            states[0, 0] = 2
            vals[0, 0] = 1.0
        ds = held(vals, np.argwhere(states == 2))
        blocks = classify_blocks(ds)
        pos, _ = holdout_truth(ds)
        general = scenario_split(ds, pos, blocks)
        resident = blocks.block_mask(ds.shape)[pos[:, 0], pos[:, 1]]
        assert (general ^ resident).all()  # disjoint and covering
        rep = score_series([np.zeros(ds.shape)], ds, blocks)
        assert rep.general.count + rep.counts["block_resident"] == rep.overall.count

    def test_report_files(self, tmp_path):
        ds = held(np.arange(40.0).reshape(20, 2) + 1, [[3, 0], [9, 1]])
        rep = score_series([np.zeros((20, 2))], ds, initializer="x")
        write_report(rep, tmp_path / "r.json", tmp_path / "r.csv")
        d = json.loads((tmp_path / "r.json").read_text())
        assert d["overall"]["count"] == 2 and d["initializer"] == "x"
        rows = list(csv.reader(io.StringIO((tmp_path / "r.csv").read_text())))
        assert rows[0] == CSV_COLUMNS


@pytest.fixture(scope="module")
def sine():
    t = np.arange(300)
    return make_dataset(np.stack([10 + 3 * np.sin(2 * np.pi * t / 24 + p) for p in (0, .2)], axis=1))


class TestSweep:
    def test_single_rate_matches_standard_run(self, sine):
        (rate, rep), = sweep_missing_rates(sine, [0.2], FAST)
        miss_seed, train_seed = rate_seeds(FAST.seed, 0.2)
        sim = simulate_missing(sine, MissingSpec(rate=0.2, seed=miss_seed))
        direct = score(run_cascade(sim, TrainConfig(**{**FAST.to_dict(), "seed": train_seed})), sim)
        assert rate == 0.2 and rep.overall == direct.overall

    def test_ordered_and_reproducible(self, sine):
        a = sweep_missing_rates(sine, [0.3, 0.1], FAST)
        b = sweep_missing_rates(sine, [0.1, 0.3], FAST)
        assert [r for r, _ in a] == [0.1, 0.3]
        assert sweep_json(a) == sweep_json(b)
        rows = sweep_rows(a)
        rates = [r[3] for r in rows]
        assert rates == sorted(rates, key=float)

    def test_bad_rate(self, sine):
        with pytest.raises(MetricError):
            sweep_missing_rates(sine, [1.0], FAST)

    def test_rate_seeds_differ(self):
        assert rate_seeds(0, 0.1) != rate_seeds(0, 0.2)
        assert rate_seeds(0, 0.1) == rate_seeds(0, 0.1)


class TestCompare:
    def test_rows_and_oracle_initializer(self, sine):
        ds = simulate_missing(sine, MissingSpec(rate=0.2, seed=1))
        truth = np.array(sine.values)
        rows = compare_initializers(ds, [TemporalNearest(), WindowMean(2), lambda d: truth], FAST)
        assert [r["kind"] for r in rows] == ["temporal_nearest", "window_mean:2", "<lambda>"]
        assert rows[2]["init_mae"] == 0.0

    def test_needs_a_kind(self, sine):
        with pytest.raises(MetricError):
            compare_initializers(sine, [], FAST)
