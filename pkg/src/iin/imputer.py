"""Iterative imputing: train on valid anchors, re-impute gaps, repeat.

Each round fits the network on anchors from the current dense series and
then rewrites every non-observed entry from its context, all positions at
once. Observed entries never change.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import SensorDataset, padded_timestamps, valid_anchor_mask
from .errors import ConfigError, NumericError, TrainingError
from .ingest import choose_validation, months_of
from .initializers import Initializer, TemporalNearest, initialize, kind_label
from .nn.model import ModelParams, dropout_masks, init_params, loss_and_grads, predict
from .nn.optim import NadamState, nadam_update

log = logging.getLogger(__name__)

NORMALIZATIONS = ("global_zscore", "per_sensor_zscore", "none")
MODES = ("mixed", "separate")


@dataclass
class TrainConfig:
    w: int = 12
    hidden: int = 50
    num_layers: int = 2
    dropout: float = 0.3
    iter_num: int = 3
    batch_size: int = 128
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    cell_kind: str = "standard"
    mode: str = "mixed"
    include_center_input: bool = False
    normalization: str = "global_zscore"
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    validation_fraction: float = 0.1
    warm_start: bool = True
    r_on: float = 0.05
    alpha: float = 0.001
    test_months: tuple = ()

    def __post_init__(self):
        self.test_months = tuple(self.test_months)
        if self.w < 1:
            raise ConfigError("w must be >= 1")
        if self.iter_num < 1:
            raise ConfigError("iter_num must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.hidden < 1 or self.num_layers < 1 or self.batch_size < 1:
            raise ConfigError("hidden, num_layers and batch_size must be >= 1")
        if self.max_epochs < 1 or self.patience < 0:
            raise ConfigError("max_epochs must be >= 1 and patience >= 0")
        if self.cell_kind not in ("standard", "phased"):
            raise ConfigError(f"unknown cell_kind {self.cell_kind!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["test_months"] = list(self.test_months)
        return d


@dataclass
class Normalizer:
    mean: np.ndarray  # per column
    std: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray, observed: np.ndarray, kind: str) -> "Normalizer":
        n_s = values.shape[1]
        if kind == "none":
            return cls(np.zeros(n_s), np.ones(n_s))
        if kind == "global_zscore":
            v = values[observed]
            mean = np.full(n_s, v.mean())
            std = np.full(n_s, v.std())
        else:
            mean = np.array([values[observed[:, s], s].mean() for s in range(n_s)])
            std = np.array([values[observed[:, s], s].std() for s in range(n_s)])
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def apply(self, dense):
        return (dense - self.mean) / self.std

    def invert(self, dense):
        return dense * self.std + self.mean


@dataclass
class Pairs:
    """Anchor contexts and labels (normalized units)."""

    positions: np.ndarray  # (N, 2) rows of (t, sensor), sensor in group coordinates
    left: np.ndarray
    right: np.ndarray
    targets: np.ndarray
    scale: np.ndarray  # per-pair std, for reporting errors in data units
    left_t: np.ndarray = None
    right_t: np.ndarray = None

    def __len__(self):
        return len(self.positions)

    def take(self, idx) -> "Pairs":
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return Pairs(*(pick(getattr(self, f.name)) for f in fields(self)))


def contexts(dense_norm, timestamps, positions, config: TrainConfig):
    """Left/right context sequences (and times) for each ``(t, s)`` position.

    Slots beyond the series ends repeat the edge value.
    """
    w = config.w
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 2)
    padded = np.pad(dense_norm, ((w, w), (0, 0)), mode="edge")
    win = sliding_window_view(padded, 2 * w + 1, axis=0)  # (n_t, n_s, 2w+1)
    rows = win[positions[:, 0], positions[:, 1]]
    c = 1 if config.include_center_input else 0
    left = rows[:, : w + c]
    right = rows[:, w + 1 - c :]
    left_t = right_t = None
    if config.cell_kind == "phased":
        pt = padded_timestamps(timestamps, w) - timestamps[0]
        twin = sliding_window_view(pt, 2 * w + 1)[positions[:, 0]]
        left_t, right_t = twin[:, : w + c], twin[:, w + 1 - c :]
    return left, right, left_t, right_t


def label_positions(observed: np.ndarray, config: TrainConfig, timestamps_months=None):
    """Observed centers with valid anchors, optionally excluding test months."""
    ok = valid_anchor_mask(observed, config.w) & observed
    if config.test_months and timestamps_months is not None:
        ok &= ~np.isin(timestamps_months, config.test_months)[:, None]
    return np.argwhere(ok)


def build_training_pairs(T_i, observed, timestamps, config: TrainConfig,
                         normalizer: Normalizer, positions=None) -> Pairs:
    """Feature/label pairs from the dense series ``T_i``.

    Labels are Observed values only; contexts use the current imputations.
    """
    if positions is None:
        positions = label_positions(observed, config)
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 2)
    if len(positions) == 0:
        raise TrainingError(
            "no valid training anchors; use a smaller half-window w or a lower missing rate"
        )
    norm = normalizer.apply(T_i)
    left, right, lt, rt = contexts(norm, timestamps, positions, config)
    return Pairs(
        positions=positions,
        left=left,
        right=right,
        targets=norm[positions[:, 0], positions[:, 1]],
        scale=normalizer.std[positions[:, 1]],
        left_t=lt,
        right_t=rt,
    )


def new_model(config: TrainConfig, seed: int, time_span: float = None) -> ModelParams:
    return init_params(
        hidden=config.hidden,
        num_layers=config.num_layers,
        cell_kind=config.cell_kind,
        dropout=config.dropout,
        seed=seed,
        time_span=time_span if time_span else 2.0 * config.w,
        r_on=config.r_on,
        alpha=config.alpha,
    )


def new_optimizer(config: TrainConfig) -> NadamState:
    return NadamState(config.lr, config.beta1, config.beta2, config.epsilon)


def train_epoch(model: ModelParams, pairs: Pairs, state: NadamState, rng, config: TrainConfig):
    """One shuffled pass of minibatch Nadam; returns ``(model, state, train_mae)``.

    ``train_mae`` is the epoch-mean absolute error in data units, measured
    on each batch before its update.
    """
    order = rng.permutation(len(pairs))
    total = 0.0
    for a in range(0, len(order), config.batch_size):
        batch = pairs.take(order[a : a + config.batch_size])
        mask = dropout_masks(model, len(batch), rng) if config.dropout > 0 else None
        loss, grads, pred = loss_and_grads(
            model, batch.left, batch.right, batch.targets, mask,
            batch.left_t, batch.right_t, return_pred=True,
        )
        if not math.isfinite(loss):
            raise NumericError(f"non-finite training loss at batch offset {a}")
        total += float(np.sum(np.abs(pred - batch.targets) * batch.scale))
        nadam_update(state, model.tensors, grads)
        model.clip_gate_params()
    return model, state, total / len(pairs)


def validation_mae(model: ModelParams, pairs: Pairs) -> float:
    pred = predict(model, pairs.left, pairs.right, pairs.left_t, pairs.right_t)
    return float(np.mean(np.abs(pred - pairs.targets) * pairs.scale))


@dataclass
class FitResult:
    model: ModelParams
    best_val_mae: float
    best_epoch: int  # 0 = the starting weights
    history: list = field(default_factory=list)  # (epoch, train_mae, val_mae)


def fit(model: ModelParams, train: Pairs, val: Pairs, config: TrainConfig, rng) -> FitResult:
    """Train with early stopping; keep the weights with the best validation MAE.

    The starting weights count as epoch 0, so a warm-started round never
    returns a model worse on validation than the one it started from.
    Training stops once ``patience`` consecutive epochs fail to improve
    (at least one).
    """
    state = new_optimizer(config)
    best = model.copy()
    best_mae = validation_mae(model, val) if len(val) else math.inf
    best_epoch, wait = 0, 0
    history = [(0, math.nan, best_mae)]
    for epoch in range(1, config.max_epochs + 1):
        model, state, train_mae = train_epoch(model, train, state, rng, config)
        val_mae = validation_mae(model, val) if len(val) else train_mae
        history.append((epoch, train_mae, val_mae))
        log.debug("epoch %d train %.5f val %.5f", epoch, train_mae, val_mae)
        if val_mae < best_mae:
            best, best_mae, best_epoch, wait = model.copy(), val_mae, epoch, 0
        else:
            wait += 1
            if wait >= max(config.patience, 1):
                break
    return FitResult(best, best_mae, best_epoch, history)


def predict_missing(model: ModelParams, T_i, observed, timestamps, config: TrainConfig,
                    normalizer: Normalizer, positions=None) -> np.ndarray:
    """``T_{i+1}``: every indexed position re-estimated from ``T_i`` simultaneously."""
    if positions is None:
        positions = np.argwhere(~observed)
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 2)
    out = np.array(T_i, dtype=np.float64)
    if len(positions) == 0:
        return out
    left, right, lt, rt = contexts(normalizer.apply(T_i), timestamps, positions, config)
    est = predict(model, left, right, lt, rt)
    cols = positions[:, 1]
    out[positions[:, 0], cols] = est * normalizer.std[cols] + normalizer.mean[cols]
    if not np.isfinite(out).all():
        raise NumericError("prediction produced non-finite values")
    return out


@dataclass
class ImputationRun:
    config: TrainConfig
    initializer: str
    series: list  # T_0 .. T_iter_num, raw units
    val_mae: list  # per round, averaged over groups
    val_mae_by_group: list  # per round: {group: val MAE}
    models: list  # per round: {group: ModelParams}
    histories: list  # per round: {group: [(epoch, train, val), ...]}
    missing_index: np.ndarray
    groups: list  # sensor-index lists, one per model

    @property
    def final(self) -> np.ndarray:
        return self.series[-1]


def _group_label(group, ds):
    return "all" if len(group) == ds.n_sensors and len(group) > 1 else str(ds.sensor_ids[group[0]])


def run_cascade(ds: SensorDataset, config: TrainConfig,
                initializer: Initializer = TemporalNearest()) -> ImputationRun:
    """Initialize, then ``iter_num`` rounds of fit + synchronous re-imputation."""
    T = initialize(ds, initializer)
    observed = ds.observed
    missing = np.argwhere(~observed)
    months = months_of(ds) if (config.test_months and ds.has_calendar) else None
    groups = [list(range(ds.n_sensors))] if config.mode == "mixed" else [[s] for s in range(ds.n_sensors)]
    span = float(2 * config.w * np.median(np.diff(ds.timestamps))) if ds.n_timestamps > 1 else None

    ctx = []
    for gi, group in enumerate(groups):
        seeds = np.random.SeedSequence([config.seed, gi]).generate_state(3)
        obs_g = observed[:, group]
        vals_g = np.where(obs_g, ds.values[:, group], 0.0)
        labels = label_positions(obs_g, config, months)
        if len(labels) == 0:
            raise TrainingError(
                f"no valid training anchors for sensors {group}; "
                "use a smaller half-window w or a lower missing rate"
            )
        val_pos = choose_validation(labels, config.validation_fraction, np.random.default_rng(seeds[1]))
        is_val = np.zeros(obs_g.shape, dtype=bool)
        is_val[val_pos[:, 0], val_pos[:, 1]] = True
        train_pos = labels[~is_val[labels[:, 0], labels[:, 1]]]
        if len(train_pos) == 0:
            raise TrainingError(f"no training anchors left after validation split for {group}")
        ctx.append(dict(
            group=group,
            label=_group_label(group, ds),
            norm=Normalizer.fit(vals_g, obs_g, config.normalization),
            train_pos=train_pos,
            val_pos=val_pos,
            init_seed=int(seeds[0]),
            rng=np.random.default_rng(seeds[2]),
            model=None,
        ))

    series = [T]
    val_rounds, val_groups, model_rounds, hist_rounds = [], [], [], []
    for rnd in range(config.iter_num):
        T_next = T.copy()
        maes, models, hists = {}, {}, {}
        for g in ctx:
            cols = g["group"]
            T_g = T[:, cols]
            obs_g = observed[:, cols]
            if g["model"] is None or not config.warm_start:
                g["model"] = new_model(config, g["init_seed"], span)
            train = build_training_pairs(T_g, obs_g, ds.timestamps, config, g["norm"], g["train_pos"])
            val = build_training_pairs(T_g, obs_g, ds.timestamps, config, g["norm"], g["val_pos"])
            res = fit(g["model"], train, val, config, g["rng"])
            g["model"] = res.model
            T_next[:, cols] = predict_missing(res.model, T_g, obs_g, ds.timestamps, config, g["norm"])
            maes[g["label"]] = res.best_val_mae
            models[g["label"]] = res.model.copy()
            hists[g["label"]] = res.history
            log.info("round %d group %s: best val MAE %.5f at epoch %d",
                     rnd + 1, g["label"], res.best_val_mae, res.best_epoch)
        T = T_next
        series.append(T)
        val_rounds.append(float(np.mean(list(maes.values()))))
        val_groups.append(maes)
        model_rounds.append(models)
        hist_rounds.append(hists)
    return ImputationRun(
        config=config,
        initializer=kind_label(initializer),
        series=series,
        val_mae=val_rounds,
        val_mae_by_group=val_groups,
        models=model_rounds,
        histories=hist_rounds,
        missing_index=missing,
        groups=groups,
    )
