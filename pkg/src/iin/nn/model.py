"""Bidirectional stacked LSTM context encoder with an affine output head.

The forward stack reads the left context oldest-first, the backward stack
reads the right context newest-first; their final top-layer states are
concatenated, passed through inverted dropout and mapped to a scalar.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError
from .cells import LstmCellParams, PhasedCellParams, layer_backward, run_layer

DIRECTIONS = ("fwd", "bwd")
CELL_TENSORS = ("W_x", "W_h", "w_c", "b")
GATE_TENSORS = ("tau", "r_on", "s")
CELL_KINDS = ("standard", "phased")


@dataclass
class ModelParams:
    cell_kind: str = "standard"
    hidden: int = 50
    num_layers: int = 2
    input_dim: int = 1
    dropout: float = 0.3
    alpha: float = 0.001  # phased leak while training; 0 at inference
    tensors: dict = field(default_factory=dict)

    @property
    def shape_spec(self) -> dict:
        return {
            "hidden": self.hidden,
            "num_layers": self.num_layers,
            "input_dim": self.input_dim,
        }

    @property
    def hyperparameters(self) -> dict:
        return {"dropout": self.dropout, "alpha": self.alpha}

    def names(self) -> list:
        return list(self.tensors)

    def cell(self, direction: str, layer: int, alpha=None):
        """Single-cell parameter view for ``direction`` (fwd/bwd) and ``layer``."""
        pre = f"{direction}.{layer}."
        kw = {n: self.tensors[pre + n] for n in CELL_TENSORS}
        if self.cell_kind == "phased":
            kw.update({n: self.tensors[pre + n] for n in GATE_TENSORS})
            return PhasedCellParams(**kw, alpha=self.alpha if alpha is None else alpha)
        return LstmCellParams(**kw)

    def stacked(self, layer: int) -> dict:
        names = CELL_TENSORS + (GATE_TENSORS if self.cell_kind == "phased" else ())
        return {n: np.stack([self.tensors[f"{d}.{layer}.{n}"] for d in DIRECTIONS]) for n in names}

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.cell_kind, self.hidden, self.num_layers, self.input_dim,
            self.dropout, self.alpha, {k: v.copy() for k, v in self.tensors.items()},
        )

    def clip_gate_params(self):
        if self.cell_kind != "phased":
            return
        for key, arr in self.tensors.items():
            if key.endswith(".tau"):
                np.maximum(arr, 1e-3, out=arr)
            elif key.endswith(".r_on"):
                np.clip(arr, 1e-3, 1.0, out=arr)


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def orthogonal(n: int, rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_params(
    hidden=50, num_layers=2, cell_kind="standard", input_dim=1, dropout=0.3,
    seed=0, time_span=24.0, r_on=0.05, alpha=0.001,
) -> ModelParams:
    """Glorot-uniform kernels, orthogonal recurrent blocks, zero biases and peepholes.

    Each gate's kernel and recurrent block is initialized separately. Phased
    periods are log-uniform over ``[1, time_span]`` with shifts uniform
    within one period.
    """
    if cell_kind not in CELL_KINDS:
        raise ValueError(f"cell_kind must be one of {CELL_KINDS}")
    rng = np.random.default_rng(seed)
    H = hidden
    tensors = {}
    for d in DIRECTIONS:
        for layer in range(num_layers):
            fan_in = input_dim if layer == 0 else H
            lim = glorot_limit(fan_in, H)
            pre = f"{d}.{layer}."
            tensors[pre + "W_x"] = np.concatenate(
                [rng.uniform(-lim, lim, (fan_in, H)) for _ in range(4)], axis=1
            )
            tensors[pre + "W_h"] = np.concatenate([orthogonal(H, rng) for _ in range(4)], axis=1)
            tensors[pre + "w_c"] = np.zeros((3, H))
            tensors[pre + "b"] = np.zeros(4 * H)
            if cell_kind == "phased":
                hi = max(float(time_span), 1.0 + 1e-9)
                tau = np.exp(rng.uniform(0.0, np.log(hi), H))
                tensors[pre + "tau"] = tau
                tensors[pre + "r_on"] = np.full(H, r_on)
                tensors[pre + "s"] = rng.uniform(0.0, 1.0, H) * tau
    lim = glorot_limit(2 * H, 1)
    tensors["head.W"] = rng.uniform(-lim, lim, (2 * H, 1))
    tensors["head.b"] = np.zeros(1)
    return ModelParams(cell_kind, H, num_layers, input_dim, dropout, alpha, tensors)


# -- forward / backward -------------------------------------------------------


def _as_batch(seq):
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim == 1:
        seq = seq[None, :]
    return seq


def _inputs(left, right, left_t, right_t):
    """Stack left (oldest first) and reversed right (newest first) sequences."""
    left, right = _as_batch(left), _as_batch(right)
    X = np.stack([left, right[:, ::-1]]).transpose(2, 0, 1)[..., None]
    times = None
    if left_t is not None:
        times = np.stack([_as_batch(left_t), _as_batch(right_t)[:, ::-1]]).transpose(2, 0, 1)
    return np.ascontiguousarray(X), times


def _encode(model, X, times, alpha, cache):
    caches = []
    inp = X
    for layer in range(model.num_layers):
        W = model.stacked(layer)
        inp, st = run_layer(W, inp, times, alpha=alpha, cache=cache)
        caches.append((W, st))
    return inp, caches


def encode_context(model: ModelParams, left, right, left_t=None, right_t=None, training=False):
    """Final top-layer states ``(h_f, h_b)`` for left/right context sequences.

    Accepts one anchor (1-D sequences) or a batch (``[B, T]``).
    """
    single = np.asarray(left).ndim == 1
    X, times = _inputs(left, right, left_t, right_t)
    if model.cell_kind == "phased" and times is None:
        raise ValueError("phased cells need context timestamps")
    alpha = model.alpha if training else 0.0
    H_seq, _ = _encode(model, X, times, alpha, cache=False)
    hf, hb = H_seq[-1, 0], H_seq[-1, 1]
    return (hf[0], hb[0]) if single else (hf, hb)


def output_head(model: ModelParams, h_f, h_b, dropout_mask=None, training=False):
    """Scalar estimate(s); inverted dropout on the concatenation in training."""
    z = np.concatenate([h_f, h_b], axis=-1)
    if training and dropout_mask is not None:
        z = z * dropout_mask / (1.0 - model.dropout)
    out = z @ model.tensors["head.W"][:, 0] + model.tensors["head.b"][0]
    return out


def dropout_masks(model: ModelParams, batch: int, rng) -> np.ndarray:
    return (rng.random((batch, 2 * model.hidden)) >= model.dropout).astype(np.float64)


def predict(model: ModelParams, left, right, left_t=None, right_t=None, batch_size=1024):
    """Eval-mode estimates for a batch of contexts (normalized units)."""
    left, right = _as_batch(left), _as_batch(right)
    out = np.empty(len(left))
    for a in range(0, len(left), batch_size):
        sl = slice(a, a + batch_size)
        lt = None if left_t is None else _as_batch(left_t)[sl]
        rt = None if right_t is None else _as_batch(right_t)[sl]
        hf, hb = encode_context(model, left[sl], right[sl], lt, rt)
        out[sl] = output_head(model, hf, hb)
    return out


def loss_and_grads(model: ModelParams, left, right, targets, dropout_mask=None,
                   left_t=None, right_t=None, return_pred=False):
    """Batch-mean absolute error and its gradient for every named tensor.

    ``dropout_mask=None`` runs without dropout (deterministic). The kink of
    ``|r|`` at ``r = 0`` gets subgradient 0.
    """
    X, times = _inputs(left, right, left_t, right_t)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    B = len(targets)
    H_seq, caches = _encode(model, X, times, model.alpha, cache=True)
    z = np.concatenate([H_seq[-1, 0], H_seq[-1, 1]], axis=-1)
    scale = None
    if dropout_mask is not None:
        scale = dropout_mask / (1.0 - model.dropout)
        z = z * scale
    W_out = model.tensors["head.W"]
    pred = z @ W_out[:, 0] + model.tensors["head.b"][0]
    resid = pred - targets
    loss = float(np.abs(resid).mean())
    dy = np.sign(resid) / B
    grads = {"head.W": (z.T @ dy)[:, None], "head.b": np.array([dy.sum()])}
    dz = dy[:, None] * W_out[:, 0][None, :]
    if scale is not None:
        dz = dz * scale
    H = model.hidden
    dH = np.zeros(H_seq.shape)
    dH[-1, 0] = dz[:, :H]
    dH[-1, 1] = dz[:, H:]
    for layer in range(model.num_layers - 1, -1, -1):
        W, st = caches[layer]
        g, dH = layer_backward(W, st, dH, alpha=model.alpha)
        for name, arr in g.items():
            for k, d in enumerate(("fwd", "bwd")):
                grads[f"{d}.{layer}.{name}"] = arr[k]
    grads = {name: grads[name] for name in model.tensors}
    for name, arr in grads.items():
        if not np.isfinite(arr).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    if return_pred:
        return loss, grads, pred
    return loss, grads


def backward(model: ModelParams, left, right, targets, dropout_mask=None,
             left_t=None, right_t=None) -> dict:
    """Gradients of batch-mean MAE keyed by parameter name."""
    return loss_and_grads(model, left, right, targets, dropout_mask, left_t, right_t)[1]
