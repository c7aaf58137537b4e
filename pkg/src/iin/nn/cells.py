"""Peephole LSTM and time-gated (phased) LSTM cells.

Gate blocks inside the concatenated kernels are ordered ``i, f, c, o``.
Peephole vectors ``w_c`` are stacked as rows ``i, f, o``. Every function
broadcasts over leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GATES = ("i", "f", "c", "o")


def sigmoid(x):
    # tanh form: no overflow warnings, and faster than exp-based variants
    return 0.5 + 0.5 * np.tanh(0.5 * x)


@dataclass
class LstmCellParams:
    W_x: np.ndarray  # (input_dim, 4H)
    W_h: np.ndarray  # (H, 4H)
    w_c: np.ndarray  # (3, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.W_h.shape[0]

    def gate(self, kernel: str, gate: str) -> np.ndarray:
        """View of one gate's block, e.g. ``gate("W_x", "f")``."""
        H = self.hidden
        k = GATES.index(gate)
        return getattr(self, kernel)[..., k * H : (k + 1) * H]


@dataclass
class PhasedCellParams(LstmCellParams):
    tau: np.ndarray = None  # (H,) period
    r_on: np.ndarray = None  # (H,) open ratio
    s: np.ndarray = None  # (H,) phase shift
    alpha: float = 0.0  # closed-phase leak


def _pre(p, x, h_prev):
    return x @ p.W_x + h_prev @ p.W_h + p.b


def _candidate(p, z, c_prev):
    H = p.hidden
    zi, zf, zc, zo = (z[..., k * H : (k + 1) * H] for k in range(4))
    i = sigmoid(zi + p.w_c[0] * c_prev)
    f = sigmoid(zf + p.w_c[1] * c_prev)
    c = f * c_prev + i * np.tanh(zc)
    o = sigmoid(zo + p.w_c[2] * c)
    return o * np.tanh(c), c


def lstm_step(p: LstmCellParams, x_t, h_prev, c_prev):
    """One step of the peephole LSTM; returns ``(h_t, c_t)``."""
    return _candidate(p, _pre(p, x_t, h_prev), c_prev)


def phase(t, tau, s):
    return np.mod(t - s, tau) / tau


def time_gate(t, tau, r_on, s, alpha):
    """Openness ``k`` of the periodic time gate at time ``t``."""
    phi = phase(t, tau, s)
    rising = 2.0 * phi / r_on
    falling = 2.0 - 2.0 * phi / r_on
    return np.where(phi < 0.5 * r_on, rising, np.where(phi < r_on, falling, alpha * phi))


def phased_step(p: PhasedCellParams, x_t, t, h_prev, c_prev, k=None):
    """One phased step; ``k`` overrides the computed gate when given."""
    h_cand, c_cand = _candidate(p, _pre(p, x_t, h_prev), c_prev)
    if k is None:
        k = time_gate(t, p.tau, p.r_on, p.s, p.alpha)
    c = k * c_cand + (1.0 - k) * c_prev
    h = k * h_cand + (1.0 - k) * h_prev
    return h, c


# -- batched sequences --------------------------------------------------------
#
# The sequence runner is time-major and carries a "direction" axis D so the
# forward and backward stacks of one layer advance in the same numpy calls.
# Stacked weights: W_x (D, in, 4H), W_h (D, H, 4H), w_c (D, 3, H), b (D, 4H),
# gate parameters (D, H). Inputs X (T, D, B, in), times (T, D, B).


class SeqCache:
    __slots__ = ("xh", "times", "c_prev", "gif", "g", "o", "cc", "tc", "hc", "k", "phi")


def _sigmoid_into(x, out=None):
    np.multiply(x, 0.5, out=x)
    out = np.tanh(x, out=out)
    out *= 0.5
    out += 0.5
    return out


def run_layer(W, X, times=None, alpha=0.0, cache=False):
    """Run one stacked layer over full sequences; returns ``(H_seq, cache)``."""
    W_h, w_c, b = W["W_h"], W["w_c"], W["b"]
    T, D, B, n = X.shape
    H = W_h.shape[1]
    W_xh = np.concatenate([W["W_x"], W_h], axis=1)
    b = b[:, None, :]
    phased = "tau" in W
    p_if = np.concatenate([w_c[:, 0], w_c[:, 1]], axis=-1)[:, None, :]
    po = w_c[:, 2][:, None, :]
    if phased:
        tau, r_on, s = (W[name][:, None, :] for name in ("tau", "r_on", "s"))
        tt = times[..., None]
        phi = phase(tt, tau, s)
        K = time_gate(tt, tau, r_on, s, alpha)
    h = np.zeros((D, B, H))
    c = np.zeros((D, B, H))
    H_seq = np.empty((T, D, B, H))
    xh = np.empty((T, D, B, n + H))
    xh[:, :, :, :n] = X
    st = SeqCache()
    if cache:
        st.gif = np.empty((T, D, B, 2 * H))
        for name in ("c_prev", "g", "o", "cc", "tc", "hc"):
            setattr(st, name, np.empty((T, D, B, H)))
    for t in range(T):
        xh[t, :, :, n:] = h
        z = np.matmul(xh[t], W_xh)
        z += b
        if cache:
            st.c_prev[t] = c
            gif, g, o, cc, tc, hc = (st.gif[t], st.g[t], st.o[t], st.cc[t], st.tc[t], st.hc[t])
        else:
            gif, g, o, cc, tc, hc = (None,) * 6
        gif = _sigmoid_into(z[..., : 2 * H] + p_if * np.concatenate([c, c], axis=-1), gif)
        i, f = gif[..., :H], gif[..., H:]
        g = np.tanh(z[..., 2 * H : 3 * H], out=g)
        cc = np.multiply(f, c, out=cc)
        cc += i * g
        o = _sigmoid_into(z[..., 3 * H :] + po * cc, o)
        tc = np.tanh(cc, out=tc)
        hc = np.multiply(o, tc, out=hc)
        if phased:
            k = K[t]
            c = k * cc + (1.0 - k) * c
            h = k * hc + (1.0 - k) * h
        else:
            c, h = cc, hc
        H_seq[t] = h
    if not cache:
        return H_seq, None
    st.xh = xh
    st.times = times
    st.k = K if phased else None
    st.phi = phi if phased else None
    return H_seq, st


def layer_backward(W, st: SeqCache, dH_seq, alpha=0.0):
    """Backpropagate through time; returns ``(grads, dX)``.

    ``dH_seq`` is the loss gradient w.r.t. every emitted hidden state.
    """
    W_x, W_h, w_c = W["W_x"], W["W_h"], W["w_c"]
    T, D, B, H = dH_seq.shape
    n = W_x.shape[1]
    phased = st.k is not None
    pi, pf, po = (w_c[:, r][:, None, :] for r in range(3))
    W_xhT = np.swapaxes(np.concatenate([W_x, W_h], axis=1), 1, 2)
    dZ = np.empty((T, D, B, 4 * H))
    dX = np.empty((T, D, B, n))
    dw_c = np.zeros((D, 3, H))
    dK = np.empty((T, D, B, H)) if phased else None
    dh_next = np.zeros((D, B, H))
    dc_next = np.zeros((D, B, H))
    for t in range(T - 1, -1, -1):
        dh = dH_seq[t] + dh_next
        dc = dc_next
        c_prev = st.c_prev[t]
        i, f = st.gif[t, ..., :H], st.gif[t, ..., H:]
        g, o = st.g[t], st.o[t]
        cc, tc = st.cc[t], st.tc[t]
        if phased:
            k = st.k[t]
            dK[t] = dh * (st.hc[t] - st.xh[t, ..., n:]) + dc * (cc - c_prev)
            dh_extra = dh * (1.0 - k)
            dc_extra = dc * (1.0 - k)
            dh = dh * k
            dc = dc * k
        do = dh * tc
        dcc = dc + dh * o * (1.0 - tc * tc)
        do_pre = do * o * (1.0 - o)
        dcc = dcc + do_pre * po
        dz = dZ[t]
        dz[..., :H] = dcc * g * i * (1.0 - i)
        dz[..., H : 2 * H] = dcc * c_prev * f * (1.0 - f)
        dz[..., 2 * H : 3 * H] = dcc * i * (1.0 - g * g)
        dz[..., 3 * H :] = do_pre
        di_pre, df_pre = dz[..., :H], dz[..., H : 2 * H]
        dw_c[:, 0] += (di_pre * c_prev).sum(axis=1)
        dw_c[:, 1] += (df_pre * c_prev).sum(axis=1)
        dw_c[:, 2] += (do_pre * cc).sum(axis=1)
        dc_next = dcc * f + di_pre * pi + df_pre * pf
        dxh = np.matmul(dz, W_xhT)
        dX[t] = dxh[..., :n]
        dh_next = dxh[..., n:]
        if phased:
            dc_next = dc_next + dc_extra
            dh_next = dh_next + dh_extra
    xh = st.xh.transpose(1, 3, 0, 2).reshape(D, n + H, T * B)
    dZf = dZ.transpose(1, 0, 2, 3).reshape(D, T * B, 4 * H)
    dW = np.matmul(xh, dZf)
    grads = {
        "W_x": dW[:, :n],
        "W_h": dW[:, n:],
        "w_c": dw_c,
        "b": dZf.sum(axis=1),
    }
    if phased:
        grads.update(_gate_param_grads(W, st, dK, alpha))
    return grads, dX


def _gate_param_grads(W, st, dK, alpha):
    tau = W["tau"][:, None, :]
    r_on = W["r_on"][:, None, :]
    s = W["s"][:, None, :]
    phi = st.phi
    rising = phi < 0.5 * r_on
    falling = ~rising & (phi < r_on)
    dk_dphi = np.where(rising, 2.0 / r_on, np.where(falling, -2.0 / r_on, alpha))
    dk_dr = np.where(rising, -2.0 * phi / r_on**2, np.where(falling, 2.0 * phi / r_on**2, 0.0))
    t = st.times[..., None]
    g_phi = dK * dk_dphi
    return {
        "tau": (g_phi * (-(t - s) / tau**2)).sum(axis=(0, 2)),
        "s": (g_phi * (-1.0 / tau)).sum(axis=(0, 2)),
        "r_on": (dK * dk_dr).sum(axis=(0, 2)),
    }
