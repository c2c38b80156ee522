"""LSTM cell, single-layer unrolling with dropout, and the two-layer encoder.

Gate order inside every stacked weight block is fixed as (forget ``e``,
input ``r``, candidate ``C``, output ``o``); each gate reads the
concatenation ``[a<t-1>, x<t>]`` (previous hidden state first).
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .numcore import ShapeError, glorot_uniform

GATES = ("e", "r", "C", "o")


@dataclass
class LstmCellWeights:
    """Weights of one LSTM layer.

    ``W`` has shape ``(4*hidden, hidden + input_dim)`` and ``b`` shape
    ``(4*hidden,)``; the per-gate matrices ``W_e``, ``W_r``, ``W_C``, ``W_o``
    and biases are row-block views into them.
    """

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        rows, cols = self.W.shape
        if rows % 4 or cols <= rows // 4 or self.b.shape != (rows,):
            raise ShapeError(f"LSTM weights W {self.W.shape} / b {self.b.shape} are not a 4-gate block")

    @property
    def hidden(self):
        return self.W.shape[0] // 4

    @property
    def input_dim(self):
        return self.W.shape[1] - self.hidden

    def _rows(self, gate):
        h = self.hidden
        i = GATES.index(gate)
        return slice(i * h, (i + 1) * h)

    def gate_matrix(self, gate):
        return self.W[self._rows(gate)]

    def gate_bias(self, gate):
        return self.b[self._rows(gate)]

    W_e = property(lambda self: self.gate_matrix("e"))
    W_r = property(lambda self: self.gate_matrix("r"))
    W_C = property(lambda self: self.gate_matrix("C"))
    W_o = property(lambda self: self.gate_matrix("o"))
    b_e = property(lambda self: self.gate_bias("e"))
    b_r = property(lambda self: self.gate_bias("r"))
    b_C = property(lambda self: self.gate_bias("C"))
    b_o = property(lambda self: self.gate_bias("o"))

    @classmethod
    def zeros(cls, input_dim, hidden):
        return cls(np.zeros((4 * hidden, hidden + input_dim)), np.zeros(4 * hidden))

    @classmethod
    def init(cls, rng, input_dim, hidden, forget_bias=1.0):
        """Glorot-uniform gate matrices, zero biases except the forget gate."""
        W = np.vstack([glorot_uniform(rng, hidden, hidden + input_dim) for _ in GATES])
        b = np.zeros(4 * hidden)
        b[:hidden] = forget_bias
        return cls(W, b)

    def n_params(self):
        return self.W.size + self.b.size


@dataclass
class LstmStepState:
    a: np.ndarray  # hidden state
    C: np.ndarray  # cell state


@dataclass
class EncoderConfig:
    input_dim: int = 9
    h1: int = 128
    h2: int = 50
    dropout_rate: float = 0.2
    T_x: int = 30

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.h1 < 1 or self.h2 < 1 or self.T_x < 1 or self.input_dim < 1:
            raise ValueError(f"invalid encoder sizes: {self}")


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def cell_forward(w, prev, x):
    """One step of the cell for a vector (or a batch of row vectors) ``x``.

    Returns the new :class:`LstmStepState` and a cache dict holding the gate
    activations for the backward pass.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    a_prev = np.atleast_2d(np.asarray(prev.a, dtype=np.float64))
    c_prev = np.ascontiguousarray(np.atleast_2d(np.asarray(prev.C, dtype=np.float64)))
    H = w.hidden
    if X.shape[1] != w.input_dim or a_prev.shape[1] != H or c_prev.shape[1] != H:
        raise ShapeError(
            f"cell_forward: x {x.shape}, a {np.shape(prev.a)}, C {np.shape(prev.C)} "
            f"vs weights hidden={H} input={w.input_dim}"
        )
    concat = np.concatenate([a_prev, X], axis=1)
    z = np.ascontiguousarray(concat @ w.W.T + w.b)
    gates, c, tc, h = kernels.gates_forward(z, c_prev)
    cache = {"concat": concat, "gates": gates, "c_prev": c_prev, "tc": tc, "single": single}
    if single:
        return LstmStepState(h[0], c[0]), cache
    return LstmStepState(h, c), cache


def cell_backward(w, cache, da, dC=None):
    """Gradients of one cell step given upstream ``da`` (and optionally ``dC``).

    Returns ``(grads, d_a_prev, d_C_prev, d_x)`` where grads has keys W and b.
    """
    da = np.ascontiguousarray(np.atleast_2d(da), dtype=np.float64)
    gates = cache["gates"]
    if da.shape != cache["tc"].shape:
        raise ShapeError(f"cell_backward: upstream {da.shape} vs cache {cache['tc'].shape}")
    dC = np.zeros_like(da) if dC is None else np.ascontiguousarray(np.atleast_2d(dC), dtype=np.float64)
    dz, dc_prev = kernels.gates_backward(gates, cache["c_prev"], cache["tc"], da, dC)
    grads = {"W": dz.T @ cache["concat"], "b": dz.sum(axis=0)}
    dconcat = dz @ w.W
    H = w.hidden
    d_a, d_x = dconcat[:, :H], dconcat[:, H:]
    if cache["single"]:
        return grads, d_a[0], dc_prev[0], d_x[0]
    return grads, d_a, dc_prev, d_x


def layer_forward(w, sequence, dropout_rate=0.0, mode="infer", seed=None):
    """Unroll one layer over ``sequence`` from a zero initial state.

    ``sequence`` is ``(T, D)`` or batched ``(B, T, D)``. Returns the hidden
    states (same leading layout, last axis ``hidden``) after dropout, and the
    cache for :func:`layer_backward`. Train mode applies inverted dropout.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    single = seq.ndim == 2
    if single:
        seq = seq[None]
    if seq.ndim != 3 or seq.shape[1] == 0:
        raise ValueError(f"layer_forward: need a nonempty (B, T, D) sequence, got {np.shape(sequence)}")
    if seq.shape[2] != w.input_dim:
        raise ShapeError(f"layer_forward: input dim {seq.shape[2]} vs weights input {w.input_dim}")
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    B, T, D = seq.shape
    H = w.hidden
    xs = np.ascontiguousarray(seq.transpose(1, 0, 2))  # time-major
    Wh = w.W[:, :H]
    Wx = w.W[:, H:]
    zx = xs @ Wx.T + w.b
    gates = np.empty((T, B, 4 * H))
    cs = np.zeros((T + 1, B, H))
    hs = np.zeros((T + 1, B, H))
    tcs = np.empty((T, B, H))
    for t in range(T):
        z = zx[t] + hs[t] @ Wh.T
        gates[t], cs[t + 1], tcs[t], hs[t + 1] = kernels.gates_forward(z, cs[t])
    out = hs[1:]
    mask = None
    if mode == "train" and dropout_rate > 0.0:
        keep = 1.0 - dropout_rate
        mask = (_as_rng(seed).random(out.shape) < keep) / keep
        out = out * mask
    cache = {
        "xs": xs, "gates": gates, "cs": cs, "hs": hs, "tcs": tcs,
        "mask": mask, "single": single, "hidden": H, "input_dim": D,
    }
    out = out.transpose(1, 0, 2)
    return (out[0] if single else out), cache


def layer_backward(w, cache, d_out):
    """Backpropagation through time for one layer.

    ``d_out`` matches the layout returned by :func:`layer_forward`. Returns
    ``(grads, d_sequence)`` with grads keyed ``W`` and ``b``.
    """
    H = cache["hidden"]
    if w.hidden != H or w.input_dim != cache["input_dim"]:
        raise ShapeError("layer_backward: weights do not match the forward cache")
    d = np.asarray(d_out, dtype=np.float64)
    if cache["single"]:
        d = d[None]
    d = d.transpose(1, 0, 2)
    T, B = cache["gates"].shape[:2]
    if d.shape != (T, B, H):
        raise ShapeError(f"layer_backward: upstream {d.shape} vs cache {(T, B, H)}")
    if cache["mask"] is not None:
        d = d * cache["mask"]
    Wh = w.W[:, :H]
    Wx = w.W[:, H:]
    gates, cs, tcs = cache["gates"], cache["cs"], cache["tcs"]
    dz_all = np.empty_like(gates)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = np.ascontiguousarray(d[t] + dh_next)
        dz, dc_next = kernels.gates_backward(gates[t], cs[t], tcs[t], dh, dc_next)
        dz_all[t] = dz
        dh_next = dz @ Wh
    flat_dz = dz_all.reshape(T * B, 4 * H)
    dW = np.empty_like(w.W)
    dW[:, :H] = flat_dz.T @ cache["hs"][:-1].reshape(T * B, H)
    dW[:, H:] = flat_dz.T @ cache["xs"].reshape(T * B, -1)
    grads = {"W": dW, "b": flat_dz.sum(axis=0)}
    dx = (dz_all @ Wx).transpose(1, 0, 2)
    return grads, (dx[0] if cache["single"] else dx)


def stacked_encode(cfg, w1, w2, sequence, mode="infer", seed=None):
    """Two stacked layers; returns ``(annotations, final_annotation, cache)``.

    Annotations have shape ``(T_x, h2)`` (or ``(B, T_x, h2)`` batched); the
    final annotation is the last time-step.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.shape[-2:] != (cfg.T_x, cfg.input_dim):
        raise ShapeError(f"stacked_encode: sequence {seq.shape} vs config T_x={cfg.T_x}, input_dim={cfg.input_dim}")
    if (w1.input_dim, w1.hidden, w2.input_dim, w2.hidden) != (cfg.input_dim, cfg.h1, cfg.h1, cfg.h2):
        raise ShapeError(
            f"stacked_encode: layer shapes ({w1.input_dim}->{w1.hidden}, {w2.input_dim}->{w2.hidden}) "
            f"do not match config ({cfg.input_dim}->{cfg.h1}->{cfg.h2})"
        )
    rng = _as_rng(seed) if mode == "train" else None
    h1, c1 = layer_forward(w1, seq, cfg.dropout_rate, mode, rng)
    h2, c2 = layer_forward(w2, h1, cfg.dropout_rate, mode, rng)
    return h2, h2[..., -1, :], {"l1": c1, "l2": c2}


def bptt_backward(w1, w2, cache, d_annotations):
    """Gradients of both layers from upstream gradients on the annotations.

    Returns ``(grads1, grads2, d_sequence)``.
    """
    if set(cache) != {"l1", "l2"}:
        raise ShapeError("bptt_backward: cache is not from stacked_encode")
    g2, d_h1 = layer_backward(w2, cache["l2"], d_annotations)
    g1, d_x = layer_backward(w1, cache["l1"], d_h1)
    return g1, g2, d_x
