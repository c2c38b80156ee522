"""Small deterministic numeric kernel shared by every layer.

Matrices are plain float64 numpy arrays in row-major (C) order. Gradients are
written by hand per layer; ``grad_check`` is the harness that verifies them.
"""
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not agree."""


def as_matrix(values, rows=None, cols=None, name="matrix"):
    """Return ``values`` as a C-contiguous float64 2-d array, validating it."""
    m = np.ascontiguousarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-d, got shape {m.shape}")
    if (rows is not None and m.shape[0] != rows) or (cols is not None and m.shape[1] != cols):
        raise ShapeError(f"{name} has shape {m.shape}, expected ({rows}, {cols})")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def glorot_uniform(rng, rows, cols):
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def affine(W, x, b):
    """Return ``W @ x + b``.

    Works on a single vector ``x`` of length ``W.shape[1]`` or on a batch with
    the feature axis last.
    """
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2 or x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ShapeError(
            f"affine: W {W.shape} incompatible with x {x.shape} and b {b.shape}"
        )
    return x @ W.T + b


def sigmoid(x):
    with np.errstate(over="ignore"):  # exp overflow saturates to 0 correctly
        return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def softmax(v, axis=-1):
    """Softmax along ``axis`` with max subtraction."""
    v = np.asarray(v, dtype=np.float64)
    z = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return z / np.sum(z, axis=axis, keepdims=True)


def mse_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: pred {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ValueError("mse_loss: empty input")
    d = pred - target
    return float(np.mean(d * d))


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """Apply one bias-corrected Adam update to ``params`` in place.

    ``params`` and ``grads`` are dicts of arrays keyed identically. Returns
    ``(params, state)`` for convenience.
    """
    if params.keys() != grads.keys():
        raise ShapeError(
            f"adam_step: parameter keys {sorted(params)} != gradient keys {sorted(grads)}"
        )
    for k, p in params.items():
        if grads[k].shape != p.shape:
            raise ShapeError(f"adam_step: {k} has shape {p.shape}, gradient {grads[k].shape}")
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        elif state.m[k].shape != p.shape:
            raise ShapeError(f"adam_step: accumulator for {k} has shape {state.m[k].shape}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for k, p in params.items():
        g = grads[k]
        m = state.m[k]
        v = state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        # zero gradient leaves m at zero, so the update is exactly zero
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def grad_check(loss_fn, params, analytic_grads, h=1e-5):
    """Compare analytic gradients against central differences.

    ``loss_fn()`` must read the arrays in ``params`` (a dict of arrays), which
    are perturbed in place and restored. Returns the maximum over all entries
    of ``|a - n| / max(1, |a| + |n|)``.
    """
    worst = 0.0
    for k, p in params.items():
        g = np.asarray(analytic_grads[k], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"grad_check: {k} has shape {p.shape}, gradient {g.shape}")
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = loss_fn()
            flat[i] = old - h
            fm = loss_fn()
            flat[i] = old
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"grad_check: non-finite loss at {k}[{i}]")
            num = (fp - fm) / (2.0 * h)
            err = abs(gflat[i] - num) / max(1.0, abs(gflat[i]) + abs(num))
            worst = max(worst, err)
    return worst
