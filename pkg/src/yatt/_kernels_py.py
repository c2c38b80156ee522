"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def _sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def gates_forward(z, c_prev):
    B, H = c_prev.shape
    if z.shape != (B, 4 * H):
        raise ValueError(
            f"gate block {z.shape[0]}x{z.shape[1]} does not match cell {B}x{H}"
        )
    gates = np.empty((B, 4 * H))
    gates[:, : 2 * H] = _sigmoid(z[:, : 2 * H])
    gates[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
    gates[:, 3 * H :] = _sigmoid(z[:, 3 * H :])
    e = gates[:, :H]
    r = gates[:, H : 2 * H]
    ct = gates[:, 2 * H : 3 * H]
    o = gates[:, 3 * H :]
    c = e * c_prev + r * ct
    tc = np.tanh(c)
    return gates, c, tc, o * tc


def gates_backward(gates, c_prev, tc, dh, dc_next):
    H = c_prev.shape[1]
    e = gates[:, :H]
    r = gates[:, H : 2 * H]
    ct = gates[:, 2 * H : 3 * H]
    o = gates[:, 3 * H :]
    dc = dc_next + dh * o * (1.0 - tc * tc)
    dz = np.empty_like(gates)
    dz[:, :H] = dc * c_prev * e * (1.0 - e)
    dz[:, H : 2 * H] = dc * ct * r * (1.0 - r)
    dz[:, 2 * H : 3 * H] = dc * r * (1.0 - ct * ct)
    dz[:, 3 * H :] = dh * tc * o * (1.0 - o)
    return dz, dc * e


def split_scan(xs, ys, min_leaf):
    n, f = xs.shape
    if n < 2 or n < 2 * min_leaf:
        return -1, 0.0, -1.0
    left = np.cumsum(ys, axis=0)
    total = left[-1]
    left = left[:-1]  # row i-1 holds the sum of the first i targets
    counts = np.arange(1, n, dtype=float)[:, None]
    right = total - left
    with np.errstate(divide="ignore", invalid="ignore"):
        score = left * left / counts + right * right / (n - counts)
    ok = xs[:-1] < xs[1:]
    ok[: max(min_leaf - 1, 0)] = False
    ok[n - max(min_leaf, 1) :] = False
    score = np.where(ok, score, -np.inf)
    flat = score.T.ravel()
    k = int(np.argmax(flat))
    if not np.isfinite(flat[k]) or flat[k] <= -1.0:
        return -1, 0.0, -1.0
    j, i = divmod(k, n - 1)
    i += 1
    thr = 0.5 * (xs[i - 1, j] + xs[i, j])
    if thr >= xs[i, j]:
        thr = xs[i - 1, j]
    return j, thr, float(flat[k])
