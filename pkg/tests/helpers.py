"""Oracles shared by the unit and acceptance tests."""
from fractions import Fraction

import numpy as np

from yatt import attention, lstm, model
from yatt.numcore import grad_check


def cell_gradient_error(seed=0, D=3, H=4, B=2):
    r = np.random.default_rng(seed)
    w = lstm.LstmCellWeights.init(r, D, H)
    w.b[:] = r.normal(size=w.b.shape)
    p = {"W": w.W, "b": w.b, "x": r.normal(size=(B, D)), "a": r.normal(size=(B, H)), "C": r.normal(size=(B, H))}
    Ra, Rc = r.normal(size=(B, H)), r.normal(size=(B, H))

    def loss():
        st, _ = lstm.cell_forward(w, lstm.LstmStepState(p["a"], p["C"]), p["x"])
        return float(np.sum(Ra * st.a) + np.sum(Rc * st.C))

    st, cache = lstm.cell_forward(w, lstm.LstmStepState(p["a"], p["C"]), p["x"])
    g, da, dC, dx = lstm.cell_backward(w, cache, Ra, Rc)
    return grad_check(loss, p, {"W": g["W"], "b": g["b"], "x": dx, "a": da, "C": dC})


def encoder_gradient_error(seed=0, T=5, D=3, h1=4, h2=3, B=2, dropout=0.25):
    r = np.random.default_rng(seed)
    cfg = lstm.EncoderConfig(input_dim=D, h1=h1, h2=h2, dropout_rate=dropout, T_x=T)
    w1 = lstm.LstmCellWeights.init(r, D, h1)
    w2 = lstm.LstmCellWeights.init(r, h1, h2)
    p = {"W1": w1.W, "b1": w1.b, "W2": w2.W, "b2": w2.b, "seq": r.normal(size=(B, T, D))}
    R = r.normal(size=(B, T, h2))

    def loss():
        ann, _, _ = lstm.stacked_encode(cfg, w1, w2, p["seq"], "train", seed=7)
        return float(np.sum(R * ann))

    _, _, cache = lstm.stacked_encode(cfg, w1, w2, p["seq"], "train", seed=7)
    g1, g2, dx = lstm.bptt_backward(w1, w2, cache, R)
    return grad_check(loss, p, {"W1": g1["W"], "b1": g1["b"], "W2": g2["W"], "b2": g2["b"], "seq": dx})


def attention_gradient_error(seed=0, T=6, H=4, B=3):
    r = np.random.default_rng(seed)
    prm = attention.AttentionParams(r.normal(size=(1, H)), r.normal(size=1))
    p = {"d": prm.d, "bias": prm.bias, "ann": r.normal(size=(B, T, H))}
    R = r.normal(size=(B, H))

    def loss():
        ctx, _, _ = attention.attend(prm, p["ann"])
        return float(np.sum(R * ctx))

    _, _, cache = attention.attend(prm, p["ann"])
    g, d_ann = attention.attend_backward(prm, cache, R)
    return grad_check(loss, p, {"d": g["d"], "bias": g["bias"], "ann": d_ann})


def model_gradient_error(kind, seed=0, T=4, B=3, static_mode="both"):
    r = np.random.default_rng(seed)
    cfg = model.ModelConfig(kind=kind, static_mode=static_mode,
                            encoder=lstm.EncoderConfig(input_dim=9, h1=3, h2=2, dropout_rate=0.2, T_x=T))
    if static_mode == "after_encoder":
        cfg.encoder.input_dim = 7
    cfg.validate()
    w = model.build(cfg, seed)
    params = w.tensors()
    seq = r.normal(size=(B, T, cfg.encoder.input_dim))
    after = r.normal(size=(B, cfg.n_after))
    target = r.normal(size=B)

    def loss():
        pred, _, _ = model.forward(w, cfg, seq, after, "train", seed=11)
        return float(np.mean((pred - target) ** 2))

    _, grads, _ = model.loss_and_grads(w, cfg, seq, after, target, "train", seed=11)
    return grad_check(loss, params, grads)


def brute_downsample(values, window):
    """Independent aggregator: plain loops over whole windows of the first 210 days."""
    names = ("ADNI", "AP", "ARH", "MDNI", "MaxSur", "MinSur", "AvgSur")
    out = []
    for start in range(0, 210 - window + 1, window):
        row = []
        for k, name in enumerate(names):
            col = [float(values[d][k]) for d in range(start, start + window)]
            if name in ("MDNI", "MaxSur"):
                row.append(max(col))
            elif name == "MinSur":
                row.append(min(col))
            else:
                # exact rational sum, rounded once to float, then divided
                row.append(float(sum(Fraction(x) for x in col)) / window)
        out.append(row)
    return out


def random_weather(rng):
    """A (214, 7) series satisfying the physical ordering invariants."""
    avg = rng.normal(20, 6, size=214)
    adni = rng.uniform(0, 300, size=214)
    cols = [adni, rng.exponential(0.05, size=214), rng.uniform(5, 100, size=214), adni + rng.uniform(0, 80, size=214),
            avg + rng.uniform(0, 8, size=214), avg - rng.uniform(0, 8, size=214), avg]
    return np.stack(cols, axis=1)


def orthonormal_design(rng, n, p, b):
    """Design with X^T X = n I and response whose correlations X^T y / n equal ``b``."""
    Q, _ = np.linalg.qr(rng.normal(size=(n, p)))
    X = Q * np.sqrt(n)
    resid = rng.normal(size=n)
    resid -= Q @ (Q.T @ resid)
    return X, X @ np.asarray(b, dtype=np.float64) + resid


def exhaustive_stepwise(pool, cost, canonical):
    """Selection order by enumerating every ordering of ``pool``.

    An ordering is accepted when, at every step, its pick has the lowest
    (cost, canonical rank) among all picks available at that step. Exactly
    one ordering qualifies.
    """
    from itertools import permutations

    rank = {v: i for i, v in enumerate(canonical)}
    accepted = []
    for order in permutations(pool):
        ok = True
        for i, pick in enumerate(order):
            prefix = order[:i]
            key = (cost(prefix + (pick,)), rank[pick])
            if any((cost(prefix + (o,)), rank[o]) < key for o in order[i + 1:]):
                ok = False
                break
        if ok:
            accepted.append([(v, cost(order[: i + 1])) for i, v in enumerate(order)])
    assert len(accepted) == 1
    return accepted[0]


def random_cost_table(rng, pool, integer=False):
    """Deterministic mock evaluator: a fixed random RMSE for every subset."""
    from itertools import combinations

    table = {}
    for k in range(1, len(pool) + 1):
        for combo in combinations(sorted(pool), k):
            table[frozenset(combo)] = float(rng.integers(0, 4)) if integer else float(rng.uniform(5, 10))
    return lambda subset: table[frozenset(subset)]


ACCEPTANCE = {}


class criterion:
    """Time a block, record PASS/FAIL with a detail string, and enforce a runtime limit."""

    def __init__(self, number, title, limit_s=None):
        self.number, self.title, self.limit = number, title, limit_s
        self.detail = ""

    def __enter__(self):
        import time

        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        import time

        took = time.perf_counter() - self._t0
        ok = exc_type is None
        detail = self.detail if ok else f"{self.detail} {exc_type.__name__}: {exc}".strip()
        if ok and self.limit is not None and took >= self.limit:
            ok = False
            detail += f" (runtime {took:.1f}s exceeds {self.limit}s)"
        ACCEPTANCE[self.number] = (ok, f"{self.title}: {detail} [{took:.1f}s]")
        if exc_type is None and not ok:
            raise AssertionError(detail)
        return False
