"""Compare the compiled kernels with the numpy fallback.

Times each kernel in isolation and then one end-to-end workload per kernel
(an encoder forward/backward pass and a small forest fit) under both backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import contextlib
import timeit

import numpy as np

from yatt import _kernels_py, baselines, kernels, lstm

try:
    from yatt import _kernels
except ImportError:  # extension not built
    _kernels = None


@contextlib.contextmanager
def backend(mod):
    saved = {n: getattr(kernels, n) for n in ("gates_forward", "gates_backward", "split_scan")}
    for n in saved:
        setattr(kernels, n, getattr(mod, n))
    try:
        yield
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def workloads(rng):
    B, H = 64, 128
    z = rng.normal(size=(B, 4 * H))
    c = rng.normal(size=(B, H))
    gates, _, tc, _ = _kernels_py.gates_forward(z, c)
    dh, dc = rng.normal(size=(B, H)), rng.normal(size=(B, H))

    xs = np.sort(rng.normal(size=(2000, 60)), axis=0)
    ys = rng.normal(size=(2000, 60))

    enc_cfg = lstm.EncoderConfig(input_dim=9, h1=64, h2=32, T_x=30, dropout_rate=0.0)
    w1 = lstm.LstmCellWeights.init(rng, 9, 64)
    w2 = lstm.LstmCellWeights.init(rng, 64, 32)
    x = rng.normal(size=(64, 30, 9))

    def encoder_step():
        ann, _, cache = lstm.stacked_encode(enc_cfg, w1, w2, x, mode="train", seed=0)
        lstm.bptt_backward(w1, w2, cache, np.ones_like(ann))

    X = rng.normal(size=(1500, 40))
    y = X[:, 0] - 2 * X[:, 1] ** 2 + rng.normal(size=1500)
    params = baselines.ForestParams(n_trees=5, max_depth=8)

    return {
        "gates_forward 64x128": lambda k: k.gates_forward(z, c),
        "gates_backward 64x128": lambda k: k.gates_backward(gates, c, tc, dh, dc),
        "split_scan 2000x60": lambda k: k.split_scan(xs, ys, 5),
        "encoder fwd+bwd T=30": lambda k: encoder_step(),
        "forest 5 trees n=1500": lambda k: baselines.forest_fit(X, y, params, seed=0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    mods = [("python", _kernels_py)] + ([("compiled", _kernels)] if _kernels is not None else [])
    print(f"{'workload':<24}" + "".join(f"{name:>12}" for name, _ in mods) + f"{'speedup':>10}")
    for label, fn in workloads(rng).items():
        times = []
        for _, mod in mods:
            with backend(mod):
                fn(mod)  # warm-up
                n = 3 if "forest" in label or "encoder" in label else 200
                times.append(min(timeit.repeat(lambda: fn(mod), number=n, repeat=args.repeat)) / n)
        speed = f"{times[0] / times[1]:>9.1f}x" if len(times) == 2 else f"{'n/a':>10}"
        print(f"{label:<24}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times) + speed)


if __name__ == "__main__":
    main()
