import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from yatt import _kernels_py, kernels

compiled = pytest.importorskip("yatt._kernels", reason="compiled extension not built")


def brute_force_split(X, y, min_leaf):
    """Best split by trying every (column, threshold) pair directly."""
    best = (-1, 0.0, -1.0)
    n, f = X.shape
    for j in range(f):
        vals = np.unique(X[:, j])
        for lo, hi in zip(vals[:-1], vals[1:]):
            left = X[:, j] <= lo
            nl = left.sum()
            if nl < min_leaf or n - nl < min_leaf:
                continue
            score = y[left].sum() ** 2 / nl + y[~left].sum() ** 2 / (n - nl)
            if score > best[2] + 1e-9 * max(1.0, abs(best[2])):
                best = (j, 0.5 * (lo + hi), score)
    return best


def presort(X, y):
    order = np.argsort(X, axis=0, kind="stable")
    return (np.ascontiguousarray(np.take_along_axis(X, order, axis=0)),
            np.ascontiguousarray(y[order]))


def test_backend_reported():
    assert kernels.BACKEND in ("compiled", "python")


@pytest.mark.parametrize("B,H", [(1, 1), (3, 5), (16, 32)])
def test_gate_kernels_agree(B, H, rng):
    z = rng.normal(scale=3.0, size=(B, 4 * H))
    c = rng.normal(size=(B, H))
    fc = compiled.gates_forward(z, c)
    fp = _kernels_py.gates_forward(z, c)
    for a, b in zip(fc, fp):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)
    dh = rng.normal(size=(B, H))
    dcn = rng.normal(size=(B, H))
    bc = compiled.gates_backward(fc[0], c, fc[2], dh, dcn)
    bp = _kernels_py.gates_backward(fp[0], c, fp[2], dh, dcn)
    for a, b in zip(bc, bp):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_gate_forward_matches_definition(rng):
    H = 4
    z = rng.normal(size=(2, 4 * H))
    c = rng.normal(size=(2, H))
    gates, c_new, tc, h = _kernels_py.gates_forward(z, c)
    sig = lambda v: 1 / (1 + np.exp(-v))
    e, r, ct, o = sig(z[:, :H]), sig(z[:, H:2 * H]), np.tanh(z[:, 2 * H:3 * H]), sig(z[:, 3 * H:])
    np.testing.assert_allclose(c_new, e * c + r * ct)
    np.testing.assert_allclose(h, o * np.tanh(e * c + r * ct))


@given(st.integers(0, 10_000), st.integers(2, 40), st.integers(1, 4), st.integers(1, 6), st.booleans())
def test_split_scan_matches_brute_force(seed, n, f, min_leaf, ties):
    r = np.random.default_rng(seed)
    X = r.integers(0, 5, size=(n, f)).astype(float) if ties else r.normal(size=(n, f))
    y = r.normal(size=n)
    xs, ys = presort(X, y)
    want = brute_force_split(X, y, min_leaf)
    for impl in (compiled, _kernels_py):
        j, thr, score = impl.split_scan(xs, ys, min_leaf)
        assert j == want[0]
        if j >= 0:
            assert thr == pytest.approx(want[1])
            assert score == pytest.approx(want[2], rel=1e-9)


@given(st.integers(0, 10_000), st.integers(2, 60), st.integers(1, 5))
def test_split_scan_backends_identical(seed, n, min_leaf):
    r = np.random.default_rng(seed)
    xs, ys = presort(r.normal(size=(n, 3)), r.normal(size=n))
    a = compiled.split_scan(xs, ys, min_leaf)
    b = _kernels_py.split_scan(xs, ys, min_leaf)
    assert a[0] == b[0]
    if a[0] >= 0:
        assert a[1] == b[1]
        assert a[2] == pytest.approx(b[2], rel=1e-12)


def test_split_threshold_below_upper_value_for_adjacent_floats():
    lo = 1.0
    hi = np.nextafter(lo, 2.0)
    xs = np.array([[lo], [hi]])
    ys = np.array([[0.0], [1.0]])
    for impl in (compiled, _kernels_py):
        j, thr, _ = impl.split_scan(xs, ys, 1)
        assert j == 0 and lo <= thr < hi


def test_split_scan_no_admissible_split():
    xs = np.ones((6, 2))
    ys = np.arange(12.0).reshape(6, 2)
    for impl in (compiled, _kernels_py):
        assert impl.split_scan(xs, ys, 1)[0] == -1
        assert impl.split_scan(np.arange(4.0)[:, None], np.arange(4.0)[:, None], 3)[0] == -1
