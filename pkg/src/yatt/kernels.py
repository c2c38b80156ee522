"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting ``YATT_PURE_PYTHON=1``
forces the numpy fallback (used by the benchmark and the parity tests).
"""
import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("YATT_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _impl

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

# numpy's vectorized exp/tanh outrun the scalar libm loop, so the forward gate
# math stays on the fallback under both backends (see benchmarks/bench_kernels.py)
gates_forward = _kernels_py.gates_forward
gates_backward = _impl.gates_backward
split_scan = _impl.split_scan
