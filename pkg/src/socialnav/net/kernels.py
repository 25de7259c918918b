"""Kernel selection: compiled extension when available, numpy otherwise.

The compiled loops beat numpy only on small batches (numpy amortizes its
dispatch overhead through BLAS once batches grow), so dispatch is by batch
size with a crossover measured by benchmarks/bench_kernels.py.
Set SOCIALNAV_NO_EXT=1 to force the pure-Python kernels.
"""

from __future__ import annotations

import os

from . import _kernels_py

# Below this batch size the compiled elementwise loops win; above it the
# numpy/BLAS path does. See benchmarks/bench_kernels.py.
EXT_BATCH_LIMIT = 16

if os.environ.get("SOCIALNAV_NO_EXT"):
    _ext = None
    HAVE_EXT = False
else:
    try:
        from . import _kernels_cy as _ext  # type: ignore[assignment]

        HAVE_EXT = True
    except ImportError:
        _ext = None
        HAVE_EXT = False


def gru_seq_forward(wz, wr, wh, uz, ur, uh, bz, br, bh, x, h0):
    impl = _ext if _ext is not None and x.shape[0] <= EXT_BATCH_LIMIT else _kernels_py
    return impl.gru_seq_forward(wz, wr, wh, uz, ur, uh, bz, br, bh, x, h0)


def gru_seq_backward(wz, wr, wh, uz, ur, uh, bz, br, bh, cache, dhs):
    impl = _ext if _ext is not None and dhs.shape[0] <= EXT_BATCH_LIMIT else _kernels_py
    return impl.gru_seq_backward(wz, wr, wh, uz, ur, uh, bz, br, bh, cache, dhs)
