"""Backend selection for the hot numeric kernels.

The numba backend is used by default. Set ``QUAKEGRADE_NUMBA=0`` (or
``false``/``off``/``no``) to force the pure-numpy fallback; the flag is
read once at import time. Both backends implement identical semantics;
``benchmarks/bench_kernels.py`` compares their throughput.
"""

from __future__ import annotations

import os

_flag = os.environ.get("QUAKEGRADE_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in {"0", "false", "off", "no"}

if NUMBA_REQUESTED:
    try:
        from . import _kernels_numba as _impl

        BACKEND = "numba"
    except ImportError:
        from . import _kernels_numpy as _impl

        BACKEND = "numpy"
else:
    from . import _kernels_numpy as _impl

    BACKEND = "numpy"

best_split_gini = _impl.best_split_gini
best_split_sse = _impl.best_split_sse
tree_apply = _impl.tree_apply
iforest_path_sum = _impl.iforest_path_sum
knn_indices = _impl.knn_indices


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return BACKEND
