"""Hot numerical kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation is selected.  ``ISTNSIM_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _barrier_py

BACKEND = "python"
barrier_solve = _barrier_py.barrier_solve

if not os.environ.get("ISTNSIM_PURE_PYTHON"):
    try:
        from . import _barrier
    except ImportError:
        pass
    else:
        barrier_solve = _barrier.barrier_solve
        BACKEND = "cython"

CONVERGED = _barrier_py.CONVERGED
STOPPED_EARLY = _barrier_py.STOPPED_EARLY
MAX_ITER = _barrier_py.MAX_ITER
BAD_START = _barrier_py.BAD_START
NUMERICAL = _barrier_py.NUMERICAL

__all__ = ["BACKEND", "barrier_solve", "CONVERGED", "STOPPED_EARLY",
           "MAX_ITER", "BAD_START", "NUMERICAL"]
