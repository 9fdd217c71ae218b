"""JIT dispatch layer.

Hot inner loops (Hawkes likelihood recursion, coordinate descent,
intensity evaluation) are decorated with :func:`njit`. Setting the
environment variable ``FLOWKERNEL_JIT=0`` (or ``off``/``false``) before
import replaces the decorator with a no-op so the same code runs as
plain Python/NumPy — handy for debugging and as a fallback when numba
is unavailable. ``benchmarks/bench_jit.py`` compares the two paths.
"""

import os

_flag = os.environ.get("FLOWKERNEL_JIT", "1").strip().lower()
JIT_REQUESTED = _flag not in ("0", "off", "false", "no")

if JIT_REQUESTED:
    try:
        from numba import njit, prange

        JIT_ENABLED = True
    except ImportError:
        JIT_ENABLED = False
else:
    JIT_ENABLED = False

if not JIT_ENABLED:

    def njit(func=None, **kwargs):
        if func is not None:
            return func

        def wrapper(f):
            return f

        return wrapper

    def prange(*args):
        return range(*args)
