"""Optional numba acceleration layer.

Hot pointwise kernels are written once and compiled with numba when it is
importable; setting TORUSMIX_NO_NUMBA=1 (or any nonempty value other than 0)
forces the pure-numpy fallback.  Both paths run the same algorithm; the
benchmark in bench/benchmark_kernels.py compares them.
"""

import os

_flag = os.environ.get("TORUSMIX_NO_NUMBA", "").strip()
NUMBA_DISABLED = _flag not in ("", "0")

using_numba = False
if not NUMBA_DISABLED:
    try:
        from numba import njit as _njit

        using_numba = True
    except ImportError:
        pass


def maybe_njit(*args, **kwargs):
    """@njit with cache=True when numba is active, identity decorator otherwise."""
    if using_numba:
        kwargs.setdefault("cache", True)
        return _njit(*args, **kwargs)

    def deco(fn):
        return fn

    if args and callable(args[0]):
        return args[0]
    return deco


def backend_name() -> str:
    return "numba" if using_numba else "numpy"
