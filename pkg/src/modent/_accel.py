"""Backend switch for the hot kernels.

Set ``MODENT_DISABLE_NUMBA=1`` to force the pure-numpy implementations,
e.g. for debugging or on platforms without a working numba.
"""
import os

DISABLE_NUMBA = os.environ.get("MODENT_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    if DISABLE_NUMBA:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator


def backend():
    return "numba" if HAS_NUMBA else "numpy"
