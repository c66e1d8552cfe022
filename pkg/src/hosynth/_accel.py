"""Backend selection for the hot kernels.

Kernels are compiled with numba when it is importable, unless the
``HOSYNTH_NUMBA`` environment variable is set to ``0``/``false``/``off``.
The pure-numpy path is always importable and is used as the reference in
the kernel tests and the benchmark.
"""
import os

_flag = os.environ.get("HOSYNTH_NUMBA", "1").strip().lower()

try:
    import numba  # noqa: F401
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _flag not in ("0", "false", "off", "no")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, otherwise a no-op decorator."""
    if HAVE_NUMBA:
        import numba
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
