"""Backend selection for the hot numeric kernels.

The convolution kernels exist in two versions: numba @njit loops and a pure
numpy (im2col + BLAS) fallback.  Set SPHEREMAP_NO_NUMBA=1 to force the numpy
path; SPHEREMAP_THREADS=N caps internal parallelism for both paths.
"""

import os

NUMBA_AVAILABLE = False
if os.environ.get("SPHEREMAP_NO_NUMBA", "0") not in ("1", "true", "yes"):
    try:
        import numba  # noqa: F401

        NUMBA_AVAILABLE = True
    except ImportError:
        NUMBA_AVAILABLE = False


def use_numba() -> bool:
    """True when the numba kernel path is active."""
    if os.environ.get("SPHEREMAP_NO_NUMBA", "0") in ("1", "true", "yes"):
        return False
    return NUMBA_AVAILABLE


def thread_cap() -> int | None:
    """Parsed SPHEREMAP_THREADS, or None when unset."""
    raw = os.environ.get("SPHEREMAP_THREADS")
    if not raw:
        return None
    n = int(raw)
    if n < 1:
        raise ValueError(f"SPHEREMAP_THREADS must be >= 1, got {n}")
    return n


def apply_thread_cap() -> None:
    """Propagate SPHEREMAP_THREADS to numba before first compilation."""
    n = thread_cap()
    if n is None:
        return
    if NUMBA_AVAILABLE:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
