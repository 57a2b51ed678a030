"""Apply REFTRACK_THREADS before numpy (and its BLAS) is first imported."""
import os

_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS")


def apply_thread_cap(environ=os.environ):
    """Copy REFTRACK_THREADS into the usual BLAS/OpenMP thread variables; returns the cap or None."""
    raw = environ.get("REFTRACK_THREADS")
    if raw is None or not raw.strip():
        return None
    try:
        n = int(raw)
    except ValueError:
        return None
    if n < 1:
        return None
    for var in _VARS:
        environ[var] = str(n)
    return n


apply_thread_cap()
