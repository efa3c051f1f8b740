"""coar_zsl: contrastive attribute-representation learning for zero-shot
recognition, with a synthetic compositional-attribute benchmark.

``COAR_ZSL_THREADS`` caps internal (BLAS) parallelism; the default of 1
keeps runs bitwise reproducible.
"""

import os


def _cap_threads():
    n = os.environ.get("COAR_ZSL_THREADS", "1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, n)
    try:
        from threadpoolctl import threadpool_limits

        return threadpool_limits(limits=int(n))
    except Exception:  # pragma: no cover - depends on BLAS runtime
        return None


_thread_limiter = _cap_threads()

__version__ = "0.1.0"
