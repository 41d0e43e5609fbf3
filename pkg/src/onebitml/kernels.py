"""Backend selection for the hot loops.

The compiled extension is used when it imports; ``ONEBITML_BACKEND=python``
forces the numpy fallback.
"""

import os

import numpy as np

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and os.environ.get("ONEBITML_BACKEND", "").lower() != "python":
    BACKEND = "cython"
    _impl = _compiled
else:
    BACKEND = "python"
    _impl = _fallback


def score_argmax(y, log_plus, log_minus, backend=None):
    """Best candidate per observation row and its total log-likelihood.

    ``y``: ``(T, D)`` of +-1. ``log_plus``/``log_minus``: ``(K, D)`` log
    probabilities of observing +1 / -1. Ties go to the lowest index; if every
    score is ``-inf`` the index is 0 and the score ``-inf``.
    """
    impl = {"cython": _compiled, "python": _fallback}.get(backend, _impl) if backend else _impl
    if impl is None:
        raise RuntimeError("compiled backend requested but the extension is not built")
    y = np.ascontiguousarray(y, dtype=np.int8)
    log_plus = np.ascontiguousarray(log_plus, dtype=float)
    log_minus = np.ascontiguousarray(log_minus, dtype=float)
    return impl.score_argmax(y, log_plus, log_minus)
