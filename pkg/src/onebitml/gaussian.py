"""Standard-normal CDF, quantile and log-CDF.

Thin wrappers over ``scipy.special`` (``ndtr``, ``ndtri``, ``log_ndtr``).
Those routines are accurate to a few ulp over the whole real line, which is
far below the Monte Carlo noise of anything built on top of them; the
wrappers only add the domain checks the rest of the package relies on.
"""

import numpy as np
from scipy import special

from .exceptions import ContractError


def std_normal_cdf(x):
    """Phi(x). Works elementwise on arrays; returns a float for scalars."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def std_normal_quantile(p):
    """Phi^{-1}(p) for p strictly inside (0, 1).

    Raises ContractError at the endpoints (or outside); callers clamp first.
    """
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise ContractError("quantile requires 0 < p < 1; clamp before calling")
    out = special.ndtri(p)
    return float(out) if out.ndim == 0 else out


def std_normal_logcdf(x):
    """log Phi(x), finite for every finite x (asymptotic series in the far left tail)."""
    out = special.log_ndtr(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out
