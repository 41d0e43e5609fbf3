"""Symbol-vector detectors for one-bit observations.

All ML variants score candidates in the log domain through
:func:`onebitml.kernels.score_argmax`, so ties go to the lowest symbol
index. The ``*_batch`` functions take a ``(T, 2Nr)`` array of signs and
return index/score arrays; the scalar functions wrap them and build a
:class:`DetectionResult`.
"""

from dataclasses import dataclass

import numpy as np

from .core import QuantizedObservation, effective_channel
from .exceptions import ContractError, DetectionError
from .gaussian import std_normal_logcdf
from .kernels import score_argmax

__all__ = [
    "DetectionResult",
    "csi_log_tables",
    "learned_log_tables",
    "ml_detect_csi",
    "ml_detect_csi_batch",
    "ml_detect_learned",
    "ml_detect_learned_batch",
    "zf_detect",
    "zf_detect_batch",
    "zf_equalize",
]


@dataclass(frozen=True)
class DetectionResult:
    symbol_index: int
    log_likelihood: float
    per_user_symbols: np.ndarray
    degenerate: bool = False


def _as_signs(y):
    if isinstance(y, QuantizedObservation):
        y = y.values
    return np.asarray(y)


def _result(book, k, score):
    return DetectionResult(
        int(k), float(score), book.vectors_complex[int(k)], bool(np.isneginf(score))
    )


def csi_log_tables(H, book, config):
    """``log Phi(+psi)`` and ``log Phi(-psi)`` for the true effective channel."""
    psi = effective_channel(H, book, config)
    return std_normal_logcdf(psi), std_normal_logcdf(-psi)


def learned_log_tables(table):
    return table.log_tables()


def ml_detect_csi_batch(Y, H, book, config, log_tables=None):
    """Perfect-CSI one-bit ML for every row of ``Y``. Pass ``log_tables`` to reuse them."""
    Y = _as_signs(Y)
    if Y.shape[-1] != 2 * config.num_rx_antennas:
        raise ContractError("observation length does not match the channel")
    log_plus, log_minus = log_tables if log_tables is not None else csi_log_tables(H, book, config)
    return score_argmax(np.atleast_2d(Y), log_plus, log_minus)


def ml_detect_csi(y, H, book, config):
    idx, scores = ml_detect_csi_batch(_as_signs(y)[None, :], H, book, config)
    return _result(book, idx[0], scores[0])


def ml_detect_learned_batch(Y, table, log_tables=None):
    """ML over a learned table. Zero probabilities score ``-inf`` and are not patched."""
    Y = _as_signs(Y)
    if Y.shape[-1] != table.p_plus.shape[1]:
        raise ContractError(
            f"observation length {Y.shape[-1]} does not match table width {table.p_plus.shape[1]}"
        )
    log_plus, log_minus = log_tables if log_tables is not None else learned_log_tables(table)
    return score_argmax(np.atleast_2d(Y), log_plus, log_minus)


def ml_detect_learned(y, table, book):
    if table.p_plus.shape[0] != book.count:
        raise ContractError("table rows do not match the symbol book")
    idx, scores = ml_detect_learned_batch(_as_signs(y)[None, :], table)
    return _result(book, idx[0], scores[0])


def zf_equalize(Y, H):
    """Pseudo-inverse of the complex channel applied to the raw +-1 receive vectors.

    No amplitude correction: the real part of the receive vector is the first
    half of ``y`` and the imaginary part the second half. Returns ``(T, Nu)``.
    """
    Y = np.atleast_2d(_as_signs(Y)).astype(float)
    h = H.complex_form
    nr, nu = h.shape
    if np.linalg.matrix_rank(h) < nu:
        raise DetectionError("channel is rank deficient; zero-forcing undefined")
    y_complex = Y[:, :nr] + 1j * Y[:, nr:]
    pinv = np.linalg.solve(h.conj().T @ h, h.conj().T)
    return y_complex @ pinv.T


def zf_detect_batch(Y, H, book):
    x_hat = zf_equalize(Y, H)
    per_user = book.constellation.nearest_index(x_hat)
    return book.index_of(per_user)


def zf_detect(y, H, book, constellation=None):
    """One-bit ZF followed by per-user nearest-point mapping.

    ``constellation`` defaults to the book's own; passing a different one
    only changes the slicer.
    """
    x_hat = zf_equalize(_as_signs(y)[None, :], H)[0]
    const = constellation if constellation is not None else book.constellation
    k = int(book.index_of(const.nearest_index(x_hat)))
    return DetectionResult(k, float("nan"), book.vectors_complex[k])
