"""Pure-numpy versions of the compiled kernels (same contracts)."""

import numpy as np


def score_argmax(y, log_plus, log_minus):
    """First-maximum candidate of ``sum_i log p_k(y_i)`` for each row of ``y``.

    ``-inf`` entries are carried as hit counts so a zero likelihood vetoes a
    candidate without producing ``0 * inf`` NaNs in the matrix products.
    """
    plus = (np.asarray(y) > 0).astype(float)
    minus = 1.0 - plus
    dead_plus = np.isneginf(log_plus)
    dead_minus = np.isneginf(log_minus)
    finite_plus = np.where(dead_plus, 0.0, log_plus)
    finite_minus = np.where(dead_minus, 0.0, log_minus)
    scores = plus @ finite_plus.T + minus @ finite_minus.T
    if dead_plus.any() or dead_minus.any():
        hits = plus @ dead_plus.T.astype(float) + minus @ dead_minus.T.astype(float)
        scores[hits > 0] = -np.inf
    idx = np.argmax(scores, axis=1)
    return idx.astype(np.int64), scores[np.arange(len(idx)), idx]
