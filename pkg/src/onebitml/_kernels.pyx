# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled ML scoring: per observation, total log-likelihood of every
candidate and the first maximum.

Scores start from the all-minus baseline ``sum_i log_minus[k, i]`` and add the
``log_plus - log_minus`` row of each antenna that observed +1, so the inner
loop is a contiguous add over candidates. Zero probabilities (``-inf``) are
kept out of the sums and counted separately; any hit vetoes the candidate.
"""

from libc.math cimport INFINITY, isinf

import numpy as np


def score_argmax(const signed char[:, ::1] y,
                 const double[:, ::1] log_plus,
                 const double[:, ::1] log_minus):
    cdef Py_ssize_t n_obs = y.shape[0]
    cdef Py_ssize_t n_cand = log_plus.shape[0]
    cdef Py_ssize_t dim = y.shape[1]
    cdef Py_ssize_t t, k, i, j, n_plus
    cdef double lp, lm, best
    cdef Py_ssize_t best_k
    cdef bint any_dead = False

    base_arr = np.zeros(n_cand, dtype=np.float64)
    diff_arr = np.zeros((dim, n_cand), dtype=np.float64)
    dead_base_arr = np.zeros(n_cand, dtype=np.int32)
    dead_diff_arr = np.zeros((dim, n_cand), dtype=np.int32)
    cdef double[::1] base = base_arr
    cdef double[:, ::1] diff = diff_arr
    cdef int[::1] dead_base = dead_base_arr
    cdef int[:, ::1] dead_diff = dead_diff_arr

    for k in range(n_cand):
        for i in range(dim):
            lp = log_plus[k, i]
            lm = log_minus[k, i]
            if isinf(lp) and lp < 0:
                dead_diff[i, k] += 1
                lp = 0.0
                any_dead = True
            if isinf(lm) and lm < 0:
                dead_base[k] += 1
                dead_diff[i, k] -= 1
                lm = 0.0
                any_dead = True
            base[k] += lm
            diff[i, k] = lp - lm

    idx = np.zeros(n_obs, dtype=np.int64)
    scores = np.empty(n_obs, dtype=np.float64)
    cdef long long[::1] idx_v = idx
    cdef double[::1] score_v = scores
    cdef double[::1] acc = np.empty(n_cand, dtype=np.float64)
    cdef int[::1] hits = np.empty(n_cand, dtype=np.int32)
    cdef Py_ssize_t[::1] plus = np.empty(dim, dtype=np.intp)

    with nogil:
        for t in range(n_obs):
            n_plus = 0
            for i in range(dim):
                if y[t, i] > 0:
                    plus[n_plus] = i
                    n_plus += 1
            for k in range(n_cand):
                acc[k] = base[k]
            for j in range(n_plus):
                i = plus[j]
                for k in range(n_cand):
                    acc[k] += diff[i, k]
            if any_dead:
                for k in range(n_cand):
                    hits[k] = dead_base[k]
                for j in range(n_plus):
                    i = plus[j]
                    for k in range(n_cand):
                        hits[k] += dead_diff[i, k]
                for k in range(n_cand):
                    if hits[k] > 0:
                        acc[k] = -INFINITY
            best = -INFINITY
            best_k = 0
            for k in range(n_cand):
                if acc[k] > best:
                    best = acc[k]
                    best_k = k
            idx_v[t] = best_k
            score_v[t] = best
    return idx, scores
