# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sequential kernels. Semantics match ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log

cnp.import_array()


def gae(rewards, values, dones, double last_value, double gamma, double lam):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] d = np.ascontiguousarray(dones, dtype=np.bool_).view(np.uint8)
    cdef Py_ssize_t n = r.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] adv = np.zeros(n, dtype=np.float64)
    cdef double running = 0.0, next_value = last_value, keep, delta
    cdef Py_ssize_t t
    for t in range(n - 1, -1, -1):
        keep = 0.0 if d[t] else 1.0
        delta = r[t] + gamma * next_value * keep - v[t]
        running = delta + gamma * lam * keep * running
        adv[t] = running
        next_value = v[t]
    return adv


def histogram(scores, Py_ssize_t n_bins):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.ascontiguousarray(scores, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] counts = np.zeros(n_bins, dtype=np.float64)
    cdef Py_ssize_t i, k
    for i in range(x.shape[0]):
        k = <Py_ssize_t>(x[i] * n_bins)
        if k >= n_bins:
            k = n_bins - 1
        elif k < 0:
            k = 0
        counts[k] += 1.0
    return counts


def smoothed_kl(p_counts, q_counts, double smoothing):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pc = np.ascontiguousarray(p_counts, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] qc = np.ascontiguousarray(q_counts, dtype=np.float64)
    cdef Py_ssize_t n_bins = pc.shape[0], k
    cdef double p_total = 0.0, q_total = 0.0, norm, p, q, total = 0.0
    for k in range(n_bins):
        p_total += pc[k]
        q_total += qc[k]
    norm = 1.0 + n_bins * smoothing
    for k in range(n_bins):
        p = (pc[k] / p_total + smoothing) / norm
        q = (qc[k] / q_total + smoothing) / norm
        total += p * log(p / q)
    return total
