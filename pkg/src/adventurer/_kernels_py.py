"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``."""
import math

import numpy as np


def gae(rewards, values, dones, last_value, gamma, lam):
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.bool_)
    n = rewards.shape[0]
    adv = np.zeros(n, dtype=np.float64)
    running = 0.0
    next_value = float(last_value)
    for t in range(n - 1, -1, -1):
        keep = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * keep - values[t]
        running = delta + gamma * lam * keep * running
        adv[t] = running
        next_value = values[t]
    return adv


def histogram(scores, n_bins):
    """Counts of values in [0, 1] over equal-width bins; 1.0 lands in the last bin."""
    counts = np.zeros(n_bins, dtype=np.float64)
    for x in np.asarray(scores, dtype=np.float64):
        k = int(x * n_bins)
        if k >= n_bins:
            k = n_bins - 1
        elif k < 0:
            k = 0
        counts[k] += 1.0
    return counts


def smoothed_kl(p_counts, q_counts, smoothing):
    p_counts = np.asarray(p_counts, dtype=np.float64)
    q_counts = np.asarray(q_counts, dtype=np.float64)
    n_bins = p_counts.shape[0]
    p_total = p_counts.sum()
    q_total = q_counts.sum()
    norm = 1.0 + n_bins * smoothing
    total = 0.0
    for k in range(n_bins):
        p = (p_counts[k] / p_total + smoothing) / norm
        q = (q_counts[k] / q_total + smoothing) / norm
        total += p * math.log(p / q)
    return total
