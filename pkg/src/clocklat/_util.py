"""Numerical helpers: stable log-space reductions and grouped aggregation.

Grouped reductions sort their keys first so results are independent of the
order in which contributions were generated (bit-stable across runs).
"""

from __future__ import annotations

import numpy as np


def logsumexp(logs: np.ndarray) -> float:
    """log(sum(exp(logs))) without overflow; -inf for an empty input."""
    logs = np.asarray(logs, dtype=float)
    if logs.size == 0:
        return float("-inf")
    m = float(np.max(logs))
    if not np.isfinite(m):
        return m
    return m + float(np.log(np.sum(np.exp(logs - m))))


def group_logsumexp(keys: np.ndarray, logs: np.ndarray):
    """Aggregate log-values sharing the same integer key row.

    Returns ``(unique_keys, grouped_logs)`` with unique keys in lexicographic
    order.  Zero-width keys collapse everything into a single group.
    """
    keys = np.asarray(keys)
    logs = np.asarray(logs, dtype=float)
    if keys.shape[1] == 0:
        return np.zeros((1, 0), dtype=np.int64), np.array([logsumexp(logs)])
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    order = np.argsort(inv, kind="stable")
    slogs = logs[order]
    sinv = inv[order]
    starts = np.searchsorted(sinv, np.arange(len(uniq)))
    gmax = np.maximum.reduceat(slogs, starts)
    sums = np.add.reduceat(np.exp(slogs - gmax[sinv]), starts)
    return uniq, gmax + np.log(sums)


def group_sum(keys: np.ndarray, values: np.ndarray):
    """Sum values sharing the same integer key row; keys returned sorted."""
    keys = np.asarray(keys)
    values = np.asarray(values, dtype=float)
    if keys.shape[1] == 0:
        return np.zeros((1, 0), dtype=np.int64), np.array([float(np.sum(values))])
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    sums = np.bincount(inv.ravel(), weights=values, minlength=len(uniq))
    return uniq, sums


def segment_logsumexp(logs: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Log-sum-exp over contiguous segments given their start offsets."""
    logs = np.asarray(logs, dtype=float)
    starts = np.asarray(starts, dtype=np.int64)
    seg_ids = np.zeros(len(logs), dtype=np.int64)
    seg_ids[starts[1:]] = 1
    seg_ids = np.cumsum(seg_ids)
    gmax = np.maximum.reduceat(logs, starts)
    sums = np.add.reduceat(np.exp(logs - gmax[seg_ids]), starts)
    return gmax + np.log(sums)


def lexsorted(points: np.ndarray) -> np.ndarray:
    """Indices that sort integer rows lexicographically (first column major)."""
    points = np.asarray(points)
    if points.shape[1] == 0:
        return np.arange(len(points))
    return np.lexsort(points.T[::-1])
