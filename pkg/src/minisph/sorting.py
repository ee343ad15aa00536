"""Stable particle reordering by cell key.

Two routes produce the same permutation: a stable comparison sort (the host
path and the oracle) and a recursion-free LSD radix sort with 8-bit digits
(the device path). The radix passes use per-chunk histograms merged through a
global exclusive prefix sum, so the scatter is stable and deterministic for
any worker count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from .execution import chunk_bounds, effective_threads, _thread_count
from .neighborhood import compute_cell_keys

RADIX_BITS = 8
RADIX_SIZE = 1 << RADIX_BITS


def comparison_sort_permutation(keys):
    """Stable comparison-based sort permutation (host path, radix oracle)."""
    return np.argsort(np.asarray(keys), kind="stable").astype(np.int64)


@njit(parallel=True)
def _radix_count(starts, stops, keys, perm, shift, hist):
    for c in prange(starts.shape[0]):
        for s in range(starts[c], stops[c]):
            d = (keys[perm[s]] >> shift) & (RADIX_SIZE - 1)
            hist[c, d] += 1


@njit(parallel=True)
def _radix_scatter(starts, stops, keys, perm, shift, base, out):
    for c in prange(starts.shape[0]):
        cursor = base[c].copy()
        for s in range(starts[c], stops[c]):
            p = perm[s]
            d = (keys[p] >> shift) & (RADIX_SIZE - 1)
            out[cursor[d]] = p
            cursor[d] += 1


def radix_sort_permutation(policy, keys):
    """Stable LSD radix sort permutation over unsigned integer keys."""
    keys = np.ascontiguousarray(np.asarray(keys), dtype=np.int64)
    n = keys.shape[0]
    if n == 0:
        return np.zeros(0, np.int64)
    if keys.min() < 0:
        raise ValueError("radix sort keys must be non-negative")
    max_key = int(keys.max())
    passes = max(1, -(-max_key.bit_length() // RADIX_BITS))
    workers = policy.workers if policy.is_parallel else 1
    starts, stops = chunk_bounds(n, workers)
    perm = np.arange(n, dtype=np.int64)
    out = np.empty(n, np.int64)
    with _thread_count(effective_threads(policy)):
        for p in range(passes):
            shift = p * RADIX_BITS
            hist = np.zeros((starts.shape[0], RADIX_SIZE), np.int64)
            _radix_count(starts, stops, keys, perm, shift, hist)
            totals = hist.sum(axis=0)
            offsets = np.concatenate(([0], np.cumsum(totals)[:-1]))
            base = np.cumsum(hist, axis=0) - hist + offsets
            _radix_scatter(starts, stops, keys, perm, shift, base, out)
            perm, out = out, perm
    return perm


def sort_particles(policy, registry, keys, exempt_names=()):
    """Reorder all discrete variables by cell key; radix on the device path,
    stable comparison sort otherwise. Returns the permutation applied."""
    if policy.is_device:
        perm = radix_sort_permutation(policy, keys)
    else:
        perm = comparison_sort_permutation(keys)
    registry.apply_permutation(perm, exempt_names)
    return perm


def sort_particles_by_cell(policy, registry, grid):
    """Compute cell keys from current positions, then reorder."""
    keys, _ = compute_cell_keys(registry.view("x"), grid)
    return sort_particles(policy, registry, keys)
