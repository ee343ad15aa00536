"""Uniform-grid cell linked-list and direct neighbor search.

The cell list uses the counting-sort representation: ``offsets`` (exclusive
prefix sums per cell) plus a flat ``particle_ids`` array. Construction is
three-phase and chunk-deterministic: per-chunk cell histograms, a global
exclusive prefix sum, and a scatter into per-chunk reserved slots. The chunk
layout depends only on the requested worker count, so per-cell membership is
identical under every policy.

Neighbor search is direct: candidates inside the 3^d adjacent-cell block are
collected into a small buffer, filtered by the cutoff, and sorted by original
particle id before being handed to the caller. Visiting in ascending-id order
fixes the floating-point accumulation order of every physics kernel, which is
what makes whole-step results bitwise identical across policies and invariant
under particle relabeling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .execution import chunk_bounds, effective_threads, _thread_count

# Capacity of the per-particle neighbor buffer (actual neighbors inside the
# cutoff, not raw block candidates). Exceeding it aborts the run.
NEIGHBOR_CAPACITY = 256


class NeighborOverflowError(RuntimeError):
    pass


@dataclass(frozen=True)
class UniformGrid:
    """Axis-aligned uniform grid; cells are half-open, lower-inclusive."""
    origin: np.ndarray          # d-vector, lower corner
    cell_size: float
    shape: tuple                # cells per axis

    @property
    def dim(self):
        return len(self.shape)

    @property
    def cell_count(self):
        return int(np.prod(self.shape))

    @staticmethod
    def from_bounds(lower, upper, cell_size):
        """Grid covering [lower, upper] plus one padding cell per side."""
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        counts = tuple(int(math.ceil((hi - lo) / cell_size)) + 2
                       for lo, hi in zip(lower, upper))
        origin = lower - cell_size
        return UniformGrid(origin, float(cell_size), counts)

    def shape_array(self):
        return np.asarray(self.shape, dtype=np.int64)


class CellLinkedList:
    __slots__ = ("grid", "offsets", "particle_ids", "out_of_bounds")

    def __init__(self, grid, offsets, particle_ids, out_of_bounds=0):
        self.grid = grid
        self.offsets = offsets
        self.particle_ids = particle_ids
        self.out_of_bounds = out_of_bounds


@njit(inline="always")
def _cell_coord(x, origin, cell_size, ncells):
    """Clamped cell coordinate along one axis; second value flags a clamp."""
    c = int(math.floor((x - origin) / cell_size))
    if c < 0:
        return 0, 1
    if c >= ncells:
        return ncells - 1, 1
    return c, 0


def cell_index_of(grid, position, diagnostics=None):
    """Row-major linear cell index of a position; out-of-bounds positions are
    clamped to the boundary cell and counted in ``diagnostics[0]``."""
    shape = grid.shape
    lin = 0
    clamped = 0
    for k in range(grid.dim):
        c = int(math.floor((position[k] - grid.origin[k]) / grid.cell_size))
        if c < 0:
            c, clamped = 0, 1
        elif c >= shape[k]:
            c, clamped = shape[k] - 1, 1
        lin = lin * shape[k] + c
    if clamped and diagnostics is not None:
        diagnostics[0] += 1
    return lin


@njit
def _compute_keys(pos, origin, cell_size, shape, keys, oob):
    n = pos.shape[0]
    d = pos.shape[1]
    for i in range(n):
        lin = 0
        clamped = 0
        for k in range(d):
            c, cl = _cell_coord(pos[i, k], origin[k], cell_size, shape[k])
            clamped |= cl
            lin = lin * shape[k] + c
        keys[i] = lin
        oob[i] = clamped


@njit(parallel=True)
def _count_cells(starts, stops, keys, hist):
    for c in prange(starts.shape[0]):
        for i in range(starts[c], stops[c]):
            hist[c, keys[i]] += 1


@njit(parallel=True)
def _scatter_cells(starts, stops, keys, base, particle_ids):
    for c in prange(starts.shape[0]):
        cursor = base[c].copy()
        for i in range(starts[c], stops[c]):
            k = keys[i]
            particle_ids[cursor[k]] = i
            cursor[k] += 1


def compute_cell_keys(positions, grid):
    """Per-particle linear cell keys plus the count of clamped positions."""
    n = positions.shape[0]
    keys = np.empty(n, np.int64)
    oob = np.zeros(n, np.uint8)
    if n:
        _compute_keys(positions, grid.origin.astype(positions.dtype),
                      positions.dtype.type(grid.cell_size),
                      grid.shape_array(), keys, oob)
    return keys, int(oob.sum())


def build_cell_linked_list(policy, positions, grid):
    """Three-phase concurrent build: count, exclusive prefix sum, scatter."""
    n = positions.shape[0]
    ncells = grid.cell_count
    if n == 0:
        return CellLinkedList(grid, np.zeros(ncells + 1, np.int64),
                              np.zeros(0, np.int64))
    keys = np.empty(n, np.int64)
    oob = np.empty(n, np.uint8)
    _compute_keys(positions, grid.origin.astype(positions.dtype),
                  positions.dtype.type(grid.cell_size),
                  grid.shape_array(), keys, oob)
    workers = policy.workers if policy.is_parallel else 1
    starts, stops = chunk_bounds(n, workers)
    hist = np.zeros((starts.shape[0], ncells), np.int64)
    with _thread_count(effective_threads(policy)):
        _count_cells(starts, stops, keys, hist)
        counts = hist.sum(axis=0)
        offsets = np.zeros(ncells + 1, np.int64)
        np.cumsum(counts, out=offsets[1:])
        # per-chunk write bases: global cell offset + earlier chunks' counts
        base = np.cumsum(hist, axis=0) - hist + offsets[:-1]
        particle_ids = np.empty(n, np.int64)
        _scatter_cells(starts, stops, keys, base, particle_ids)
    return CellLinkedList(grid, offsets, particle_ids, int(oob.sum()))


@njit
def collect_neighbors(i, pos, ids, offsets, particle_ids, origin, cell_size,
                      shape, cutoff, buf):
    """Fill ``buf`` with packed (id << 32 | index) entries for every j != i
    with |x_i - x_j| < cutoff, sorted ascending by original id.

    Returns the neighbor count, or -1 on buffer overflow.
    """
    d = pos.shape[1]
    c2 = cutoff * cutoff
    n = 0
    if d == 2:
        cx, _ = _cell_coord(pos[i, 0], origin[0], cell_size, shape[0])
        cy, _ = _cell_coord(pos[i, 1], origin[1], cell_size, shape[1])
        for ax in range(max(cx - 1, 0), min(cx + 2, shape[0])):
            for ay in range(max(cy - 1, 0), min(cy + 2, shape[1])):
                lin = ax * shape[1] + ay
                for s in range(offsets[lin], offsets[lin + 1]):
                    j = particle_ids[s]
                    if j == i:
                        continue
                    dx = pos[i, 0] - pos[j, 0]
                    dy = pos[i, 1] - pos[j, 1]
                    r2 = dx * dx + dy * dy
                    if r2 < c2 and r2 > 0.0:
                        if n >= buf.shape[0]:
                            return -1
                        buf[n] = (np.int64(ids[j]) << 32) | j
                        n += 1
    else:
        cx, _ = _cell_coord(pos[i, 0], origin[0], cell_size, shape[0])
        cy, _ = _cell_coord(pos[i, 1], origin[1], cell_size, shape[1])
        cz, _ = _cell_coord(pos[i, 2], origin[2], cell_size, shape[2])
        for ax in range(max(cx - 1, 0), min(cx + 2, shape[0])):
            for ay in range(max(cy - 1, 0), min(cy + 2, shape[1])):
                for az in range(max(cz - 1, 0), min(cz + 2, shape[2])):
                    lin = (ax * shape[1] + ay) * shape[2] + az
                    for s in range(offsets[lin], offsets[lin + 1]):
                        j = particle_ids[s]
                        if j == i:
                            continue
                        dx = pos[i, 0] - pos[j, 0]
                        dy = pos[i, 1] - pos[j, 1]
                        dz = pos[i, 2] - pos[j, 2]
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 < c2 and r2 > 0.0:
                            if n >= buf.shape[0]:
                                return -1
                            buf[n] = (np.int64(ids[j]) << 32) | j
                            n += 1
    buf[:n].sort()
    return n


def for_each_neighbor(i, positions, cll, cutoff, visit, ids=None):
    """Invoke ``visit(j, r_ij, unit_ij)`` for every j != i within the cutoff,
    in ascending original-id order. Kernel values are never cached; callers
    recompute W and its gradient inside ``visit``."""
    grid = cll.grid
    n = positions.shape[0]
    if ids is None:
        ids = np.arange(n, dtype=np.uint32)
    buf = np.empty(NEIGHBOR_CAPACITY, np.int64)
    cnt = collect_neighbors(i, positions, ids, cll.offsets, cll.particle_ids,
                            grid.origin.astype(positions.dtype),
                            positions.dtype.type(grid.cell_size),
                            grid.shape_array(), positions.dtype.type(cutoff),
                            buf)
    if cnt < 0:
        raise NeighborOverflowError(
            f"more than {NEIGHBOR_CAPACITY} neighbors for particle {i}")
    for t in range(cnt):
        j = int(buf[t] & 0xFFFFFFFF)
        diff = positions[i] - positions[j]
        r = float(np.sqrt(np.dot(diff, diff)))
        visit(j, r, diff / r)


def brute_force_neighbors(i, positions, cutoff):
    """Exact O(N) oracle: {j != i : |x_i - x_j| < cutoff}."""
    diff = positions - positions[i]
    r2 = np.einsum("ij,ij->i", diff, diff)
    mask = (r2 < cutoff * cutoff) & (r2 > 0.0)
    mask[i] = False
    return set(np.nonzero(mask)[0].tolist())
