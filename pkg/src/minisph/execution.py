"""Policy dispatch: one compute kernel source, three execution policies.

A kernel is a per-index procedure ``body(i, args)`` closed over nothing but
the flat arrays and plain values inside ``args``. The same compiled parallel
driver serves all policies; Sequenced simply runs it on a single thread, which
makes per-particle results bitwise identical across policies by construction
(kernels write only slots of their own index).

Floating-point reductions fold fixed index chunks and combine the partials in
a pairwise tree, so a Parallel reduction is deterministic run to run even
though it may differ from the Sequenced left-fold within rounding tolerance.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

SEQUENCED = "sequenced"
PARALLEL = "parallel"
PARALLEL_DEVICE = "parallel_device"

_MAX_THREADS = numba.config.NUMBA_NUM_THREADS


@dataclass(frozen=True)
class ExecutionPolicy:
    variant: str
    workers: int = 1

    def __post_init__(self):
        if self.variant not in (SEQUENCED, PARALLEL, PARALLEL_DEVICE):
            raise ValueError(f"unknown policy variant {self.variant!r}")
        if self.workers < 1:
            raise ValueError("worker count must be positive")

    @property
    def is_parallel(self):
        return self.variant != SEQUENCED

    @property
    def is_device(self):
        return self.variant == PARALLEL_DEVICE

    @staticmethod
    def sequenced():
        return ExecutionPolicy(SEQUENCED)

    @staticmethod
    def parallel(workers):
        return ExecutionPolicy(PARALLEL, workers)

    @staticmethod
    def parallel_device(workers):
        return ExecutionPolicy(PARALLEL_DEVICE, workers)


def effective_threads(policy):
    """Worker threads actually used; clamped to what the runtime offers."""
    if not policy.is_parallel:
        return 1
    return max(1, min(policy.workers, _MAX_THREADS))


@contextlib.contextmanager
def _thread_count(k):
    old = numba.get_num_threads()
    numba.set_num_threads(k)
    try:
        yield
    finally:
        numba.set_num_threads(old)


def validate_device_args(args):
    """The device binding surface: flat arrays and plain values, nothing else."""
    for a in args:
        if isinstance(a, np.ndarray):
            continue
        if isinstance(a, (int, float, np.integer, np.floating, np.bool_, bool)):
            continue
        if isinstance(a, tuple):
            validate_device_args(a)
            continue
        raise TypeError(
            f"device kernels may bind only arrays and plain values, got {type(a)!r}")


class ParticleKernel:
    """A compiled per-index procedure ``body(i, args)``."""

    def __init__(self, body):
        if isinstance(body, numba.core.dispatcher.Dispatcher):
            self.body = body
        else:
            self.body = njit(body)
        self._driver = None

    def driver(self):
        if self._driver is None:
            body = self.body

            @njit(parallel=True)
            def run(n, args):
                for i in prange(n):
                    body(i, args)

            self._driver = run
        return self._driver


def particle_kernel(body):
    """Decorator building a ParticleKernel from a plain function."""
    return ParticleKernel(body)


def particle_for(policy, range_size, kernel, args=()):
    """Invoke ``kernel`` once per index in 0..range_size-1 under ``policy``."""
    if range_size == 0:
        return
    args = tuple(args)
    if policy.is_device:
        validate_device_args(args)
    with _thread_count(effective_threads(policy)):
        kernel.driver()(range_size, args)


# -- reductions -------------------------------------------------------------

@dataclass(frozen=True)
class ReduceSpec:
    """identity value, per-index transform, associative+commutative combine."""
    identity: object
    transform: object   # njit body (i, args) -> value
    combine: object     # njit (a, b) -> value

    def __post_init__(self):
        for name in ("transform", "combine"):
            fn = getattr(self, name)
            if not isinstance(fn, numba.core.dispatcher.Dispatcher):
                object.__setattr__(self, name, njit(fn))


_reduce_drivers = {}


def _reduce_driver(spec):
    key = (spec.transform, spec.combine)
    drv = _reduce_drivers.get(key)
    if drv is None:
        transform = spec.transform
        combine = spec.combine

        @njit(parallel=True)
        def run(starts, stops, identity, args, out):
            for c in prange(starts.shape[0]):
                acc = identity
                for i in range(starts[c], stops[c]):
                    acc = combine(acc, transform(i, args))
                out[c] = acc

        _reduce_drivers[key] = drv = run
    return drv


def chunk_bounds(n, workers):
    """Contiguous index chunks; layout depends on the requested worker count
    only, so results are reproducible regardless of available threads."""
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    size = max(1024, -(-n // (4 * workers)))
    starts = np.arange(0, n, size, dtype=np.int64)
    stops = np.minimum(starts + size, n)
    return starts, stops


def _pairwise(partials, combine):
    vals = list(partials)
    while len(vals) > 1:
        nxt = [combine(vals[k], vals[k + 1]) for k in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


def particle_reduce(policy, range_size, spec, args=()):
    """Combine-fold of ``spec.transform`` over 0..range_size-1."""
    if range_size == 0:
        return spec.identity
    args = tuple(args)
    if policy.is_device:
        validate_device_args(args)
    identity = spec.identity
    if policy.is_parallel:
        starts, stops = chunk_bounds(range_size, policy.workers)
    else:
        starts = np.zeros(1, np.int64)
        stops = np.full(1, range_size, np.int64)
    out = np.full(starts.shape[0], identity, dtype=np.asarray(identity).dtype)
    with _thread_count(effective_threads(policy)):
        _reduce_driver(spec)(starts, stops, identity, args, out)
    if out.shape[0] == 1:
        return out[0]
    return _pairwise(out, spec.combine)


def dispatch_dynamics(policy, dynamics):
    """Run a kernel-shell object: host-side setup once, kernel under policy."""
    range_size, args = dynamics.setup()
    particle_for(policy, range_size, dynamics.kernel, args)
