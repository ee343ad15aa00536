import numpy as np
import pytest
from numba import njit

from minisph.execution import (ExecutionPolicy, ParticleKernel, ReduceSpec,
                               chunk_bounds, dispatch_dynamics,
                               effective_threads, particle_for,
                               particle_reduce, validate_device_args)

POLICIES = (ExecutionPolicy.sequenced(), ExecutionPolicy.parallel(4),
            ExecutionPolicy.parallel(16), ExecutionPolicy.parallel_device(8))


def _square_body(i, args):
    out, scale = args
    out[i] = scale * i * i


SQUARE = ParticleKernel(_square_body)


@pytest.mark.parametrize("policy", POLICIES, ids=lambda p: f"{p.variant}-{p.workers}")
def test_particle_for_covers_every_index(policy):
    out = np.zeros(1000)
    particle_for(policy, 1000, SQUARE, (out, 2.0))
    assert np.array_equal(out, 2.0 * np.arange(1000.0) ** 2)


def test_particle_for_identical_across_policies():
    results = []
    for policy in POLICIES:
        out = np.zeros(513)
        particle_for(policy, 513, SQUARE, (out, 0.5))
        results.append(out.tobytes())
    assert len(set(results)) == 1


def test_policy_constructors_and_validation():
    assert not ExecutionPolicy.sequenced().is_parallel
    assert ExecutionPolicy.parallel(4).is_parallel
    assert ExecutionPolicy.parallel_device(8).is_device
    with pytest.raises(ValueError):
        ExecutionPolicy("threads")
    with pytest.raises(ValueError):
        ExecutionPolicy.parallel(0)
    assert effective_threads(ExecutionPolicy.sequenced()) == 1
    assert effective_threads(ExecutionPolicy.parallel(64)) >= 1


def test_device_binding_rejects_host_objects():
    validate_device_args((np.zeros(3), 1, 2.5, np.float32(1.0), (np.zeros(2),)))
    with pytest.raises(TypeError):
        validate_device_args(([1, 2, 3],))
    with pytest.raises(TypeError):
        validate_device_args(({"a": 1},))
    with pytest.raises(TypeError):
        particle_for(ExecutionPolicy.parallel_device(4), 3, SQUARE,
                     (np.zeros(3), [2.0]))


def test_chunk_bounds_partition_the_range():
    for n in (0, 1, 1023, 1024, 4097, 100_000):
        for workers in (1, 4, 16):
            starts, stops = chunk_bounds(n, workers)
            assert (stops > starts).all()
            covered = np.concatenate([np.arange(a, b)
                                      for a, b in zip(starts, stops)]
                                     or [np.zeros(0, np.int64)])
            assert np.array_equal(covered, np.arange(n))


@njit
def _identity_transform(i, args):
    values, = args
    return values[i]


@njit
def _add(a, b):
    return a + b


@njit
def _fmax(a, b):
    return max(a, b)


SUM_SPEC = ReduceSpec(0.0, _identity_transform, _add)
MAX_SPEC = ReduceSpec(0.0, _identity_transform, _fmax)


def test_reduce_sum_matches_numpy():
    rng = np.random.default_rng(3)
    values = rng.random(10_000)
    for policy in POLICIES:
        total = particle_reduce(policy, values.size, SUM_SPEC, (values,))
        assert total == pytest.approx(values.sum(), rel=1e-12)


def test_reduce_max_bitwise_identical_across_policies():
    rng = np.random.default_rng(4)
    values = rng.random(50_001)
    results = {float(particle_reduce(p, values.size, MAX_SPEC, (values,)))
               for p in POLICIES}
    assert results == {float(values.max())}


def test_reduce_deterministic_for_fixed_worker_count():
    rng = np.random.default_rng(5)
    values = rng.random(20_000)
    policy = ExecutionPolicy.parallel(8)
    a = particle_reduce(policy, values.size, SUM_SPEC, (values,))
    b = particle_reduce(policy, values.size, SUM_SPEC, (values,))
    assert a == b


def test_reduce_empty_range_returns_identity():
    assert particle_reduce(ExecutionPolicy.parallel(4), 0, SUM_SPEC,
                           (np.zeros(0),)) == 0.0


class _FillDynamics:
    kernel = SQUARE

    def __init__(self, out):
        self.out = out

    def setup(self):
        return self.out.shape[0], (self.out, 3.0)


def test_dispatch_dynamics_runs_kernel_shell():
    out = np.zeros(10)
    dispatch_dynamics(ExecutionPolicy.parallel(4), _FillDynamics(out))
    assert np.array_equal(out, 3.0 * np.arange(10.0) ** 2)
