"""Miniature weakly-compressible SPH solver with interchangeable execution
policies: sequenced, host-parallel and device-constrained parallel, all
driving the same compute kernels."""

from .execution import (ExecutionPolicy, ParticleKernel, ReduceSpec,
                        dispatch_dynamics, particle_for, particle_reduce)
from .neighborhood import (CellLinkedList, UniformGrid, brute_force_neighbors,
                           build_cell_linked_list, cell_index_of,
                           for_each_neighbor)
from .sorting import (comparison_sort_permutation, radix_sort_permutation,
                      sort_particles)
from .variables import (DiscreteVariable, SingularVariable, VariableRegistry,
                        kernel_view)

__all__ = [
    "ExecutionPolicy", "ParticleKernel", "ReduceSpec", "dispatch_dynamics",
    "particle_for", "particle_reduce",
    "CellLinkedList", "UniformGrid", "brute_force_neighbors",
    "build_cell_linked_list", "cell_index_of", "for_each_neighbor",
    "comparison_sort_permutation", "radix_sort_permutation", "sort_particles",
    "DiscreteVariable", "SingularVariable", "VariableRegistry", "kernel_view",
]

__version__ = "0.1.0"
