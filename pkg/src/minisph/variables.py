"""Named simulation state: per-particle (discrete) and global (singular) variables.

All numeric storage shares one run-wide precision. Vector variables are stored
as (N, d) C-contiguous arrays, so a kernel view is a plain offset-indexable
array with (particle, component) access.
"""

from __future__ import annotations

import numpy as np

SCALAR = "scalar"
VECTOR = "vector"
INDEX = "index"

INDEX_DTYPE = np.uint32


class RegistrationError(ValueError):
    pass


class PermutationError(ValueError):
    pass


class DiscreteVariable:
    """A named per-particle field of length N."""

    __slots__ = ("name", "kind", "data")

    def __init__(self, name, kind, data):
        self.name = name
        self.kind = kind
        self.data = data

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        return f"DiscreteVariable({self.name!r}, {self.kind}, n={len(self)})"


class SingularVariable:
    """A named global value (scalar or small fixed-size tuple)."""

    __slots__ = ("name", "value")

    def __init__(self, name, value):
        self.name = name
        self.value = value

    def __repr__(self):
        return f"SingularVariable({self.name!r}, {self.value!r})"


def kernel_view(variable):
    """Flat array view of a discrete variable: indexing only, nothing else."""
    return variable.data


class VariableRegistry:
    """Registry of all discrete and singular variables of one simulation.

    The particle count N and the spatial dimension are fixed at construction.
    An ``id`` index variable (original particle order) is always present and is
    permuted together with everything else.
    """

    def __init__(self, particle_count, dim, dtype=np.float64):
        if particle_count < 0:
            raise ValueError("particle count must be non-negative")
        if dim not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        self.particle_count = int(particle_count)
        self.dim = int(dim)
        self.dtype = np.dtype(dtype)
        self._discrete: dict[str, DiscreteVariable] = {}
        self._singular: dict[str, SingularVariable] = {}
        self.register_discrete("id", INDEX)
        self._discrete["id"].data[:] = np.arange(self.particle_count,
                                                 dtype=INDEX_DTYPE)

    # -- registration -------------------------------------------------------

    def register_discrete(self, name, kind, fill=0):
        if name in self._discrete:
            raise RegistrationError(f"discrete variable {name!r} already registered")
        n = self.particle_count
        if kind == SCALAR:
            data = np.full(n, fill, dtype=self.dtype)
        elif kind == VECTOR:
            data = np.full((n, self.dim), fill, dtype=self.dtype)
        elif kind == INDEX:
            data = np.full(n, fill, dtype=INDEX_DTYPE)
        else:
            raise ValueError(f"unknown variable kind {kind!r}")
        var = DiscreteVariable(name, kind, data)
        self._discrete[name] = var
        return var

    def register_singular(self, name, value):
        if name in self._singular:
            raise RegistrationError(f"singular variable {name!r} already registered")
        if np.ndim(value) == 0:
            stored = self.dtype.type(value)
        else:
            stored = np.asarray(value, dtype=self.dtype)
        var = SingularVariable(name, stored)
        self._singular[name] = var
        return var

    # -- access -------------------------------------------------------------

    def discrete(self, name):
        return self._discrete[name]

    def singular(self, name):
        return self._singular[name].value

    def view(self, name):
        return kernel_view(self._discrete[name])

    def has_discrete(self, name):
        return name in self._discrete

    def discrete_names(self):
        return list(self._discrete)

    # -- reordering ---------------------------------------------------------

    def apply_permutation(self, permutation, exempt_names=()):
        """Reorder every non-exempt discrete variable as new[k] = old[perm[k]]."""
        perm = np.asarray(permutation)
        n = self.particle_count
        if perm.shape != (n,):
            raise PermutationError("permutation length does not match particle count")
        if n and (perm.min() < 0 or perm.max() >= n
                  or np.bincount(perm, minlength=n).max() != 1):
            raise PermutationError("permutation is not a bijection on 0..N-1")
        exempt = set(exempt_names)
        for var in self._discrete.values():
            if var.name in exempt:
                continue
            var.data[:] = var.data[perm]
