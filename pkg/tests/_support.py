"""Shared helpers for the test suite: small registries, grids and clouds."""

import numpy as np

from minisph.neighborhood import UniformGrid
from minisph.physics import setup_state_variables
from minisph.variables import VariableRegistry

# pass/fail lines collected by the acceptance tests; printed by conftest in
# the terminal summary so they survive pytest's output capturing
ACCEPTANCE_RESULTS = []


def make_cloud_registry(positions, dp=0.05, h_ratio=1.3, c0=20.0, rho0=1000.0,
                        alpha_visc=0.02, gravity=None, velocities=None,
                        dtype=np.float64):
    """Registry for a free cloud of fluid particles (no walls)."""
    positions = np.asarray(positions, dtype=np.float64)
    n, d = positions.shape
    reg = VariableRegistry(n, d, dtype=dtype)
    setup_state_variables(reg)
    reg.view("x")[:] = positions
    if velocities is not None:
        reg.view("v")[:] = velocities
    reg.view("rho")[:] = rho0
    reg.view("m")[:] = rho0 * dp ** d
    reg.register_singular("rho0", rho0)
    reg.register_singular("c0", c0)
    reg.register_singular("h", h_ratio * dp)
    reg.register_singular("dp", dp)
    reg.register_singular("alpha_visc", alpha_visc)
    if gravity is None:
        gravity = np.zeros(d)
    reg.register_singular("g", np.asarray(gravity, dtype=np.float64))
    return reg


def grid_around(positions, cell_size, pad=0.0):
    positions = np.asarray(positions, dtype=np.float64)
    return UniformGrid.from_bounds(positions.min(axis=0) - pad,
                                   positions.max(axis=0) + pad, cell_size)


def lattice_positions(counts, dp, origin=0.0):
    """Cartesian lattice of ``counts`` sites per axis at spacing ``dp``."""
    axes = [np.arange(c) for c in counts]
    mesh = np.meshgrid(*axes, indexing="ij")
    idx = np.stack([m.ravel() for m in mesh], axis=1).astype(np.float64)
    return origin + (idx + 0.5) * dp


def random_cloud(rng, n, dim, target_neighbors=12.0):
    """Uniform points in the unit box plus a cutoff sized so the expected
    neighbor count is ``target_neighbors`` (well under buffer capacity)."""
    pts = rng.random((n, dim))
    if dim == 2:
        cutoff = np.sqrt(target_neighbors / (np.pi * n))
    else:
        cutoff = (3.0 * target_neighbors / (4.0 * np.pi * n)) ** (1.0 / 3.0)
    return pts, float(cutoff)
