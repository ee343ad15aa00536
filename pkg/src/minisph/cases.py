"""Benchmark case setup: particle placement, registries and grids.

Geometry is lattice-based: fluid sites at half-spacing offsets inside the
water column, dummy wall particles in ``layers`` lattice shells outside the
tank interior (open top), all anchored to one global lattice so spacing stays
uniform across the fluid/wall interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .execution import ExecutionPolicy
from .neighborhood import UniformGrid
from .physics import eos_density, setup_state_variables
from .variables import VariableRegistry


class CaseConfigError(ValueError):
    pass


@dataclass
class CaseConfig:
    case: str = "dambreak2d"
    dim: int = 2
    tank: tuple = (5.366, 5.366)            # inner tank extents (m)
    column: tuple = (2.0, 1.0)              # water column extents (m)
    column_offset: tuple = None             # lower corner, default tank corner
    obstacle_origin: tuple = None           # lower corner of box obstacle (m)
    obstacle_size: tuple = None
    dp: float = 0.025                       # particle spacing (m)
    h_ratio: float = 1.3                    # smoothing length / dp
    gravity: float = 9.81                   # magnitude (m/s^2), down = -last axis
    rho0: float = 1000.0
    alpha_visc: float = 0.02
    sound_speed_factor: float = 10.0        # c0 = factor*sqrt(2 g H)
    sound_speed_override: float = None      # explicit c0 (needed when g = 0)
    end_time: float = 1.0
    policy: str = "seq"                     # seq | par | device
    workers: int = 4
    precision: str = "f64"                  # f32 | f64
    sort_every: int = 100
    shepard_every: int = 200
    dt_max: float = 1e-3
    fixed_dt: float = None
    hydrostatic_init: bool = False
    out_dir: str = "out"
    snapshots: int = 4
    report_format: str = "text"             # text | csv
    probes: tuple = ()                      # probe locations
    citation: str = ""

    @property
    def h(self):
        return self.h_ratio * self.dp

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def execution_policy(self):
        if self.policy == "seq":
            return ExecutionPolicy.sequenced()
        if self.policy == "par":
            return ExecutionPolicy.parallel(self.workers)
        if self.policy == "device":
            return ExecutionPolicy.parallel_device(self.workers)
        raise CaseConfigError(f"unknown policy {self.policy!r}")

    def sound_speed(self):
        if self.sound_speed_override is not None:
            return self.sound_speed_override
        height = self.column[-1]
        c0 = self.sound_speed_factor * math.sqrt(2.0 * self.gravity * height)
        if c0 <= 0.0:
            raise CaseConfigError(
                "sound speed is zero (g = 0?); set sound_speed_override")
        return c0


_TUPLE_KEYS = {"tank", "column", "column_offset", "obstacle_origin",
               "obstacle_size"}
_FLOAT_KEYS = {"dp", "h_ratio", "gravity", "rho0", "alpha_visc", "end_time",
               "dt_max", "fixed_dt", "sound_speed_factor",
               "sound_speed_override"}
_INT_KEYS = {"dim", "workers", "sort_every", "shepard_every", "snapshots"}
_BOOL_KEYS = {"hydrostatic_init"}


def parse_config_text(text):
    """Parse flat ``key = value`` lines into a CaseConfig field dict."""
    fields = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CaseConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _TUPLE_KEYS:
            fields[key] = tuple(float(v) for v in value.split(","))
        elif key in _FLOAT_KEYS:
            fields[key] = float(value)
        elif key in _INT_KEYS:
            fields[key] = int(value)
        elif key in _BOOL_KEYS:
            fields[key] = value.lower() in ("1", "true", "yes", "on")
        elif key == "probes":
            pts = [p for p in value.split(";") if p.strip()]
            fields[key] = tuple(tuple(float(v) for v in p.split(","))
                                for p in pts)
        else:
            fields[key] = value
    return fields


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        fields = parse_config_text(fh.read())
    return CaseConfig(**fields)


# -- lattice placement ------------------------------------------------------

def _axis_count(extent, dp):
    return max(0, int(round(extent / dp)))


def _lattice(index_ranges, dp, anchor):
    """Cartesian lattice positions anchor + (i + 0.5) dp over index ranges."""
    axes = [np.arange(lo, hi) for lo, hi in index_ranges]
    if any(a.size == 0 for a in axes):
        return np.zeros((0, len(axes)))
    mesh = np.meshgrid(*axes, indexing="ij")
    idx = np.stack([m.ravel() for m in mesh], axis=1).astype(np.float64)
    return anchor + (idx + 0.5) * dp


def _tank_wall_points(tank, dp, layers):
    """Dummy wall sites: ``layers`` shells below/around the tank, open top."""
    d = len(tank)
    counts = [_axis_count(e, dp) for e in tank]
    ranges = []
    for k in range(d):
        hi = counts[k] if k == d - 1 else counts[k] + layers
        ranges.append((-layers, hi))
    pts = _lattice(ranges, dp, np.zeros(d))
    idx = np.round(pts / dp - 0.5).astype(np.int64)
    outside = (idx < 0).any(axis=1)
    for k in range(d - 1):
        outside |= idx[:, k] >= counts[k]
    return pts[outside]


def _box_points(origin, size, dp):
    counts = [_axis_count(e, dp) for e in size]
    return _lattice([(0, c) for c in counts], dp, np.asarray(origin, float))


def wall_layer_count(cfg):
    return int(math.ceil(2.0 * cfg.h / cfg.dp))


def _build_registry(cfg, fluid, wall_pts):
    nf, nw = fluid.shape[0], wall_pts.shape[0]
    reg = VariableRegistry(nf + nw, cfg.dim, dtype=cfg.dtype)
    setup_state_variables(reg)
    x = reg.view("x")
    x[:nf] = fluid
    x[nf:] = wall_pts
    reg.view("wall")[nf:] = 1
    rho0 = cfg.rho0
    c0 = cfg.sound_speed()
    reg.view("rho")[:] = rho0
    reg.view("m")[:] = rho0 * cfg.dp ** cfg.dim
    reg.view("Vol")[:] = cfg.dp ** cfg.dim
    if cfg.hydrostatic_init and nf:
        top = float(fluid[:, -1].max()) + 0.5 * cfg.dp
        depth = np.maximum(0.0, top - fluid[:, -1])
        p0 = rho0 * cfg.gravity * depth
        reg.view("p")[:nf] = p0
        reg.view("rho")[:nf] = eos_density(p0, rho0, c0)
    g = np.zeros(cfg.dim)
    g[-1] = -cfg.gravity
    reg.register_singular("rho0", rho0)
    reg.register_singular("c0", c0)
    reg.register_singular("h", cfg.h)
    reg.register_singular("dp", cfg.dp)
    reg.register_singular("alpha_visc", cfg.alpha_visc)
    reg.register_singular("g", g)
    return reg


def _build_grid(cfg, layers, headroom_cells=2):
    pad = layers * cfg.dp
    lower = np.full(cfg.dim, -pad)
    upper = np.asarray(cfg.tank, float).copy()
    upper[:-1] += pad
    cutoff = 2.0 * cfg.h
    upper[-1] += headroom_cells * cutoff   # room for splash above the tank
    return UniformGrid.from_bounds(lower, upper, cutoff)


def _check_resolution(cfg):
    for extent in cfg.column:
        if _axis_count(extent, cfg.dp) < 4:
            raise CaseConfigError(
                f"dp={cfg.dp} leaves fewer than 4 particles across the column")
    if len(cfg.tank) != cfg.dim or len(cfg.column) != cfg.dim:
        raise CaseConfigError("tank/column extents must match the dimension")


def build_case_dambreak(cfg):
    """Water column at the tank corner; returns (registry, grid)."""
    _check_resolution(cfg)
    offset = cfg.column_offset or (0.0,) * cfg.dim
    col_lo = np.asarray(offset, float)
    ranges = []
    for k in range(cfg.dim):
        start = int(round(col_lo[k] / cfg.dp))
        ranges.append((start, start + _axis_count(cfg.column[k], cfg.dp)))
    fluid = _lattice(ranges, cfg.dp, np.zeros(cfg.dim))
    layers = wall_layer_count(cfg)
    walls = _tank_wall_points(cfg.tank, cfg.dp, layers)
    if cfg.obstacle_origin is not None:
        obstacle = _box_points(cfg.obstacle_origin, cfg.obstacle_size, cfg.dp)
        inside = np.ones(fluid.shape[0], bool)
        lo = np.asarray(cfg.obstacle_origin)
        hi = lo + np.asarray(cfg.obstacle_size)
        inside = ((fluid > lo) & (fluid < hi)).all(axis=1)
        fluid = fluid[~inside]
        walls = np.vstack([walls, obstacle])
    reg = _build_registry(cfg, fluid, walls)
    return reg, _build_grid(cfg, layers)


def build_case_dambreak_2d(cfg=None):
    cfg = cfg or CaseConfig()
    return build_case_dambreak(cfg)


def build_case_hydrostatic(cfg=None):
    if cfg is None:
        cfg = CaseConfig(case="hydrostatic", tank=(1.0, 1.2),
                         column=(1.0, 1.0), dp=0.02, hydrostatic_init=True,
                         probes=((0.5, 0.75), (0.5, 0.5), (0.5, 0.25)))
    return build_case_dambreak(cfg)


def build_case_dambreak_3d_obstacle(cfg):
    """The dam-break-with-obstacle replica; geometry comes from the case
    config file (see data/kleefsman.cfg), not from constants here."""
    if cfg.obstacle_origin is None or cfg.obstacle_size is None:
        raise CaseConfigError("3D obstacle case requires obstacle geometry")
    return build_case_dambreak(cfg)


def fluid_particle_count(registry):
    return int((registry.view("wall") == 0).sum())
