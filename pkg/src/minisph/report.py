"""Simulation driver, timing/throughput metrics and file outputs.

Interaction counting convention: every directed neighbor visit performed by a
pair-sweep compute kernel (forces for fluid particles, pressure extrapolation
for wall particles) increments the counter by one; the count is exact, never
estimated. GPIPS = interactions / wall seconds / 1e9, using the total
wall-clock time of the run.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field

from . import cases
from .physics import Simulation, SimulationUnstableError, sample_pressure

SNAPSHOT_HEADER_NOTE = ("# interaction count: directed visits, one per "
                        "neighbor per pair-sweep kernel invocation")


class OutputError(RuntimeError):
    pass


@dataclass
class RunReport:
    case: str
    policy: str
    workers: int
    precision: str
    particle_count: int
    fluid_count: int
    step_count: int = 0
    end_time: float = 0.0
    simulated_time: float = 0.0
    interaction_count: int = 0
    wall_seconds: float = 0.0
    gpips: float = 0.0
    phase_seconds: dict = field(default_factory=dict)
    out_of_bounds: int = 0
    aborted: bool = False
    abort_reason: str = ""

    CSV_FIELDS = ("case", "policy", "workers", "precision", "particle_count",
                  "fluid_count", "step_count", "end_time", "simulated_time",
                  "interaction_count", "wall_seconds", "gpips",
                  "time_cll", "time_interactions", "time_integration",
                  "time_sorting", "time_output", "out_of_bounds", "aborted",
                  "abort_reason")

    def csv_row(self):
        row = {k: getattr(self, k) for k in self.CSV_FIELDS
               if not k.startswith("time_")}
        for phase in ("cll", "interactions", "integration", "sorting",
                      "output"):
            row[f"time_{phase}"] = f"{self.phase_seconds.get(phase, 0.0):.6f}"
        row["wall_seconds"] = f"{self.wall_seconds:.6f}"
        row["gpips"] = f"{self.gpips:.9g}"
        row["aborted"] = int(self.aborted)
        return row

    def text(self):
        lines = [
            f"case:            {self.case}",
            f"policy:          {self.policy} (workers={self.workers})",
            f"precision:       {self.precision}",
            f"particles:       {self.particle_count} "
            f"({self.fluid_count} fluid)",
            f"steps:           {self.step_count}",
            f"simulated time:  {self.simulated_time:.6f} s "
            f"of {self.end_time:.6f} s",
            f"wall time:       {self.wall_seconds:.3f} s",
            f"interactions:    {self.interaction_count}",
            f"GPIPS:           {self.gpips:.6g}",
            "phase times (s):",
        ]
        for phase, secs in sorted(self.phase_seconds.items()):
            lines.append(f"  {phase:<13} {secs:.3f}")
        lines.append(f"out-of-bounds clamps: {self.out_of_bounds}")
        if self.aborted:
            lines.append(f"ABORTED: {self.abort_reason}")
        return "\n".join(lines) + "\n"


def compute_gpips(interaction_count, wall_seconds):
    """Giga particle interactions per second."""
    if wall_seconds <= 0.0:
        raise ValueError("wall time must be positive")
    return interaction_count / wall_seconds / 1e9


def build_case(config):
    name = config.case
    if name in ("dambreak2d", "dambreak"):
        return cases.build_case_dambreak(config)
    if name == "dambreak3d-obstacle":
        return cases.build_case_dambreak_3d_obstacle(config)
    if name == "hydrostatic":
        return cases.build_case_dambreak(config)
    raise cases.CaseConfigError(f"unknown case {name!r}")


def _check_output_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write_check")
        with open(probe, "w") as fh:
            fh.write("ok")
        os.remove(probe)
    except OSError as exc:
        raise OutputError(f"output directory {path!r} is not writable: {exc}")


def run_simulation(config, write_files=True, probe_log=None):
    """Advance the configured case to its end time; returns a RunReport."""
    if write_files:
        _check_output_dir(config.out_dir)
    registry, grid = build_case(config)
    sim = Simulation(registry, grid, config.execution_policy(),
                     dt_max=config.dt_max, sort_every=config.sort_every,
                     shepard_every=config.shepard_every,
                     fixed_dt=config.fixed_dt)
    report = RunReport(case=config.case, policy=config.policy,
                       workers=config.workers, precision=config.precision,
                       particle_count=registry.particle_count,
                       fluid_count=cases.fluid_particle_count(registry),
                       end_time=config.end_time)
    snapshot_times = []
    if config.snapshots > 0 and config.end_time > 0:
        snapshot_times = [config.end_time * (k + 1) / config.snapshots
                          for k in range(config.snapshots)]
    probes = list(config.probes)
    probe_rows = []
    output_seconds = 0.0
    t_start = time.perf_counter()
    sim.initialize()
    next_snap = 0
    try:
        while sim.time < config.end_time - 1e-12:
            sim.advance(end_time=config.end_time)
            if probes:
                t0 = time.perf_counter()
                probe_rows.append(
                    [sim.time] + [sample_pressure(registry, p) for p in probes])
                output_seconds += time.perf_counter() - t0
            while (next_snap < len(snapshot_times)
                   and sim.time >= snapshot_times[next_snap] - 1e-12):
                if write_files:
                    t0 = time.perf_counter()
                    write_snapshot(registry, os.path.join(
                        config.out_dir,
                        f"snapshot_{next_snap:04d}.csv"))
                    output_seconds += time.perf_counter() - t0
                next_snap += 1
    except SimulationUnstableError as exc:
        report.aborted = True
        report.abort_reason = str(exc)
    report.wall_seconds = time.perf_counter() - t_start
    report.step_count = sim.step_count
    report.simulated_time = sim.time
    report.interaction_count = sim.interaction_count
    report.out_of_bounds = sim.out_of_bounds
    report.phase_seconds = dict(sim.phase_seconds)
    report.phase_seconds["output"] = output_seconds
    if report.wall_seconds > 0 and report.interaction_count > 0:
        report.gpips = compute_gpips(report.interaction_count,
                                     report.wall_seconds)
    if probe_log is not None:
        probe_log.extend(probe_rows)
    if write_files:
        write_report(report, config)
        if probes:
            write_probe_series(probe_rows, probes,
                               os.path.join(config.out_dir, "probes.csv"))
    return report


# -- file formats (comma-separated, '.' decimal, LF endings) ----------------

def _fmt(value):
    return f"{float(value):.17g}"


def write_snapshot(registry, path):
    """Particle state (id, x, v, rho, p) sorted by original id."""
    ids = registry.view("id")
    order = ids.argsort(kind="stable")
    x = registry.view("x")
    v = registry.view("v")
    rho = registry.view("rho")
    p = registry.view("p")
    d = registry.dim
    cols = (["id"] + [f"x{k}" for k in range(d)] + [f"v{k}" for k in range(d)]
            + ["rho", "p"])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for i in order:
            row = [str(int(ids[i]))]
            row += [_fmt(x[i, k]) for k in range(d)]
            row += [_fmt(v[i, k]) for k in range(d)]
            row += [_fmt(rho[i]), _fmt(p[i])]
            fh.write(",".join(row) + "\n")


def write_probe_series(rows, probes, path):
    with open(path, "w", newline="\n") as fh:
        header = ["time"] + [f"p({','.join(map(str, loc))})" for loc in probes]
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_report(report, config):
    path_csv = os.path.join(config.out_dir, "report.csv")
    with open(path_csv, "w", newline="\n") as fh:
        fh.write(SNAPSHOT_HEADER_NOTE + "\n")
        writer = csv.DictWriter(fh, fieldnames=report.CSV_FIELDS,
                                lineterminator="\n")
        writer.writeheader()
        writer.writerow(report.csv_row())
    with open(os.path.join(config.out_dir, "report.txt"), "w",
              newline="\n") as fh:
        fh.write(report.text())
    return path_csv


def read_report_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(
            line for line in fh if not line.startswith("#"))]
    return rows


def aggregate_reports(report_paths, out_dir):
    """Runtime-vs-particle-count and GPIPS plots over several run reports."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = []
    for path in report_paths:
        rows.extend(read_report_csv(path))
    if not rows:
        raise OutputError("no report rows to aggregate")
    os.makedirs(out_dir, exist_ok=True)
    rows.sort(key=lambda r: int(r["particle_count"]))
    outputs = []
    for metric, ylabel, fname in (("wall_seconds", "runtime (s)",
                                   "runtime_vs_particles.svg"),
                                  ("gpips", "GPIPS", "gpips_comparison.svg")):
        fig, ax = plt.subplots(figsize=(6, 4))
        series = {}
        for r in rows:
            label = f"{r['policy']}/{r['precision']}"
            series.setdefault(label, []).append(
                (int(r["particle_count"]), float(r[metric])))
        for label, pts in sorted(series.items()):
            ax.plot(*zip(*pts), marker="o", label=label)
        ax.set_xlabel("particle count")
        ax.set_ylabel(ylabel)
        ax.legend()
        fig.tight_layout()
        out = os.path.join(out_dir, fname)
        fig.savefig(out)
        plt.close(fig)
        outputs.append(out)
    return outputs
