"""Run a configured simulation and write snapshots, diagnostics and a manifest.

Layout of a run directory::

    <out>/<run-id>/snapshots/NNNNNN.csv   (NNNNNN = step index)
    <out>/<run-id>/diag/<name>.csv        (columns t,value)
    <out>/<run-id>/diag/summary.json
    <out>/<run-id>/manifest.json

Nothing time- or host-dependent is written, so identical configs give
bit-identical directories.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .config import RunConfig
from .diagnostics import compute_series
from .epdiff import (ChParams, bump_initial, ch_lagrangian_spec, clebsch_init, peakon_initial,
                     sine_initial)
from .grid import GridSpec, state_from_csv, state_to_csv
from .integrator import BoxScheme, BoxSchemeConfig, NewtonDivergence, step
from .remap import remap_to_identity, tangling_metric


class MissingSnapshots(FileNotFoundError):
    pass


class RunDiverged(RuntimeError):
    def __init__(self, message, step_index, run_dir):
        super().__init__(message)
        self.step_index = step_index
        self.run_dir = run_dir


@dataclass
class RunResult:
    run_dir: Path
    manifest: dict


def setup(cfg: RunConfig):
    g = cfg.grid
    grid = GridSpec(g.n_cells, g.length, g.dt)
    params = ChParams(cfg.params.lam, grid)
    spec = ch_lagrangian_spec(params, with_density=cfg.with_density)
    init = cfg.init
    center = 0.5 * grid.length
    if init.type == "zero":
        u0 = np.zeros(grid.n_cells)
    elif init.type == "sine":
        u0 = init.offset + sine_initial(init.amplitude, params, init.wavenumber)
    elif init.type == "bump":
        u0 = bump_initial(init.amplitude, center if init.x0 is None else init.x0, init.width, params)
    else:
        u0 = peakon_initial(init.c, center if init.x0 is None else init.x0, params)
    rho0 = None
    if init.density is not None:
        d = init.density
        rho0 = 1.0 + d.amplitude * np.sin(2 * np.pi * d.wavenumber * grid.x / grid.length)
    state = clebsch_init(u0, params, with_density=cfg.with_density, rho0=rho0)
    return grid, params, spec, state


def snapshot_name(step_index: int) -> str:
    return f"{step_index:06d}.csv"


def diag_filename(name: str) -> str:
    return name.replace(":", "_") + ".csv"


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(cfg: RunConfig, out_root="out") -> RunResult:
    grid, params, spec, state = setup(cfg)
    digest = cfg.content_hash()
    run_dir = Path(out_root) / digest[:16]
    snap_dir = run_dir / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    for old in snap_dir.glob("*.csv"):
        old.unlink()

    icfg = cfg.integrator
    bcfg = BoxSchemeConfig(dt=grid.dt, n_steps=cfg.grid.n_steps, newton_tol=icfg.newton_tol,
                           newton_max_iter=icfg.newton_max_iter, jacobian_mode=icfg.jacobian_mode,
                           time_quadrature=icfg.time_quadrature)
    scheme = BoxScheme(spec, grid, grid.dt, icfg.time_quadrature)
    snapshots, remaps = [], []
    failure = None

    def save(k, s):
        state_to_csv(s, grid, snap_dir / snapshot_name(k))
        snapshots.append({"file": snapshot_name(k), "step": k, "t": k * grid.dt})

    save(0, state)
    for k in range(1, cfg.grid.n_steps + 1):
        try:
            state = step(spec, state, bcfg, grid, scheme=scheme)
        except NewtonDivergence as exc:
            exc.step_index = k
            failure = {"type": "NewtonDivergence", "step": k, "message": str(exc),
                       "residual_history": exc.history}
            break
        state.t = k * grid.dt
        if cfg.remap.enabled:
            before = tangling_metric(state, grid)
            if before < cfg.remap.threshold:
                state = remap_to_identity(state, grid)
                remaps.append({"step": k, "t": state.t, "tangling_before": before,
                               "tangling_after": tangling_metric(state, grid)})
        if k % icfg.snapshot_stride == 0 or k == cfg.grid.n_steps:
            save(k, state)

    manifest = {
        "run_id": digest[:16],
        "config_hash": digest,
        "config": cfg.canonical(),
        "version": __version__,
        "model": cfg.model,
        "variables": list(spec.var_names),
        "winding": [float(w) for w in spec.winding],
        "snapshots": snapshots,
        "remap_events": remaps,
        "diagnostics": list(cfg.diagnostics),
        "status": "diverged" if failure else "completed",
    }
    if failure:
        manifest["failure"] = failure
    _write_json(run_dir / "manifest.json", manifest)
    if len(snapshots) >= 1 and cfg.diagnostics:
        diagnose(run_dir, cfg.diagnostics)
    if failure:
        raise RunDiverged(f"step {failure['step']}: {failure['message']}",
                          failure["step"], run_dir)
    return RunResult(run_dir, manifest)


def load_run(run_dir):
    """Manifest, config, params and snapshot states of a stored run."""
    from .config import parse_config

    run_dir = Path(run_dir)
    mpath = run_dir / "manifest.json"
    if not mpath.is_file():
        raise MissingSnapshots(f"no manifest in {run_dir}")
    with open(mpath) as fh:
        manifest = json.load(fh)
    cfg = parse_config(manifest["config"])
    grid, params, _, _ = setup(cfg)
    entries = manifest.get("snapshots", [])
    if not entries:
        raise MissingSnapshots(f"manifest of {run_dir} lists no snapshots")
    states = []
    for e in entries:
        path = run_dir / "snapshots" / e["file"]
        if not path.is_file():
            raise MissingSnapshots(f"missing snapshot {path}")
        states.append(state_from_csv(path, manifest["variables"], manifest["winding"], e["t"]))
    return manifest, cfg, params, states


def diagnose(run_dir, names: Sequence[str]) -> List[Path]:
    """Recompute the named diagnostics from stored snapshots; returns written paths."""
    manifest, cfg, params, states = load_run(run_dir)
    diag_dir = Path(run_dir) / "diag"
    diag_dir.mkdir(exist_ok=True)
    series, written = [], []
    for name in names:
        s = compute_series(name, states, params)
        path = diag_dir / diag_filename(name)
        s.to_csv(path)
        series.append(s)
        written.append(path)
    summary = diag_dir / "summary.json"
    existing = {}
    if summary.is_file():
        with open(summary) as fh:
            existing = {d["name"]: d for d in json.load(fh).get("series", [])}
    for s in series:
        existing[s.name] = s.summary()
    _write_json(summary, {"series": [existing[k] for k in sorted(existing)]})
    written.append(summary)
    return written


def thread_cap() -> Optional[int]:
    """Worker cap from MSFLOW_THREADS (None when unset)."""
    val = os.environ.get("MSFLOW_THREADS")
    if val is None or val == "":
        return None
    n = int(val)
    if n < 1:
        raise ValueError("MSFLOW_THREADS must be a positive integer")
    return n
