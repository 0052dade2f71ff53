"""Pinned numerical studies shared by ``msflow verify`` and the test-suite."""

from __future__ import annotations

import time

import numpy as np

from .diagnostics import (circulation, convergence_order, relabelling_invariant, total_energy,
                          total_momentum, xi_from_name)
from .epdiff import ChParams, ch_lagrangian_spec, ch_residual, clebsch_init, momentum_map
from .grid import GridSpec, quadrature
from .integrator import BoxSchemeConfig, discrete_symplecticity_residual, integrate, propagate_tangents
from .mslagrangian import assemble_structure_matrix, check_closedness

TWO_PI = 2 * np.pi


def ch_setup(n, dt, lam=1.0, length=TWO_PI, with_density=False):
    grid = GridSpec(n, length, dt)
    params = ChParams(lam, grid)
    return grid, params, ch_lagrangian_spec(params, with_density=with_density)


def random_ch_states(n_samples, seed=0, scale=1.0, with_density=False):
    rng = np.random.default_rng(seed)
    m = 6 if with_density else 4
    return scale * rng.standard_normal((n_samples, m))


def structure_study(n_samples=100, seed=0, h=1e-4, lam=1.0):
    t0 = time.perf_counter()
    _, _, spec = ch_setup(16, 0.01, lam)
    z = random_ch_states(n_samples, seed)
    k = np.array([assemble_structure_matrix(spec, zi).k for zi in z])
    antisym = float(np.max(np.abs(k + np.swapaxes(k, -1, -2))))
    closed = check_closedness(spec, z, h)
    return {"antisymmetry": antisym, "closedness": closed, "runtime": time.perf_counter() - t0}


def symplecticity_study(n=64, dt=0.01, n_steps=100, lam=1.0, amplitude=0.2, seed=0):
    t0 = time.perf_counter()
    grid, params, spec = ch_setup(n, dt, lam)
    state = clebsch_init(amplitude * np.sin(TWO_PI * grid.x / grid.length), params)
    cfg = BoxSchemeConfig(dt=dt, n_steps=n_steps)
    states = integrate(spec, state, cfg, grid)
    rng = np.random.default_rng(seed)
    tan = propagate_tangents(spec, states, rng.standard_normal((2, spec.n_dep, n)), cfg, grid)
    worst = 0.0
    for k in range(n_steps):
        r = discrete_symplecticity_residual(spec, states[k], states[k + 1], (tan[k][0], tan[k + 1][0]),
                                            (tan[k][1], tan[k + 1][1]), grid, dt)
        worst = max(worst, float(np.max(np.abs(r))))
    return {"max_residual": worst, "runtime": time.perf_counter() - t0}


def seam_flux(state0, state1):
    """Label-flux pi*u averaged over the cell that straddles the periodic seam."""
    pi = [s.periodic("pi") for s in (state0, state1)]
    u = [s.periodic("u") for s in (state0, state1)]
    pbar = 0.25 * sum(p[0] + p[-1] for p in pi)
    ubar = 0.25 * sum(v[0] + v[-1] for v in u)
    return pbar * ubar


def noether_initial(grid):
    """Smooth data with positive momentum m, so the flow stays smooth for long times."""
    x = TWO_PI * grid.x / grid.length
    return 0.4 + 0.1 * np.sin(x) + 0.02 * np.cos(2 * x + 1.0)


def noether_study(n=128, dt=1e-2, n_steps=1000, lam=1.0, a=1.0, b=0.5):
    """Drift of the discrete Noether candidates over a long run.

    ``affine`` is quadrature(pi * (a l + b)); ``affine_seam_corrected`` adds
    back a * L * dt * (seam flux) per step, which accounts for the label
    winding through the periodic seam.
    """
    t0 = time.perf_counter()
    grid, params, spec = ch_setup(n, dt, lam)
    states = integrate(spec, clebsch_init(noether_initial(grid), params), BoxSchemeConfig(dt=dt, n_steps=n_steps), grid)
    dx = grid.dx
    affine = lambda s: quadrature(s.periodic("pi") * (a * s.full("l", grid.x) + b), dx)
    series = {
        "conjugate_momentum": [quadrature(s.periodic("pi"), dx) for s in states],
        "momentum": [total_momentum(s, params) for s in states],
        "clebsch_momentum": [quadrature(momentum_map(s, params), dx) for s in states],
        "affine": [affine(s) for s in states],
    }
    corr = np.concatenate([[0.0], np.cumsum([a * grid.length * dt * seam_flux(s0, s1)
                                             for s0, s1 in zip(states[:-1], states[1:])])])
    series["affine_seam_corrected"] = list(np.array(series["affine"]) + corr)
    drift = {k: float(np.max(np.abs(np.array(v) - v[0]))) for k, v in series.items()}
    return {"drift": drift, "runtime": time.perf_counter() - t0}


def refinement_study(ns=(64, 128, 256), t_end=1.0, dt64=0.01, lam=1.0, amplitude=0.2,
                     rho_amplitude=0.3):
    """Drifts and residuals over [0, t_end] with dt proportional to dx."""
    rows = []
    t0 = time.perf_counter()
    for n in ns:
        dt = dt64 * 64 / n
        steps = int(round(t_end / dt))
        grid, params, spec = ch_setup(n, dt, lam, with_density=True)
        x = TWO_PI * grid.x / grid.length
        state = clebsch_init(amplitude * np.sin(x), params, rho0=1 + rho_amplitude * np.sin(x))
        states = integrate(spec, state, BoxSchemeConfig(dt=dt, n_steps=steps), grid)
        xi = xi_from_name("sin:1", grid.length)
        rel = np.array([relabelling_invariant(s, xi, grid) for s in states])
        en = np.array([total_energy(s, params) for s in states])
        circ = np.array([circulation(s, params) for s in states])
        u = [s.periodic("u") for s in states]
        chres = max(float(np.max(np.abs(ch_residual(u[k - 1], u[k], u[k + 1], params, dt))))
                    for k in range(1, steps))
        rows.append({"n": n, "dx": grid.dx, "dt": dt,
                     "relabelling_sin_drift": float(np.max(np.abs(rel - rel[0]))),
                     "ch_residual": chres,
                     "energy_drift": float(np.max(np.abs(en - en[0]))),
                     "circulation_drift": float(np.max(np.abs(circ - circ[0])))})
    hs = [r["dx"] for r in rows]
    orders = {k: convergence_order(hs, [r[k] for r in rows])
              for k in ("relabelling_sin_drift", "ch_residual", "energy_drift", "circulation_drift")}
    ratios = {k: [rows[i][k] / rows[i + 1][k] for i in range(len(rows) - 1)] for k in orders}
    return {"rows": rows, "orders": orders, "ratios": ratios, "runtime": time.perf_counter() - t0}
