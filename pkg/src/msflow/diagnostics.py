"""Conservation-law diagnostics for EPDiff/Camassa-Holm trajectories.

Densities and fluxes are evaluated on node values with the same centred
differences as the rest of the package.  ``m`` is always the Helmholtz
momentum u - lam^2 D2 u unless a Clebsch state is used explicitly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .epdiff import ChParams, momentum_map
from .grid import StateField, central_diff, helmholtz_apply, quadrature, write_csv

BEHAVIORS = ("conserved-exact", "conserved-to-order", "residual-to-zero")


class MissingDensity(ValueError):
    pass


class NonpositiveDensity(ValueError):
    pass


@dataclass
class DiagnosticSeries:
    name: str
    times: np.ndarray
    values: np.ndarray
    expected_behavior: str = "conserved-to-order"
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1D arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.expected_behavior not in BEHAVIORS:
            raise ValueError(f"unknown expected_behavior {self.expected_behavior!r}")

    def drift(self) -> np.ndarray:
        return self.values - self.values[0]

    def max_drift(self) -> float:
        if self.expected_behavior == "residual-to-zero":
            return float(np.max(np.abs(self.values)))
        return float(np.max(np.abs(self.drift())))

    def to_csv(self, path):
        write_csv(path, {"t": self.times, "value": self.values})

    def summary(self) -> dict:
        out = {"name": self.name, "expected_behavior": self.expected_behavior,
               "max_drift": self.max_drift(), "n_samples": int(self.times.size)}
        out.update(self.meta)
        return out


def convergence_order(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if h.size < 2 or np.any(h <= 0) or np.any(err <= 0):
        raise ValueError("need at least two positive (h, err) pairs")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def write_summary(path, series: Sequence[DiagnosticSeries], orders: Optional[dict] = None):
    doc = {"series": [s.summary() for s in series]}
    if orders:
        doc["convergence_orders"] = orders
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def time_derivative(values, dt):
    """Centred differences along axis 0; second-order one-sided at the ends."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 3:
        raise ValueError("need at least three time levels")
    return np.gradient(values, dt, axis=0, edge_order=2)


# -- local conservation laws --------------------------------------------

def energy_density_and_flux(state: StateField, u_t, params: ChParams):
    """density = u m - u^2/2 - lam^2 u_x^2 / 2,  flux = lam^2 u_x u_t + u^2 m."""
    dx = params.grid.dx
    lam2 = params.lam**2
    u = state.periodic("u")
    m = helmholtz_apply(u, params.lam, dx)
    ux = central_diff(u, dx)
    dens = u * m - 0.5 * u**2 - 0.5 * lam2 * ux**2
    flux = lam2 * ux * np.asarray(u_t, dtype=float) + u**2 * m
    return dens, flux


def momentum_density_and_flux(state: StateField, params: ChParams):
    """density = m,  flux = u m + u^2/2 - lam^2 u_x^2 / 2, so that m_t + flux_x = 0."""
    dx = params.grid.dx
    u = state.periodic("u")
    m = helmholtz_apply(u, params.lam, dx)
    ux = central_diff(u, dx)
    flux = u * m + 0.5 * u**2 - 0.5 * params.lam**2 * ux**2
    return m, flux


def total_energy(state: StateField, params: ChParams) -> float:
    dens, _ = energy_density_and_flux(state, np.zeros(state.n_cells), params)
    return quadrature(dens, params.grid.dx)


def total_momentum(state: StateField, params: ChParams) -> float:
    return quadrature(momentum_density_and_flux(state, params)[0], params.grid.dx)


# -- relabelling invariants and circulation -----------------------------

def xi_from_name(name: str, length: float) -> Callable:
    """Label functions from the registry: const, linear, sin:k, tanh:a."""
    kind, _, arg = name.partition(":")
    if kind == "const" and not arg:
        return lambda l: np.ones_like(l)
    if kind == "linear" and not arg:
        return lambda l: np.array(l, dtype=float)
    try:
        val = float(arg)
    except ValueError:
        raise ValueError(f"unknown label function {name!r}") from None
    if kind == "sin":
        return lambda l: np.sin(2 * np.pi * val * np.asarray(l) / length)
    if kind == "tanh":
        # periodic in the label so the invariant is defined on the circle
        return lambda l: np.tanh(val * np.sin(2 * np.pi * np.asarray(l) / length))
    raise ValueError(f"unknown label function {name!r}")


def relabelling_invariant(state: StateField, xi: Callable, grid) -> float:
    """quadrature(pi * xi(l)) with l the full label value."""
    l = state.full("l", grid.x)
    return quadrature(state.periodic("pi") * xi(l), grid.dx)


def circulation(state: StateField, params: ChParams) -> float:
    """Whole-domain loop integral of m / rho with m the Clebsch momentum map."""
    if "rho" not in state.names:
        raise MissingDensity("state carries no density")
    rho = state.periodic("rho")
    if np.any(rho <= 0):
        raise NonpositiveDensity("density must be positive everywhere")
    return quadrature(momentum_map(state, params) / rho, params.grid.dx)


# -- 2D vorticity identity --------------------------------------------------

def _d(f, axis, h):
    """Central difference of a closed-form evaluator f(x, y, t) along one axis."""
    def g(x, y, t):
        e = [0.0, 0.0, 0.0]
        e[axis] = h
        return (f(x + e[0], y + e[1], t + e[2]) - f(x - e[0], y - e[1], t - e[2])) / (2 * h)
    return g


def helmholtz_momentum_2d(u: Sequence[Callable], lam: float, h: float):
    """m_i = u_i - lam^2 (u_i,xx + u_i,yy) by nested central differences."""
    def make(ui):
        uxx = _d(_d(ui, 0, h), 0, h)
        uyy = _d(_d(ui, 1, h), 1, h)
        return lambda x, y, t: ui(x, y, t) - lam**2 * (uxx(x, y, t) + uyy(x, y, t))
    return [make(ui) for ui in u]


def momentum_residual_2d(u: Sequence[Callable], m: Optional[Sequence[Callable]], lam: float, h: float):
    """Evaluators of M_i = m_i,t - (lam^2 u_k,i u_k,j - u_j m_i - delta_ij e)_,j."""
    if m is None:
        m = helmholtz_momentum_2d(u, lam, h)
    du = [[_d(uk, a, h) for a in (0, 1)] for uk in u]

    def energy(x, y, t):
        s = 0.0
        for k in range(2):
            s = s + 0.5 * u[k](x, y, t) ** 2
            for a in range(2):
                s = s + 0.5 * lam**2 * du[k][a](x, y, t) ** 2
        return s

    def make(i):
        def flux(j):
            def f(x, y, t):
                v = sum(lam**2 * du[k][i](x, y, t) * du[k][j](x, y, t) for k in range(2))
                v = v - u[j](x, y, t) * m[i](x, y, t)
                if i == j:
                    v = v - energy(x, y, t)
                return v
            return f
        mt = _d(m[i], 2, h)
        divs = [_d(flux(j), j, h) for j in (0, 1)]
        return lambda x, y, t: mt(x, y, t) - divs[0](x, y, t) - divs[1](x, y, t)

    return [make(0), make(1)]


def vorticity_residual_2d(u: Sequence[Callable], m: Optional[Sequence[Callable]], lam: float,
                          h: float, x, y, t, r: int = 0, s: int = 1):
    """(m_r,s - m_s,r)_,t + (lam^2 (u_i,s u_i,jr - u_i,r u_i,js) + (u_j m_r)_,s - (u_j m_s)_,r)_,j.

    ``u`` and ``m`` are lists of two evaluators f(x, y, t) (``m=None`` uses the
    Helmholtz momentum); every derivative is a central difference with step h.
    """
    if m is None:
        m = helmholtz_momentum_2d(u, lam, h)
    du = [[_d(ui, a, h) for a in (0, 1)] for ui in u]
    ddu = [[[_d(du[i][a], b, h) for b in (0, 1)] for a in (0, 1)] for i in range(2)]
    curl_m = lambda X, Y, T: _d(m[r], s, h)(X, Y, T) - _d(m[s], r, h)(X, Y, T)

    def flux(j):
        def f(X, Y, T):
            v = sum(lam**2 * (du[i][s](X, Y, T) * ddu[i][j][r](X, Y, T)
                              - du[i][r](X, Y, T) * ddu[i][j][s](X, Y, T)) for i in range(2))
            um_r = lambda a, b, c: u[j](a, b, c) * m[r](a, b, c)
            um_s = lambda a, b, c: u[j](a, b, c) * m[s](a, b, c)
            return v + _d(um_r, s, h)(X, Y, T) - _d(um_s, r, h)(X, Y, T)
        return f

    return (_d(curl_m, 2, h)(x, y, t)
            + _d(flux(0), 0, h)(x, y, t) + _d(flux(1), 1, h)(x, y, t))


# -- series from trajectories ---------------------------------------------

def compute_series(name: str, states: Sequence[StateField], params: ChParams) -> DiagnosticSeries:
    """Named diagnostic along a stored trajectory.

    Names: energy, momentum, conjugate_momentum, clebsch_momentum,
    circulation, relabelling:<xi> with <xi> from the label-function registry.
    """
    grid = params.grid
    times = np.array([s.t for s in states])
    if name == "energy":
        vals = [total_energy(s, params) for s in states]
        return DiagnosticSeries(name, times, vals, "conserved-to-order")
    if name == "momentum":
        vals = [total_momentum(s, params) for s in states]
        return DiagnosticSeries(name, times, vals, "conserved-to-order")
    if name == "clebsch_momentum":
        vals = [quadrature(momentum_map(s, params), grid.dx) for s in states]
        return DiagnosticSeries(name, times, vals, "conserved-to-order")
    if name == "conjugate_momentum":
        vals = [quadrature(s.periodic("pi"), grid.dx) for s in states]
        return DiagnosticSeries(name, times, vals, "conserved-exact")
    if name == "circulation":
        vals = [circulation(s, params) for s in states]
        return DiagnosticSeries(name, times, vals, "conserved-to-order")
    if name.startswith("relabelling:"):
        key = name.split(":", 1)[1]
        xi = xi_from_name(key, grid.length)
        vals = [relabelling_invariant(s, xi, grid) for s in states]
        exact = "conserved-exact" if key == "const" else "conserved-to-order"
        return DiagnosticSeries(name, times, vals, exact, {"xi": key})
    raise ValueError(f"unknown diagnostic {name!r}")
