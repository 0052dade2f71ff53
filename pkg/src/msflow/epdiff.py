"""EPDiff(H1) / Camassa-Holm in back-to-labels variables.

Variable order is (u, l, pi, W), optionally followed by (rho, phi) when a
passive density is carried.  In one dimension W is the single component
standing in for u_x, and labels have winding 1 (l = x + periodic offset).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import GridSpec, StateField, central_diff, helmholtz_apply
from .mslagrangian import AffineLagrangianSpec

CH_VARS = ("u", "l", "pi", "W")
CH_DENSITY_VARS = CH_VARS + ("rho", "phi")
U, L, P, W, RHO, PHI = range(6)


@dataclass(frozen=True)
class ChParams:
    lam: float
    grid: GridSpec

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


class ChState(StateField):
    """StateField with named accessors; ``l`` needs the grid for x."""

    @property
    def u(self):
        return self.periodic("u")

    @property
    def pi(self):
        return self.periodic("pi")

    @property
    def W(self):
        return self.periodic("W")

    @property
    def label_offset(self):
        return self.periodic("l")

    @property
    def rho(self) -> Optional[np.ndarray]:
        return self.periodic("rho") if "rho" in self.names else None

    def labels(self, x):
        return self.full("l", x)

    @classmethod
    def from_field(cls, field: StateField) -> "ChState":
        return cls(field.names, field.data, field.t, field.winding)


def ch_lagrangian_spec(params: ChParams, with_density: bool = False) -> AffineLagrangianSpec:
    """Affine Lagrangian
    L = u^2/2 - lam^2 W^2/2 + lam^2 W u_x + pi (l_t + u l_x) [+ phi (rho_t + (rho u)_x)].

    Space coefficients L^x = (lam^2 W [+ phi rho], pi u, 0, 0 [, phi u, 0]),
    time coefficients L^t = (0, pi, 0, 0 [, phi, 0]).
    """
    lam2 = params.lam**2
    m = 6 if with_density else 4

    def coeff(z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape[:-1] + (2, m))
        out[..., 0, U] = lam2 * z[..., W]
        out[..., 0, L] = z[..., P] * z[..., U]
        out[..., 1, L] = z[..., P]
        if with_density:
            out[..., 0, U] += z[..., PHI] * z[..., RHO]
            out[..., 0, RHO] = z[..., PHI] * z[..., U]
            out[..., 1, RHO] = z[..., PHI]
        return out

    def coeff_grad(z):
        z = np.asarray(z, dtype=float)
        g = np.zeros(z.shape[:-1] + (2, m, m))
        g[..., 0, U, W] = lam2
        g[..., 0, L, U] = z[..., P]
        g[..., 0, L, P] = z[..., U]
        g[..., 1, L, P] = 1.0
        if with_density:
            g[..., 0, U, RHO] = z[..., PHI]
            g[..., 0, U, PHI] = z[..., RHO]
            g[..., 0, RHO, U] = z[..., PHI]
            g[..., 0, RHO, PHI] = z[..., U]
            g[..., 1, RHO, PHI] = 1.0
        return g

    hess0 = np.zeros((2, m, m, m))
    hess0[0, L, U, P] = hess0[0, L, P, U] = 1.0
    if with_density:
        hess0[0, U, RHO, PHI] = hess0[0, U, PHI, RHO] = 1.0
        hess0[0, RHO, U, PHI] = hess0[0, RHO, PHI, U] = 1.0

    def coeff_hess(z):
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(hess0, z.shape[:-1] + hess0.shape).copy()

    def hamiltonian(z):
        z = np.asarray(z, dtype=float)
        return -(0.5 * z[..., U] ** 2 - 0.5 * lam2 * z[..., W] ** 2)

    def hamiltonian_grad(z):
        z = np.asarray(z, dtype=float)
        g = np.zeros(z.shape)
        g[..., U] = -z[..., U]
        g[..., W] = lam2 * z[..., W]
        return g

    h0 = np.zeros((m, m))
    h0[U, U] = -1.0
    h0[W, W] = lam2

    def hamiltonian_hess(z):
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(h0, z.shape[:-1] + h0.shape).copy()

    winding = np.zeros(m)
    winding[L] = 1.0
    return AffineLagrangianSpec(
        n_dep=m, n_indep=2, coeff=coeff, coeff_grad=coeff_grad,
        hamiltonian=hamiltonian, hamiltonian_grad=hamiltonian_grad,
        coeff_hess=coeff_hess, hamiltonian_hess=hamiltonian_hess,
        var_names=CH_DENSITY_VARS if with_density else CH_VARS,
        winding=winding, name="ch-density" if with_density else "ch",
    )


def label_gradient(state: StateField, dx):
    """Centred difference of the labels; exactly 1 on the identity chart."""
    return 1.0 + central_diff(state.periodic("l"), dx)


def momentum_map(state: StateField, params: ChParams):
    """m = -pi * l_x."""
    return -state.periodic("pi") * label_gradient(state, params.grid.dx)


def clebsch_init(u0, params: ChParams, with_density: bool = False, rho0=None, t: float = 0.0) -> ChState:
    """Identity labels, W = D u0, pi = -(1 - lam^2 D2) u0."""
    u0 = np.asarray(u0, dtype=float)
    dx = params.grid.dx
    n = params.grid.n_cells
    if u0.shape != (n,):
        raise ValueError(f"u0 must have length {n}")
    rows = [u0, np.zeros(n), -helmholtz_apply(u0, params.lam, dx), central_diff(u0, dx)]
    names = CH_VARS
    if with_density or rho0 is not None:
        rho = np.ones(n) if rho0 is None else np.asarray(rho0, dtype=float)
        if np.any(rho <= 0):
            raise ValueError("density must be positive")
        rows += [rho, np.zeros(n)]
        names = CH_DENSITY_VARS
    winding = [1.0 if nm == "l" else 0.0 for nm in names]
    return ChState(names, np.array(rows), t, winding)


def ch_residual(u_prev, u_curr, u_next, params: ChParams, dt: float):
    """Pointwise m_t + u m_x + 2 m u_x, m = u - lam^2 u_xx, centred in space and time."""
    dx = params.grid.dx
    lam = params.lam
    m_prev = helmholtz_apply(u_prev, lam, dx)
    m_next = helmholtz_apply(u_next, lam, dx)
    m = helmholtz_apply(u_curr, lam, dx)
    m_t = (m_next - m_prev) / (2 * dt)
    return m_t + u_curr * central_diff(m, dx) + 2 * m * central_diff(u_curr, dx)


def periodic_distance(x, x0, length):
    d = np.mod(np.asarray(x, dtype=float) - x0, length)
    return np.minimum(d, length - d)


def peakon_initial(c: float, x0: float, params: ChParams):
    if c == 0:
        raise ValueError("peakon speed must be non-zero")
    g = params.grid
    return c * np.exp(-periodic_distance(g.x, x0, g.length) / params.lam)


def sine_initial(amplitude: float, params: ChParams, wavenumber: int = 1):
    g = params.grid
    return amplitude * np.sin(2 * np.pi * wavenumber * g.x / g.length)


def bump_initial(amplitude: float, x0: float, width: float, params: ChParams):
    """Smooth periodic Gaussian bump."""
    g = params.grid
    return amplitude * np.exp(-(periodic_distance(g.x, x0, g.length) / width) ** 2)


def ch_energy(u, params: ChParams):
    """Discrete H1 energy (1/2) sum(u m) dx; the CH Hamiltonian."""
    dx = params.grid.dx
    return 0.5 * dx * float(np.sum(u * helmholtz_apply(u, params.lam, dx)))


def w_consistency(u, W, dx):
    """W - D u, the defect of the auxiliary-variable constraint."""
    return W - central_diff(u, dx)


__all__ = [
    "ChParams", "ChState", "ch_lagrangian_spec", "momentum_map", "clebsch_init", "ch_residual",
    "peakon_initial", "sine_initial", "bump_initial", "label_gradient", "periodic_distance",
    "ch_energy", "w_consistency",
]
