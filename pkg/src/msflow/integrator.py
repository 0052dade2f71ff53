"""Variational box-scheme integrator on the periodic grid.

Every space-time cell contributes dx*dt*[L^x(zbar) D_x z - H(zbar)], with
zbar the average of the four corners and D_x the mean of the two horizontal
edge differences (the Preissman box rule).  The L^t z_t term is integrated
node-wise in space and midpoint in time by default, which keeps the
alternating grid mode of advected fields (labels) tied to the dynamics; the
four-corner rule for that term is available as ``time_quadrature="box"``.

For Lagrangians whose time coefficients L^t are affine in z the discrete
Legendre map at a time level is a local function of that level, so a step
solves  dS_slab/dz^{n+1} - P(z^{n+1}) = 0  for the new level alone.  Every
sequence produced this way satisfies the two-level discrete Euler-Lagrange
equations of the full action.

On grids with an even number of cells, variables that enter the action only
through cell averages have an alternating null mode (a discrete gauge
freedom).  Newton updates are constrained orthogonal to those modes, which
therefore keep their initial value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid import GridSpec, StateField
from .mslagrangian import AffineLagrangianSpec


class NewtonDivergence(RuntimeError):
    def __init__(self, message, history=None, step_index=None):
        super().__init__(message)
        self.history = list(history or [])
        self.step_index = step_index


class SingularJacobian(RuntimeError):
    pass


@dataclass
class BoxSchemeConfig:
    dt: float
    n_steps: int = 1
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    jacobian_mode: str = "analytic"
    time_quadrature: str = "nodal"

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.dt == 0:
            raise ValueError("dt must be non-zero")
        if self.jacobian_mode not in ("analytic", "finite-difference"):
            raise ValueError("jacobian_mode must be 'analytic' or 'finite-difference'")
        if self.time_quadrature not in ("nodal", "box"):
            raise ValueError("time_quadrature must be 'nodal' or 'box'")


@dataclass
class TangentField:
    """Perturbation arrays on the grid, shape ``(n_vars, n_cells)``."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("tangent field contains non-finite values")


@dataclass
class StepInfo:
    residual_history: List[float] = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.residual_history) - 1


# corner order: SW, SE, NW, NE
SX = np.array([-1.0, 1.0, -1.0, 1.0])
ST = np.array([-1.0, -1.0, 1.0, 1.0])


class BoxScheme:
    """Residuals, Jacobians and solves for one spec on one grid.

    ``time_quadrature`` selects how the L^t z_t term is integrated over a
    cell: ``"nodal"`` (default) evaluates it at the two edge midpoints of the
    cell, i.e. node-wise in space and midpoint in time; ``"box"`` uses the
    four-corner average like the other terms.  With ``"box"`` the alternating
    component of advected fields is not seen by the time differences, which
    leaves it undamped and poorly determined on even grids.

    Arrays of states are node-major, shape ``(n_cells, n_vars)``, and hold the
    periodic parts of the variables.
    """

    def __init__(self, spec: AffineLagrangianSpec, grid: GridSpec, dt: Optional[float] = None,
                 time_quadrature: str = "nodal"):
        if spec.n_indep != 2:
            raise ValueError("box scheme needs one space and one time dimension")
        if not spec.time_coeff_is_affine():
            raise ValueError("box integrator requires time coefficients affine in z")
        if time_quadrature not in ("nodal", "box"):
            raise ValueError("time_quadrature must be 'nodal' or 'box'")
        self.spec = spec
        self.grid = grid
        self.nodal = time_quadrature == "nodal"
        self.dx = grid.dx
        self.dt = grid.dt if dt is None else float(dt)
        self.n = grid.n_cells
        self.m = spec.n_dep
        self.w = np.asarray(spec.winding)
        self.x = grid.x[:, None]
        self.xc = (grid.x + 0.5 * self.dx)[:, None]

    # -- cell geometry -------------------------------------------------
    def corners(self, z0, z1):
        return z0, np.roll(z0, -1, axis=0), z1, np.roll(z1, -1, axis=0)

    def cell_state(self, z0, z1):
        sw, se, nw, ne = self.corners(z0, z1)
        zbar = 0.25 * (sw + se + nw + ne) + self.w * self.xc
        dzx = ((se - sw) + (ne - nw)) / (2 * self.dx) + self.w
        dzt = ((nw - sw) + (ne - se)) / (2 * self.dt)
        return zbar, np.stack([dzx, dzt], axis=1)

    def level_average(self, z):
        return 0.5 * (z + np.roll(z, -1, axis=0)) + self.w * self.xc

    def _cell_derivs(self, dz):
        """Derivatives entering the cell Lagrangian (time part removed when nodal)."""
        if self.nodal:
            dz = dz.copy()
            dz[:, 1] = 0.0
        return dz

    # -- action and residual ---------------------------------------------
    def action(self, z0, z1):
        spec = self.spec
        zbar, dz = self.cell_state(z0, z1)
        total = float(np.sum(spec.lagrangian(zbar, self._cell_derivs(dz))))
        if self.nodal:
            zmid = 0.5 * (z0 + z1) + self.w * self.x
            lt = np.asarray(spec.coeff(zmid))[:, 1, :]
            total += float(np.sum(lt * (z1 - z0))) / self.dt
        return self.dx * self.dt * total

    def residual(self, z0, z1):
        """Node residual (dS_slab/dz1 - P(z1)) / (dx dt), shape ``(n, m)``."""
        spec = self.spec
        zbar, dz = self.cell_state(z0, z1)
        dz = self._cell_derivs(dz)
        coeff = np.asarray(spec.coeff(zbar))
        grad = np.asarray(spec.coeff_grad(zbar))
        g = np.einsum("caji,caj->ci", grad, dz) - spec.hamiltonian_grad(zbar)
        common = 0.25 * g
        if not self.nodal:
            lt1 = np.asarray(spec.coeff(self.level_average(z1)))[:, 1, :]
            common = common + (coeff[:, 1, :] - lt1) / (2 * self.dt)
        west = common - coeff[:, 0, :] / (2 * self.dx)
        east = common + coeff[:, 0, :] / (2 * self.dx)
        r = west + np.roll(east, 1, axis=0)
        if self.nodal:
            zmid = 0.5 * (z0 + z1) + self.w * self.x
            gm = np.asarray(spec.coeff_grad(zmid))[:, 1]          # [j, k, i]
            lt_mid = np.asarray(spec.coeff(zmid))[:, 1, :]
            lt_1 = np.asarray(spec.coeff(z1 + self.w * self.x))[:, 1, :]
            r = r + (0.5 * np.einsum("jki,jk->ji", gm, z1 - z0) + lt_mid - lt_1) / self.dt
        return r

    def _cell_blocks(self, z0, z1, top: bool):
        """d(node residual)/d(corner values) per cell: shape (n, 2, 2, m, m).

        Axis 1 is the residual node (west, east), axis 2 the differentiated
        corner (west, east) on the top (z1) or bottom (z0) level.
        """
        spec = self.spec
        zbar, dz = self.cell_state(z0, z1)
        dz = self._cell_derivs(dz)
        grad = np.asarray(spec.coeff_grad(zbar))                 # [c, a, j, i]
        hess = spec.coeff_second(zbar)                          # [c, a, j, i, k]
        s = np.einsum("cajik,caj->cik", hess, dz) - spec.hamiltonian_second(zbar)
        gam = np.swapaxes(grad, -1, -2)                          # gam[c,a,i,m] = dL^a_m/dz^i
        base = s / 16.0
        if not self.nodal:
            st = 1.0 if top else -1.0
            base = base + 0.25 * gam[:, 1] * st / (2 * self.dt) + 0.25 * grad[:, 1] / (2 * self.dt)
            if top:
                grad1 = np.asarray(spec.coeff_grad(self.level_average(z1)))
                base = base - 0.5 * grad1[:, 1] / (2 * self.dt)
        blocks = np.empty((self.n, 2, 2, self.m, self.m))
        for r, sr in enumerate((-1.0, 1.0)):
            for b, sb in enumerate((-1.0, 1.0)):
                blocks[:, r, b] = (base + 0.25 * gam[:, 0] * sb / (2 * self.dx)
                                   + sr * grad[:, 0] / (8 * self.dx))
        return blocks

    def _node_blocks(self, z0, z1, top: bool):
        """Diagonal blocks from the node-wise time term, shape (n, m, m)."""
        spec = self.spec
        zmid = 0.5 * (z0 + z1) + self.w * self.x
        gm = np.asarray(spec.coeff_grad(zmid))[:, 1]              # [j, k, i] = dL^t_k/dz^i
        hm = spec.coeff_second(zmid)[:, 1]                        # [j, k, i, m]
        curv = 0.25 * np.einsum("jkim,jk->jim", hm, z1 - z0)
        anti = np.swapaxes(gm, 1, 2) - gm                          # [j, i, m]: dL^t_m/dz^i - dL^t_i/dz^m
        if top:
            g1 = np.asarray(spec.coeff_grad(z1 + self.w * self.x))[:, 1]
            blk = curv + 0.5 * np.swapaxes(gm, 1, 2) + 0.5 * gm - g1
        else:
            blk = curv - 0.5 * anti
        return blk / self.dt

    def _assemble(self, blocks, diag=None):
        n, m = self.n, self.m
        node = np.arange(n)
        rows, cols, vals = [], [], []
        ii, kk = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        for r in range(2):
            for b in range(2):
                rn = (node + r) % n
                bn = (node + b) % n
                rows.append((rn[:, None, None] * m + ii).ravel())
                cols.append((bn[:, None, None] * m + kk).ravel())
                vals.append(blocks[:, r, b].ravel())
        if diag is not None:
            rows.append((node[:, None, None] * m + ii).ravel())
            cols.append((node[:, None, None] * m + kk).ravel())
            vals.append(diag.ravel())
        return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n * m, n * m))

    def jacobian(self, z0, z1, top: bool = True, mode: str = "analytic"):
        if mode == "finite-difference":
            return self._fd_jacobian(z0, z1, top)
        diag = self._node_blocks(z0, z1, top) if self.nodal else None
        return self._assemble(self._cell_blocks(z0, z1, top), diag)

    def _fd_jacobian(self, z0, z1, top, h=1e-7):
        n, m = self.n, self.m
        stride = next(s for s in range(3, n + 1) if n % s == 0)
        rows, cols, vals = [], [], []
        for color in range(stride):
            for k in range(m):
                e = np.zeros((n, m))
                nodes = np.arange(color, n, stride)
                e[nodes, k] = h
                if top:
                    d = (self.residual(z0, z1 + e) - self.residual(z0, z1 - e)) / (2 * h)
                else:
                    d = (self.residual(z0 + e, z1) - self.residual(z0 - e, z1)) / (2 * h)
                for j in nodes:
                    for rj in ((j - 1) % n, j, (j + 1) % n):
                        rows.extend(rj * m + np.arange(m))
                        cols.extend([j * m + k] * m)
                        vals.extend(d[rj])
        return sp.csc_matrix((vals, (rows, cols)), shape=(n * m, n * m))

    # -- gauge handling and linear solves -----------------------------------
    def _null_space(self, lu, sigma, trans):
        """Orthonormal basis of the (near) null space by two steps of inverse iteration."""
        rng = np.random.default_rng(20240)
        x = rng.standard_normal((self.n * self.m, self.m + 2))
        for _ in range(2):
            q, _ = np.linalg.qr(x)
            x = lu.solve(q, trans=trans)
        u, sv, _ = np.linalg.svd(x, full_matrices=False)
        return u[:, sv * sigma > 1e-2]

    def _gauge_constraint(self, right):
        """Alternating part of the right null space, used to fix the gauge."""
        if not right.shape[1]:
            return right
        alt = (-1.0) ** np.arange(self.n)
        v = right.reshape(self.n, self.m, -1)
        amp = np.einsum("j,jkq->kq", alt, v) / self.n
        c = (alt[:, None, None] * amp[None]).reshape(self.n * self.m, -1)
        if np.linalg.svd(c, compute_uv=False).min() < 0.1:
            return right
        return np.linalg.qr(c)[0]

    def gauge_modes(self, jac):
        """Bordering vectors ``(right, left)`` for the null space of the Jacobian.

        The null space is found by inverse iteration with a tiny shift.  The
        right vectors are the alternating grid modes closest to it, so the
        Newton update never changes the alternating part of the gauge
        variables; the left vectors span the left null space.
        """
        scale = max(1.0, abs(jac).max())
        sigma = 1e-12 * scale
        try:
            lu = splu((jac - sigma * sp.identity(jac.shape[0], format="csc")).tocsc())
        except RuntimeError as exc:
            raise SingularJacobian(f"shifted Newton matrix is singular ({exc})") from exc
        right = self._null_space(lu, sigma, "N")
        left = self._null_space(lu, sigma, "T")
        if right.shape[1] != left.shape[1]:
            raise SingularJacobian("left and right null spaces differ in dimension")
        return self._gauge_constraint(right), left

    def factor(self, jac, modes=None):
        """LU factors of the Jacobian bordered by its gauge modes."""
        right, left = self.gauge_modes(jac) if modes is None else modes
        k = right.shape[1]
        if k:
            mat = sp.bmat([[jac, sp.csc_matrix(left)], [sp.csc_matrix(right.T), None]], format="csc")
        else:
            mat = jac
        try:
            lu = splu(mat)
        except RuntimeError as exc:
            raise SingularJacobian(f"singular Newton matrix ({exc})") from exc
        return lu, k, right

    def solve(self, factors, rhs, gauge=None):
        """Solve J x = rhs with right^T x = right^T gauge (zero when ``gauge`` is None)."""
        lu, k, right = factors
        rhs = np.asarray(rhs, dtype=float)
        flat = rhs.reshape(rhs.shape[0], -1) if rhs.ndim > 1 else rhs[:, None]
        if gauge is None:
            border = np.zeros((k, flat.shape[1]))
        else:
            g = np.asarray(gauge, dtype=float)
            border = right.T @ (g.reshape(g.shape[0], -1) if g.ndim > 1 else g[:, None])
        padded = np.vstack([flat, border])
        sol = lu.solve(padded)[: self.n * self.m]
        if not np.all(np.isfinite(sol)):
            raise SingularJacobian("non-finite solution of the Newton system")
        return sol.reshape(rhs.shape)

    # -- nonlinear step --------------------------------------------------
    def newton(self, z0, tol=1e-12, max_iter=50, mode="analytic", guess=None):
        z1 = (z0 if guess is None else guess).copy()
        info = StepInfo()
        for it in range(max_iter + 1):
            r = self.residual(z0, z1)
            rn = float(np.max(np.abs(r)))
            info.residual_history.append(rn)
            if rn <= tol:
                return z1, info
            if not np.isfinite(rn) or it == max_iter or rn > 1e8 * max(info.residual_history[0], 1e-300):
                raise NewtonDivergence(f"Newton iteration did not converge (residual {rn:.3e} "
                                       f"after {it} iterations)", info.residual_history)
            jac = self.jacobian(z0, z1, True, mode)
            if it == 0:
                modes = self.gauge_modes(jac)
            factors = self.factor(jac, modes)
            z1 = z1 - self.solve(factors, r.ravel()).reshape(z1.shape)
        raise AssertionError("unreachable")

    def tangent(self, z0, z1, dz0):
        """Linearized step: J1 dz1 = -J0 dz0 (dz0 of shape (n, m) or (k, n, m)).

        A Newton step keeps the gauge components of the old level, so the
        tangent carries the gauge components of dz0 over unchanged.
        """
        j1 = self.jacobian(z0, z1, True)
        j0 = self.jacobian(z0, z1, False)
        dz0 = np.asarray(dz0, dtype=float)
        batch = dz0.reshape(-1, self.n * self.m).T
        out = self.solve(self.factor(j1), -(j0 @ batch), gauge=batch)
        return out.T.reshape(dz0.shape)

    # -- discrete two-form balance ---------------------------------------
    def _level_form(self, z, U, V):
        """Node density U_j . dP_j(V) - V_j . dP_j(U) per unit dx."""
        if self.nodal:
            gt = np.asarray(self.spec.coeff_grad(z + self.w * self.x))[:, 1]   # [j, i, k]

            def dP(X):
                return np.einsum("jik,jk->ji", gt, X)
        else:
            gt = np.asarray(self.spec.coeff_grad(self.level_average(z)))[:, 1]

            def dP(X):
                q = np.einsum("cik,ck->ci", gt, 0.5 * (X + np.roll(X, -1, axis=0)))
                return 0.5 * (q + np.roll(q, 1, axis=0))

        return np.sum(U * dP(V), axis=1) - np.sum(V * dP(U), axis=1)

    def _east_flux(self, z0, z1, U0, U1, V0, V1):
        """Two-form carried by the east corners of each cell (SE + NE)."""
        spec = self.spec
        zbar, dz = self.cell_state(z0, z1)
        dz = self._cell_derivs(dz)
        grad = np.asarray(spec.coeff_grad(zbar))
        hess = spec.coeff_second(zbar)
        s = np.einsum("cajik,caj->cik", hess, dz) - spec.hamiltonian_second(zbar)
        wt = 0.0 if self.nodal else 1.0

        def parts(X0, X1):
            sw, se, nw, ne = X0, np.roll(X0, -1, axis=0), X1, np.roll(X1, -1, axis=0)
            xbar = 0.25 * (sw + se + nw + ne)
            dxx = ((se - sw) + (ne - nw)) / (2 * self.dx)
            dxt = ((nw - sw) + (ne - se)) / (2 * self.dt)
            common = (0.25 * np.einsum("cik,ck->ci", s, xbar)
                      + 0.25 * np.einsum("cmi,cm->ci", grad[:, 0], dxx)
                      + wt * 0.25 * np.einsum("cmi,cm->ci", grad[:, 1], dxt))
            tx = np.einsum("cim,cm->ci", grad[:, 0], xbar) / (2 * self.dx)
            tt = wt * np.einsum("cim,cm->ci", grad[:, 1], xbar) / (2 * self.dt)
            # Hessian of the cell Lagrangian applied to X, at SE (sx=+1, st=-1) and NE (+1, +1)
            return {"SE": (se, common + tx - tt), "NE": (ne, common + tx + tt)}

        pu, pv = parts(U0, U1), parts(V0, V1)
        flux = np.zeros(self.n)
        for corner in ("SE", "NE"):
            ua, bu = pu[corner]
            va, bv = pv[corner]
            flux += np.sum(ua * bv, axis=1) - np.sum(va * bu, axis=1)
        return flux

    def symplecticity_residual(self, z0, z1, U0, U1, V0, V1):
        dens = (self._level_form(z1, U1, V1) - self._level_form(z0, U0, V0)) / self.dt
        e = self._east_flux(z0, z1, U0, U1, V0, V1)
        return dens + e - np.roll(e, 1)


# -- module-level operations on StateFields ---------------------------------

def _nodes(state: StateField):
    return state.data.T.copy()


def _field(template: StateField, z, t):
    return type(template)(template.names, z.T, t, template.winding)


def discrete_action(spec: AffineLagrangianSpec, state0: StateField, state1: StateField,
                    grid: GridSpec, dt: Optional[float] = None,
                    time_quadrature: str = "nodal") -> float:
    if state0.data.shape != state1.data.shape or state0.n_cells != grid.n_cells:
        raise ValueError("fields must live on the same grid")
    return BoxScheme(spec, grid, dt, time_quadrature).action(_nodes(state0), _nodes(state1))


def step(spec: AffineLagrangianSpec, state: StateField, cfg: BoxSchemeConfig, grid: GridSpec,
         return_info: bool = False, scheme: Optional[BoxScheme] = None):
    """Advance one time level; ``cfg.dt`` may be negative to step backwards."""
    scheme = scheme or BoxScheme(spec, grid, cfg.dt, cfg.time_quadrature)
    z1, info = scheme.newton(_nodes(state), cfg.newton_tol, cfg.newton_max_iter, cfg.jacobian_mode)
    new = _field(state, z1, state.t + scheme.dt)
    return (new, info) if return_info else new


def integrate(spec, state, cfg: BoxSchemeConfig, grid: GridSpec, callback=None):
    """Run ``cfg.n_steps`` steps, returning the list of states (initial included)."""
    scheme = BoxScheme(spec, grid, cfg.dt, cfg.time_quadrature)
    states = [state]
    for k in range(cfg.n_steps):
        try:
            state = step(spec, state, cfg, grid, scheme=scheme)
        except NewtonDivergence as exc:
            exc.step_index = k + 1
            raise
        states.append(state)
        if callback is not None:
            callback(k + 1, state)
    return states


def tangent_step(spec, base0: StateField, base1: StateField, dstate: TangentField,
                 cfg: BoxSchemeConfig, grid: GridSpec) -> TangentField:
    scheme = BoxScheme(spec, grid, cfg.dt, cfg.time_quadrature)
    out = scheme.tangent(_nodes(base0), _nodes(base1), dstate.data.T)
    return TangentField(out.T)


def propagate_tangents(spec, states, tangents0, cfg: BoxSchemeConfig, grid: GridSpec):
    """Push a batch of tangents (k, n_vars, n_cells) along a base trajectory."""
    scheme = BoxScheme(spec, grid, cfg.dt, cfg.time_quadrature)
    cur = np.swapaxes(np.asarray(tangents0, dtype=float), 1, 2)
    out = [cur]
    for s0, s1 in zip(states[:-1], states[1:]):
        cur = scheme.tangent(_nodes(s0), _nodes(s1), cur)
        out.append(cur)
    return [np.swapaxes(c, 1, 2) for c in out]


def discrete_symplecticity_residual(spec, base0: StateField, base1: StateField,
                                    d1: tuple, d2: tuple, grid: GridSpec,
                                    dt: Optional[float] = None, time_quadrature: str = "nodal"):
    """Per-node balance of the discrete two-form over one time slab.

    ``d1`` and ``d2`` are pairs (tangent at the old level, tangent at the new
    level), each of shape ``(n_vars, n_cells)``.  The value at node j is

        (w_j^{n+1} - w_j^n) / dt + E_{j+1/2} - E_{j-1/2},

    with w the time-level density built from dL^t/dz and E the flux through
    the east edge of each box cell; it vanishes for tangents of the scheme.
    """
    scheme = BoxScheme(spec, grid, dt, time_quadrature)
    u0, u1 = (np.asarray(a, dtype=float).T for a in d1)
    v0, v1 = (np.asarray(a, dtype=float).T for a in d2)
    return scheme.symplecticity_residual(_nodes(base0), _nodes(base1), u0, u1, v0, v1)
