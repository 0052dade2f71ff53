"""Affine Lagrangians and the multisymplectic systems they generate.

A Lagrangian density that is affine in first derivatives,

    L = L^a_j(z) z^j_{,a} - H(z),

has Euler-Lagrange equations K^a_ij(z) z^j_{,a} = dH/dz^i with
K^a_ij = dL^a_j/dz^i - dL^a_i/dz^j.  This module evaluates those objects
pointwise, checks closedness of the two-forms, and builds Noether fluxes.

Index conventions (used by every other module):

* ``coeff(z)[..., a, j]``            -> L^a_j
* ``coeff_grad(z)[..., a, j, i]``    -> dL^a_j / dz^i
* ``coeff_hess(z)[..., a, j, i, k]`` -> d^2 L^a_j / dz^i dz^k
* independent variables are ordered space first, time last.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

FD_STEP = 1e-4
VALIDATION_RTOL = 1e-6


class SpecValidationError(ValueError):
    """Analytic derivatives supplied with a spec disagree with finite differences."""


def _fd_jacobian(func, z, h):
    """Central-difference derivative of ``func`` along the last axis of ``z``.

    The new axis is appended last, so ``out[..., i] = d func / d z^i``.
    """
    z = np.asarray(z, dtype=float)
    cols = []
    for i in range(z.shape[-1]):
        e = np.zeros(z.shape[-1])
        e[i] = h
        cols.append((np.asarray(func(z + e)) - np.asarray(func(z - e))) / (2 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class AffineLagrangianSpec:
    """Coefficient functions of an affine Lagrangian.

    All callables must broadcast over leading axes of ``z`` (shape ``(..., n_dep)``).
    ``coeff_hess`` and ``hamiltonian_hess`` are optional; when absent they are
    obtained by central differences of the corresponding gradient.

    ``winding[i]`` is the slope of variable i along the periodic space
    direction: on a periodic grid the stored field is ``z_i - winding[i] * x``.
    Label fields of the identity chart have winding 1.
    """

    n_dep: int
    n_indep: int
    coeff: Callable[[np.ndarray], np.ndarray]
    coeff_grad: Callable[[np.ndarray], np.ndarray]
    hamiltonian: Callable[[np.ndarray], np.ndarray]
    hamiltonian_grad: Callable[[np.ndarray], np.ndarray]
    coeff_hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hamiltonian_hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    var_names: Sequence[str] = ()
    winding: Optional[Sequence[float]] = None
    name: str = "custom"
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        if not self.var_names:
            object.__setattr__(self, "var_names", tuple(f"z{i}" for i in range(self.n_dep)))
        if len(self.var_names) != self.n_dep:
            raise ValueError("var_names must have length n_dep")
        w = np.zeros(self.n_dep) if self.winding is None else np.asarray(self.winding, float)
        if w.shape != (self.n_dep,):
            raise ValueError("winding must have length n_dep")
        object.__setattr__(self, "winding", tuple(float(v) for v in w))
        if self.validate:
            self.check_derivatives()

    def index(self, name: str) -> int:
        return list(self.var_names).index(name)

    # second derivatives, analytic when supplied
    def coeff_second(self, z):
        if self.coeff_hess is not None:
            return np.asarray(self.coeff_hess(z), dtype=float)
        return _fd_jacobian(self.coeff_grad, z, 1e-5)

    def hamiltonian_second(self, z):
        if self.hamiltonian_hess is not None:
            return np.asarray(self.hamiltonian_hess(z), dtype=float)
        # step fixed by the Jacobian assembly contract
        return _fd_jacobian(self.hamiltonian_grad, z, 1e-7)

    def lagrangian(self, z, dz):
        """L = L^a_j z^j_{,a} - H for derivatives ``dz[..., a, j]``."""
        return np.einsum("...aj,...aj->...", self.coeff(z), dz) - self.hamiltonian(z)

    def check_derivatives(self, n_samples: int = 20, seed: int = 0, h: float = FD_STEP):
        """Cross-validate the analytic gradients against central differences."""
        rng = np.random.default_rng(seed)
        z = rng.uniform(-1.0, 1.0, size=(n_samples, self.n_dep))
        checks = [
            ("coeff_grad", np.asarray(self.coeff_grad(z)), _fd_jacobian(self.coeff, z, h)),
            ("hamiltonian_grad", np.asarray(self.hamiltonian_grad(z)),
             _fd_jacobian(self.hamiltonian, z, h)),
        ]
        if self.coeff_hess is not None:
            checks.append(("coeff_hess", np.asarray(self.coeff_hess(z)),
                           _fd_jacobian(self.coeff_grad, z, h)))
        if self.hamiltonian_hess is not None:
            checks.append(("hamiltonian_hess", np.asarray(self.hamiltonian_hess(z)),
                           _fd_jacobian(self.hamiltonian_grad, z, h)))
        for label, exact, approx in checks:
            if exact.shape != approx.shape:
                raise SpecValidationError(f"{label} has shape {exact.shape}, expected {approx.shape}")
            scale = max(1.0, float(np.max(np.abs(approx))))
            err = float(np.max(np.abs(exact - approx))) / scale
            if err > VALIDATION_RTOL:
                raise SpecValidationError(f"{label} disagrees with finite differences (rel err {err:.2e})")

    def time_coeff_is_affine(self) -> bool:
        """True when L^t_j is affine in z (required by the one-step box integrator)."""
        rng = np.random.default_rng(1)
        z = rng.uniform(-1, 1, size=(8, self.n_dep))
        return bool(np.max(np.abs(self.coeff_second(z)[..., -1, :, :, :])) < 1e-8)


@dataclass(frozen=True)
class StructureTensor:
    """K^a_ij at one state point, shape ``(n_indep, n_dep, n_dep)``."""

    k: np.ndarray

    def two_form(self, alpha, u, v):
        """kappa^a contracted on (u, v), i.e. K^a_ij u^i v^j."""
        return np.einsum("...i,ij,...j->...", u, self.k[alpha], v)


def structure_from_grad(grad):
    """K^a_ij = dL^a_j/dz^i - dL^a_i/dz^j from ``grad[..., a, j, i]``."""
    return np.swapaxes(grad, -1, -2) - grad


def assemble_structure_matrix(spec: AffineLagrangianSpec, z) -> StructureTensor:
    z = np.asarray(z, dtype=float)
    if z.shape != (spec.n_dep,):
        raise ValueError(f"state vector must have length {spec.n_dep}, got shape {z.shape}")
    return StructureTensor(structure_from_grad(np.asarray(spec.coeff_grad(z), dtype=float)))


def el_residual(spec: AffineLagrangianSpec, z, dz):
    """r_i = K^a_ij z^j_{,a} - dH/dz^i.

    ``z`` has shape ``(..., n_dep)`` and ``dz`` shape ``(..., n_indep, n_dep)``.
    """
    z = np.asarray(z, dtype=float)
    dz = np.asarray(dz, dtype=float)
    if z.shape[-1] != spec.n_dep or dz.shape[-2:] != (spec.n_indep, spec.n_dep):
        raise ValueError("dimension mismatch between spec and supplied fields")
    k = structure_from_grad(np.asarray(spec.coeff_grad(z), dtype=float))
    return np.einsum("...aij,...aj->...i", k, dz) - spec.hamiltonian_grad(z)


def check_closedness(spec: AffineLagrangianSpec, z_samples, h: float = FD_STEP,
                     structure: Optional[Callable] = None) -> float:
    """Largest cyclic sum dK_ij/dz^k + dK_jk/dz^i + dK_ki/dz^j over samples.

    ``structure`` overrides the map z -> K (shape ``(n_indep, m, m)``), which is
    how a hand-built, possibly non-closed structure matrix is checked.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if structure is None:
        def structure(z):
            return structure_from_grad(np.asarray(spec.coeff_grad(z), dtype=float))
    z_samples = np.atleast_2d(np.asarray(z_samples, dtype=float))
    worst = 0.0
    for z in z_samples:
        dk = _fd_jacobian(structure, z, h)  # [a, i, j, k] = dK^a_ij/dz^k
        cyc = (dk
               + np.transpose(dk, (0, 3, 1, 2))   # dK_jk/dz^i at [a, i, j, k]
               + np.transpose(dk, (0, 2, 3, 1)))  # dK_ki/dz^j
        worst = max(worst, float(np.max(np.abs(cyc))))
    return worst


def oneform_quasiconservation_residual(spec: AffineLagrangianSpec, fields, variation, dx, dt):
    """(L^a_j dz^j)_{,a} - dL(dz) on a uniform periodic space-time grid.

    ``fields`` and ``variation`` have shape ``(n_t, n_x, n_dep)`` holding full
    values (winding included) of z and of the variation field dz.  Space is
    periodic; derivatives are second-order central differences, so the result
    is returned on the interior time levels ``1..n_t-2`` with shape
    ``(n_t-2, n_x)``.
    """
    z = np.asarray(fields, dtype=float)
    w = np.asarray(variation, dtype=float)
    if spec.n_indep != 2:
        raise ValueError("grid evaluator supports one space and one time dimension")
    n_x = z.shape[1]
    x_period = np.asarray(spec.winding) * dx * n_x

    def ddx(a, wind):
        fwd = np.roll(a, -1, axis=1)
        bwd = np.roll(a, 1, axis=1)
        fwd[:, -1] += wind
        bwd[:, 0] -= wind
        return (fwd - bwd) / (2 * dx)

    def ddt(a):
        return (a[2:] - a[:-2]) / (2 * dt)

    coeff = np.asarray(spec.coeff(z), dtype=float)           # (t, x, a, j)
    flux_x = np.einsum("txj,txj->tx", coeff[..., 0, :], w)
    flux_t = np.einsum("txj,txj->tx", coeff[..., 1, :], w)
    div = ddx(flux_x, 0.0)[1:-1] + ddt(flux_t)

    zi = z[1:-1]
    dz = np.stack([ddx(z, x_period)[1:-1], ddt(z)], axis=-2)   # (t, x, a, j)
    dw = np.stack([ddx(w, 0.0)[1:-1], ddt(w)], axis=-2)
    grad = np.asarray(spec.coeff_grad(zi), dtype=float)       # (t, x, a, j, i)
    dl_dz = np.einsum("txaji,txaj->txi", grad, dz) - spec.hamiltonian_grad(zi)
    dl = np.einsum("txi,txi->tx", dl_dz, w[1:-1]) + np.einsum("txaj,txaj->tx", coeff[1:-1], dw)
    return div - dl


@dataclass(frozen=True)
class SymmetryGenerator:
    """Characteristic Q^i(q, z, dz) and boundary term B^a(q, z, dz).

    ``dz`` carries first derivatives with shape ``(..., n_indep, n_dep)`` so
    that generalized symmetries (e.g. time translation, Q = -z_t) can be
    expressed.  ``boundary_term`` defaults to zero.
    """

    q_char: Callable
    boundary_term: Optional[Callable] = None
    name: str = "generator"

    def Q(self, q, z, dz):
        return np.asarray(self.q_char(q, z, dz), dtype=float)

    def B(self, q, z, dz, n_indep):
        if self.boundary_term is None:
            return np.zeros(np.shape(z)[:-1] + (n_indep,))
        return np.asarray(self.boundary_term(q, z, dz), dtype=float)


@dataclass(frozen=True)
class Jet:
    """Second-order jet of a field at a point: value, first and second derivatives.

    Defines the local polynomial field z(q0 + s) = z + dz.s + s.ddz.s / 2 used to
    take total derivatives by finite differences.
    """

    q: np.ndarray      # (n_indep,)
    z: np.ndarray      # (n_dep,)
    dz: np.ndarray     # (n_indep, n_dep)
    ddz: np.ndarray    # (n_indep, n_indep, n_dep), symmetric in the first two axes

    def at(self, s):
        s = np.asarray(s, dtype=float)
        z = self.z + s @ self.dz + 0.5 * np.einsum("a,abj,b->j", s, self.ddz, s)
        dz = self.dz + np.einsum("abj,b->aj", self.ddz, s)
        return self.q + s, z, dz


def random_jets(spec: AffineLagrangianSpec, n: int, seed: int = 0, scale: float = 1.0):
    rng = np.random.default_rng(seed)
    jets = []
    for _ in range(n):
        ddz = rng.uniform(-scale, scale, size=(spec.n_indep, spec.n_indep, spec.n_dep))
        ddz = 0.5 * (ddz + np.swapaxes(ddz, 0, 1))
        jets.append(Jet(q=rng.uniform(-scale, scale, spec.n_indep),
                        z=rng.uniform(-scale, scale, spec.n_dep),
                        dz=rng.uniform(-scale, scale, (spec.n_indep, spec.n_dep)),
                        ddz=ddz))
    return jets


def check_variational_symmetry(spec: AffineLagrangianSpec, gen: SymmetryGenerator,
                               z_samples: Sequence[Jet], h: float = FD_STEP) -> float:
    """Max |XL - B^a_{,a}| over the sample jets.

    XL = Q^i dL/dz^i + (D_a Q^i) dL/dz^i_{,a}, with the total derivatives D_a
    taken by central differences along each jet's polynomial field.
    """
    worst = 0.0
    for jet in z_samples:
        q, z, dz = jet.at(np.zeros(spec.n_indep))
        Q = gen.Q(q, z, dz)
        grad = np.asarray(spec.coeff_grad(z), dtype=float)
        dl_dz = np.einsum("aji,aj->i", grad, dz) - spec.hamiltonian_grad(z)
        dl_ddz = np.asarray(spec.coeff(z), dtype=float)
        dQ = np.zeros((spec.n_indep, spec.n_dep))
        divB = 0.0
        for a in range(spec.n_indep):
            e = np.zeros(spec.n_indep)
            e[a] = h
            qp, zp, dzp = jet.at(e)
            qm, zm, dzm = jet.at(-e)
            dQ[a] = (gen.Q(qp, zp, dzp) - gen.Q(qm, zm, dzm)) / (2 * h)
            divB += (gen.B(qp, zp, dzp, spec.n_indep)[a]
                     - gen.B(qm, zm, dzm, spec.n_indep)[a]) / (2 * h)
        xl = Q @ dl_dz + np.sum(dQ * dl_ddz)
        worst = max(worst, abs(float(xl - divB)))
    return worst


def noether_flux(spec: AffineLagrangianSpec, gen: SymmetryGenerator, q, z, dz,
                 check_samples: Optional[Sequence[Jet]] = None, tol: float = 1e-6):
    """F^a = L^a_j Q^j - B^a, pointwise.

    When ``check_samples`` is given the generator is first tested for being a
    variational symmetry; a failing generator only triggers a warning.
    """
    if check_samples is not None:
        viol = check_variational_symmetry(spec, gen, check_samples)
        if viol > tol:
            warnings.warn(f"generator {gen.name!r} is not a variational symmetry "
                          f"(violation {viol:.3e}); flux is not conserved", RuntimeWarning)
    z = np.asarray(z, dtype=float)
    coeff = np.asarray(spec.coeff(z), dtype=float)
    return np.einsum("...aj,...j->...a", coeff, gen.Q(q, z, dz)) - gen.B(q, z, dz, spec.n_indep)
