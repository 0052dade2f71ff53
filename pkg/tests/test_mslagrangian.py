import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from msflow.diagnostics import convergence_order
from msflow.epdiff import ChParams, ch_lagrangian_spec
from msflow.grid import GridSpec
from msflow.mslagrangian import (AffineLagrangianSpec, SpecValidationError, SymmetryGenerator,
                                 structure_from_grad,
                                 assemble_structure_matrix, check_closedness,
                                 check_variational_symmetry, el_residual, noether_flux,
                                 oneform_quasiconservation_residual, random_jets)

state = st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=4)
CH = ch_lagrangian_spec(ChParams(1.0, GridSpec(16, 2 * np.pi, 0.05)))


def ch_sympy_el(lam):
    """Euler-Lagrange expressions of the CH Lagrangian from sympy, as a numeric function."""
    x, t = sp.symbols("x t")
    fs = [sp.Function(n)(x, t) for n in ("u", "l", "pi", "W")]
    u, l, pi, W = fs
    lag = u**2 / 2 - lam**2 * W**2 / 2 + lam**2 * W * u.diff(x) + pi * (l.diff(t) + u * l.diff(x))
    eqs = [e.lhs for e in sp.euler_equations(lag, fs, [x, t])]
    zs = sp.symbols("z0:4")
    ds = sp.symbols("zx0:4 zt0:4")
    subs = {}
    for i, f in enumerate(fs):
        subs[f.diff(x)] = ds[i]
        subs[f.diff(t)] = ds[4 + i]
    exprs = [e.subs(subs) for e in eqs]
    exprs = [e.subs({f: zs[i] for i, f in enumerate(fs)}) for e in exprs]
    return sp.lambdify(zs + ds, exprs, "numpy")


def test_derivative_validation_rejects_wrong_gradient():
    kw = dict(n_dep=2, n_indep=2,
              coeff=lambda z: np.stack([np.stack([z[..., 1], 0 * z[..., 0]], -1),
                                        np.stack([0 * z[..., 0], z[..., 0]], -1)], -2),
              hamiltonian=lambda z: 0.5 * z[..., 0] ** 2,
              hamiltonian_grad=lambda z: np.stack([z[..., 0], 0 * z[..., 0]], -1))
    good = np.zeros((2, 2, 2))
    good[0, 0, 1] = good[1, 1, 0] = 1.0
    AffineLagrangianSpec(coeff_grad=lambda z: np.broadcast_to(good, z.shape[:-1] + good.shape), **kw)
    with pytest.raises(SpecValidationError):
        AffineLagrangianSpec(coeff_grad=lambda z: np.broadcast_to(-good, z.shape[:-1] + good.shape), **kw)


@settings(max_examples=50, deadline=None)
@given(z=state)
def test_structure_matrix_antisymmetric(z):
    k = assemble_structure_matrix(CH, np.array(z)).k
    assert np.array_equal(k, -np.swapaxes(k, -1, -2))


def test_structure_matrix_rejects_batches(ch16):
    with pytest.raises(ValueError):
        assemble_structure_matrix(ch16[2], np.zeros((3, 4)))


def test_closedness(ch16, ch16_density):
    rng = np.random.default_rng(1)
    assert check_closedness(ch16[2], rng.standard_normal((20, 4))) < 1e-6
    assert check_closedness(ch16_density[2], rng.standard_normal((20, 6))) < 1e-6

    # K_01 = z_2 alone is not closed: the cyclic sum is dK_01/dz_2 = 1
    def bad(z):
        k = np.zeros((1, 3, 3))
        k[0, 0, 1], k[0, 1, 0] = z[2], -z[2]
        return k
    assert check_closedness(None, rng.standard_normal((3, 3)), structure=bad) == pytest.approx(1.0)


def test_el_residual_matches_sympy(ch16):
    el = ch_sympy_el(1.0)
    rng = np.random.default_rng(2)
    for _ in range(20):
        z = rng.standard_normal(4)
        dz = rng.standard_normal((2, 4))
        ref = np.array(el(*z, *dz[0], *dz[1]), dtype=float)
        assert np.allclose(el_residual(ch16[2], z, dz), ref, atol=1e-12)


def test_oneform_identity_is_minus_el_contraction(ch16):
    """(L^a_j w^j)_a - dL(w) = -w.EL, so the residual converges to that at second order."""
    spec = ch16[2]
    errs = []
    ns = (64, 128, 256)
    for n in ns:
        dx = 2 * np.pi / n
        dt = dx
        x = np.arange(n) * dx
        t = np.arange(5)[:, None] * dt
        X = x[None, :] + 0 * t
        z = np.stack([np.sin(X - t), X + 0.1 * np.cos(X + t), np.cos(2 * X) * np.exp(-t),
                      0.3 * np.sin(X + 2 * t)], axis=-1)
        zx = np.stack([np.cos(X - t), 1 - 0.1 * np.sin(X + t), -2 * np.sin(2 * X) * np.exp(-t),
                       0.3 * np.cos(X + 2 * t)], axis=-1)
        zt = np.stack([-np.cos(X - t), -0.1 * np.sin(X + t), -np.cos(2 * X) * np.exp(-t),
                       0.6 * np.cos(X + 2 * t)], axis=-1)
        w = np.stack([np.cos(X), np.sin(X + t), 0 * X + 1.0, np.cos(3 * X - t)], axis=-1)
        exact = -np.einsum("txi,txi->tx", w, el_residual(spec, z, np.stack([zx, zt], -2)))[1:-1]
        res = oneform_quasiconservation_residual(spec, z, w, dx, dt)
        errs.append(np.abs(res - exact).max())
    assert convergence_order([2 * np.pi / n for n in ns], errs) == pytest.approx(2, abs=0.15)


def test_translation_is_variational_symmetry(ch16):
    spec = ch16[2]
    # Q = -z_x, B = (-L, 0)
    gen = SymmetryGenerator(lambda q, z, dz: -dz[..., 0, :],
                            lambda q, z, dz: np.stack([-spec.lagrangian(z, dz), 0 * spec.lagrangian(z, dz)], -1),
                            name="x-translation")
    jets = random_jets(spec, 10)
    assert check_variational_symmetry(spec, gen, jets) < 1e-6


def test_noether_flux_warns_for_non_symmetry(ch16):
    spec = ch16[2]
    jets = random_jets(spec, 5)
    scaling = SymmetryGenerator(lambda q, z, dz: z, name="scaling")
    assert check_variational_symmetry(spec, scaling, jets) > 1e-3
    with pytest.warns(RuntimeWarning):
        noether_flux(spec, scaling, jets[0].q, jets[0].z, jets[0].dz, check_samples=jets)


def test_relabelling_flux_is_conserved_on_el_solutions(ch16):
    """Constant l-shift: Q = (0, 1, 0, 0), flux (pi u, pi); divergence is -EL_l."""
    spec = ch16[2]
    gen = SymmetryGenerator(lambda q, z, dz: np.broadcast_to([0.0, 1.0, 0.0, 0.0], np.shape(z)))
    jets = random_jets(spec, 10, seed=3)
    assert check_variational_symmetry(spec, gen, jets) < 1e-12
    j = jets[0]
    f = noether_flux(spec, gen, j.q, j.z, j.dz)
    assert np.allclose(f, [j.z[2] * j.z[0], j.z[2]])


def test_ch_structure_matrix_entries():
    u, l, pi, W = range(4)
    kt = assemble_structure_matrix(CH, np.array([0.0, 0.0, 1.0, 0.0])).k[1]
    expected = np.zeros((4, 4))
    expected[l, pi], expected[pi, l] = -1.0, 1.0
    assert np.array_equal(kt, expected)
    kx = assemble_structure_matrix(CH, np.array([2.0, 0.0, 3.0, 0.0])).k[0]
    assert kx[u, l] == 3.0 and kx[l, u] == -3.0
    assert kx[u, W] == -1.0 and kx[W, u] == 1.0
    assert kx[l, pi] == -2.0     # -u: the u l_x coupling


def test_hamiltonian_values_and_w_row():
    assert CH.hamiltonian(np.array([1.0, 5.0, 7.0, 0.0])) == -0.5
    assert CH.hamiltonian(np.array([0.0, 5.0, 7.0, 1.0])) == 0.5
    z = np.array([0.3, 0.1, -0.4, 0.2])
    dz = np.zeros((2, 4))
    dz[0, 0] = 0.9                                   # u_x = 0.9 while W = 0.2
    assert el_residual(CH, z, dz)[3] == pytest.approx(0.9 - 0.2)


def test_corrupted_structure_detected():
    def corrupted(z):
        k = structure_from_grad(np.asarray(CH.coeff_grad(z)))
        k[0, 0, 1], k[0, 1, 0] = z[2] ** 2, -z[2] ** 2
        return k
    z = np.array([[0.1, 0.2, 1.0, 0.3]])
    assert check_closedness(CH, z, structure=corrupted) > 0.5


def test_constant_coefficient_spec_is_trivially_closed():
    const = np.zeros((2, 3, 3))
    spec = AffineLagrangianSpec(
        n_dep=3, n_indep=2,
        coeff=lambda z: np.broadcast_to(np.arange(6.0).reshape(2, 3), z.shape[:-1] + (2, 3)),
        coeff_grad=lambda z: np.broadcast_to(const, z.shape[:-1] + (2, 3, 3)),
        hamiltonian=lambda z: 0.5 * np.sum(z**2, -1), hamiltonian_grad=lambda z: z)
    assert check_closedness(spec, np.random.default_rng(0).standard_normal((5, 3))) == 0.0
    assert np.array_equal(assemble_structure_matrix(spec, np.ones(3)).k, const)


def test_time_translation_symmetry_and_zero_generator():
    tt = SymmetryGenerator(lambda q, z, dz: -dz[..., 1, :],
                           lambda q, z, dz: np.stack([0 * CH.lagrangian(z, dz), -CH.lagrangian(z, dz)], -1))
    jets = random_jets(CH, 10, seed=4)
    assert check_variational_symmetry(CH, tt, jets) < 1e-6
    zero = SymmetryGenerator(lambda q, z, dz: np.zeros(np.shape(z)))
    assert check_variational_symmetry(CH, zero, jets) == 0.0
    j = jets[0]
    assert np.array_equal(noether_flux(CH, zero, j.q, j.z, j.dz), np.zeros(2))
