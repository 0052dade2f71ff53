import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from msflow.diagnostics import convergence_order
from msflow.epdiff import (ChParams, ch_energy, ch_residual, clebsch_init, label_gradient,
                           momentum_map, peakon_initial, periodic_distance, sine_initial,
                           w_consistency, ch_lagrangian_spec)
from msflow.grid import GridSpec, helmholtz_apply
from msflow.mslagrangian import el_residual

TWO_PI = 2 * np.pi


def ch_params(n, lam=1.0, dt=0.01):
    return ChParams(lam, GridSpec(n, TWO_PI, dt))


def test_params_reject_nonpositive_lambda():
    with pytest.raises(ValueError):
        ch_params(16, lam=0.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**16), lam=st.floats(0.2, 2.0))
def test_clebsch_init_reproduces_helmholtz_momentum(seed, lam):
    p = ch_params(32, lam)
    u0 = np.random.default_rng(seed).standard_normal(32)
    s = clebsch_init(u0, p)
    assert np.array_equal(s.u, u0)
    assert np.array_equal(s.label_offset, np.zeros(32))
    assert np.array_equal(label_gradient(s, p.grid.dx), np.ones(32))
    assert np.array_equal(momentum_map(s, p), helmholtz_apply(u0, lam, p.grid.dx))
    assert np.array_equal(w_consistency(s.u, s.W, p.grid.dx), np.zeros(32))


def test_clebsch_init_density():
    p = ch_params(16)
    s = clebsch_init(np.zeros(16), p, with_density=True)
    assert s.names[-2:] == ("rho", "phi") and np.array_equal(s.rho, np.ones(16))
    with pytest.raises(ValueError):
        clebsch_init(np.zeros(16), p, rho0=np.full(16, -1.0))
    with pytest.raises(ValueError):
        clebsch_init(np.zeros(8), p)


def test_spec_time_coefficients_affine():
    p = ch_params(16)
    for dens in (False, True):
        spec = ch_lagrangian_spec(p, with_density=dens)
        assert spec.time_coeff_is_affine()
        assert spec.winding[spec.index("l")] == 1.0


def test_el_equations_give_ch_on_constraint_surface():
    """With W = u_x, pi = -m and l = x the u, W and pi rows of the EL system vanish."""
    p = ch_params(16, lam=0.7)
    spec = ch_lagrangian_spec(p)
    rng = np.random.default_rng(0)
    for _ in range(10):
        u, ux, uxx, ut = rng.standard_normal(4)
        m = u - p.lam**2 * uxx
        z = np.array([u, 0.0, -m, ux])
        # l = x - u t locally: l_x = 1, l_t = -u; W_x = u_xx
        dz = np.array([[ux, 1.0, 0.0, uxx], [ut, -u, 0.0, 0.0]])
        r = el_residual(spec, z, dz)
        assert abs(r[0]) < 1e-12 and abs(r[2]) < 1e-12 and abs(r[3]) < 1e-12


def test_ch_residual_against_sympy():
    x, t = sp.symbols("x t")
    lam = 0.8
    u = 0.3 * sp.sin(x - 0.5 * t) + 0.1 * sp.cos(2 * x + t)
    m = u - lam**2 * u.diff(x, 2)
    exact = sp.lambdify((x, t), m.diff(t) + u * m.diff(x) + 2 * m * u.diff(x), "numpy")
    uf = sp.lambdify((x, t), u, "numpy")
    ns, errs = (32, 64, 128), []
    for n in ns:
        p = ch_params(n, lam)
        dt = p.grid.dx
        xs = p.grid.x
        r = ch_residual(uf(xs, -dt), uf(xs, 0.0), uf(xs, dt), p, dt)
        errs.append(np.abs(r - exact(xs, 0.0)).max())
    assert convergence_order([TWO_PI / n for n in ns], errs) == pytest.approx(2, abs=0.1)


def test_peakon_and_sine_profiles():
    p = ch_params(64, lam=1.0)
    x0 = p.grid.x[20]
    u = peakon_initial(1.5, x0, p)
    assert u.max() == u[20] == 1.5
    assert np.allclose(u[20 - 5], u[20 + 5])
    with pytest.raises(ValueError):
        peakon_initial(0.0, x0, p)
    assert np.allclose(periodic_distance([0.1, 6.2], 0.0, TWO_PI), [0.1, TWO_PI - 6.2])
    s = sine_initial(0.2, p, 2)
    assert np.allclose(s, 0.2 * np.sin(2 * p.grid.x))


def test_ch_energy_of_sine_mode():
    p = ch_params(32, lam=0.9)
    dx = p.grid.dx
    u = np.sin(p.grid.x)
    symbol = 1 + p.lam**2 * 4 * np.sin(dx / 2) ** 2 / dx**2
    assert ch_energy(u, p) == pytest.approx(0.5 * symbol * np.pi, rel=1e-13)


def test_peakon_momentum_concentrates():
    p = ChParams(0.25, GridSpec(512, TWO_PI, 0.01))
    u = peakon_initial(1.0, p.grid.x[256], p)
    assert u[256 + int(round(0.25 / p.grid.dx))] == pytest.approx(np.exp(-1), rel=0.05)
    m = helmholtz_apply(u, p.lam, p.grid.dx)
    assert m[253:260].sum() >= 0.95 * m.sum()


def test_momentum_map_of_perturbed_labels():
    errs = []
    for n in (64, 128):
        p = ch_params(n)
        s = clebsch_init(np.zeros(n), p)
        s.data[1] = 0.1 * np.sin(p.grid.x)
        s.data[2] = 1.0
        errs.append(np.abs(momentum_map(s, p) + 1 + 0.1 * np.cos(p.grid.x)).max())
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.02)


def test_scheme_keeps_cell_averaged_w_constraint_and_density_mass():
    from msflow.integrator import BoxSchemeConfig, integrate
    p = ch_params(32, dt=0.02)
    spec = ch_lagrangian_spec(p, with_density=True)
    x, dx = p.grid.x, p.grid.dx
    states = integrate(spec, clebsch_init(0.2 * np.sin(x), p, rho0=1 + 0.3 * np.sin(x)),
                       BoxSchemeConfig(dt=0.02, n_steps=10), p.grid)
    fwd = lambda a: 0.5 * (a + np.roll(a, -1))
    d = lambda a: (np.roll(a, -1) - a) / dx
    for s0, s1 in zip(states[:-1], states[1:]):
        wbar = 0.5 * (fwd(s0.W) + fwd(s1.W))
        assert np.abs(wbar - 0.5 * (d(s0.u) + d(s1.u))).max() < 1e-12
        assert abs(np.sum(s1.rho) - np.sum(s0.rho)) < 1e-12
