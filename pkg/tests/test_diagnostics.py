import json

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from msflow.diagnostics import (DiagnosticSeries, MissingDensity, NonpositiveDensity, circulation,
                                compute_series, convergence_order, energy_density_and_flux,
                                momentum_density_and_flux, momentum_residual_2d,
                                relabelling_invariant, time_derivative, total_energy,
                                vorticity_residual_2d, write_summary, xi_from_name)
from msflow.epdiff import ChParams, ch_energy, clebsch_init
from msflow.grid import GridSpec, central_diff, read_csv

TWO_PI = 2 * np.pi
X, T = sp.symbols("x t")
U_SYM = 0.3 * sp.sin(X - 0.4 * T) + 0.1 * sp.cos(2 * X + T) + 0.05


def params(n, lam=0.8):
    return ChParams(lam, GridSpec(n, TWO_PI, 0.01))


def sym_ch(lam):
    m = U_SYM - lam**2 * U_SYM.diff(X, 2)
    return m.diff(T) + U_SYM * m.diff(X) + 2 * m * U_SYM.diff(X)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0.1, 10), p=st.floats(0.5, 4), k=st.integers(2, 6))
def test_convergence_order_recovers_power_law(c, p, k):
    h = 0.5 ** np.arange(k)
    assert convergence_order(h, c * h**p) == pytest.approx(p, abs=1e-10)


def test_convergence_order_rejects_bad_input():
    with pytest.raises(ValueError):
        convergence_order([0.1], [1.0])
    with pytest.raises(ValueError):
        convergence_order([0.1, 0.05], [1.0, 0.0])


def test_series_validation_and_io(tmp_path):
    with pytest.raises(ValueError):
        DiagnosticSeries("e", [0, 0], [1, 2])
    with pytest.raises(ValueError):
        DiagnosticSeries("e", [0, 1], [1, 2], "conserved-ish")
    s = DiagnosticSeries("e", [0, 1, 2], [1.0, 1.5, 0.5])
    assert s.max_drift() == 0.5
    r = DiagnosticSeries("r", [0, 1], [-3.0, 1.0], "residual-to-zero")
    assert r.max_drift() == 3.0
    s.to_csv(tmp_path / "e.csv")
    assert np.array_equal(read_csv(tmp_path / "e.csv")["value"], s.values)
    write_summary(tmp_path / "s.json", [s, r], {"energy": 2.0})
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["convergence_orders"] == {"energy": 2.0} and len(doc["series"]) == 2


def test_time_derivative_exact_on_quadratics():
    t = np.arange(6) * 0.1
    v = 3 * t**2 - t + 2
    assert np.allclose(time_derivative(v, 0.1), 6 * t - 1, atol=1e-12)
    with pytest.raises(ValueError):
        time_derivative([1.0, 2.0], 0.1)


def test_momentum_and_energy_laws_consistent_with_ch():
    """m_t + F_x = CH(u) and e_t + G_x = u CH(u) hold identically; discretely to O(h^2)."""
    lam = 0.8
    ch = sp.lambdify((X, T), sym_ch(lam), "numpy")
    uf = sp.lambdify((X, T), U_SYM, "numpy")
    utf = sp.lambdify((X, T), U_SYM.diff(T), "numpy")
    ns, em, ee = (32, 64, 128), [], []
    for n in ns:
        p = params(n, lam)
        x, dx = p.grid.x, p.grid.dx
        dt = dx
        states = [clebsch_init(uf(x, k * dt), p, t=k * dt) for k in (-1, 0, 1)]
        m = [momentum_density_and_flux(s, p) for s in states]
        e = [energy_density_and_flux(s, utf(x, s.t), p) for s in states]
        res_m = (m[2][0] - m[0][0]) / (2 * dt) + central_diff(m[1][1], dx)
        res_e = (e[2][0] - e[0][0]) / (2 * dt) + central_diff(e[1][1], dx)
        em.append(np.abs(res_m - ch(x, 0.0)).max())
        ee.append(np.abs(res_e - uf(x, 0.0) * ch(x, 0.0)).max())
    hs = [TWO_PI / n for n in ns]
    assert convergence_order(hs, em) == pytest.approx(2, abs=0.15)
    assert convergence_order(hs, ee) == pytest.approx(2, abs=0.15)


def test_total_energy_tends_to_hamiltonian():
    """The two discrete energies differ only through D2 versus D.D, an O(h^2) gap."""
    gaps = []
    for n in (32, 64, 128):
        p = params(n)
        u = 0.2 * np.sin(p.grid.x) + 0.1
        gaps.append(abs(total_energy(clebsch_init(u, p), p) - ch_energy(u, p)))
    assert convergence_order([1, 0.5, 0.25], gaps) == pytest.approx(2, abs=0.05)


def test_xi_registry():
    L = TWO_PI
    l = np.linspace(0, L, 7)
    assert np.array_equal(xi_from_name("const", L)(l), np.ones(7))
    assert np.array_equal(xi_from_name("linear", L)(l), l)
    assert np.allclose(xi_from_name("sin:2", L)(l), np.sin(2 * l))
    tanh = xi_from_name("tanh:3", L)
    assert np.allclose(tanh(l + L), tanh(l))
    for bad in ("cos:1", "sin:x", "const:1", "tanh"):
        with pytest.raises(ValueError):
            xi_from_name(bad, L)


def test_relabelling_and_circulation_at_identity_chart():
    p = params(32)
    u = 0.2 * np.sin(p.grid.x)
    s = clebsch_init(u, p, rho0=1 + 0.5 * np.cos(p.grid.x))
    pi = s.periodic("pi")
    assert relabelling_invariant(s, xi_from_name("const", TWO_PI), p.grid) == pytest.approx(np.sum(pi) * p.grid.dx)
    assert circulation(s, p) == pytest.approx(np.sum(-pi / (1 + 0.5 * np.cos(p.grid.x))) * p.grid.dx)
    with pytest.raises(MissingDensity):
        circulation(clebsch_init(u, p), p)
    bad = s.copy()
    bad.data[s.names.index("rho"), 0] = -1
    with pytest.raises(NonpositiveDensity):
        circulation(bad, p)


def test_compute_series_names():
    p = params(16)
    states = [clebsch_init(0.1 * np.sin(p.grid.x), p, t=t) for t in (0.0, 0.1)]
    for name in ("energy", "momentum", "clebsch_momentum", "conjugate_momentum", "relabelling:sin:1"):
        s = compute_series(name, states, p)
        assert s.max_drift() == 0.0
    assert compute_series("conjugate_momentum", states, p).expected_behavior == "conserved-exact"
    with pytest.raises(ValueError):
        compute_series("vorticity", states, p)


def _sym_fields():
    x, y, t = sp.symbols("x y t")
    us = [sp.sin(x + 0.3 * y) * sp.cos(t) + 0.2 * sp.cos(2 * y - t),
          0.5 * sp.cos(x - y + 0.5 * t) + 0.1 * sp.sin(3 * x)]
    return (x, y, t), us


def test_momentum_residual_2d_against_sympy():
    (x, y, t), us = _sym_fields()
    lam = 0.7
    xs = [x, y]
    ms = [ui - lam**2 * (ui.diff(x, 2) + ui.diff(y, 2)) for ui in us]
    e = sum(ui**2 / 2 for ui in us) + sum(lam**2 / 2 * ui.diff(a) ** 2 for ui in us for a in xs)
    M = [ms[i].diff(t) - sum((sum(lam**2 * us[k].diff(xs[i]) * us[k].diff(xs[j]) for k in range(2))
                              - us[j] * ms[i] - (e if i == j else 0)).diff(xs[j]) for j in range(2))
         for i in range(2)]
    Mf = [sp.lambdify((x, y, t), Mi, "numpy") for Mi in M]
    uf = [sp.lambdify((x, y, t), ui, "numpy") for ui in us]
    pts = np.random.default_rng(3).uniform(-1, 1, (3, 10))
    hs, errs = (1e-2, 5e-3, 2.5e-3), []
    for h in hs:
        num = momentum_residual_2d(uf, None, lam, h)
        errs.append(max(np.abs(num[i](*pts) - Mf[i](*pts)).max() for i in range(2)))
    assert convergence_order(hs, errs) == pytest.approx(2, abs=0.1)


def test_vorticity_residual_of_rest_state():
    zero = [lambda x, y, t: 0 * x, lambda x, y, t: 0 * x]
    pts = np.zeros((3, 4))
    assert np.array_equal(vorticity_residual_2d(zero, zero, 1.0, 1e-3, *pts), np.zeros(4))


@pytest.mark.parametrize("c", [0.0, 0.7, -1.3])
def test_constant_flow_densities_and_fluxes(c):
    p = params(16)
    s = clebsch_init(np.full(16, c), p)
    e, fe = energy_density_and_flux(s, np.zeros(16), p)
    m, fm = momentum_density_and_flux(s, p)
    assert np.allclose(e, c**2 / 2) and np.allclose(fe, c**3)
    # momentum flux u m + u^2/2 - lam^2 u_x^2/2 = 3 c^2 / 2
    assert np.allclose(m, c) and np.allclose(fm, 1.5 * c**2)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 1000))
def test_relabelling_invariant_linear_in_xi(a, b, seed):
    p = params(16)
    rng = np.random.default_rng(seed)
    s = clebsch_init(rng.standard_normal(16), p)
    s.data[1] = 0.3 * np.sin(p.grid.x + rng.uniform(0, 6))
    f1, f2 = xi_from_name("sin:1", TWO_PI), xi_from_name("tanh:2", TWO_PI)
    lhs = relabelling_invariant(s, lambda l: a * f1(l) + b * f2(l), p.grid)
    rhs = a * relabelling_invariant(s, f1, p.grid) + b * relabelling_invariant(s, f2, p.grid)
    assert lhs == pytest.approx(rhs, abs=1e-13 * (1 + abs(a) + abs(b)))


def test_circulation_with_unit_density_is_momentum():
    p = params(32)
    s = clebsch_init(0.2 * np.sin(p.grid.x), p, with_density=True)
    from msflow.epdiff import momentum_map
    assert circulation(s, p) == np.sum(momentum_map(s, p)) * p.grid.dx


def test_vorticity_residual_of_uniform_translation():
    u = [lambda x, y, t: 0 * x + 0.4, lambda x, y, t: 0 * x - 1.1]
    pts = np.random.default_rng(0).uniform(-1, 1, (3, 5))
    assert np.abs(vorticity_residual_2d(u, None, 1.0, 1e-3, *pts)).max() < 1e-9
