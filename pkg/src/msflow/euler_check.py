"""Residual checks for the Clebsch/back-to-labels form of incompressible Euler.

Lagrangian (2D, k = 1, 2):

    L = rho |u|^2 / 2 + p (1 - rho) + pi_k (l_k,t + u_i l_k,i) + phi (rho_t + (rho u_i)_,i)

Fields are closed-form evaluators f(x, y, t) and every derivative is a
central difference with step h, so all residuals are O(h^2) on exact
solutions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Sequence

import numpy as np

from .diagnostics import convergence_order

Field = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
ROW_NAMES = ("u1", "u2", "rho", "l1", "l2", "pi1", "pi2", "phi", "p")
LOOP_POINTS = 256


class OpenLoop(ValueError):
    pass


@dataclass
class EulerFields:
    u: Sequence[Field]
    rho: Field
    p: Field
    l: Sequence[Field]
    pi: Sequence[Field]
    phi: Field
    h: float = 1e-3

    def __post_init__(self):
        if len(self.u) != 2 or len(self.l) != 2 or len(self.pi) != 2:
            raise ValueError("u, l and pi need two components")
        if not self.h > 0:
            raise ValueError("finite-difference step must be positive")


def _diff(f: Field, axis: int, h: float, x, y, t):
    e = [0.0, 0.0, 0.0]
    e[axis] = h
    return (f(x + e[0], y + e[1], t + e[2]) - f(x - e[0], y - e[1], t - e[2])) / (2 * h)


def _product(f: Field, g: Field) -> Field:
    return lambda x, y, t: f(x, y, t) * g(x, y, t)


def advective_derivative(fields: EulerFields, f: Field, x, y, t):
    """f_t + u_i f_,i."""
    h = fields.h
    out = _diff(f, 2, h, x, y, t)
    for i in range(2):
        out = out + fields.u[i](x, y, t) * _diff(f, i, h, x, y, t)
    return out


def euler_momentum_map(fields: EulerFields, x, y, t):
    """m = -pi_k grad l_k - phi <> rho, with phi <> rho = -rho grad phi."""
    h = fields.h
    rho = fields.rho(x, y, t)
    out = []
    for i in range(2):
        mi = -sum(fields.pi[k](x, y, t) * _diff(fields.l[k], i, h, x, y, t) for k in range(2))
        out.append(mi + rho * _diff(fields.phi, i, h, x, y, t))
    return np.array(out)


def euler_el_residual(fields: EulerFields, x, y, t) -> np.ndarray:
    """Variational equations, rows ordered as ``ROW_NAMES``.

    du:   rho u_i + pi_k l_k,i - rho phi_,i
    drho: |u|^2/2 - p - phi_t - u_i phi_,i
    dl:   -pi_k,t - (u_i pi_k)_,i
    dpi:  l_k,t + u_i l_k,i
    dphi: rho_t + (rho u_i)_,i
    dp:   1 - rho
    """
    h = fields.h
    u = [ui(x, y, t) for ui in fields.u]
    rho = fields.rho(x, y, t)
    m = euler_momentum_map(fields, x, y, t)
    rows = [rho * u[i] - m[i] for i in range(2)]
    rows.append(0.5 * (u[0] ** 2 + u[1] ** 2) - fields.p(x, y, t) - advective_derivative(fields, fields.phi, x, y, t))
    for k in range(2):
        flux = sum(_diff(_product(fields.u[i], fields.pi[k]), i, h, x, y, t) for i in range(2))
        rows.append(-_diff(fields.pi[k], 2, h, x, y, t) - flux)
    for k in range(2):
        rows.append(advective_derivative(fields, fields.l[k], x, y, t))
    rows.append(_diff(fields.rho, 2, h, x, y, t)
                + sum(_diff(_product(fields.rho, fields.u[i]), i, h, x, y, t) for i in range(2)))
    rows.append(1.0 - rho)
    return np.array(rows)


def euler_elimination_residual(u: Sequence[Field], p: Field, x, y, t, h: float) -> np.ndarray:
    """(u_t + (u.grad)u + grad p, div u)."""
    uv = [ui(x, y, t) for ui in u]
    rows = []
    for i in range(2):
        r = _diff(u[i], 2, h, x, y, t) + _diff(p, i, h, x, y, t)
        for j in range(2):
            r = r + uv[j] * _diff(u[i], j, h, x, y, t)
        rows.append(r)
    rows.append(_diff(u[0], 0, h, x, y, t) + _diff(u[1], 1, h, x, y, t))
    return np.array(rows)


# -- loop integrals ------------------------------------------------------------

def loop_points(loop: Callable, n: int = LOOP_POINTS) -> np.ndarray:
    """Sample a closed curve s -> (x, y), s in [0, 1), at n points; shape (2, n)."""
    s0 = np.asarray(loop(0.0), dtype=float)
    s1 = np.asarray(loop(1.0), dtype=float)
    if not np.allclose(s0, s1, rtol=0, atol=1e-10 * max(1.0, np.abs(s0).max())):
        raise OpenLoop("loop(0) and loop(1) differ")
    s = np.arange(n) / n
    return np.asarray(loop(s), dtype=float).reshape(2, n)


def loop_integral(vec: Callable, pts: np.ndarray) -> float:
    """Trapezoid rule for the line integral of vec(x, y) -> (2, n) along closed points.

    The tangent dX/ds is taken spectrally from the samples, so smooth closed
    curves are integrated to spectral accuracy.
    """
    n = pts.shape[1]
    k = np.fft.fftfreq(n, 1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    tangent = np.real(np.fft.ifft(2j * np.pi * k * np.fft.fft(pts, axis=1), axis=1))
    f = np.asarray(vec(pts[0], pts[1]), dtype=float)
    return float(np.sum(f * tangent) / n)


def circulation_identity_residual(fields: EulerFields, loop: Callable, dt: float,
                                  t: float = 0.0, n: int = LOOP_POINTS) -> float:
    """(C(t+dt) - C(t)) / dt with C the loop integral of m / rho along a material loop.

    The loop points are advanced with the midpoint rule in the flow of u.
    """
    pts = loop_points(loop, n)

    def integrand(tt):
        def vec(x, y):
            tv = np.full_like(x, tt)
            return euler_momentum_map(fields, x, y, tv) / fields.rho(x, y, tv)
        return vec

    c0 = loop_integral(integrand(t), pts)
    tv = np.full(n, t)
    k1 = np.array([ui(pts[0], pts[1], tv) for ui in fields.u])
    mid = pts + 0.5 * dt * k1
    k2 = np.array([ui(mid[0], mid[1], tv + 0.5 * dt) for ui in fields.u])
    new = pts + dt * k2
    c1 = loop_integral(integrand(t + dt), new)
    return (c1 - c0) / dt


# -- manufactured fields -------------------------------------------------------

def rigid_rotation_fields(omega: float = 1.0, c: float = 0.25, h: float = 1e-3) -> EulerFields:
    """u = omega (-y, x) with labels l = R(-omega t) x, pi = -omega J l, phi = -c t.

    Every variational equation holds exactly; p = omega^2 r^2 / 2 + c.
    """
    def l1(x, y, t):
        return np.cos(omega * t) * x + np.sin(omega * t) * y

    def l2(x, y, t):
        return -np.sin(omega * t) * x + np.cos(omega * t) * y

    return EulerFields(
        u=[lambda x, y, t: -omega * y + 0 * t, lambda x, y, t: omega * x + 0 * t],
        rho=lambda x, y, t: np.ones_like(x + y + t),
        p=lambda x, y, t: 0.5 * omega**2 * (x**2 + y**2) + c + 0 * t,
        l=[l1, l2],
        pi=[lambda x, y, t: omega * l2(x, y, t), lambda x, y, t: -omega * l1(x, y, t)],
        phi=lambda x, y, t: -c * t + 0 * (x + y),
        h=h,
    )


def taylor_green():
    """Steady Taylor-Green velocity and pressure evaluators."""
    u = [lambda x, y, t: np.sin(x) * np.cos(y) + 0 * t,
         lambda x, y, t: -np.cos(x) * np.sin(y) + 0 * t]
    p = lambda x, y, t: 0.25 * (np.cos(2 * x) + np.cos(2 * y)) + 0 * t
    return u, p


def circle(radius: float = 1.0, center=(0.0, 0.0)):
    def loop(s):
        s = np.asarray(s, dtype=float)
        return np.array([center[0] + radius * np.cos(2 * np.pi * s),
                         center[1] + radius * np.sin(2 * np.pi * s)])
    return loop


def euler_report(hs: Sequence[float] = (1e-2, 5e-3, 2.5e-3), n_points: int = 16,
                 seed: int = 0) -> Dict:
    """Max residuals and fitted orders for the manufactured Euler checks."""
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-1.0, 1.0, (2, n_points))
    t = rng.uniform(0.0, 1.0, n_points)
    el, elim, circ = [], [], []
    u_tg, p_tg = taylor_green()
    for h in hs:
        el.append(float(np.abs(euler_el_residual(rigid_rotation_fields(h=h), x, y, t)).max()))
        elim.append(float(np.abs(euler_elimination_residual(u_tg, p_tg, x, y, t, h)).max()))
        circ.append(abs(circulation_identity_residual(rigid_rotation_fields(h=h), circle(0.8), dt=h)))
    report = {"h": list(hs)}
    for name, vals in (("euler_el_residual", el), ("euler_elimination_residual", elim),
                       ("circulation_identity_residual", circ)):
        entry = {"max_residual": vals}
        if min(vals) > 0:
            entry["order"] = convergence_order(hs, vals)
        report[name] = entry
    return report
