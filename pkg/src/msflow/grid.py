"""Periodic 1D grid, node-centred fields, difference operators and I/O."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded


@dataclass(frozen=True)
class GridSpec:
    n_cells: int
    length: float
    dt: float

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ValueError("n_cells must be an integer >= 8")
        if not self.length > 0:
            raise ValueError("length must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n_cells) * self.dx

    @property
    def periodic(self) -> bool:
        return True

    def to_dict(self):
        return {"n_cells": int(self.n_cells), "length": float(self.length), "dt": float(self.dt)}


def central_diff(f, dx):
    """Second-order centred difference with periodic wrap."""
    f = np.asarray(f, dtype=float)
    if f.shape[-1] < 3:
        raise ValueError("central_diff needs at least 3 points")
    return (np.roll(f, -1, axis=-1) - np.roll(f, 1, axis=-1)) / (2 * dx)


def forward_diff(f, dx):
    return (np.roll(f, -1, axis=-1) - f) / dx


def second_diff(f, dx):
    f = np.asarray(f, dtype=float)
    return (np.roll(f, -1, axis=-1) - 2 * f + np.roll(f, 1, axis=-1)) / dx**2


def quadrature(f, dx):
    """Periodic rectangle rule, dx * sum(f)."""
    return dx * float(np.sum(f))


def helmholtz_apply(u, lam, dx):
    """m = u - lam^2 D2 u with the periodic 3-point Laplacian."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return np.asarray(u, dtype=float) - lam**2 * second_diff(u, dx)


def solve_cyclic_tridiagonal(a, b, c, d):
    """Solve a periodic tridiagonal system.

    Row i reads ``a[i] x[i-1] + b[i] x[i] + c[i] x[i+1] = d[i]`` with indices
    taken modulo n.  The corner couplings are removed with a Sherman-Morrison
    rank-one correction so that only two ordinary banded solves are needed.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    d = np.asarray(d, dtype=float)
    n = b.size
    gamma = -b[0]
    b[0] -= gamma
    b[-1] -= a[0] * c[-1] / gamma
    ab = np.zeros((3, n))
    ab[0, 1:] = c[:-1]
    ab[1] = b
    ab[2, :-1] = a[1:]
    uvec = np.zeros(n)
    uvec[0] = gamma
    uvec[-1] = c[-1]
    sol = solve_banded((1, 1), ab, np.column_stack([d, uvec]))
    y, q = sol[:, 0], sol[:, 1]
    # v = (1, 0, ..., 0, a[0]/gamma)
    vy = y[0] + a[0] * y[-1] / gamma
    vq = q[0] + a[0] * q[-1] / gamma
    return y - q * (vy / (1.0 + vq))


def helmholtz_invert(m, lam, dx):
    """Solve (I - lam^2 D2) u = m on the periodic grid."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    m = np.asarray(m, dtype=float)
    n = m.size
    r = lam**2 / dx**2
    if r == 0:
        return m.copy()
    return solve_cyclic_tridiagonal(np.full(n, -r), np.full(n, 1 + 2 * r), np.full(n, -r), m)


@dataclass
class StateField:
    """Values of every dependent variable on the grid at one time level.

    ``data`` has shape ``(n_vars, n_cells)`` and stores the periodic part of
    each variable; the physical value is ``data[i] + winding[i] * x``.
    """

    names: Sequence[str]
    data: np.ndarray
    t: float = 0.0
    winding: Optional[Sequence[float]] = None

    def __post_init__(self):
        self.names = tuple(self.names)
        self.data = np.array(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[0] != len(self.names):
            raise ValueError("data must have shape (n_vars, n_cells)")
        if self.winding is None:
            self.winding = (0.0,) * len(self.names)
        self.winding = tuple(float(w) for w in self.winding)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("state contains non-finite values")

    @property
    def n_cells(self) -> int:
        return self.data.shape[1]

    def periodic(self, name: str) -> np.ndarray:
        return self.data[self.names.index(name)]

    def full(self, name: str, x: np.ndarray) -> np.ndarray:
        i = self.names.index(name)
        return self.data[i] + self.winding[i] * x

    def copy(self, **changes):
        new = type(self)(self.names, self.data.copy(), self.t, self.winding)
        for k, v in changes.items():
            setattr(new, k, v)
        return new


# -- serialization ---------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(path, columns: Dict[str, np.ndarray]):
    """One column per entry; values written with 17 significant digits."""
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=float) for k in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*arrays):
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> Dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    return {name: cols[:, i].copy() for i, name in enumerate(header)}


def state_columns(state: StateField, grid: GridSpec, skip_zero: Sequence[str] = ()):
    x = grid.x
    cols = {"x": x}
    for name in state.names:
        vals = state.full(name, x)
        if name in skip_zero and not np.any(vals):
            continue
        cols[name] = vals
    return cols


def state_to_csv(state: StateField, grid: GridSpec, path, skip_zero: Sequence[str] = ("phi",)):
    write_csv(path, state_columns(state, grid, skip_zero))


def state_from_csv(path, names: Sequence[str], winding: Sequence[float], t: float = 0.0):
    """Load a snapshot; variables absent from the file are read as zero."""
    cols = read_csv(path)
    x = cols["x"]
    data = []
    for name, w in zip(names, winding):
        vals = cols.get(name, np.zeros_like(x))
        data.append(vals - w * x)
    return StateField(names, np.array(data), t, winding)


def state_to_json(state: StateField, grid: GridSpec, extra: Optional[dict] = None) -> str:
    doc = {
        "grid": grid.to_dict(),
        "t": state.t,
        "names": list(state.names),
        "winding": list(state.winding),
        "data": {n: [float(v) for v in state.data[i]] for i, n in enumerate(state.names)},
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc)


def state_from_json(text: str):
    doc = json.loads(text)
    grid = GridSpec(**doc["grid"])
    names = doc["names"]
    data = np.array([doc["data"][n] for n in names], dtype=float)
    return StateField(names, data, doc["t"], doc["winding"]), grid
