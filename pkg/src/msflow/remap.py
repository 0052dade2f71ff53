"""Label remapping back to the identity chart at fixed momentum."""

from __future__ import annotations

import numpy as np

from .epdiff import label_gradient
from .grid import GridSpec, StateField

DEFAULT_THRESHOLD = 0.1


def tangling_metric(state: StateField, grid: GridSpec) -> float:
    """min_j (l_{j+1} - l_j) / dx with the cyclic wrap; <= 0 means folded labels."""
    off = state.periodic("l")
    w = state.winding[state.names.index("l")]
    fwd = (np.roll(off, -1) - off) / grid.dx + w
    return float(fwd.min())


def remap_to_identity(state: StateField, grid: GridSpec) -> StateField:
    """Reset l to x and set pi' = -m so that -pi' * D l' reproduces m exactly.

    D l' is exactly 1 because labels are stored as offsets from x.  All other
    variables are copied untouched.
    """
    new = state.copy()
    i_l = state.names.index("l")
    i_p = state.names.index("pi")
    new.data[i_p] = state.data[i_p] * label_gradient(state, grid.dx)
    new.data[i_l] = 0.0
    return new


def needs_remap(state: StateField, grid: GridSpec, threshold: float = DEFAULT_THRESHOLD) -> bool:
    return tangling_metric(state, grid) < threshold
