"""Named property suites run by ``msflow verify``."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List

from .euler_check import euler_report
from .studies import noether_study, refinement_study, structure_study, symplecticity_study


def _check(name, value, threshold, passed, note=None):
    out = {"name": name, "value": value, "threshold": threshold, "passed": bool(passed)}
    if note:
        out["note"] = note
    return out


def suite_structure() -> List[dict]:
    r = structure_study()
    return [
        _check("antisymmetry", r["antisymmetry"], 0.0, r["antisymmetry"] == 0.0),
        _check("closedness", r["closedness"], 1e-6, r["closedness"] <= 1e-6),
        _check("runtime_s", r["runtime"], 1.0, r["runtime"] < 1.0),
    ]


def suite_symplecticity() -> List[dict]:
    r = symplecticity_study()
    return [_check("max_symplecticity_residual", r["max_residual"], 1e-10, r["max_residual"] <= 1e-10)]


def suite_noether() -> List[dict]:
    r = noether_study()
    d = r["drift"]
    return [
        _check("conjugate_momentum_drift", d["conjugate_momentum"], 1e-10, d["conjugate_momentum"] <= 1e-10),
        _check("momentum_drift", d["momentum"], 1e-10, d["momentum"] <= 1e-10,
               "no continuous translation symmetry on the grid; conserved to truncation order only"),
        _check("affine_relabelling_drift", d["affine"], 1e-10, d["affine"] <= 1e-10,
               "linear label functions are not periodic; the seam flux enters"),
        _check("affine_relabelling_seam_corrected_drift", d["affine_seam_corrected"], 1e-10,
               d["affine_seam_corrected"] <= 1e-10),
    ]


def suite_euler() -> List[dict]:
    r = euler_report()
    out = []
    for name in ("euler_el_residual", "euler_elimination_residual"):
        order = r[name]["order"]
        out.append(_check(f"{name}_order", order, "2 +- 0.1", abs(order - 2) <= 0.1))
    circ = r["circulation_identity_residual"]["max_residual"]
    bound = [2 * h**2 for h in r["h"]]
    out.append(_check("circulation_identity_residual", circ, bound, all(c <= b for c, b in zip(circ, bound))))
    return out


def suite_convergence() -> List[dict]:
    r = refinement_study()
    out = []
    for key in ("relabelling_sin_drift", "ch_residual", "circulation_drift"):
        order = r["orders"][key]
        out.append(_check(f"{key}_order", order, "2 +- 0.3", abs(order - 2) <= 0.3))
    ratios = r["ratios"]["energy_drift"]
    out.append(_check("energy_drift_ratio", ratios, "4 +- 30%", all(2.8 <= q <= 5.2 for q in ratios)))
    return out


SUITES: Dict[str, Callable[[], List[dict]]] = {
    "structure": suite_structure,
    "symplecticity": suite_symplecticity,
    "noether": suite_noether,
    "euler": suite_euler,
    "convergence": suite_convergence,
}


def run_suites(names, workers: int = 1) -> Dict[str, List[dict]]:
    for n in names:
        if n not in SUITES:
            raise KeyError(n)
    if workers > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda n: SUITES[n](), names))
    else:
        results = [SUITES[n]() for n in names]
    return dict(zip(names, results))
