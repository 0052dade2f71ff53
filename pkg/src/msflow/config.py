"""Strict JSON run configuration."""

from __future__ import annotations

import hashlib
import json
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .diagnostics import xi_from_name
from .remap import DEFAULT_THRESHOLD

DIAGNOSTIC_NAMES = ("energy", "momentum", "clebsch_momentum", "conjugate_momentum", "circulation")


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=False, frozen=True)


class GridConfig(_Strict):
    n_cells: int = Field(ge=8)
    length: float = Field(gt=0)
    dt: float = Field(gt=0)
    n_steps: int = Field(ge=1)


class ParamsConfig(_Strict):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)
    lam: float = Field(gt=0, alias="lambda")


class DensityConfig(_Strict):
    """rho0 = 1 + amplitude * sin(2 pi k x / L)."""
    amplitude: float = Field(default=0.0, gt=-1, lt=1)
    wavenumber: int = 1


class ZeroInit(_Strict):
    type: Literal["zero"]
    density: Optional[DensityConfig] = None


class SineInit(_Strict):
    type: Literal["sine"]
    amplitude: float = 0.2
    wavenumber: int = 1
    offset: float = 0.0
    density: Optional[DensityConfig] = None


class BumpInit(_Strict):
    type: Literal["bump"]
    amplitude: float = 0.5
    x0: Optional[float] = None
    width: float = Field(default=0.5, gt=0)
    density: Optional[DensityConfig] = None


class PeakonInit(_Strict):
    type: Literal["peakon"]
    c: float = 1.0
    x0: Optional[float] = None
    density: Optional[DensityConfig] = None


class IntegratorConfig(_Strict):
    newton_tol: float = Field(default=1e-12, gt=0)
    newton_max_iter: int = Field(default=50, ge=1)
    jacobian_mode: Literal["analytic", "finite-difference"] = "analytic"
    time_quadrature: Literal["nodal", "box"] = "nodal"
    snapshot_stride: int = Field(default=1, ge=1)


class RemapConfig(_Strict):
    enabled: bool = True
    threshold: float = DEFAULT_THRESHOLD


class RunConfig(_Strict):
    model: Literal["ch"]
    grid: GridConfig
    params: ParamsConfig
    init: Union[ZeroInit, SineInit, BumpInit, PeakonInit] = Field(discriminator="type")
    integrator: IntegratorConfig = IntegratorConfig()
    diagnostics: List[str] = ["energy", "momentum", "conjugate_momentum"]
    remap: RemapConfig = RemapConfig()

    @field_validator("diagnostics")
    @classmethod
    def _known(cls, names):
        for name in names:
            if name.startswith("relabelling:"):
                xi_from_name(name.split(":", 1)[1], 1.0)
            elif name not in DIAGNOSTIC_NAMES:
                raise ValueError(f"unknown diagnostic {name!r}")
        if len(set(names)) != len(names):
            raise ValueError("duplicate diagnostic names")
        return names

    @property
    def with_density(self) -> bool:
        return self.init.density is not None

    def canonical(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)

    def content_hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def parse_config(data: Union[str, dict]) -> RunConfig:
    """Validate a config given as JSON text or a decoded dict."""
    try:
        if isinstance(data, str):
            data = json.loads(data)
        if "circulation" in data.get("diagnostics", []) and not (data.get("init") or {}).get("density"):
            raise ConfigError("circulation needs init.density")
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{loc}: {first['msg']}") from None
    except (json.JSONDecodeError, AttributeError, TypeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)
