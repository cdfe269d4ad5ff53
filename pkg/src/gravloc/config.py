"""Run configuration: flat ``key = value`` text files with CLI overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .densmat import QuadratureSpec
from .units import (
    M_P,
    REFERENCE_LAMBDA_G_CM,
    REFERENCE_LAMBDA_MULTIPLE,
    REFERENCE_MASS_MP,
    REFERENCE_RADIUS_CM,
    REFERENCE_T_FINAL,
    PhysicalSetup,
    density_from_radius,
    make_setup,
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run. Defaults are the reference experiment.

    Exactly one of ``density`` (g/cm^3) and ``radius_cm`` sizes the ball.
    ``reference_width_cm`` replaces the closed-form lambda_g as the unit of
    ``lambda_multiple`` when set.
    """

    mass_mp: float = REFERENCE_MASS_MP
    density: float | None = None
    radius_cm: float | None = REFERENCE_RADIUS_CM
    lambda_multiple: float = REFERENCE_LAMBDA_MULTIPLE
    reference_width_cm: float | None = REFERENCE_LAMBDA_G_CM
    n_points: int = 10_000
    r_max_fraction: float = 0.5
    t_final: float = REFERENCE_T_FINAL
    n_steps: int = 100_000
    checkpoint_every: int = 10_000
    quad_n_y: int = 512
    quad_n_s: int = 256
    quad_widths: float = 4.0
    slice_n: int = 201
    slice_widths: float = 3.0
    gravity: bool = True
    checkpoint_entropy: bool = True
    workers: int = 0
    output_dir: str = "run"

    def __post_init__(self) -> None:
        if (self.density is None) == (self.radius_cm is None):
            raise ConfigError("set exactly one of density and radius_cm")
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("n_steps", "checkpoint_every", "workers"):
                if v < 0:
                    raise ConfigError(f"{f.name} must be >= 0")
            elif f.name == "t_final":
                if v < 0:
                    raise ConfigError("t_final must be >= 0")
            elif isinstance(v, (int, float)) and not isinstance(v, bool) and not v > 0:
                raise ConfigError(f"{f.name} must be positive")
        if self.n_steps == 0 and self.t_final != 0:
            raise ConfigError("n_steps = 0 requires t_final = 0")
        if self.slice_n % 2 == 0:
            raise ConfigError("slice_n must be odd so that x = 0 is a node")

    def make_setup(self) -> PhysicalSetup:
        density = self.density
        if density is None:
            density = density_from_radius(self.mass_mp * M_P, self.radius_cm)
        return make_setup(self.mass_mp, density, self.lambda_multiple, self.reference_width_cm)

    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(self.quad_n_y, self.quad_n_s, self.quad_widths)

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _format(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _field_types() -> dict[str, str]:
    return {f.name: str(f.type) for f in fields(RunConfig)}


def parse_value(key: str, text: str) -> Any:
    types = _field_types()
    if key not in types:
        raise ConfigError(f"unknown config key {key!r}")
    kind = types[key]
    text = text.strip()
    if "None" in kind and text.lower() in ("none", ""):
        return None
    try:
        if kind.startswith("bool"):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind.startswith("int"):
            return int(float(text)) if "e" in text.lower() else int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    return text


def loads(text: str, base: RunConfig | None = None) -> RunConfig:
    values: dict[str, Any] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        values[key] = parse_value(key, val)
    return with_overrides(base or RunConfig(), values)


def with_overrides(base: RunConfig, values: dict[str, Any]) -> RunConfig:
    """Apply ``values``; giving one of density/radius_cm clears the other."""
    values = dict(values)
    if values.get("density") is not None and "radius_cm" not in values:
        values["radius_cm"] = None
    if values.get("radius_cm") is not None and "density" not in values:
        values["density"] = None
    return base.replace(**values)


def load(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return loads(Path(path).read_text(), base)
