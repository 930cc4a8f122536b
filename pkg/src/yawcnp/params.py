"""Vehicle parameter sets and their key-value file format.

A parameter file holds one `name = value` pair per line (SI units).  Lines
starting with `#` and blank lines are ignored.  Five sets ship with the
package: compact (the default), small_car, suv, van and sports_car.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .errors import InvalidRegimeError

BUNDLED_VEHICLES = ("compact", "small_car", "suv", "van", "sports_car")
DEFAULT_VEHICLE = "compact"


@dataclass(frozen=True)
class PacejkaCoeffs:
    """Magic-formula shape coefficients for the longitudinal and lateral channels."""

    b_long: float = 10.0
    c_long: float = 1.9
    e_long: float = 0.97
    b_lat: float = 10.0
    c_lat: float = 1.3
    e_lat: float = 0.97


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of one vehicle.

    m: mass [kg]; I_z: yaw moment of inertia [kg m^2]; l_f, l_r: distances
    from the center of gravity to the front/rear axle [m]; h_cg: height of the
    center of gravity [m]; C_Sf, C_Sr: specific cornering stiffness per unit
    vertical load [1/rad]; mu: friction coefficient; R_w: effective tire
    radius [m]; I_w: wheel spin inertia per axle [kg m^2]; torque_split:
    fraction of drive torque applied at the front axle.
    """

    m: float
    I_z: float
    l_f: float
    l_r: float
    h_cg: float
    C_Sf: float
    C_Sr: float
    mu: float = 1.0
    R_w: float = 0.32
    I_w: float = 3.0
    g: float = 9.81
    torque_split: float = 0.0
    pacejka: PacejkaCoeffs = field(default_factory=PacejkaCoeffs)
    vehicle_id: str = "custom"

    @property
    def l_wb(self) -> float:
        return self.l_f + self.l_r

    def __post_init__(self):
        checks = [
            (self.m > 0, "m must be positive"),
            (self.I_z > 0, "I_z must be positive"),
            (self.l_f > 0, "l_f must be positive"),
            (self.l_r > 0, "l_r must be positive"),
            (self.h_cg > 0, "h_cg must be positive"),
            (0.0 < self.mu <= 1.2, "mu must lie in (0, 1.2]"),
            (self.R_w > 0, "R_w must be positive"),
            (0.0 <= self.torque_split <= 1.0, "torque_split must lie in [0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidRegimeError(msg)

    def with_friction(self, mu: float) -> "VehicleParams":
        return replace(self, mu=mu)

    def with_added_mass(self, mass_extra: float) -> "VehicleParams":
        """Add a uniformly distributed load.

        The yaw inertia is rescaled proportionally to the mass; the center of
        gravity is assumed unchanged.
        """
        if mass_extra == 0.0:
            return self
        scale = (self.m + mass_extra) / self.m
        return replace(self, m=self.m + mass_extra, I_z=self.I_z * scale)


_FLOAT_KEYS = {
    "m", "I_z", "l_f", "l_r", "l_wb", "h_cg", "C_Sf", "C_Sr", "mu", "R_w",
    "I_w", "g", "torque_split",
    "pacejka_b_long", "pacejka_c_long", "pacejka_e_long",
    "pacejka_b_lat", "pacejka_c_lat", "pacejka_e_lat",
}


def parse_params(text: str, vehicle_id: str = "custom") -> VehicleParams:
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidRegimeError(f"line {lineno}: expected 'name = value', got {line!r}")
        name, _, value = line.partition("=")
        name = name.strip()
        if name not in _FLOAT_KEYS:
            raise InvalidRegimeError(f"line {lineno}: unknown parameter {name!r}")
        values[name] = float(value.strip())

    required = ("m", "I_z", "l_f", "l_r", "h_cg", "C_Sf", "C_Sr")
    missing = [k for k in required if k not in values]
    if missing:
        raise InvalidRegimeError(f"missing parameters: {missing}")

    if "l_wb" in values:
        declared = values.pop("l_wb")
        if not math.isclose(declared, values["l_f"] + values["l_r"], abs_tol=1e-9):
            raise InvalidRegimeError("l_wb must equal l_f + l_r")

    pacejka = PacejkaCoeffs(
        b_long=values.pop("pacejka_b_long", 10.0),
        c_long=values.pop("pacejka_c_long", 1.9),
        e_long=values.pop("pacejka_e_long", 0.97),
        b_lat=values.pop("pacejka_b_lat", 10.0),
        c_lat=values.pop("pacejka_c_lat", 1.3),
        e_lat=values.pop("pacejka_e_lat", 0.97),
    )
    return VehicleParams(pacejka=pacejka, vehicle_id=vehicle_id, **values)


def load_params(path: str | Path) -> VehicleParams:
    path = Path(path)
    return parse_params(path.read_text(), vehicle_id=path.stem)


def load_vehicle(name: str) -> VehicleParams:
    """Load one of the bundled vehicle parameter sets by name."""
    if name not in BUNDLED_VEHICLES:
        raise KeyError(f"unknown vehicle {name!r}; bundled: {BUNDLED_VEHICLES}")
    text = resources.files("yawcnp.data").joinpath(f"{name}.params").read_text()
    return parse_params(text, vehicle_id=name)


def format_params(p: VehicleParams) -> str:
    lines = [
        f"m = {p.m!r}",
        f"I_z = {p.I_z!r}",
        f"l_f = {p.l_f!r}",
        f"l_r = {p.l_r!r}",
        f"h_cg = {p.h_cg!r}",
        f"C_Sf = {p.C_Sf!r}",
        f"C_Sr = {p.C_Sr!r}",
        f"mu = {p.mu!r}",
        f"R_w = {p.R_w!r}",
        f"I_w = {p.I_w!r}",
        f"g = {p.g!r}",
        f"torque_split = {p.torque_split!r}",
        f"pacejka_b_long = {p.pacejka.b_long!r}",
        f"pacejka_c_long = {p.pacejka.c_long!r}",
        f"pacejka_e_long = {p.pacejka.e_long!r}",
        f"pacejka_b_lat = {p.pacejka.b_lat!r}",
        f"pacejka_c_lat = {p.pacejka.c_lat!r}",
        f"pacejka_e_lat = {p.pacejka.e_lat!r}",
    ]
    return "\n".join(lines) + "\n"
