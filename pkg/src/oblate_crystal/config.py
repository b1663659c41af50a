"""Trap configuration files.

An INI file with three sections; every key carries its unit as a suffix::

    [species]
    mass_u = 171
    charge_e = 1

    [geometry]
    r_o_m = 512e-6
    a_m = 524e-6
    b_t_m = 761e-6
    c_m = 704e-6
    d = 0.812

    [drive]
    rf_amplitude_V = 500
    rf_frequency_Hz = 35e6            ; or rf_angular_frequency_rad_s
    ring_dc_V = 46.3
    top_V = 50
    bottom_V = 50

Every key is optional and falls back to the value shown.  ``b_b`` is always
``-b_t`` and cannot be set.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .trap_model import DriveConfig, IonSpecies, TrapGeometry


class ConfigError(ValueError):
    pass


REFERENCE_RING_DC = 46.3
REFERENCE_ENDCAP_DC = 50.0

_KEYS = {
    "species": {"mass_u", "charge_e"},
    "geometry": {"r_o_m", "a_m", "b_t_m", "c_m", "d"},
    "drive": {"rf_amplitude_v", "rf_frequency_hz", "rf_angular_frequency_rad_s", "ring_dc_v", "top_v", "bottom_v"},
}


@dataclass(frozen=True)
class TrapConfig:
    species: IonSpecies = field(default_factory=IonSpecies.ytterbium171)
    geometry: TrapGeometry = field(default_factory=TrapGeometry)
    drive: DriveConfig = field(
        default_factory=lambda: DriveConfig(V_ring_dc=REFERENCE_RING_DC, V_top=REFERENCE_ENDCAP_DC, V_bottom=REFERENCE_ENDCAP_DC)
    )

    def summary(self) -> dict:
        g, d = self.geometry, self.drive
        return {
            "mass_kg": self.species.mass,
            "charge_C": self.species.charge,
            "r_o_m": g.r_o,
            "a_m": g.a,
            "b_t_m": g.b_t,
            "b_b_m": g.b_b,
            "c_m": g.c,
            "d": g.d,
            "rf_amplitude_V": d.V_rf_amplitude,
            "rf_angular_frequency_rad_s": d.Omega_rf,
            "ring_dc_V": d.V_ring_dc,
            "top_V": d.V_top,
            "bottom_V": d.V_bottom,
        }


def _number(section, key, raw) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"[{section}] {key}: must be finite")
    return value


def parse_config(text: str) -> TrapConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    values = {}
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[(section, key)] = _number(section, key, raw)

    get = values.get
    if get(("drive", "rf_frequency_hz")) is not None and get(("drive", "rf_angular_frequency_rad_s")) is not None:
        raise ConfigError("give either rf_frequency_Hz or rf_angular_frequency_rad_s, not both")
    omega = get(("drive", "rf_angular_frequency_rad_s"))
    if omega is None:
        omega = 2 * math.pi * get(("drive", "rf_frequency_hz"), 35e6)

    try:
        species = IonSpecies.from_units(get(("species", "mass_u"), 171.0), get(("species", "charge_e"), 1.0))
        geometry = TrapGeometry(
            r_o=get(("geometry", "r_o_m"), 512e-6),
            a=get(("geometry", "a_m"), 524e-6),
            b_t=get(("geometry", "b_t_m"), 761e-6),
            c=get(("geometry", "c_m"), 704e-6),
            d=get(("geometry", "d"), 0.812),
        )
        drive = DriveConfig(
            V_rf_amplitude=get(("drive", "rf_amplitude_v"), 500.0),
            Omega_rf=omega,
            V_ring_dc=get(("drive", "ring_dc_v"), REFERENCE_RING_DC),
            V_top=get(("drive", "top_v"), REFERENCE_ENDCAP_DC),
            V_bottom=get(("drive", "bottom_v"), REFERENCE_ENDCAP_DC),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return TrapConfig(species, geometry, drive)


def load_config(path) -> TrapConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
