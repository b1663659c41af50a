"""Trap parameters -> dimensionless problem statement.

The effective potential of one ion is the RF pseudopotential plus the DC
contributions of the ring and the two end caps.  All of it is quadratic near
the trap centre, so it is fully described by a handful of signed squared
frequencies.  Frequencies are kept squared throughout: a DC voltage that
deconfines along an axis simply gives a negative omega^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .constants import ATOMIC_MASS_UNIT, COULOMB_CONSTANT, ELEMENTARY_CHARGE


@dataclass(frozen=True)
class IonSpecies:
    """Ion mass [kg] and charge [C]."""

    mass: float
    charge: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"ion mass must be positive, got {self.mass!r}")
        if not self.charge > 0:
            raise ValueError(f"ion charge must be positive, got {self.charge!r}")

    @classmethod
    def from_units(cls, mass_u: float, charge_e: float = 1.0) -> "IonSpecies":
        return cls(mass=mass_u * ATOMIC_MASS_UNIT, charge=charge_e * ELEMENTARY_CHARGE)

    @classmethod
    def ytterbium171(cls) -> "IonSpecies":
        return cls.from_units(171.0, 1.0)


@dataclass(frozen=True)
class TrapGeometry:
    """Fitted electrode constants, lengths in metres.

    ``b_b`` is not a free parameter: the trap is mirror symmetric, so it is
    always ``-b_t``.  ``d`` shifts the end-cap potential uniformly and never
    produces a force; it is kept only so a configuration round-trips.
    """

    r_o: float = 512e-6
    a: float = 524e-6
    b_t: float = 761e-6
    c: float = 704e-6
    d: float = 0.812
    b_b: float = field(init=False)

    def __post_init__(self):
        for name in ("r_o", "a", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"geometry constant {name} must be positive")
        if self.b_t == 0 or not math.isfinite(self.b_t):
            raise ValueError("geometry constant b_t must be finite and nonzero")
        object.__setattr__(self, "b_b", -self.b_t)


@dataclass(frozen=True)
class DriveConfig:
    """RF drive and DC electrode voltages (V, rad/s)."""

    V_rf_amplitude: float = 500.0
    Omega_rf: float = 2 * math.pi * 35e6
    V_ring_dc: float = 0.0
    V_top: float = 0.0
    V_bottom: float = 0.0

    def __post_init__(self):
        if not self.V_rf_amplitude > 0:
            raise ValueError("RF amplitude must be positive")
        if not self.Omega_rf > 0:
            raise ValueError("RF angular frequency must be positive")
        for name in ("V_ring_dc", "V_top", "V_bottom"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def with_voltages(self, V_ring_dc=None, V_top=None, V_bottom=None) -> "DriveConfig":
        return DriveConfig(
            V_rf_amplitude=self.V_rf_amplitude,
            Omega_rf=self.Omega_rf,
            V_ring_dc=self.V_ring_dc if V_ring_dc is None else float(V_ring_dc),
            V_top=self.V_top if V_top is None else float(V_top),
            V_bottom=self.V_bottom if V_bottom is None else float(V_bottom),
        )


@dataclass(frozen=True)
class SquaredFrequencies:
    """Signed omega^2 [rad^2/s^2] per contribution, indexed by axis (1, 2, 3) -> (0, 1, 2)."""

    psi: tuple[float, float, float]
    ring: tuple[float, float, float]
    top: tuple[float, float, float]
    bottom: tuple[float, float, float]


@dataclass(frozen=True)
class DimensionlessTrap:
    """Scale-free trap: squared frequencies in units of omega_psi3^2, lengths in units of l_o."""

    beta1_sq: float
    beta2_sq: float
    beta3_sq: float
    beta_r3_sq: float
    beta_t3_sq: float
    beta_b3_sq: float
    x_offset_top: float
    x_offset_bottom: float
    plane_z: float
    length_scale: float
    omega_psi3: float

    @property
    def stable(self) -> bool:
        return self.beta1_sq > 0 and self.beta3_sq > 0

    @property
    def beta_1(self) -> float:
        return math.sqrt(self.beta1_sq) if self.beta1_sq >= 0 else math.nan

    @property
    def beta_2(self) -> float:
        return math.sqrt(self.beta2_sq) if self.beta2_sq >= 0 else math.nan

    @property
    def beta_3(self) -> float:
        return math.sqrt(self.beta3_sq) if self.beta3_sq >= 0 else math.nan

    def axial_energy(self, z: float) -> float:
        """Single-ion axial part of the trap energy at height ``z``."""
        return 0.5 * (
            (1.0 - self.beta_r3_sq) * z * z
            + self.beta_t3_sq * (z + self.x_offset_top) ** 2
            + self.beta_b3_sq * (z + self.x_offset_bottom) ** 2
        )

    @classmethod
    def from_betas(cls, beta1_sq: float, beta3_sq: float = 1.0) -> "DimensionlessTrap":
        """A bare trap with the given planar/axial curvatures and no end-cap offsets.

        Handy for tests and for problems stated directly in reduced units.
        """
        return cls(
            beta1_sq=beta1_sq,
            beta2_sq=beta1_sq,
            beta3_sq=beta3_sq,
            beta_r3_sq=1.0 - beta3_sq,
            beta_t3_sq=0.0,
            beta_b3_sq=0.0,
            x_offset_top=0.0,
            x_offset_bottom=0.0,
            plane_z=0.0,
            length_scale=math.nan,
            omega_psi3=math.nan,
        )


def derive_frequencies(species: IonSpecies, geom: TrapGeometry, drive: DriveConfig) -> SquaredFrequencies:
    """Squared angular frequencies of every potential contribution.

    >>> f = derive_frequencies(IonSpecies.ytterbium171(), TrapGeometry(), DriveConfig())
    >>> round(math.sqrt(f.psi[0]) / 1e6, 2)
    6.92
    """
    m, q = species.mass, species.charge
    w_psi1 = math.sqrt(2.0) * q * drive.V_rf_amplitude / (m * drive.Omega_rf * geom.r_o**2)
    psi1 = w_psi1 * w_psi1
    ring1 = 2.0 * q * drive.V_ring_dc / (m * geom.r_o**2)
    cap_ratio = (geom.c / geom.a) ** 2
    top1 = 2.0 * q * drive.V_top / (m * geom.c**2)
    bottom1 = 2.0 * q * drive.V_bottom / (m * geom.c**2)
    return SquaredFrequencies(
        psi=(psi1, psi1, 4.0 * psi1),
        ring=(ring1, ring1, 2.0 * ring1),
        top=(top1, top1, cap_ratio * top1),
        bottom=(bottom1, bottom1, cap_ratio * bottom1),
    )


def build_dimensionless(species: IonSpecies, geom: TrapGeometry, drive: DriveConfig) -> DimensionlessTrap:
    f = derive_frequencies(species, geom, drive)
    w3_sq = f.psi[2]
    beta_sq = [(f.psi[i] + f.ring[i] - f.top[i] - f.bottom[i]) / w3_sq for i in (0, 1)]
    beta_r3_sq = f.ring[2] / w3_sq
    beta_t3_sq = f.top[2] / w3_sq
    beta_b3_sq = f.bottom[2] / w3_sq
    beta3_sq = 1.0 - beta_r3_sq + beta_t3_sq + beta_b3_sq

    l_o = (COULOMB_CONSTANT * species.charge**2 / (species.mass * w3_sq)) ** (1.0 / 3.0)
    x_top = geom.a**2 / (2.0 * l_o * geom.b_t)
    x_bottom = geom.a**2 / (2.0 * l_o * geom.b_b)
    # axial force balance of a single ion; beta3_sq == 0 has no plane at all
    plane_z = (-beta_t3_sq * x_top - beta_b3_sq * x_bottom) / beta3_sq if beta3_sq != 0 else math.nan
    return DimensionlessTrap(
        beta1_sq=beta_sq[0],
        beta2_sq=beta_sq[1],
        beta3_sq=beta3_sq,
        beta_r3_sq=beta_r3_sq,
        beta_t3_sq=beta_t3_sq,
        beta_b3_sq=beta_b3_sq,
        x_offset_top=x_top,
        x_offset_bottom=x_bottom,
        plane_z=plane_z,
        length_scale=l_o,
        omega_psi3=math.sqrt(w3_sq),
    )


@dataclass(frozen=True)
class StabilityMap:
    """beta^2 values on a (V_ring_dc, V_top = V_bottom) grid; axis 0 is the ring voltage."""

    ring_voltages: np.ndarray
    endcap_voltages: np.ndarray
    beta1_sq: np.ndarray
    beta3_sq: np.ndarray

    @property
    def stable(self) -> np.ndarray:
        return (self.beta1_sq > 0) & (self.beta3_sq > 0)

    def is_simply_connected(self) -> bool:
        """One 4-connected stable region with no enclosed unstable holes."""
        stable = self.stable
        _, n_regions = ndimage.label(stable)
        if n_regions != 1:
            return False
        holes, n_holes = ndimage.label(~stable)
        edge_labels = set(np.unique(np.concatenate([holes[0], holes[-1], holes[:, 0], holes[:, -1]])))
        return all(lab in edge_labels for lab in range(1, n_holes + 1))

    def rows(self):
        """(V_r, V_tb, beta1_sq, beta3_sq, stable) per grid point, ring voltage outermost."""
        stable = self.stable
        for i, vr in enumerate(self.ring_voltages):
            for j, vtb in enumerate(self.endcap_voltages):
                yield float(vr), float(vtb), float(self.beta1_sq[i, j]), float(self.beta3_sq[i, j]), bool(stable[i, j])


def default_voltage_grid() -> np.ndarray:
    return np.linspace(0.0, 100.0, 101)


def stability_scan(
    species: IonSpecies,
    geom: TrapGeometry,
    drive: DriveConfig,
    ring_voltages=None,
    endcap_voltages=None,
) -> StabilityMap:
    """Evaluate the stability verdict over a voltage grid with V_top = V_bottom.

    The RF settings are taken from ``drive``; its DC voltages are ignored.
    Both axes default to 0..100 V in 1 V steps.
    """
    vr = default_voltage_grid() if ring_voltages is None else np.asarray(ring_voltages, dtype=float)
    vtb = default_voltage_grid() if endcap_voltages is None else np.asarray(endcap_voltages, dtype=float)
    if not (np.all(np.isfinite(vr)) and np.all(np.isfinite(vtb))):
        raise ValueError("voltage grid must be finite")
    b1 = np.empty((vr.size, vtb.size))
    b3 = np.empty((vr.size, vtb.size))
    for i, v_ring in enumerate(vr):
        for j, v_cap in enumerate(vtb):
            t = build_dimensionless(species, geom, drive.with_voltages(v_ring, v_cap, v_cap))
            b1[i, j] = t.beta1_sq
            b3[i, j] = t.beta3_sq
    return StabilityMap(vr, vtb, b1, b3)
