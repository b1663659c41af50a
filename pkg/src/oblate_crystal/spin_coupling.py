"""Axial-phonon-mediated Ising couplings and their power-law range.

Couplings are dimensionless, in units of J_0; detunings are in units of the
axial centre-of-mass frequency omega_CM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import REDUCED_PLANCK
from .equilibrium import CrystalState
from .modes import ModeSpectrum

RESONANCE_GUARD = 1e-9
J_FLOOR = 1e-14


class ResonanceError(ValueError):
    def __init__(self, mu: float, mode_index: int, mode_ratio: float):
        super().__init__(
            f"detuning mu={mu!r} is within {RESONANCE_GUARD:g} of axial mode {mode_index} "
            f"(omega/omega_CM={mode_ratio!r})"
        )
        self.mu = mu
        self.mode_index = mode_index


@dataclass(frozen=True)
class CouplingResult:
    J: np.ndarray
    detuning_mu: float
    pairs: list[tuple[int, int, float, float]] = field(default_factory=list)

    def pair_distances(self) -> np.ndarray:
        return np.array([p[2] for p in self.pairs])

    def pair_couplings(self) -> np.ndarray:
        return np.array([p[3] for p in self.pairs])


@dataclass(frozen=True)
class PowerLawFit:
    exponent_b: float
    prefactor: float
    r_squared: float
    n_pairs_used: int
    n_pairs_dropped: int = 0

    def to_dict(self) -> dict:
        return {
            "exponent_b": self.exponent_b,
            "prefactor": self.prefactor,
            "r_squared": self.r_squared,
            "n_pairs_used": self.n_pairs_used,
            "n_pairs_dropped": self.n_pairs_dropped,
        }


def coupling_scale(rabi_frequency: float, delta_k: float, mass: float, omega_cm: float) -> float:
    """J_0 = Omega^2 hbar dk^2 / (2 m omega_CM^2), in rad/s for SI inputs."""
    if mass <= 0 or omega_cm <= 0:
        raise ValueError("mass and omega_CM must be positive")
    return rabi_frequency**2 * REDUCED_PLANCK * delta_k**2 / (2.0 * mass * omega_cm**2)


def compute_couplings(mu: float, spectrum: ModeSpectrum, state: CrystalState) -> CouplingResult:
    """J_mn = sum_a b_ma b_na / (mu^2 - (omega_a/omega_CM)^2) over the axial modes."""
    mu = float(mu)
    if not mu > 0:
        raise ValueError("detuning must be positive")
    n = spectrum.n_ions
    if n != state.n_ions:
        raise ValueError("spectrum and crystal disagree on the number of ions")
    com = spectrum.com_index
    ratio_sq = spectrum.axial_eigenvalues / spectrum.axial_eigenvalues[com]
    ratios = np.sign(ratio_sq) * np.sqrt(np.abs(ratio_sq))
    close = np.flatnonzero(np.abs(ratios - mu) <= RESONANCE_GUARD)
    if len(close):
        k = int(close[0])
        raise ResonanceError(mu, k, float(ratios[k]))

    b = spectrum.axial_vectors
    J = (b / (mu * mu - ratio_sq)) @ b.T
    J = 0.5 * (J + J.T)
    np.fill_diagonal(J, 0.0)

    x = state.positions
    pairs = []
    for m in range(n):
        for k in range(m + 1, n):
            pairs.append((m, k, float(math.hypot(*(x[m] - x[k]))), float(J[m, k])))
    return CouplingResult(J=J, detuning_mu=mu, pairs=pairs)


def fit_power_law(result: CouplingResult) -> PowerLawFit:
    """Least-squares line through (log r, log |J|); the exponent is minus the slope."""
    r = result.pair_distances()
    j = np.abs(result.pair_couplings())
    usable = j > J_FLOOR
    r, j = r[usable], j[usable]
    if len(r) < 2 or np.ptp(r) == 0:
        raise ValueError("need at least two pairs at distinct distances for a power-law fit")
    lx, ly = np.log(r), np.log(j)
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r_squared = 1.0 if ss_tot == 0 else 1.0 - float((residual**2).sum()) / ss_tot
    return PowerLawFit(
        exponent_b=float(-slope),
        prefactor=float(math.exp(intercept)),
        r_squared=min(1.0, max(0.0, r_squared)),
        n_pairs_used=int(len(r)),
        n_pairs_dropped=int((~usable).sum()),
    )


@dataclass
class SweepEntry:
    mu: float
    result: CouplingResult | None = None
    fit: PowerLawFit | None = None
    error: str | None = None
    fit_error: str | None = None


def detuning_sweep(state: CrystalState, spectrum: ModeSpectrum, mu_list) -> list[SweepEntry]:
    """Couplings and fits for each detuning, in input order.

    A resonant or invalid detuning yields an entry with ``error`` set and the
    remaining detunings are still evaluated.  Crystals whose pairs are all
    equidistant get couplings but no fit (``fit_error``).
    """
    entries = []
    for mu in mu_list:
        entry = SweepEntry(mu=float(mu))
        try:
            entry.result = compute_couplings(mu, spectrum, state)
        except ValueError as exc:
            entry.error = str(exc)
        else:
            try:
                entry.fit = fit_power_law(entry.result)
            except ValueError as exc:
                entry.fit_error = str(exc)
        entries.append(entry)
    return entries
