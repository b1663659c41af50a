"""Spring-constant matrices and phonon spectra of a planar crystal.

Coordinates of the planar problem are ordered ion-major per axis: all x_1
components first, then all x_2 components, matching the block layout
``[[K11, K12], [K12, K22]]``.  Frequencies are in units of omega_psi3.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .equilibrium import CrystalState, SolverOptions
    from .trap_model import DimensionlessTrap, DriveConfig, IonSpecies, TrapGeometry

log = logging.getLogger(__name__)

SOFT_THRESHOLD = 1e-8
ZERO_MODE_THRESHOLD = 1e-8
DEGENERACY_RTOL = 1e-9


@dataclass(frozen=True)
class SpringMatrices:
    K11: np.ndarray
    K22: np.ndarray
    K12: np.ndarray
    K33: np.ndarray
    beta3_sq: float
    positions: np.ndarray | None = None

    @property
    def planar(self) -> np.ndarray:
        return np.block([[self.K11, self.K12], [self.K12, self.K22]])


def _pair_terms(positions: np.ndarray):
    d = positions[:, None, :] - positions[None, :, :]
    r = np.sqrt(np.einsum("mnk,mnk->mn", d, d))
    np.fill_diagonal(r, np.inf)
    return d, r


def spring_matrices_from_positions(trap: DimensionlessTrap, positions) -> SpringMatrices:
    """Second derivatives of the dimensionless potential at a planar configuration."""
    x = np.asarray(positions, dtype=float)
    d, r = _pair_terms(x)
    inv3 = r**-3
    inv5 = r**-5

    def block(i, j, trap_curvature):
        # off-diagonal (m != n): delta_ij / r^3 - 3 d_i d_j / r^5
        off = -3.0 * d[:, :, i] * d[:, :, j] * inv5
        if i == j:
            off = off + inv3
        k = off.copy()
        np.fill_diagonal(k, 0.0)
        np.fill_diagonal(k, trap_curvature - k.sum(axis=1))
        return k

    K33 = inv3.copy()
    np.fill_diagonal(K33, 0.0)
    np.fill_diagonal(K33, trap.beta3_sq - K33.sum(axis=1))
    return SpringMatrices(
        K11=block(0, 0, trap.beta1_sq),
        K22=block(1, 1, trap.beta2_sq),
        K12=block(0, 1, 0.0),
        K33=K33,
        beta3_sq=trap.beta3_sq,
        positions=x,
    )


def planar_hessian(trap: DimensionlessTrap, positions) -> np.ndarray:
    return spring_matrices_from_positions(trap, positions).planar


def build_spring_matrices(trap: DimensionlessTrap, state: CrystalState) -> SpringMatrices:
    if not state.converged:
        raise ValueError("spring matrices need a converged equilibrium")
    return spring_matrices_from_positions(trap, state.positions)


def _canonical_eigh(matrix: np.ndarray):
    """eigh with a reproducible basis.

    Degenerate subspaces (other than the zero-frequency cluster) are re-spanned
    by Gram-Schmidt on the projected unit vectors in index order; every vector is then signed so that its
    largest-magnitude component is positive (lowest index on ties).
    """
    w, v = np.linalg.eigh(matrix)
    n = len(w)
    scale = max(1.0, float(np.abs(w).max())) if n else 1.0
    out = v.copy()
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and w[stop] - w[stop - 1] <= DEGENERACY_RTOL * scale:
            stop += 1
        # near-zero clusters hold the rigid rotation; eigh already separates it
        # from slow intershell modes and mixing them would destroy it
        if stop - start > 1 and np.abs(w[start:stop]).max() >= ZERO_MODE_THRESHOLD:
            sub = v[:, start:stop]
            projector = sub @ sub.T
            basis = []
            for k in range(n):
                u = projector[:, k].copy()
                for b in basis:
                    u -= (b @ u) * b
                norm = np.linalg.norm(u)
                if norm > 1e-6:
                    basis.append(u / norm)
                    if len(basis) == stop - start:
                        break
            # second pass restores orthonormality lost in the first
            for idx, b in enumerate(basis):
                for prev in basis[:idx]:
                    b = b - (prev @ b) * prev
                basis[idx] = b / np.linalg.norm(b)
            out[:, start:stop] = np.column_stack(basis)
        start = stop
    for k in range(n):
        col = out[:, k]
        mags = np.abs(col)
        lead = int(np.flatnonzero(mags >= mags.max() * (1 - 1e-12))[0])
        if col[lead] < 0:
            out[:, k] = -col
    return w, out


def rotation_generator(positions) -> np.ndarray:
    """Unit planar displacement of a rigid rotation, in (x_1..., x_2...) ordering."""
    x = np.asarray(positions, dtype=float)
    v = np.concatenate([-x[:, 1], x[:, 0]])
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def signed_sqrt(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return np.sign(values) * np.sqrt(np.abs(values))


@dataclass(frozen=True)
class ModeSpectrum:
    axial_eigenvalues: np.ndarray
    axial_freqs: np.ndarray
    axial_vectors: np.ndarray
    planar_eigenvalues: np.ndarray
    planar_freqs: np.ndarray
    planar_vectors: np.ndarray
    soft_axial: bool
    soft_planar: bool
    zero_rotation_index: int | None

    @property
    def n_ions(self) -> int:
        return len(self.axial_eigenvalues)

    @property
    def com_index(self) -> int:
        """Axial mode with the largest overlap with the uniform vector."""
        n = self.n_ions
        overlap = np.abs(self.axial_vectors.sum(axis=0)) / math.sqrt(n)
        return int(np.argmax(overlap))

    @property
    def com_frequency(self) -> float:
        return float(self.axial_freqs[self.com_index])

    def nonzero_planar_freqs(self) -> np.ndarray:
        if self.zero_rotation_index is None:
            return self.planar_freqs
        return np.delete(self.planar_freqs, self.zero_rotation_index)

    def to_dict(self) -> dict:
        return {
            "n_ions": self.n_ions,
            "axial_eigenvalues": self.axial_eigenvalues.tolist(),
            "axial_freqs": self.axial_freqs.tolist(),
            "axial_vectors": self.axial_vectors.tolist(),
            "planar_eigenvalues": self.planar_eigenvalues.tolist(),
            "planar_freqs": self.planar_freqs.tolist(),
            "planar_vectors": self.planar_vectors.tolist(),
            "soft_axial": self.soft_axial,
            "soft_planar": self.soft_planar,
            "zero_rotation_index": self.zero_rotation_index,
        }


def _check_symmetric(name: str, k: np.ndarray):
    if not np.all(np.isfinite(k)):
        raise ValueError(f"{name} has non-finite entries")
    if k.size and np.abs(k - k.T).max() > 1e-12 * max(1.0, float(np.abs(k).max())):
        raise ValueError(f"{name} is not symmetric")


def solve_modes(K: SpringMatrices) -> ModeSpectrum:
    planar = K.planar
    _check_symmetric("K33", K.K33)
    _check_symmetric("planar spring matrix", planar)

    wa, va = _canonical_eigh(K.K33)
    wp, vp = _canonical_eigh(planar)

    zero = None
    if len(wp) > 2:
        candidates = np.flatnonzero(np.abs(wp) < ZERO_MODE_THRESHOLD)
        if len(candidates) > 1 and K.positions is not None:
            # slow intershell rotations can also sit below the threshold;
            # the rigid rotation is the one that looks like a rotation
            overlap = np.abs(rotation_generator(K.positions) @ vp[:, candidates])
            zero = int(candidates[np.argmax(overlap)])
        elif len(candidates):
            zero = int(candidates[np.argmin(np.abs(wp[candidates]))])
        if len(candidates) > 1:
            log.info("%d planar eigenvalues below %g", len(candidates), ZERO_MODE_THRESHOLD)
    soft_planar = bool(np.any(wp < -SOFT_THRESHOLD))
    return ModeSpectrum(
        axial_eigenvalues=wa,
        axial_freqs=signed_sqrt(wa),
        axial_vectors=va,
        planar_eigenvalues=wp,
        planar_freqs=signed_sqrt(wp),
        planar_vectors=vp,
        soft_axial=bool(wa.size and wa.min() < -SOFT_THRESHOLD),
        soft_planar=soft_planar,
        zero_rotation_index=zero,
    )


@dataclass
class BandPoint:
    V_ring_dc: float
    trap: DimensionlessTrap
    state: CrystalState | None = None
    spectrum: ModeSpectrum | None = None
    error: str | None = None


@dataclass
class ModeBandScan:
    n_ions: int
    V_top: float
    V_bottom: float
    points: list[BandPoint] = field(default_factory=list)

    @property
    def first_soft_V_r(self) -> float | None:
        for p in self.points:
            if p.spectrum is not None and p.spectrum.soft_axial:
                return p.V_ring_dc
        return None

    def rows(self):
        """(V_r, mode_kind, mode_index, frequency) for every solved point."""
        for p in self.points:
            if p.spectrum is None:
                continue
            for k, f in enumerate(p.spectrum.axial_freqs):
                yield p.V_ring_dc, "axial", k, float(f)
            for k, f in enumerate(p.spectrum.planar_freqs):
                yield p.V_ring_dc, "planar", k, float(f)


def mode_band_scan(
    species: IonSpecies,
    geom: TrapGeometry,
    n_ions: int,
    ring_voltages,
    V_top: float,
    V_bottom: float,
    drive: DriveConfig | None = None,
    options: SolverOptions | None = None,
) -> ModeBandScan:
    """Re-solve the crystal and its spectrum at each ring voltage.

    Each point is warm-started from the previous solution, rescaled by the
    change of the planar length scale.  Failures are recorded per point and
    the sweep carries on.
    """
    from .equilibrium import EquilibriumError, SolverOptions, generate_seeds, solve_equilibrium
    from .trap_model import DriveConfig, build_dimensionless

    drive = DriveConfig() if drive is None else drive
    options = SolverOptions() if options is None else options
    scan = ModeBandScan(n_ions=n_ions, V_top=float(V_top), V_bottom=float(V_bottom))
    previous = None
    for v_ring in ring_voltages:
        v_ring = float(v_ring)
        trap = build_dimensionless(species, geom, drive.with_voltages(v_ring, V_top, V_bottom))
        point = BandPoint(V_ring_dc=v_ring, trap=trap)
        scan.points.append(point)
        if not trap.stable:
            point.error = "trap unstable: beta1^2 or beta3^2 not positive"
            continue
        seeds = None
        if previous is not None:
            prev_trap, prev_state = previous
            factor = (prev_trap.beta1_sq / trap.beta1_sq) ** (1.0 / 3.0)
            scale = (2.0 / trap.beta1_sq) ** (1.0 / 3.0)
            fresh = [s.positions * scale for s in generate_seeds(n_ions, 4, options.rng_seed)]
            seeds = [prev_state.positions * factor] + fresh
        try:
            state = solve_equilibrium(trap, n_ions, seeds=seeds, options=options)
        except EquilibriumError as exc:
            point.error = str(exc)
            continue
        point.state = state
        point.spectrum = solve_modes(build_spring_matrices(trap, state))
        previous = (trap, state)
    return scan
