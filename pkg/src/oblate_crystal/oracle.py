"""Simulated-annealing cross-check for the Newton equilibria.

Deliberately independent of the Newton path: Metropolis moves use only
energies, and the final polish uses its own force routine (complex-plane
form) rather than ``equilibrium.gradient`` or the spring matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .equilibrium import CrystalState, _fix_gauge, planar_energy, potential, shell_decomposition
from .trap_model import DimensionlessTrap


@dataclass(frozen=True)
class AnnealSchedule:
    initial_temperature: float | None = None  # default: 0.1 x per-ion confinement energy
    cooling_factor: float = 0.995
    sweeps: int = 2000
    step_scale: float | None = None  # default: 0.2 x ion spacing
    rng_seed: int = 0
    polish_tolerance: float = 1e-10
    polish_iterations: int = 50000

    def __post_init__(self):
        if not 0 < self.cooling_factor < 1:
            raise ValueError("cooling_factor must lie in (0, 1)")
        if self.sweeps < 1:
            raise ValueError("sweeps must be at least 1")


def _spacing(trap: DimensionlessTrap) -> float:
    return (2.0 / trap.beta1_sq) ** (1.0 / 3.0)


def _ion_energy(trap, x, i, p) -> float:
    """Energy terms involving ion ``i`` if it sat at ``p``."""
    others = np.delete(x, i, axis=0)
    dist = np.hypot(others[:, 0] - p[0], others[:, 1] - p[1])
    if np.any(dist == 0):
        return math.inf
    return 0.5 * (trap.beta1_sq * p[0] ** 2 + trap.beta2_sq * p[1] ** 2) + float((1.0 / dist).sum())


def _forces(trap, x) -> np.ndarray:
    z = x[:, 0] + 1j * x[:, 1]
    dz = z[:, None] - z[None, :]
    mag = np.abs(dz)
    np.fill_diagonal(mag, 1.0)
    push = dz / mag**3
    np.fill_diagonal(push, 0.0)
    f = push.sum(axis=1) - (trap.beta1_sq * z.real + 1j * trap.beta2_sq * z.imag)
    return np.column_stack([f.real, f.imag])


def _polish(trap, x, tolerance, max_iterations):
    """Barzilai-Borwein gradient descent with a nonmonotone energy safeguard."""
    f = _forces(trap, x)
    spacing = _spacing(trap)
    alpha = 1e-2 / max(trap.beta1_sq, trap.beta2_sq)
    history = [planar_energy(trap, x)]
    for it in range(max_iterations):
        if np.abs(f).max() < tolerance:
            return x, it, True
        step = alpha * f
        largest = np.hypot(step[:, 0], step[:, 1]).max()
        if largest > 0.1 * spacing:
            step *= 0.1 * spacing / largest
        while True:
            trial = x + step
            try:
                e = planar_energy(trap, trial)
            except ValueError:
                e = math.inf
            if e <= max(history[-10:]) + 1e-12 * abs(history[-1]):
                break
            step *= 0.5
        f_new = _forces(trap, trial)
        s = (trial - x).ravel()
        y = (f - f_new).ravel()
        sy = float(s @ y)
        alpha = float(s @ s) / sy if sy > 0 else alpha * 2.0
        x, f = trial, f_new
        history.append(e)
    return x, max_iterations, bool(np.abs(f).max() < tolerance)


def _initial(trap, n_ions, rng):
    radius = 0.6 * math.sqrt(n_ions) * _spacing(trap)
    points = []
    while len(points) < n_ions:
        rho = radius * math.sqrt(rng.uniform())
        phi = rng.uniform(0, 2 * math.pi)
        p = (rho * math.cos(phi), rho * math.sin(phi))
        if all(math.hypot(p[0] - q[0], p[1] - q[1]) > 0.1 * _spacing(trap) for q in points):
            points.append(p)
    return np.array(points, dtype=float)


def anneal(trap: DimensionlessTrap, n_ions: int, schedule: AnnealSchedule | None = None) -> CrystalState:
    """Metropolis annealing from a random start, then a gradient polish.

    ``converged`` on the result is False when the polish did not reach the
    gradient tolerance.
    """
    schedule = AnnealSchedule() if schedule is None else schedule
    if not trap.stable:
        raise ValueError("trap is unstable")
    rng = np.random.default_rng(schedule.rng_seed)
    spacing = _spacing(trap)
    temperature = schedule.initial_temperature
    if temperature is None:
        temperature = 0.1 * trap.beta1_sq * spacing**2
    step = 0.2 * spacing if schedule.step_scale is None else schedule.step_scale

    x = _initial(trap, n_ions, rng)
    energy = planar_energy(trap, x)
    best, best_energy = x.copy(), energy
    if n_ions > 1:
        for _ in range(schedule.sweeps):
            accepted = 0
            for i in range(n_ions):
                proposal = x[i] + rng.uniform(-step, step, size=2)
                delta = _ion_energy(trap, x, i, proposal) - _ion_energy(trap, x, i, x[i])
                if delta <= 0 or rng.uniform() < math.exp(-delta / temperature):
                    x[i] = proposal
                    energy += delta
                    accepted += 1
            if energy < best_energy:
                best, best_energy = x.copy(), energy
            rate = accepted / n_ions
            if rate > 0.5:
                step *= 1.1
            elif rate < 0.3:
                step *= 0.9
            temperature *= schedule.cooling_factor
    else:
        best = np.zeros((1, 2))

    polished, iterations, ok = _polish(trap, best, schedule.polish_tolerance, schedule.polish_iterations)
    polished = _fix_gauge(polished)
    return CrystalState(
        n_ions=n_ions,
        positions=polished,
        plane_z=trap.plane_z,
        energy=float(potential(trap, polished)),
        planar_energy=float(planar_energy(trap, polished)),
        gradient_norm=float(np.abs(_forces(trap, polished)).max()),
        converged=ok,
        seed_id=schedule.rng_seed,
        iterations=iterations,
    )


@dataclass(frozen=True)
class ComparisonReport:
    energy_difference: float  # a - b
    ring_counts_a: list[int]
    ring_counts_b: list[int]
    max_ring_radius_difference: float | None
    alignment_rmsd: float
    structural_match: bool


def _aligned_rmsd(a: np.ndarray, b: np.ndarray) -> float:
    """Smallest RMS distance over rotations, reflections and ion relabelling."""
    n = len(a)
    if n == 1:
        return float(np.hypot(*(a[0] - b[0])))
    best = math.inf
    za = a[:, 0] + 1j * a[:, 1]
    zb = b[:, 0] + 1j * b[:, 1]
    anchor = int(np.argmax(np.abs(za)))
    for reflect in (False, True):
        src = np.conj(za) if reflect else za
        for j in range(n):
            if abs(abs(zb[j]) - abs(src[anchor])) > 0.05 * max(abs(zb).max(), 1e-300):
                continue
            if abs(src[anchor]) == 0 or abs(zb[j]) == 0:
                continue
            rotated = src * (zb[j] / abs(zb[j])) / (src[anchor] / abs(src[anchor]))
            rows, cols = linear_sum_assignment(np.abs(rotated[:, None] - zb[None, :]))
            # optimal rotation for this labelling
            phase = np.sum(np.conj(src[rows]) * zb[cols])
            if abs(phase) > 0:
                rotated = src * phase / abs(phase)
            rms = math.sqrt(float(np.mean(np.abs(rotated[rows] - zb[cols]) ** 2)))
            best = min(best, rms)
    return best


def energy_compare(a: CrystalState, b: CrystalState, tolerance: float = 1e-6) -> ComparisonReport:
    """Energy gap and structural agreement of two crystals in the same trap."""
    if a.n_ions != b.n_ions:
        raise ValueError(f"cannot compare crystals of {a.n_ions} and {b.n_ions} ions")
    sa, sb = shell_decomposition(a), shell_decomposition(b)
    radius_diff = None
    if sa.ring_counts == sb.ring_counts:
        radius_diff = float(np.abs(np.subtract(sa.ring_radii, sb.ring_radii)).max())
    rmsd = _aligned_rmsd(a.positions, b.positions)
    if math.isfinite(a.planar_energy) and math.isfinite(b.planar_energy):
        gap = a.planar_energy - b.planar_energy
    else:
        gap = a.energy - b.energy
    scale = max(1.0, float(np.abs(a.positions).max()))
    # rmsd is informational: nearly free intershell rotations make it large for equal-energy copies
    match = radius_diff is not None and radius_diff < tolerance * scale
    return ComparisonReport(
        energy_difference=float(gap),
        ring_counts_a=sa.ring_counts,
        ring_counts_b=sb.ring_counts,
        max_ring_radius_difference=radius_diff,
        alignment_rmsd=rmsd,
        structural_match=bool(match),
    )
