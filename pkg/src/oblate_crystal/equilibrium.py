"""Planar equilibrium configurations of N ions.

All ions sit in the plane x_3 = plane_z, so only the 2N in-plane coordinates
are optimised.  Positions are ``(N, 2)`` arrays in units of l_o.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .modes import planar_hessian, spring_matrices_from_positions
from .trap_model import DimensionlessTrap

log = logging.getLogger(__name__)


class CoincidentIonsError(ValueError):
    """Two ions occupy the same point; the Coulomb energy is undefined."""


class EquilibriumError(RuntimeError):
    """No seed converged to a planar minimum.  ``best`` holds the best partial state."""

    def __init__(self, message: str, best: "CrystalState | None" = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class CrystalState:
    n_ions: int
    positions: np.ndarray
    plane_z: float
    energy: float
    gradient_norm: float
    converged: bool
    seed_id: int
    iterations: int = 0
    axial_stable: bool = True
    planar_energy: float = math.nan

    @property
    def radii(self) -> np.ndarray:
        return np.hypot(self.positions[:, 0], self.positions[:, 1])

    def to_dict(self) -> dict:
        return {
            "n_ions": self.n_ions,
            "plane_z": self.plane_z,
            "energy": self.energy,
            "planar_energy": self.planar_energy,
            "gradient_norm": self.gradient_norm,
            "converged": self.converged,
            "axial_stable": self.axial_stable,
            "seed_id": self.seed_id,
            "iterations": self.iterations,
            "positions": self.positions.tolist(),
        }


@dataclass(frozen=True)
class ShellDecomposition:
    ring_counts: list[int]
    ring_radii: list[float]
    ring_index: np.ndarray
    ambiguous: bool = False


@dataclass(frozen=True)
class Seed:
    seed_id: int
    kind: str
    positions: np.ndarray


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-10
    max_iterations: int = 500
    seed_count: int | None = None
    rng_seed: int = 0
    saddle_escapes: int = 5


def _as_positions(positions) -> np.ndarray:
    x = np.asarray(positions)
    if x.dtype.kind != "f":
        x = x.astype(float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError(f"positions must have shape (N, 2), got {x.shape}")
    return x


def _separations(x: np.ndarray):
    d = x[:, None, :] - x[None, :, :]
    r = np.sqrt((d * d).sum(axis=-1))
    iu = np.triu_indices(len(x), 1)
    if np.any(r[iu] == 0):
        raise CoincidentIonsError("coincident ions")
    return d, r, iu


def planar_energy(trap: DimensionlessTrap, positions) -> float:
    """In-plane trap energy plus Coulomb energy; ``potential`` minus the axial constant."""
    x = _as_positions(positions)
    _, r, iu = _separations(x)
    trap_part = 0.5 * (trap.beta1_sq * (x[:, 0] ** 2).sum() + trap.beta2_sq * (x[:, 1] ** 2).sum())
    return trap_part + (1.0 / r[iu]).sum()


def potential(trap: DimensionlessTrap, positions) -> float:
    """Dimensionless total energy of a planar configuration at x_3 = plane_z.

    Works in the dtype of ``positions`` (so long double can be used for
    finite-difference checks).
    """
    x = _as_positions(positions)
    return planar_energy(trap, x) + len(x) * trap.axial_energy(trap.plane_z)


def gradient(trap: DimensionlessTrap, positions) -> np.ndarray:
    """dV/dx for the planar coordinates, shape ``(N, 2)``.

    The axial components vanish identically at x_3 = plane_z and are not returned.
    """
    x = _as_positions(positions)
    d, r, _ = _separations(x)
    np.fill_diagonal(r, np.inf)
    coulomb = (d * (r**-3)[:, :, None]).sum(axis=1)
    return np.column_stack([trap.beta1_sq * x[:, 0], trap.beta2_sq * x[:, 1]]) - coulomb


def _flat(x: np.ndarray) -> np.ndarray:
    # axis-major ordering to match the [[K11, K12], [K12, K22]] layout
    return x.T.reshape(-1)


def _unflat(v: np.ndarray) -> np.ndarray:
    return v.reshape(2, -1).T


def _min_separation(x: np.ndarray) -> float:
    if len(x) < 2:
        return math.inf
    d = x[:, None, :] - x[None, :, :]
    r = np.sqrt((d * d).sum(axis=-1))
    return float(r[np.triu_indices(len(x), 1)].min())


def _safe_energy(trap, x) -> float:
    try:
        return planar_energy(trap, x)
    except CoincidentIonsError:
        return math.inf


def _newton(trap: DimensionlessTrap, x0: np.ndarray, options: SolverOptions):
    """Damped Newton iteration with backtracking.  Returns (x, iterations, converged)."""
    x = np.array(x0, dtype=float)
    energy = _safe_energy(trap, x)
    escapes = 0
    for it in range(options.max_iterations):
        g = gradient(trap, x)
        gflat = _flat(g)
        if np.abs(gflat).max() < options.tolerance:
            w = np.linalg.eigvalsh(planar_hessian(trap, x))
            if w.min() >= -1e-8 or escapes >= options.saddle_escapes:
                return x, it, w.min() >= -1e-8
            # stuck on a saddle: push along the most negative direction
            escapes += 1
            w, v = np.linalg.eigh(planar_hessian(trap, x))
            spacing = _min_separation(x) if len(x) > 1 else 1.0
            x = x + 0.2 * spacing * _unflat(v[:, 0])
            energy = _safe_energy(trap, x)
            continue

        w, v = np.linalg.eigh(planar_hessian(trap, x))
        scale = max(1.0, float(np.abs(w).max()))
        spacing = _min_separation(x) if len(x) > 1 else 1.0
        if w.min() < -1e-8 * scale:
            # indefinite: damp by |lambda| and walk down the most negative
            # direction explicitly; shallow saddles are otherwise escaped at a crawl
            denom = np.maximum(np.abs(w), 1e-3 * scale)
            step = -v @ ((v.T @ gflat) / denom)
            lead = v[:, 0]
            direction = -1.0 if lead @ gflat > 0 else 1.0
            step += direction * 0.1 * spacing * lead / np.abs(_unflat(lead)).max()
        else:
            keep = np.abs(w) > 1e-12 * scale
            step = -v[:, keep] @ ((v[:, keep].T @ gflat) / w[keep])
        dx = _unflat(step)

        # never move an ion by more than a fraction of the closest approach
        limit = 0.3 * spacing if len(x) > 1 else math.inf
        largest = np.hypot(dx[:, 0], dx[:, 1]).max()
        if largest > limit:
            dx *= limit / largest

        slope = float(_flat(dx) @ gflat)
        if slope >= 0:
            dx = -g * (limit / max(np.abs(g).max(), 1e-300)) if math.isfinite(limit) else -g
            slope = float(_flat(dx) @ gflat)
        gnorm = np.linalg.norm(gflat)
        alpha = 1.0
        for _ in range(60):
            trial = x + alpha * dx
            e_trial = _safe_energy(trap, trial)
            if e_trial <= energy + 1e-4 * alpha * slope:
                break
            # energy differences below round-off: judge by the gradient instead
            if abs(e_trial - energy) <= 1e-13 * max(1.0, abs(energy)):
                if np.linalg.norm(gradient(trap, trial)) < gnorm:
                    break
            alpha *= 0.5
        else:
            log.debug("line search stalled at iteration %d", it)
            return x, it, False
        x, energy = trial, e_trial
    g = gradient(trap, x)
    return x, options.max_iterations, bool(np.abs(g).max() < options.tolerance)


def _refine(trap: DimensionlessTrap, x: np.ndarray, steps: int = 8) -> np.ndarray:
    """Polish a converged minimum towards round-off.

    Undamped Newton steps restricted to the stiff modes, halved until the
    max-norm gradient drops.  A residual gradient breaks the rotational
    symmetry of the Hessian and mixes the zero mode with slow intershell
    modes, so it pays to push it well below the convergence tolerance.
    """
    gmax = np.abs(gradient(trap, x)).max()
    for _ in range(steps):
        w, v = np.linalg.eigh(planar_hessian(trap, x))
        keep = np.abs(w) > 1e-8 * max(1.0, float(np.abs(w).max()))
        dx = _unflat(-v[:, keep] @ ((v[:, keep].T @ _flat(gradient(trap, x))) / w[keep]))
        alpha = 1.0
        while alpha > 1e-6:
            trial = x + alpha * dx
            g_trial = np.abs(gradient(trap, trial)).max()
            if g_trial < gmax:
                break
            alpha *= 0.5
        else:
            break
        x, gmax = trial, g_trial
    return x


def _fix_gauge(x: np.ndarray) -> np.ndarray:
    """Rotate so the outermost ion (lowest index among ties) lies on the +x_1 axis."""
    if len(x) < 2:
        return x
    radii = np.hypot(x[:, 0], x[:, 1])
    top = radii.max()
    if top == 0:
        return x
    k = int(np.flatnonzero(radii >= top * (1 - 1e-8))[0])
    angle = -math.atan2(x[k, 1], x[k, 0])
    c, s = math.cos(angle), math.sin(angle)
    out = x @ np.array([[c, s], [-s, c]])
    out[k, 1] = 0.0
    return out


def _make_state(trap, x, seed_id, iterations, converged) -> CrystalState:
    g = gradient(trap, x)
    axial = spring_matrices_from_positions(trap, x).K33
    return CrystalState(
        n_ions=len(x),
        positions=x,
        plane_z=trap.plane_z,
        energy=float(potential(trap, x)),
        planar_energy=float(planar_energy(trap, x)),
        gradient_norm=float(np.abs(g).max()) if len(x) else 0.0,
        converged=converged,
        seed_id=seed_id,
        iterations=iterations,
        axial_stable=bool(np.linalg.eigvalsh(axial).min() > 0),
    )


def default_seed_count(n_ions: int) -> int:
    return 20 if n_ions <= 10 else 50


def seed_length_scale(trap: DimensionlessTrap) -> float:
    """Ion spacing of the trap relative to the unit spacing of generated seeds."""
    return (2.0 / trap.beta1_sq) ** (1.0 / 3.0)


def solve_equilibrium(
    trap: DimensionlessTrap,
    n_ions: int,
    seeds=None,
    options: SolverOptions | None = None,
) -> CrystalState:
    """Lowest-energy planar minimum over a set of starting configurations.

    ``seeds`` are configurations in trap units (l_o).  When omitted, seeds
    from :func:`generate_seeds` are used, rescaled to the trap's spacing.
    """
    options = SolverOptions() if options is None else options
    if n_ions < 1:
        raise ValueError("need at least one ion")
    if not trap.stable:
        raise ValueError(
            f"trap is unstable (beta1^2={trap.beta1_sq:.6g}, beta3^2={trap.beta3_sq:.6g}); no crystal to solve for"
        )
    if seeds is None:
        count = options.seed_count or default_seed_count(n_ions)
        scale = seed_length_scale(trap)
        seeds = [s.positions * scale for s in generate_seeds(n_ions, count, options.rng_seed)]
    if not seeds:
        raise ValueError("no seeds given")

    best = None
    best_partial = None
    for seed_id, seed in enumerate(seeds):
        x0 = _as_positions(seed)
        if len(x0) != n_ions:
            raise ValueError(f"seed {seed_id} has {len(x0)} ions, expected {n_ions}")
        x, iterations, ok = _newton(trap, x0, options)
        state = _make_state(trap, _fix_gauge(x), seed_id, iterations, ok)
        state = _recheck(trap, state, options)
        if state.converged:
            # ties (within round-off of the planar energy) keep the lower seed_id
            if best is None or state.planar_energy < best.planar_energy - 1e-12 * max(1.0, abs(best.planar_energy)):
                best = state
        elif best_partial is None or state.gradient_norm < best_partial.gradient_norm:
            best_partial = state
    if best is None:
        raise EquilibriumError(f"none of {len(seeds)} seeds converged for N={n_ions}", best_partial)
    if n_ions > 1:
        best = _make_state(trap, _fix_gauge(_refine(trap, best.positions)), best.seed_id, best.iterations, True)
    if not best.axial_stable:
        log.warning("N=%d crystal is axially unstable (zig-zag): the planar solution is not a true minimum", n_ions)
    return best


def _recheck(trap, state: CrystalState, options: SolverOptions) -> CrystalState:
    # gauge rotation reshuffles round-off; the contract is on the stored positions
    if state.converged and state.gradient_norm >= options.tolerance:
        x, it, ok = _newton(trap, state.positions, options)
        return _make_state(trap, x, state.seed_id, state.iterations + it, ok)
    return state


# --- seeds -----------------------------------------------------------------


def _ring_partitions(n_ions: int):
    """Ring occupancies (innermost first, nondecreasing, each >= 2), with or without a centre ion."""
    max_rings = max(1, int(math.ceil(math.sqrt(n_ions / 3.0))) + 1)

    def compositions(total, k, lo):
        if k == 1:
            if total >= lo:
                yield (total,)
            return
        for first in range(lo, total // k + 1):
            for rest in compositions(total - first, k - 1, first):
                yield (first,) + rest

    if n_ions == 1:
        yield 1, ()
        return
    for centre in (0, 1):
        rest = n_ions - centre
        if rest < 2:
            continue
        for k in range(1, max_rings + 1):
            yield from ((centre, p) for p in compositions(rest, k, 2))


def _ring_configuration(centre: int, counts) -> np.ndarray:
    points = [(0.0, 0.0)] if centre else []
    radius = 0.0 if centre else -1.0
    for j, n in enumerate(counts):
        radius = max(0.5 / math.sin(math.pi / n), radius + 1.0)
        offset = (math.pi / n) * (j % 2)
        points.extend(
            (radius * math.cos(offset + 2 * math.pi * k / n), radius * math.sin(offset + 2 * math.pi * k / n))
            for k in range(n)
        )
    return np.array(points, dtype=float)


def _scaled_energy(x: np.ndarray) -> float:
    # energy of the shape at its optimal overall size in a unit-curvature trap
    if len(x) < 2:
        return 0.0
    spread = (x**2).sum()
    _, r, iu = _separations(x)
    inverse = (1.0 / r[iu]).sum()
    return (spread * inverse**2) ** (1.0 / 3.0)


def _lattice_patch(n_ions: int, rng: np.random.Generator) -> np.ndarray:
    extent = int(math.ceil(math.sqrt(n_ions))) + 3
    i, j = np.meshgrid(np.arange(-extent, extent + 1), np.arange(-extent, extent + 1))
    pts = np.column_stack([(i + 0.5 * j).ravel(), (math.sqrt(3) / 2 * j).ravel()]).astype(float)
    centre = rng.uniform(-0.5, 0.5, size=2)
    order = np.argsort(np.hypot(*(pts - centre).T), kind="stable")
    patch = pts[order[:n_ions]] - centre
    return patch + rng.uniform(-0.05, 0.05, size=patch.shape)


def _random_disk(n_ions: int, rng: np.random.Generator, min_distance: float = 0.1) -> np.ndarray:
    radius = math.sqrt(n_ions)
    points = []
    while len(points) < n_ions:
        rho = radius * math.sqrt(rng.uniform())
        phi = rng.uniform(0, 2 * math.pi)
        p = np.array([rho * math.cos(phi), rho * math.sin(phi)])
        if all(np.hypot(*(p - q)) > min_distance for q in points):
            points.append(p)
    return np.array(points)


def generate_seeds(n_ions: int, count: int, rng_seed: int = 0) -> list[Seed]:
    """Deterministic starting configurations in units of the nearest-neighbour spacing.

    Roughly the first half are concentric-ring guesses over shell partitions,
    best-packed first; the rest alternate between perturbed triangular-lattice
    patches and uniform random placements in a disk of radius sqrt(N).
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(rng_seed)
    rings = [(_ring_configuration(c, p), f"ring:{c}+{'-'.join(map(str, p))}") for c, p in _ring_partitions(n_ions)]
    rings.sort(key=lambda item: _scaled_energy(item[0]))
    # always keep at least one ring seed; for small N the partitions are few anyway
    n_ring = min(len(rings), max(1, (count + 1) // 2))

    seeds = []
    for x, kind in rings[:n_ring]:
        seeds.append((x + rng.uniform(-1e-3, 1e-3, size=x.shape), kind))
    for k in itertools.count():
        if len(seeds) >= count:
            break
        if k % 2 == 0:
            x = _lattice_patch(n_ions, rng)
            if _min_separation(x) <= 0.1:
                continue
            seeds.append((x, "lattice"))
        else:
            seeds.append((_random_disk(n_ions, rng), "random"))
    return [Seed(i, kind, x) for i, (x, kind) in enumerate(seeds[:count])]


# --- shells ----------------------------------------------------------------


def shell_decomposition(state: CrystalState, gap_fraction: float = 0.25, centre_fraction: float = 0.1) -> ShellDecomposition:
    """Group ions into concentric rings by splitting the sorted radii at large gaps.

    A gap counts as a ring boundary when it exceeds ``gap_fraction`` of the
    mean nearest-neighbour distance.  Ions closer to the origin than
    ``centre_fraction`` of the outermost radius form the centre "ring".
    The result is flagged ambiguous when a gap falls within a factor of two
    of the threshold or more than one ion qualifies as the centre.
    """
    x = state.positions
    n = len(x)
    radii = np.hypot(x[:, 0], x[:, 1])
    if n == 1:
        return ShellDecomposition([1], [float(radii[0])], np.zeros(1, dtype=int))
    d = x[:, None, :] - x[None, :, :]
    r = np.sqrt((d * d).sum(axis=-1))
    np.fill_diagonal(r, np.inf)
    threshold = gap_fraction * r.min(axis=1).mean()

    order = np.argsort(radii, kind="stable")
    sorted_r = radii[order]
    labels = np.zeros(n, dtype=int)
    ambiguous = False
    centre = sorted_r < centre_fraction * sorted_r[-1]
    n_centre = int(centre.sum())
    if n_centre > 1:
        ambiguous = True

    ring = 0
    for k in range(1, n):
        gap = sorted_r[k] - sorted_r[k - 1]
        boundary = gap > threshold or (n_centre and k == n_centre)
        if not boundary and 0.5 * threshold < gap:
            ambiguous = True
        elif boundary and gap < 2 * threshold and not (n_centre and k == n_centre):
            ambiguous = True
        if boundary:
            ring += 1
        labels[order[k]] = ring

    counts = np.bincount(labels).tolist()
    ring_radii = [float(radii[labels == k].mean()) for k in range(len(counts))]
    return ShellDecomposition(counts, ring_radii, labels, ambiguous)
