import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oblate_crystal import (
    DimensionlessTrap,
    EquilibriumError,
    SolverOptions,
    generate_seeds,
    gradient,
    potential,
    shell_decomposition,
    solve_equilibrium,
)
from oblate_crystal.equilibrium import CoincidentIonsError, planar_energy
from oblate_crystal.modes import planar_hessian

TRAP = DimensionlessTrap.from_betas(0.1, 1.0)


def test_two_ion_potential_closed_form(solved):
    trap, _, _ = solved(2)
    d = 1.7
    x = np.array([[d / 2, 0.0], [-d / 2, 0.0]])
    expected = 0.5 * trap.beta1_sq * 2 * (d / 2) ** 2 + 1 / d + 2 * trap.axial_energy(trap.plane_z)
    assert potential(trap, x) == pytest.approx(expected, rel=1e-14)


def test_anisotropic_potential_closed_form():
    trap = DimensionlessTrap.from_betas(0.2)
    trap = type(trap)(**{**trap.__dict__, "beta2_sq": 0.3})
    x = np.array([[0.0, 1.0], [0.0, -1.0]])
    assert planar_energy(trap, x) == pytest.approx(0.3 + 0.5, rel=1e-15)


@st.composite
def configurations(draw):
    n = draw(st.integers(2, 12))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    pts = []
    while len(pts) < n:
        p = rng.uniform(-3, 3, 2)
        if all(np.hypot(*(p - q)) > 0.5 for q in pts):
            pts.append(p)
    return np.array(pts)


@settings(max_examples=30, deadline=None)
@given(configurations())
def test_gradient_matches_central_differences(x):
    # planar part only: the axial constant would swamp double-precision differences
    h = 1e-6
    fd = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += h
        down[idx] -= h
        fd[idx] = (planar_energy(TRAP, up) - planar_energy(TRAP, down)) / (2 * h)
    g = gradient(TRAP, x)
    assert np.linalg.norm(g - fd) / np.linalg.norm(g) < 1e-6


def test_potential_preserves_long_double():
    x = np.array([[1.0, 0.0], [-1.0, 0.0]], dtype=np.longdouble)
    assert potential(TRAP, x).dtype == np.longdouble


def test_coincident_ions_rejected():
    with pytest.raises(CoincidentIonsError):
        potential(TRAP, np.zeros((2, 2)))


def test_single_ion_sits_at_origin():
    state = solve_equilibrium(TRAP, 1)
    assert state.converged
    np.testing.assert_allclose(state.positions, [[0.0, 0.0]], atol=1e-12)


def test_two_ions_balance_coulomb_and_trap():
    state = solve_equilibrium(TRAP, 2)
    separation = np.hypot(*(state.positions[0] - state.positions[1]))
    assert separation == pytest.approx((2 / TRAP.beta1_sq) ** (1 / 3), rel=1e-10)


def test_three_ions_form_equilateral_triangle():
    state = solve_equilibrium(TRAP, 3)
    np.testing.assert_allclose(state.radii, (math.sqrt(3) * TRAP.beta1_sq) ** (-1 / 3), rtol=1e-10)


@pytest.mark.parametrize("n", [4, 7, 12])
def test_converged_state_contract(n):
    state = solve_equilibrium(TRAP, n)
    assert state.converged
    assert state.gradient_norm < 1e-10
    assert state.energy == pytest.approx(potential(TRAP, state.positions), rel=1e-14)
    w = np.linalg.eigvalsh(planar_hessian(TRAP, state.positions))
    assert w.min() > -1e-8
    # gauge: outermost ion on the +x1 axis
    k = int(np.argmax(state.radii))
    assert state.positions[k, 0] > 0 and abs(state.positions[k, 1]) < 1e-9


@pytest.mark.parametrize(
    "n, rings",
    [(6, [1, 5]), (9, [2, 7]), (11, [3, 8]), (12, [3, 9]), (13, [4, 9]), (14, [4, 10])],
)
def test_known_ground_state_shells(n, rings):
    state = solve_equilibrium(TRAP, n)
    assert shell_decomposition(state).ring_counts == rings


def test_planar_problem_is_scale_free():
    a = solve_equilibrium(DimensionlessTrap.from_betas(0.1), 8)
    b = solve_equilibrium(DimensionlessTrap.from_betas(0.4), 8)
    ratio = (0.4 / 0.1) ** (1 / 3)
    np.testing.assert_allclose(np.sort(a.radii), np.sort(b.radii) * ratio, rtol=1e-8, atol=1e-12)
    assert a.planar_energy * ratio == pytest.approx(b.planar_energy, rel=1e-10)


def test_unstable_trap_rejected():
    with pytest.raises(ValueError, match="unstable"):
        solve_equilibrium(DimensionlessTrap.from_betas(-0.1), 3)


def test_non_convergence_keeps_best_partial():
    with pytest.raises(EquilibriumError) as info:
        solve_equilibrium(TRAP, 6, options=SolverOptions(max_iterations=1, seed_count=3))
    assert info.value.best is not None
    assert not info.value.best.converged


def test_wrong_seed_size_rejected():
    with pytest.raises(ValueError):
        solve_equilibrium(TRAP, 3, seeds=[np.zeros((2, 2))])


def test_user_seed_is_used():
    seed = np.array([[3.0, 0.0], [-3.0, 0.1], [0.0, 3.0]])
    state = solve_equilibrium(TRAP, 3, seeds=[seed])
    assert state.converged and state.seed_id == 0


def test_seeds_are_deterministic():
    a = generate_seeds(12, 10, rng_seed=3)
    b = generate_seeds(12, 10, rng_seed=3)
    assert all(np.array_equal(s.positions, t.positions) for s, t in zip(a, b))
    c = generate_seeds(12, 10, rng_seed=4)
    assert not all(np.array_equal(s.positions, t.positions) for s, t in zip(a, c))


def test_seeds_are_separated_and_distinct():
    seeds = generate_seeds(20, 50)
    assert len(seeds) == 50
    assert [s.seed_id for s in seeds] == list(range(50))
    for s in seeds:
        d = np.hypot(*(s.positions[:, None] - s.positions[None]).transpose(2, 0, 1))
        np.fill_diagonal(d, np.inf)
        assert d.min() > 0.05
    keys = {np.round(s.positions, 6).tobytes() for s in seeds}
    assert len(keys) == 50


def test_shell_decomposition_of_single_ion():
    state = solve_equilibrium(TRAP, 1)
    shells = shell_decomposition(state)
    assert shells.ring_counts == [1] and not shells.ambiguous
