import math

import numpy as np
import pytest

from oblate_crystal import (
    CouplingResult,
    DimensionlessTrap,
    ResonanceError,
    compute_couplings,
    coupling_scale,
    detuning_sweep,
    fit_power_law,
    solve_equilibrium,
)
from oblate_crystal.modes import build_spring_matrices, solve_modes

TRAP = DimensionlessTrap.from_betas(0.05, 1.0)


@pytest.fixture(scope="module")
def crystal():
    state = solve_equilibrium(TRAP, 8)
    K = build_spring_matrices(TRAP, state)
    return state, K, solve_modes(K)


def synthetic(distances, couplings):
    pairs = [(0, k + 1, float(r), float(j)) for k, (r, j) in enumerate(zip(distances, couplings))]
    return CouplingResult(J=np.zeros((2, 2)), detuning_mu=2.0, pairs=pairs)


def test_fit_recovers_dipolar_exponent():
    r = np.linspace(1.0, 7.0, 20)
    fit = fit_power_law(synthetic(r, r**-3))
    assert fit.exponent_b == pytest.approx(3.0, abs=1e-10)
    assert fit.prefactor == pytest.approx(1.0, rel=1e-10)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_of_uniform_coupling_is_flat():
    fit = fit_power_law(synthetic(np.linspace(1.0, 7.0, 20), np.full(20, -0.3)))
    assert fit.exponent_b == pytest.approx(0.0, abs=1e-12)
    assert fit.r_squared == 1.0


def test_fit_drops_vanishing_couplings():
    r = np.array([1.0, 2.0, 3.0, 4.0])
    fit = fit_power_law(synthetic(r, [1.0, 0.0, 1 / 9, 1e-16]))
    assert fit.n_pairs_used == 2 and fit.n_pairs_dropped == 2
    assert fit.exponent_b == pytest.approx(2.0)


def test_fit_needs_two_distances():
    with pytest.raises(ValueError):
        fit_power_law(synthetic([2.0, 2.0], [1.0, 0.5]))
    with pytest.raises(ValueError):
        fit_power_law(synthetic([2.0], [1.0]))


def test_couplings_match_resolvent(crystal):
    state, K, spectrum = crystal
    for mu in (0.3, 1.05, 2.0, 11.0):
        J = compute_couplings(mu, spectrum, state).J
        resolvent = np.linalg.inv(mu**2 * np.eye(state.n_ions) - K.K33 / TRAP.beta3_sq)
        np.fill_diagonal(resolvent, 0.0)
        np.testing.assert_allclose(J, resolvent, atol=1e-10 * np.abs(resolvent).max())


def test_mode_completeness(crystal):
    _, _, spectrum = crystal
    b = spectrum.axial_vectors
    np.testing.assert_allclose(b @ b.T, np.eye(len(b)), atol=1e-10)


def test_far_detuned_couplings_vanish_faster_than_inverse_mu_squared(crystal):
    state, _, spectrum = crystal
    scaled = [np.abs(compute_couplings(mu, spectrum, state).J).max() * mu**2 for mu in (1e3, 1e4)]
    assert scaled[1] < scaled[0]


def test_couplings_symmetric_with_empty_diagonal(crystal):
    state, _, spectrum = crystal
    result = compute_couplings(1.3, spectrum, state)
    np.testing.assert_array_equal(result.J, result.J.T)
    assert np.all(np.diag(result.J) == 0)
    assert len(result.pairs) == state.n_ions * (state.n_ions - 1) // 2


def test_detuning_on_com_is_resonant(crystal):
    state, _, spectrum = crystal
    with pytest.raises(ResonanceError) as info:
        compute_couplings(1.0, spectrum, state)
    assert info.value.mode_index == spectrum.com_index


@pytest.mark.parametrize("mu", [0.0, -1.0])
def test_non_positive_detuning_rejected(crystal, mu):
    state, _, spectrum = crystal
    with pytest.raises(ValueError):
        compute_couplings(mu, spectrum, state)


def test_sweep_keeps_order_and_isolates_errors(crystal):
    state, _, spectrum = crystal
    entries = detuning_sweep(state, spectrum, [2.0, 1.0, 11.0])
    assert [e.mu for e in entries] == [2.0, 1.0, 11.0]
    assert entries[1].error and entries[1].result is None
    assert entries[0].fit is not None and entries[2].fit is not None
    assert entries[2].fit.exponent_b > entries[0].fit.exponent_b


def test_two_ion_sweep_has_no_fit():
    state = solve_equilibrium(TRAP, 2)
    spectrum = solve_modes(build_spring_matrices(TRAP, state))
    (entry,) = detuning_sweep(state, spectrum, [2.0])
    assert entry.result is not None and entry.fit is None and entry.fit_error


def test_coupling_scale():
    hbar = 1.054571817e-34
    m = 171 * 1.66053906660e-27
    value = coupling_scale(2 * math.pi * 1e6, 2 * math.pi / 355e-9 * math.sqrt(2), m, 2 * math.pi * 5e6)
    expected = (2 * math.pi * 1e6) ** 2 * hbar * (2 * math.pi / 355e-9 * math.sqrt(2)) ** 2 / (2 * m * (2 * math.pi * 5e6) ** 2)
    assert value == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ValueError):
        coupling_scale(1.0, 1.0, 0.0, 1.0)
