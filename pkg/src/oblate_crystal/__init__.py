"""Two-dimensional ion crystals in an oblate Paul trap: equilibria, phonons and Ising couplings."""

from .trap_model import (
    DimensionlessTrap,
    DriveConfig,
    IonSpecies,
    TrapGeometry,
    build_dimensionless,
    derive_frequencies,
    stability_scan,
)
from .equilibrium import (
    CrystalState,
    EquilibriumError,
    ShellDecomposition,
    SolverOptions,
    generate_seeds,
    gradient,
    potential,
    shell_decomposition,
    solve_equilibrium,
)
from .modes import ModeSpectrum, SpringMatrices, build_spring_matrices, mode_band_scan, solve_modes
from .spin_coupling import (
    CouplingResult,
    PowerLawFit,
    ResonanceError,
    compute_couplings,
    coupling_scale,
    detuning_sweep,
    fit_power_law,
)

__version__ = "0.1.0"

__all__ = [
    "DimensionlessTrap",
    "DriveConfig",
    "IonSpecies",
    "TrapGeometry",
    "build_dimensionless",
    "derive_frequencies",
    "stability_scan",
    "CrystalState",
    "EquilibriumError",
    "ShellDecomposition",
    "SolverOptions",
    "generate_seeds",
    "gradient",
    "potential",
    "shell_decomposition",
    "solve_equilibrium",
    "ModeSpectrum",
    "SpringMatrices",
    "build_spring_matrices",
    "mode_band_scan",
    "solve_modes",
    "CouplingResult",
    "PowerLawFit",
    "ResonanceError",
    "compute_couplings",
    "coupling_scale",
    "detuning_sweep",
    "fit_power_law",
]
