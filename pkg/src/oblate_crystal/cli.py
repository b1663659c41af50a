"""Command-line entry point: ``oblate-crystal <command> [options]``.

Every command writes its data files plus a ``<stem>.manifest.json`` that
records the inputs and the sha256 of each output.  ``--check`` recomputes the
outputs and compares them with an existing manifest without writing anything.

Exit codes: 0 success, 1 ``--check`` mismatch, 2 invalid input or unstable
voltages, 3 no converged equilibrium (partial output kept), 4 some sweep
points or detunings failed (the rest are written).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, TrapConfig, load_config
from .equilibrium import EquilibriumError, SolverOptions, shell_decomposition, solve_equilibrium
from .modes import build_spring_matrices, mode_band_scan, solve_modes
from .serialization import csv_bytes, json_bytes, sha256
from .spin_coupling import detuning_sweep
from .trap_model import build_dimensionless, stability_scan

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3
EXIT_PARTIAL = 4

DEFAULT_MU = (1.001, 1.01, 1.1, 2.0, 11.0)
TOOL = "oblate-crystal"

log = logging.getLogger(__name__)


class UsageError(ValueError):
    pass


@dataclass
class RunOutput:
    stem: str
    parameters: dict
    files: dict[str, bytes] = field(default_factory=dict)
    rng_seeds: list[int] = field(default_factory=list)
    exit_code: int = EXIT_OK
    message: str | None = None


# --- helpers ---------------------------------------------------------------


def _grid(spec, name) -> np.ndarray:
    lo, hi, count = spec
    count = int(count)
    if count < 1:
        raise UsageError(f"{name}: point count must be at least 1")
    if count == 1 and lo != hi:
        raise UsageError(f"{name}: a single point needs MIN == MAX")
    return np.linspace(float(lo), float(hi), count)


def _config(args) -> TrapConfig:
    cfg = TrapConfig() if args.config is None else load_config(args.config)
    drive = cfg.drive
    voltages = {
        "V_ring_dc": getattr(args, "vr", None),
        "V_top": getattr(args, "vt", None),
        "V_bottom": getattr(args, "vb", None),
    }
    if any(v is not None for v in voltages.values()):
        try:
            drive = drive.with_voltages(**voltages)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        cfg = TrapConfig(cfg.species, cfg.geometry, drive)
    return cfg


def _trap_summary(trap) -> dict:
    return {
        "beta1_sq": trap.beta1_sq,
        "beta2_sq": trap.beta2_sq,
        "beta3_sq": trap.beta3_sq,
        "plane_z": trap.plane_z,
        "length_scale_m": trap.length_scale,
        "omega_psi3_rad_s": trap.omega_psi3,
        "stable": trap.stable,
    }


def _stable_trap(cfg: TrapConfig):
    trap = build_dimensionless(cfg.species, cfg.geometry, cfg.drive)
    if not trap.stable:
        d = cfg.drive
        raise UsageError(
            f"voltages V_r={d.V_ring_dc:g} V, V_t={d.V_top:g} V, V_b={d.V_bottom:g} V give an unstable trap "
            f"(beta1^2={trap.beta1_sq:.6g}, beta3^2={trap.beta3_sq:.6g}); both must be positive"
        )
    return trap


def _options(args) -> SolverOptions:
    if args.seeds is not None and args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    return SolverOptions(seed_count=args.seeds, rng_seed=args.rng_seed)


def _check_n(n: int):
    if n < 1:
        raise UsageError("-n must be at least 1")


def _crystal_files(stem: str, trap, state) -> dict[str, bytes]:
    shells = shell_decomposition(state)
    radii = state.radii
    rows = [
        (i, state.positions[i, 0], state.positions[i, 1], radii[i], int(shells.ring_index[i]))
        for i in range(state.n_ions)
    ]
    doc = {
        "trap": _trap_summary(trap),
        "state": state.to_dict(),
        "shells": {
            "ring_counts": shells.ring_counts,
            "ring_radii": shells.ring_radii,
            "ambiguous": shells.ambiguous,
        },
    }
    return {
        f"{stem}.csv": csv_bytes(["index", "x1", "x2", "radius", "ring"], rows),
        f"{stem}.json": json_bytes(doc),
    }


# --- commands --------------------------------------------------------------


def cmd_stability(args) -> RunOutput:
    cfg = _config(args)
    vr = _grid(args.vr_grid, "--vr-grid")
    vtb = _grid(args.vtb_grid, "--vtb-grid")
    smap = stability_scan(cfg.species, cfg.geometry, cfg.drive, vr, vtb)
    run = RunOutput(
        "stability",
        {"trap": cfg.summary(), "vr_grid": list(args.vr_grid), "vtb_grid": list(args.vtb_grid)},
    )
    run.files["stability.csv"] = csv_bytes(["V_r", "V_tb", "beta1_sq", "beta3_sq", "stable"], smap.rows())
    return run


def cmd_equilibrium(args) -> RunOutput:
    _check_n(args.n)
    cfg = _config(args)
    options = _options(args)
    trap = _stable_trap(cfg)
    stem = f"equilibrium_N{args.n}"
    run = RunOutput(stem, {"trap": cfg.summary(), "n_ions": args.n, "seeds": args.seeds}, rng_seeds=[args.rng_seed])
    try:
        state = solve_equilibrium(trap, args.n, options=options)
    except EquilibriumError as exc:
        run.exit_code = EXIT_NOT_CONVERGED
        run.message = str(exc)
        if exc.best is not None:
            run.files.update(_crystal_files(stem, trap, exc.best))
        return run
    run.files.update(_crystal_files(stem, trap, state))
    return run


def _spectrum_rows(v_ring, spectrum):
    for k, f in enumerate(spectrum.axial_freqs):
        yield v_ring, "axial", k, float(f)
    for k, f in enumerate(spectrum.planar_freqs):
        yield v_ring, "planar", k, float(f)


def cmd_modes(args) -> RunOutput:
    _check_n(args.n)
    cfg = _config(args)
    options = _options(args)
    header = ["V_r", "mode_kind", "mode_index", "frequency"]
    params = {"trap": cfg.summary(), "n_ions": args.n, "seeds": args.seeds}

    if args.vr_sweep is None:
        trap = _stable_trap(cfg)
        stem = f"modes_N{args.n}"
        run = RunOutput(stem, params, rng_seeds=[args.rng_seed])
        try:
            state = solve_equilibrium(trap, args.n, options=options)
        except EquilibriumError as exc:
            run.exit_code = EXIT_NOT_CONVERGED
            run.message = str(exc)
            return run
        spectrum = solve_modes(build_spring_matrices(trap, state))
        doc = {"trap": _trap_summary(trap), "state": state.to_dict(), "spectrum": spectrum.to_dict()}
        run.files[f"{stem}.csv"] = csv_bytes(header, _spectrum_rows(cfg.drive.V_ring_dc, spectrum))
        run.files[f"{stem}.json"] = json_bytes(doc)
        return run

    ring_voltages = _grid(args.vr_sweep, "--vr-sweep")
    stem = f"modes_N{args.n}_sweep"
    params["vr_sweep"] = list(args.vr_sweep)
    run = RunOutput(stem, params, rng_seeds=[args.rng_seed])
    scan = mode_band_scan(
        cfg.species, cfg.geometry, args.n, ring_voltages, cfg.drive.V_top, cfg.drive.V_bottom, cfg.drive, options
    )
    points = []
    for p in scan.points:
        entry = {"V_r": p.V_ring_dc, **_trap_summary(p.trap), "error": p.error}
        if p.spectrum is not None:
            entry["soft_axial"] = p.spectrum.soft_axial
            entry["soft_planar"] = p.spectrum.soft_planar
            entry["axial_eigenvalues"] = p.spectrum.axial_eigenvalues.tolist()
            entry["planar_eigenvalues"] = p.spectrum.planar_eigenvalues.tolist()
        points.append(entry)
    run.files[f"{stem}.csv"] = csv_bytes(header, scan.rows())
    run.files[f"{stem}.json"] = json_bytes({"first_soft_V_r": scan.first_soft_V_r, "points": points})
    failed = [p for p in scan.points if p.error is not None]
    if failed:
        run.exit_code = EXIT_PARTIAL
        run.message = f"{len(failed)} of {len(scan.points)} sweep points failed; see {stem}.json"
    return run


def cmd_couplings(args) -> RunOutput:
    _check_n(args.n)
    cfg = _config(args)
    options = _options(args)
    mu_list = [float(m) for m in args.mu]
    stem = f"couplings_N{args.n}"
    run = RunOutput(
        stem,
        {"trap": cfg.summary(), "n_ions": args.n, "seeds": args.seeds, "mu_over_omega_cm": mu_list},
        rng_seeds=[args.rng_seed],
    )
    if not mu_list:
        return run
    trap = _stable_trap(cfg)
    try:
        state = solve_equilibrium(trap, args.n, options=options)
    except EquilibriumError as exc:
        run.exit_code = EXIT_NOT_CONVERGED
        run.message = str(exc)
        return run
    spectrum = solve_modes(build_spring_matrices(trap, state))
    entries = detuning_sweep(state, spectrum, mu_list)

    rows = []
    fits = []
    for e in entries:
        if e.result is not None:
            rows.extend((e.mu, m, n, r, j) for m, n, r, j in e.result.pairs)
        fit = {"mu": e.mu, "error": e.error or e.fit_error}
        fit.update(e.fit.to_dict() if e.fit is not None else {"exponent_b": None, "r_squared": None, "n_pairs_used": 0})
        fits.append(fit)
    run.files[f"{stem}_pairs.csv"] = csv_bytes(["mu", "m", "n", "r_mn", "J_mn"], rows)
    run.files[f"{stem}_fits.json"] = json_bytes(
        {
            "omega_cm_over_omega_psi3": spectrum.com_frequency,
            "omega_cm_rad_s": spectrum.com_frequency * trap.omega_psi3,
            "fits": fits,
        }
    )
    failed = [e for e in entries if e.error is not None]
    if failed:
        run.exit_code = EXIT_PARTIAL
        run.message = "; ".join(e.error for e in failed)
    return run


# --- manifest --------------------------------------------------------------


def _manifest(run: RunOutput, args) -> bytes:
    return json_bytes(
        {
            "tool": TOOL,
            "version": __version__,
            "command": args.command,
            "config_path": None if args.config is None else str(args.config),
            "parameters": run.parameters,
            "rng_seeds": run.rng_seeds,
            "exit_code": run.exit_code,
            "message": run.message,
            "outputs": [{"path": name, "sha256": sha256(data)} for name, data in run.files.items()],
        }
    )


def _write(run: RunOutput, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, data in run.files.items():
        (out / name).write_bytes(data)
    (out / f"{run.stem}.manifest.json").write_bytes(_manifest(run, args))
    return run.exit_code


def _check(run: RunOutput, args) -> int:
    out = Path(args.out)
    manifest_path = out / f"{run.stem}.manifest.json"
    problems = []
    if not manifest_path.is_file():
        problems.append(f"missing manifest {manifest_path}")
    elif manifest_path.read_bytes() != _manifest(run, args):
        problems.append(f"{manifest_path.name} differs from a fresh run")
    for name, data in run.files.items():
        path = out / name
        if not path.is_file():
            problems.append(f"missing output {name}")
        elif sha256(path.read_bytes()) != sha256(data):
            problems.append(f"{name} does not match a fresh run")
    for p in problems:
        print(f"check: {p}", file=sys.stderr)
    if problems:
        return EXIT_CHECK_FAILED
    print(f"check: {len(run.files)} output(s) of {manifest_path.name} verified")
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="trap INI file (defaults: 171Yb+ in the reference trap)")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--check", action="store_true", help="verify existing outputs against their manifest")
    common.add_argument("-v", "--verbose", action="store_true")

    volts = argparse.ArgumentParser(add_help=False)
    volts.add_argument("--vr", type=float, help="ring DC voltage [V]")
    volts.add_argument("--vt", type=float, help="top endcap DC voltage [V]")
    volts.add_argument("--vb", type=float, help="bottom endcap DC voltage [V]")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("-n", type=int, required=True, help="number of ions")
    solver.add_argument("--seeds", type=int, help="number of starting configurations")
    solver.add_argument("--rng-seed", type=int, default=0)

    parser = argparse.ArgumentParser(prog=TOOL, description="Planar ion crystals in an oblate Paul trap.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stability", parents=[common], help="beta^2 over a (V_r, V_t=V_b) grid")
    p.add_argument("--vr-grid", nargs=3, type=float, default=(0.0, 100.0, 101), metavar=("MIN", "MAX", "COUNT"))
    p.add_argument("--vtb-grid", nargs=3, type=float, default=(0.0, 100.0, 101), metavar=("MIN", "MAX", "COUNT"))
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("equilibrium", parents=[common, volts, solver], help="equilibrium positions and shells")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("modes", parents=[common, volts, solver], help="normal-mode spectrum")
    p.add_argument("--vr-sweep", nargs=3, type=float, metavar=("MIN", "MAX", "COUNT"), help="sweep the ring voltage")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("couplings", parents=[common, volts, solver], help="spin-spin couplings and power-law fits")
    p.add_argument(
        "--mu", nargs="*", type=float, default=list(DEFAULT_MU), help="detunings in units of omega_CM (may be empty)"
    )
    p.set_defaults(func=cmd_couplings)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        run = args.func(args)
    except (ConfigError, UsageError, ValueError) as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.check:
        return _check(run, args)
    code = _write(run, args)
    if run.message:
        print(f"{TOOL}: {run.message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
