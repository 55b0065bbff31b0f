"""Command-line driver: ``bbrates {rates,evolve,regime-scan,kernel-dump} --config run.json``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .geometry import classify_regime, linear_lattice
from .golden_rule import (
    KernelSettings,
    Variant,
    kernel_sums,
    manifold_rates,
    matrix_csv,
    rate_coherent,
    rate_incoherent,
    rates_csv,
    rates_from_sums,
    resolve_kernel,
    transition_rate,
)
from .kernel import KernelCache, KernelConvergenceError
from .master import (
    StabilityError,
    StepBudgetExceeded,
    build_generator,
    evolve,
    gibbs,
    max_stable_dt,
    relaxation_rate,
    stationary,
)
from .pauli import DiagonalizationError, HilbertSpaceTooLarge, PauliParseError, Spectrum

log = logging.getLogger("bbrates")

EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 2, 3, 4


class UsageError(ValueError):
    pass


def fmt(x: float) -> str:
    return f"{x:.16e}"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_json(path: Path, obj) -> None:
    _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _versions() -> dict:
    return {"bbrates": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def _out_dir(args, cfg: RunConfig) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.output_dir is not None:
        return cfg.output_dir
    return Path("out")


def spectrum_csv(spectrum: Spectrum) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "energy", "manifold"])
    for k, (e, lab) in enumerate(zip(spectrum.eigenvalues, spectrum.manifolds)):
        w.writerow([k, fmt(e), int(lab)])
    return buf.getvalue()


def _gap_report(spectrum: Spectrum, cfg: RunConfig) -> list[dict]:
    E = spectrum.eigenvalues
    levels = [E[spectrum.manifold_members(k)[0]] for k in range(spectrum.n_manifolds)]
    gaps = sorted({abs(a - b) for i, a in enumerate(levels) for b in levels[i + 1:]})
    merged: list[float] = []
    for g in gaps:
        if not merged or g - merged[-1] > 1e-12 * g:
            merged.append(g)
    out = []
    for g in merged:
        omega = g / cfg.constants.hbar
        rep = classify_regime(cfg.geometry, omega, cfg.constants.c, cfg.kernel.theta_c, cfg.kernel.theta_i)
        out.append({"energy_gap": g, "omega": omega, "wavelength": rep.wavelength,
                    "extent_phase": rep.extent_phase, "spacing_phase": rep.spacing_phase,
                    "verdict": rep.verdict.value})
    return out


def _dump_kernels(directory: Path, spectrum: Spectrum, cfg: RunConfig, cache: KernelCache,
                  omegas: list[float] | None = None) -> list[dict]:
    if omegas is None:
        omegas = [g["omega"] for g in _gap_report(spectrum, cfg)]
    index = []
    for k, omega in enumerate(omegas):
        K = resolve_kernel(cfg.geometry, omega, cfg.constants, cfg.kernel, cache)
        name = f"kernel_{k:03d}.csv"
        _write(directory / name, K.to_csv())
        index.append({"file": name, "omega": omega, "provenance": K.tag(), "achieved_error": K.achieved_error})
    _write_json(directory / "kernels.json", index)
    return index


def cmd_rates(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    spectrum = cfg.spectrum()
    cache = KernelCache()
    ks = kernel_sums(spectrum, cfg.geometry, cfg.constants, cfg.kernel, cache, workers=args.threads)
    stim = rates_from_sums(ks, spectrum, cfg.coupling, cfg.constants, Variant.STIMULATED)
    spont = rates_from_sums(ks, spectrum, cfg.coupling, cfg.constants, Variant.WITH_SPONTANEOUS)
    gaps = _gap_report(spectrum, cfg)

    if "csv" in cfg.formats:
        _write(out / "spectrum.csv", spectrum_csv(spectrum))
        _write(out / "rates.csv", rates_csv(stim, spont))
        _write(out / "rates_stimulated.csv", matrix_csv(stim))
        _write(out / "rates_spontaneous.csv", matrix_csv(spont))
    kernels = None
    if cfg.kernel_dump or args.kernel_dump:
        kernels = _dump_kernels(out / "kernels", spectrum, cfg, cache)
    if "json" in cfg.formats:
        verdicts = {g["verdict"] for g in gaps}
        summary = {
            "command": "rates",
            "config": cfg.echo(),
            "constants": dataclasses.asdict(cfg.constants),
            "versions": _versions(),
            "seed": args.seed,
            "spectrum": {"energies": spectrum.eigenvalues.tolist(), "manifolds": spectrum.manifolds.tolist(),
                         "degeneracy_tol": spectrum.degeneracy_tol},
            "gaps": gaps,
            "verdict": verdicts.pop() if len(verdicts) == 1 else ("Mixed" if verdicts else None),
            "manifold_rates_with_spontaneous": manifold_rates(spont, spectrum).tolist(),
            "kernels": kernels,
        }
        _write_json(out / "summary.json", summary)
    log.info("wrote rates for M=%d states to %s", spectrum.dimension, out)
    return 0


def _initial_populations(spec: str, spectrum: Spectrum) -> np.ndarray:
    M = spectrum.dimension
    if spec == "ground":
        p = np.zeros(M)
        p[0] = 1.0
        return p
    if spec == "uniform":
        return np.full(M, 1.0 / M)
    try:
        p = np.array([float(x) for x in spec.split(",")])
    except ValueError:
        raise UsageError(f"--p0 must be 'ground', 'uniform' or a comma-separated list, got {spec!r}") from None
    if p.size != M:
        raise UsageError(f"--p0 has {p.size} entries but the system has {M} states")
    if np.any(p < 0) or abs(p.sum() - 1) > 1e-10:
        raise UsageError("--p0 entries must be nonnegative and sum to 1")
    return p


def cmd_evolve(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    spectrum = cfg.spectrum()
    p0 = _initial_populations(args.p0, spectrum)
    ks = kernel_sums(spectrum, cfg.geometry, cfg.constants, cfg.kernel, KernelCache(), workers=args.threads)
    rates = rates_from_sums(ks, spectrum, cfg.coupling, cfg.constants, Variant.WITH_SPONTANEOUS)
    G = build_generator(rates)
    slowest = relaxation_rate(G)
    t_final = args.t_final if args.t_final is not None else (50.0 / slowest if slowest > 0 else 0.0)
    dt = args.dt if args.dt is not None else max_stable_dt(G)
    if not np.isfinite(dt):
        dt = t_final if t_final > 0 else 1.0
    traj = evolve(G, p0, t_final, dt, record_every=args.record_every, max_steps=args.max_steps)
    target = gibbs(spectrum, cfg.coupling.temperature, cfg.constants)
    st = stationary(G)
    report = {
        "command": "evolve",
        "config": cfg.echo(),
        "versions": _versions(),
        "p0": p0.tolist(),
        "t_final": t_final,
        "dt": dt,
        "distance_to_gibbs": float(np.abs(traj.final - target).max()),
        "slowest_rate": slowest,
        "relaxation_time": (1.0 / slowest) if slowest > 0 else None,
        "max_sum_drift": traj.max_sum_drift,
        "reducible": st.reducible,
        "stationary_distance_to_gibbs": None if st.p is None else float(np.abs(st.p - target).max()),
        "final": traj.final.tolist(),
        "gibbs": target.tolist(),
    }
    if "csv" in cfg.formats:
        _write(out / "trajectory.csv", traj.to_csv())
    _write_json(out / "convergence.json", report)
    return 0


def _scan_values(args) -> np.ndarray:
    if args.values:
        vals = np.array(args.values, dtype=float)
    else:
        if args.start is None or args.stop is None or args.num is None:
            raise UsageError("give --values or all of --start, --stop, --num")
        if args.num < 1:
            raise UsageError("empty scan grid")
        vals = np.geomspace(args.start, args.stop, args.num) if args.log else np.linspace(args.start, args.stop,
                                                                                         args.num)
    if vals.size == 0:
        raise UsageError("empty scan grid")
    if np.any(vals <= 0) or np.any(np.diff(vals) <= 0):
        raise UsageError("scan grid must be positive and strictly increasing")
    return vals


def _default_transition(spectrum: Spectrum, cfg: RunConfig) -> tuple[int, int]:
    best, pair = -1.0, None
    for n in range(spectrum.dimension):
        for m in range(n + 1, spectrum.dimension):
            r = rate_incoherent(spectrum, cfg.coupling, cfg.constants, n, m)
            if r > best * (1 + 1e-9):
                best, pair = r, (n, m)
    if pair is None or best <= 0:
        raise UsageError("no dipole-allowed transition to scan")
    return pair


def cmd_regime_scan(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    values = _scan_values(args)
    spectrum = cfg.spectrum()
    n, m = tuple(args.transition) if args.transition else _default_transition(spectrum, cfg)
    M = spectrum.dimension
    if not (0 <= n < M and 0 <= m < M) or n == m:
        raise UsageError(f"transition ({n}, {m}) out of range for M={M}")
    if spectrum.degenerate(n, m):
        raise UsageError(f"transition ({n}, {m}) connects degenerate states; its rate is identically zero")
    variant = Variant(args.variant)
    base_gap = abs(spectrum.eigenvalues[n] - spectrum.eigenvalues[m])
    general = KernelSettings("lattice" if cfg.geometry.is_lattice else "quadrature", cfg.kernel.tol,
                             cfg.kernel.theta_c, cfg.kernel.theta_i, cfg.kernel.b_switch)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parameter", "b", "rate_general", "rate_coherent_limit", "rate_incoherent_limit", "verdict"])
    for value in values:
        if args.parameter == "spacing":
            if not cfg.geometry.is_lattice:
                raise UsageError("--parameter spacing needs a lattice geometry")
            geometry, scaled = linear_lattice(cfg.geometry.n, value), spectrum
        else:
            geometry = cfg.geometry
            scale = value * cfg.constants.hbar / base_gap
            scaled = dataclasses.replace(spectrum, eigenvalues=spectrum.eigenvalues * scale,
                                       degeneracy_tol=spectrum.degeneracy_tol * scale)
        omega = abs(scaled.eigenvalues[n] - scaled.eigenvalues[m]) / cfg.constants.hbar
        b = geometry.min_spacing * omega / cfg.constants.c
        r_gen = transition_rate(scaled, geometry, cfg.coupling, cfg.constants, n, m, general, variant)
        r_coh = rate_coherent(scaled, cfg.coupling, cfg.constants, n, m, variant)
        r_inc = rate_incoherent(scaled, cfg.coupling, cfg.constants, n, m, variant)
        verdict = classify_regime(geometry, omega, cfg.constants.c, cfg.kernel.theta_c, cfg.kernel.theta_i).verdict
        w.writerow([fmt(value), fmt(b), fmt(r_gen), fmt(r_coh), fmt(r_inc), verdict.value])
    _write(out / "scan.csv", buf.getvalue())
    _write_json(out / "scan.json", {"command": "regime-scan", "config": cfg.echo(), "versions": _versions(),
                                    "parameter": args.parameter, "transition": [n, m], "variant": variant.value})
    return 0


def cmd_kernel_dump(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    spectrum = None if args.omega else cfg.spectrum()
    omegas = list(args.omega) if args.omega else None
    _dump_kernels(out, spectrum, cfg, KernelCache(), omegas)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="run configuration (JSON)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (overrides config)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads for kernels")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="reserved for oracle sampling")

    parser = argparse.ArgumentParser(prog="bbrates", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="run configuration (JSON)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rates", parents=[common], help="spectrum and rate matrices")
    p.add_argument("--kernel-dump", action="store_true", help="also dump every kernel used")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("evolve", parents=[common], help="master-equation relaxation")
    p.add_argument("--p0", default="ground", help="'ground', 'uniform' or comma-separated populations")
    p.add_argument("--t-final", type=float, default=None, help="default: 50 / slowest relaxation rate")
    p.add_argument("--dt", type=float, default=None, help="default: the stability limit")
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--max-steps", type=int, default=10_000_000, help="refuse longer integrations (exit 3)")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("regime-scan", parents=[common], help="general vs coherent vs incoherent rate")
    p.add_argument("--parameter", choices=["spacing", "omega"], default="spacing")
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--num", type=int)
    p.add_argument("--linear", dest="log", action="store_false", help="linear grid (default log-spaced)")
    p.add_argument("--values", type=float, nargs="*")
    p.add_argument("--transition", type=int, nargs=2, metavar=("N", "M"), help="rate of M -> N")
    p.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.STIMULATED.value)
    p.set_defaults(func=cmd_regime_scan)

    p = sub.add_parser("kernel-dump", parents=[common], help="dump angular kernels as CSV")
    p.add_argument("--omega", type=float, nargs="*", help="frequencies (default: every spectral gap)")
    p.set_defaults(func=cmd_kernel_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.config:
        print("bbrates: error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except OSError as exc:
        print(f"bbrates: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except StabilityError as exc:
        print(f"bbrates: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (KernelConvergenceError, DiagonalizationError, HilbertSpaceTooLarge, ArithmeticError,
            StepBudgetExceeded) as exc:
        print(f"bbrates: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, PauliParseError, UsageError, ValueError) as exc:
        print(f"bbrates: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
