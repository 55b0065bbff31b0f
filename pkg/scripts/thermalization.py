"""Relax an open Heisenberg chain toward the Gibbs state at several temperatures.

For each temperature, reports the slowest relaxation rate and the sup-norm
distance to the Gibbs distribution at multiples of the relaxation time.
"""

import argparse

import numpy as np

from bbrates import CouplingSpec, PhysicalConstants, Variant, linear_lattice, rate_matrix, spectrum_from_terms
from bbrates import build_generator, evolve, gibbs, relaxation_rate, stationary
from bbrates.master import max_stable_dt
from bbrates.pauli import PauliString


def heisenberg_chain(n, J=1.0):
    terms = []
    for i in range(1, n):
        for axis in "xyz":
            terms.append(PauliString(J, ((i, axis), (i + 1, axis))))
    return terms


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sites", type=int, default=3)
    ap.add_argument("--spacing", type=float, default=0.5)
    ap.add_argument("--temperatures", type=float, nargs="+", default=[1.0, 2.0, 20.0])
    ap.add_argument("--horizon", type=float, default=50.0, help="final time in relaxation times")
    ap.add_argument("--max-steps", type=int, default=2_000_000,
                    help="skip the time integration when the stability guard would need more steps")
    ap.add_argument("--trajectory", help="write the last trajectory to this CSV")
    args = ap.parse_args(argv)

    unit = PhysicalConstants.dimensionless()
    sp = spectrum_from_terms(heisenberg_chain(args.sites), args.sites)
    geom = linear_lattice(args.sites, args.spacing)
    print(f"levels: {np.round(sp.eigenvalues, 10).tolist()}")
    print(f"{'T':>8} {'slowest':>12} {'t=1':>10} {'t=5':>10} {'t=20':>10} {'final':>10} {'stationary':>10}")
    for T in args.temperatures:
        R = rate_matrix(sp, geom, CouplingSpec(1.0, T), unit, variant=Variant.WITH_SPONTANEOUS)
        G = build_generator(R)
        lam = relaxation_rate(G)
        target = gibbs(sp, T, unit)
        p0 = np.zeros(sp.dimension)
        p0[0] = 1.0
        st = stationary(G)
        steps = args.horizon / lam / max_stable_dt(G)
        if steps > args.max_steps:
            # cold chains are stiff: absorption is exponentially slower than emission
            print(f"{T:8.3g} {lam:12.5g}  skipped, {steps:.1e} steps needed;"
                  f" stationary distance {np.abs(st.p - target).max():.2e}")
            continue
        traj = evolve(G, p0, args.horizon / lam, max_stable_dt(G))
        dist = np.abs(traj.populations - target).max(axis=1)
        at = [dist[np.searchsorted(traj.times, k / lam)] for k in (1, 5, 20)]
        print(f"{T:8.3g} {lam:12.5g} " + " ".join(f"{d:10.2e}" for d in at)
              + f" {dist[-1]:10.2e} {np.abs(st.p - target).max():10.2e}")
        if args.trajectory:
            with open(args.trajectory, "w") as fh:
                fh.write(traj.to_csv())


if __name__ == "__main__":
    main()
