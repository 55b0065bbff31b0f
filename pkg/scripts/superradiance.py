"""Collective versus independent spontaneous emission along the symmetric ladder.

N spins in a field with strong ferromagnetic all-to-all exchange keep the
fully polarized state and its symmetric descendants well separated from the
rest of the spectrum. At T = 0 the only nonzero rates are spontaneous
emission. The script compares the coherent and incoherent closed forms for
each step down the symmetric ladder. The coherent one shows the familiar
(S + M)(S - M + 1) enhancement, which peaks near M = 0 and scales as N^2.
"""

import argparse
import itertools

import numpy as np

from bbrates import CouplingSpec, PhysicalConstants, Variant, rate_coherent, rate_incoherent, spectrum_from_terms
from bbrates.pauli import PauliString


def hamiltonian(n, field=1.0, J=-0.05):
    terms = [PauliString(field, ((i, "z"),)) for i in range(1, n + 1)]
    for i, j in itertools.combinations(range(1, n + 1), 2):
        terms += [PauliString(J, ((i, a), (j, a))) for a in "xyz"]
    return terms


def symmetric_ladder(sp, n, J):
    # symmetric states have S = n/2, so sigma.sigma pairs contribute +1 each
    E = sp.eigenvalues
    pairs = n * (n - 1) // 2
    ladder = []
    for k in range(n + 1):  # k spins up
        target = (2 * k - n) + J * pairs
        idx = np.flatnonzero(np.isclose(E, target, atol=1e-9))
        if idx.size != 1:
            raise RuntimeError(f"symmetric level with {k} up spins not isolated")
        ladder.append(int(idx[0]))
    return ladder


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-sites", type=int, default=6)
    ap.add_argument("--exchange", type=float, default=-0.05)
    args = ap.parse_args(argv)

    unit = PhysicalConstants.dimensionless()
    cp = CouplingSpec(1.0, 0.0)
    single = None
    print(f"{'N':>3} {'k':>3} {'coherent/single':>16} {'incoherent/single':>18} {'(S+M)(S-M+1)':>14}")
    for n in range(1, args.max_sites + 1):
        sp = spectrum_from_terms(hamiltonian(n, J=args.exchange), n)
        ladder = symmetric_ladder(sp, n, args.exchange)
        peak = 0.0
        for k in range(n, 0, -1):
            up, down = ladder[k], ladder[k - 1]
            coh = rate_coherent(sp, cp, unit, down, up, Variant.WITH_SPONTANEOUS)
            inc = rate_incoherent(sp, cp, unit, down, up, Variant.WITH_SPONTANEOUS)
            if single is None:
                single = coh
            S, M = n / 2, k - n / 2
            print(f"{n:3d} {k:3d} {coh / single:16.6f} {inc / single:18.6f} {(S + M) * (S - M + 1):14.1f}")
            peak = max(peak, coh / single)
        print(f"    peak enhancement for N={n}: {peak:.3f}")


if __name__ == "__main__":
    main()
