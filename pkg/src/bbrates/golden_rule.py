"""Golden-rule transition rates between eigenstates of an N-spin system in blackbody radiation.

Index convention: ``P[n, m]`` is the rate of the transition m -> n. Since
eigenvalues are ascending, ``n < m`` entries are emission and ``n > m``
entries are absorption.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import DipoleGeometry, Regime, classify_regime, THETA_COHERENT, THETA_INCOHERENT
from .kernel import (
    B_SWITCH,
    DEFAULT_TOL,
    AngularKernel,
    KernelCache,
    KernelConvergenceError,
    kernel_coherent,
    kernel_incoherent,
    kernel_lattice,
    kernel_quadrature,
)
from .pauli import Spectrum

DEEP_EXPONENT = 700.0


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float
    c: float
    k_B: float
    name: str = "custom"

    def __post_init__(self):
        if not (self.hbar > 0 and self.c > 0 and self.k_B > 0):
            raise ValueError("physical constants must be strictly positive")

    @classmethod
    def dimensionless(cls) -> "PhysicalConstants":
        return cls(1.0, 1.0, 1.0, "dimensionless")

    @classmethod
    def ev_um_kelvin(cls) -> "PhysicalConstants":
        """Energies in eV, lengths in um, temperatures in K, times in s (hc = 1.23984 eV um)."""
        return cls(6.582119569e-16, 2.99792458e14, 8.617333262e-5, "gaussian-ev-um-k")

    @property
    def hc(self) -> float:
        return 2 * np.pi * self.hbar * self.c


# Bohr magneton (Gaussian, 9.2740100783e-21 erg/G) expressed as sqrt(eV um^3)
BOHR_MAGNETON_EV_UM = math.sqrt(9.2740100783e-21**2 * 6.241509074e11 * 1e12)


@dataclass(frozen=True)
class CouplingSpec:
    mu: float
    temperature: float

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ValueError("mu must be a finite real")
        if not (self.temperature >= 0 and np.isfinite(self.temperature)):
            raise ValueError("temperature must be finite and >= 0")


class Variant(str, enum.Enum):
    STIMULATED = "Stimulated"
    WITH_SPONTANEOUS = "WithSpontaneous"


KERNEL_MODES = ("auto", "quadrature", "lattice", "coherent", "incoherent")


@dataclass(frozen=True)
class KernelSettings:
    mode: str = "auto"
    tol: float = DEFAULT_TOL
    theta_c: float = THETA_COHERENT
    theta_i: float = THETA_INCOHERENT
    b_switch: float = B_SWITCH

    def __post_init__(self):
        if self.mode not in KERNEL_MODES:
            raise ValueError(f"kernel mode must be one of {KERNEL_MODES}, got {self.mode!r}")


def occupancy(omega, temperature: float, constants: PhysicalConstants):
    """Planck mean photon number 1/(exp(hbar omega / k_B T) - 1); zero at T = 0."""
    omega = np.asarray(omega, dtype=float)
    if temperature == 0:
        return np.zeros_like(omega)
    x = constants.hbar * omega / (constants.k_B * temperature)
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        nbar = np.where(x > DEEP_EXPONENT, np.exp(-np.minimum(x, 1e300)), 1.0 / np.expm1(x))
    return nbar


def planck_weight(omega, temperature: float, constants: PhysicalConstants, spontaneous: bool = False):
    """omega^3 * nbar, or omega^3 * (nbar + 1) with the zero-point contribution. Zero at omega = 0."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("omega must be >= 0")
    safe = np.where(omega > 0, omega, 1.0)
    nbar = occupancy(safe, temperature, constants) + (1.0 if spontaneous else 0.0)
    out = np.where(omega > 0, safe**3 * nbar, 0.0)
    return float(out) if out.ndim == 0 else out


def rate_prefactor(coupling: CouplingSpec, constants: PhysicalConstants) -> float:
    return coupling.mu**2 / (2 * np.pi * constants.hbar * constants.c**3)


def resolve_kernel(geometry: DipoleGeometry, omega: float, constants: PhysicalConstants,
                   settings: KernelSettings = KernelSettings(), cache: KernelCache | None = None) -> AngularKernel:
    mode = settings.mode
    n = geometry.n
    if mode == "auto":
        verdict = classify_regime(geometry, omega, constants.c, settings.theta_c, settings.theta_i).verdict
        if verdict is Regime.COHERENT:
            mode = "coherent"
        elif verdict is Regime.INCOHERENT:
            mode = "incoherent"
        else:
            mode = "lattice" if geometry.is_lattice else "quadrature"
    if mode == "coherent":
        return kernel_coherent(n, omega)
    if mode == "incoherent":
        return kernel_incoherent(n, omega)
    if mode == "lattice":
        if not geometry.is_lattice:
            raise ValueError("kernel mode 'lattice' needs a geometry built as a linear lattice")
        factory = lambda: kernel_lattice(n, geometry.lattice_spacing, omega, constants.c, settings.b_switch)
    else:
        factory = lambda: kernel_quadrature(geometry, omega, settings.tol, constants.c)
    if cache is None:
        return factory()
    return cache.get_or_compute(mode, omega, factory)


def _kernel_sum(Q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """sum_ab Q_ab v_a conj(v_b) for each column of v; real and >= 0 for PSD Q.

    Values within roundoff of zero (relative to |Q| |v|^2) are returned as exact zeros.
    """
    s = np.einsum("ab,ap,bp->p", Q, v, v.conj()).real
    noise = 1e-12 * np.abs(Q).max() * (np.abs(v) ** 2).sum(axis=0)
    if np.any(s < -noise):
        raise ArithmeticError(f"negative kernel sum {s.min():.3e}; kernel is not positive semidefinite")
    return np.where(s > noise, s, 0.0)


def transition_rate(spectrum: Spectrum, geometry: DipoleGeometry, coupling: CouplingSpec,
                    constants: PhysicalConstants, n: int, m: int,
                    kernel: KernelSettings = KernelSettings(), variant: Variant = Variant.STIMULATED,
                    cache: KernelCache | None = None) -> float:
    """Rate of m -> n from the full angular kernel."""
    if n == m:
        raise ValueError("n and m must differ")
    if geometry.n != spectrum.n_sites:
        raise ValueError("geometry and spectrum have different numbers of sites")
    if spectrum.degenerate(n, m):
        return 0.0
    E = spectrum.eigenvalues
    omega = abs(E[n] - E[m]) / constants.hbar
    K = resolve_kernel(geometry, omega, constants, kernel, cache)
    v = spectrum.dipole_tensor[:, :, n, m].reshape(-1, 1)
    spont = variant is Variant.WITH_SPONTANEOUS and E[n] < E[m]
    w = planck_weight(omega, coupling.temperature, constants, spontaneous=spont)
    return float(rate_prefactor(coupling, constants) * w * _kernel_sum(K.matrix, v)[0])


def _limit_rate(spectrum, coupling, constants, n, m, variant, squared) -> float:
    if n == m:
        raise ValueError("n and m must differ")
    if spectrum.degenerate(n, m):
        return 0.0
    E = spectrum.eigenvalues
    omega = abs(E[n] - E[m]) / constants.hbar
    spont = variant is Variant.WITH_SPONTANEOUS and E[n] < E[m]
    w = planck_weight(omega, coupling.temperature, constants, spontaneous=spont)
    return float(4 * coupling.mu**2 / (3 * constants.hbar * constants.c**3) * w * squared)


def rate_coherent(spectrum: Spectrum, coupling: CouplingSpec, constants: PhysicalConstants, n: int, m: int,
                  variant: Variant = Variant.STIMULATED) -> float:
    """Closed form with the total dipole: sum_h |<E_n| sum_i sigma_i^h |E_m>|^2."""
    T = spectrum.dipole_tensor[:, :, n, m]
    sq = float(np.sum(np.abs(T.sum(axis=0)) ** 2))
    # |sum_i T_i|^2 <= N sum_i |T_i|^2; anything at roundoff of that bound is a forbidden transition
    if sq <= 1e-12 * spectrum.n_sites * float(np.sum(np.abs(T) ** 2)):
        sq = 0.0
    return _limit_rate(spectrum, coupling, constants, n, m, variant, sq)


def rate_incoherent(spectrum: Spectrum, coupling: CouplingSpec, constants: PhysicalConstants, n: int, m: int,
                    variant: Variant = Variant.STIMULATED) -> float:
    """Closed form summing single-dipole contributions: sum_i sum_h |<E_n|sigma_i^h|E_m>|^2."""
    sq = float(np.sum(np.abs(spectrum.dipole_tensor[:, :, n, m]) ** 2))
    return _limit_rate(spectrum, coupling, constants, n, m, variant, sq)


@dataclass(frozen=True, eq=False)
class KernelSums:
    """Symmetric M x M array of sum_ab Q_ab T^a conj(T^b) per pair, with the kernel tag and omega."""

    sums: np.ndarray
    omega: np.ndarray
    provenance: np.ndarray
    achieved_error: np.ndarray


def _cluster(omegas: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    order = np.argsort(omegas, kind="stable")
    s = omegas[order]
    new = np.ones(s.size, dtype=bool)
    if s.size > 1:
        new[1:] = np.diff(s) > rtol * s[1:]
    labels = np.empty(s.size, dtype=int)
    labels[order] = np.cumsum(new) - 1
    return labels


def kernel_sums(spectrum: Spectrum, geometry: DipoleGeometry, constants: PhysicalConstants,
                settings: KernelSettings = KernelSettings(), cache: KernelCache | None = None,
                workers: int = 1) -> KernelSums:
    if geometry.n != spectrum.n_sites:
        raise ValueError("geometry and spectrum have different numbers of sites")
    M = spectrum.dimension
    E = spectrum.eigenvalues
    omega = np.abs(E[:, None] - E[None, :]) / constants.hbar
    D = spectrum.dipole_tensor.reshape(3 * spectrum.n_sites, M, M)
    rows, cols = np.triu_indices(M, k=1)
    keep = spectrum.manifolds[rows] != spectrum.manifolds[cols]
    rows, cols = rows[keep], cols[keep]
    w = omega[rows, cols]

    sums = np.zeros((M, M))
    prov = np.full((M, M), "", dtype=object)
    errs = np.zeros((M, M))
    if cache is None:
        cache = KernelCache()

    mode = settings.mode
    group_mode = np.full(rows.size, mode, dtype=object)
    if mode == "auto":
        ext = geometry.extent * w / constants.c
        spc = geometry.min_spacing * w / constants.c
        group_mode[:] = "lattice" if geometry.is_lattice else "quadrature"
        group_mode[spc >= settings.theta_i] = "incoherent"
        group_mode[ext <= settings.theta_c] = "coherent"

    def assign(sel, K: AngularKernel):
        r, c = rows[sel], cols[sel]
        s = _kernel_sum(K.matrix, D[:, r, c])
        sums[r, c] = sums[c, r] = s
        prov[r, c] = prov[c, r] = K.tag()
        errs[r, c] = errs[c, r] = K.achieved_error

    for fixed in ("coherent", "incoherent"):
        sel = group_mode == fixed
        if sel.any():
            builder = kernel_coherent if fixed == "coherent" else kernel_incoherent
            assign(sel, builder(geometry.n))

    varying = np.flatnonzero((group_mode == "lattice") | (group_mode == "quadrature"))
    if varying.size:
        labels = _cluster(w[varying])
        groups = [varying[labels == g] for g in range(labels.max() + 1)]

        def compute(idx):
            sub = KernelSettings(group_mode[idx[0]], settings.tol, settings.theta_c, settings.theta_i,
                                 settings.b_switch)
            try:
                return resolve_kernel(geometry, float(w[idx[0]]), constants, sub, cache)
            except KernelConvergenceError as exc:
                pair = f"pair (n={rows[idx[0]]}, m={cols[idx[0]]})"
                raise KernelConvergenceError(f"{pair}: {exc.args[0]}", exc.achieved_error) from exc

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                kernels = list(pool.map(compute, groups))
        else:
            kernels = [compute(g) for g in groups]
        for idx, K in zip(groups, kernels):
            assign(idx, K)

    return KernelSums(sums, omega, prov, errs)


@dataclass(frozen=True, eq=False)
class RateMatrix:
    rates: np.ndarray
    variant: Variant
    energies: np.ndarray
    omega: np.ndarray
    provenance: np.ndarray

    @property
    def dimension(self) -> int:
        return self.rates.shape[0]


def rates_from_sums(ks: KernelSums, spectrum: Spectrum, coupling: CouplingSpec, constants: PhysicalConstants,
                    variant: Variant = Variant.STIMULATED) -> RateMatrix:
    pref = rate_prefactor(coupling, constants)
    stim = pref * planck_weight(ks.omega, coupling.temperature, constants) * ks.sums
    rates = stim
    if variant is Variant.WITH_SPONTANEOUS:
        # only n < m (emission) picks up the +1
        spont = pref * planck_weight(ks.omega, coupling.temperature, constants, spontaneous=True) * ks.sums
        rates = np.where(np.triu(np.ones_like(stim, dtype=bool), k=1), spont, stim)
    np.fill_diagonal(rates, 0.0)
    return RateMatrix(rates, variant, spectrum.eigenvalues, ks.omega, ks.provenance)


def rate_matrix(spectrum: Spectrum, geometry: DipoleGeometry, coupling: CouplingSpec, constants: PhysicalConstants,
                kernel: KernelSettings = KernelSettings(), variant: Variant = Variant.STIMULATED,
                cache: KernelCache | None = None, workers: int = 1) -> RateMatrix:
    ks = kernel_sums(spectrum, geometry, constants, kernel, cache, workers)
    return rates_from_sums(ks, spectrum, coupling, constants, variant)


def manifold_rates(rates: RateMatrix, spectrum: Spectrum) -> np.ndarray:
    """Aggregate P over degenerate manifolds: out[A, B] = sum_{n in A, m in B} P[n, m]."""
    K = spectrum.n_manifolds
    lab = spectrum.manifolds
    out = np.zeros((K, K))
    np.add.at(out, (lab[:, None], lab[None, :]), rates.rates)
    np.fill_diagonal(out, 0.0)
    return out


def rates_csv(stimulated: RateMatrix, spontaneous: RateMatrix) -> str:
    """Long-format export, one row per ordered pair n != m."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "m", "E_n", "E_m", "omega_nm", "rate_stimulated", "rate_with_spontaneous", "kernel_provenance"])
    E = stimulated.energies
    M = stimulated.dimension
    for n in range(M):
        for m in range(M):
            if n == m:
                continue
            w.writerow([n, m, f"{E[n]:.16e}", f"{E[m]:.16e}", f"{stimulated.omega[n, m]:.16e}",
                        f"{stimulated.rates[n, m]:.16e}", f"{spontaneous.rates[n, m]:.16e}",
                        stimulated.provenance[n, m] or "degenerate"])
    return buf.getvalue()


def matrix_csv(rates: RateMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    M = rates.dimension
    w.writerow(["n\\m"] + [str(m) for m in range(M)])
    for n in range(M):
        w.writerow([n] + [f"{x:.16e}" for x in rates.rates[n]])
    return buf.getvalue()
