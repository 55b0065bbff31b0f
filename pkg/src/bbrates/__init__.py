"""Golden-rule transition rates for fixed spin-1/2 magnetic dipoles in blackbody radiation."""

__version__ = "0.1.0"

from .geometry import DipoleGeometry, Regime, RegimeReport, classify_regime, explicit_geometry, linear_lattice
from .golden_rule import (
    CouplingSpec,
    KernelSettings,
    PhysicalConstants,
    RateMatrix,
    Variant,
    manifold_rates,
    planck_weight,
    rate_coherent,
    rate_incoherent,
    rate_matrix,
    transition_rate,
)
from .kernel import (
    AngularKernel,
    KernelCache,
    Provenance,
    kernel_coherent,
    kernel_incoherent,
    kernel_lattice,
    kernel_quadrature,
    q_analytic,
)
from .master import build_generator, detailed_balance_check, evolve, gibbs, relaxation_rate, stationary
from .pauli import (
    PauliString,
    Spectrum,
    build_hamiltonian,
    diagonalize,
    dipole_matrix_elements,
    parse_hamiltonian_text,
    parse_pauli_string,
    spectrum_from_terms,
)
