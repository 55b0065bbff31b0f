import dataclasses

import mpmath
import numpy as np
import pytest

from bbrates.geometry import explicit_geometry, linear_lattice
from bbrates.golden_rule import (
    CouplingSpec,
    KernelSettings,
    PhysicalConstants,
    Variant,
    manifold_rates,
    matrix_csv,
    occupancy,
    planck_weight,
    rate_coherent,
    rate_incoherent,
    rate_matrix,
    rates_csv,
    transition_rate,
)
from bbrates.kernel import KernelCache
from bbrates.pauli import PauliString, parse_hamiltonian_text, spectrum_from_terms

STIM, SPONT = Variant.STIMULATED, Variant.WITH_SPONTANEOUS


def single_spin(delta):
    return spectrum_from_terms([PauliString(delta / 2, ((1, "z"),))], 1)


def textbook(mu, omega, T):
    return 4 * mu**2 / 3 * omega**3 / np.expm1(omega / T) * 2


# ---------------------------------------------------------------- Planck weight

def test_planck_weight_examples(unit):
    assert planck_weight(0.0, 1.0, unit) == 0.0
    assert planck_weight(2.0, 2.0, unit) == pytest.approx(8 * 0.5819767068693265, rel=1e-15)
    assert planck_weight(1.0, 1.0, unit) == pytest.approx(1 / (np.e - 1), rel=1e-15)


@pytest.mark.parametrize("x", [650.0, 700.5, 800.0, 1000.0])
def test_planck_weight_deep_exponential(unit, x):
    w = planck_weight(1.0, 1.0 / x, unit)
    assert np.isfinite(w)
    mpmath.mp.dps = 40
    ref = float(1 / mpmath.expm1(mpmath.mpf(x)))
    assert w == pytest.approx(ref, rel=1e-13)


def test_planck_weight_far_underflow_is_zero_not_nan(unit):
    with np.errstate(all="raise"):
        assert planck_weight(1.0, 1e-6, unit) == 0.0


def test_zero_temperature(unit):
    assert planck_weight(3.0, 0.0, unit) == 0.0
    assert planck_weight(3.0, 0.0, unit, spontaneous=True) == 27.0
    np.testing.assert_array_equal(occupancy([1.0, 2.0], 0.0, unit), [0, 0])


def test_planck_weight_vectorized(unit):
    w = planck_weight(np.array([0.0, 1.0, 2.0]), 1.0, unit)
    assert w.shape == (3,) and w[0] == 0
    with pytest.raises(ValueError):
        planck_weight(-1.0, 1.0, unit)


def test_coupling_validation():
    with pytest.raises(ValueError):
        CouplingSpec(1.0, np.inf)
    with pytest.raises(ValueError):
        CouplingSpec(1.0, -1.0)
    with pytest.raises(ValueError):
        CouplingSpec(np.nan, 1.0)
    CouplingSpec(1.0, 0.0)


def test_physical_units_scale():
    units = PhysicalConstants.ev_um_kelvin()
    assert units.hc == pytest.approx(1.23984198, rel=1e-8)
    with pytest.raises(ValueError):
        PhysicalConstants(0.0, 1.0, 1.0)


# ---------------------------------------------------------------- single spin

@pytest.mark.parametrize("mode", ["auto", "coherent", "incoherent", "quadrature", "lattice"])
def test_single_spin_textbook_rate(unit, mode):
    delta, mu, T = 1.3, 0.7, 0.9
    sp = single_spin(delta)
    g = linear_lattice(1, 1.0)
    cp = CouplingSpec(mu, T)
    expected = textbook(mu, delta, T)
    for n, m in [(1, 0), (0, 1)]:
        got = transition_rate(sp, g, cp, unit, n, m, KernelSettings(mode))
        assert got == pytest.approx(expected, rel=1e-12)
    assert rate_coherent(sp, cp, unit, 1, 0) == pytest.approx(expected, rel=1e-12)
    assert rate_incoherent(sp, cp, unit, 1, 0) == rate_coherent(sp, cp, unit, 1, 0)


def test_single_spin_rate_matrix(unit):
    delta, mu, T = 2.0, 1.5, 0.6
    R = rate_matrix(single_spin(delta), linear_lattice(1, 1.0), CouplingSpec(mu, T), unit, variant=SPONT)
    up = textbook(mu, delta, T)
    assert R.rates[1, 0] == pytest.approx(up, rel=1e-12)
    # emission picks up nbar + 1
    assert R.rates[0, 1] == pytest.approx(up * np.exp(delta / T), rel=1e-12)
    assert R.rates[0, 0] == R.rates[1, 1] == 0


def test_transition_rate_rejects_bad_input(unit):
    sp = single_spin(1.0)
    with pytest.raises(ValueError):
        transition_rate(sp, linear_lattice(1, 1.0), CouplingSpec(1, 1), unit, 0, 0)
    with pytest.raises(ValueError):
        transition_rate(sp, linear_lattice(2, 1.0), CouplingSpec(1, 1), unit, 1, 0)
    sp2 = single_spin(1.0)
    with pytest.raises(ValueError):
        transition_rate(sp2, explicit_geometry([[0, 0, 0]]), CouplingSpec(1, 1), unit, 1, 0,
                        KernelSettings("lattice"))


# ---------------------------------------------------------------- two spins

def two_spin_spectrum(delta=1.0, J=0.1):
    text = f"{delta / 2} Z1\n{delta / 2} Z2\n{J} X1 X2\n{J} Y1 Y2\n{J} Z1 Z2"
    return spectrum_from_terms(parse_hamiltonian_text(text, 2), 2)


def _state(sp, energy):
    idx = np.flatnonzero(np.isclose(sp.eigenvalues, energy, atol=1e-12))
    assert idx.size == 1
    return int(idx[0])


def test_collective_enhancement_and_dark_singlet(unit):
    delta, J = 1.0, 0.1
    sp = two_spin_spectrum(delta, J)
    # triplet T-, singlet, T0, T+ at -delta+J, -3J, J, delta+J
    t_minus, singlet, t_zero = _state(sp, -delta + J), _state(sp, -3 * J), _state(sp, J)
    cp = CouplingSpec(0.8, 1.1)
    single = rate_coherent(single_spin(delta), cp, unit, 1, 0)
    assert rate_coherent(sp, cp, unit, t_zero, t_minus) == pytest.approx(2 * single, rel=1e-12)
    assert rate_incoherent(sp, cp, unit, t_zero, t_minus) == pytest.approx(single, rel=1e-12)
    # the singlet does not couple to the collective dipole
    assert rate_coherent(sp, cp, unit, singlet, t_minus) == 0.0
    assert rate_incoherent(sp, cp, unit, singlet, t_minus) > 0
    g = linear_lattice(2, 1e-9)
    got = transition_rate(sp, g, cp, unit, t_zero, t_minus, KernelSettings("auto"))
    assert got == pytest.approx(2 * single, rel=1e-12)


def _random_two_spin(rng):
    terms = []
    for _ in range(6):
        k = rng.integers(1, 3)
        sites = rng.choice([1, 2], size=k, replace=False)
        terms.append(PauliString(float(rng.normal()), tuple((int(s), str(rng.choice(list("xyz")))) for s in sites)))
    return spectrum_from_terms(terms, 2)


def test_limit_formulas_match_kernel_modes(unit, rng):
    g = explicit_geometry([[0, 0, 0], [0.3, -0.2, 0.9]])
    cp = CouplingSpec(1.2, 0.8)
    for _ in range(10):
        sp = _random_two_spin(rng)
        for n in range(4):
            for m in range(4):
                if n == m:
                    continue
                for variant in (STIM, SPONT):
                    c = rate_coherent(sp, cp, unit, n, m, variant)
                    i = rate_incoherent(sp, cp, unit, n, m, variant)
                    tc = transition_rate(sp, g, cp, unit, n, m, KernelSettings("coherent"), variant)
                    ti = transition_rate(sp, g, cp, unit, n, m, KernelSettings("incoherent"), variant)
                    assert tc == pytest.approx(c, rel=1e-12, abs=1e-300)
                    assert ti == pytest.approx(i, rel=1e-12, abs=1e-300)


def test_degenerate_pairs_are_exactly_zero(unit):
    sp = spectrum_from_terms(parse_hamiltonian_text("1 Z1 Z2"), 2)
    g = linear_lattice(2, 0.7)
    cp = CouplingSpec(1.0, 1.0)
    R = rate_matrix(sp, g, cp, unit, variant=SPONT)
    for n in range(4):
        for m in range(4):
            if sp.degenerate(n, m):
                assert R.rates[n, m] == 0.0
                if n != m:
                    assert transition_rate(sp, g, cp, unit, n, m) == 0.0
    assert (R.rates > 0).sum() == 8


# ---------------------------------------------------------------- rate matrix properties

@pytest.fixture
def chain_rates(heisenberg3, chain_geometry, unit):
    cp = CouplingSpec(0.9, 1.7)
    cache = KernelCache()
    stim = rate_matrix(heisenberg3, chain_geometry, cp, unit, variant=STIM, cache=cache)
    spont = rate_matrix(heisenberg3, chain_geometry, cp, unit, variant=SPONT, cache=cache)
    return cp, stim, spont


def test_rate_matrix_invariants(chain_rates, heisenberg3):
    _, stim, spont = chain_rates
    for R in (stim, spont):
        assert np.all(R.rates >= 0)
        np.testing.assert_array_equal(np.diag(R.rates), 0)
    np.testing.assert_allclose(stim.rates, stim.rates.T, rtol=1e-12, atol=0)
    assert set(np.unique(stim.provenance[stim.rates > 0])) == {"LatticeAnalytic"}


def test_spontaneous_ratio(chain_rates, heisenberg3, unit):
    cp, stim, spont = chain_rates
    E = heisenberg3.eigenvalues
    checked = 0
    for n in range(8):
        for m in range(n + 1, 8):
            if stim.rates[n, m] == 0:
                continue
            w = E[m] - E[n]
            nbar = 1 / np.expm1(w / cp.temperature)
            assert spont.rates[n, m] / stim.rates[n, m] == pytest.approx(1 + 1 / nbar, rel=1e-12)
            assert spont.rates[n, m] / spont.rates[m, n] == pytest.approx(np.exp(w / cp.temperature), rel=1e-12)
            assert spont.rates[m, n] == stim.rates[m, n]
            checked += 1
    assert checked > 0


def test_mu_squared_scaling(heisenberg3, chain_geometry, unit):
    a = rate_matrix(heisenberg3, chain_geometry, CouplingSpec(0.5, 1.0), unit, variant=SPONT)
    b = rate_matrix(heisenberg3, chain_geometry, CouplingSpec(1.0, 1.0), unit, variant=SPONT)
    np.testing.assert_array_equal(b.rates, 4 * a.rates)


def test_rate_matrix_matches_pairwise_rates(chain_rates, heisenberg3, chain_geometry, unit):
    cp, _, spont = chain_rates
    for n, m in [(0, 4), (4, 0), (2, 7), (7, 2), (5, 1)]:
        one = transition_rate(heisenberg3, chain_geometry, cp, unit, n, m, variant=SPONT)
        assert one == pytest.approx(spont.rates[n, m], rel=1e-13)


def test_threads_do_not_change_results(heisenberg3, unit):
    g = explicit_geometry([[0, 0, 0], [0.4, 0.1, 0], [0.2, 0.5, 0.3]])
    cp = CouplingSpec(1.0, 2.0)
    serial = rate_matrix(heisenberg3, g, cp, unit, KernelSettings("quadrature"), SPONT, workers=1)
    pooled = rate_matrix(heisenberg3, g, cp, unit, KernelSettings("quadrature"), SPONT, workers=4)
    np.testing.assert_array_equal(serial.rates, pooled.rates)


def test_cache_shared_across_pairs(heisenberg3, chain_geometry, unit):
    cache = KernelCache()
    rate_matrix(heisenberg3, chain_geometry, CouplingSpec(1, 1), unit, cache=cache)
    # gaps of the chain are 2, 4 and 6
    assert len(cache) == 3


def test_zero_temperature_only_spontaneous_emission(heisenberg3, chain_geometry, unit):
    cp = CouplingSpec(1.0, 0.0)
    stim = rate_matrix(heisenberg3, chain_geometry, cp, unit, variant=STIM)
    spont = rate_matrix(heisenberg3, chain_geometry, cp, unit, variant=SPONT)
    assert np.all(stim.rates == 0)
    assert np.all(np.tril(spont.rates) == 0)
    assert np.any(spont.rates > 0)


# ---------------------------------------------------------------- limit sandwich

def _bright_pair(sp):
    return _state(sp, 0.1), _state(sp, -0.9)


@pytest.mark.parametrize("b", [1e-3, 1e-2, 0.05, 0.1])
def test_sandwich_coherent_end(unit, b):
    sp = two_spin_spectrum()
    n, m = _bright_pair(sp)
    omega = sp.eigenvalues[n] - sp.eigenvalues[m]
    g = explicit_geometry([[0, 0, 0], [0, 0, b / omega]])
    cp = CouplingSpec(1.0, 1.0)
    general = transition_rate(sp, g, cp, unit, n, m, KernelSettings("quadrature"))
    limit = rate_coherent(sp, cp, unit, n, m)
    assert abs(general / limit - 1) <= 3 * b**2


@pytest.mark.parametrize("b", [100.0, 200.0, 500.0])
def test_sandwich_incoherent_end(unit, b):
    sp = two_spin_spectrum()
    cp = CouplingSpec(1.0, 1.0)
    g = linear_lattice(2, b)
    for n, m in [_bright_pair(sp), (_state(sp, -0.3), _state(sp, -0.9))]:
        general = transition_rate(sp, g, cp, unit, n, m, KernelSettings("quadrature"))
        limit = rate_incoherent(sp, cp, unit, n, m)
        assert abs(general / limit - 1) <= 5 / b


# ---------------------------------------------------------------- manifolds and export

def test_manifold_rates_without_degeneracy_is_identity(unit):
    sp = two_spin_spectrum()
    R = rate_matrix(sp, linear_lattice(2, 0.8), CouplingSpec(1, 1), unit, variant=SPONT)
    np.testing.assert_array_equal(manifold_rates(R, sp), R.rates)


def test_manifold_rates_invariant_under_remixing(unit, rng):
    sp = spectrum_from_terms(parse_hamiltonian_text("1 Z1 Z2"), 2)
    g = linear_lattice(2, 0.7)
    cp = CouplingSpec(1.0, 1.0)
    ref = manifold_rates(rate_matrix(sp, g, cp, unit, variant=SPONT), sp)
    assert ref.shape == (2, 2) and np.all(np.diag(ref) == 0)
    for _ in range(5):
        V = sp.eigenvectors.copy()
        for lab in range(sp.n_manifolds):
            idx = sp.manifold_members(lab)
            A = rng.normal(size=(idx.size, idx.size)) + 1j * rng.normal(size=(idx.size, idx.size))
            V[:, idx] = V[:, idx] @ np.linalg.qr(A)[0]
        mixed = dataclasses.replace(sp, eigenvectors=V)
        agg = manifold_rates(rate_matrix(mixed, g, cp, unit, variant=SPONT), mixed)
        np.testing.assert_allclose(agg, ref, rtol=1e-8)


def test_rates_csv_layout(unit):
    sp = spectrum_from_terms(parse_hamiltonian_text("1 Z1 Z2\n0.25 Z1"), 2)
    g = linear_lattice(2, 0.7)
    cp = CouplingSpec(1.0, 1.0)
    stim = rate_matrix(sp, g, cp, unit, variant=STIM)
    spont = rate_matrix(sp, g, cp, unit, variant=SPONT)
    lines = rates_csv(stim, spont).splitlines()
    assert lines[0] == "n,m,E_n,E_m,omega_nm,rate_stimulated,rate_with_spontaneous,kernel_provenance"
    assert len(lines) == 1 + 12
    rows = [ln.split(",") for ln in lines[1:]]
    for r in rows:
        n, m = int(r[0]), int(r[1])
        assert float(r[5]) == stim.rates[n, m]
        assert float(r[6]) == spont.rates[n, m]
        assert len(r[5].split("e")[0].replace("-", "").replace(".", "")) == 17
    mat = matrix_csv(spont).splitlines()
    assert len(mat) == 5 and mat[0] == "n\\m,0,1,2,3"
