"""Pauli-string Hamiltonians, dense diagonalization and dipole matrix elements.

Basis convention: site 1 is the most significant bit of the basis index and
bit value 0 is spin up (sigma^z = +1), so that the matrix of a Pauli string
equals the Kronecker product sigma_1 (x) sigma_2 (x) ... (x) sigma_N.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

AXES = ("x", "y", "z")
MAX_SITES = 12


class PauliParseError(ValueError):
    """Malformed Pauli-string text. ``line`` and ``column`` are 1-based."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class HilbertSpaceTooLarge(ValueError):
    pass


class DiagonalizationError(RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")


@dataclass(frozen=True)
class PauliString:
    coefficient: float
    factors: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        sites = [s for s, _ in self.factors]
        if len(set(sites)) != len(sites):
            raise PauliParseError(f"duplicate site in Pauli string {self.factors}")
        for s, ax in self.factors:
            if s < 1:
                raise PauliParseError(f"site index {s} must be >= 1")
            if ax not in AXES:
                raise PauliParseError(f"unknown axis {ax!r}")

    @property
    def max_site(self) -> int:
        return max((s for s, _ in self.factors), default=0)

    def __str__(self) -> str:
        return format_pauli_string(self)


_TOKEN = re.compile(r"\S+")
_FACTOR = re.compile(r"([XYZxyz])(\d+)$")


def parse_pauli_string(text: str, n_sites: int | None = None, line: int | None = None) -> PauliString:
    """Parse ``<real> (<axis><site>)*``, e.g. ``"-1.0 X1 X2"``.

    Sites are 1-based. If ``n_sites`` is given, sites beyond it are rejected.
    Errors carry the 1-based column of the offending token.
    """
    tokens = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(text)]
    if not tokens:
        raise PauliParseError("empty Pauli string", line, 1)
    coeff_text, col = tokens[0]
    try:
        coefficient = float(coeff_text)
    except ValueError:
        raise PauliParseError(f"expected a real coefficient, got {coeff_text!r}", line, col) from None
    if not np.isfinite(coefficient):
        raise PauliParseError(f"coefficient must be finite, got {coeff_text!r}", line, col)

    factors = []
    seen = set()
    for tok, col in tokens[1:]:
        m = _FACTOR.match(tok)
        if m is None:
            raise PauliParseError(f"malformed factor {tok!r}, expected e.g. X1", line, col)
        axis, site = m.group(1).lower(), int(m.group(2))
        if site < 1 or (n_sites is not None and site > n_sites):
            raise PauliParseError(f"site {site} out of range 1..{n_sites}", line, col)
        if site in seen:
            raise PauliParseError(f"duplicate site {site}", line, col)
        seen.add(site)
        factors.append((site, axis))
    return PauliString(coefficient, tuple(factors))


def format_pauli_string(term: PauliString) -> str:
    parts = [repr(float(term.coefficient))]
    parts += [f"{axis.upper()}{site}" for site, axis in term.factors]
    return " ".join(parts)


def parse_hamiltonian_text(text: str, n_sites: int | None = None) -> list[PauliString]:
    """One Pauli string per line; ``#`` starts a comment, blank lines are skipped."""
    terms = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        terms.append(parse_pauli_string(body, n_sites=n_sites, line=lineno))
    return terms


def _flip_and_phase(factors: Iterable[tuple[int, str]], n_sites: int):
    """Column k of the string's matrix has one nonzero at row k ^ mask with value phase[k]."""
    idx = np.arange(2**n_sites)
    mask = 0
    phase = np.ones(idx.size, dtype=complex)
    for site, axis in factors:
        shift = n_sites - site
        bit = (idx >> shift) & 1
        sign = 1.0 - 2.0 * bit
        if axis == "x":
            mask |= 1 << shift
        elif axis == "y":
            mask |= 1 << shift
            phase *= 1j * sign
        else:
            phase *= sign
    return mask, phase


def apply_pauli(factors: Sequence[tuple[int, str]], n_sites: int, vectors: np.ndarray) -> np.ndarray:
    """Apply a Pauli product to the columns of ``vectors`` without building the matrix."""
    mask, phase = _flip_and_phase(factors, n_sites)
    out = np.empty_like(vectors, dtype=complex)
    idx = np.arange(2**n_sites)
    scaled = phase[:, None] * vectors if vectors.ndim == 2 else phase * vectors
    out[idx ^ mask] = scaled
    return out


def build_hamiltonian(terms: Sequence[PauliString], n_sites: int, max_sites: int = MAX_SITES) -> np.ndarray:
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    if n_sites > max_sites:
        raise HilbertSpaceTooLarge(
            f"N={n_sites} exceeds the configured limit of {max_sites} sites "
            f"({4**n_sites} complex matrix entries)"
        )
    dim = 2**n_sites
    H = np.zeros((dim, dim), dtype=complex)
    cols = np.arange(dim)
    for term in terms:
        if term.max_site > n_sites:
            raise PauliParseError(f"term {format_pauli_string(term)!r} acts on site > N={n_sites}")
        mask, phase = _flip_and_phase(term.factors, n_sites)
        H[cols ^ mask, cols] += term.coefficient * phase
    return H


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues, eigenvectors as columns, and degenerate-manifold labels."""

    n_sites: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    degeneracy_tol: float
    manifolds: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.eigenvalues.size

    @property
    def n_manifolds(self) -> int:
        return int(self.manifolds.max()) + 1

    def manifold_members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.manifolds == label)

    def degenerate(self, n: int, m: int) -> bool:
        return bool(self.manifolds[n] == self.manifolds[m])

    @cached_property
    def dipole_tensor(self) -> np.ndarray:
        """Array D[i, h, n, m] = <E_n| sigma_i^h |E_m>, sites and axes 0-based."""
        V = self.eigenvectors
        D = np.empty((self.n_sites, 3, self.dimension, self.dimension), dtype=complex)
        for i in range(self.n_sites):
            for h, axis in enumerate(AXES):
                D[i, h] = V.conj().T @ apply_pauli([(i + 1, axis)], self.n_sites, V)
        D.setflags(write=False)
        return D


def _label_manifolds(eigenvalues: np.ndarray, tol: float) -> np.ndarray:
    labels = np.zeros(eigenvalues.size, dtype=int)
    if eigenvalues.size:
        labels[1:] = np.cumsum(np.diff(eigenvalues) > tol)
    return labels


def _fix_phases(V: np.ndarray) -> np.ndarray:
    # largest-modulus entry of each eigenvector made real positive
    pivot = np.argmax(np.abs(V) - 1e-12 * np.arange(V.shape[0])[:, None], axis=0)
    entries = V[pivot, np.arange(V.shape[1])]
    return V * (np.abs(entries) / entries)[None, :]


def diagonalize(H: np.ndarray, n_sites: int | None = None, degeneracy_tol: float | None = None) -> Spectrum:
    """Dense Hermitian eigendecomposition with manifold labelling.

    ``degeneracy_tol`` defaults to 1e-9 times the spectral range (absolute 1e-9
    when the spectrum is flat).
    """
    H = np.asarray(H, dtype=complex)
    dim = H.shape[0]
    if n_sites is None:
        n_sites = int(round(np.log2(dim)))
    if H.shape != (dim, dim) or 2**n_sites != dim:
        raise ValueError(f"Hamiltonian shape {H.shape} is not 2^N x 2^N")
    scale = max(np.abs(H).max(), 1.0)
    if np.abs(H - H.conj().T).max() > 1e-12 * scale:
        raise ValueError("Hamiltonian is not Hermitian")

    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise DiagonalizationError(f"eigensolver failed: {exc}") from exc
    V = _fix_phases(V)

    norm = np.linalg.norm(H, 2) if dim <= 512 else np.linalg.norm(H, "fro")
    residual = np.linalg.norm(H @ V - V * w[None, :], axis=0).max()
    if residual > 1e-10 * max(norm, 1e-300):
        raise DiagonalizationError("eigenpair residual too large", residual)

    if degeneracy_tol is None:
        spread = w[-1] - w[0]
        degeneracy_tol = 1e-9 * spread if spread > 0 else 1e-9
    w.setflags(write=False)
    V.setflags(write=False)
    return Spectrum(n_sites, w, V, float(degeneracy_tol), _label_manifolds(w, degeneracy_tol))


def spectrum_from_terms(terms: Sequence[PauliString], n_sites: int, degeneracy_tol: float | None = None,
                        max_sites: int = MAX_SITES) -> Spectrum:
    return diagonalize(build_hamiltonian(terms, n_sites, max_sites), n_sites, degeneracy_tol)


@dataclass(frozen=True, eq=False)
class DipoleElements:
    site: int
    axis: str
    matrix: np.ndarray


def dipole_matrix_elements(spectrum: Spectrum, site: int, axis: str | int) -> DipoleElements:
    """Matrix T[n, m] = <E_n|sigma_site^axis|E_m> for a 0-based site index."""
    h = AXES.index(axis) if isinstance(axis, str) else int(axis)
    if not 0 <= site < spectrum.n_sites:
        raise IndexError(f"site {site} out of range 0..{spectrum.n_sites - 1}")
    if not 0 <= h < 3:
        raise IndexError(f"axis {axis!r} out of range")
    return DipoleElements(site, AXES[h], spectrum.dipole_tensor[site, h])


def collective_dipole(spectrum: Spectrum, axis: str | int) -> np.ndarray:
    h = AXES.index(axis) if isinstance(axis, str) else int(axis)
    return spectrum.dipole_tensor[:, h].sum(axis=0)
