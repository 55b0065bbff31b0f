"""Dipole positions, extent/minimum spacing, and coherence-regime classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist


class Regime(str, enum.Enum):
    COHERENT = "Coherent"
    INCOHERENT = "Incoherent"
    INTERMEDIATE = "Intermediate"


THETA_COHERENT = 0.1
THETA_INCOHERENT = 100.0


@dataclass(frozen=True, eq=False)
class DipoleGeometry:
    """Fixed dipole positions, shape (N, 3).

    ``extent`` and ``min_spacing`` are always recomputed from the positions.
    ``lattice_spacing`` is set only for geometries built by :func:`linear_lattice`,
    which admit the closed-form kernel.
    """

    positions: np.ndarray
    lattice_spacing: float | None = None
    extent: float = field(init=False)
    min_spacing: float = field(init=False)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        if pos.shape[0] < 1:
            raise ValueError("geometry needs at least one dipole")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        if pos.shape[0] == 1:
            ell = a = 0.0
        else:
            d = pdist(pos)
            ell, a = float(d.max()), float(d.min())
            if a <= 0:
                raise ValueError("coincident dipoles are not allowed")
        object.__setattr__(self, "extent", ell)
        object.__setattr__(self, "min_spacing", a)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def is_lattice(self) -> bool:
        return self.lattice_spacing is not None


def linear_lattice(n: int, spacing: float) -> DipoleGeometry:
    """Sites r_i = (0, 0, spacing * i), i = 1..n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    z = spacing * np.arange(1, n + 1, dtype=float)
    pos = np.column_stack([np.zeros(n), np.zeros(n), z])
    return DipoleGeometry(pos, lattice_spacing=float(spacing))


def explicit_geometry(positions) -> DipoleGeometry:
    return DipoleGeometry(np.asarray(positions, dtype=float))


@dataclass(frozen=True)
class RegimeReport:
    omega: float
    wavelength: float
    extent_phase: float  # 2*pi*ell/lambda = ell*omega/c
    spacing_phase: float  # 2*pi*a/lambda
    verdict: Regime


def classify_regime(geometry: DipoleGeometry, omega: float, c: float = 1.0,
                    theta_c: float = THETA_COHERENT, theta_i: float = THETA_INCOHERENT) -> RegimeReport:
    if omega < 0:
        raise ValueError("omega must be >= 0")
    wavelength = np.inf if omega == 0 else 2 * np.pi * c / omega
    ext = geometry.extent * omega / c
    spc = geometry.min_spacing * omega / c
    if ext <= theta_c:
        verdict = Regime.COHERENT
    elif spc >= theta_i:
        verdict = Regime.INCOHERENT
    else:
        verdict = Regime.INTERMEDIATE
    return RegimeReport(float(omega), float(wavelength), float(ext), float(spc), verdict)
