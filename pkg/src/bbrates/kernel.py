"""Angular kernel Q[(i,h),(j,l)] = int dOmega exp(i u.(r_i - r_j) omega/c) (delta_hl - u_h u_l).

Kernels are stored as dense (3N, 3N) complex arrays with flat index 3*i + h.
"""

from __future__ import annotations

import bisect
import csv
import enum
import io
import math
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import DipoleGeometry

EIGHT_PI_THIRDS = 8 * np.pi / 3
B_SWITCH = 1e-3
DEFAULT_TOL = 1e-10
MAX_DOUBLINGS = 6


class Provenance(str, enum.Enum):
    QUADRATURE = "Quadrature"
    LATTICE = "LatticeAnalytic"
    COHERENT = "CoherentLimit"
    INCOHERENT = "IncoherentLimit"


class KernelConvergenceError(RuntimeError):
    def __init__(self, message: str, achieved_error: float):
        self.achieved_error = achieved_error
        super().__init__(f"{message} (achieved error {achieved_error:.3e})")


@dataclass(frozen=True, eq=False)
class AngularKernel:
    omega: float
    matrix: np.ndarray
    provenance: Provenance
    tol: float | None = None
    achieved_error: float = 0.0

    @property
    def n(self) -> int:
        return self.matrix.shape[0] // 3

    def block(self, i: int, j: int) -> np.ndarray:
        return self.matrix[3 * i:3 * i + 3, 3 * j:3 * j + 3]

    def tag(self) -> str:
        if self.provenance is Provenance.QUADRATURE:
            return f"Quadrature({self.tol:g})"
        return self.provenance.value

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "h", "j", "l", "re_Q", "im_Q", "provenance", "achieved_error"])
        Q = self.matrix
        for a in range(Q.shape[0]):
            for b in range(Q.shape[1]):
                w.writerow([a // 3, a % 3, b // 3, b % 3, f"{Q[a, b].real:.16e}", f"{Q[a, b].imag:.16e}",
                            self.tag(), f"{self.achieved_error:.16e}"])
        return buf.getvalue()


def _freeze(Q: np.ndarray) -> np.ndarray:
    Q.setflags(write=False)
    return Q


def q_analytic(b: float, longitudinal: bool, b_switch: float = B_SWITCH) -> float:
    """Lattice kernel for two sites separated by phase ``b`` along the polarization frame's z axis.

    ``longitudinal`` selects h = 3 (along the chain); otherwise h = 1, 2. Below
    ``b_switch`` a Taylor series replaces the b^-3 closed forms.
    """
    b = abs(float(b))
    if b < b_switch:
        b2 = b * b
        if longitudinal:
            return np.pi * (8 / 3 - 4 * b2 / 15 + b2 * b2 / 105)
        return np.pi * (8 / 3 - 8 * b2 / 15 + b2 * b2 / 35)
    s, c = math.sin(b), math.cos(b)
    if longitudinal:
        return 8 * np.pi * (s - b * c) / b**3
    return 4 * np.pi * (b * c + (b * b - 1) * s) / b**3


def kernel_coherent(n: int, omega: float = 0.0) -> AngularKernel:
    Q = np.kron(np.ones((n, n)), EIGHT_PI_THIRDS * np.eye(3)).astype(complex)
    return AngularKernel(omega, _freeze(Q), Provenance.COHERENT)


def kernel_incoherent(n: int, omega: float = 0.0) -> AngularKernel:
    Q = EIGHT_PI_THIRDS * np.eye(3 * n, dtype=complex)
    return AngularKernel(omega, _freeze(Q), Provenance.INCOHERENT)


def kernel_lattice(n: int, spacing: float, omega: float, c: float = 1.0, b_switch: float = B_SWITCH) -> AngularKernel:
    if n < 1 or not spacing > 0 or omega < 0:
        raise ValueError("need n >= 1, spacing > 0, omega >= 0")
    Q = np.zeros((3 * n, 3 * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            b = (i - j) * spacing * omega / c
            q_t, q_l = q_analytic(b, False, b_switch), q_analytic(b, True, b_switch)
            Q[3 * i, 3 * j] = Q[3 * i + 1, 3 * j + 1] = q_t
            Q[3 * i + 2, 3 * j + 2] = q_l
    return AngularKernel(omega, _freeze(Q), Provenance.LATTICE)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre in cos(theta) times the periodic trapezoid rule in phi."""

    n_theta: int
    n_phi: int

    def nodes(self):
        x, wx = np.polynomial.legendre.leggauss(self.n_theta)
        phi = 2 * np.pi * np.arange(self.n_phi) / self.n_phi
        wphi = 2 * np.pi / self.n_phi
        sin_t = np.sqrt(1 - x * x)
        u = np.stack([
            np.outer(sin_t, np.cos(phi)).ravel(),
            np.outer(sin_t, np.sin(phi)).ravel(),
            np.repeat(x, self.n_phi),
        ], axis=1)
        w = np.repeat(wx * wphi, self.n_phi)
        return u, w

    def doubled(self) -> "QuadratureRule":
        return QuadratureRule(2 * self.n_theta, 2 * self.n_phi)


def initial_rule(b_max: float) -> QuadratureRule:
    n = max(16, math.ceil(1.2 * b_max) + 10)
    return QuadratureRule(n, n)


def _integrate(positions: np.ndarray, k: float, rule: QuadratureRule, chunk: int = 8192) -> np.ndarray:
    u, w = rule.nodes()
    n = positions.shape[0]
    Q = np.zeros((n, 3, n, 3), dtype=complex)
    for s in range(0, u.shape[0], chunk):
        uc, wc = u[s:s + chunk], w[s:s + chunk]
        E = np.exp(1j * k * (uc @ positions.T))  # (q, n)
        P = np.eye(3)[None] - uc[:, :, None] * uc[:, None, :]  # (q, 3, 3)
        WE = wc[:, None] * E
        # Q[i,h,j,l] = sum_q w E_i conj(E_j) P_hl
        pair = np.einsum("qi,qj->qij", WE, E.conj())
        Q += np.einsum("qij,qhl->ihjl", pair, P, optimize=True)
    Q = Q.reshape(3 * n, 3 * n)
    return 0.5 * (Q + Q.conj().T)


def kernel_quadrature(geometry: DipoleGeometry, omega: float, tol: float = DEFAULT_TOL, c: float = 1.0,
                      max_doublings: int = MAX_DOUBLINGS) -> AngularKernel:
    """Product-rule quadrature, doubling node counts until successive orders agree.

    Agreement is measured as max entrywise change relative to max |Q|. The
    finer of the two orders is returned.
    """
    if omega < 0:
        raise ValueError("omega must be >= 0")
    if tol < 1e-13:
        raise ValueError("tol below 1e-13 is not reachable in double precision")
    n = geometry.n
    if omega == 0 or n == 1:
        K = kernel_coherent(n, omega)
        return AngularKernel(omega, K.matrix, Provenance.QUADRATURE, tol, 0.0)
    k = omega / c
    pos = geometry.positions - geometry.positions.mean(axis=0)
    rule = initial_rule(k * geometry.extent)
    prev = _integrate(pos, k, rule)
    err = np.inf
    for _ in range(max_doublings):
        rule = rule.doubled()
        cur = _integrate(pos, k, rule)
        err = np.abs(cur - prev).max() / np.abs(cur).max()
        if err <= tol:
            return AngularKernel(omega, _freeze(cur), Provenance.QUADRATURE, tol, float(err))
        prev = cur
    raise KernelConvergenceError(f"quadrature did not converge after {max_doublings} doublings "
                                 f"({rule.n_theta}x{rule.n_phi} nodes)", float(err))


class KernelCache:
    """Kernels keyed by (kind, omega), matching omega within a relative tolerance. Thread safe."""

    def __init__(self, rtol: float = 1e-12):
        self.rtol = rtol
        self._keys: dict[str, list[float]] = {}
        self._values: dict[tuple[str, float], AngularKernel] = {}
        self._lock = threading.Lock()

    def _find(self, kind: str, omega: float):
        keys = self._keys.get(kind, [])
        pos = bisect.bisect_left(keys, omega)
        for cand in keys[max(pos - 1, 0):pos + 1]:
            if abs(cand - omega) <= self.rtol * max(abs(omega), abs(cand)):
                return self._values[kind, cand]
        return None

    def get_or_compute(self, kind: str, omega: float, factory: Callable[[], AngularKernel]) -> AngularKernel:
        with self._lock:
            hit = self._find(kind, omega)
        if hit is not None:
            return hit
        value = factory()
        with self._lock:
            hit = self._find(kind, omega)
            if hit is not None:
                return hit
            bisect.insort(self._keys.setdefault(kind, []), omega)
            self._values[kind, omega] = value
        return value

    def __len__(self) -> int:
        return len(self._values)
