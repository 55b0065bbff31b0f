"""Pauli (population-only) master equation built from a golden-rule rate matrix."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .golden_rule import PhysicalConstants, RateMatrix, Variant
from .pauli import Spectrum


class StabilityError(ValueError):
    def __init__(self, dt: float, suggested: float):
        self.dt = dt
        self.suggested = suggested
        super().__init__(f"dt={dt:.6g} violates the stability guard; use dt <= {suggested:.6g}")


class ReducibleGeneratorWarning(UserWarning):
    pass


class StepBudgetExceeded(RuntimeError):
    def __init__(self, steps: int, budget: int):
        self.steps = steps
        self.budget = budget
        super().__init__(f"integration needs {steps} steps, more than the budget of {budget}; "
                         "shorten t_final")


def build_generator(rates: RateMatrix | np.ndarray) -> np.ndarray:
    """G[n, m] = K[n, m] off the diagonal and G[m, m] = -sum_n K[n, m], so columns sum to zero."""
    K = np.array(rates.rates if isinstance(rates, RateMatrix) else rates, dtype=float)
    if isinstance(rates, RateMatrix) and rates.variant is not Variant.WITH_SPONTANEOUS:
        warnings.warn("stimulated-only rates do not relax to the Gibbs distribution", stacklevel=2)
    if np.any(K < 0):
        raise ValueError("rates must be nonnegative")
    np.fill_diagonal(K, 0.0)
    G = K - np.diag(K.sum(axis=0))
    return G


def max_stable_dt(G: np.ndarray) -> float:
    rate = np.abs(np.diag(G)).max()
    return math.inf if rate == 0 else 0.1 / rate


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    populations: np.ndarray  # (len(times), M)
    max_sum_drift: float  # largest |sum p - 1| seen before renormalization

    @property
    def final(self) -> np.ndarray:
        return self.populations[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        M = self.populations.shape[1]
        w.writerow(["t"] + [f"p_{k}" for k in range(M)])
        for t, p in zip(self.times, self.populations):
            w.writerow([f"{t:.16e}"] + [f"{x:.16e}" for x in p])
        return buf.getvalue()


def _check_population(p0) -> np.ndarray:
    p = np.asarray(p0, dtype=float)
    if np.any(p < -1e-12) or abs(p.sum() - 1) > 1e-10:
        raise ValueError("initial populations must be nonnegative and sum to 1")
    return np.clip(p, 0.0, None)


def evolve(G: np.ndarray, p0, t_final: float, dt: float, record_every: int = 1,
           max_steps: int | None = None) -> Trajectory:
    """Fixed-step classical RK4 for dp/dt = G p, renormalizing after every step.

    The step actually used is ``t_final / ceil(t_final / dt)`` so the last
    timestamp lands on ``t_final``.
    """
    limit = max_stable_dt(G)
    if dt <= 0 or dt > limit:
        raise StabilityError(dt, limit)
    p = _check_population(p0)
    if p.size != G.shape[0]:
        raise ValueError(f"initial populations have length {p.size}, expected {G.shape[0]}")
    steps = max(1, math.ceil(t_final / dt)) if t_final > 0 else 0
    if max_steps is not None and steps > max_steps:
        raise StepBudgetExceeded(steps, max_steps)
    h = t_final / steps if steps else 0.0
    times, pops = [0.0], [p.copy()]
    drift = 0.0
    for k in range(1, steps + 1):
        k1 = G @ p
        k2 = G @ (p + 0.5 * h * k1)
        k3 = G @ (p + 0.5 * h * k2)
        k4 = G @ (p + h * k3)
        p = p + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        total = p.sum()
        drift = max(drift, abs(total - 1))
        p = np.clip(p, 0.0, None) / total
        if k % record_every == 0 or k == steps:
            times.append(k * h)
            pops.append(p.copy())
    return Trajectory(np.array(times), np.array(pops), drift)


@dataclass(frozen=True, eq=False)
class StationaryResult:
    """Stationary populations.

    ``classes`` lists the closed communicating classes and ``per_class`` one
    stationary vector supported on each. ``p`` is the unique stationary vector,
    or None when there are several closed classes. ``reducible`` is set when
    the states do not form a single communicating class.
    """

    p: np.ndarray | None
    classes: list[np.ndarray]
    per_class: list[np.ndarray]
    n_components: int

    @property
    def reducible(self) -> bool:
        return self.n_components > 1


def _null_vector(G: np.ndarray) -> np.ndarray:
    """Stationary vector of an irreducible generator by Grassmann-Taqqu-Heyman elimination.

    The elimination only adds and divides nonnegative numbers, so it keeps full
    relative accuracy even when rates span many orders of magnitude.
    """
    M = G.shape[0]
    A = np.array(G, dtype=float).T  # A[i, j]: rate i -> j
    np.fill_diagonal(A, 0.0)
    for k in range(M - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0:
            raise ValueError("generator restricted to the class is not irreducible")
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    p = np.zeros(M)
    p[0] = 1.0
    for k in range(1, M):
        p[k] = p[:k] @ A[:k, k]
    return p / p.sum()


def _communicating_classes(G: np.ndarray) -> tuple[int, list[np.ndarray]]:
    """Number of strongly connected components and the closed ones (no outgoing rate)."""
    M = G.shape[0]
    K = G - np.diag(np.diag(G))
    # edge m -> n when K[n, m] > 0
    n_comp, labels = connected_components(K.T > 0, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.setdiff1d(np.arange(M), members)
        if outside.size == 0 or not np.any(K[np.ix_(outside, members)] > 0):
            closed.append(members)
    return n_comp, closed


def stationary(G: np.ndarray) -> StationaryResult:
    M = G.shape[0]
    n_comp, closed = _communicating_classes(G)
    per_class = []
    for members in closed:
        sub = G[np.ix_(members, members)]
        vec = np.zeros(M)
        vec[members] = _null_vector(sub)
        per_class.append(vec)
    if n_comp > 1:
        warnings.warn(f"generator is reducible: {n_comp} communicating classes, {len(closed)} closed",
                      ReducibleGeneratorWarning, stacklevel=2)
    return StationaryResult(per_class[0] if len(closed) == 1 else None, closed, per_class, n_comp)


def gibbs(spectrum: Spectrum | np.ndarray, temperature: float, constants: PhysicalConstants) -> np.ndarray:
    E = np.asarray(spectrum.eigenvalues if isinstance(spectrum, Spectrum) else spectrum, dtype=float)
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if temperature == 0:
        tol = spectrum.degeneracy_tol if isinstance(spectrum, Spectrum) else 0.0
        p = (E <= E.min() + tol).astype(float)
    else:
        p = np.exp(-(E - E.min()) / (constants.k_B * temperature))
    return p / p.sum()


def relaxation_rate(G: np.ndarray) -> float:
    """Magnitude of the slowest nonzero generator eigenvalue (inverse relaxation time).

    The number of exact zero modes equals the number of closed classes, so those
    are dropped by count rather than by a threshold; rates far below the largest
    one (cold, nearly dark levels) are then still reported, at the accuracy of
    the dense eigensolver.
    """
    _, closed = _communicating_classes(G)
    lam = np.sort(np.abs(np.linalg.eigvals(G).real))[len(closed):]
    return float(lam[0]) if lam.size else 0.0


@dataclass(frozen=True)
class DetailedBalanceReport:
    pairs_checked: int
    worst_relative_deviation: float
    worst_pair: tuple[int, int] | None
    thermalizes: bool
    message: str

    @property
    def ok(self) -> bool:
        return self.thermalizes and self.worst_relative_deviation <= 1e-10


def detailed_balance_check(rates: RateMatrix, spectrum: Spectrum, temperature: float,
                           constants: PhysicalConstants) -> DetailedBalanceReport:
    """Compare K[n, m] / K[m, n] with exp(hbar omega / k_B T) for every connected emission pair n < m."""
    K = rates.rates
    E = spectrum.eigenvalues
    worst, worst_pair, count = 0.0, None, 0
    for n in range(K.shape[0]):
        for m in range(n + 1, K.shape[0]):
            if spectrum.degenerate(n, m) or K[m, n] <= 0 or K[n, m] <= 0:
                continue
            count += 1
            expected = math.exp((E[m] - E[n]) / (constants.k_B * temperature))
            dev = abs(K[n, m] / K[m, n] / expected - 1)
            if dev > worst or worst_pair is None:
                worst, worst_pair = dev, (n, m)
    if rates.variant is Variant.STIMULATED:
        return DetailedBalanceReport(count, worst, worst_pair, False,
                                     "stimulated-only rates are symmetric: no thermalization to Gibbs expected")
    return DetailedBalanceReport(count, worst, worst_pair, True,
                                 f"worst pair {worst_pair} deviates by {worst:.3e}")
