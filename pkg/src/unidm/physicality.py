"""Physicality of two-mode covariance matrices and the C_p interval.

Covariance matrices use the mode ordering ``(q_A, p_A, q_B, p_B)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import DimensionError, EmptyRegionError, QBlockUnphysicalError

PHYS_TOL = 1e-9
SYMMETRY_TOL = 1e-12

OMEGA = np.array([[0.0, 1.0, 0.0, 0.0],
                  [-1.0, 0.0, 0.0, 0.0],
                  [0.0, 0.0, 0.0, 1.0],
                  [0.0, 0.0, -1.0, 0.0]])


@dataclass(frozen=True)
class CovarianceSummary:
    """Five scalars of the reflection-symmetrized covariance matrix.

    Alice's p-variance is fixed to 1 by the choice of purification.
    """

    V: float
    W: float
    W_p: float
    C_q: float
    C_p: float = 0.0

    def matrix(self) -> np.ndarray:
        return np.array([[self.V, 0.0, self.C_q, 0.0],
                         [0.0, 1.0, 0.0, self.C_p],
                         [self.C_q, 0.0, self.W, 0.0],
                         [0.0, self.C_p, 0.0, self.W_p]])

    def with_cp(self, cp: float) -> "CovarianceSummary":
        return replace(self, C_p=cp)

    def delta(self) -> float:
        return self.V + self.W * self.W_p + 2.0 * self.C_q * self.C_p

    def det(self) -> float:
        V, W, Wp, Cq, Cp = self.V, self.W, self.W_p, self.C_q, self.C_p
        return V * W * Wp - V * W * Cp ** 2 + Cq ** 2 * Cp ** 2 - Cq ** 2 * Wp


@dataclass(frozen=True)
class PhysicalityInterval:
    cp_minus: float
    cp_plus: float
    c0: float
    w0: float

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.cp_minus + self.cp_plus)

    @property
    def width(self) -> float:
        return self.cp_plus - self.cp_minus

    def contains(self, cp: float, tol: float = 0.0) -> bool:
        return self.cp_minus - tol <= cp <= self.cp_plus + tol


def cp_radicand(V: float, W: float, W_p: float, C_q: float):
    """Return ``(radicand, C_0, W_0)`` of the closed-form C_p bound."""
    d = V * W - C_q * C_q
    if not d > 0:
        raise QBlockUnphysicalError(
            f"V*W - C_q^2 = {d:.3e} <= 0 (V={V}, W={W}, C_q={C_q})")
    c0 = C_q / d
    w0 = V / d
    return (1.0 - (W / V) * w0) * (W_p - w0), c0, w0


def cp_interval(V: float, W: float, W_p: float, C_q: float) -> PhysicalityInterval:
    """Physical range ``[C_p^-, C_p^+]`` for the symmetrized covariance matrix."""
    rad, c0, w0 = cp_radicand(V, W, W_p, C_q)
    # The radicand is a product of two factors. Both negative means the
    # conditional variance V - C_q^2 / W is below vacuum, so both must be >= 0.
    if rad < 0 or 1.0 - (W / V) * w0 < 0 or W_p - w0 < 0:
        raise EmptyRegionError(
            f"no physical C_p for V={V}, W={W}, W_p={W_p}, C_q={C_q} "
            f"(radicand {rad:.3e})")
    half = math.sqrt(rad)
    return PhysicalityInterval(cp_minus=-half - c0, cp_plus=half - c0, c0=c0, w0=w0)


def parabola_holds(s: CovarianceSummary) -> bool:
    """Closed-form test ``(C_p + C_0)^2 <= (1 - W W_0 / V)(W_p - W_0)``."""
    rad, c0, _ = cp_radicand(s.V, s.W, s.W_p, s.C_q)
    return (s.C_p + c0) ** 2 <= rad


def det_condition_holds(s: CovarianceSummary) -> bool:
    """Determinant form ``det(gamma) >= Delta - 1`` of the uncertainty bound."""
    return s.det() >= s.delta() - 1.0


def cq_transitions(V: float, W: float, W_p: float):
    """Values ``C_q = +-sqrt((V W W_p - V - W W_p + 1) / W_p)``.

    Returns ``None`` when the numerator is negative: the whole C_q range then
    sits in a single regime.
    """
    if not W_p > 0:
        raise ValueError(f"W_p must be positive, got {W_p}")
    num = V * W * W_p - V - W * W_p + 1.0
    if num < 0:
        return None
    root = math.sqrt(num / W_p)
    return -root, root


def cp_star(interval: PhysicalityInterval) -> float:
    """The pessimistic-proxy C_p: 0 if admissible, else the endpoint nearest 0."""
    if interval.cp_minus > 0:
        return interval.cp_minus
    if interval.cp_plus < 0:
        return interval.cp_plus
    return 0.0


def symplectic_spectrum(gamma: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues of a two-mode covariance matrix, ascending.

    Computed as the moduli of the eigenvalues of ``i Omega gamma``, which come
    in +- pairs.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (4, 4):
        raise DimensionError(f"expected a 4x4 covariance matrix, got {gamma.shape}")
    if np.abs(gamma - gamma.T).max() > SYMMETRY_TOL * max(1.0, np.abs(gamma).max()):
        raise ValueError("covariance matrix is not symmetric")
    ev = np.linalg.eigvals(1j * OMEGA @ gamma)
    mods = np.sort(np.abs(ev))
    return 0.5 * (mods[0::2] + mods[1::2])


def min_symplectic(gamma: np.ndarray) -> float:
    return float(symplectic_spectrum(gamma)[0])


def is_physical(gamma: np.ndarray, tol: float = PHYS_TOL) -> bool:
    gamma = np.asarray(gamma, dtype=float)
    if np.linalg.eigvalsh(0.5 * (gamma + gamma.T)).min() <= 0:
        return False
    return min_symplectic(gamma) >= 1.0 - tol


def _golden_max(f: Callable[[float], float], lo: float, hi: float, xtol: float):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def generic_cp_interval_by_bisection(cm_builder: Callable[[float], np.ndarray],
                                     bound: float, tol: float = PHYS_TOL,
                                     xtol: float = 1e-12,
                                     grid: int = 401) -> PhysicalityInterval:
    """Physical C_p range of an arbitrary one-parameter covariance family.

    ``cm_builder(cp)`` returns the 4x4 matrix; ``bound`` limits the search to
    ``[-bound, bound]`` (positivity of the p block gives a natural choice).
    The physical set is convex in ``C_p``, so after locating a physical seed
    (coarse grid, then golden-section maximization of the smallest symplectic
    eigenvalue) each edge is found by bisection. A single admissible point is
    returned as a degenerate interval.
    """
    def nu_min(cp):
        g = cm_builder(cp)
        if np.linalg.eigvalsh(g).min() <= 0:
            return -1.0
        return min_symplectic(g)

    xs = np.linspace(-bound, bound, grid)
    vals = np.array([nu_min(x) for x in xs])
    i = int(np.argmax(vals))
    lo = xs[max(i - 1, 0)]
    hi = xs[min(i + 1, grid - 1)]
    seed, best = _golden_max(nu_min, lo, hi, xtol)
    if vals[i] > best:
        seed, best = xs[i], vals[i]
    if best < 1.0 - tol:
        raise EmptyRegionError(
            f"no physical C_p in [-{bound}, {bound}] (max nu_min {best:.12f})")

    def edge(outside, inside):
        if nu_min(outside) >= 1.0 - tol:
            return outside
        while abs(inside - outside) > xtol:
            mid = 0.5 * (inside + outside)
            if nu_min(mid) >= 1.0 - tol:
                inside = mid
            else:
                outside = mid
        return inside

    return PhysicalityInterval(cp_minus=edge(-bound, seed), cp_plus=edge(bound, seed),
                               c0=float("nan"), w0=float("nan"))
