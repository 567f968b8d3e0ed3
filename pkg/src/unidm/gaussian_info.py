"""Gaussian-state information quantities for homodyne reverse reconciliation.

All entropies are in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (NumericalInconsistencyError, UnphysicalConditionalError)
from .physicality import (CovarianceSummary, PhysicalityInterval, _golden_max,
                          cp_interval, cp_star)

DISCRIMINANT_TOL = 1e-12
G_CLAMP = 1e-12
COND_TOL = 1e-9
# sqrt of the discriminant amplifies rounding to ~1e-8 when nu1 ~ nu2 ~ 1.
NU_SNAP_TOL = 1e-7


@dataclass(frozen=True)
class SymplecticSpectrum:
    nu1: float
    nu2: float
    nu3: float


@dataclass
class KeyRateReport:
    C_q_star: float
    C_p_star: float
    holevo: float
    mutual_info: float
    key_rate: float
    spectrum: SymplecticSpectrum
    beta: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def key_rate_clamped(self) -> float:
        return max(0.0, self.key_rate)

    def as_dict(self) -> dict:
        return {
            "cq_star": self.C_q_star, "cp_star": self.C_p_star,
            "nu1": self.spectrum.nu1, "nu2": self.spectrum.nu2, "nu3": self.spectrum.nu3,
            "chi": self.holevo, "mutual_info": self.mutual_info,
            "key_rate": self.key_rate, "key_rate_clamped": self.key_rate_clamped,
            "beta": self.beta, "diagnostics": self.diagnostics,
        }


def _spectrum_arrays(V, W, W_p, C_q, C_p):
    delta = V + W * W_p + 2.0 * C_q * C_p
    det = V * W * W_p - V * W * C_p ** 2 + C_q ** 2 * C_p ** 2 - C_q ** 2 * W_p
    disc = delta * delta - 4.0 * det
    if np.any(disc < -DISCRIMINANT_TOL):
        raise NumericalInconsistencyError(
            f"negative discriminant {np.min(disc):.3e} in symplectic spectrum")
    root = np.sqrt(np.maximum(disc, 0.0))
    nu1 = np.sqrt(0.5 * (delta + root))
    # nu1^2 nu2^2 = det; the product form avoids cancellation in delta - root.
    with np.errstate(divide="ignore", invalid="ignore"):
        nu2 = np.where(nu1 > 0, np.sqrt(np.maximum(det, 0.0)) / nu1, 0.0)
    return nu1, nu2


def symplectic_eigs(summary: CovarianceSummary):
    """Closed-form joint symplectic eigenvalues ``(nu1, nu2)``, ``nu1 >= nu2``."""
    nu1, nu2 = _spectrum_arrays(summary.V, summary.W, summary.W_p,
                                summary.C_q, summary.C_p)
    return float(nu1), float(nu2)


def conditional_nu3(V: float, W: float, C_q: float) -> float:
    """Conditional symplectic eigenvalue ``sqrt(V - C_q^2 / W)`` after q homodyne."""
    if not W > 0:
        raise UnphysicalConditionalError(f"W must be positive, got {W}")
    arg = V - C_q * C_q / W
    if arg < 1.0 - COND_TOL:
        raise UnphysicalConditionalError(
            f"conditional variance {arg:.12f} < 1 (V={V}, W={W}, C_q={C_q})")
    return math.sqrt(max(arg, 1.0))


def conditional_covariance(gamma: np.ndarray) -> np.ndarray:
    """Alice's covariance conditioned on Bob's q homodyne (pseudo-inverse form)."""
    gamma = np.asarray(gamma, dtype=float)
    g_a, g_b, g_c = gamma[:2, :2], gamma[2:, 2:], gamma[:2, 2:]
    proj = np.diag([1.0, 0.0])
    return g_a - g_c @ np.linalg.pinv(proj @ g_b @ proj) @ g_c.T


def g(x):
    """``(x + 1) log2(x + 1) - x log2(x)`` with ``g(0) = 0``.

    Arguments in ``[-G_CLAMP, 0)`` are treated as 0.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < -G_CLAMP):
        raise ValueError(f"g(x) needs x >= 0, got {np.min(x)}")
    x = np.maximum(x, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (x + 1.0) * np.log2(x + 1.0) - np.where(x > 0, x * np.log2(x), 0.0)
    return out if out.ndim else float(out)


def entropy_from_nu(nu):
    return g((np.asarray(nu, dtype=float) - 1.0) / 2.0)


def _snap(nu):
    return np.where((nu < 1.0) & (nu >= 1.0 - NU_SNAP_TOL), 1.0, nu)


def _chi_arrays(V, W, W_p, C_q, C_p):
    nu1, nu2 = map(_snap, _spectrum_arrays(V, W, W_p, C_q, C_p))
    nu3 = conditional_nu3(V, W, C_q)
    return entropy_from_nu(nu1) + entropy_from_nu(nu2) - entropy_from_nu(nu3)


def holevo(summary: CovarianceSummary) -> float:
    """Eve's Holevo bound ``g((nu1-1)/2) + g((nu2-1)/2) - g((nu3-1)/2)``."""
    return float(_chi_arrays(summary.V, summary.W, summary.W_p, summary.C_q, summary.C_p))


def spectrum(summary: CovarianceSummary) -> SymplecticSpectrum:
    nu1, nu2 = symplectic_eigs(summary)
    return SymplecticSpectrum(nu1, nu2, conditional_nu3(summary.V, summary.W, summary.C_q))


@dataclass(frozen=True)
class HolevoMax:
    chi_max: float
    cp_argmax: float
    chi_shortcut: float
    cp_shortcut: float
    interval: PhysicalityInterval


def holevo_max_over_cp(V: float, W: float, W_p: float, C_q: float,
                       grid: int = 2001, xtol: float = 1e-10) -> HolevoMax:
    """Maximize the Holevo bound over the physical C_p interval.

    A dense grid locates the best bracket, golden-section search refines it.
    The closed-form proxy ``cp_star`` is evaluated alongside.
    """
    iv = cp_interval(V, W, W_p, C_q)
    cps = np.linspace(iv.cp_minus, iv.cp_plus, grid) if iv.width > 0 else np.array([iv.cp_minus])
    vals = _chi_arrays(V, W, W_p, C_q, cps)
    i = int(np.argmax(vals))
    best_cp, best = float(cps[i]), float(vals[i])
    if iv.width > 0:
        lo = cps[max(i - 1, 0)]
        hi = cps[min(i + 1, cps.size - 1)]
        f = lambda cp: float(_chi_arrays(V, W, W_p, C_q, cp))
        x, fx = _golden_max(f, float(lo), float(hi), xtol)
        if fx > best:
            best_cp, best = x, fx
    cps_short = cp_star(iv)
    chi_short = float(_chi_arrays(V, W, W_p, C_q, cps_short))
    if chi_short > best:
        best_cp, best = cps_short, chi_short
    return HolevoMax(best, best_cp, chi_short, cps_short, iv)


def mutual_info_gaussian(V: float, W: float, C_q: float) -> float:
    """``0.5 log2(V / (V - C_q^2 / W))``."""
    cond = V - C_q * C_q / W
    if not cond > 0:
        raise UnphysicalConditionalError(f"non-positive conditional variance {cond}")
    return 0.5 * math.log2(V / cond)


def key_rate(beta: float, mutual_info: float, chi: float) -> float:
    """Devetak-Winter rate ``beta I - chi`` (unclamped)."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    return beta * mutual_info - chi
