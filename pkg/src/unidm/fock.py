"""Truncated Fock-space linear algebra.

Shot-noise convention: ``q = a + a^dagger`` and ``p = -i(a - a^dagger)``, so the
vacuum has unit quadrature variance. All amplitudes are real, which keeps
every operator real symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import CutoffTooSmallError, DimensionError, NotPSDError

#: Vacuum variance of either quadrature in the units used throughout.
SHOT_NOISE = 1.0

NORM_DEFECT_TOL = 1e-12
CUTOFF_MARGIN = 10
PSD_NEGATIVE_TOL = 1e-10
EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class FockCutoff:
    """Maximum photon number kept; the truncated space has ``n_c + 1`` levels."""

    n_c: int

    def __post_init__(self):
        if int(self.n_c) != self.n_c or self.n_c < 1:
            raise ValueError(f"cutoff must be an integer >= 1, got {self.n_c!r}")

    @property
    def dim(self) -> int:
        return self.n_c + 1


def as_cutoff(cutoff: FockCutoff | int) -> FockCutoff:
    return cutoff if isinstance(cutoff, FockCutoff) else FockCutoff(int(cutoff))


def norm_defect(alpha: float, cutoff: FockCutoff | int) -> float:
    """Probability weight of ``|alpha>`` lying above the cutoff."""
    n_c = as_cutoff(cutoff).n_c
    if alpha == 0.0:
        return 0.0
    # P(Poisson(alpha^2) > n_c) is the regularized lower incomplete gamma.
    return float(gammainc(n_c + 1, alpha * alpha))


def default_cutoff(max_amplitude: float, tol: float = NORM_DEFECT_TOL,
                   margin: int = CUTOFF_MARGIN) -> FockCutoff:
    """Smallest cutoff with norm defect below ``tol``, plus ``margin`` levels."""
    n_c = 1
    while norm_defect(max_amplitude, n_c) >= tol:
        n_c += 1
    return FockCutoff(n_c + margin)


def coherent_state(alpha: float, cutoff: FockCutoff | int,
                   tol: float = NORM_DEFECT_TOL) -> np.ndarray:
    """Fock amplitudes ``exp(-alpha^2/2) alpha^n / sqrt(n!)`` for real ``alpha``."""
    cutoff = as_cutoff(cutoff)
    defect = norm_defect(alpha, cutoff)
    if defect > tol:
        raise CutoffTooSmallError(
            f"coherent state alpha={alpha} has norm defect {defect:.3e} at "
            f"n_c={cutoff.n_c} (tolerance {tol:.1e})")
    n = np.arange(cutoff.dim)
    vec = np.zeros(cutoff.dim)
    if alpha == 0.0:
        vec[0] = 1.0
        return vec
    logmag = -0.5 * alpha * alpha + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    vec[:] = np.exp(logmag)
    if alpha < 0:
        vec[1::2] *= -1.0
    return vec


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)


def quadrature_q(cutoff: FockCutoff | int) -> np.ndarray:
    a = annihilation(as_cutoff(cutoff).dim)
    return a + a.T


def _squared_then_truncated(cutoff: FockCutoff | int, sign: float) -> np.ndarray:
    # Squaring inside a larger space keeps the top two diagonal entries exact.
    dim = as_cutoff(cutoff).dim
    a = annihilation(dim + 2)
    x = a + sign * a.T
    sq = sign * (x @ x)
    return sq[:dim, :dim].copy()


def quadrature_q2(cutoff: FockCutoff | int) -> np.ndarray:
    return _squared_then_truncated(cutoff, +1.0)


def quadrature_p2(cutoff: FockCutoff | int) -> np.ndarray:
    # p^2 = -(a - a^dagger)^2, real and symmetric.
    return _squared_then_truncated(cutoff, -1.0)


def psd_sqrt_invsqrt(m: np.ndarray, floor: float = EIG_FLOOR):
    """Square root and pseudo-inverse square root of a PSD matrix.

    Eigenvalues below ``floor`` times the largest eigenvalue are treated as
    zero, so the inverse root only acts on the numerical support of ``m``.

    Returns
    -------
    sqrt, inv_sqrt : ndarray
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    evals, evecs = np.linalg.eigh(0.5 * (m + m.T))
    if evals.size and evals.min() < -PSD_NEGATIVE_TOL:
        raise NotPSDError(f"matrix has eigenvalue {evals.min():.3e}")
    top = max(evals.max(initial=0.0), 0.0)
    support = evals > floor * top if top > 0 else np.zeros_like(evals, dtype=bool)
    clipped = np.where(support, evals, 0.0)
    sqrt = (evecs * np.sqrt(clipped)) @ evecs.T
    inv = np.zeros_like(evals)
    inv[support] = 1.0 / np.sqrt(evals[support])
    inv_sqrt = (evecs * inv) @ evecs.T
    return sqrt, inv_sqrt


def partial_trace_B(rho: np.ndarray, dim_A: int, dim_B: int) -> np.ndarray:
    """Trace out the second tensor factor of a ``dim_A * dim_B`` square matrix."""
    rho = np.asarray(rho)
    n = dim_A * dim_B
    if rho.shape != (n, n):
        raise DimensionError(
            f"rho has shape {rho.shape}, expected ({n}, {n}) for dims {dim_A}x{dim_B}")
    return np.einsum("ajbj->ab", rho.reshape(dim_A, dim_B, dim_A, dim_B))


def expectation(op: np.ndarray, vec: np.ndarray) -> float:
    return float(vec @ op @ vec)
