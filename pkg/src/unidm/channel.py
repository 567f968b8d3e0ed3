"""Channel models, expected statistics and independent baselines.

The pure-loss Holevo and exact mutual information here work from coherent
overlaps and Gaussian densities only; they never touch a Fock truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import expm

from . import fock
from .constellation import Constellation, coherent_overlaps, modulation_variance, mean_ratio
from .errors import CutoffTooSmallError, QuadratureError
from .gaussian_info import (KeyRateReport, SymplecticSpectrum, conditional_covariance,
                            entropy_from_nu, key_rate)
from .physicality import PHYS_TOL, _golden_max, generic_cp_interval_by_bisection, symplectic_spectrum

DEFAULT_ATTEN_DB_KM = 0.2
TRACE_DEFECT_TOL = 1e-10
SIM_PAD = 40
# Tighter than PHYS_TOL: a loose edge lets chi pick up spurious weight near vacuum.
GM_PHYS_TOL = 1e-13


@dataclass(frozen=True)
class GaussianChannelParams:
    T_q: float
    T_p: float
    xi_q: float = 0.0
    xi_p: float = 0.0

    def __post_init__(self):
        for name in ("T_q", "T_p"):
            t = getattr(self, name)
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {t}")
        for name in ("xi_q", "xi_p"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def phase_insensitive(cls, T: float, xi: float = 0.0) -> "GaussianChannelParams":
        return cls(T, T, xi, xi)

    @classmethod
    def from_distance(cls, d_km: float, xi: float = 0.0,
                      atten_db_per_km: float = DEFAULT_ATTEN_DB_KM) -> "GaussianChannelParams":
        return cls.phase_insensitive(transmittance_from_distance(d_km, atten_db_per_km), xi)

    @property
    def is_phase_insensitive(self) -> bool:
        return self.T_q == self.T_p and self.xi_q == self.xi_p


@dataclass(frozen=True)
class ChannelStats:
    c_2N: float
    v_q: float
    v_p: float


def transmittance_from_distance(d_km: float, atten_db_per_km: float = DEFAULT_ATTEN_DB_KM) -> float:
    if d_km < 0:
        raise ValueError(f"distance must be >= 0, got {d_km}")
    return 10.0 ** (-atten_db_per_km * d_km / 10.0)


def expected_stats(c: Constellation, ch: GaussianChannelParams) -> ChannelStats:
    """Closed-form ``(c_2N, v_q, v_p)`` for a phase-sensitive Gaussian channel."""
    V = modulation_variance(c)
    return ChannelStats(
        c_2N=2.0 * math.sqrt(ch.T_q) * c.alpha0 * mean_ratio(c),
        v_q=ch.T_q * (V - 1.0) + 1.0 + ch.T_q * ch.xi_q,
        v_p=1.0 + ch.T_p * ch.xi_p,
    )


def gaussian_state_fock(mean_q: float, var_q: float, var_p: float, cutoff) -> np.ndarray:
    """Density matrix of a displaced squeezed thermal state, truncated.

    The state has ``<q> = mean_q``, ``<p> = 0`` and the given quadrature
    variances. Built as ``D S rho_th S^dag D^dag`` in a padded space.
    """
    cutoff = fock.as_cutoff(cutoff)
    dim = cutoff.dim + SIM_PAD
    a = fock.annihilation(dim)
    nbar = 0.5 * (math.sqrt(var_q * var_p) - 1.0)
    if nbar < -1e-12:
        raise ValueError("quadrature variances violate the uncertainty bound")
    nbar = max(nbar, 0.0)
    n = np.arange(dim)
    if nbar == 0.0:
        pops = (n == 0).astype(float)
    else:
        pops = np.exp(n * math.log(nbar) - (n + 1) * math.log1p(nbar))
    rho = np.diag(pops)
    r = -0.25 * math.log(var_q / var_p)
    if r != 0.0:
        s = expm(0.5 * r * (a @ a - a.T @ a.T))
        rho = s @ rho @ s.T
    beta = 0.5 * mean_q
    if beta != 0.0:
        d = expm(beta * (a.T - a))
        rho = d @ rho @ d.T
    return rho[:cutoff.dim, :cutoff.dim]


def simulate_stats(c: Constellation, ch: GaussianChannelParams, cutoff) -> ChannelStats:
    """Brute-force statistics from Fock-space channel outputs."""
    cutoff = fock.as_cutoff(cutoff)
    q = fock.quadrature_q(cutoff)
    q2 = fock.quadrature_q2(cutoff)
    p2 = fock.quadrature_p2(cutoff)
    var_q = 1.0 + ch.T_q * ch.xi_q
    var_p = 1.0 + ch.T_p * ch.xi_p
    c2n = vq = vp = 0.0
    for amp, w, s in zip(c.amplitudes, c.weights, c.signs):
        rho = gaussian_state_fock(2.0 * math.sqrt(ch.T_q) * amp, var_q, var_p, cutoff)
        defect = 1.0 - np.trace(rho)
        if defect > TRACE_DEFECT_TOL:
            raise CutoffTooSmallError(
                f"output state for amplitude {amp} has trace defect {defect:.2e} "
                f"at n_c={cutoff.n_c}")
        c2n += s * w * np.trace(q @ rho)
        vq += w * np.trace(q2 @ rho)
        vp += w * np.trace(p2 @ rho)
    return ChannelStats(float(c2n), float(vq), float(vp))


@dataclass(frozen=True)
class YGridConfig:
    """Homodyne-outcome integration settings (composite Simpson, doubling)."""

    n_sigma: float = 8.0
    rel_tol: float = 1e-8
    abs_tol: float = 1e-14
    initial_intervals: int = 256
    max_doublings: int = 10


def _integrate(func, lo: float, hi: float, cfg: YGridConfig) -> float:
    n = cfg.initial_intervals
    prev = None
    for _ in range(cfg.max_doublings + 1):
        y = np.linspace(lo, hi, n + 1)
        val = float(simpson(func(y), x=y))
        if prev is not None and abs(val - prev) <= cfg.rel_tol * abs(val) + cfg.abs_tol:
            return val
        prev = val
        n *= 2
    raise QuadratureError(f"Simpson integration did not converge on [{lo}, {hi}]")


def _normal(y, mean, var):
    return np.exp(-0.5 * (y - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)


def _gram_entropy(weights: np.ndarray, overlaps: np.ndarray) -> np.ndarray:
    """Entropy (bits) of ``sum_i w_i |e_i><e_i|`` from its weighted Gram matrix.

    ``weights`` may carry leading batch dimensions.
    """
    sw = np.sqrt(np.maximum(weights, 0.0))
    m = sw[..., :, None] * overlaps * sw[..., None, :]
    lam = np.linalg.eigvalsh(m)
    lam = np.clip(lam, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(lam > 1e-300, -lam * np.log2(lam), 0.0)
    return terms.sum(axis=-1)


def pure_loss_holevo(c: Constellation, T: float, cfg: YGridConfig = YGridConfig()) -> float:
    """Exact ``chi(Y;E)`` for the beam-splitter channel of transmittance ``T``.

    Eve holds ``|sqrt(1-T) a_i>`` and Bob's q homodyne outcome is
    ``Normal(2 sqrt(T) a_i, 1)``.
    """
    if not 0.0 < T <= 1.0:
        raise ValueError(f"transmittance must lie in (0, 1], got {T}")
    w = c.weights
    overlaps = coherent_overlaps(math.sqrt(1.0 - T) * c.amplitudes)
    s_avg = float(_gram_entropy(w, overlaps))
    means = 2.0 * math.sqrt(T) * c.amplitudes

    def integrand(y):
        like = w[None, :] * _normal(y[:, None], means[None, :], 1.0)
        py = like.sum(axis=1)
        post = like / np.where(py > 0, py, 1.0)[:, None]
        return py * _gram_entropy(post, overlaps)

    lo, hi = means.min() - cfg.n_sigma, means.max() + cfg.n_sigma
    s_cond = _integrate(integrand, lo, hi, cfg)
    return max(s_avg - s_cond, 0.0)


def dm_mutual_info_exact(c: Constellation, ch: GaussianChannelParams,
                         cfg: YGridConfig = YGridConfig()) -> float:
    """``I(X;Y)`` between Alice's symbol and Bob's q outcome (Gaussian mixture)."""
    var = 1.0 + ch.T_q * ch.xi_q
    means = 2.0 * math.sqrt(ch.T_q) * c.amplitudes
    w = c.weights
    sd = math.sqrt(var)

    def integrand(y):
        py = (w[None, :] * _normal(y[:, None], means[None, :], var)).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(py > 0, -py * np.log2(py), 0.0)

    h_y = _integrate(integrand, means.min() - cfg.n_sigma * sd, means.max() + cfg.n_sigma * sd, cfg)
    h_y_given_x = 0.5 * math.log2(2.0 * math.pi * math.e * var)
    return max(h_y - h_y_given_x, 0.0)


def gm_covariance(V_M: float, ch: GaussianChannelParams, cp: float) -> np.ndarray:
    """Alice-Bob covariance of the 1D Gaussian-modulated protocol."""
    va = math.sqrt(1.0 + V_M)
    corr = math.sqrt(ch.T_q * V_M) * (1.0 + V_M) ** 0.25
    w = 1.0 + ch.T_q * (V_M + ch.xi_q)
    vp = 1.0 + ch.T_p * ch.xi_p
    return np.array([[va, 0.0, corr, 0.0],
                     [0.0, va, 0.0, cp],
                     [corr, 0.0, w, 0.0],
                     [0.0, cp, 0.0, vp]])


def _gm_chi(gamma: np.ndarray, nu3: float) -> tuple[float, np.ndarray]:
    nus = symplectic_spectrum(gamma)
    nus = np.where(nus >= 1.0 - PHYS_TOL, np.maximum(nus, 1.0), nus)
    return float(entropy_from_nu(nus[1]) + entropy_from_nu(nus[0]) - entropy_from_nu(nu3)), nus


def gm_baseline_skr(V_M: float, ch: GaussianChannelParams, beta: float = 1.0,
                    grid: int = 401, xtol: float = 1e-10) -> KeyRateReport:
    """Key rate of 1D Gaussian modulation with the pessimistic physical C_p."""
    if V_M < 0:
        raise ValueError(f"modulation variance must be >= 0, got {V_M}")
    base = gm_covariance(V_M, ch, 0.0)
    bound = math.sqrt(base[1, 1] * base[3, 3])
    iv = generic_cp_interval_by_bisection(lambda cp: gm_covariance(V_M, ch, cp), bound,
                                         tol=GM_PHYS_TOL)
    cond = conditional_covariance(base)
    nu3 = math.sqrt(max(np.linalg.det(cond), 1.0))
    va, v_cond = base[0, 0], cond[0, 0]
    mi = 0.5 * math.log2(va / v_cond)

    f = lambda cp: _gm_chi(gm_covariance(V_M, ch, cp), nu3)[0]
    if iv.width > xtol:
        cps = np.linspace(iv.cp_minus, iv.cp_plus, grid)
        vals = np.array([f(x) for x in cps])
        i = int(np.argmax(vals))
        cp_best, chi_best = float(cps[i]), float(vals[i])
        x, fx = _golden_max(f, float(cps[max(i - 1, 0)]), float(cps[min(i + 1, grid - 1)]), xtol)
        if fx > chi_best:
            cp_best, chi_best = x, fx
    else:
        cp_best = iv.midpoint
        chi_best = f(cp_best)
    _, nus = _gm_chi(gm_covariance(V_M, ch, cp_best), nu3)
    return KeyRateReport(
        C_q_star=float(base[0, 2]), C_p_star=cp_best, holevo=chi_best, mutual_info=mi,
        key_rate=key_rate(beta, mi, chi_best),
        spectrum=SymplecticSpectrum(float(nus[1]), float(nus[0]), nu3), beta=beta,
        diagnostics={"model": "gaussian-1d", "V_M": V_M,
                     "cp_interval": [iv.cp_minus, iv.cp_plus]})
