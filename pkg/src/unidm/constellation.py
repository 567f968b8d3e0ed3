"""Unidimensional coherent-state constellations and their purification.

A constellation with ``N`` amplitude levels holds the ``2N`` states
``|+alpha_k>`` and ``|-alpha_k>``, each sent with probability ``p_k / 2``.
Signed states are indexed ``2k -> +alpha_k`` and ``2k + 1 -> -alpha_k``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import fock
from .errors import BasisConstructionError, ConfigError

PROB_SUM_TOL = 1e-12
ORTHONORMALITY_TOL = 1e-8


@dataclass(frozen=True)
class Constellation:
    alpha0: float
    ratios: tuple[float, ...] = (1.0,)
    probs: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if not self.alpha0 > 0:
            raise ValueError(f"alpha0 must be positive, got {self.alpha0}")
        if len(self.ratios) == 0 or len(self.ratios) != len(self.probs):
            raise ValueError("ratios and probs must be non-empty and of equal length")
        if self.ratios[0] != 1.0:
            raise ValueError("the first amplitude ratio must be 1")
        if any(b <= a for a, b in zip(self.ratios, self.ratios[1:])):
            raise ValueError("amplitude ratios must be strictly increasing")
        if any(p < 0 for p in self.probs):
            raise ValueError("probabilities must be non-negative")
        if abs(sum(self.probs) - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {sum(self.probs)!r}, not 1")

    @classmethod
    def uniform(cls, n_states: int, alpha0: float) -> "Constellation":
        """``n_states`` equiprobable states with ratios ``r_k = k + 1``."""
        if n_states < 2 or n_states % 2:
            raise ValueError(f"number of states must be even and >= 2, got {n_states}")
        n = n_states // 2
        return cls(alpha0, tuple(float(k + 1) for k in range(n)), tuple([1.0 / n] * n))

    @classmethod
    def from_amplitudes(cls, amplitudes, probs) -> "Constellation":
        amplitudes = [float(a) for a in amplitudes]
        return cls(amplitudes[0], tuple(a / amplitudes[0] for a in amplitudes), tuple(probs))

    @classmethod
    def parse(cls, text: str) -> "Constellation":
        """Parse ``alpha0=<f>; ratios=<f,f,...>; probs=<f,f,...>``.

        ``amplitudes=<f,...>`` may replace ``alpha0`` and ``ratios``;
        ``probs`` defaults to uniform.
        """
        fields = {}
        for part in filter(None, (s.strip() for s in text.split(";"))):
            key, sep, value = part.partition("=")
            key = key.strip()
            if not sep or key not in {"alpha0", "ratios", "probs", "amplitudes"}:
                raise ConfigError(f"bad constellation field {part!r}")
            if key in fields:
                raise ConfigError(f"duplicate constellation field {key!r}")
            fields[key] = value.strip()

        def floats(key):
            try:
                return [float(x) for x in re.split(r"[,\s]+", fields[key]) if x]
            except ValueError as exc:
                raise ConfigError(f"constellation field {key!r}: {exc}") from None

        try:
            if "amplitudes" in fields:
                if "alpha0" in fields or "ratios" in fields:
                    raise ConfigError("give either amplitudes or alpha0/ratios, not both")
                amps = floats("amplitudes")
                probs = floats("probs") if "probs" in fields else [1.0 / len(amps)] * len(amps)
                return cls.from_amplitudes(amps, probs)
            if "alpha0" not in fields:
                raise ConfigError("constellation needs alpha0")
            alpha0 = floats("alpha0")
            if len(alpha0) != 1:
                raise ConfigError("alpha0 takes a single value")
            ratios = floats("ratios") if "ratios" in fields else [1.0]
            probs = floats("probs") if "probs" in fields else [1.0 / len(ratios)] * len(ratios)
            return cls(alpha0[0], tuple(ratios), tuple(probs))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid constellation: {exc}") from None

    def describe(self) -> str:
        fmt = lambda xs: ",".join(f"{x:.12g}" for x in xs)
        return f"alpha0={self.alpha0:.12g}; ratios={fmt(self.ratios)}; probs={fmt(self.probs)}"

    @property
    def n_levels(self) -> int:
        return len(self.ratios)

    @property
    def n_states(self) -> int:
        return 2 * len(self.ratios)

    @cached_property
    def amplitudes(self) -> np.ndarray:
        """Signed amplitudes in state order ``(+a_0, -a_0, +a_1, -a_1, ...)``."""
        a = self.alpha0 * np.asarray(self.ratios)
        return np.column_stack([a, -a]).ravel()

    @cached_property
    def weights(self) -> np.ndarray:
        """Per-state probabilities ``p_k / 2`` in state order."""
        return np.repeat(np.asarray(self.probs) / 2.0, 2)

    @cached_property
    def signs(self) -> np.ndarray:
        return np.tile([1.0, -1.0], self.n_levels)

    @property
    def max_amplitude(self) -> float:
        return self.alpha0 * self.ratios[-1]

    def with_probs(self, probs) -> "Constellation":
        return Constellation(self.alpha0, self.ratios, tuple(probs))

    def with_alpha0(self, alpha0: float) -> "Constellation":
        return Constellation(alpha0, self.ratios, self.probs)


def coherent_overlaps(amplitudes: np.ndarray) -> np.ndarray:
    """``<a_i|a_j> = exp(-(a_i - a_j)^2 / 2)`` for real amplitudes."""
    a = np.asarray(amplitudes, dtype=float)
    return np.exp(-0.5 * (a[:, None] - a[None, :]) ** 2)


def modulation_variance(c: Constellation) -> float:
    """Alice's q-variance ``4 alpha0^2 sum_k p_k r_k^2 + 1``."""
    p, r = np.asarray(c.probs), np.asarray(c.ratios)
    return 4.0 * c.alpha0 ** 2 * float(np.sum(p * r * r)) + fock.SHOT_NOISE


def mean_ratio(c: Constellation) -> float:
    return float(np.dot(c.probs, c.ratios))


def gaussian_shaping(c: Constellation, nu: float) -> Constellation:
    """Reweight levels with ``p_k ~ exp(-nu alpha_k^2)``."""
    if nu < 0:
        raise ValueError(f"shaping parameter must be >= 0, got {nu}")
    a = c.alpha0 * np.asarray(c.ratios)
    logw = -nu * a * a
    w = np.exp(logw - logw.max())
    w /= w.sum()
    # Exact renormalization so Constellation's sum check passes.
    w[0] = 1.0 - w[1:].sum()
    return c.with_probs(w)


def state_matrix(c: Constellation, cutoff) -> np.ndarray:
    """Columns ``sqrt(w_i) |a_i>`` in the truncated Fock basis."""
    cols = [np.sqrt(w) * fock.coherent_state(a, cutoff)
            for a, w in zip(c.amplitudes, c.weights)]
    return np.column_stack(cols)


def average_state(c: Constellation, cutoff) -> np.ndarray:
    a = state_matrix(c, cutoff)
    return a @ a.T


def gram_tau(c: Constellation) -> np.ndarray:
    """Alice's reduced state in the purification basis, from exact overlaps."""
    sw = np.sqrt(c.weights)
    return sw[:, None] * coherent_overlaps(c.amplitudes) * sw[None, :]


@dataclass(frozen=True)
class PsiBasis:
    """Orthonormal coordinates for Alice's half of the purification.

    ``vectors`` holds the ``2N`` purification-basis states in the Fock basis.
    ``frame`` is the orthonormal Fock-space frame the SDP works in: equal to
    ``vectors`` when the average state has full rank, otherwise the retained
    eigenvectors of the average state. ``coords`` maps each signed state to its
    coordinates in that frame, and ``target`` is ``Tr_B |Phi><Phi|`` there.
    """

    vectors: np.ndarray
    frame: np.ndarray
    coords: np.ndarray
    target: np.ndarray
    support_dim: int
    eigenvalues: np.ndarray

    @property
    def full_rank(self) -> bool:
        return self.support_dim == self.vectors.shape[1]


def psi_basis(c: Constellation, cutoff, floor: float = fock.EIG_FLOOR) -> PsiBasis:
    """Build ``|psi_i> = sqrt(w_i) tau^{-1/2} |a_i>`` from a thin SVD.

    With ``A = U S V^T`` the matrix of weighted coherent states, ``tau = A A^T``
    and ``tau^{-1/2} A = U V^T``, which is orthonormal to machine precision.
    Directions whose ``tau`` eigenvalue falls below ``floor`` relative to the
    largest are dropped.
    """
    a = state_matrix(c, cutoff)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    lam = s * s
    keep = lam > floor * lam.max()
    r = int(keep.sum())
    if r == 0:
        raise BasisConstructionError("average state has empty numerical support")
    g = gram_tau(c)
    u_r, vt_r = u[:, keep], vt[keep, :]
    vectors = u_r @ vt_r
    if r == c.n_states:
        frame, coords = vectors, np.eye(r)
    else:
        frame, coords = u_r, vt_r
    target = coords @ g @ coords.T
    gram = frame.T @ frame
    err = np.abs(gram - np.eye(r)).max()
    if err > ORTHONORMALITY_TOL:
        raise BasisConstructionError(f"purification frame not orthonormal (error {err:.2e})")
    return PsiBasis(vectors=vectors, frame=frame, coords=coords,
                    target=0.5 * (target + target.T), support_dim=r, eigenvalues=lam)


def a_side_operators(basis: PsiBasis, cutoff, c: Constellation | None = None):
    """Alice's ``P q P`` and signed projector sum, in the basis frame.

    Returns
    -------
    q_a, sgn : ndarray
        ``q_a[i, j] = <f_i| q |f_j>``; ``sgn = sum_i s_i |psi_i><psi_i|``
        restricted to the frame (``diag(+1, -1, ...)`` at full rank).
    """
    q = fock.quadrature_q(cutoff)
    q_a = basis.frame.T @ q @ basis.frame
    n_states = basis.vectors.shape[1]
    signs = c.signs if c is not None else np.tile([1.0, -1.0], n_states // 2)
    sgn = (basis.coords * signs) @ basis.coords.T
    return 0.5 * (q_a + q_a.T), 0.5 * (sgn + sgn.T)


def purification(c: Constellation, basis: PsiBasis, cutoff) -> np.ndarray:
    """``|Phi> = sum_i sqrt(w_i) |psi_i>|a_i>`` as a vector on frame x Fock."""
    a = state_matrix(c, cutoff)  # columns sqrt(w_i)|a_i>
    return (basis.coords @ a.T).ravel()
