"""Minimal compatible q-correlation: the semidefinite program.

The variable is the joint state ``rho`` on (Alice frame) x (Bob Fock space)::

    minimize    |Tr[(Q_A x q) rho]|
    subject to  Tr_B rho = target
                Tr[(1 x q^2) rho] = v_q
                Tr[(1 x p^2) rho] = v_p
                Tr[(Sgn x q) rho] = c_2N
                rho >= 0

The target marginal is badly conditioned when coherent states overlap
strongly, so the solver works with ``sigma`` defined by
``rho = (L x 1) sigma (L x 1)``, ``L = target^{1/2}``. The marginal constraint
becomes ``Tr_B sigma = 1`` (``sigma`` is a Choi matrix), which is exact because
``L`` is invertible on the retained frame.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import fock
from .channel import ChannelStats
from .constellation import Constellation, a_side_operators, psi_basis
from .errors import SdpInfeasibleError, SdpNumericalError

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-7
OPTIMAL, INFEASIBLE, NUMERICAL_FAILURE = "optimal", "infeasible", "numerical-failure"


@dataclass(frozen=True)
class SolverConfig:
    """Conic solver settings.

    ``tol`` is tried first; on failure the solve is repeated with the
    tolerance loosened tenfold until ``max_tol``. ``slack`` > 0 relaxes the
    three statistic constraints to ``|Tr(B rho) - stat| <= slack``; results
    obtained that way do not certify anything.
    """

    backend: str = "cvxopt"
    tol: float = 1e-8
    max_tol: float = 1e-7
    max_iters: int = 80
    slack: float = 0.0
    cvxpy_solver: str = "CLARABEL"

    def __post_init__(self):
        if self.backend not in ("cvxopt", "cvxpy"):
            raise ValueError(f"unknown SDP backend {self.backend!r}")
        if not self.tol > 0 or self.max_tol < self.tol:
            raise ValueError("need 0 < tol <= max_tol")
        if self.slack < 0:
            raise ValueError("slack must be >= 0")


@dataclass(frozen=True)
class SdpOperators:
    """Constraint and objective operators, kept as Kronecker factors."""

    dim_A: int
    dim_B: int
    q_a: np.ndarray
    sgn: np.ndarray
    q: np.ndarray
    q2: np.ndarray
    p2: np.ndarray
    target_gram: np.ndarray
    cutoff: int
    support_dim: int
    full_rank: bool

    @property
    def dim(self) -> int:
        return self.dim_A * self.dim_B

    @property
    def B0(self) -> np.ndarray:
        return np.kron(np.eye(self.dim_A), self.q2)

    @property
    def B1(self) -> np.ndarray:
        return np.kron(np.eye(self.dim_A), self.p2)

    @property
    def B2(self) -> np.ndarray:
        return np.kron(self.sgn, self.q)

    @property
    def Cq_op(self) -> np.ndarray:
        return np.kron(self.q_a, self.q)


@dataclass
class SdpResult:
    cq_star: float
    status: str
    objective: float
    cutoff: int
    diagnostics: dict = field(default_factory=dict)
    rho: np.ndarray | None = field(default=None, repr=False)

    def raise_for_status(self) -> "SdpResult":
        if self.status == INFEASIBLE:
            raise SdpInfeasibleError(
                f"statistics are incompatible with any state at n_c={self.cutoff}")
        if self.status != OPTIMAL:
            raise SdpNumericalError(
                f"SDP did not converge at n_c={self.cutoff}: {self.diagnostics.get('solver_status')}")
        return self


def build_sdp(c: Constellation, stats: ChannelStats | None, cutoff) -> SdpOperators:
    """Assemble the SDP operators in the purification frame x Fock basis.

    ``stats`` is accepted for signature symmetry with the solver; the
    operators themselves do not depend on it.
    """
    cutoff = fock.as_cutoff(cutoff)
    basis = psi_basis(c, cutoff)
    q_a, sgn = a_side_operators(basis, cutoff, c)
    target = basis.target
    tr = np.trace(target)
    if abs(tr - 1.0) > 1e-9 and basis.full_rank:
        raise SdpNumericalError(f"target marginal has trace {tr:.12f}")
    return SdpOperators(
        dim_A=basis.support_dim, dim_B=cutoff.dim, q_a=q_a, sgn=sgn,
        q=fock.quadrature_q(cutoff), q2=fock.quadrature_q2(cutoff),
        p2=fock.quadrature_p2(cutoff), target_gram=target, cutoff=cutoff.n_c,
        support_dim=basis.support_dim, full_rank=basis.full_rank)


def _stat_terms(ops: SdpOperators, stats: ChannelStats, use_vp: bool):
    """(name, A-factor, B-factor, value) for each statistic constraint."""
    eye = np.eye(ops.dim_A)
    terms = [("v_q", eye, ops.q2, stats.v_q)]
    if use_vp:
        terms.append(("v_p", eye, ops.p2, stats.v_p))
    terms.append(("c_2N", ops.sgn, ops.q, stats.c_2N))
    return terms


def _marginal_basis(r: int):
    """Symmetric basis ``E_ab`` for the upper triangle of an r x r matrix."""
    for a in range(r):
        for b in range(a, r):
            e = np.zeros((r, r))
            if a == b:
                e[a, a] = 1.0
            else:
                e[a, b] = e[b, a] = 0.5
            yield (a, b), e


def _solve_cvxopt(ops, stats, use_vp, slack, tol, max_iters, L):
    from cvxopt import matrix, solvers

    r, dB = ops.dim_A, ops.dim_B
    n = r * dB
    eye_b = np.eye(dB)
    terms = _stat_terms(ops, stats, use_vp)
    n_terms = len(terms)
    n_lin = 2 + (3 * n_terms if slack > 0 else 0)

    # Columns of G are equality constraints on the conic variable z = (lin, vec sigma):
    # <G_j, z> = b_j.
    cols, rhs = [], []

    def add(psd_matrix, lin=None, value=0.0):
        col = np.zeros(n_lin + n * n)
        if lin:
            for idx, coef in lin.items():
                col[idx] = coef
        if psd_matrix is not None:
            col[n_lin:] = psd_matrix.ravel(order="F")
        cols.append(col)
        rhs.append(value)

    for (a, b), e in _marginal_basis(r):
        add(np.kron(e, eye_b), value=1.0 if a == b else 0.0)
    for k, (_, fa, fb, value) in enumerate(terms):
        m = np.kron(L @ fa @ L, fb)
        if slack > 0:
            up, dn, free = 2 + 3 * k, 3 + 3 * k, 4 + 3 * k
            add(m, {up: -1.0, dn: 1.0}, value)
            add(None, {up: 1.0, dn: 1.0, free: 1.0}, slack)
        else:
            add(m, value=value)
    obj = np.kron(L @ ops.q_a @ L, ops.q)
    add(obj, {0: 0.5, 1: -0.5}, 0.0)  # Tr(Q sigma) = (s_plus - s_minus) / 2

    G = np.column_stack(cols)
    h = np.zeros(n_lin + n * n)
    h[0] = h[1] = 0.5  # minimize (s_plus + s_minus) / 2 = |Tr(Q sigma)|
    cvec = -np.asarray(rhs)
    opts = {"show_progress": False, "abstol": tol, "reltol": tol,
            "feastol": tol, "maxiters": max_iters}
    sol = solvers.conelp(matrix(cvec), matrix(G), matrix(h),
                         dims={"l": n_lin, "q": [], "s": [n]}, options=opts)
    status = sol["status"]
    sigma = None
    if sol["z"] is not None:
        z = np.array(sol["z"]).ravel()
        sigma = z[n_lin:].reshape(n, n, order="F")
        sigma = 0.5 * (sigma + sigma.T)
    info = {"solver_status": status, "iterations": sol.get("iterations"),
            "gap": sol.get("gap"), "relative_gap": sol.get("relative gap")}
    if status == "dual infeasible":
        return INFEASIBLE, None, info
    if status == "optimal":
        return OPTIMAL, sigma, info
    return NUMERICAL_FAILURE, sigma, info


def _solve_cvxpy(ops, stats, use_vp, slack, tol, max_iters, L, solver):
    import cvxpy as cp

    r, dB = ops.dim_A, ops.dim_B
    n = r * dB
    sig = cp.Variable((n, n), symmetric=True)
    cons = [sig >> 0, cp.partial_trace(sig, [r, dB], axis=1) == np.eye(r)]
    for _, fa, fb, value in _stat_terms(ops, stats, use_vp):
        expr = cp.trace(np.kron(L @ fa @ L, fb) @ sig)
        if slack > 0:
            cons.append(cp.abs(expr - value) <= slack)
        else:
            cons.append(expr == value)
    cq = cp.trace(np.kron(L @ ops.q_a @ L, ops.q) @ sig)
    prob = cp.Problem(cp.Minimize(cp.abs(cq)), cons)
    kwargs = {}
    if solver == "CLARABEL":
        kwargs = {"tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": tol, "max_iter": max_iters * 4}
    elif solver == "SCS":
        kwargs = {"eps": tol, "max_iters": 100000}
    try:
        prob.solve(solver=solver, **kwargs)
    except cp.error.SolverError as exc:
        return NUMERICAL_FAILURE, None, {"solver_status": f"error: {exc}"}
    info = {"solver_status": prob.status}
    if prob.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return INFEASIBLE, None, info
    if prob.status == cp.OPTIMAL:
        return OPTIMAL, 0.5 * (sig.value + sig.value.T), info
    return NUMERICAL_FAILURE, None if sig.value is None else sig.value, info


def residuals(ops: SdpOperators, stats: ChannelStats, rho: np.ndarray, use_vp: bool = True) -> dict:
    marg = fock.partial_trace_B(rho, ops.dim_A, ops.dim_B)
    out = {"marginal": float(np.abs(marg - ops.target_gram).max())}
    rho4 = rho.reshape(ops.dim_A, ops.dim_B, ops.dim_A, ops.dim_B)
    for name, fa, fb, value in _stat_terms(ops, stats, use_vp):
        out[name] = abs(float(np.einsum("ab,jk,bkaj->", fa, fb, rho4)) - value)
    out["min_eig"] = float(np.linalg.eigvalsh(rho).min())
    return out


def kron_expectation(fa: np.ndarray, fb: np.ndarray, rho: np.ndarray, dim_A: int, dim_B: int) -> float:
    """``Tr[(fa x fb) rho]`` without forming the Kronecker product."""
    rho4 = rho.reshape(dim_A, dim_B, dim_A, dim_B)
    return float(np.einsum("ab,jk,bkaj->", fa, fb, rho4))


def solve_min_abs_cq(ops: SdpOperators, stats: ChannelStats,
                     cfg: SolverConfig = SolverConfig(), use_vp: bool = True,
                     keep_rho: bool = False) -> SdpResult:
    """Solve the SDP and return the signed optimal q-correlation.

    ``use_vp=False`` drops the p-variance constraint (no p estimation).
    """
    evals, evecs = np.linalg.eigh(ops.target_gram)
    if evals.min() <= 0:
        raise SdpNumericalError("target marginal is not positive definite on the frame")
    L = (evecs * np.sqrt(evals)) @ evecs.T
    big_l = np.kron(L, np.eye(ops.dim_B))
    tol = cfg.tol
    attempts = []
    t0 = time.perf_counter()
    while True:
        if cfg.backend == "cvxopt":
            status, sigma, info = _solve_cvxopt(ops, stats, use_vp, cfg.slack, tol, cfg.max_iters, L)
        else:
            status, sigma, info = _solve_cvxpy(ops, stats, use_vp, cfg.slack, tol,
                                               cfg.max_iters, L, cfg.cvxpy_solver)
        info["tol"] = tol
        attempts.append(info)
        rho = None if sigma is None else big_l @ sigma @ big_l
        res = None
        if status == OPTIMAL:
            res = residuals(ops, stats, rho, use_vp)
            limit = RESIDUAL_TOL + cfg.slack
            stat_res = [v for k, v in res.items() if k not in ("marginal", "min_eig")]
            if res["marginal"] > RESIDUAL_TOL or max(stat_res) > limit:
                status = NUMERICAL_FAILURE
                info["solver_status"] = f"residuals too large: {res}"
        if status != NUMERICAL_FAILURE or tol * 10 > cfg.max_tol * (1 + 1e-12):
            break
        log.debug("SDP attempt at tol=%g failed (%s); loosening", tol, info["solver_status"])
        tol *= 10
    elapsed = time.perf_counter() - t0
    cq = float("nan")
    if rho is not None and status == OPTIMAL:
        cq = kron_expectation(ops.q_a, ops.q, rho, ops.dim_A, ops.dim_B)
    diag = {"solver_status": attempts[-1]["solver_status"], "attempts": attempts,
            "backend": cfg.backend, "tol_used": tol, "seconds": elapsed,
            "dim": ops.dim, "support_dim": ops.support_dim, "use_vp": use_vp,
            "residuals": res, "slack": cfg.slack, "certifying": cfg.slack == 0.0}
    return SdpResult(cq_star=cq, status=status, objective=abs(cq), cutoff=ops.cutoff,
                     diagnostics=diag, rho=rho if keep_rho else None)


@dataclass(frozen=True)
class ConvergenceRow:
    n_c: int
    cq_star: float
    status: str
    delta: float | None


def convergence_sweep(c: Constellation, stats: ChannelStats, cutoffs,
                      cfg: SolverConfig = SolverConfig(), use_vp: bool = True) -> list[ConvergenceRow]:
    """Solve at each cutoff and report ``|d cq_star|`` between neighbours."""
    cutoffs = list(cutoffs)
    if len(cutoffs) < 2:
        raise ValueError("convergence sweep needs at least two cutoffs")
    rows, prev = [], None
    for n_c in cutoffs:
        res = solve_min_abs_cq(build_sdp(c, stats, n_c), stats, cfg, use_vp=use_vp)
        delta = None if prev is None or res.status != OPTIMAL else abs(res.cq_star - prev)
        rows.append(ConvergenceRow(int(n_c), res.cq_star, res.status, delta))
        prev = res.cq_star if res.status == OPTIMAL else None
    return rows
