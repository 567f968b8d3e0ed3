"""End-to-end key-rate pipeline, sweeps and amplitude studies."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from . import fock
from .channel import (DEFAULT_ATTEN_DB_KM, ChannelStats, GaussianChannelParams,
                      dm_mutual_info_exact, expected_stats, transmittance_from_distance)
from .constellation import Constellation, gaussian_shaping, modulation_variance
from .errors import ConvergenceError, EmptyRegionError, UnidmError
from .gaussian_info import (KeyRateReport, holevo_max_over_cp, key_rate, mutual_info_gaussian,
                            spectrum)
from .physicality import CovarianceSummary, _golden_max
from .sdp import SdpResult, SolverConfig, build_sdp, solve_min_abs_cq

log = logging.getLogger(__name__)

MIN_WORKING_CUTOFF = 15


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything needed for one key-rate evaluation.

    The channel is derived from ``distance_km`` and ``atten_db_km`` unless
    ``t_q`` / ``t_p`` are given. ``xi_p`` defaults to ``xi_q``.
    """

    constellation: Constellation
    distance_km: float = 10.0
    atten_db_km: float = DEFAULT_ATTEN_DB_KM
    xi_q: float = 0.0
    xi_p: float | None = None
    t_q: float | None = None
    t_p: float | None = None
    beta: float = 1.0
    cutoff: int | None = None
    solver: SolverConfig = SolverConfig()
    cp_grid: int = 2001
    convergence_step: int = 5
    convergence_tol: float = 1e-6
    max_cutoff: int = 40
    no_p_variant: bool = True
    wp_max: float = 20.0
    wp_grid: int = 41
    exact_mutual_info: bool = False

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.distance_km < 0 or self.atten_db_km < 0:
            raise ValueError("distance and attenuation must be >= 0")
        if self.cutoff is not None and self.cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        if self.convergence_step < 1 or self.convergence_tol <= 0:
            raise ValueError("convergence step must be >= 1 and tolerance > 0")
        if self.wp_max < 1 or self.wp_grid < 2 or self.cp_grid < 2:
            raise ValueError("wp_max must be >= 1 and grids need >= 2 points")

    def channel(self) -> GaussianChannelParams:
        t = transmittance_from_distance(self.distance_km, self.atten_db_km)
        t_q = t if self.t_q is None else self.t_q
        t_p = t_q if self.t_p is None else self.t_p
        xi_p = self.xi_q if self.xi_p is None else self.xi_p
        return GaussianChannelParams(t_q, t_p, self.xi_q, xi_p)

    def working_cutoff(self) -> int:
        if self.cutoff is not None:
            return self.cutoff
        return max(fock.default_cutoff(self.constellation.max_amplitude).n_c, MIN_WORKING_CUTOFF)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["constellation"] = self.constellation.describe()
        return d

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _solve_gated(c: Constellation, stats: ChannelStats, cfg: ProtocolConfig,
                 use_vp: bool = True) -> tuple[SdpResult, dict]:
    """Solve at the working cutoff and ``+step``, escalating until the gate passes."""
    n = cfg.working_cutoff()
    history = []
    prev = solve_min_abs_cq(build_sdp(c, stats, n), stats, cfg.solver, use_vp=use_vp)
    prev.raise_for_status()
    history.append((n, prev.cq_star))
    while True:
        nxt = n + cfg.convergence_step
        cur = solve_min_abs_cq(build_sdp(c, stats, nxt), stats, cfg.solver, use_vp=use_vp)
        cur.raise_for_status()
        history.append((nxt, cur.cq_star))
        delta = abs(cur.cq_star - prev.cq_star)
        if delta < cfg.convergence_tol:
            return prev, {"cutoff": n, "check_cutoff": nxt, "delta": delta, "history": history}
        if nxt + cfg.convergence_step > cfg.max_cutoff:
            raise ConvergenceError(
                f"C_q* not converged: |d| = {delta:.3e} between n_c={n} and {nxt}")
        log.info("cutoff %d not converged (|d|=%.2e); escalating", n, delta)
        n, prev = nxt, cur


def _no_p_variant(V: float, W: float, v_p: float, beta: float, cq: float, cfg: ProtocolConfig) -> dict:
    """Worst case over Bob's p-variance ``W_p in [1, wp_max]`` with ``C_q`` fixed."""
    def chi_at(wp):
        try:
            return holevo_max_over_cp(V, W, wp, cq, grid=cfg.cp_grid).chi_max
        except EmptyRegionError:
            return -math.inf

    wps = np.unique(np.append(np.linspace(1.0, cfg.wp_max, cfg.wp_grid), v_p))
    vals = np.array([chi_at(w) for w in wps])
    i = int(np.argmax(vals))
    best_wp, best = float(wps[i]), float(vals[i])
    lo, hi = wps[max(i - 1, 0)], wps[min(i + 1, wps.size - 1)]
    if hi > lo:
        x, fx = _golden_max(chi_at, float(lo), float(hi), 1e-8)
        if fx > best:
            best_wp, best = x, fx
    mi = mutual_info_gaussian(V, W, cq)
    return {"cq_star": cq, "wp_worst": best_wp, "chi": best, "mutual_info": mi,
            "key_rate": key_rate(beta, mi, best),
            "wp_at_bound": bool(abs(best_wp - cfg.wp_max) < 1e-6 * cfg.wp_max)}


def skr_point(cfg: ProtocolConfig) -> KeyRateReport:
    """Key rate for one configuration: statistics, SDP, C_p maximization, Devetak-Winter."""
    t0 = time.perf_counter()
    c = cfg.constellation
    ch = cfg.channel()
    stats = expected_stats(c, ch)
    res, conv = _solve_gated(c, stats, cfg)
    V, W, W_p, cq = modulation_variance(c), stats.v_q, stats.v_p, res.cq_star
    hm = holevo_max_over_cp(V, W, W_p, cq, grid=cfg.cp_grid)
    mi = mutual_info_gaussian(V, W, cq)
    summary = CovarianceSummary(V, W, W_p, cq, hm.cp_argmax)
    diag = {
        "status": res.status, "cutoff": conv["cutoff"], "convergence": conv,
        "solver": res.diagnostics, "stats": asdict(stats), "channel": asdict(ch),
        "V": V, "cp_interval": [hm.interval.cp_minus, hm.interval.cp_plus],
        "chi_shortcut": hm.chi_shortcut, "cp_shortcut": hm.cp_shortcut,
    }
    if cfg.exact_mutual_info:
        diag["mutual_info_exact"] = dm_mutual_info_exact(c, ch)
    if cfg.no_p_variant:
        nop = solve_min_abs_cq(build_sdp(c, stats, conv["cutoff"]), stats, cfg.solver, use_vp=False)
        nop.raise_for_status()
        # Dropping a constraint can only lower |C_q*|; keep the sign of the full problem.
        cq_nop = math.copysign(min(abs(nop.cq_star), abs(cq)), cq)
        diag["no_p"] = _no_p_variant(V, W, W_p, cfg.beta, cq_nop, cfg)
    diag["seconds"] = time.perf_counter() - t0
    return KeyRateReport(C_q_star=cq, C_p_star=hm.cp_argmax, holevo=hm.chi_max,
                         mutual_info=mi, key_rate=key_rate(cfg.beta, mi, hm.chi_max),
                         spectrum=spectrum(summary), beta=cfg.beta, diagnostics=diag)


@dataclass
class SweepPoint:
    value: float
    report: KeyRateReport | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.report is not None


@dataclass
class SweepResult:
    variable: str
    points: list[SweepPoint]
    metadata: dict = field(default_factory=dict)

    @property
    def failures(self) -> list[SweepPoint]:
        return [p for p in self.points if not p.ok]

    def key_rates(self) -> np.ndarray:
        return np.array([p.report.key_rate if p.ok else np.nan for p in self.points])

    def argmax(self) -> float | None:
        k = self.key_rates()
        if np.all(np.isnan(k)):
            return None
        return self.points[int(np.nanargmax(k))].value


SWEEP_VARIABLES = ("distance", "alpha0_squared", "nu")


def point_config(cfg: ProtocolConfig, variable: str, value: float) -> ProtocolConfig:
    if variable == "distance":
        return replace(cfg, distance_km=float(value))
    if variable == "alpha0_squared":
        if value <= 0:
            raise ValueError(f"alpha0^2 must be positive, got {value}")
        return replace(cfg, constellation=cfg.constellation.with_alpha0(math.sqrt(value)))
    if variable == "nu":
        return replace(cfg, constellation=gaussian_shaping(cfg.constellation, float(value)))
    raise ValueError(f"unknown sweep variable {variable!r}; choose from {SWEEP_VARIABLES}")


def worker_count(n_tasks: int) -> int:
    env = os.environ.get("UNIDM_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ValueError(f"UNIDM_THREADS must be an integer, got {env!r}") from None
    return max(1, min(cap, n_tasks))


def _run_point(cfg: ProtocolConfig, variable: str, value: float) -> SweepPoint:
    try:
        return SweepPoint(float(value), skr_point(point_config(cfg, variable, value)))
    except (UnidmError, ValueError, ArithmeticError) as exc:
        log.warning("%s=%g failed: %s", variable, value, exc)
        return SweepPoint(float(value), None, f"{type(exc).__name__}: {exc}")


def sweep(cfg: ProtocolConfig, variable: str, grid) -> SweepResult:
    """One independent ``skr_point`` per grid value, returned in grid order."""
    grid = [float(x) for x in grid]
    if not grid:
        raise ValueError("sweep grid is empty")
    if variable not in SWEEP_VARIABLES:
        raise ValueError(f"unknown sweep variable {variable!r}; choose from {SWEEP_VARIABLES}")
    started = datetime.now(timezone.utc).isoformat()
    workers = worker_count(len(grid))
    if workers == 1:
        points = [_run_point(cfg, variable, v) for v in grid]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(lambda v: _run_point(cfg, variable, v), grid))
    meta = {"config_hash": cfg.digest(), "started": started,
            "finished": datetime.now(timezone.utc).isoformat(), "workers": workers}
    result = SweepResult(variable, points, meta)
    meta["argmax"] = result.argmax()
    return result


@dataclass
class VarianceOptimum:
    alpha0: float
    report: KeyRateReport
    all_negative: bool
    grid: list[tuple[float, float]]


def optimize_variance(cfg: ProtocolConfig, alpha_bounds: tuple[float, float],
                      n_grid: int = 21, xtol: float = 1e-4) -> VarianceOptimum:
    """Maximize K over alpha0: coarse grid, then golden-section on the best bracket."""
    lo, hi = map(float, alpha_bounds)
    if not 0 < lo < hi:
        raise ValueError(f"need 0 < lower < upper alpha0 bound, got {alpha_bounds}")
    base = replace(cfg, no_p_variant=False)
    cache: dict[float, KeyRateReport | None] = {}

    def report(a):
        if a not in cache:
            try:
                cache[a] = skr_point(replace(base, constellation=base.constellation.with_alpha0(a)))
            except (UnidmError, ValueError, ArithmeticError) as exc:
                log.warning("alpha0=%g failed: %s", a, exc)
                cache[a] = None
        return cache[a]

    def k(a):
        r = report(a)
        return -math.inf if r is None else r.key_rate

    xs = np.linspace(lo, hi, n_grid)
    vals = np.array([k(float(x)) for x in xs])
    if np.all(np.isinf(vals)):
        raise ConvergenceError("key rate could not be evaluated anywhere in the alpha0 bracket")
    i = int(np.argmax(vals))
    best_a = float(xs[i])
    a_lo, a_hi = float(xs[max(i - 1, 0)]), float(xs[min(i + 1, n_grid - 1)])
    x, fx = _golden_max(k, a_lo, a_hi, xtol)
    if fx > vals[i]:
        best_a = x
    best = report(best_a)
    return VarianceOptimum(best_a, best, bool(best.key_rate <= 0),
                           [(float(a), float(v)) for a, v in zip(xs, vals)])


def shaping_study(cfg: ProtocolConfig, nu_grid) -> SweepResult:
    """Key rate under ``p_k ~ exp(-nu alpha_k^2)`` shaping; ``metadata['argmax']`` is the best nu."""
    nu_grid = [float(v) for v in nu_grid]
    if any(v < 0 for v in nu_grid):
        raise ValueError("shaping parameters must be >= 0")
    return sweep(cfg, "nu", nu_grid)
