from dataclasses import replace

import numpy as np
import pytest

from unidm.constellation import Constellation
from unidm.engine import (ProtocolConfig, optimize_variance, point_config, shaping_study, skr_point,
                          sweep, worker_count)
from unidm.errors import ConvergenceError

BPSK_10KM = ProtocolConfig(Constellation.uniform(2, 0.1), distance_km=10.0)
# Recorded on the first validated run.
ALPHA_OPT_BPSK_10KM = 0.19466674


@pytest.fixture(scope="module")
def bpsk_report():
    return skr_point(BPSK_10KM)


def test_bpsk_positive_key_rate(bpsk_report):
    r = bpsk_report
    assert r.key_rate > 0
    assert r.key_rate == r.beta * r.mutual_info - r.holevo
    assert r.holevo >= r.diagnostics["chi_shortcut"] - 1e-8
    assert r.diagnostics["convergence"]["delta"] < 1e-6


def test_bpsk_regression_anchor(bpsk_report):
    # Recorded on the first validated run.
    assert bpsk_report.C_q_star == pytest.approx(0.160456925, abs=1e-8)
    assert bpsk_report.key_rate == pytest.approx(0.0141997157, abs=1e-8)


def test_no_p_variant_never_exceeds(bpsk_report):
    nop = bpsk_report.diagnostics["no_p"]
    assert nop["key_rate"] <= bpsk_report.key_rate
    assert 1.0 <= nop["wp_worst"] <= BPSK_10KM.wp_max
    assert abs(nop["cq_star"]) <= abs(bpsk_report.C_q_star)


def test_config_validation_and_channel():
    with pytest.raises(ValueError):
        ProtocolConfig(Constellation.uniform(2, 0.1), beta=1.5)
    cfg = ProtocolConfig(Constellation.uniform(2, 0.1), distance_km=50.0, xi_q=0.01)
    ch = cfg.channel()
    assert ch.T_q == pytest.approx(0.1) and ch.xi_p == 0.01
    ch2 = replace(cfg, t_q=0.5, t_p=0.4, xi_p=0.0).channel()
    assert (ch2.T_q, ch2.T_p, ch2.xi_p) == (0.5, 0.4, 0.0)
    assert cfg.digest() == ProtocolConfig(Constellation.uniform(2, 0.1), distance_km=50.0,
                                          xi_q=0.01).digest()
    assert cfg.digest() != BPSK_10KM.digest()


def test_beta_scales_mutual_information():
    r = skr_point(replace(BPSK_10KM, beta=0.9, no_p_variant=False))
    assert r.key_rate == pytest.approx(0.9 * r.mutual_info - r.holevo, abs=0)
    assert r.key_rate_clamped == max(0.0, r.key_rate)


def test_convergence_gate_aborts():
    with pytest.raises(ConvergenceError):
        skr_point(replace(BPSK_10KM, convergence_tol=1e-30, max_cutoff=25, no_p_variant=False))


def test_distance_sweep_monotone_and_ordered():
    cfg = replace(BPSK_10KM, no_p_variant=False)
    grid = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0]
    res = sweep(cfg, "distance", grid)
    assert [p.value for p in res.points] == grid
    k = res.key_rates()
    assert np.all(np.diff(k) < 0)
    assert res.metadata["config_hash"] == cfg.digest()
    assert res.argmax() == 0.0


def test_sweep_records_point_errors():
    res = sweep(replace(BPSK_10KM, no_p_variant=False), "alpha0_squared", [0.01, -1.0])
    assert res.points[0].ok and not res.points[1].ok
    assert "alpha0^2" in res.points[1].error
    assert len(res.failures) == 1
    with pytest.raises(ValueError):
        sweep(BPSK_10KM, "distance", [])
    with pytest.raises(ValueError):
        sweep(BPSK_10KM, "temperature", [1.0])


def test_sweep_deterministic_with_threads(monkeypatch):
    cfg = replace(BPSK_10KM, no_p_variant=False)
    monkeypatch.setenv("UNIDM_THREADS", "1")
    a = sweep(cfg, "distance", [5.0, 15.0]).key_rates()
    monkeypatch.setenv("UNIDM_THREADS", "2")
    b = sweep(cfg, "distance", [5.0, 15.0]).key_rates()
    assert np.array_equal(np.round(a, 9), np.round(b, 9))


def test_worker_count(monkeypatch):
    monkeypatch.setenv("UNIDM_THREADS", "3")
    assert worker_count(10) == 3 and worker_count(2) == 2
    monkeypatch.setenv("UNIDM_THREADS", "zero")
    with pytest.raises(ValueError):
        worker_count(4)


def test_point_config_alpha():
    cfg = point_config(BPSK_10KM, "alpha0_squared", 0.04)
    assert cfg.constellation.alpha0 == pytest.approx(0.2)


def test_shaping_limits():
    cfg = replace(ProtocolConfig(Constellation.uniform(4, 0.1)), no_p_variant=False)
    res = shaping_study(cfg, [0.0, 2.0, 1e6])
    uniform = skr_point(cfg)
    assert res.points[0].report.key_rate == uniform.key_rate
    two = skr_point(replace(cfg, constellation=Constellation.uniform(2, 0.1)))
    assert res.points[2].report.key_rate == pytest.approx(two.key_rate, abs=1e-6)
    with pytest.raises(ValueError):
        shaping_study(cfg, [-1.0])


def test_shaping_argmax_near_uniform():
    cfg = replace(ProtocolConfig(Constellation.uniform(4, 0.1)), no_p_variant=False)
    res = shaping_study(cfg, [0.0, 1.0, 5.0, 20.0])
    assert res.metadata["argmax"] == 0.0


@pytest.mark.slow
def test_optimize_variance_bpsk_anchor():
    cfg = replace(BPSK_10KM, no_p_variant=False)
    opt = optimize_variance(cfg, (0.05, 0.4))
    assert not opt.all_negative
    assert all(opt.report.key_rate >= k - 1e-12 for _, k in opt.grid)
    assert opt.alpha0 == pytest.approx(ALPHA_OPT_BPSK_10KM, abs=2e-4)



def test_optimize_variance_flags_all_negative():
    cfg = ProtocolConfig(Constellation.uniform(2, 0.1), distance_km=10.0, xi_q=0.005,
                         no_p_variant=False)
    opt = optimize_variance(cfg, (0.02, 0.1), n_grid=5, xtol=1e-2)
    assert opt.all_negative
    assert opt.report.key_rate == max(k for _, k in opt.grid) or opt.report.key_rate >= max(
        k for _, k in opt.grid)
    with pytest.raises(ValueError):
        optimize_variance(cfg, (0.2, 0.1))
