import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from unidm.errors import NumericalInconsistencyError, UnphysicalConditionalError
from unidm.gaussian_info import (conditional_covariance, conditional_nu3, entropy_from_nu, g, holevo,
                                 holevo_max_over_cp, key_rate, mutual_info_gaussian, spectrum,
                                 symplectic_eigs)
from unidm.physicality import CovarianceSummary, cp_interval, cp_star, cq_transitions
from oracles import williamson_symplectic


def physical_summaries():
    @st.composite
    def build(draw):
        V = draw(st.floats(1.0, 3.0))
        W = draw(st.floats(1.0, 3.0))
        Wp = draw(st.floats(1.0, 3.0))
        cq = draw(st.floats(-1.0, 1.0)) * math.sqrt(W * (V - 1.0))
        try:
            iv = cp_interval(V, W, Wp, cq)
        except Exception:
            assume(False)
        cp = iv.cp_minus + draw(st.floats(0.0, 1.0)) * iv.width
        return CovarianceSummary(V, W, Wp, cq, cp)
    return build()


def test_identity_summary():
    s = CovarianceSummary(1.0, 1.0, 1.0, 0.0, 0.0)
    assert symplectic_eigs(s) == pytest.approx((1.0, 1.0))
    assert holevo(s) == pytest.approx(0.0, abs=1e-15)


def test_boundary_summary():
    V, W, Wp, Cq = 1.1, 1.06, 1.0, 0.15
    iv = cp_interval(V, W, Wp, Cq)
    s = CovarianceSummary(V, W, Wp, Cq, iv.cp_plus)
    nu1, nu2 = symplectic_eigs(s)
    assert nu2 == pytest.approx(1.0, abs=1e-9)
    assert nu1 == pytest.approx(math.sqrt(s.det()), abs=1e-9)


@given(physical_summaries())
def test_closed_form_matches_williamson(s):
    assume(np.linalg.eigvalsh(s.matrix()).min() > 1e-6)
    ref = williamson_symplectic(s.matrix())
    # Nearly degenerate spectra lose ~sqrt(eps) through the discriminant root.
    assume(ref[1] - ref[0] > 1e-4)
    assert np.allclose(sorted(symplectic_eigs(s)), ref, atol=1e-10)
    assert holevo(s) >= -1e-12


def test_negative_discriminant():
    with pytest.raises(NumericalInconsistencyError):
        symplectic_eigs(CovarianceSummary(1.95, 0.88, 0.22, -2.9, 1.88))


def test_conditional_nu3():
    assert conditional_nu3(1.3, 1.2, 0.0) == pytest.approx(math.sqrt(1.3))
    V = W = 1.25
    assert conditional_nu3(V, W, math.sqrt(W * (V - 1))) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(UnphysicalConditionalError):
        conditional_nu3(1.04, 1.04, 0.3)
    with pytest.raises(UnphysicalConditionalError):
        conditional_nu3(1.04, 0.0, 0.0)


def test_conditional_covariance_generic_form():
    s = CovarianceSummary(1.1, 1.06, 1.01, 0.2, -0.1)
    cond = conditional_covariance(s.matrix())
    assert np.allclose(cond, np.diag([1.1 - 0.04 / 1.06, 1.0]), atol=1e-14)


def test_g_values():
    assert g(0.0) == 0.0
    assert g(0.5) == pytest.approx(1.5 * math.log2(1.5) + 0.5, abs=1e-14)
    assert g(0.5) == pytest.approx(1.377444, abs=1e-6)
    assert g(-1e-13) == 0.0
    with pytest.raises(ValueError):
        g(-1e-6)
    assert np.allclose(g(np.array([0.0, 0.5])), [0.0, g(0.5)])
    assert entropy_from_nu(1.0) == 0.0


@pytest.mark.parametrize("V, W, Wp, cq", [(1.1, 1.06, 1.0, 0.13), (1.1, 1.06, 1.0, 0.2),
                                         (1.04, 1.0252, 1.0, 0.1604)])
def test_holevo_max_regimes(V, W, Wp, cq):
    _, cqp = cq_transitions(V, W, Wp)
    assert cq > cqp
    hm = holevo_max_over_cp(V, W, Wp, cq)
    iv = hm.interval
    assert hm.cp_shortcut == cp_star(iv)
    # Above the transition the maximizer lies on the shortcut's half of the interval,
    # but generally in the interior rather than at the shortcut endpoint.
    assert abs(hm.cp_argmax - hm.cp_shortcut) < 0.5 * iv.width
    for cp in (iv.cp_minus, iv.cp_plus) + ((0.0,) if iv.contains(0.0) else ()):
        assert hm.chi_max >= holevo(CovarianceSummary(V, W, Wp, cq, cp)) - 1e-14
    assert hm.chi_max >= hm.chi_shortcut - 1e-14


def test_shortcut_close_at_protocol_settings():
    hm = holevo_max_over_cp(1.04, 1.0252, 1.0, 0.1604)
    assert abs(hm.cp_argmax - hm.cp_shortcut) < 1e-3
    assert hm.chi_max - hm.chi_shortcut < 0.01 * hm.chi_max


@given(st.floats(1.01, 1.3), st.floats(1.0, 1.2), st.floats(1.0, 1.1), st.floats(0.0, 0.95))
def test_holevo_max_even_in_cq(V, W, Wp, frac):
    cq = frac * math.sqrt(W * (V - 1.0))
    try:
        a = holevo_max_over_cp(V, W, Wp, cq).chi_max
    except Exception:
        assume(False)
    b = holevo_max_over_cp(V, W, Wp, -cq).chi_max
    assert a == pytest.approx(b, abs=1e-8)


def test_mutual_info_and_key_rate():
    assert mutual_info_gaussian(1.04, 1.04, 0.0) == 0.0
    expected = 0.5 * math.log2(1.04 / (1.04 - 0.04 / 1.04))
    assert mutual_info_gaussian(1.04, 1.04, 0.2) == pytest.approx(expected, abs=1e-15)
    assert mutual_info_gaussian(1.04, 1.04, 0.2) == pytest.approx(0.02719, abs=1e-5)
    assert key_rate(1.0, 0.3, 0.3) == 0.0
    assert key_rate(0.9, 0.1, 0.2) == pytest.approx(-0.11)
    with pytest.raises(ValueError):
        key_rate(1.2, 0.1, 0.0)
    with pytest.raises(UnphysicalConditionalError):
        mutual_info_gaussian(1.0, 1.0, 1.0)


def test_spectrum_record():
    s = CovarianceSummary(1.1, 1.06, 1.0, 0.15, 0.0)
    sp = spectrum(s)
    assert sp.nu3 == pytest.approx(conditional_nu3(1.1, 1.06, 0.15))
    assert sp.nu1 >= sp.nu2
