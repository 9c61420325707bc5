import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate

from selfint.constants import (
    CovarianceMatrix,
    angle_cosine,
    g_angle,
    kappa,
    kappa1,
    kappa2,
    kappa2_closed_form,
    kappa_integrand,
    kappa_tan,
    sigma_from_distribution,
    theorem3_prefactor,
    v_growth,
)
from selfint.walks import make_distribution

SIGMA3 = CovarianceMatrix.scaled_identity(3, 1 / 6)
SIGMA2 = CovarianceMatrix.scaled_identity(2, 1 / 4)


@pytest.fixture(scope="module")
def kappa_report():
    return kappa()


@pytest.fixture(scope="module")
def kappa2_report():
    return kappa2(SIGMA3)


def test_kappa_integrand_at_origin():
    assert kappa_integrand(0.0, 0.0) == 1


def test_kappa_integrand_positive_and_finite():
    rng = np.random.default_rng(0)
    r, s = rng.exponential(5.0, (2, 1000))
    v = kappa_integrand(r, s)
    assert np.all(np.isfinite(v)) and np.all(v > 0)
    assert np.allclose((1 + r + s) ** 2 - 4 * r * s, (1 + r - s) ** 2 + 4 * s)


def test_kappa_converges_monotonically(kappa_report):
    assert kappa_report.converged
    assert kappa_report.monotone
    assert len(kappa_report.resolutions) >= 3
    assert kappa_report.spread(3) < 1e-8


def test_kappa_change_of_variable(kappa_report):
    assert abs(kappa_tan() - kappa_report.value) < 1e-6


def test_kappa1_values():
    assert kappa1(SIGMA3) == pytest.approx(13.5 / math.pi**3, rel=1e-12)
    assert kappa1(np.eye(3)) == pytest.approx(1 / (16 * math.pi**3), rel=1e-14)
    assert kappa1(np.eye(3)) == pytest.approx(0.0020157, abs=1e-7)
    assert kappa1(CovarianceMatrix.scaled_identity(3, 2 / 6)) == pytest.approx(kappa1(SIGMA3) / 8, rel=1e-14)
    with pytest.raises(ValueError):
        kappa1(np.eye(2))


def test_covariance_validation():
    with pytest.raises(ValueError):
        CovarianceMatrix(np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(ValueError):
        CovarianceMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_sigma_of_simple_walks_is_half_second_moment():
    assert np.allclose(sigma_from_distribution(make_distribution("srw2d")).matrix, np.eye(2) / 4)
    assert np.allclose(sigma_from_distribution(make_distribution("srw3d")).matrix, np.eye(3) / 6)


def test_g_angle_values():
    assert g_angle(0.0) == 0
    assert g_angle(1.0) == pytest.approx(1 - math.pi / 2, abs=1e-15)
    assert math.isinf(g_angle(-1.0))
    # both sides of each series cutoff against the closed form, using the exact
    # floating-point distance to +-1 (near -1, g moves by ~1e3 per 1e-12 in A)
    for e in (1e-3, 2e-6, 1e-7):
        A = 1 - e
        e = 1 - A
        assert g_angle(A) + math.pi / 2 == pytest.approx(math.acos(1 - e) / math.sqrt(e * (2 - e)), rel=1e-9)
        A = -1 + e
        h = A + 1
        direct = (math.pi - math.acos(1 - h)) / math.sqrt(h * (2 - h)) - math.pi / 2
        assert g_angle(A) == pytest.approx(direct, rel=1e-9)


def test_angle_cosine_bounded():
    rng = np.random.default_rng(1)
    th = rng.uniform(0, math.pi, (2, 10**4))
    ph = rng.uniform(0, 2 * math.pi, (2, 10**4))
    A = angle_cosine(th[0], th[1], ph[0], ph[1])
    assert np.all(np.abs(A) <= 1 + 1e-15)


@settings(max_examples=100, deadline=None)
@given(th1=st.floats(0, math.pi), th2=st.floats(0, math.pi),
       ph1=st.floats(0, 2 * math.pi), ph2=st.floats(0, 2 * math.pi))
def test_angle_integrand_symmetric_under_swap(th1, th2, ph1, ph2):
    a = np.clip(angle_cosine(th1, th2, ph1, ph2), -1, 1)
    b = np.clip(angle_cosine(th2, th1, ph2, ph1), -1, 1)
    assume(a > -1)  # antipodal directions: g is infinite there
    assert g_angle(a) * math.sin(th1) * math.sin(th2) == pytest.approx(
        g_angle(b) * math.sin(th2) * math.sin(th1), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("th1,th2", [(0.4, 1.1), (1.3, 2.2), (2.5, 0.3)])
def test_azimuthal_reduction(th1, th2):
    def g(A):
        return float(g_angle(min(1.0, max(-1.0, A))))

    full, _ = integrate.dblquad(lambda p2, p1: g(angle_cosine(th1, th2, p1, p2)),
                                0, 2 * math.pi, 0, 2 * math.pi, epsabs=1e-11, epsrel=1e-11)
    reduced, _ = integrate.quad(lambda psi: g(angle_cosine(th1, th2, psi, 0.0)), 0, 2 * math.pi,
                                epsabs=1e-12, epsrel=1e-12, limit=200)
    assert full == pytest.approx(2 * math.pi * reduced, abs=1e-6)


def test_kappa2_converges_to_closed_form(kappa2_report):
    assert kappa2_report.converged and kappa2_report.monotone
    assert kappa2_report.spread(3) < 1e-6
    assert kappa2_report.value == pytest.approx(kappa2_closed_form(SIGMA3), abs=1e-9)
    assert kappa2_closed_form(SIGMA3) == pytest.approx((math.pi - 2) / (32 * math.pi**3) * 216, rel=1e-14)


def test_prefactor_examples(kappa_report):
    assert theorem3_prefactor(1, 2, gamma=1.0) == pytest.approx((math.pi**2 + 6) / (3 * math.pi**2), rel=1e-14)
    assert theorem3_prefactor(2, 2, sigma=SIGMA2) == pytest.approx(8 / math.pi**2 * (kappa_report.value + 1), rel=1e-12)
    assert theorem3_prefactor(3, 2, sigma=SIGMA3) == pytest.approx(
        kappa1(SIGMA3) + kappa2_closed_form(SIGMA3), rel=1e-8)


@settings(max_examples=50, deadline=None)
@given(gamma=st.floats(0.05, 20), c=st.floats(0.1, 10))
def test_prefactor_homogeneous_in_gamma(gamma, c):
    base = theorem3_prefactor(1, 2, gamma=gamma)
    assert theorem3_prefactor(1, 2, gamma=c * gamma) == pytest.approx(base / c**2, rel=1e-12)


def test_prefactor_errors():
    with pytest.raises(ValueError):
        theorem3_prefactor(3, 3, sigma=SIGMA3)
    with pytest.raises(ValueError):
        theorem3_prefactor(4, 2, sigma=np.eye(4))
    with pytest.raises(ValueError):
        theorem3_prefactor(1, 2)
    with pytest.raises(ValueError):
        theorem3_prefactor(2, 1, sigma=SIGMA2)


def test_v_growth_table():
    assert v_growth(1, 2, 8) == 512
    assert v_growth(3, 2, math.e) == pytest.approx(math.e)
    assert v_growth(3, 2, 1000) == v_growth(3, 5, 1000)
    assert v_growth(5, 4, 10**6) == 10**6
    assert v_growth(2, 3, math.e**2) == pytest.approx(math.e**4 * 4)
    with pytest.raises(ValueError):
        v_growth(2, 2, 1)
