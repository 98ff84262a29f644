"""Weight-function validation, Lambda, psi and the Young pair."""

import numpy as np
import pytest

from phidiss.errors import (
    InsufficientDataError,
    MalformedSpecError,
    NumericFailureError,
    PreconditionError,
)
from phidiss.weights import (
    PhiSpec,
    conjugate_spec,
    lambda_of_t,
    lambda_profile,
    psi_of,
    validate_phi,
    young_pair,
)


def exp_spec(s_max=60.0, num=4000):
    """phi(s) = e^s tabulated densely; r = 0 regime."""
    return PhiSpec.from_callable(np.exp, np.exp, r=0.0, s0=1.0, s1=2.0,
                                 s_range=(1e-7, s_max), num=num)


# ---------------------------------------------------------------------------
# validate_phi
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("p,r_expected", [(3.0, 1.0), (2.0, 0.0), (4.0, 2.0), (1.5, -0.5)])
def test_validate_power_passes(p, r_expected):
    spec = PhiSpec.power(p)
    assert spec.r == pytest.approx(r_expected)
    report = validate_phi(spec, samples=128)
    assert report.passed, report.first_failure()
    assert report.c1 is not None and report.c1 > 0
    # (s phi)' = (p-1) s^(p-2): the fitted constants collapse to p-1
    assert report.c1 == pytest.approx(p - 1.0, rel=1e-9)
    assert report.c2 == pytest.approx(p - 1.0, rel=1e-9)


def test_validate_power_p2_r0_limits():
    report = validate_phi(PhiSpec.power(2.0), samples=128)
    assert report.passed
    assert report.phi_plus_0 == pytest.approx(1.0)


def test_validate_tabulated_exp():
    report = validate_phi(exp_spec(), samples=256)
    assert report.passed, report.first_failure()
    # window is clipped to the tabulated range
    assert any("clipped" in f for f in report.flags)


def test_validate_rejects_decreasing_s_phi():
    # phi(s) = 1/s^2 makes s*phi decreasing: conditions (ii)/(iii) fail
    spec = PhiSpec.from_callable(lambda s: s**-2.0, lambda s: -2.0 * s**-3.0,
                                 r=0.0, s0=1.0, s1=2.0, s_range=(1e-3, 1e3), num=500)
    report = validate_phi(spec, samples=128)
    assert not report.conditions["ii"].passed
    assert report.conditions["ii"].first_failure_s is not None


def test_validate_condition_vi_failure():
    # |s phi'/phi| = 1/(1+s) decreases for phi = e^{log-shape}: use
    # phi(s) = 1 + s which has s phi'/phi = s/(1+s)... increasing; instead
    # take phi(s) = exp(2*sqrt(s)): s phi'/phi = sqrt(s), increasing -- so
    # build a genuinely failing one: phi(s) = exp(atan(s)) has
    # s phi'/phi = s/(1+s^2), which rises then falls past s = 1.
    spec = PhiSpec.from_callable(
        lambda s: np.exp(np.arctan(s)),
        lambda s: np.exp(np.arctan(s)) / (1 + s**2),
        r=0.0, s0=0.5, s1=1.0, s_range=(1e-4, 1e3), num=2000)
    report = validate_phi(spec, samples=256)
    assert not report.conditions["vi"].passed


def test_validate_errors():
    with pytest.raises(PreconditionError):
        validate_phi(PhiSpec.power(4.0), samples=32)
    with pytest.raises(InsufficientDataError):
        PhiSpec.tabulated(np.array([[1.0, 1.0, 0.0], [2.0, 1.0, 0.0],
                                    [3.0, 1.0, 0.0]]), r=0.0, s0=1.0)
    with pytest.raises(PreconditionError):
        PhiSpec.tabulated(np.array([[1.0, 1.0, 0.0], [0.5, 1.0, 0.0],
                                    [3.0, 1.0, 0.0], [4.0, 1.0, 0.0]]),
                          r=0.0, s0=1.0)
    with pytest.raises(MalformedSpecError):
        PhiSpec.tabulated(np.array([[1.0, 1.0, 0.0], [2.0, -1.0, 0.0],
                                    [3.0, 1.0, 0.0], [4.0, 1.0, 0.0]]),
                          r=0.0, s0=1.0)


# ---------------------------------------------------------------------------
# Lambda
# ---------------------------------------------------------------------------

def test_lambda_power_constant():
    for p in (1.5, 2.0, 3.0, 4.0, 10.0):
        spec = PhiSpec.power(p)
        want = 2.0 / p - 1.0
        t = np.geomspace(1e-6, 1e6, 50)
        got = lambda_of_t(spec, t)
        assert np.max(np.abs(got - want)) < 1e-10


def test_lambda_tabulated_quartic():
    # phi(s) = s^2 + s^4: Lambda at t = s*sqrt(phi(s)) with s = 1 (t = sqrt 2)
    # equals -(2 + 4 s^2)/(4 + 6 s^2) = -0.6.
    spec = PhiSpec.from_callable(lambda s: s**2 + s**4,
                                 lambda s: 2 * s + 4 * s**3,
                                 r=2.0, s0=0.5, s1=1.0,
                                 s_range=(1e-5, 1e3), num=6000)
    got = lambda_of_t(spec, np.sqrt(2.0))
    assert got == pytest.approx(-0.6, abs=1e-6)


def test_lambda_bisection_matches_direct_ratio():
    spec = exp_spec()
    s_pts = np.geomspace(0.05, 20.0, 24)
    t_pts = spec.s_sqrt_phi(s_pts)
    got = lambda_of_t(spec, t_pts)
    want = spec.lambda_from_s(s_pts)
    np.testing.assert_allclose(got, want, atol=1e-8)


def test_lambda_out_of_range_raises_with_bracket():
    spec = exp_spec(s_max=5.0)
    with pytest.raises(NumericFailureError) as exc:
        lambda_of_t(spec, 1e11)
    assert exc.value.bracket is not None


# ---------------------------------------------------------------------------
# lambda_profile
# ---------------------------------------------------------------------------

def test_profile_power():
    prof = lambda_profile(PhiSpec.power(4.0))
    assert prof.lambda_inf_sq == pytest.approx(0.25, abs=1e-12)
    assert prof.lambda_inf == pytest.approx(-0.5, abs=1e-12)
    assert prof.cond_L
    prof2 = lambda_profile(PhiSpec.power(2.0))
    assert prof2.lambda_inf_sq == pytest.approx(0.0, abs=1e-12)
    assert prof2.cond_L


def test_profile_exp_censored():
    # Lambda(t) -> -s/(s+2) -> -1 as s -> inf: the sup is never attained on a
    # finite window, so the limit is censored and cond_L must stay False.
    prof = lambda_profile(exp_spec())
    assert not prof.inf_converged
    assert not prof.cond_L
    assert prof.lambda_inf_sq > 0.85
    assert prof.lambda_inf_sq <= 1.0
    assert any("censored" in f for f in prof.flags)


def test_profile_lambda_bound():
    spec = exp_spec()
    prof = lambda_profile(spec)
    t = np.geomspace(prof.t_window[0] * 1.01, prof.t_window[1] * 0.99, 40)
    assert np.all(prof.lambda_at(t) ** 2 <= prof.lambda_inf_sq + 1e-9)


# ---------------------------------------------------------------------------
# psi and the Young pair
# ---------------------------------------------------------------------------

def test_psi_values():
    assert psi_of(PhiSpec.power(4.0), 8.0) == pytest.approx(0.25, rel=1e-9)
    assert psi_of(PhiSpec.power(3.0), 4.0) == pytest.approx(0.5, rel=1e-9)
    assert psi_of(PhiSpec.power(2.0), 17.3) == pytest.approx(1.0, rel=1e-12)


def test_psi_roundtrip():
    for spec in (PhiSpec.power(4.0), PhiSpec.power(1.5), exp_spec()):
        lo, hi = (1e-4, 1e4) if spec.family == "power" else (
            spec.s_phi(spec.s_range[0]) * 1.01, spec.s_phi(spec.s_range[1]) * 0.99)
        t = np.geomspace(lo, hi, 30)
        s_back = np.asarray(t) * np.asarray([psi_of(spec, ti) for ti in t])
        np.testing.assert_allclose(spec.s_phi(s_back), t, rtol=1e-9)


def test_conjugate_exponent_law():
    # psi of the power family is the power map with 1/p + 1/p' = 1
    for p in (1.5, 3.0, 4.0):
        pp = p / (p - 1.0)
        t = np.geomspace(1e-3, 1e3, 25)
        got = np.array([psi_of(PhiSpec.power(p), ti) for ti in t])
        np.testing.assert_allclose(got, t ** (pp - 2.0), rtol=1e-9)


def test_young_pair_values():
    assert young_pair(PhiSpec.power(4.0), 1.0)[0] == pytest.approx(0.25, rel=1e-8)
    assert young_pair(PhiSpec.power(2.0), 2.0)[0] == pytest.approx(2.0, rel=1e-8)
    assert young_pair(PhiSpec.power(3.0), 0.0) == (0.0, 0.0)


def test_young_equality_at_conjugate_point():
    # Phi(s) + Psi(s*phi(s)) = s * (s*phi(s)) with equality exactly there
    spec = PhiSpec.power(4.0)
    s = 1.3
    t_star = float(spec.s_phi(s))
    big_phi, _ = young_pair(spec, s, verify=True)
    big_psi_t = young_pair(conjugate_spec(spec), t_star)[0]
    assert big_phi + big_psi_t == pytest.approx(s * t_star, rel=1e-7)


# ---------------------------------------------------------------------------
# conjugacy invariants
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_conjugate_transfer(p):
    # the conjugate spec passes validation with exponent -r/(r+1)
    spec = PhiSpec.power(p)
    conj = conjugate_spec(spec)
    assert conj.r == pytest.approx(-spec.r / (spec.r + 1.0), rel=1e-12)
    assert validate_phi(conj, samples=128).passed


def test_sign_flip_tilde_lambda():
    # Lambda built from psi is the negative of Lambda built from phi
    for spec in (PhiSpec.power(4.0), PhiSpec.power(1.5)):
        conj = conjugate_spec(spec)
        t = np.geomspace(1e-3, 1e3, 50)
        np.testing.assert_allclose(lambda_of_t(conj, t), -np.asarray(lambda_of_t(spec, t)),
                                   atol=1e-8)


def test_sign_flip_tabulated():
    spec = exp_spec()
    conj = conjugate_spec(spec)
    s_pts = np.geomspace(0.1, 10.0, 12)
    # evaluate both Lambdas at the same argument: t = s sqrt(phi(s)) for phi,
    # and the corresponding u = w sqrt(psi(w)) with w = s*phi(s) satisfies
    # u = s sqrt(phi(s)) as well (since psi(w) w = s => u = sqrt(s w)).
    t_pts = spec.s_sqrt_phi(s_pts)
    # accuracy here is limited by interpolation of the remapped grid
    np.testing.assert_allclose(lambda_of_t(conj, t_pts),
                               -np.asarray(lambda_of_t(spec, t_pts)), atol=2e-5)
