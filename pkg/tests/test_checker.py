"""Verdict orchestration: per-axis checks, fast path, kappa shift."""

import numpy as np
import pytest

from phidiss.checker import (
    CheckOptions,
    Status,
    Verdict,
    check_ode,
    check_pde_diagonal,
    check_symmetric_fast,
    kappa_shift_check,
    supremal_kappa_shift,
)
from phidiss.criteria import CriterionForm, eval_P
from phidiss.errors import (
    EmptyDomainError,
    FallbackRequired,
    PreconditionError,
    UnsupportedRegimeError,
)
from phidiss.fields import EMPTY_SLICE, CoefficientField, DomainBox
from phidiss.weights import PhiSpec, lambda_profile

T_UPPER = 7.0 + 4.0 * np.sqrt(3.0)

P4 = lambda_profile(PhiSpec.power(4.0))
P2 = lambda_profile(PhiSpec.power(2.0))
BOX1 = DomainBox([(-1.0, 1.0)], grid=(16,))
BOX2 = DomainBox([(-1.0, 1.0), (-1.0, 1.0)], grid=(4, 4))


def const1(A):
    return CoefficientField.constant_per_h(np.asarray(A, dtype=complex)[None])


def test_check_ode_identity_strict():
    v = check_ode(const1(np.eye(2)), BOX1, P4)
    assert v.status is Status.STRICTLY_DISSIPATIVE
    assert v.margin == pytest.approx(0.75, abs=1e-9)
    assert v.kappa == pytest.approx(1.0, abs=1e-9)
    assert v.kappa_prime == pytest.approx(v.margin, abs=1e-12)
    assert v.kappa_prime == pytest.approx((1 - v.lambda_inf_sq) * v.kappa, abs=1e-12)
    assert v.certified_points == 16


def test_check_ode_violated_with_witness():
    v = check_ode(const1(np.diag([1.0, 16.0])), BOX1, P4)
    assert v.status is Status.NOT_DISSIPATIVE
    assert v.witness is not None and v.witness.lam_vec is not None
    form = CriterionForm((np.diag([1.0, 16.0]) + 0j,), P4.lambda_inf)
    om = v.witness.omega / np.linalg.norm(v.witness.omega)
    assert eval_P(form, v.witness.lam_vec, om) == pytest.approx(v.margin, abs=1e-9)


def test_check_ode_p2_reduces_to_hermitian_part():
    rng = np.random.default_rng(0)
    for _ in range(5):
        A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        v = check_ode(const1(A), BOX1, P2)
        w = np.linalg.eigvalsh(0.5 * (A + A.conj().T))[0]
        assert v.margin == pytest.approx(w, abs=1e-9)
        assert (v.status in (Status.DISSIPATIVE, Status.STRICTLY_DISSIPATIVE)) \
            == (w >= -1e-9)


def test_check_ode_requires_1d():
    f = CoefficientField.constant_per_h([np.eye(2), np.eye(2)])
    with pytest.raises(PreconditionError):
        check_ode(f, BOX2, P4)
    with pytest.raises(EmptyDomainError):
        check_ode(EMPTY_SLICE, BOX1, P4)


def test_check_pde_identity_all_axes():
    f = CoefficientField.constant_per_h([np.eye(2), np.eye(2)])
    v = check_pde_diagonal(f, BOX2, P4)
    assert v.status is Status.STRICTLY_DISSIPATIVE
    assert v.margin == pytest.approx(0.75, abs=1e-9)


def test_check_pde_violating_axis_found():
    f = CoefficientField.constant_per_h([np.diag([1.0, 2.0]),
                                         np.diag([1.0, 0.05])])
    v = check_pde_diagonal(f, BOX2, P4)
    assert v.status is Status.NOT_DISSIPATIVE
    assert v.witness.h == 1  # 0.05 < 7 - 4 sqrt(3)


def test_check_pde_n1_matches_ode():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    a = check_ode(const1(A), BOX1, P4)
    b = check_pde_diagonal(const1(A), BOX1, P4)
    assert a.status is b.status and a.margin == b.margin


def test_check_pde_callback_field_margin_map():
    # margin crosses zero where 1 + x^2 = 7 + 4 sqrt(3)
    f = CoefficientField.callback(
        lambda x: np.diag([1.0, 1.0 + x[0] ** 2])[None], m=2, n=1)
    box = DomainBox([(0.0, 5.0)], grid=(21,))
    v = check_pde_diagonal(f, box, P4)
    assert v.status is Status.NOT_DISSIPATIVE
    assert v.witness.x[0] == pytest.approx(5.0)  # worst point: largest ratio


def test_check_rejects_tensor_field():
    t = np.zeros((2, 2, 2, 2), dtype=complex)
    t[0, 0] = t[1, 1] = np.eye(2)
    f = CoefficientField.constant_tensor(t)
    with pytest.raises(PreconditionError):
        check_pde_diagonal(f, BOX2, P4)


# ---------------------------------------------------------------------------
# eigenvalue fast path
# ---------------------------------------------------------------------------

def test_fast_path_boundary_dissipative_not_strict():
    v = check_symmetric_fast(const1(np.diag([1.0, T_UPPER])), BOX1, P4)
    assert v.status is Status.DISSIPATIVE
    assert v.method == "eigenvalue"


def test_fast_path_identity_strict():
    v = check_symmetric_fast(const1(np.eye(2)), BOX1, P4)
    assert v.status is Status.STRICTLY_DISSIPATIVE
    # exact supremal shift constant for the identity is 1
    assert v.kappa == pytest.approx(1.0, rel=1e-12)


def test_fast_path_violation():
    v = check_symmetric_fast(const1(np.diag([1.0, 14.0])), BOX1, P4)
    assert v.status is Status.NOT_DISSIPATIVE
    assert v.witness.lam_vec is not None


def test_fast_path_fallback_signals():
    with pytest.raises(FallbackRequired):
        check_symmetric_fast(const1(np.array([[1.0, 0.5], [0.0, 1.0]])), BOX1, P4)
    with pytest.raises(FallbackRequired):
        check_symmetric_fast(const1(np.diag([1.0, -2.0])), BOX1, P4)
    with pytest.raises(FallbackRequired):
        check_symmetric_fast(const1(np.eye(2) + 1e-3j * np.eye(2)), BOX1, P4)


def test_fast_path_agrees_with_general():
    rng = np.random.default_rng(2)
    for _ in range(25):
        m = int(rng.integers(2, 5))
        B = rng.standard_normal((m, m))
        A = B @ B.T + 0.1 * np.eye(m)
        fast = check_symmetric_fast(const1(A), BOX1, P4)
        gen = check_pde_diagonal(const1(A), BOX1, P4)
        if abs(gen.margin) <= 1e-6:
            continue
        fast_ok = fast.status in (Status.DISSIPATIVE, Status.STRICTLY_DISSIPATIVE)
        gen_ok = gen.status in (Status.DISSIPATIVE, Status.STRICTLY_DISSIPATIVE)
        assert fast_ok == gen_ok, (A, fast.status, gen.status, gen.margin)


# ---------------------------------------------------------------------------
# kappa shift
# ---------------------------------------------------------------------------

def test_kappa_shift_zero_matches_plain_check():
    A = np.diag([1.0, 3.0])
    a = check_ode(const1(A), BOX1, P4)
    b = kappa_shift_check(const1(A), BOX1, P4, 0.0)
    assert a.margin == pytest.approx(b.margin, abs=1e-12)


def test_kappa_shift_identity_boundary():
    f = const1(np.eye(2))
    ok = kappa_shift_check(f, BOX1, P4, 0.9)
    assert ok.margin >= -1e-9
    bad = kappa_shift_check(f, BOX1, P4, 1.1)
    assert bad.margin < -1e-7
    sup = supremal_kappa_shift(f, BOX1, P4, tol=1e-9)
    assert sup == pytest.approx(1.0, abs=1e-8)


def test_kappa_shift_boundary_case_has_no_shift():
    sup = supremal_kappa_shift(const1(np.diag([1.0, T_UPPER])), BOX1, P4)
    assert sup <= 1e-8


def test_kappa_shift_violated_has_no_shift():
    sup = supremal_kappa_shift(const1(np.diag([1.0, 16.0])), BOX1, P4)
    assert sup == 0.0


def test_kappa_shift_requires_cond_L():
    # a profile with sup Lambda^2 >= 1 cannot certify: build one artificially
    prof = P4
    bad_prof = type(prof)(spec=prof.spec, lambda_zero_limit=-0.99,
                          lambda_inf=-0.999999, lambda_inf_sq=1.0, cond_L=False,
                          lambda_range=(-1.0, -0.9), zero_converged=True,
                          inf_converged=False, t_window=(1e-12, 1e12))
    with pytest.raises(UnsupportedRegimeError):
        kappa_shift_check(const1(np.eye(2)), BOX1, bad_prof, 0.1)


def test_shift_equivalence_random():
    # strict verdict <=> some kappa > 0 passes
    rng = np.random.default_rng(3)
    for _ in range(10):
        A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        A = A + A.conj().T + 3.5 * np.eye(2)
        v = check_ode(const1(A), BOX1, P4)
        sup = supremal_kappa_shift(const1(A), BOX1, P4)
        if v.status is Status.STRICTLY_DISSIPATIVE:
            assert sup > 1e-8
            # supremal shift lies in the [kappa_prime, kappa] bracket
            assert v.kappa_prime - 1e-7 <= sup <= v.kappa + 1e-7
        elif v.status is Status.NOT_DISSIPATIVE:
            assert sup <= 1e-8


def test_monotone_in_lambda():
    # passing at a larger sup Lambda^2 implies passing at any smaller one
    field = const1(np.diag([1.0, 10.0]))
    history = []
    for p in (10.0, 4.0, 3.0, 2.0):  # lambda_inf_sq decreasing
        prof = lambda_profile(PhiSpec.power(p))
        v = check_ode(field, BOX1, prof)
        ok = v.status in (Status.DISSIPATIVE, Status.STRICTLY_DISSIPATIVE)
        history.append(ok)
    assert history == sorted(history)  # False ... True monotone


def test_positivity_necessity():
    # any dissipative verdict implies Re<A lam, lam> >= -tol for random lam
    rng = np.random.default_rng(4)
    A = np.array([[2.0, 1.0 + 0.5j], [1.0 - 0.5j, 3.0]])
    v = check_ode(const1(A), BOX1, P4)
    assert v.status in (Status.DISSIPATIVE, Status.STRICTLY_DISSIPATIVE)
    for _ in range(100):
        lam = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        val = np.vdot(lam, A @ lam).real
        assert val >= -1e-9


def test_verdict_record_roundtrip_text():
    v = check_ode(const1(np.diag([1.0, 16.0])), BOX1, P4)
    rec = v.to_record()
    assert "status = NotDissipative" in rec
    assert "witness_lambda" in rec
    assert rec.endswith("\n")
