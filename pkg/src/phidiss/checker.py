"""Dissipativity verdicts for per-axis operators.

The pointwise criterion: the operator d/dx_h (A^h(x) d/dx_h) is dissipative
iff P(lam, om) >= 0 for every axis h, almost every x and all lam, om with
|om| = 1; strictness (under sup Lambda^2 < 1) means P >= kappa' |lam|^2 for
some kappa' > 0.  Essential infima are approximated by grid minima, so every
verdict is certified at the sampled points only.

Margin bands: margins above 1e-7 are strict (when the profile certifies
sup Lambda^2 < 1), margins down to -1e-9 count as plain dissipativity (the
boundary case), margins below -1e-7 are violations with a witness, and the
sliver in between is inconclusive: local minimization cannot sign a
near-zero infimum.

Two strictness constants are reported: kappa_prime is the certified
algebraic margin (the P lower bound), kappa = kappa_prime/(1 - Lambda_inf^2)
is the upper bracket coming from the shift characterization; the supremal
Laplacian-shift constant always lies between them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .criteria import (
    CriterionForm,
    eigen_summary,
    eval_P,
    min_P,
    min_P_batch,
    strict_symmetric_criterion,
)
from .errors import (
    EmptyDomainError,
    FallbackRequired,
    PreconditionError,
    ShapeError,
    UnsupportedRegimeError,
)
from .fields import EMPTY_SLICE, CoefficientField, DomainBox
from .weights import LambdaProfile

TOL_STRICT = 1e-7
TOL_DISSIPATIVE = 1e-9


class Status(enum.Enum):
    STRICTLY_DISSIPATIVE = "StrictlyDissipative"
    DISSIPATIVE = "Dissipative"
    NOT_DISSIPATIVE = "NotDissipative"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Witness:
    x: tuple
    h: int
    lam_vec: np.ndarray | None
    omega: np.ndarray | None


@dataclass(frozen=True)
class CheckOptions:
    starts: int = 8
    seed: int = 42
    tol_strict: float = TOL_STRICT
    tol_dissipative: float = TOL_DISSIPATIVE


@dataclass(frozen=True)
class Verdict:
    status: Status
    margin: float
    kappa: float
    kappa_prime: float
    witness: Witness | None
    certified_points: int
    lambda_inf_sq: float
    method: str = "quadratic_form"
    flags: tuple = ()

    def to_record(self) -> str:
        """Structured-text record (key = value lines, machine-first)."""
        lines = [
            "[verdict]",
            f"status = {self.status.value}",
            f"margin = {self.margin!r}",
            f"kappa = {self.kappa!r}",
            f"kappa_prime = {self.kappa_prime!r}",
            f"lambda_inf_sq = {self.lambda_inf_sq!r}",
            f"certified_points = {self.certified_points}",
            f"method = {self.method}",
        ]
        if self.witness is not None:
            w = self.witness
            lines.append("witness_x = " + ",".join(repr(float(v)) for v in w.x))
            lines.append(f"witness_h = {w.h}")
            if w.lam_vec is not None:
                lines.append("witness_lambda = " + _cvec(w.lam_vec))
                lines.append("witness_omega = " + _cvec(w.omega))
        for fl in self.flags:
            lines.append(f"flag = {fl}")
        return "\n".join(lines) + "\n"


def _cvec(v):
    return ",".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in np.asarray(v))


def _status_from_margin(margin: float, cond_l: bool, opts: CheckOptions) -> Status:
    if cond_l and margin > opts.tol_strict:
        return Status.STRICTLY_DISSIPATIVE
    if margin >= -opts.tol_dissipative:
        return Status.DISSIPATIVE
    if margin < -opts.tol_strict:
        return Status.NOT_DISSIPATIVE
    return Status.INCONCLUSIVE


def _kappas(margin: float, lam_sq: float, status: Status):
    if status is Status.STRICTLY_DISSIPATIVE:
        kappa = margin / (1.0 - lam_sq)
        return kappa, (1.0 - lam_sq) * kappa
    return 0.0, 0.0


def _verdict_from_margins(margins, pts, profile, opts, lam_vecs, omegas, flags,
                          method="quadratic_form"):
    """margins: (N, n) array over sample points and axes."""
    N, n = margins.shape
    flat = int(np.argmin(margins))
    i, h = divmod(flat, n)
    margin = float(margins[i, h])
    status = _status_from_margin(margin, profile.cond_L, opts)
    kappa, kappa_prime = _kappas(margin, profile.lambda_inf_sq, status)
    witness = Witness(x=tuple(float(v) for v in np.atleast_1d(pts[i])), h=h,
                      lam_vec=None if lam_vecs is None else lam_vecs[i, h],
                      omega=None if omegas is None else omegas[i, h])
    return Verdict(status=status, margin=margin, kappa=kappa,
                   kappa_prime=kappa_prime, witness=witness,
                   certified_points=N, lambda_inf_sq=profile.lambda_inf_sq,
                   method=method, flags=tuple(flags))


def _positivity_screen(mats_flat) -> float:
    """Smallest eigenvalue of the Hermitian parts; negative values already
    violate the plain positivity necessary condition."""
    H = 0.5 * (mats_flat + np.conj(np.swapaxes(mats_flat, -1, -2)))
    return float(np.linalg.eigvalsh(H)[:, 0].min())


def _check_per_h(field: CoefficientField, box: DomainBox, profile: LambdaProfile,
                 opts: CheckOptions) -> Verdict:
    if field is EMPTY_SLICE:
        raise EmptyDomainError("cannot check an empty slice")
    if not field.is_per_h:
        raise PreconditionError(
            "no algebraic iff-criterion for general tensors; use the "
            "ellipticity classifier instead")
    if box.n != field.n:
        raise ShapeError("field and box dimensions disagree")
    lam = profile.lambda_inf
    flags = list(profile.flags)
    if not box.is_bounded:
        flags.append("unbounded domain: grid sampling cannot distinguish "
                     "uniform from pointwise strictness")

    if field.is_constant:
        pts = box.grid_points()
        mats = np.asarray(field.data)  # (n, m, m)
        margins, lam_vecs, omegas = min_P_batch(mats, lam, starts=opts.starts,
                                                seed=opts.seed)
        screen = _positivity_screen(mats)
        if screen < -opts.tol_dissipative:
            flags.append(f"positivity screen fails: min Re<A l, l> = {screen:.3g}")
        n = field.n
        margins = np.broadcast_to(margins, (1, n))
        lv = np.broadcast_to(lam_vecs, (1, n, field.m))
        om = np.broadcast_to(omegas, (1, n, field.m))
        verdict = _verdict_from_margins(margins, pts[:1], profile, opts, lv, om,
                                        flags)
        return replace(verdict, certified_points=pts.shape[0])

    pts = box.grid_points()
    if pts.shape[0] == 0:
        raise EmptyDomainError("no sample points")
    mats = field.eval_on(pts)  # (N, n, m, m)
    N, n, m, _ = mats.shape
    flat = mats.reshape(N * n, m, m)
    screen = _positivity_screen(flat)
    if screen < -opts.tol_dissipative:
        flags.append(f"positivity screen fails: min Re<A l, l> = {screen:.3g}")
    margins, lam_vecs, omegas = min_P_batch(flat, lam, starts=opts.starts,
                                            seed=opts.seed)
    return _verdict_from_margins(margins.reshape(N, n), pts, profile, opts,
                                 lam_vecs.reshape(N, n, m),
                                 omegas.reshape(N, n, m), flags)


def check_ode(field: CoefficientField, box: DomainBox, profile: LambdaProfile,
              opts: CheckOptions = CheckOptions()) -> Verdict:
    """Dissipativity of (A(x) u')' on an interval; n must be 1."""
    if field is EMPTY_SLICE:
        raise EmptyDomainError("cannot check an empty slice")
    if field.n != 1 or box.n != 1:
        raise PreconditionError("check_ode needs a one-dimensional field")
    return _check_per_h(field, box, profile, opts)


def check_pde_diagonal(field: CoefficientField, box: DomainBox,
                       profile: LambdaProfile,
                       opts: CheckOptions = CheckOptions()) -> Verdict:
    """Dissipativity of sum_h d_h(A^h(x) d_h u): the pointwise criterion is
    applied to every axis at every sample; the margin aggregates over
    (x, h)."""
    return _check_per_h(field, box, profile, opts)


# ---------------------------------------------------------------------------
# eigenvalue fast path
# ---------------------------------------------------------------------------

def check_symmetric_fast(field: CoefficientField, box: DomainBox,
                         profile: LambdaProfile,
                         opts: CheckOptions = CheckOptions()) -> Verdict:
    """Verdict from the eigenvalue inequalities alone (no sphere descent).

    Needs every sampled matrix real symmetric (1e-12) and positive definite;
    otherwise raises FallbackRequired so the caller can run the general
    path.  Agrees with check_pde_diagonal away from the inconclusive band.
    """
    if field is EMPTY_SLICE:
        raise EmptyDomainError("cannot check an empty slice")
    if not field.is_per_h:
        raise PreconditionError("eigenvalue fast path applies to per-axis fields")
    lam_sq = profile.lambda_inf_sq
    if field.is_constant:
        pts_count = int(np.prod(box.grid))
        pts = box.grid_points()[:1]
        mats = np.asarray(field.data)[None]  # (1, n, m, m)
    else:
        pts = box.grid_points()
        pts_count = pts.shape[0]
        mats = field.eval_on(pts)
    N, n, m, _ = mats.shape
    if np.abs(mats.imag).max() > 1e-12:
        raise FallbackRequired("matrices are not real within 1e-12")
    re = mats.real
    if np.abs(re - np.swapaxes(re, -1, -2)).max() > 1e-12:
        raise FallbackRequired("matrices are not symmetric within 1e-12")

    summaries = np.empty((N, n), dtype=object)
    slack = np.empty((N, n))
    for i in range(N):
        for h in range(n):
            e = eigen_summary(re[i, h])
            if e.mu_min <= 0:
                raise FallbackRequired(
                    f"matrix at sample {i}, axis {h} is not positive definite")
            summaries[i, h] = e
            slack[i, h] = 4.0 * e.mu_min * e.mu_max \
                - lam_sq * (e.mu_min + e.mu_max) ** 2

    flags = list(profile.flags)
    i, h = np.unravel_index(int(np.argmin(slack)), slack.shape)
    worst_slack = float(slack[i, h])
    strict_ok, strict_margin = (False, -np.inf)
    if profile.cond_L:
        strict_ok, strict_margin = strict_symmetric_criterion(
            summaries.ravel().tolist(), lam_sq)

    if strict_ok and strict_margin > opts.tol_strict:
        status = Status.STRICTLY_DISSIPATIVE
    elif worst_slack >= -1e-12 * max(1.0, abs(worst_slack)):
        status = Status.DISSIPATIVE
    else:
        status = Status.NOT_DISSIPATIVE

    witness = Witness(x=tuple(float(v) for v in np.atleast_1d(pts[min(i, len(pts) - 1)])),
                      h=int(h), lam_vec=None, omega=None)
    if status is Status.NOT_DISSIPATIVE:
        # recover a concrete (lam, om) pair at the violating sample
        res = min_P(CriterionForm((re[i, h],), profile.lambda_inf),
                    starts=opts.starts, seed=opts.seed)
        witness = replace(witness, lam_vec=res.lam_vec, omega=res.omega)

    kappa = kappa_prime = 0.0
    if status is Status.STRICTLY_DISSIPATIVE:
        # exact supremal shift constant for the symmetric case
        root = np.sqrt(1.0 - lam_sq)
        kappa = min(0.5 * ((1.0 + 1.0 / root) * e.mu_min
                           + (1.0 - 1.0 / root) * e.mu_max)
                    for e in summaries.ravel())
        kappa_prime = (1.0 - lam_sq) * kappa
    return Verdict(status=status, margin=float(strict_margin if np.isfinite(strict_margin)
                                               else worst_slack),
                   kappa=float(kappa), kappa_prime=float(kappa_prime),
                   witness=witness, certified_points=pts_count,
                   lambda_inf_sq=lam_sq, method="eigenvalue", flags=tuple(flags))


# ---------------------------------------------------------------------------
# kappa shift
# ---------------------------------------------------------------------------

def _shifted_field(field: CoefficientField, kappa: float) -> CoefficientField:
    eye = np.eye(field.m)
    if field.kind == "constant_per_h":
        return CoefficientField.constant_per_h(field.data - kappa * eye)
    if field.kind == "grid_per_h":
        out = CoefficientField("grid_per_h", field.m, field.n,
                               data=field.data - kappa * eye, axes=field.axes)
        return out
    if field.kind == "callback":
        return CoefficientField.callback(
            lambda pts, _f=field, _k=kappa: _f.eval_on(np.atleast_2d(pts)) - _k * eye,
            field.m, field.n, vectorized=True)
    raise PreconditionError("kappa shift applies to per-axis fields")


def kappa_shift_check(field: CoefficientField, box: DomainBox,
                      profile: LambdaProfile, kappa: float,
                      opts: CheckOptions = CheckOptions()) -> Verdict:
    """Verdict for the operator shifted by kappa times the Laplacian
    (every A^h replaced by A^h - kappa I)."""
    if not profile.cond_L:
        raise UnsupportedRegimeError(
            "the shift characterization needs sup Lambda^2 < 1")
    if kappa < 0:
        raise PreconditionError("kappa must be >= 0")
    return _check_per_h(_shifted_field(field, kappa), box, profile, opts)


def supremal_kappa_shift(field: CoefficientField, box: DomainBox,
                         profile: LambdaProfile, tol: float = 1e-8,
                         opts: CheckOptions = CheckOptions()) -> float:
    """Largest kappa (within tol) whose shifted operator stays dissipative.

    Positive iff the operator is strictly dissipative; brackets from above
    via margin/(1 - Lambda_inf^2) and bisects.  Returns 0.0 when no shift
    passes.
    """
    if not profile.cond_L:
        raise UnsupportedRegimeError(
            "the shift characterization needs sup Lambda^2 < 1")

    def passes(k: float) -> tuple[bool, float]:
        v = kappa_shift_check(field, box, profile, k, opts)
        return v.margin >= -opts.tol_dissipative, v.margin

    ok0, margin0 = passes(0.0)
    if not ok0:
        return 0.0
    one_minus = 1.0 - profile.lambda_inf_sq
    hi = max(margin0, 0.0) / one_minus + max(tol, 1e-6)
    ok_hi, _ = passes(hi)
    guard = 0
    while ok_hi and guard < 60:
        hi *= 2.0
        ok_hi, _ = passes(hi)
        guard += 1
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if passes(mid)[0]:
            lo = mid
        else:
            hi = mid
    return lo
