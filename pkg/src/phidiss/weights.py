"""Admissible weight functions and the scalar quantities derived from them.

A weight ``phi`` is a positive C^1 function on (0, inf) subject to six
structural conditions: (i) smoothness, (ii) (s*phi(s))' > 0, (iii) the range
of s*phi(s) is all of (0, inf), (iv) power-like behaviour ~ s^r near zero
(with extra limits when r = 0), (v) eventual sign constancy of phi', and
(vi) monotonicity of |s*phi'(s)/phi(s)|.

From a validated weight we derive:

* ``Lambda`` -- defined through Lambda(s*sqrt(phi(s))) = -s phi'/(s phi' + 2 phi),
  always in (-1, 1) pointwise; its squared supremum drives every algebraic
  dissipativity criterion downstream.
* ``psi`` -- the conjugate weight, defined by letting t*psi(t) invert s*phi(s).
* ``Phi`` / ``Psi`` -- the conjugate Young-function pair obtained by
  integrating s*phi(s) and s*psi(s).

Everything here is a pure function of an immutable spec, safe for concurrent
use.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .errors import (
    InsufficientDataError,
    InvariantViolationError,
    MalformedSpecError,
    NumericFailureError,
    PreconditionError,
)

# Bisection stops when the bracket is below this width or stops shrinking.
BISECT_ABS_TOL = 1e-13
BISECT_MAX_ITER = 200

# lambda_profile walks a log-spaced t-grid, clipped to this window, and
# declares a limit converged once successive values differ by less than
# PROFILE_LIMIT_TOL.
PROFILE_T_BOUND = 1e12
PROFILE_LIMIT_TOL = 1e-10
PROFILE_MONOTONE_TOL = 1e-9

#: minimum sample count accepted by validate_phi
MIN_VALIDATION_SAMPLES = 64


@dataclass(frozen=True)
class PhiSpec:
    """An admissible weight function.

    ``family`` is ``"power"`` (phi(s) = s**(p-2)) or ``"tabulated"``
    (monotone piecewise-cubic interpolation of sampled (s, phi, phi') rows).
    ``r`` is the growth exponent of the near-zero regime, ``s0`` its upper
    boundary and ``s1 >= s0`` the threshold past which phi' keeps one sign.
    """

    family: str
    r: float
    s0: float
    s1: float
    p: float | None = None
    grid: np.ndarray | None = None  # (k, 3) rows of (s, phi, dphi)
    _phi_interp: object = field(default=None, repr=False, compare=False)
    _dphi_interp: object = field(default=None, repr=False, compare=False)

    # -- constructors -----------------------------------------------------

    @staticmethod
    def power(p: float, s0: float = 1.0) -> "PhiSpec":
        if not p > 1:
            raise PreconditionError(f"power family needs p > 1, got {p}")
        return PhiSpec(family="power", r=p - 2.0, s0=s0, s1=s0, p=float(p))

    @staticmethod
    def tabulated(grid, r: float, s0: float, s1: float | None = None) -> "PhiSpec":
        g = np.asarray(grid, dtype=float)
        if g.ndim != 2 or g.shape[1] != 3:
            raise PreconditionError("tabulated grid must be (k, 3) rows of (s, phi, dphi)")
        if g.shape[0] < 4:
            raise InsufficientDataError(
                f"tabulated grid has {g.shape[0]} rows; at least 4 required"
            )
        if not np.all(np.diff(g[:, 0]) > 0):
            raise PreconditionError("tabulated grid must be strictly increasing in s")
        if np.any(g[:, 0] <= 0):
            raise PreconditionError("tabulated s values must be positive")
        if np.any(g[:, 1] <= 0):
            raise MalformedSpecError("tabulated phi values must be positive")
        if not r > -1:
            raise PreconditionError(f"growth exponent must satisfy r > -1, got {r}")
        if s1 is None:
            s1 = max(float(g[-1, 0]) / 2.0, s0)
        spec = PhiSpec(family="tabulated", r=float(r), s0=float(s0), s1=float(s1),
                       grid=g)
        object.__setattr__(spec, "_phi_interp", PchipInterpolator(g[:, 0], g[:, 1]))
        object.__setattr__(spec, "_dphi_interp", PchipInterpolator(g[:, 0], g[:, 2]))
        return spec

    @staticmethod
    def from_callable(f, df, r, s0, s1=None, s_range=(1e-8, 1e4), num=2000) -> "PhiSpec":
        """Tabulate a closed-form weight on a log grid (testing convenience)."""
        s = np.geomspace(s_range[0], s_range[1], num)
        return PhiSpec.tabulated(np.column_stack([s, f(s), df(s)]), r=r, s0=s0, s1=s1)

    # -- pointwise evaluation ---------------------------------------------

    @property
    def s_range(self) -> tuple[float, float]:
        """Evaluable s interval (open-ended for the power family)."""
        if self.family == "power":
            return (0.0, np.inf)
        return (float(self.grid[0, 0]), float(self.grid[-1, 0]))

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "power":
            return s ** (self.p - 2.0)
        return np.asarray(self._phi_interp(s), dtype=float)

    def dphi(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "power":
            return (self.p - 2.0) * s ** (self.p - 3.0)
        return np.asarray(self._dphi_interp(s), dtype=float)

    def s_phi(self, s):
        """s * phi(s), the strictly increasing map inverted by t*psi(t)."""
        return np.asarray(s, dtype=float) * self.phi(s)

    def s_sqrt_phi(self, s):
        """s * sqrt(phi(s)), the reparametrisation entering Lambda."""
        return np.asarray(s, dtype=float) * np.sqrt(self.phi(s))

    def lambda_from_s(self, s):
        """-s phi'/(s phi' + 2 phi) evaluated directly at s."""
        s = np.asarray(s, dtype=float)
        sd = s * self.dphi(s)
        return -sd / (sd + 2.0 * self.phi(s))


# ---------------------------------------------------------------------------
# monotone root finding
# ---------------------------------------------------------------------------

def _solve_increasing(fn, targets, lo: float, hi: float, *, clamp: bool = False):
    """Vectorised bisection of the strictly increasing map ``fn`` on [lo, hi].

    ``clamp=True`` pins out-of-range targets to the nearest endpoint instead
    of raising; used when a caller only needs the continuous extension.
    """
    t = np.atleast_1d(np.asarray(targets, dtype=float))
    lo_a = np.full(t.shape, float(lo))
    hi_a = np.full(t.shape, float(hi))
    f_lo = np.asarray(fn(lo_a), dtype=float)
    f_hi = np.asarray(fn(hi_a), dtype=float)
    below = t <= f_lo
    above = t >= f_hi
    if not clamp and (np.any(t < f_lo) or np.any(t > f_hi)):
        raise NumericFailureError(
            "target outside the attainable range of the monotone map",
            bracket=(float(lo), float(hi)),
        )
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo_a + hi_a)
        stuck = (mid <= lo_a) | (mid >= hi_a)
        width = hi_a - lo_a
        # absolute floor for s >= 1, proportional below so tiny roots keep
        # full relative accuracy
        if np.all((width <= BISECT_ABS_TOL * np.minimum(1.0, np.abs(mid))) | stuck):
            break
        f_mid = np.asarray(fn(mid), dtype=float)
        go_up = f_mid < t
        lo_a = np.where(go_up & ~stuck, mid, lo_a)
        hi_a = np.where(~go_up & ~stuck, mid, hi_a)
    out = 0.5 * (lo_a + hi_a)
    out[below] = lo
    out[above] = hi
    return out if np.ndim(targets) else float(out[0])


def _bracket(spec: PhiSpec, fn, targets):
    """Expand a bracket [lo, hi] of s so that fn covers all targets."""
    t = np.atleast_1d(np.asarray(targets, dtype=float))
    if np.any(t <= 0):
        raise PreconditionError("targets must be positive")
    if spec.family == "tabulated":
        return spec.s_range
    lo, hi = 1.0, 1.0
    tmin, tmax = float(t.min()), float(t.max())
    for _ in range(600):
        if fn(lo) <= tmin:
            break
        lo *= 0.25
        if lo < 1e-200:
            raise NumericFailureError("bracket expansion underflow", bracket=(lo, hi))
    for _ in range(600):
        if fn(hi) >= tmax:
            break
        hi *= 4.0
        if hi > 1e200:
            raise NumericFailureError("bracket expansion overflow", bracket=(lo, hi))
    return lo, hi


def s_of_t(spec: PhiSpec, t, *, clamp: bool = False):
    """Solve s*sqrt(phi(s)) = t."""
    lo, hi = _bracket(spec, lambda s: spec.s_sqrt_phi(s), t)
    return _solve_increasing(spec.s_sqrt_phi, t, lo, hi, clamp=clamp)


def s_of_sphi(spec: PhiSpec, t, *, clamp: bool = False):
    """Solve s*phi(s) = t."""
    lo, hi = _bracket(spec, lambda s: spec.s_phi(s), t)
    return _solve_increasing(spec.s_phi, t, lo, hi, clamp=clamp)


# ---------------------------------------------------------------------------
# Lambda, psi, Young pair
# ---------------------------------------------------------------------------

def lambda_of_t(spec: PhiSpec, t, *, clamp: bool = False):
    """Lambda(t): invert s*sqrt(phi(s)) = t, then apply the defining ratio.

    The returned value always lies in (-1, 1): the denominator
    s phi' + 2 phi = (s phi)' + phi strictly dominates |s phi'| under
    condition (ii).
    """
    if spec.family == "power":
        val = 2.0 / spec.p - 1.0
        if np.ndim(t):
            return np.full(np.shape(t), val)
        return val
    s = s_of_t(spec, t, clamp=clamp)
    return spec.lambda_from_s(s)


def psi_of(spec: PhiSpec, t):
    """Conjugate weight psi(t) = s/t where s solves s*phi(s) = t."""
    if spec.family == "power":
        pp = spec.p / (spec.p - 1.0)
        return np.asarray(t, dtype=float) ** (pp - 2.0) if np.ndim(t) else float(t) ** (pp - 2.0)
    s = s_of_sphi(spec, t)
    return s / np.asarray(t, dtype=float) if np.ndim(t) else s / float(t)


def young_pair(spec: PhiSpec, s: float, *, rel_tol: float = 1e-8,
               verify: bool = False) -> tuple[float, float]:
    """Conjugate Young pair (Phi(s), Psi(s)) by adaptive quadrature.

    Phi(s) integrates sigma*phi(sigma); Psi(s) integrates sigma*psi(sigma),
    whose integrand is exactly the inverse function of sigma*phi(sigma).
    With ``verify=True`` the Young inequality s*t <= Phi(s) + Psi(t) is
    spot-checked at the equality point t = s*phi(s).
    """
    if s < 0:
        raise PreconditionError("young_pair needs s >= 0")
    if s == 0:
        return (0.0, 0.0)
    big_phi = _quad_checked(lambda x: x * spec.phi(x), 0.0, s, rel_tol)
    big_psi = _quad_checked(lambda x: x * psi_of(spec, x), 0.0, s, rel_tol)
    if verify:
        t_star = float(spec.s_phi(s))
        psi_at = _quad_checked(lambda x: x * psi_of(spec, x), 0.0, t_star, rel_tol)
        if s * t_star > big_phi + psi_at + 1e-6 * max(1.0, s * t_star):
            raise InvariantViolationError(
                f"Young inequality violated at s={s}, t={t_star}"
            )
    return big_phi, big_psi


def _quad_checked(f, a, b, rel_tol):
    val, err = quad(f, a, b, epsrel=rel_tol, epsabs=0.0, limit=200)
    if not np.isfinite(val) or (abs(val) > 0 and err > 10 * rel_tol * abs(val) + 1e-300):
        raise NumericFailureError(
            f"quadrature did not converge on [{a}, {b}]", estimates=(val, err)
        )
    return float(val)


def conjugate_spec(spec: PhiSpec) -> PhiSpec:
    """Build the spec of the conjugate weight psi.

    Its growth exponent is -r/(r+1); for the power family this is the
    classical conjugate-exponent map p -> p/(p-1).
    """
    r_conj = -spec.r / (spec.r + 1.0)
    if spec.family == "power":
        return PhiSpec.power(spec.p / (spec.p - 1.0), s0=float(spec.s_phi(spec.s0)))
    s = spec.grid[:, 0]
    t = np.asarray(spec.s_phi(s), dtype=float)
    gprime = spec.phi(s) + s * spec.dphi(s)
    psi_vals = s / t
    dpsi_vals = (t / gprime - s) / t**2
    grid = np.column_stack([t, psi_vals, dpsi_vals])
    s0c = float(np.clip(spec.s_phi(spec.s0), t[0], t[-1]))
    s1c = float(np.clip(spec.s_phi(spec.s1), s0c, t[-1]))
    return PhiSpec.tabulated(grid, r=r_conj, s0=s0c, s1=s1c)


# ---------------------------------------------------------------------------
# validation of conditions (i)-(vi)
# ---------------------------------------------------------------------------

@dataclass
class ConditionCheck:
    name: str
    passed: bool
    first_failure_index: int | None = None
    first_failure_s: float | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    conditions: dict[str, ConditionCheck]
    c1: float | None
    c2: float | None
    phi_plus_0: float | None
    window: tuple[float, float]
    samples: int
    flags: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def first_failure(self) -> ConditionCheck | None:
        for c in self.conditions.values():
            if not c.passed:
                return c
        return None


def _fail_at(name, mask, s, detail=""):
    idx = int(np.argmax(mask))
    return ConditionCheck(name, False, first_failure_index=idx,
                          first_failure_s=float(s[idx]), detail=detail)


def validate_phi(spec: PhiSpec, samples: int = 256) -> ValidationReport:
    """Check conditions (i)-(vi) on a log-spaced sample grid.

    The grid covers (s0*1e-6, s1*1e3), clipped to the tabulated range when
    applicable.  The near-zero constants C1, C2 are fitted as the min/max of
    (s*phi)'/s^r over the samples below s0; failures pinpoint the condition
    and the first offending sample.
    """
    if samples < MIN_VALIDATION_SAMPLES:
        raise PreconditionError(f"samples must be >= {MIN_VALIDATION_SAMPLES}")
    if spec.family == "tabulated" and spec.grid.shape[0] < 4:
        raise InsufficientDataError("tabulated grid shorter than 4 points")

    lo, hi = spec.s0 * 1e-6, spec.s1 * 1e3
    flags: list[str] = []
    if spec.family == "tabulated":
        g_lo, g_hi = spec.s_range
        if g_lo > lo or g_hi < hi:
            flags.append(
                f"validation window clipped to tabulated range [{g_lo:g}, {g_hi:g}]"
            )
        lo, hi = max(lo, g_lo), min(hi, g_hi)
    s = np.geomspace(lo, hi, samples)

    phi = spec.phi(s)
    dphi = spec.dphi(s)
    if np.any(~np.isfinite(phi)) or np.any(phi <= 0):
        bad = int(np.argmax(~np.isfinite(phi) | (phi <= 0)))
        raise MalformedSpecError(
            f"phi non-positive or non-finite at s = {s[bad]:g}"
        )

    conditions: dict[str, ConditionCheck] = {}

    # (i) C^1 on (0, inf): families are smooth by construction; reject
    # non-finite derivative samples.
    bad_i = ~np.isfinite(dphi)
    conditions["i"] = (_fail_at("i", bad_i, s, "non-finite phi'")
                       if bad_i.any() else ConditionCheck("i", True))

    # (ii) (s phi)' > 0 everywhere.
    gprime = phi + s * dphi
    bad_ii = gprime <= 0
    conditions["ii"] = (_fail_at("ii", bad_ii, s, "(s*phi)' <= 0")
                        if bad_ii.any() else ConditionCheck("ii", True))

    # (iii) s*phi strictly increasing; surjectivity onto (0, inf) can only be
    # observed up to the sampled window, so it is flagged rather than failed.
    sphi = s * phi
    bad_iii = np.diff(sphi) <= 0
    if bad_iii.any():
        conditions["iii"] = _fail_at("iii", np.append(bad_iii, False), s,
                                     "s*phi not strictly increasing")
    else:
        conditions["iii"] = ConditionCheck("iii", True)
    flags.append(
        f"range of s*phi observed on [{sphi.min():.3g}, {sphi.max():.3g}]; "
        "surjectivity beyond the window not certified"
    )

    # (iv) C1 s^r <= (s phi)' <= C2 s^r below s0.
    below = s < spec.s0
    c1 = c2 = None
    phi_plus_0 = None
    if not below.any():
        conditions["iv"] = ConditionCheck("iv", False,
                                          detail="no samples below s0")
    else:
        ratio = gprime[below] / s[below] ** spec.r
        if np.all(np.isfinite(ratio)) and np.all(ratio > 0):
            c1, c2 = float(ratio.min()), float(ratio.max())
            conditions["iv"] = ConditionCheck("iv", True,
                                              detail=f"C1={c1:.6g}, C2={c2:.6g}")
        else:
            sub = s[below]
            bad = ~np.isfinite(ratio) | (ratio <= 0)
            conditions["iv"] = _fail_at("iv", bad, sub, "(s*phi)'/s^r not positive finite")
        if spec.r == 0 and conditions["iv"].passed:
            head = s[below][:3]
            phis = spec.phi(head)
            phi_plus_0 = float(phis[0])
            var = abs(phis[-1] - phis[0]) / max(phi_plus_0, 1e-300)
            sd0 = abs(head[0] * spec.dphi(head[0]))
            if var > 0.05 or sd0 > 1e-2 * max(1.0, phi_plus_0):
                conditions["iv"] = ConditionCheck(
                    "iv", False, first_failure_s=float(head[0]),
                    detail=f"r=0 limits: phi(0+)~{phi_plus_0:.4g} varies {var:.2g}, "
                           f"s*phi'={sd0:.2g}")

    # (v) phi' of constant sign past s1.
    tail = s >= spec.s1
    conditions["v"] = ConditionCheck("v", True)
    if tail.any():
        d_tail = dphi[tail]
        scale = 1e-12 * max(1.0, float(np.abs(d_tail).max()))
        has_pos = d_tail > scale
        has_neg = d_tail < -scale
        if has_pos.any() and has_neg.any():
            first_pos = int(np.argmax(has_pos))
            first_neg = int(np.argmax(has_neg))
            minority = has_neg if first_pos < first_neg else has_pos
            conditions["v"] = _fail_at("v", minority, s[tail],
                                       "phi' changes sign past s1")
    else:
        flags.append("no samples at or above s1; condition (v) vacuous on window")

    # (vi) |s phi'/phi| non-decreasing.
    ratio_vi = np.abs(s * dphi / phi)
    drops = np.diff(ratio_vi) < -PROFILE_MONOTONE_TOL * (1.0 + ratio_vi[:-1])
    if drops.any():
        conditions["vi"] = _fail_at("vi", np.append(False, drops), s,
                                    "|s*phi'/phi| decreased between samples")
    else:
        conditions["vi"] = ConditionCheck("vi", True)

    return ValidationReport(conditions=conditions, c1=c1, c2=c2,
                            phi_plus_0=phi_plus_0, window=(lo, hi),
                            samples=samples, flags=flags)


# ---------------------------------------------------------------------------
# Lambda profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LambdaProfile:
    """Limits and range of Lambda, plus the strict-regime flag.

    ``cond_L`` certifies sup Lambda^2 < 1; a limit that was still moving at
    the t-window bound is reported as not converged and the profile refuses
    to certify (cond_L stays False).
    """

    spec: PhiSpec
    lambda_zero_limit: float
    lambda_inf: float
    lambda_inf_sq: float
    cond_L: bool
    lambda_range: tuple[float, float]
    zero_converged: bool
    inf_converged: bool
    t_window: tuple[float, float]
    flags: tuple[str, ...] = ()

    def lambda_at(self, t):
        """Pointwise Lambda(t); out-of-window t is clamped for tabulated specs."""
        return lambda_of_t(self.spec, t, clamp=True)


def _walk_limit(spec: PhiSpec, t_start: float, t_bound: float, factor: float):
    """Follow Lambda along a log-spaced t-grid toward t_bound."""
    ts = [t_start]
    while True:
        nxt = ts[-1] * factor
        if (factor > 1 and nxt > t_bound) or (factor < 1 and nxt < t_bound):
            break
        ts.append(nxt)
    ts.append(t_bound)
    vals = np.asarray(lambda_of_t(spec, np.asarray(ts), clamp=True), dtype=float)
    converged = False
    last = vals[-1]
    for i in range(1, len(vals)):
        if abs(vals[i] - vals[i - 1]) < PROFILE_LIMIT_TOL:
            converged = True
            last = vals[i]
            vals = vals[: i + 1]
            break
    return float(last), converged, vals


def lambda_profile(spec: PhiSpec) -> LambdaProfile:
    """Compute Lambda(0+), Lambda(inf), sup Lambda^2 and the cond_L flag.

    Limits are chased along log-spaced t-grids until successive values agree
    to 1e-10 or the window bound (1e+-12, clipped to the attainable range for
    tabulated weights) is hit.  A monotonicity check on the sampled Lambda^2
    guards the downstream sup-based criteria.
    """
    flags: list[str] = []
    t_lo, t_hi = 1.0 / PROFILE_T_BOUND, PROFILE_T_BOUND
    if spec.family == "tabulated":
        a, b = spec.s_range
        t_lo = max(t_lo, float(spec.s_sqrt_phi(a)))
        t_hi = min(t_hi, float(spec.s_sqrt_phi(b)))
        if t_lo >= t_hi:
            raise PreconditionError("tabulated grid covers no usable t window")
    t_mid = float(np.sqrt(t_lo * t_hi)) if spec.family == "tabulated" else 1.0

    step = 10.0 ** 0.25
    zero_val, zero_conv, v_down = _walk_limit(spec, t_mid, t_lo, 1.0 / step)
    inf_val, inf_conv, v_up = _walk_limit(spec, t_mid, t_hi, step)

    sampled = np.concatenate([v_down[::-1], v_up])
    sq = sampled**2
    rises = np.diff(sq)
    if np.any(rises < -PROFILE_MONOTONE_TOL * (1.0 + sq[:-1])):
        raise InvariantViolationError(
            "sampled Lambda^2 is not non-decreasing; the weight likely "
            "violates condition (vi)"
        )
    sgn = np.sign(sampled[np.abs(sampled) > 1e-14])
    if sgn.size and not (np.all(sgn > 0) or np.all(sgn < 0)):
        raise InvariantViolationError("sampled Lambda changes sign")

    lam_inf_sq = max(zero_val**2, inf_val**2)
    lam_inf = zero_val if zero_val**2 >= inf_val**2 else inf_val
    if not inf_conv:
        flags.append(
            f"Lambda(t) still moving at the window bound t={t_hi:g}; "
            "sup Lambda^2 is censored and cond_L cannot be certified"
        )
    if not zero_conv:
        flags.append(f"Lambda(0+) not converged at window bound t={t_lo:g}")
    cond_l = bool(inf_conv and zero_conv and lam_inf_sq < 1.0)

    if spec.r != 0 and zero_conv:
        expected = -spec.r / (spec.r + 2.0)
        if abs(zero_val - expected) > 0.05:
            warnings.warn(
                f"Lambda(0+) = {zero_val:.4g} is far from the power-regime "
                f"value {expected:.4g} suggested by r = {spec.r:g}",
                stacklevel=2,
            )
            flags.append("Lambda(0+) far from -r/(r+2)")

    return LambdaProfile(
        spec=spec,
        lambda_zero_limit=zero_val,
        lambda_inf=lam_inf,
        lambda_inf_sq=float(lam_inf_sq),
        cond_L=cond_l,
        lambda_range=(float(sampled.min()), float(sampled.max())),
        zero_converged=zero_conv,
        inf_converged=inf_conv,
        t_window=(t_lo, t_hi),
        flags=tuple(flags),
    )
