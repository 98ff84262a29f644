"""Compactly supported C^1 vector fields with exact gradients.

These drive the integral oracle: bumps probe the nonnegativity direction,
the cubic-ramp family reproduces the necessity construction (a plateau mu*om
plus a ramp toward lam, under a C^1 cutoff), and the oscillating variant
replaces the single ramp by sin(k tau) lam so the violating pointwise pair
is revisited over the whole plateau, which is what makes small negative
margins visible at finite cutoff radii.

Profiles are built in canonical coordinates tau in [-R, R] and affinely
mapped into a window inside the physical domain; gradients carry the exact
chain-rule factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, ShapeError


def cutoff(s):
    """C^1 plateau cutoff: 1 on |s| <= 1/2, 0 on |s| >= 1, quintic ramp."""
    a = np.abs(np.asarray(s, dtype=float))
    t = np.clip(2.0 * a - 1.0, 0.0, 1.0)
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def cutoff_deriv(s):
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    t = np.clip(2.0 * a - 1.0, 0.0, 1.0)
    return -30.0 * t * t * (1.0 - t) ** 2 * 2.0 * np.sign(s)


def cubic_ramp(t):
    """0 for t < 0, t^2(3 - 2t) on [0, 1], 1 past 1."""
    g = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return g * g * (3.0 - 2.0 * g)


def cubic_ramp_deriv(t):
    t = np.asarray(t, dtype=float)
    return np.where((t > 0.0) & (t < 1.0), 6.0 * t * (1.0 - t), 0.0)


@dataclass(frozen=True)
class TestFunction:
    """A C^1_c vector field with closed-form value and gradient callables.

    ``value(pts) -> (N, m) complex`` and ``grad(pts) -> (N, n, m) complex``
    for pts of shape (N, n).  ``support`` is the (n, 2) bounds array outside
    which the function vanishes.
    """

    kind: str
    m: int
    n: int
    support: np.ndarray
    value: object
    grad: object
    params: dict = field(default_factory=dict)

    def check_points(self, pts):
        pts = np.asarray(pts, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.n:
            raise ShapeError(f"points must be (N, {self.n})")
        return pts


def polynomial_bump(coeffs, support, m=None) -> TestFunction:
    """Separable bump B(x) = prod_j (xi_j (1 - xi_j))^2 times an affine
    complex polynomial c_0 + sum_j xi_j c_j, with xi the unit-box coordinates
    of the support window."""
    sup = np.asarray(support, dtype=float).reshape(-1, 2)
    n = sup.shape[0]
    c = np.asarray(coeffs, dtype=complex)
    if c.ndim == 1:
        c = np.vstack([c, np.zeros((n, c.shape[0]), dtype=complex)])
    if c.shape[0] != n + 1:
        raise ShapeError(f"coeffs must be (1 + n, m), got {c.shape}")
    m = c.shape[1]
    widths = sup[:, 1] - sup[:, 0]
    if np.any(widths <= 0):
        raise PreconditionError("support intervals must be nondegenerate")

    def _xi(pts):
        return (pts - sup[:, 0]) / widths

    def _beta(xi):
        inside = (xi > 0.0) & (xi < 1.0)
        b = np.where(inside, (xi * (1.0 - xi)) ** 2, 0.0)
        db = np.where(inside, 2.0 * xi * (1.0 - xi) * (1.0 - 2.0 * xi), 0.0)
        return b, db

    def value(pts):
        xi = _xi(np.asarray(pts, dtype=float))
        b, _ = _beta(xi)
        B = np.prod(b, axis=1)
        lin = c[0][None, :] + xi @ c[1:]
        return B[:, None] * lin

    def grad(pts):
        pts = np.asarray(pts, dtype=float)
        xi = _xi(pts)
        b, db = _beta(xi)
        B = np.prod(b, axis=1)
        lin = c[0][None, :] + xi @ c[1:]
        out = np.empty((pts.shape[0], n, m), dtype=complex)
        for j in range(n):
            others = np.prod(np.delete(b, j, axis=1), axis=1) if n > 1 else 1.0
            dB = db[:, j] * others
            out[:, j, :] = (dB[:, None] * lin + B[:, None] * c[1 + j][None, :]) \
                / widths[j]
        return out

    return TestFunction(kind="polynomial_bump", m=m, n=n, support=sup,
                        value=value, grad=grad, params={"coeffs": c})


def _plateau_profile(kind, mu, omega, lam_vec, R, axis, center, halfwidths,
                     profile_fn, profile_deriv, extra):
    omega = np.asarray(omega, dtype=complex)
    lam_vec = np.asarray(lam_vec, dtype=complex)
    m = omega.shape[0]
    center = np.atleast_1d(np.asarray(center, dtype=float))
    halfwidths = np.atleast_1d(np.asarray(halfwidths, dtype=float))
    n = center.shape[0]
    if abs(np.linalg.norm(omega) - 1.0) > 1e-9:
        raise PreconditionError("omega must be a unit vector")
    if not mu > 0 or not R > 0:
        raise PreconditionError("mu and R must be positive")
    if np.any(halfwidths <= 0):
        raise PreconditionError("window halfwidths must be positive")
    scale = halfwidths / R  # d tau / d x per axis
    sup = np.column_stack([center - halfwidths, center + halfwidths])

    def _tau(pts):
        return (pts - center) / scale

    def value(pts):
        tau = _tau(np.asarray(pts, dtype=float))
        w = mu * omega[None, :] + profile_fn(tau[:, axis])[:, None] * lam_vec[None, :]
        fac = cutoff(tau[:, axis] / R)
        for j in range(n):
            if j != axis:
                fac = fac * cutoff(tau[:, j] / R)
        return fac[:, None] * w

    def grad(pts):
        pts = np.asarray(pts, dtype=float)
        tau = _tau(pts)
        N = pts.shape[0]
        cuts = np.stack([cutoff(tau[:, j] / R) for j in range(n)], axis=1)
        dcuts = np.stack([cutoff_deriv(tau[:, j] / R) / (R * scale[j])
                          for j in range(n)], axis=1)
        w = mu * omega[None, :] + profile_fn(tau[:, axis])[:, None] * lam_vec[None, :]
        dw = (profile_deriv(tau[:, axis]) / scale[axis])[:, None] * lam_vec[None, :]
        out = np.empty((N, n, m), dtype=complex)
        for j in range(n):
            others = np.prod(np.delete(cuts, j, axis=1), axis=1) if n > 1 else \
                np.ones(N)
            if j == axis:
                out[:, j, :] = others[:, None] * (
                    dcuts[:, j, None] * w + cuts[:, j, None] * dw)
            else:
                # others already contains the axis cutoff
                out[:, j, :] = (dcuts[:, j] * others)[:, None] * w
        return out

    params = dict(mu=float(mu), omega=omega, lam_vec=lam_vec, R=float(R),
                  axis=int(axis), center=center, halfwidths=halfwidths, **extra)
    return TestFunction(kind=kind, m=m, n=n, support=sup, value=value,
                        grad=grad, params=params)


def ramp_family(mu, omega, lam_vec, R, axis=0, center=0.0, halfwidths=1.0) -> TestFunction:
    """The necessity-construction profile: mu*om for tau < 0,
    mu*om + tau^2(3 - 2 tau) lam on [0, 1], mu*om + lam past 1, multiplied by
    the C^1 cutoff at scale R (all in canonical coordinates)."""
    return _plateau_profile("ramp", mu, omega, lam_vec, R, axis, center,
                            halfwidths, cubic_ramp, cubic_ramp_deriv, {})


def oscillating_ramp(mu, omega, lam_vec, R, k, axis=0, center=0.0,
                     halfwidths=1.0) -> TestFunction:
    """Plateau profile with sin(k tau) lam in place of the single ramp."""
    if not k > 0:
        raise PreconditionError("oscillation frequency k must be positive")

    def fn(t):
        return np.sin(k * t)

    def dfn(t):
        return k * np.cos(k * t)

    return _plateau_profile("oscillating_ramp", mu, omega, lam_vec, R, axis,
                            center, halfwidths, fn, dfn, {"k": float(k)})


def oscillating_wave(mu, omega, lam_vec, R, k, q, center, halfwidths) -> TestFunction:
    """Plateau profile oscillating along an arbitrary direction q:
    v = cutoffs * (mu om + sin(k q.tau) lam).  Contracting the gradient
    terms reproduces the rank-one-symbol form with symbol direction q."""
    q = np.asarray(q, dtype=float)
    qn = np.linalg.norm(q)
    if qn == 0:
        raise PreconditionError("wave direction q must be nonzero")
    q = q / qn
    omega = np.asarray(omega, dtype=complex)
    lam_vec = np.asarray(lam_vec, dtype=complex)
    m = omega.shape[0]
    center = np.atleast_1d(np.asarray(center, dtype=float))
    halfwidths = np.atleast_1d(np.asarray(halfwidths, dtype=float))
    n = center.shape[0]
    if q.shape != (n,):
        raise ShapeError(f"q must have length {n}")
    scale = halfwidths / R
    sup = np.column_stack([center - halfwidths, center + halfwidths])

    def _tau(pts):
        return (pts - center) / scale

    def value(pts):
        tau = _tau(np.asarray(pts, dtype=float))
        phase = np.sin(k * (tau @ q))
        w = mu * omega[None, :] + phase[:, None] * lam_vec[None, :]
        fac = np.ones(tau.shape[0])
        for j in range(n):
            fac = fac * cutoff(tau[:, j] / R)
        return fac[:, None] * w

    def grad(pts):
        pts = np.asarray(pts, dtype=float)
        tau = _tau(pts)
        N = pts.shape[0]
        cuts = np.stack([cutoff(tau[:, j] / R) for j in range(n)], axis=1)
        dcuts = np.stack([cutoff_deriv(tau[:, j] / R) / (R * scale[j])
                          for j in range(n)], axis=1)
        arg = tau @ q
        w = mu * omega[None, :] + np.sin(k * arg)[:, None] * lam_vec[None, :]
        allcut = np.prod(cuts, axis=1)
        out = np.empty((N, n, m), dtype=complex)
        for j in range(n):
            others = np.prod(np.delete(cuts, j, axis=1), axis=1) if n > 1 else \
                np.ones(N)
            dphase = k * q[j] * np.cos(k * arg) / scale[j]
            out[:, j, :] = (dcuts[:, j] * others)[:, None] * w \
                + (allcut * dphase)[:, None] * lam_vec[None, :]
        return out

    return TestFunction(kind="oscillating_wave", m=m, n=n, support=sup,
                        value=value, grad=grad,
                        params=dict(mu=float(mu), omega=omega, lam_vec=lam_vec,
                                    R=float(R), k=float(k), q=q, center=center,
                                    halfwidths=halfwidths))


def sampled(value, grad, m, n, support, params=None) -> TestFunction:
    """Wrap externally supplied value/exact-gradient callbacks."""
    return TestFunction(kind="sampled", m=m, n=n,
                        support=np.asarray(support, dtype=float).reshape(-1, 2),
                        value=value, grad=grad, params=params or {})


def sqrt_phi_transform(u: TestFunction, spec) -> TestFunction:
    """v = sqrt(phi(|u|)) u with the exact chain-rule gradient.

    Used to cross-check the two integral formulations: the u-form evaluated
    on u must match the v-form evaluated on this transform.
    """

    def value(pts):
        uv = u.value(pts)
        mod = np.sqrt(np.einsum('ni,ni->n', uv, uv.conj()).real)
        ok = mod > 0
        fac = np.zeros_like(mod)
        fac[ok] = np.sqrt(spec.phi(mod[ok]))
        return fac[:, None] * uv

    def grad(pts):
        uv = u.value(pts)
        du = u.grad(pts)
        mod = np.sqrt(np.einsum('ni,ni->n', uv, uv.conj()).real)
        ok = mod > 0
        fac = np.zeros(mod.shape)
        dfac = np.zeros(mod.shape)
        fac[ok] = np.sqrt(spec.phi(mod[ok]))
        dfac[ok] = spec.dphi(mod[ok]) / (2.0 * fac[ok])
        # d|u|/dx_j = Re<u, d_j u>/|u|
        re_udu = np.einsum('ni,nji->nj', uv.conj(), du).real
        dmod = np.zeros_like(re_udu)
        dmod[ok] = re_udu[ok] / mod[ok, None]
        return fac[:, None, None] * du + \
            (dfac[:, None] * dmod)[:, :, None] * uv[:, None, :]

    return TestFunction(kind="sampled", m=u.m, n=u.n, support=u.support,
                        value=value, grad=grad,
                        params={"transform": "sqrt_phi", "base": u.kind})
