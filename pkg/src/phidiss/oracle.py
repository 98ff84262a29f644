"""Numerical evaluation of the dissipativity integrals, and counterexample
search.

The v-form integrand at a point where v does not vanish is

    sum_hk Re<A^hk d_k v, d_h v>
    + L(|v|) |v|^-2 Re<(A^hk - (A^kh)^*) v, d_h v> Re<v, d_k v>
    - L(|v|)^2 |v|^-4 Re<A^hk v, v> Re<v, d_k v> Re<v, d_h v>

(extended by zero where v vanishes); the reference side is the Dirichlet
energy of v.  Per-axis fields keep only the h = k terms.  The u-form pairs
A d_k u against d_h(phi(|u|) u); when the growth exponent is negative the
conjugate rewrite (transposed-adjoint tensor, conjugate weight) keeps the
integrand evaluable.

Quadrature is composite Simpson on a tensor grid over the test function's
support, evaluated in slabs; every integral is also accumulated on the
half-resolution subgrid and a disagreement beyond tolerance raises
QuadratureError carrying both values.

The falsifier escalates through three stages: a plain bump along a negative
direction of the Hermitian part (catches indefinite real parts at any
Lambda), the cubic-ramp sweep over (mu, R), and finally oscillating-plateau
profiles.  The ramp's cutoff tails cost energy ~ mu^2/R, which buries dips
of small magnitude at any sweepable radius; the oscillation reuses the
plateau so the dip grows with k^2 R and small violations become visible.
Any returned counterexample is re-evaluated at doubled resolution before
being accepted, so false positives cannot be produced by the search
heuristics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checker import Witness
from .errors import PreconditionError, QuadratureError, ShapeError
from .fields import CoefficientField, DomainBox
from .testfunctions import (
    TestFunction,
    oscillating_ramp,
    polynomial_bump,
    ramp_family,
)
from .weights import LambdaProfile, PhiSpec, conjugate_spec, lambda_profile

#: default Simpson intervals per axis (1-D / higher-D)
DEFAULT_POINTS_1D = 1024
DEFAULT_POINTS_ND = 64

ZERO_REL = 1e-12          # |v| below ZERO_REL * sup|v| counts as vanished
CONVERGENCE_TOL = 1e-4    # fine-vs-coarse relative disagreement threshold
MAX_SLAB = 400_000        # grid points evaluated per slab


@dataclass(frozen=True)
class QuadratureOptions:
    points_per_axis: object = None   # int, per-axis tuple, or None for defaults
    convergence_tol: float = CONVERGENCE_TOL
    check_convergence: bool = True
    zero_rel: float = ZERO_REL

    def resolve(self, n: int):
        ppa = self.points_per_axis
        if ppa is None:
            ppa = DEFAULT_POINTS_1D if n == 1 else DEFAULT_POINTS_ND
        if np.ndim(ppa) == 0:
            ppa = (int(ppa),) * n
        ppa = tuple(int(max(8, p + (-p) % 4)) for p in ppa)  # multiples of 4
        return ppa


@dataclass(frozen=True)
class FunctionalValue:
    """One evaluation of the integral form.

    ``lhs`` is the dissipativity form, ``rhs`` the reference Dirichlet
    energy; ``terms`` decomposes lhs (principal / antisymmetric / squared
    Lambda parts for the v-form).  ``lhs_coarse`` is the half-resolution
    estimate used for the convergence check.
    """

    lhs: float
    rhs: float
    terms: dict
    lhs_coarse: float
    points: tuple
    converged: bool

    def to_record(self) -> str:
        lines = ["[functional]",
                 f"lhs = {self.lhs!r}",
                 f"rhs = {self.rhs!r}",
                 f"lhs_coarse = {self.lhs_coarse!r}",
                 f"points = {','.join(str(p) for p in self.points)}",
                 f"converged = {self.converged}"]
        for k, v in self.terms.items():
            lines.append(f"term_{k} = {v!r}")
        return "\n".join(lines) + "\n"


def _simpson_axis(a: float, b: float, intervals: int):
    """Nodes plus fine and embedded half-resolution weight vectors.

    ``intervals`` must be a multiple of 4 so the even-index subgrid is a
    valid Simpson grid; the coarse weights are zero off that subgrid.
    """
    x = np.linspace(a, b, intervals + 1)
    h = (b - a) / intervals
    w = np.ones(intervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= h / 3.0
    wc = np.zeros(intervals + 1)
    wc[0] = wc[-1] = 1.0
    wc[2:-1:4] = 4.0
    wc[4:-1:4] = 2.0
    wc *= (2.0 * h) / 3.0
    return x, w, wc


def _support_inside(tf: TestFunction, box: DomainBox):
    for j, (a, b) in enumerate(box.bounds):
        lo, hi = tf.support[j]
        if lo < a - 1e-12 or hi > b + 1e-12:
            raise PreconditionError(
                f"test-function support [{lo}, {hi}] leaves the domain on axis {j}")


def _slab_iter(axes):
    """Yield (index-slices, point-block) over slabs of the tensor grid."""
    sizes = [len(ax) for ax in axes]
    rest = int(np.prod(sizes[1:])) if len(sizes) > 1 else 1
    chunk0 = max(1, MAX_SLAB // max(rest, 1))
    for start in range(0, sizes[0], chunk0):
        stop = min(sizes[0] + 0, start + chunk0)
        mesh = np.meshgrid(axes[0][start:stop], *axes[1:], indexing="ij")
        pts = np.stack([mm.ravel() for mm in mesh], axis=-1)
        yield (start, stop), pts


def _weights_block(wlist, start, stop):
    w = wlist[0][start:stop]
    for wj in wlist[1:]:
        w = np.multiply.outer(w, wj)
    return w.ravel()


class _VFormTerms:
    """Accumulate the three v-form terms and the Dirichlet energy."""

    def __init__(self):
        self.vals = np.zeros((2, 4))  # (fine/coarse) x (t1, t2, t3, rhs)

    def add(self, field, lam_pts, v, dv, wf, wc, mask):
        conj_dv = dv.conj()
        nv2 = np.einsum('ni,ni->n', v, v.conj()).real
        inv2 = np.zeros_like(nv2)
        inv2[mask] = 1.0 / nv2[mask]
        re_vdv = np.einsum('ni,nhi->nh', v.conj(), dv).real  # Re<v, d_h v>
        if field.ndim == 4:  # per-axis (N, n, m, m)
            t1 = np.einsum('nhij,nhj,nhi->n', field, dv, conj_dv).real
            D = field - np.conj(np.swapaxes(field, -1, -2))
            asym = np.einsum('nhij,nj,nhi->nh', D, v, conj_dv).real
            t2 = lam_pts * inv2 * np.einsum('nh,nh->n', asym, re_vdv)
            vAv = np.einsum('nhij,nj,ni->nh', field, v, v.conj()).real
            t3 = -lam_pts**2 * inv2**2 * np.einsum('nh,nh,nh->n', vAv,
                                                   re_vdv, re_vdv)
        else:  # tensor (N, n, n, m, m)
            t1 = np.einsum('nhkij,nkj,nhi->n', field, dv, conj_dv).real
            D = field - np.conj(np.swapaxes(np.swapaxes(field, 1, 2), -1, -2))
            asym = np.einsum('nhkij,nj,nhi->nhk', D, v, conj_dv).real
            t2 = lam_pts * inv2 * np.einsum('nhk,nk->n', asym, re_vdv)
            vAv = np.einsum('nhkij,nj,ni->nhk', field, v, v.conj()).real
            t3 = -lam_pts**2 * inv2**2 * np.einsum('nhk,nk,nh->n', vAv,
                                                   re_vdv, re_vdv)
        dir_e = np.einsum('nhi,nhi->n', dv, conj_dv).real
        t1 = np.where(mask, t1, 0.0)
        rhs = dir_e  # reference energy keeps every point
        for row, w in ((0, wf), (1, wc)):
            self.vals[row, 0] += float(w @ t1)
            self.vals[row, 1] += float(w @ t2)
            self.vals[row, 2] += float(w @ t3)
            self.vals[row, 3] += float(w @ rhs)


def _eval_quadrature(field: CoefficientField, box: DomainBox, tf: TestFunction,
                     opts: QuadratureOptions, integrand) -> FunctionalValue:
    if field.n != tf.n:
        raise ShapeError("field and test function dimensions disagree")
    if field.m != tf.m:
        raise ShapeError("field and test function sizes disagree")
    if tf.n > 3:
        raise PreconditionError("tensor-product quadrature supports n <= 3")
    _support_inside(tf, box)
    ppa = opts.resolve(tf.n)
    axes, wf_list, wc_list = [], [], []
    for j in range(tf.n):
        x, w, wc = _simpson_axis(tf.support[j, 0], tf.support[j, 1], ppa[j])
        axes.append(x)
        wf_list.append(w)
        wc_list.append(wc)

    # first pass: sup |v| for the vanishing threshold; second pass: accumulate
    sup_v = 0.0
    for _, pts in _slab_iter(axes):
        v = tf.value(pts)
        sup_v = max(sup_v, float(np.abs(v).max(initial=0.0)))
    thr2 = (opts.zero_rel * max(sup_v, 1e-300)) ** 2
    acc = integrand["make"]()
    for (start, stop), pts in _slab_iter(axes):
        v = tf.value(pts)
        dv = tf.grad(pts)
        mats = field.eval_on(pts)
        nv2 = np.einsum('ni,ni->n', v, v.conj()).real
        mask = nv2 > thr2
        wf = _weights_block(wf_list, start, stop)
        wc = _weights_block(wc_list, start, stop)
        integrand["add"](acc, mats, pts, v, dv, wf, wc, mask)

    lhs_f, lhs_c, rhs, terms = integrand["finish"](acc)
    scale = max(abs(lhs_f), rhs, 1e-300)
    converged = abs(lhs_f - lhs_c) <= opts.convergence_tol * scale
    if opts.check_convergence and not converged:
        raise QuadratureError(
            "quadrature estimates disagree between refinement levels; "
            "increase points_per_axis",
            estimates=(lhs_f, lhs_c))
    return FunctionalValue(lhs=lhs_f, rhs=rhs, terms=terms, lhs_coarse=lhs_c,
                           points=ppa, converged=converged)


def eval_functional_v(field: CoefficientField, box: DomainBox,
                      profile: LambdaProfile, v: TestFunction,
                      opts: QuadratureOptions = QuadratureOptions()) -> FunctionalValue:
    """The v-form integral and its Dirichlet reference energy."""
    lam_const = None
    if profile.spec.family == "power":
        lam_const = profile.lambda_inf

    def add(acc, mats, pts, vv, dv, wf, wc, mask):
        if lam_const is not None:
            lam_pts = np.full(vv.shape[0], lam_const)
        else:
            mod = np.sqrt(np.einsum('ni,ni->n', vv, vv.conj()).real)
            lam_pts = np.zeros_like(mod)
            lam_pts[mask] = profile.lambda_at(mod[mask])
        acc.add(mats, lam_pts, vv, dv, wf, wc, mask)

    def finish(acc):
        t1f, t2f, t3f, rhsf = acc.vals[0]
        lhs_f = t1f + t2f + t3f
        lhs_c = float(acc.vals[1, :3].sum())
        terms = {"principal": t1f, "antisymmetric": t2f, "lambda_sq": t3f}
        return lhs_f, lhs_c, rhsf, terms

    return _eval_quadrature(field, box, v, opts, {
        "make": _VFormTerms, "add": add, "finish": finish})


class _UFormAcc:
    def __init__(self):
        self.vals = np.zeros((2, 2))  # (fine/coarse) x (lhs, rhs)


def eval_functional_u(field: CoefficientField, box: DomainBox, spec: PhiSpec,
                      u: TestFunction,
                      opts: QuadratureOptions = QuadratureOptions()) -> FunctionalValue:
    """The u-form: Re int <A^hk d_k u, d_h(phi(|u|) u)> against
    int |grad(sqrt(phi(|u|)) u)|^2.

    For negative growth exponents the conjugate rewrite is applied: the
    given function is paired with the transposed-adjoint coefficients and
    the conjugate weight, which has positive exponent.
    """
    if spec.r < 0:
        spec = conjugate_spec(spec)
        field = _adjoint_field(field)

    r = spec.r
    phi0 = float(spec.phi(1e-8)) if r == 0 else 0.0

    def add(acc, mats, pts, uu, du, wf, wc, mask):
        mod = np.sqrt(np.einsum('ni,ni->n', uu, uu.conj()).real)
        phi = np.zeros_like(mod)
        dphi = np.zeros_like(mod)
        phi[mask] = spec.phi(mod[mask])
        dphi[mask] = spec.dphi(mod[mask])
        if r == 0:
            phi[~mask] = phi0
        re_udu = np.einsum('ni,nhi->nh', uu.conj(), du).real
        dmod_u = np.zeros_like(re_udu)
        dmod_u[mask] = re_udu[mask] / mod[mask, None]
        # d_h(phi(|u|) u) = phi d_h u + phi' (d_h|u|) u
        dw = phi[:, None, None] * du + \
            (dphi[:, None] * dmod_u)[:, :, None] * uu[:, None, :]
        sqrt_phi = np.sqrt(phi)
        dsq = np.zeros_like(mod)
        dsq[mask] = dphi[mask] / (2.0 * np.maximum(sqrt_phi[mask], 1e-300))
        dv = sqrt_phi[:, None, None] * du + \
            (dsq[:, None] * dmod_u)[:, :, None] * uu[:, None, :]
        if mats.ndim == 4:
            lhs = np.einsum('nhij,nhj,nhi->n', mats, du, dw.conj()).real
        else:
            lhs = np.einsum('nhkij,nkj,nhi->n', mats, du, dw.conj()).real
        rhs = np.einsum('nhi,nhi->n', dv, dv.conj()).real
        for row, w in ((0, wf), (1, wc)):
            acc.vals[row, 0] += float(w @ lhs)
            acc.vals[row, 1] += float(w @ rhs)

    def finish(acc):
        lhs_f, rhs_f = acc.vals[0]
        lhs_c = float(acc.vals[1, 0])
        return lhs_f, lhs_c, rhs_f, {"form": lhs_f}

    return _eval_quadrature(field, box, u, opts, {
        "make": _UFormAcc, "add": add, "finish": finish})


def _adjoint_field(field: CoefficientField) -> CoefficientField:
    """A^hk -> (A^kh)^* (per-axis: (A^h)^*)."""
    if field.kind == "constant_per_h":
        return CoefficientField.constant_per_h(
            np.conj(np.swapaxes(field.data, -1, -2)))
    if field.kind == "constant_tensor":
        return CoefficientField.constant_tensor(
            np.conj(np.swapaxes(np.swapaxes(field.data, 0, 1), -1, -2)))
    if field.kind == "grid_per_h":
        out = CoefficientField("grid_per_h", field.m, field.n,
                               data=np.conj(np.swapaxes(field.data, -1, -2)),
                               axes=field.axes)
        return out
    return CoefficientField.callback(
        lambda pts, _f=field: np.conj(np.swapaxes(
            _f.eval_on(np.atleast_2d(pts)), -1, -2)),
        field.m, field.n, vectorized=True)


# ---------------------------------------------------------------------------
# counterexample search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FalsifyBudget:
    ramp_mus: tuple = (10.0, 1e2, 1e3, 1e4)
    ramp_radii: tuple = (10.0, 1e2, 1e3)
    osc_configs: tuple | None = None   # (mu, k, R) triples; None = per-n default
    stages: tuple = ("bump", "ramp", "oscillation")
    threshold: float = 1e-9

    def resolved_osc(self, n: int):
        if self.osc_configs is not None:
            return self.osc_configs
        if n == 1:
            return ((1e2, 20.0, 1e2), (1e2, 60.0, 3e2), (3e2, 200.0, 1e3))
        if n == 2:
            return ((1e2, 20.0, 1e2), (1e2, 60.0, 3e2), (2e2, 100.0, 6e2))
        return ((1e2, 20.0, 1e2), (1e2, 40.0, 2e2))


@dataclass(frozen=True)
class FalsificationResult:
    test_function: TestFunction
    value: FunctionalValue
    value_refined: FunctionalValue
    stage: str
    params: dict


def _window(box: DomainBox, x):
    """A window around x strictly inside the box (unbounded sides get unit
    halfwidth); the center shifts inward when x sits on the boundary."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    centers, halfs = [], []
    for j, (a, b) in enumerate(box.bounds):
        if np.isfinite(a) and np.isfinite(b):
            half = 0.25 * (b - a)
        else:
            half = 1.0
        lo = a + half if np.isfinite(a) else -np.inf
        hi = b - half if np.isfinite(b) else np.inf
        centers.append(float(np.clip(x[j], lo, hi)))
        halfs.append(0.999 * half)
    return np.array(centers), np.array(halfs)


def _osc_points(k: float, R: float, n: int):
    axial = int(k * 2 * R / (2 * np.pi) * 12)
    axial = max(4096, min(axial, 2_000_000))
    return (axial,) + (DEFAULT_POINTS_ND,) * (n - 1)


def _axis_ordered_points(pts_axial, n, axis):
    out = [DEFAULT_POINTS_ND] * n
    out[axis] = pts_axial
    return tuple(out)


def falsify(field: CoefficientField, box: DomainBox, profile: LambdaProfile,
            witness: Witness, budget: FalsifyBudget = FalsifyBudget()):
    """Search for a test function driving the v-form integral negative.

    Returns a FalsificationResult (whose value re-evaluated at doubled
    resolution stays negative) or None when the budget is exhausted --
    absence of a counterexample is a legitimate outcome.
    """
    if witness is None or witness.lam_vec is None or witness.omega is None:
        raise PreconditionError("falsify needs a witness with a (lambda, omega) pair")
    h = witness.h
    omega = np.asarray(witness.omega, dtype=complex)
    omega = omega / np.linalg.norm(omega)
    lam_vec = np.asarray(witness.lam_vec, dtype=complex)
    center, halfs = _window(box, witness.x)
    n = field.n

    def attempt(tf, stage, params, points):
        opts = QuadratureOptions(points_per_axis=points)
        try:
            val = eval_functional_v(field, box, profile, tf, opts)
        except QuadratureError:
            return None
        if val.lhs < -budget.threshold * max(val.rhs, 1.0):
            fine = QuadratureOptions(
                points_per_axis=tuple(2 * p for p in val.points))
            try:
                refined = eval_functional_v(field, box, profile, tf, fine)
            except QuadratureError:
                return None
            if refined.lhs < 0:
                return FalsificationResult(tf, val, refined, stage, params)
        return None

    if "bump" in budget.stages:
        mats = field.matrices_at(np.asarray(witness.x))
        mats = mats.reshape(-1, field.m, field.m)
        H = 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))
        wvals, wvecs = np.linalg.eigh(H)
        worst = int(np.argmin(wvals[:, 0]))
        if wvals[worst, 0] < 0:
            c = wvecs[worst][:, 0]
            sup = np.column_stack([center - halfs, center + halfs])
            tf = polynomial_bump(c, sup)
            res = attempt(tf, "bump", {"direction": c},
                          1024 if n == 1 else DEFAULT_POINTS_ND)
            if res is not None:
                return res

    if "ramp" in budget.stages:
        for mu in budget.ramp_mus:
            for R in budget.ramp_radii:
                tf = ramp_family(mu, omega, lam_vec, R, axis=h, center=center,
                                 halfwidths=halfs)
                # the ramp window [0, 1] must stay resolved at large R
                pts_ax = max(8192, min(int(24 * R), 32768))
                res = attempt(tf, "ramp", {"mu": mu, "R": R},
                              pts_ax if n == 1 else
                              _axis_ordered_points(min(pts_ax, 16384), n, h))
                if res is not None:
                    return res

    if "oscillation" in budget.stages:
        for (mu, k, R) in budget.resolved_osc(n):
            tf = oscillating_ramp(mu, omega, lam_vec, R, k, axis=h,
                                  center=center, halfwidths=halfs)
            pts = _osc_points(k, R, n)
            if n > 1:
                pts = _axis_ordered_points(pts[0], n, h)
            res = attempt(tf, "oscillation", {"mu": mu, "k": k, "R": R}, pts)
            if res is not None:
                return res
    return None


def dump_test_function(tf: TestFunction, path, points_per_axis: int = 64) -> None:
    """CSV dump (coordinates, then Re/Im per component) for plotting."""
    axes = [np.linspace(tf.support[j, 0], tf.support[j, 1], points_per_axis)
            for j in range(tf.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([mm.ravel() for mm in mesh], axis=-1)
    vals = tf.value(pts)
    cols = [f"x{j+1}" for j in range(tf.n)]
    cols += [f"re_v{i+1}" for i in range(tf.m)] + [f"im_v{i+1}" for i in range(tf.m)]
    with open(path, "w", newline="") as f:
        f.write(",".join(cols) + "\n")
        for row_x, row_v in zip(pts, vals):
            parts = [repr(float(c)) for c in row_x]
            parts += [repr(float(z.real)) for z in row_v]
            parts += [repr(float(z.imag)) for z in row_v]
            f.write(",".join(parts) + "\n")
