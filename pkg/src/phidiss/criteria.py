"""Algebraic quadratic forms and their minimization over unit spheres.

The central object is the pointwise form

    P(lam, om) = Re<A lam, lam> - L^2 Re<A om, om> (Re<lam, om>)^2
                 + L Re(<A om, lam> - <A lam, om>) Re<lam, om>,

with ``L`` the Lambda value (typically the sup-magnitude limit) and
``<a, b> = sum_i a_i conj(b_i)``.  Nonnegativity of P over all lam, om with
|om| = 1 characterizes dissipativity of the associated one-dimensional
operator; a kappa |lam|^2 lower bound characterizes the strict variant.

For fixed om, P is a real quadratic form in the realified lam, so the sphere
minimum over lam is the smallest eigenvalue of an explicit 2m x 2m real
symmetric matrix M(om).  The outer minimum over om is found by multi-start
projected gradient descent on the sphere with deterministic plus seeded
random starts; results are deterministic for a given seed.

Also here: the gradient-variable (strong) and rank-one-symbol (weak)
ellipticity forms, and the real-symmetric eigenvalue shortcuts
(4 mu_1 mu_m vs L^2 (mu_1 + mu_m)^2 and friends).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, ShapeError, UnsupportedRegimeError

#: starts with |margin| below this band should be labelled inconclusive by
#: callers; local minimization cannot sign a near-zero infimum.
INCONCLUSIVE_BAND = 1e-7

_PGD_MAX_ITER = 400
_PGD_STALL_ITERS = 12


# ---------------------------------------------------------------------------
# complex <-> real embeddings
# ---------------------------------------------------------------------------

def inner(a, b):
    """<a, b> = sum_i a_i conj(b_i)."""
    return complex(np.vdot(np.asarray(b), np.asarray(a)))


def realify(c):
    """C^m -> R^2m, stacking real then imaginary parts."""
    c = np.asarray(c)
    return np.concatenate([c.real, c.imag], axis=-1)


def complexify(z):
    z = np.asarray(z, dtype=float)
    m = z.shape[-1] // 2
    return z[..., :m] + 1j * z[..., m:]


def real_embed(A):
    """Real 2m x 2m representation: complexify(RE(A) @ u) == A @ complexify(u)."""
    A = np.asarray(A, dtype=complex)
    top = np.concatenate([A.real, -A.imag], axis=-1)
    bot = np.concatenate([A.imag, A.real], axis=-1)
    return np.concatenate([top, bot], axis=-2)


# ---------------------------------------------------------------------------
# the form itself
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriterionForm:
    """One or more m x m matrices bundled with the Lambda value they are
    tested at (one matrix per coordinate axis; a single one for the ODE
    case)."""

    matrices: tuple
    lambda_value: float

    def __post_init__(self):
        mats = tuple(np.asarray(a, dtype=complex) for a in self.matrices)
        if not mats:
            raise ShapeError("CriterionForm needs at least one matrix")
        m = mats[0].shape[0]
        for a in mats:
            if a.ndim != 2 or a.shape != (m, m):
                raise ShapeError(f"expected square matrices of shared size, got {a.shape}")
        object.__setattr__(self, "matrices", mats)

    @property
    def m(self) -> int:
        return self.matrices[0].shape[0]


def eval_P(form: CriterionForm, lam_vec, omega, which: int = 0) -> float:
    """Evaluate P at (lam_vec, omega) for the ``which``-th matrix.

    ``omega`` must be unit to 1e-12; ``lam_vec`` is unconstrained (P is
    2-homogeneous in it).
    """
    A = form.matrices[which]
    lam_vec = np.asarray(lam_vec, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    if lam_vec.shape != (form.m,) or omega.shape != (form.m,):
        raise ShapeError(f"vectors must have length {form.m}")
    if abs(np.linalg.norm(omega) - 1.0) > 1e-12:
        raise PreconditionError("omega must be a unit vector (within 1e-12)")
    return _eval_P_raw(A, form.lambda_value, lam_vec, omega)


def _eval_P_raw(A, lam, lam_vec, omega):
    a_ll = inner(A @ lam_vec, lam_vec).real
    a_oo = inner(A @ omega, omega).real
    r_lo = inner(lam_vec, omega).real
    asym = (inner(A @ omega, lam_vec) - inner(A @ lam_vec, omega)).real
    return a_ll - lam * lam * a_oo * r_lo * r_lo + lam * asym * r_lo


# ---------------------------------------------------------------------------
# realified inner minimization:  min over |lam|=1 of P = lambda_min(M(om))
# ---------------------------------------------------------------------------

class _RealifiedP:
    """Batched assembly of M(om) for a batch of matrices.

    With u = realify(om), H the Hermitian part of A and S the antisymmetric
    part of the real embedding,

        M(u) = RE(H) - L^2 (u^T RE(H) u) u u^T + (L/2)(S u u^T + u (S u)^T).
    """

    def __init__(self, mats, lam):
        mats = np.asarray(mats, dtype=complex)
        if mats.ndim == 2:
            mats = mats[None]
        self.B = mats.shape[0]
        self.m = mats.shape[-1]
        self.lam = float(lam)
        H = 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))
        self.M1 = np.stack([real_embed(h).real for h in H])
        RA = np.stack([real_embed(a).real for a in mats])
        self.S = RA - np.swapaxes(RA, -1, -2)

    def build(self, U, idx):
        """U: (K, 2m) unit rows; idx: instance index per row -> M: (K, 2m, 2m)."""
        M1 = self.M1[idx]
        S = self.S[idx]
        lam = self.lam
        q = np.einsum('bi,bij,bj->b', U, M1, U)
        W = np.einsum('bij,bj->bi', S, U)
        ouu = np.einsum('bi,bj->bij', U, U)
        owu = np.einsum('bi,bj->bij', W, U)
        return M1 - (lam * lam) * q[:, None, None] * ouu \
            + 0.5 * lam * (owu + np.swapaxes(owu, 1, 2))

    def value(self, U, idx):
        return np.linalg.eigvalsh(self.build(U, idx))[:, 0]

    def value_grad(self, U, idx):
        vals, vecs = np.linalg.eigh(self.build(U, idx))
        f = vals[:, 0]
        V = vecs[:, :, 0]
        lam = self.lam
        M1 = self.M1[idx]
        S = self.S[idx]
        uv = np.einsum('bi,bi->b', U, V)
        uM1u = np.einsum('bi,bij,bj->b', U, M1, U)
        M1u = np.einsum('bij,bj->bi', M1, U)
        vSu = np.einsum('bi,bij,bj->b', V, S, U)
        Sv = np.einsum('bij,bj->bi', S, V)
        g = (-2 * lam * lam) * (uv[:, None] ** 2 * M1u + (uM1u * uv)[:, None] * V) \
            + lam * (vSu[:, None] * V - uv[:, None] * Sv)
        g -= np.einsum('bi,bi->b', g, U)[:, None] * U
        return f, g, V


def _sphere_pgd(value, value_grad, U, idx, max_iter=_PGD_MAX_ITER):
    """Projected gradient descent on the unit sphere, batched rows.

    Accept/expand on improvement, halve otherwise; stops when every row
    stalls.  Deterministic: pure array arithmetic, no data-dependent
    ordering.
    """
    U = U / np.linalg.norm(U, axis=1, keepdims=True)
    step = np.full(U.shape[0], 0.5)
    f, g, V = value_grad(U, idx)
    stall = 0
    for _ in range(max_iter):
        Unew = U - step[:, None] * g
        Unew /= np.linalg.norm(Unew, axis=1, keepdims=True)
        fnew = value(Unew, idx)
        improved = fnew < f - 1e-16 * (1.0 + np.abs(f))
        U = np.where(improved[:, None], Unew, U)
        step = np.clip(np.where(improved, step * 1.3, step * 0.5), 1e-18, 10.0)
        f, g, V = value_grad(U, idx)
        if not improved.any():
            stall += 1
            if stall >= _PGD_STALL_ITERS or (step < 1e-17).all():
                break
        else:
            stall = 0
    return f, U, V


def _omega_starts(mats, starts, seed):
    """Deterministic starts (coordinate vectors, eigenvectors of the
    symmetrized real part and of the Hermitian part) plus seeded random
    ones, per instance."""
    B, m = mats.shape[0], mats.shape[-1]
    per = []
    eye = np.eye(m, dtype=complex)
    for b in range(B):
        A = mats[b]
        rows = [realify(eye[j]) for j in range(m)]
        rows += [realify(1j * eye[j]) for j in range(m)]
        sym_re = 0.5 * (A.real + A.real.T)
        _, vec = np.linalg.eigh(sym_re)
        rows += [realify(vec[:, j].astype(complex)) for j in range(m)]
        herm = 0.5 * (A + A.conj().T)
        _, vec = np.linalg.eigh(herm)
        rows += [realify(vec[:, j]) for j in range(m)]
        per.append(np.array(rows))
    det = np.stack(per)  # (B, K0, 2m)
    rng = np.random.default_rng(seed)
    rnd = rng.standard_normal((starts, 2 * m))
    rnd = np.broadcast_to(rnd, (B, starts, 2 * m))
    U = np.concatenate([det, rnd], axis=1)
    return U / np.linalg.norm(U, axis=2, keepdims=True)


@dataclass(frozen=True)
class MinPResult:
    margin: float
    lam_vec: np.ndarray
    omega: np.ndarray

    @property
    def witness(self):
        return (self.lam_vec, self.omega)


def min_P_batch(mats, lam, starts: int = 8, seed: int = 42):
    """Minimize P over |lam| = |om| = 1 for a batch of matrices at once.

    Returns (margins (B,), lam_vecs (B, m), omegas (B, m)).
    """
    mats = np.asarray(mats, dtype=complex)
    if mats.ndim == 2:
        mats = mats[None]
    if starts < 8:
        raise PreconditionError("starts must be >= 8")
    B, m = mats.shape[0], mats.shape[-1]
    pb = _RealifiedP(mats, lam)
    U = _omega_starts(mats, starts, seed)
    K = U.shape[1]
    idx = np.repeat(np.arange(B), K)
    f, Uf, Vf = _sphere_pgd(pb.value, pb.value_grad, U.reshape(B * K, 2 * m), idx)
    f = f.reshape(B, K)
    best = np.argmin(f, axis=1)  # first occurrence: stable tie-break
    rows = best + np.arange(B) * K
    margins = f[np.arange(B), best]
    lam_vecs = complexify(Vf[rows])
    omegas = complexify(Uf[rows])
    return margins, lam_vecs, omegas


def min_P(form: CriterionForm, starts: int = 8, seed: int = 42,
          which: int = 0) -> MinPResult:
    """Sphere minimum of P for one matrix of the form; see min_P_batch."""
    margins, lams, omegas = min_P_batch(form.matrices[which], form.lambda_value,
                                        starts=starts, seed=seed)
    return MinPResult(float(margins[0]), lams[0], omegas[0])


# ---------------------------------------------------------------------------
# small symmetric eigenproblems (cyclic Jacobi)
# ---------------------------------------------------------------------------

def jacobi_eigvals(A, tol: float = 1e-13, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a small real symmetric matrix by cyclic Jacobi
    rotations, ascending.  Convergent for any symmetric input; intended for
    m <= 16."""
    A = np.array(A, dtype=float, copy=True)
    m = A.shape[0]
    if A.shape != (m, m):
        raise ShapeError("jacobi_eigvals needs a square matrix")
    if m == 1:
        return A.ravel().copy()
    scale = max(np.abs(A).max(), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p, q]
                if abs(apq) <= 1e-300 * scale:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) if theta != 0 else 1.0
                t = t / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = A[:, p] * c - A[:, q] * s
                rot_q = A[:, p] * s + A[:, q] * c
                A[:, p], A[:, q] = rot_p, rot_q
                rot_p = A[p, :] * c - A[q, :] * s
                rot_q = A[p, :] * s + A[q, :] * c
                A[p, :], A[q, :] = rot_p, rot_q
    return np.sort(np.diag(A))


@dataclass(frozen=True)
class EigenSummary:
    """Extreme eigenvalues of one real symmetric coefficient matrix."""

    mu_min: float
    mu_max: float
    trace: float
    det: float | None = None  # populated for m = 2 only


def eigen_summary(A) -> EigenSummary:
    A = np.asarray(A, dtype=float)
    w = jacobi_eigvals(A)
    det = float(np.linalg.det(A)) if A.shape[0] == 2 else None
    return EigenSummary(mu_min=float(w[0]), mu_max=float(w[-1]),
                        trace=float(np.trace(A)), det=det)


# ---------------------------------------------------------------------------
# real-symmetric criteria
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymmetricVerdict:
    ok: bool
    slack: float
    note: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _require_real_symmetric(A):
    A = np.asarray(A)
    if np.iscomplexobj(A):
        if np.abs(A.imag).max() > 1e-12:
            raise PreconditionError("matrix has a non-negligible imaginary part")
        A = A.real
    A = np.asarray(A, dtype=float)
    if np.abs(A - A.T).max() > 1e-12:
        raise PreconditionError("matrix is not symmetric within 1e-12")
    return 0.5 * (A + A.T)


def symmetric_criterion(A, lambda_inf_sq: float) -> SymmetricVerdict:
    """Dissipativity test for a real symmetric positive matrix:
    L^2 (mu_1 + mu_m)^2 <= 4 mu_1 mu_m (trace/det form for m = 2)."""
    A = _require_real_symmetric(A)
    summ = eigen_summary(A)
    if summ.mu_min <= 0:
        return SymmetricVerdict(False, slack=summ.mu_min,
                                note="fails positivity (mu_1 <= 0)")
    slack_mu = 4.0 * summ.mu_min * summ.mu_max \
        - lambda_inf_sq * (summ.mu_min + summ.mu_max) ** 2
    if A.shape[0] == 2:
        slack_td = 4.0 * summ.det - lambda_inf_sq * summ.trace ** 2
        scale = max(1.0, abs(slack_td), abs(slack_mu))
        if abs(slack_td - slack_mu) > 1e-9 * scale:
            raise PreconditionError(
                "eigenvalue and trace/det forms disagree numerically: "
                f"{slack_mu} vs {slack_td}")
        slack_mu = slack_td
    return SymmetricVerdict(slack_mu >= 0.0, slack=float(slack_mu))


def strict_symmetric_criterion(field_eigs, lambda_inf_sq: float):
    """Strictness margin min over samples of
    (1 + sqrt(1-L^2)) mu_1 - (1 - sqrt(1-L^2)) mu_m; positive iff some
    kappa-shift passes.  For m = 2 the identical
    sqrt(1-L^2) tr - sqrt(tr^2 - 4 det) form is cross-checked."""
    if not lambda_inf_sq < 1.0:
        raise UnsupportedRegimeError("needs sup Lambda^2 < 1")
    root = np.sqrt(1.0 - lambda_inf_sq)
    margin = np.inf
    for e in field_eigs:
        val = (1.0 + root) * e.mu_min - (1.0 - root) * e.mu_max
        if e.det is not None:
            disc = max(e.trace**2 - 4.0 * e.det, 0.0)
            alt = root * e.trace - np.sqrt(disc)
            scale = max(1.0, abs(val))
            if abs(alt - val) > 1e-7 * scale:
                raise PreconditionError(
                    f"m=2 margin forms disagree: {val} vs {alt}")
        margin = min(margin, val)
    return bool(margin > 0.0), float(margin)


@dataclass(frozen=True)
class ProductCriterionResult:
    value: float
    necessary_holds: bool
    sufficient_holds: bool

    @property
    def verdict(self) -> str:
        if not self.necessary_holds:
            return "necessary_fails"
        return "sufficient_holds" if self.sufficient_holds else "inconclusive"


def product_criterion(field_eigs, lambda_inf_sq: float,
                      sup_mu_max: float | None = None) -> ProductCriterionResult:
    """min over samples of mu_1 mu_m - (L^2/2)(mu_1 + mu_m)^2 > 0 is
    necessary for a passing kappa-shift; it is also sufficient only under a
    finite uniform bound on <A xi, xi> (sup_mu_max)."""
    eigs = list(field_eigs)
    if any(e.mu_min <= 0 for e in eigs):
        raise PreconditionError("product criterion assumes mu_1 > 0 at all samples")
    value = min(e.mu_min * e.mu_max - 0.5 * lambda_inf_sq * (e.mu_min + e.mu_max) ** 2
                for e in eigs)
    necessary = bool(value > 0.0)
    bounded = sup_mu_max is not None and np.isfinite(sup_mu_max)
    return ProductCriterionResult(value=float(value), necessary_holds=necessary,
                                  sufficient_holds=bool(necessary and bounded))


# ---------------------------------------------------------------------------
# strong (gradient-variable) form
# ---------------------------------------------------------------------------

class _RealifiedStrong:
    """Realified assembly for the strong form at a fixed Lambda:

        S(xi, om) = sum_hk [ Re<A^hk xi_k, xi_h>
                             + L Re<(A^hk - (A^kh)^*) om, xi_h> Re<om, xi_k>
                             - L^2 Re<A^hk om, om> Re<om, xi_k> Re<om, xi_h> ]

    quadratic in the realified xi in R^{2mn}.
    """

    def __init__(self, tensor, lam):
        T = np.asarray(tensor, dtype=complex)
        n, m = T.shape[0], T.shape[-1]
        if T.shape != (n, n, m, m):
            raise ShapeError(f"tensor must be (n, n, m, m), got {T.shape}")
        self.n, self.m, self.lam = n, m, float(lam)
        self.REA = np.stack([np.stack([real_embed(T[h, k]).real for k in range(n)])
                             for h in range(n)])
        self.REA_s = 0.5 * (self.REA + np.swapaxes(self.REA, -1, -2))
        D = T - np.conj(np.swapaxes(np.swapaxes(T, 0, 1), -1, -2))
        self.RED = np.stack([np.stack([real_embed(D[h, k]).real for k in range(n)])
                             for h in range(n)])
        big = self.REA.transpose(0, 2, 1, 3).reshape(2 * m * n, 2 * m * n)
        self.M1 = 0.5 * (big + big.T)

    def build(self, U):
        """U: (B, 2m) -> (B, 2mn, 2mn)."""
        n, m, lam = self.n, self.m, self.lam
        B = U.shape[0]
        c = np.einsum('bi,hkij,bj->bhk', U, self.REA_s, U)
        d = np.einsum('hkij,bj->bhki', self.RED, U)
        T = np.broadcast_to(self.M1.reshape(n, 2 * m, n, 2 * m),
                            (B, n, 2 * m, n, 2 * m)).copy()
        T += lam * np.einsum('bhki,bj->bhikj', d, U)
        T -= (lam * lam) * np.einsum('bhk,bi,bj->bhikj', c, U, U)
        M = T.reshape(B, 2 * m * n, 2 * m * n)
        return 0.5 * (M + np.swapaxes(M, 1, 2))

    def value(self, U, idx=None):
        return np.linalg.eigvalsh(self.build(U))[:, 0]

    def value_grad(self, U, idx=None):
        n, m, lam = self.n, self.m, self.lam
        vals, vecs = np.linalg.eigh(self.build(U))
        f = vals[:, 0]
        Vflat = vecs[:, :, 0]
        V = Vflat.reshape(-1, n, 2 * m)
        uv = np.einsum('bi,bhi->bh', U, V)                       # u . v_h
        c = np.einsum('bi,hkij,bj->bhk', U, self.REA_s, U)
        dv = np.einsum('bhi,hkij,bj->bhk', V, self.RED, U)       # v_h . (RED_hk u)
        # term2 gradient: RED^T v_h (u.v_k) + (v_h.RED u) v_k
        g = lam * (np.einsum('hkij,bhi,bk->bj', self.RED, V, uv)
                   + np.einsum('bhk,bki->bi', dv, V))
        # term3 gradient: 2 REA_s u (u.v_h)(u.v_k) + c_hk [(u.v_k) v_h + (u.v_h) v_k]
        uvv = np.einsum('bh,bk->bhk', uv, uv)
        g -= (lam * lam) * (2.0 * np.einsum('hkij,bj,bhk->bi', self.REA_s, U, uvv)
                            + np.einsum('bhk,bk,bhi->bi', c, uv, V)
                            + np.einsum('bhk,bh,bki->bi', c, uv, V))
        g -= np.einsum('bi,bi->b', g, U)[:, None] * U
        return f, g, Vflat


@dataclass(frozen=True)
class StrongFormResult:
    margin: float
    xi: np.ndarray       # (n, m) complex gradient-variable witness
    omega: np.ndarray
    lambda_value: float


def lambda_sweep(lambda_range, interior: int = 17):
    """Endpoints of a Lambda interval plus evenly spaced interior samples
    (Lambda is monotone with constant sign, so its range is an interval)."""
    lo, hi = float(lambda_range[0]), float(lambda_range[1])
    if lo > hi:
        lo, hi = hi, lo
    if hi - lo < 1e-15:
        return np.array([lo])
    return np.linspace(lo, hi, interior + 2)


def strong_form_min(tensor, lambda_range, starts: int = 8, seed: int = 42) -> StrongFormResult:
    """Minimize the strong-ellipticity form over |xi| = |om| = 1 and Lambda
    in the given interval.  The inner xi minimization is the smallest
    eigenvalue of the realified 2mn x 2mn matrix; om is optimized by
    multi-start projected gradient descent; Lambda by an endpoint + interior
    sweep."""
    T = np.asarray(tensor, dtype=complex)
    if T.ndim != 4 or T.shape[0] != T.shape[1] or T.shape[2] != T.shape[3]:
        raise ShapeError(f"tensor must be (n, n, m, m), got {T.shape}")
    n, m = T.shape[0], T.shape[2]
    lams = lambda_sweep(lambda_range)
    if np.any(np.abs(lams) >= 1.0):
        raise PreconditionError("|Lambda| < 1 required over the sweep range")
    contracted = T.trace(axis1=0, axis2=1) if n > 1 else T[0, 0]
    best = None
    for lam in lams:
        sb = _RealifiedStrong(T, lam)
        U = _omega_starts(contracted[None], starts, seed)[0]
        f, Uf, Vf = _sphere_pgd(sb.value, sb.value_grad, U, None)
        k = int(np.argmin(f))
        if best is None or f[k] < best[0]:
            xi = complexify(Vf[k].reshape(n, 2 * m))
            best = (float(f[k]), xi, complexify(Uf[k]), float(lam))
    return StrongFormResult(margin=best[0], xi=best[1], omega=best[2],
                            lambda_value=best[3])


def weak_form_min(tensor, q, lambda_value: float, starts: int = 8,
                  seed: int = 42) -> MinPResult:
    """Rank-one-symbol (Legendre-Hadamard) form: contract B(q) = A^hk q_h q_k
    and minimize P on it, normalized by |q|^2."""
    T = np.asarray(tensor, dtype=complex)
    q = np.asarray(q, dtype=float)
    if T.ndim != 4 or q.shape != (T.shape[0],):
        raise ShapeError("tensor (n, n, m, m) and q of length n required")
    q2 = float(q @ q)
    if q2 == 0.0:
        raise PreconditionError("q must be nonzero")
    B = np.einsum('hkij,h,k->ij', T, q, q)
    res = min_P(CriterionForm((B,), lambda_value), starts=starts, seed=seed)
    return MinPResult(res.margin / q2, res.lam_vec, res.omega)


def per_h_tensor(mats) -> np.ndarray:
    """Embed per-axis matrices A^h as the diagonal tensor A^hk = delta_hk A^h."""
    mats = np.asarray(mats, dtype=complex)
    if mats.ndim == 2:
        mats = mats[None]
    n, m = mats.shape[0], mats.shape[-1]
    T = np.zeros((n, n, m, m), dtype=complex)
    for h in range(n):
        T[h, h] = mats[h]
    return T
