"""Coefficient fields A^h(x) (or tensors A^hk(x)) over box domains.

Fields are immutable after construction and can be sampled concurrently.
Essential infima over the domain are approximated by minima over the sample
grid throughout the package; every verdict downstream is certified at those
points only.

The on-disk format is CSV-compatible structured text:

    m,n,kind[,g1,...,gn]          header; kind in {constant, grid, tensor}
    h,i,j,re,im                   constant per-axis rows (1-based indices)
    h,i,j,k1,...,kn,re,im         grid rows (k are 1-based grid indices)
    h,k,i,j,re,im                 tensor rows

Floats are serialized with repr so canonical files round-trip bit-for-bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import FieldFormatError, PreconditionError, ShapeError

DEFAULT_GRID_1D = 256
DEFAULT_GRID_ND = 64

#: sentinel returned by slice_field when the transverse point misses the box
EMPTY_SLICE = object()


@dataclass(frozen=True)
class DomainBox:
    """An axis-aligned box with per-axis sample counts.

    Unbounded axes (inf endpoints) are sampled through an arctan stretch;
    a warning is emitted because grid minima can then miss far-field
    behaviour.
    """

    bounds: tuple
    grid: tuple

    def __init__(self, bounds, grid=None):
        bounds = tuple((float(a), float(b)) for a, b in bounds)
        for a, b in bounds:
            if not a < b:
                raise PreconditionError(f"empty interval [{a}, {b}]")
        n = len(bounds)
        if grid is None:
            grid = tuple([DEFAULT_GRID_1D] * n if n == 1 else [DEFAULT_GRID_ND] * n)
        else:
            grid = tuple(int(g) for g in grid)
            if len(grid) != n:
                raise ShapeError("grid must give one count per axis")
        if any(g < 3 for g in grid):
            raise PreconditionError("at least 3 sample points per axis")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "grid", grid)

    @property
    def n(self) -> int:
        return len(self.bounds)

    @property
    def is_bounded(self) -> bool:
        return all(np.isfinite(a) and np.isfinite(b) for a, b in self.bounds)

    def axis_points(self, j: int) -> np.ndarray:
        a, b = self.bounds[j]
        g = self.grid[j]
        if np.isfinite(a) and np.isfinite(b):
            return np.linspace(a, b, g)
        warnings.warn(
            f"axis {j} is unbounded; sampling through an arctan stretch",
            stacklevel=2,
        )
        if not np.isfinite(a) and not np.isfinite(b):
            th = np.linspace(-np.pi / 2, np.pi / 2, g + 2)[1:-1]
            return np.tan(th)
        if np.isfinite(a):
            th = np.linspace(0.0, np.pi / 2, g + 1)[:-1]
            return a + np.tan(th)
        th = np.linspace(0.0, np.pi / 2, g + 1)[:-1]
        return b - np.tan(th)[::-1]

    def grid_points(self) -> np.ndarray:
        """All sample points, row-major, shape (prod(grid), n)."""
        axes = [self.axis_points(j) for j in range(self.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def contains(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return all(a <= xi <= b for xi, (a, b) in zip(x, self.bounds))

    def project_out(self, h: int):
        """The (n-1)-dimensional box transverse to axis h."""
        keep = [self.bounds[j] for j in range(self.n) if j != h]
        kept_grid = [self.grid[j] for j in range(self.n) if j != h]
        if not keep:
            return None
        return DomainBox(keep, kept_grid)


class CoefficientField:
    """Matrix coefficients over a domain.

    Kinds:
      * ``constant_per_h``: one m x m matrix per axis, constant in x.
      * ``grid_per_h``: per-axis matrices stored on the sample grid
        (piecewise constant off-grid: nearest sample).
      * ``constant_tensor``: a full A^hk block tensor, constant in x.
      * ``callback``: a black-box x -> (n, m, m) evaluator.
    """

    def __init__(self, kind, m, n, data=None, func=None, vectorized=False,
                 axes=None):
        if kind not in ("constant_per_h", "grid_per_h", "constant_tensor", "callback"):
            raise PreconditionError(f"unknown field kind {kind!r}")
        self.kind = kind
        self.m = int(m)
        self.n = int(n)
        self.data = data
        self.func = func
        self.vectorized = vectorized
        self.axes = axes  # grid axes for grid_per_h lookup
        if kind != "callback" and not np.all(np.isfinite(np.asarray(data))):
            raise PreconditionError("coefficient entries must be finite")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def constant_per_h(mats) -> "CoefficientField":
        mats = np.asarray(mats, dtype=complex)
        if mats.ndim == 2:
            mats = mats[None]
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ShapeError(f"expected (n, m, m) matrices, got {mats.shape}")
        return CoefficientField("constant_per_h", mats.shape[1], mats.shape[0],
                                data=mats)

    @staticmethod
    def grid_per_h(values, box: DomainBox) -> "CoefficientField":
        values = np.asarray(values, dtype=complex)
        n = box.n
        expect = tuple(box.grid) + (n,)
        if values.shape[:-2] != expect or values.shape[-1] != values.shape[-2]:
            raise ShapeError(
                f"grid field must have shape {expect + ('m', 'm')}, got {values.shape}")
        axes = tuple(box.axis_points(j) for j in range(n))
        return CoefficientField("grid_per_h", values.shape[-1], n, data=values,
                                axes=axes)

    @staticmethod
    def constant_tensor(tensor) -> "CoefficientField":
        t = np.asarray(tensor, dtype=complex)
        if t.ndim != 4 or t.shape[0] != t.shape[1] or t.shape[2] != t.shape[3]:
            raise ShapeError(f"expected (n, n, m, m) tensor, got {t.shape}")
        return CoefficientField("constant_tensor", t.shape[2], t.shape[0], data=t)

    @staticmethod
    def callback(func, m, n, vectorized=False) -> "CoefficientField":
        return CoefficientField("callback", m, n, func=func, vectorized=vectorized)

    # -- evaluation ----------------------------------------------------------

    @property
    def is_per_h(self) -> bool:
        return self.kind in ("constant_per_h", "grid_per_h", "callback")

    @property
    def is_constant(self) -> bool:
        return self.kind in ("constant_per_h", "constant_tensor")

    def matrices_at(self, x) -> np.ndarray:
        """Per-axis matrices (n, m, m) at one point (tensor kind: (n,n,m,m))."""
        return self.eval_on(np.atleast_2d(np.asarray(x, dtype=float)))[0]

    def eval_on(self, points) -> np.ndarray:
        """Vectorized evaluation on (N, n) points -> (N, n, m, m) per-axis
        stacks ((N, n, n, m, m) for the tensor kind)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.n:
            raise ShapeError(f"points must be (N, {self.n})")
        N = pts.shape[0]
        if self.kind == "constant_per_h":
            return np.broadcast_to(self.data, (N,) + self.data.shape)
        if self.kind == "constant_tensor":
            return np.broadcast_to(self.data, (N,) + self.data.shape)
        if self.kind == "grid_per_h":
            idx = tuple(
                np.clip(np.searchsorted(
                    0.5 * (ax[1:] + ax[:-1]), pts[:, j]), 0, len(ax) - 1)
                for j, ax in enumerate(self.axes))
            return self.data[idx]
        out = self.func(pts) if self.vectorized else np.stack(
            [np.asarray(self.func(p), dtype=complex) for p in pts])
        out = np.asarray(out, dtype=complex)
        if out.shape != (N, self.n, self.m, self.m):
            bad = pts[0] if out.ndim < 2 else pts[0]
            raise ShapeError(
                f"callback returned shape {out.shape}, expected "
                f"{(N, self.n, self.m, self.m)} (first offending x = {bad})")
        return out


def sample_field(field: CoefficientField, box: DomainBox):
    """Yield (x, matrices) over every grid point in row-major order."""
    if box.n != field.n:
        raise ShapeError("field and box dimensions disagree")
    pts = box.grid_points()
    mats = field.eval_on(pts)
    for x, a in zip(pts, mats):
        yield x, a


def slice_field(field: CoefficientField, box: DomainBox, h: int, y_h):
    """Restrict a per-axis field to the 1-D line along axis h through the
    transverse point y_h.

    Returns (field_1d, interval_box) or EMPTY_SLICE when y_h misses the
    projected box (the criterion is void there).
    """
    if not 0 <= h < field.n:
        raise IndexError(f"axis {h} out of range for n = {field.n}")
    if not field.is_per_h:
        raise PreconditionError("slicing applies to per-axis fields")
    y = np.atleast_1d(np.asarray(y_h, dtype=float))
    if y.shape != (field.n - 1,):
        raise ShapeError(f"y_h must have length {field.n - 1}")
    proj = box.project_out(h)
    if proj is not None and not proj.contains(y):
        return EMPTY_SLICE
    line_box = DomainBox([box.bounds[h]], [box.grid[h]])
    if field.kind == "constant_per_h":
        return CoefficientField.constant_per_h(field.data[h][None]), line_box
    if field.n == 1:
        return field, line_box

    def embed(ts):
        full = np.empty((len(ts), field.n))
        cols = [j for j in range(field.n) if j != h]
        full[:, cols] = y
        full[:, h] = ts[:, 0]
        return full

    if field.kind == "grid_per_h":
        idx = tuple(
            np.clip(np.searchsorted(0.5 * (ax[1:] + ax[:-1]), y[c]), 0, len(ax) - 1)
            for c, ax in enumerate(a for j, a in enumerate(field.axes) if j != h))
        taker = [slice(None)] * field.n
        for c, j in enumerate(jj for jj in range(field.n) if jj != h):
            taker[j] = idx[c]
        line = field.data[tuple(taker)][:, h]  # (g_h, m, m)
        vals = line[:, None]                   # (g_h, 1, m, m)
        line_only = DomainBox([box.bounds[h]], [box.grid[h]])
        return CoefficientField.grid_per_h(vals, line_only), line_box

    def f1d(pts1):
        return field.eval_on(embed(np.atleast_2d(pts1)))[:, h][:, None]

    return CoefficientField.callback(f1d, field.m, 1, vectorized=True), line_box


# ---------------------------------------------------------------------------
# file round trip
# ---------------------------------------------------------------------------

def save_field(field: CoefficientField, path) -> None:
    if field.kind == "callback":
        raise PreconditionError("callback fields have no serialized form")
    lines = []
    if field.kind == "constant_per_h":
        lines.append(f"{field.m},{field.n},constant")
        for h in range(field.n):
            for i in range(field.m):
                for j in range(field.m):
                    z = field.data[h, i, j]
                    lines.append(f"{h+1},{i+1},{j+1},{float(z.real)!r},{float(z.imag)!r}")
    elif field.kind == "constant_tensor":
        lines.append(f"{field.m},{field.n},tensor")
        for h in range(field.n):
            for k in range(field.n):
                for i in range(field.m):
                    for j in range(field.m):
                        z = field.data[h, k, i, j]
                        lines.append(
                            f"{h+1},{k+1},{i+1},{j+1},{float(z.real)!r},{float(z.imag)!r}")
    else:
        shape = field.data.shape[:-3]
        lines.append(f"{field.m},{field.n},grid," + ",".join(str(g) for g in shape))
        for h in range(field.n):
            for i in range(field.m):
                for j in range(field.m):
                    for kidx in np.ndindex(*shape):
                        z = field.data[kidx + (h, i, j)]
                        ks = ",".join(str(k + 1) for k in kidx)
                        lines.append(
                            f"{h+1},{i+1},{j+1},{ks},{float(z.real)!r},{float(z.imag)!r}")
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")


def _parse_float(tok: str, lineno: int, col: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise FieldFormatError(f"bad numeric literal {tok!r}", line=lineno,
                               column=col) from None


def load_field(path_or_lines, box: DomainBox | None = None) -> CoefficientField:
    """Parse the field file format; grid fields need the box for axis data."""
    if isinstance(path_or_lines, (list, tuple)):
        lines = list(path_or_lines)
    else:
        with open(path_or_lines) as f:
            lines = f.read().splitlines()
    lines = [ln.strip() for ln in lines if ln.strip()]
    if not lines:
        raise FieldFormatError("empty field file", line=1)
    head = [t.strip() for t in lines[0].split(",")]
    if len(head) < 3:
        raise FieldFormatError("header needs m,n,kind", line=1)
    try:
        m, n = int(head[0]), int(head[1])
    except ValueError:
        raise FieldFormatError("header m,n must be integers", line=1) from None
    kind = head[2]
    if kind == "constant":
        data = np.zeros((n, m, m), dtype=complex)
        seen = np.zeros((n, m, m), dtype=bool)
        for lineno, ln in enumerate(lines[1:], start=2):
            toks = [t.strip() for t in ln.split(",")]
            if len(toks) != 5:
                raise FieldFormatError(
                    f"constant rows need 5 fields, got {len(toks)}", line=lineno)
            h, i, j = (int(t) - 1 for t in toks[:3])
            if not (0 <= h < n and 0 <= i < m and 0 <= j < m):
                raise FieldFormatError(f"index out of range in {ln!r}", line=lineno)
            re = _parse_float(toks[3], lineno, 4)
            im = _parse_float(toks[4], lineno, 5)
            data[h, i, j] = complex(re, im)
            seen[h, i, j] = True
        if not seen.all():
            raise FieldFormatError("file does not cover every (h, i, j) entry")
        return CoefficientField.constant_per_h(data)
    if kind == "tensor":
        data = np.zeros((n, n, m, m), dtype=complex)
        for lineno, ln in enumerate(lines[1:], start=2):
            toks = [t.strip() for t in ln.split(",")]
            if len(toks) != 6:
                raise FieldFormatError(
                    f"tensor rows need 6 fields, got {len(toks)}", line=lineno)
            h, k, i, j = (int(t) - 1 for t in toks[:4])
            re = _parse_float(toks[4], lineno, 5)
            im = _parse_float(toks[5], lineno, 6)
            data[h, k, i, j] = complex(re, im)
        return CoefficientField.constant_tensor(data)
    if kind == "grid":
        if box is None:
            raise PreconditionError("grid fields need the domain box to load")
        shape = tuple(int(t) for t in head[3:])
        if not shape or shape != tuple(box.grid):
            raise FieldFormatError(
                f"grid shape {shape} does not match the box grid {box.grid}", line=1)
        data = np.zeros(shape + (n, m, m), dtype=complex)
        for lineno, ln in enumerate(lines[1:], start=2):
            toks = [t.strip() for t in ln.split(",")]
            if len(toks) != 5 + n:
                raise FieldFormatError(
                    f"grid rows need {5 + n} fields, got {len(toks)}", line=lineno)
            h, i, j = (int(t) - 1 for t in toks[:3])
            kidx = tuple(int(t) - 1 for t in toks[3:3 + n])
            re = _parse_float(toks[3 + n], lineno, 4 + n)
            im = _parse_float(toks[4 + n], lineno, 5 + n)
            try:
                data[kidx + (h, i, j)] = complex(re, im)
            except IndexError:
                raise FieldFormatError(f"index out of range in {ln!r}",
                                       line=lineno) from None
        return CoefficientField.grid_per_h(data, box)
    raise FieldFormatError(f"unknown kind {kind!r}", line=1)
