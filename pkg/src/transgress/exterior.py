"""Alternating forms at points, wedge/evaluation, numerical d, pullbacks, quadrature.

All arrays carry arbitrary leading batch dimensions: a ``FormValue`` with
``coeffs.shape == (B1, B2, C)`` holds ``B1*B2`` form values at once.  Coefficient
slot ``c`` corresponds to ``combinations(dim, degree)[c]`` (0-based, strictly
increasing index tuples).
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import ArityMismatch, DegreeMismatch, DimensionMismatch, StencilOutsideDomain

DEFAULT_STEP = 1e-4


@lru_cache(maxsize=None)
def combinations(dim: int, k: int) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.combinations(range(dim), k))


@lru_cache(maxsize=None)
def _combo_lookup(dim: int, k: int) -> dict[tuple[int, ...], int]:
    return {c: i for i, c in enumerate(combinations(dim, k))}


def _sort_sign(seq: Sequence[int]) -> int:
    """Sign of the permutation sorting ``seq`` (distinct entries)."""
    s = 1
    seq = list(seq)
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                s = -s
    return s


@lru_cache(maxsize=None)
def _wedge_table(dim: int, p: int, q: int):
    # Every output (p+q)-combo splits into exactly C(p+q, p) ordered (I, J) pairs,
    # so the table is rectangular: (n_out, n_terms).
    out = combinations(dim, p + q)
    lookup_p = _combo_lookup(dim, p)
    lookup_q = _combo_lookup(dim, q)
    n_terms = math.comb(p + q, p)
    ia = np.zeros((len(out), n_terms), dtype=np.intp)
    ib = np.zeros((len(out), n_terms), dtype=np.intp)
    sg = np.zeros((len(out), n_terms))
    for r, K in enumerate(out):
        for t, pos in enumerate(itertools.combinations(range(p + q), p)):
            I = tuple(K[x] for x in pos)
            J = tuple(K[x] for x in range(p + q) if x not in pos)
            ia[r, t] = lookup_p[I]
            ib[r, t] = lookup_q[J]
            sg[r, t] = _sort_sign(I + J)
    return ia, ib, sg


@dataclass(frozen=True)
class FormValue:
    """Value of an alternating ``degree``-form on R^dim (possibly batched)."""

    degree: int
    dim: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        expected = math.comb(self.dim, self.degree) if self.degree <= self.dim else 0
        if c.ndim == 0 or c.shape[-1] != expected:
            raise DimensionMismatch(
                f"degree-{self.degree} form on R^{self.dim} needs {expected} coefficients, got shape {c.shape}"
            )
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, degree: int, dim: int, batch_shape: tuple[int, ...] = ()) -> "FormValue":
        n = math.comb(dim, degree) if degree <= dim else 0
        return cls(degree, dim, np.zeros(batch_shape + (n,)))

    @classmethod
    def scalar(cls, value, dim: int) -> "FormValue":
        return cls(0, dim, np.asarray(value, dtype=float)[..., None])

    @classmethod
    def basis(cls, index: int, dim: int, batch_shape: tuple[int, ...] = ()) -> "FormValue":
        """The coordinate 1-form dx_index (0-based)."""
        c = np.zeros(batch_shape + (dim,))
        c[..., index] = 1.0
        return cls(1, dim, c)

    @classmethod
    def from_dict(cls, degree: int, dim: int, entries: dict) -> "FormValue":
        """Build from ``{(i1, .., ik): value}`` with 1-based, strictly increasing tuples."""
        f = cls.zero(degree, dim)
        lookup = _combo_lookup(dim, degree)
        for key, val in entries.items():
            key0 = tuple(int(i) - 1 for i in key)
            if list(key0) != sorted(set(key0)):
                raise ValueError(f"index tuple {key} is not strictly increasing")
            f.coeffs[lookup[key0]] = val
        return f

    def as_dict(self, tol: float = 0.0) -> dict[tuple[int, ...], float]:
        if self.coeffs.ndim != 1:
            raise ValueError("as_dict needs an unbatched form")
        return {
            tuple(i + 1 for i in c): float(v)
            for c, v in zip(combinations(self.dim, self.degree), self.coeffs)
            if abs(v) > tol
        }

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-1]

    def _check(self, other: "FormValue"):
        if self.dim != other.dim or self.degree != other.degree:
            raise DimensionMismatch(
                f"cannot combine degree {self.degree} on R^{self.dim} with degree {other.degree} on R^{other.dim}"
            )

    def __add__(self, other: "FormValue") -> "FormValue":
        self._check(other)
        return FormValue(self.degree, self.dim, self.coeffs + other.coeffs)

    def __sub__(self, other: "FormValue") -> "FormValue":
        self._check(other)
        return FormValue(self.degree, self.dim, self.coeffs - other.coeffs)

    def __neg__(self) -> "FormValue":
        return FormValue(self.degree, self.dim, -self.coeffs)

    def __mul__(self, s) -> "FormValue":
        s = np.asarray(s, dtype=float)
        return FormValue(self.degree, self.dim, self.coeffs * s[..., None])

    __rmul__ = __mul__

    def __getitem__(self, idx) -> "FormValue":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return FormValue(self.degree, self.dim, self.coeffs[idx + (Ellipsis, slice(None))])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0


def wedge(a: FormValue, b: FormValue) -> FormValue:
    if a.dim != b.dim:
        raise DimensionMismatch(f"wedge of forms on R^{a.dim} and R^{b.dim}")
    p, q, d = a.degree, b.degree, a.dim
    if p + q > d:
        shape = np.broadcast_shapes(a.batch_shape, b.batch_shape)
        return FormValue.zero(p + q, d, shape)
    ia, ib, sg = _wedge_table(d, p, q)
    out = sg[:, 0] * a.coeffs[..., ia[:, 0]] * b.coeffs[..., ib[:, 0]]
    for t in range(1, sg.shape[1]):
        out = out + sg[:, t] * a.coeffs[..., ia[:, t]] * b.coeffs[..., ib[:, t]]
    return FormValue(p + q, d, out)


def wedge_all(forms: Sequence[FormValue]) -> FormValue:
    result = forms[0]
    for f in forms[1:]:
        result = wedge(result, f)
    return result


def eval_form(w: FormValue, vectors) -> np.ndarray:
    """Evaluate ``w`` on ``k`` vectors given as columns: ``vectors.shape == (..., dim, k)``."""
    v = np.asarray(vectors, dtype=float)
    if v.ndim < 2 or v.shape[-2] != w.dim:
        raise DimensionMismatch(f"vectors must have shape (..., {w.dim}, k), got {v.shape}")
    if v.shape[-1] != w.degree:
        raise ArityMismatch(f"degree-{w.degree} form evaluated on {v.shape[-1]} vectors")
    if w.degree == 0:
        return w.coeffs[..., 0] * np.ones(v.shape[:-2])
    if w.degree > w.dim:
        return np.zeros(np.broadcast_shapes(w.batch_shape, v.shape[:-2]))
    rows = np.array(combinations(w.dim, w.degree))  # (C, k)
    minors = v[..., rows, :]  # (..., C, k, k)
    return np.sum(w.coeffs * np.linalg.det(minors), axis=-1)


@dataclass(frozen=True)
class FormField:
    """A form-valued function of points in R^dim.

    ``evaluate`` maps an array of shape ``(..., dim)`` to a batched FormValue.
    ``lower``/``upper`` (optional) bound the valid domain on non-periodic axes.
    """

    degree: int
    dim: int
    evaluate: Callable[[np.ndarray], FormValue]
    lower: tuple[float, ...] | None = None
    upper: tuple[float, ...] | None = None
    periodic: tuple[bool, ...] | None = None

    def __call__(self, points) -> FormValue:
        val = self.evaluate(np.asarray(points, dtype=float))
        if val.degree != self.degree or val.dim != self.dim:
            raise DegreeMismatch(
                f"form field declared degree {self.degree} on R^{self.dim}, returned degree {val.degree} on R^{val.dim}"
            )
        return val

    def check_stencil(self, points, step: float):
        if self.lower is None:
            return
        p = np.asarray(points)
        per = self.periodic or (False,) * self.dim
        for a in range(self.dim):
            if per[a]:
                continue
            if np.any(p[..., a] - step < self.lower[a]) or np.any(p[..., a] + step > self.upper[a]):
                raise StencilOutsideDomain(f"stencil of width {step} leaves the domain on axis {a}")


def _central_gradient(F: FormField, p: np.ndarray, step: float) -> np.ndarray:
    d = F.dim
    shifts = np.concatenate([np.eye(d), -np.eye(d)]) * step
    stencil = p[None, ...] + shifts.reshape((2 * d,) + (1,) * (p.ndim - 1) + (d,))
    vals = F(stencil).coeffs  # (2d, ..., C)
    deriv = (vals[:d] - vals[d:]) / (2.0 * step)  # (d, ..., C)
    return np.moveaxis(deriv, 0, -2)  # (..., d, C)


def exterior_derivative(F: FormField, point, step: float = DEFAULT_STEP, richardson: bool = False) -> FormValue:
    """Central-difference exterior derivative of ``F`` at ``point`` (batched).

    With ``richardson`` the h and h/2 differences are combined to cancel the
    O(h^2) truncation term.
    """
    p = np.asarray(point, dtype=float)
    F.check_stencil(p, step)
    d = F.dim
    deriv = _central_gradient(F, p, step)
    if richardson:
        deriv = (4.0 * _central_gradient(F, p, 0.5 * step) - deriv) / 3.0
    k = F.degree
    if k + 1 > d:
        return FormValue.zero(k + 1, d, p.shape[:-1])
    ia, ib, sg = _wedge_table(d, 1, k)
    out = sg[:, 0] * deriv[..., ia[:, 0], ib[:, 0]]
    for t in range(1, sg.shape[1]):
        out = out + sg[:, t] * deriv[..., ia[:, t], ib[:, t]]
    return FormValue(k + 1, d, out)


def pushforward(map_fn: Callable, point, tangent_basis=None, step: float = DEFAULT_STEP):
    """Image point and finite-difference pushforward of basis columns.

    Returns ``(image, P)`` with ``P.shape == (..., target_dim, r)``.
    """
    p = np.asarray(point, dtype=float)
    ds = p.shape[-1]
    basis = np.eye(ds) if tangent_basis is None else np.asarray(tangent_basis, dtype=float)
    r = basis.shape[-1]
    cols = np.moveaxis(basis, -1, 0)  # (r, ..., ds) or (r, ds)
    if cols.ndim == 2:
        cols = cols.reshape((r,) + (1,) * (p.ndim - 1) + (ds,))
    plus = map_fn(p[None] + step * cols)
    minus = map_fn(p[None] - step * cols)
    P = np.moveaxis((plus - minus) / (2.0 * step), 0, -1)
    return map_fn(p), P


def pullback(map_fn: Callable, F: FormField, point, tangent_basis=None, step: float = DEFAULT_STEP) -> FormValue:
    """Pull ``F`` back through ``map_fn`` at ``point``.

    The result is expressed in the dual basis of ``tangent_basis`` (coordinate
    basis of the source when omitted).
    """
    image, P = pushforward(map_fn, point, tangent_basis, step)
    Fv = F(image)
    k = F.degree
    r = P.shape[-1]
    if k == 0:
        return FormValue(0, r, Fv.coeffs)
    if k > r:
        return FormValue.zero(k, r, Fv.batch_shape)
    cols = np.array(combinations(r, k))  # (C, k)
    sub = np.moveaxis(P[..., cols], -3, -2)  # (..., C, td, k)
    vals = eval_form(FormValue(k, F.dim, Fv.coeffs[..., None, :]), sub)
    return FormValue(k, r, vals)


# ----------------------------------------------------------------------------
# quadrature


_GL4_NODES, _GL4_WEIGHTS = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product grid: midpoint rule on periodic axes, 4-point Gauss-Legendre panels otherwise."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[int, ...]
    periodic: tuple[bool, ...] = field(default=())

    def __post_init__(self):
        d = len(self.lower)
        per = tuple(self.periodic) if self.periodic else (False,) * d
        object.__setattr__(self, "periodic", per)
        if not (len(self.upper) == len(self.counts) == len(per) == d):
            raise DimensionMismatch("grid axes disagree in length")
        for n, pr in zip(self.counts, per):
            if n <= 0 or (not pr and n % 4):
                raise ValueError(f"axis count {n} invalid (non-periodic axes need a positive multiple of 4)")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def axis_rule(self, a: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi, n = self.lower[a], self.upper[a], self.counts[a]
        if self.periodic[a]:
            h = (hi - lo) / n
            return lo + h * (np.arange(n) + 0.5), np.full(n, h)
        panels = n // 4
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mid[:, None] + half[:, None] * _GL4_NODES[None, :]).ravel()
        weights = (half[:, None] * _GL4_WEIGHTS[None, :]).ravel()
        return nodes, weights

    @cached_property
    def _tensor(self) -> tuple[np.ndarray, np.ndarray]:
        rules = [self.axis_rule(a) for a in range(self.dim)]
        mesh = np.meshgrid(*[r[0] for r in rules], indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        wmesh = np.meshgrid(*[r[1] for r in rules], indexing="ij")
        w = np.ones(pts.shape[0])
        for wm in wmesh:
            w = w * wm.ravel()
        return pts, w

    @property
    def points(self) -> np.ndarray:
        return self._tensor[0]

    @property
    def weights(self) -> np.ndarray:
        return self._tensor[1]

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def refined(self, factor: int = 2) -> "QuadratureGrid":
        return QuadratureGrid(self.lower, self.upper, tuple(factor * n for n in self.counts), self.periodic)


def pairwise_sum(values) -> float:
    """Tree reduction in fixed index order (bit-reproducible for a given input)."""
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        return 0.0
    while a.size > 1:
        if a.size % 2:
            a = np.append(a, 0.0)
        a = a[0::2] + a[1::2]
    return float(a[0])


def worker_count() -> int:
    raw = os.environ.get("TRANSGRESS_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("TRANSGRESS_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def map_chunks(fn: Callable[[np.ndarray], np.ndarray], points: np.ndarray, workers: int | None = None,
               chunk: int = 4096) -> np.ndarray:
    """Apply ``fn`` to row blocks of ``points`` and concatenate results in order.

    ``fn`` must act row-wise, so the output does not depend on the blocking.
    """
    n = points.shape[0]
    blocks = [points[i:i + chunk] for i in range(0, n, chunk)] or [points]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(blocks) == 1:
        parts = [fn(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, blocks))
    return np.concatenate(parts, axis=0)


def integrate(F: FormField, grid: QuadratureGrid, orientation_sign: int = 1, workers: int | None = None) -> float:
    """Integrate a top-degree form field over the grid's box in its coordinates."""
    if F.degree != grid.dim or F.dim != grid.dim:
        raise DegreeMismatch(f"need a degree-{grid.dim} form on R^{grid.dim}, got degree {F.degree} on R^{F.dim}")
    density = map_chunks(lambda pts: F(pts).coeffs[..., 0], grid.points, workers)
    return orientation_sign * pairwise_sum(density * grid.weights)
