"""Vector fields on X: unit rescaling, boundary splitting, zeros and indices."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import ConvexHull

from . import geometry
from .errors import DegenerateZero, NonGenericField, SamplingTooCoarse, ZeroOnSphere
from .geometry import ChartManifold, CollarSpec
from .transgression import SphereBundle, SphereBundlePoint, lift_to_bundle

GENERIC_NORMAL = 1e-4
DET_MIN = 1e-8
JAC_STEP = 1e-6
ORACLE_RADIUS = 1e-3
DEDUPE_TOL = 1e-6


@dataclass(frozen=True)
class VectorFieldScenario:
    """A vector field given chart-by-chart: ``field_fn(chart_id, points) -> components``."""

    name: str
    field_fn: Callable[[str, np.ndarray], np.ndarray]
    declared_zeros: tuple[tuple[str, tuple[float, ...]], ...] = ()
    params: dict = field(default_factory=dict)

    def __call__(self, chart_id: str, points) -> np.ndarray:
        return np.asarray(self.field_fn(chart_id, np.asarray(points, dtype=float)), dtype=float)


@dataclass(frozen=True)
class Zero:
    """An isolated zero.  ``point`` is a chart point, or boundary coordinates when ``collar`` is set."""

    chart_id: str
    point: tuple[float, ...]
    index: int
    jacobian_det: float
    collar: str | None = None
    normal_component: float = float("nan")
    oracle_index: int | None = None

    @property
    def region(self) -> str | None:
        if self.collar is None:
            return None
        return "+" if self.normal_component > 0 else "-"


@dataclass
class BoundaryDecomposition:
    """V|_M = g(V, n) n + dV, sampled on a boundary grid per collar."""

    manifold: ChartManifold
    field: VectorFieldScenario
    samples: dict[str, np.ndarray]
    normal_samples: dict[str, np.ndarray]
    zeros_plus: list[Zero]
    zeros_minus: list[Zero]

    def normal_component(self, collar: str, chart_id: str, y) -> np.ndarray:
        return boundary_parts(self.field, self.manifold, self.manifold.collar(collar), chart_id, y)[0]

    def tangential(self, collar: str, chart_id: str, y) -> np.ndarray:
        return boundary_parts(self.field, self.manifold, self.manifold.collar(collar), chart_id, y)[1]

    @property
    def plus_region(self) -> dict[str, np.ndarray]:
        return {k: v > 0 for k, v in self.normal_samples.items()}

    @property
    def minus_region(self) -> dict[str, np.ndarray]:
        return {k: v < 0 for k, v in self.normal_samples.items()}

    @property
    def zeros(self) -> list[Zero]:
        return self.zeros_plus + self.zeros_minus


@dataclass
class IndexReport:
    ind_V: int
    ind_dplus: int
    ind_dminus: int
    interior_zeros: list[Zero]
    boundary_zeros: list[Zero]
    euler_M: int

    @property
    def boundary_consistent(self) -> bool:
        return self.ind_dplus + self.ind_dminus == self.euler_M


# ----------------------------------------------------------------------------
# rescaling and the boundary split


def unit_frame_coords(V: VectorFieldScenario, manifold: ChartManifold, chart_id: str, x, sign) -> np.ndarray:
    """Frame coordinates of V/|V|_g at chart points ``x`` (batched)."""
    chart = manifold.chart(chart_id)
    x = np.asarray(x, dtype=float)
    E = geometry._frame_matrix(chart, x, sign)
    c = np.linalg.solve(E, V(chart_id, x)[..., None])[..., 0]
    norm = np.linalg.norm(c, axis=-1, keepdims=True)
    if np.any(norm <= 1e-300):
        raise ZeroOnSphere("vector field vanishes at a sample point")
    return c / norm


def alpha(V: VectorFieldScenario, manifold: ChartManifold, chart_id: str, x,
          collar: CollarSpec | str | None = None) -> SphereBundlePoint:
    """alpha_V(x) = V(x)/|V(x)|_g, lifted with the boundary frame when ``collar`` is given."""
    if isinstance(collar, str):
        collar = manifold.collar(collar)
    x = np.asarray(x, dtype=float)
    sign = collar.outward_sign if collar is not None else None
    frame = geometry.orthonormal_frame(manifold, chart_id, x, outward_sign=sign)
    if collar is not None:
        frame = geometry.OrthoFrame(frame.base_point, frame.vectors, True)
    bundle = SphereBundle(manifold, chart_id, collar)
    return lift_to_bundle(V(chart_id, x), frame, bundle)


def boundary_parts(V: VectorFieldScenario, manifold: ChartManifold, collar: CollarSpec, chart_id: str, y):
    """(g(V, n), tangential components of dV in the y coordinates, full frame coordinates)."""
    chart = manifold.chart(chart_id)
    x = collar.embed(y)
    E = geometry._frame_matrix(chart, x, collar.outward_sign)
    v = V(chart_id, x)
    c = np.linalg.solve(E, v[..., None])[..., 0]
    tang = v - c[..., :1] * E[..., :, 0]
    return c[..., 0], tang[..., 1:], c


# ----------------------------------------------------------------------------
# Jacobians, indices and the degree oracle


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], x, step: float = JAC_STEP) -> np.ndarray:
    """Central-difference Jacobian J[..., i, j] = d fn_i / d x_j (batched)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    shifts = np.eye(d) * step
    plus = fn(x[..., None, :] + shifts)
    minus = fn(x[..., None, :] - shifts)
    return np.swapaxes((plus - minus) / (2 * step), -1, -2)


def local_index(fn: Callable[[np.ndarray], np.ndarray], zero, step: float = JAC_STEP,
                oracle: bool = False, radius: float = ORACLE_RADIUS) -> int | tuple[int, int]:
    """Index of a nondegenerate zero as sign(det J); with ``oracle`` also the degree on a small sphere."""
    zero = np.asarray(zero, dtype=float)
    det = float(np.linalg.det(fd_jacobian(fn, zero, step)))
    if abs(det) < DET_MIN:
        raise DegenerateZero(f"Jacobian determinant {det:.3g} at {zero.tolist()}")
    idx = 1 if det > 0 else -1
    if not oracle:
        return idx
    return idx, sphere_degree(fn, zero, radius)


def sphere_degree(fn: Callable[[np.ndarray], np.ndarray], center, radius: float = ORACLE_RADIUS,
                  samples: int = 64) -> int:
    """Degree of fn/|fn| on the sphere of ``radius`` about ``center``, outward-oriented."""
    center = np.asarray(center, dtype=float)
    d = center.shape[-1]
    if d == 1:
        return degree_oracle(fn(center + radius * np.array([[-1.0], [1.0]])), 0)
    if d == 2:
        t = 2 * math.pi * np.arange(samples) / samples
        return degree_oracle(fn(center + radius * np.stack([np.cos(t), np.sin(t)], -1)), 1)
    if d == 3:
        verts, tris = sphere_mesh(max(samples * 4, 256))
        return degree_oracle(fn(center + radius * verts), 2, tris)
    raise ValueError("sphere_degree supports dimensions 1 to 3")


def sphere_mesh(count: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Fibonacci points on S^2 and an outward-oriented triangulation."""
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    t = math.pi * (1 + 5**0.5) * k
    r = np.sqrt(1 - z * z)
    verts = np.stack([r * np.cos(t), r * np.sin(t), z], -1)
    tris = ConvexHull(verts).simplices.copy()
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    flip = np.einsum("ij,ij->i", a, np.cross(b, c)) < 0
    tris[flip] = tris[flip][:, ::-1]
    return verts, tris


def degree_oracle(images, d: int, triangles=None, tol: float = 0.05) -> int:
    """Brouwer degree of a sampled map S^d -> S^d.

    d = 0: images at (-1, +1); d = 1: images along a closed loop in order;
    d = 2: images at the vertices of an outward triangulation ``triangles``.
    """
    img = np.asarray(images, dtype=float)
    norms = np.linalg.norm(img, axis=-1)
    if np.any(norms <= 1e-300):
        raise ZeroOnSphere("map vanishes on the sampling sphere")
    img = img / norms[..., None]
    if d == 0:
        s = np.sign(img[..., 0])
        return int(round((s[1] - s[0]) / 2))
    if d == 1:
        ang = np.arctan2(img[:, 1], img[:, 0])
        step = np.diff(np.append(ang, ang[0]))
        step = (step + math.pi) % (2 * math.pi) - math.pi
        if np.any(np.abs(step) >= math.pi / 2):
            raise SamplingTooCoarse("successive images subtend more than pi/2")
        total = step.sum() / (2 * math.pi)
    elif d == 2:
        if triangles is None:
            raise ValueError("d = 2 needs a triangulation")
        tri = np.asarray(triangles)
        a, b, c = img[tri[:, 0]], img[tri[:, 1]], img[tri[:, 2]]
        ab, bc, ca = (np.einsum("ij,ij->i", p, q) for p, q in ((a, b), (b, c), (c, a)))
        if np.any(np.minimum(np.minimum(ab, bc), ca) <= 0):
            raise SamplingTooCoarse("image triangle edge subtends more than pi/2")
        triple = np.einsum("ij,ij->i", a, np.cross(b, c))
        solid = 2 * np.arctan2(triple, 1 + ab + bc + ca)
        total = solid.sum() / (4 * math.pi)
    else:
        raise ValueError("degree_oracle supports d in {0, 1, 2}")
    deg = round(total)
    if abs(total - deg) >= tol:
        raise SamplingTooCoarse(f"degree estimate {total:.4f} is not near an integer")
    return int(deg)


# ----------------------------------------------------------------------------
# zero finding


def _wrap(x: np.ndarray, lower, upper, periodic) -> np.ndarray:
    x = x.copy()
    for a, per in enumerate(periodic):
        if per:
            span = upper[a] - lower[a]
            x[..., a] = lower[a] + np.mod(x[..., a] - lower[a], span)
    return x


def _inside(x: np.ndarray, lower, upper, periodic, margin: float) -> np.ndarray:
    ok = np.ones(x.shape[:-1], dtype=bool)
    for a, per in enumerate(periodic):
        if not per:
            ok &= (x[..., a] >= lower[a] + margin) & (x[..., a] <= upper[a] - margin)
    return ok


def _grid_minima(values: np.ndarray, periodic) -> np.ndarray:
    """Mask of grid nodes not larger than any axis neighbour."""
    mask = np.ones(values.shape, dtype=bool)
    for a, per in enumerate(periodic):
        for shift in (1, -1):
            if per:
                nb = np.roll(values, shift, axis=a)
            else:
                pad = [(0, 0)] * values.ndim
                pad[a] = (1, 0) if shift == 1 else (0, 1)
                nb = np.pad(values, pad, constant_values=np.inf)
                sl = [slice(None)] * values.ndim
                sl[a] = slice(0, -1) if shift == 1 else slice(1, None)
                nb = nb[tuple(sl)]
            mask &= values <= nb
    return mask


def newton_zeros(fn, seeds, lower, upper, periodic, margin: float = 1e-6, iters: int = 60,
                 tol: float = 1e-11) -> np.ndarray:
    """Damped Newton from each seed (batched); returns the converged points."""
    x = np.asarray(seeds, dtype=float).copy()
    if x.size == 0:
        return x.reshape(0, len(lower))
    alive = np.ones(len(x), dtype=bool)
    for _ in range(iters):
        F = fn(x)
        nF = np.linalg.norm(F, axis=-1)
        J = fd_jacobian(fn, x)
        det = np.linalg.det(J)
        ok = np.abs(det) > 1e-300
        alive &= ok
        dx = np.zeros_like(x)
        dx[ok] = -np.linalg.solve(J[ok], F[ok][..., None])[..., 0]
        lam = np.ones(len(x))
        for _ in range(12):
            trial = _wrap(x + lam[:, None] * dx, lower, upper, periodic)
            inside = _inside(trial, lower, upper, periodic, margin)
            safe = np.where(inside[:, None], trial, x)
            nT = np.linalg.norm(fn(safe), axis=-1)
            good = inside & (nT < nF + 1e-15)
            if good.all():
                break
            lam = np.where(good, lam, 0.5 * lam)
        x = np.where(good[:, None], trial, x)
        alive &= good | (nF < tol)
        if np.all((np.linalg.norm(dx, axis=-1) < 1e-13) | ~alive):
            break
    F = np.linalg.norm(fn(x), axis=-1)
    return x[alive & (F < tol)]


def _dedupe(points: np.ndarray, lower, upper, periodic, tol: float = DEDUPE_TOL) -> np.ndarray:
    kept: list[np.ndarray] = []
    span = np.subtract(upper, lower)
    for p in points[np.lexsort(points.T[::-1])] if len(points) else points:
        dup = False
        for q in kept:
            diff = np.abs(p - q)
            diff = np.where(periodic, np.minimum(diff, span - diff), diff)
            if np.all(diff < tol):
                dup = True
                break
        if not dup:
            kept.append(p)
    return np.array(kept).reshape(-1, len(lower))


def find_zeros(fn, lower, upper, periodic, counts: int | Sequence[int] = 24, seeds=None,
               margin: float = 1e-6) -> np.ndarray:
    """Zeros of ``fn`` on a coordinate box: grid scan for minima of |fn|, then Newton."""
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    periodic = tuple(bool(p) for p in periodic)
    d = len(lower)
    if seeds is None:
        counts = (counts,) * d if isinstance(counts, int) else tuple(counts)
        axes = [lower[a] + (upper[a] - lower[a]) * (np.arange(counts[a]) + 0.5) / counts[a] for a in range(d)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
        vals = np.linalg.norm(fn(mesh), axis=-1)
        vals = np.where(np.isfinite(vals), vals, np.inf)
        seeds = mesh[_grid_minima(vals, periodic) & np.isfinite(vals)]
    roots = newton_zeros(fn, np.asarray(seeds, dtype=float).reshape(-1, d), lower, upper, periodic, margin)
    return _dedupe(roots, lower, upper, np.array(periodic))


def find_zeros_1d(fn, lower: float, upper: float, periodic: bool, count: int = 256) -> np.ndarray:
    """Sign-change bracketing plus Brent refinement for a scalar function of one variable."""
    t = lower + (upper - lower) * np.arange(count + (0 if periodic else 1)) / count
    if not periodic:
        t[0], t[-1] = lower + 1e-9, upper - 1e-9
    vals = fn(t[:, None])[:, 0]
    if periodic:
        t = np.append(t, upper)
        vals = np.append(vals, vals[0])
    roots = []
    for i in range(len(t) - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0:
            roots.append(t[i])
        elif a * b < 0:
            roots.append(brentq(lambda s: fn(np.array([[s]]))[0, 0], t[i], t[i + 1], xtol=1e-14, rtol=1e-14))
    roots = np.array(roots).reshape(-1, 1)
    if periodic and len(roots):
        roots = _wrap(roots, [lower], [upper], (True,))
    return _dedupe(roots, [lower], [upper], np.array([periodic]))


def _box(chart, axes, region: bool = True):
    lo = chart.region_lower if region else chart.lower
    hi = chart.region_upper if region else chart.upper
    return [lo[a] for a in axes], [hi[a] for a in axes], tuple(chart.periodic[a] for a in axes)


def interior_zeros(V: VectorFieldScenario, manifold: ChartManifold, counts: int = 20,
                   oracle: bool = True) -> list[Zero]:
    """All zeros of V in X, each counted once by the chart that owns it."""
    out: list[Zero] = []
    hints: dict[str, list] = {}
    for cid, pt in V.declared_zeros:
        hints.setdefault(cid, []).append(pt)
    for cid, chart in manifold.charts.items():
        fn = lambda p, cid=cid: V(cid, p)  # noqa: E731
        lo, hi, per = _box(chart, range(chart.dim))
        margin = 4 * JAC_STEP
        if V.declared_zeros:
            seeds = hints.get(cid)
            if not seeds:
                continue
            pts = find_zeros(fn, lo, hi, per, seeds=seeds, margin=margin)
        else:
            pts = find_zeros(fn, lo, hi, per, counts, margin=margin)
        for p in pts:
            if not chart.owned(p[None])[0]:
                continue
            out.append(_make_zero(fn, p, cid, oracle))
    return sorted(out, key=lambda z: (z.chart_id, z.point))


def _make_zero(fn, p, cid, oracle, **extra) -> Zero:
    det = float(np.linalg.det(fd_jacobian(fn, p)))
    if abs(det) < DET_MIN:
        raise DegenerateZero(f"zero at {p.tolist()} in chart {cid} has Jacobian determinant {det:.3g}")
    idx = 1 if det > 0 else -1
    orc = sphere_degree(fn, p) if oracle else None
    return Zero(cid, tuple(float(v) for v in p), idx, det, oracle_index=orc, **extra)


def boundary_zeros(V: VectorFieldScenario, manifold: ChartManifold, collar: CollarSpec | str,
                   counts: int | None = None, oracle: bool = True) -> list[Zero]:
    """Zeros of dV on one boundary component with their indices and normal components."""
    if isinstance(collar, str):
        collar = manifold.collar(collar)
    d = manifold.dim_n - 1
    out: list[Zero] = []
    for cid in collar.chart_ids:
        chart = manifold.chart(cid)
        fn = lambda y, cid=cid: boundary_parts(V, manifold, collar, cid, y)[1]  # noqa: E731
        lo, hi, per = _box(chart, range(1, chart.dim), region=False)
        if d == 1:
            pts = find_zeros_1d(fn, lo[0], hi[0], per[0], counts or 256)
        else:
            pts = find_zeros(fn, lo, hi, per, counts or 48, margin=4 * JAC_STEP)
        for y in pts:
            if not chart.owned(collar.embed(y)[None])[0]:
                continue
            nrm = float(boundary_parts(V, manifold, collar, cid, y[None])[0][0])
            if abs(nrm) <= GENERIC_NORMAL:
                raise NonGenericField(f"dV vanishes on the interface between the +/- regions at {y.tolist()}")
            out.append(_make_zero(fn, y, cid, oracle, collar=collar.name, normal_component=nrm))
    return sorted(out, key=lambda z: (z.chart_id, z.point))


def boundary_grid(manifold: ChartManifold, collar: CollarSpec, count: int = 64) -> np.ndarray:
    """Tensor sample grid of boundary coordinates on the collar's integration chart."""
    chart = manifold.chart(collar.chart_id)
    lo, hi, per = _box(chart, range(1, chart.dim), region=False)
    axes = [lo[a] + (hi[a] - lo[a]) * (np.arange(count) + 0.5) / count for a in range(len(lo))]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(lo))


def boundary_decompose(V: VectorFieldScenario, manifold: ChartManifold, grid_count: int = 64,
                       oracle: bool = True) -> BoundaryDecomposition:
    samples, normals = {}, {}
    plus: list[Zero] = []
    minus: list[Zero] = []
    for col in manifold.collars:
        y = boundary_grid(manifold, col, grid_count)
        nrm, tang, c = boundary_parts(V, manifold, col, col.chart_id, y)
        if np.min(np.linalg.norm(c, axis=-1)) <= 1e-6:
            raise NonGenericField(f"V vanishes on boundary component {col.name}")
        samples[col.name], normals[col.name] = y, nrm
        for z in boundary_zeros(V, manifold, col, oracle=oracle):
            (plus if z.normal_component > 0 else minus).append(z)
    return BoundaryDecomposition(manifold, V, samples, normals, plus, minus)


def total_indices(V: VectorFieldScenario, manifold: ChartManifold, oracle: bool = True) -> IndexReport:
    inner = interior_zeros(V, manifold, oracle=oracle)
    dec = boundary_decompose(V, manifold, oracle=oracle)
    for z in inner + dec.zeros:
        if z.oracle_index is not None and z.oracle_index != z.index:
            raise DegenerateZero(f"Jacobian index {z.index} disagrees with degree oracle {z.oracle_index} at {z.point}")
    return IndexReport(
        ind_V=sum(z.index for z in inner),
        ind_dplus=sum(z.index for z in dec.zeros_plus),
        ind_dminus=sum(z.index for z in dec.zeros_minus),
        interior_zeros=inner,
        boundary_zeros=dec.zeros,
        euler_M=manifold.euler_M,
    )
