"""Chart-based Riemannian manifolds with boundary, frames, connection and curvature forms.

Conventions (all 0-based in code):

* A chart's coordinates are ``x = (x_0, .., x_{n-1})``.  On boundary-adapted
  charts ``x_0`` is the collar coordinate and ``x_1..x_{n-1}`` parametrize M.
* ``E[..., k, i]`` is the k-th chart component of frame vector ``e_i``.
* Connection forms follow ``nabla e_i = sum_j omega_ij e_j``; ``omega[..., i, j, a]``
  is the coefficient of ``dx_{axes[a]}``.
* ``Omega[..., i, j, c]`` is the coefficient of the c-th 2-combination of the
  derivative axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    MetricNotPositiveDefinite,
    NoBoundaryChart,
    PointOutsideChart,
    StepTooLargeNearChartEdge,
)
from .exterior import DEFAULT_STEP, FormValue, combinations

# Deepest nested stencil used by curvature_forms: frame -> metric derivative -> omega -> d omega.
_STENCIL_DEPTH = 3


@dataclass(frozen=True)
class Chart:
    """Axis-aligned coordinate box carrying a metric formula.

    ``lower``/``upper`` bound where ``metric_fn`` may be evaluated (this can
    extend past the boundary of X so stencils at M stay valid).  ``region_lower``/
    ``region_upper`` bound the part of X the chart covers, and ``owns`` (if set)
    picks the points this chart is responsible for when zeros are counted.
    """

    id: str
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    metric_fn: Callable[[np.ndarray], np.ndarray]
    periodic: tuple[bool, ...] = ()
    is_boundary_adapted: bool = False
    orientation_sign: int = 1
    region_lower: tuple[float, ...] | None = None
    region_upper: tuple[float, ...] | None = None
    owns: Callable[[np.ndarray], np.ndarray] | None = None
    to_model: Callable[[np.ndarray], np.ndarray] | None = None
    model_jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    from_model: Callable[[np.ndarray], np.ndarray] | None = None
    # (axis, value) pairs where the coordinates degenerate, e.g. the poles of a lat-long chart
    degenerate: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        n = len(self.lower)
        if not self.periodic:
            object.__setattr__(self, "periodic", (False,) * n)
        if self.region_lower is None:
            object.__setattr__(self, "region_lower", tuple(self.lower))
        if self.region_upper is None:
            object.__setattr__(self, "region_upper", tuple(self.upper))
        if self.orientation_sign not in (1, -1):
            raise ValueError("orientation_sign must be +1 or -1")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def inside(self, points, margin: float = 0.0) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        ok = np.ones(p.shape[:-1], dtype=bool)
        for a in range(self.dim):
            if self.periodic[a]:
                continue
            ok &= (p[..., a] >= self.lower[a] + margin - 1e-12) & (p[..., a] <= self.upper[a] - margin + 1e-12)
        return ok

    def owned(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        if self.owns is None:
            return np.ones(p.shape[:-1], dtype=bool)
        return np.asarray(self.owns(p), dtype=bool)

    def vector_from_model(self, points, model_vectors) -> np.ndarray:
        """Chart components of vectors given in model coordinates."""
        if self.model_jacobian is None:
            return np.asarray(model_vectors, dtype=float)
        J = self.model_jacobian(np.asarray(points, dtype=float))
        return np.linalg.solve(J, np.asarray(model_vectors, dtype=float)[..., None])[..., 0]


@dataclass(frozen=True)
class CollarSpec:
    """One boundary component of X and its product collar.

    All charts in ``chart_ids`` are boundary-adapted with collar coordinate
    ``x_0``; M sits at ``x_0 == boundary_value`` and the outward normal points
    along ``outward_sign * d/dx_0``.  ``chart_id`` is the chart used for
    integration over M.
    """

    name: str
    chart_id: str
    boundary_value: float
    outward_sign: int
    width: float
    chart_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.chart_ids:
            object.__setattr__(self, "chart_ids", (self.chart_id,))
        if self.outward_sign not in (1, -1):
            raise ValueError("outward_sign must be +1 or -1")

    def in_collar(self, points) -> np.ndarray:
        t = np.asarray(points, dtype=float)[..., 0]
        depth = (self.boundary_value - t) * self.outward_sign
        return (depth >= -1e-12) & (depth <= self.width + 1e-12)

    def embed(self, y) -> np.ndarray:
        """Chart point on M for boundary coordinates ``y``."""
        y = np.asarray(y, dtype=float)
        t = np.full(y.shape[:-1] + (1,), float(self.boundary_value))
        return np.concatenate([t, y], axis=-1)


@dataclass
class ChartManifold:
    name: str
    dim_n: int
    charts: dict[str, Chart]
    collars: tuple[CollarSpec, ...]
    euler_X: int
    euler_M: int
    fd_step: float = DEFAULT_STEP
    description: str = ""

    def __post_init__(self):
        if self.dim_n < 2:
            raise ValueError("dim_n must be >= 2")
        for c in self.charts.values():
            if c.dim != self.dim_n:
                raise ValueError(f"chart {c.id} has dimension {c.dim}, expected {self.dim_n}")
        if self.dim_n % 2 == 1 and self.euler_M != 2 * self.euler_X:
            raise ValueError("odd-dimensional X needs euler_M == 2 * euler_X")
        for col in self.collars:
            if col.width < 10 * self.fd_step:
                raise ValueError(f"collar {col.name} narrower than 10 finite-difference steps")
            for cid in col.chart_ids:
                if not self.charts[cid].is_boundary_adapted:
                    raise ValueError(f"collar {col.name} refers to non boundary-adapted chart {cid}")

    def chart(self, chart_id: str) -> Chart:
        try:
            return self.charts[chart_id]
        except KeyError:
            raise PointOutsideChart(f"{self.name} has no chart {chart_id!r}") from None

    @property
    def boundary_chart_ids(self) -> tuple[str, ...]:
        ids: list[str] = []
        for col in self.collars:
            ids.extend(c for c in col.chart_ids if c not in ids)
        return tuple(ids)

    @property
    def orientation_sign(self) -> dict[str, int]:
        return {cid: c.orientation_sign for cid, c in self.charts.items()}

    def collar(self, name: str) -> CollarSpec:
        for col in self.collars:
            if col.name == name:
                return col
        raise NoBoundaryChart(f"{self.name} has no boundary component {name!r}")


@dataclass(frozen=True)
class OrthoFrame:
    base_point: np.ndarray
    vectors: np.ndarray  # (..., n, n); column i is e_{i+1}
    is_boundary_frame: bool


@dataclass(frozen=True)
class ConnectionCurvature:
    omega: np.ndarray  # (..., n, n, m)
    christoffel: np.ndarray  # (..., n, n, n): [k, i, j] = Gamma^k_ij
    axes: tuple[int, ...]
    Omega: np.ndarray | None = None  # (..., n, n, C(m, 2))

    def omega_form(self, i: int, j: int) -> FormValue:
        return FormValue(1, len(self.axes), self.omega[..., i, j, :])

    def Omega_form(self, i: int, j: int) -> FormValue:
        if self.Omega is None:
            raise ValueError("curvature not computed")
        return FormValue(2, len(self.axes), self.Omega[..., i, j, :])


# ----------------------------------------------------------------------------
# metric and Christoffel symbols


def metric(manifold: ChartManifold, chart_id: str, points, check: bool = True) -> np.ndarray:
    chart = manifold.chart(chart_id)
    p = np.asarray(points, dtype=float)
    if check and not np.all(chart.inside(p)):
        raise PointOutsideChart(f"point outside chart {chart_id} of {manifold.name}")
    G = np.asarray(chart.metric_fn(p), dtype=float)
    if check:
        sym = np.max(np.abs(G - np.swapaxes(G, -1, -2))) if G.size else 0.0
        if sym > 1e-12 or np.any(np.linalg.eigvalsh(G)[..., 0] <= 0):
            raise MetricNotPositiveDefinite(f"metric of chart {chart_id} is not symmetric positive-definite")
    return G


def _check_stencil(chart: Chart, p: np.ndarray, reach: float):
    if not np.all(chart.inside(p, margin=reach)):
        raise StepTooLargeNearChartEdge(
            f"finite-difference stencil of reach {reach:g} leaves chart {chart.id}; shrink the step or move the point"
        )


def _metric_derivative(chart: Chart, p: np.ndarray, h: float) -> np.ndarray:
    """``dG[..., l, a, b] = d g_ab / d x_l`` by central differences."""
    n = chart.dim
    shifts = (np.eye(n) * h).reshape((n,) + (1,) * (p.ndim - 1) + (n,))
    gp = chart.metric_fn(p[None] + shifts)
    gm = chart.metric_fn(p[None] - shifts)
    return np.moveaxis((gp - gm) / (2 * h), 0, -3)


def _christoffel(chart: Chart, p: np.ndarray, h: float, G: np.ndarray | None = None) -> np.ndarray:
    if G is None:
        G = chart.metric_fn(p)
    dG = _metric_derivative(chart, p, h)
    # lowered[l, i, j] = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)
    lowered = 0.5 * (
        np.einsum("...ilj->...lij", dG) + np.einsum("...jli->...lij", dG) - dG
    )
    Ginv = np.linalg.inv(G)
    return np.einsum("...kl,...lij->...kij", Ginv, lowered)


def christoffel(manifold: ChartManifold, chart_id: str, point, step: float | None = None) -> np.ndarray:
    """Levi-Civita coefficients ``Gamma[..., k, i, j]`` in chart coordinates."""
    h = manifold.fd_step if step is None else step
    chart = manifold.chart(chart_id)
    p = np.asarray(point, dtype=float)
    G = metric(manifold, chart_id, p)
    _check_stencil(chart, p, h)
    return _christoffel(chart, p, h, G)


# ----------------------------------------------------------------------------
# frames


def _inner(G, a, b):
    return np.einsum("...i,...ij,...j->...", a, G, b)


def _gram_schmidt(G: np.ndarray) -> np.ndarray:
    n = G.shape[-1]
    E = np.zeros(G.shape)
    for idx in range(n):
        v = np.zeros(G.shape[:-1])
        v[..., idx] = 1.0
        for j in range(idx):
            ej = E[..., :, j]
            v = v - _inner(G, v, ej)[..., None] * ej
        E[..., :, idx] = v / np.sqrt(_inner(G, v, v))[..., None]
    return E


def frame_signs(manifold: ChartManifold, chart_id: str, points) -> np.ndarray:
    """Outward sign for each point: the collar's sign inside a collar of this chart, else +1."""
    p = np.asarray(points, dtype=float)
    s = np.ones(p.shape[:-1])
    for col in manifold.collars:
        if chart_id in col.chart_ids:
            s = np.where(col.in_collar(p), col.outward_sign, s)
    return s


def _frame_matrix(chart: Chart, p: np.ndarray, sign, G: np.ndarray | None = None) -> np.ndarray:
    if G is None:
        G = chart.metric_fn(p)
    E = _gram_schmidt(G)
    s = np.broadcast_to(np.asarray(sign, dtype=float), p.shape[:-1])
    E[..., :, 0] *= s[..., None]
    flip = np.where(s * chart.orientation_sign < 0, -1.0, 1.0)
    E[..., :, -1] *= flip[..., None]
    return E


def orthonormal_frame(manifold: ChartManifold, chart_id: str, point, outward_sign=None) -> OrthoFrame:
    """Oriented orthonormal frame by Gram-Schmidt on the chart basis.

    On boundary-adapted charts the collar axis is processed first and, inside a
    collar, ``e_1`` is the outward unit normal.  ``outward_sign`` overrides the
    collar lookup (needed to keep one frame field across a stencil).
    """
    chart = manifold.chart(chart_id)
    p = np.asarray(point, dtype=float)
    G = metric(manifold, chart_id, p)
    sign = frame_signs(manifold, chart_id, p) if outward_sign is None else outward_sign
    in_collar = np.zeros(p.shape[:-1], dtype=bool)
    for col in manifold.collars:
        if chart_id in col.chart_ids:
            in_collar |= col.in_collar(p)
    return OrthoFrame(p, _frame_matrix(chart, p, sign, G), bool(chart.is_boundary_adapted and np.all(in_collar)))


# ----------------------------------------------------------------------------
# connection and curvature


def _omega(chart: Chart, p: np.ndarray, sign, axes: Sequence[int], h: float):
    n = chart.dim
    G = chart.metric_fn(p)
    E = _frame_matrix(chart, p, sign, G)
    Gam = _christoffel(chart, p, h, G)
    m = len(axes)
    shifts = np.zeros((m, n))
    shifts[np.arange(m), list(axes)] = h
    shifts = shifts.reshape((m,) + (1,) * (p.ndim - 1) + (n,))
    sign_b = np.broadcast_to(np.asarray(sign, dtype=float), p.shape[:-1])
    Ep = _frame_matrix(chart, p[None] + shifts, sign_b[None])
    Em = _frame_matrix(chart, p[None] - shifts, sign_b[None])
    dE = np.moveaxis((Ep - Em) / (2 * h), 0, -3)  # (..., a, k, i)
    Gam_a = Gam[..., :, list(axes), :]  # (..., k, a, b)
    cov = dE + np.einsum("...kab,...bi->...aki", Gam_a, E)  # nabla_a e_i, component k
    om = np.einsum("...lj,...lk,...aki->...ija", E, G, cov)
    om = 0.5 * (om - np.swapaxes(om, -3, -2))
    return om, Gam


def _resolve(manifold, chart_id, point, outward_sign, axes, step):
    chart = manifold.chart(chart_id)
    p = np.asarray(point, dtype=float)
    metric(manifold, chart_id, p)
    h = manifold.fd_step if step is None else step
    sign = frame_signs(manifold, chart_id, p) if outward_sign is None else outward_sign
    axes = tuple(range(chart.dim)) if axes is None else tuple(axes)
    return chart, p, h, sign, axes


def connection_forms(manifold: ChartManifold, chart_id: str, point, outward_sign=None,
                     axes: Sequence[int] | None = None, step: float | None = None) -> ConnectionCurvature:
    """omega_ij restricted to the coordinate directions ``axes`` (all by default)."""
    chart, p, h, sign, axes = _resolve(manifold, chart_id, point, outward_sign, axes, step)
    _check_stencil(chart, p, 2 * h)
    om, Gam = _omega(chart, p, sign, axes, h)
    return ConnectionCurvature(om, Gam, axes)


def curvature_forms(manifold: ChartManifold, chart_id: str, point, outward_sign=None,
                    axes: Sequence[int] | None = None, step: float | None = None) -> ConnectionCurvature:
    """omega and Omega_ij = d omega_ij - sum_k omega_ik ^ omega_kj on the span of ``axes``."""
    chart, p, h, sign, axes = _resolve(manifold, chart_id, point, outward_sign, axes, step)
    _check_stencil(chart, p, _STENCIL_DEPTH * h)
    return _curvature(chart, p, sign, axes, h)


def _curvature(chart: Chart, p: np.ndarray, sign, axes: tuple[int, ...], h: float) -> ConnectionCurvature:
    n, m = chart.dim, len(axes)
    om, Gam = _omega(chart, p, sign, axes, h)
    shifts = np.zeros((m, n))
    shifts[np.arange(m), list(axes)] = h
    shifts = shifts.reshape((m,) + (1,) * (p.ndim - 1) + (n,))
    sign_b = np.broadcast_to(np.asarray(sign, dtype=float), p.shape[:-1])
    op, _ = _omega(chart, p[None] + shifts, sign_b[None], axes, h)
    omm, _ = _omega(chart, p[None] - shifts, sign_b[None], axes, h)
    D = (op - omm) / (2 * h)  # D[b, ..., i, j, c] = d_b omega_ij,c
    pairs = combinations(m, 2)
    Om = np.zeros(p.shape[:-1] + (n, n, len(pairs)))
    for c, (b1, b2) in enumerate(pairs):
        d_om = D[b1][..., b2] - D[b2][..., b1]
        ww = np.einsum("...ik,...kj->...ij", om[..., b1], om[..., b2]) - np.einsum(
            "...ik,...kj->...ij", om[..., b2], om[..., b1]
        )
        Om[..., c] = d_om - ww
    Om = 0.5 * (Om - np.swapaxes(Om, -3, -2))
    return ConnectionCurvature(om, Gam, axes, Om)


# ----------------------------------------------------------------------------
# collar audit


@dataclass
class CollarAudit:
    metric_deviation: float
    max_omega_normal: float
    max_Omega_normal: float
    samples: int
    tolerances: tuple[float, float, float] = (1e-10, 1e-8, 1e-4)
    per_component: dict[str, tuple[float, float, float]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        t = self.tolerances
        return (
            self.metric_deviation < t[0] and self.max_omega_normal < t[1] and self.max_Omega_normal < t[2]
        )


def collar_sample_points(manifold: ChartManifold, col: CollarSpec, chart_id: str, samples: int = 64,
                         depths: int = 4) -> np.ndarray:
    """Midpoint grid over the collar: ``depths`` collar levels times ``samples`` per M axis."""
    chart = manifold.chart(chart_id)
    n = manifold.dim_n
    t = col.boundary_value - col.outward_sign * col.width * (np.arange(depths) / depths)
    axes = [t]
    for a in range(1, n):
        lo, hi = chart.region_lower[a], chart.region_upper[a]
        axes.append(lo + (hi - lo) * (np.arange(samples) + 0.5) / samples)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def collar_audit(manifold: ChartManifold, samples: int = 64, tolerances=(1e-10, 1e-8, 1e-4)) -> CollarAudit:
    """Check the locally-product condition on a grid over every collar."""
    if not manifold.collars:
        raise NoBoundaryChart(f"{manifold.name} declares no boundary collar")
    worst = [0.0, 0.0, 0.0]
    per: dict[str, tuple[float, float, float]] = {}
    count = 0
    for col in manifold.collars:
        comp = [0.0, 0.0, 0.0]
        for cid in col.chart_ids:
            chart = manifold.chart(cid)
            pts = collar_sample_points(manifold, col, cid, samples)
            if manifold.dim_n > 2:
                # lat-long style grids: keep 3-D audits affordable
                pts = pts[:: max(1, pts.shape[0] // 4096)]
            count += pts.shape[0]
            G = metric(manifold, cid, pts)
            on_M = chart.metric_fn(col.embed(pts[..., 1:]))
            dev = max(
                np.max(np.abs(G[..., 0, 0] - 1.0)),
                np.max(np.abs(G[..., 0, 1:])),
                np.max(np.abs(G[..., 1:, 1:] - on_M[..., 1:, 1:])),
            )
            cc = _curvature(chart, pts, col.outward_sign, tuple(range(manifold.dim_n)), manifold.fd_step)
            comp[0] = max(comp[0], float(dev))
            comp[1] = max(comp[1], float(np.max(np.abs(cc.omega[..., 0, :, :]))))
            comp[2] = max(comp[2], float(np.max(np.abs(cc.Omega[..., 0, :, :]))))
        per[col.name] = tuple(comp)
        worst = [max(w, c) for w, c in zip(worst, comp)]
    return CollarAudit(worst[0], worst[1], worst[2], count, tuple(tolerances), per)
