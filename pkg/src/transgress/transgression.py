"""Sphere-bundle forms: Chern's transgression form Phi and the secondary transgression Gamma.

Bundle points are handled in *ambient* coordinates ``z = (y, u)``: ``y`` are base
coordinates (a full chart of X, or the boundary coordinates of one collar) and
``u`` are the frame coordinates of the unit vector, treated as a point of R^n.
The sphere bundle is the hypersurface ``|u| = 1``; every form below is a smooth
extension off it, so values are meaningful on vectors tangent to ``|u| = 1``
(see :meth:`SphereBundle.tangent_basis`).  Exterior derivatives of the extension,
restricted to tangent vectors, equal exterior derivatives on the bundle.

Frame indices are 0-based in code: ``u[..., 0]`` is the outward-normal
coordinate on boundary frames.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import geometry
from .errors import AtPole, KOutOfRange, PhiOutOfRange, ZeroVector
from .exterior import FormField, FormValue, combinations, wedge, wedge_all
from .geometry import ChartManifold, CollarSpec, ConnectionCurvature, OrthoFrame

U_MIN = 1e-3


# ----------------------------------------------------------------------------
# constants


def double_factorial(k: int) -> int:
    if k < -1:
        raise ValueError("double factorial defined for k >= -1")
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def sphere_volume(j: int) -> float:
    """Volume c_j of the unit j-sphere (c_0 = 2, c_1 = 2 pi, c_2 = 4 pi)."""
    if j < 0:
        raise ValueError("sphere dimension must be >= 0")
    return 2.0 * math.pi ** ((j + 1) / 2) / math.gamma((j + 1) / 2)


@dataclass(frozen=True)
class TransgressionCoefficients:
    n: int
    phi_coeff: tuple[float, ...]
    gamma_coeff: tuple[float, ...]

    @classmethod
    def for_dim(cls, n: int) -> "TransgressionCoefficients":
        if n < 2:
            raise ValueError("n must be >= 2")
        norm = double_factorial(n - 2) * sphere_volume(n - 1)
        phi = tuple(
            (-1) ** k / (norm * 2**k * math.factorial(k) * double_factorial(n - 2 * k - 1))
            for k in range((n - 1) // 2 + 1)
        )
        gam = tuple(
            (-1) ** k / (norm * 2**k * math.factorial(k) * double_factorial(n - 2 * k - 3))
            for k in range((n - 2) // 2 + 1)
        )
        return cls(n, phi, gam)


def i_b(b: int, phi):
    """Antiderivative of sin^b with base point 0 (b even) or pi/2 (b odd)."""
    if b < 0:
        raise ValueError("b must be non-negative")
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < -1e-12) or np.any(phi > math.pi + 1e-12):
        raise PhiOutOfRange("phi must lie in [0, pi]")
    s, c = np.sin(phi), np.cos(phi)
    prev, cur = (phi, phi) if b % 2 == 0 else (-c, -c)
    start = 2 if b % 2 == 0 else 3
    for j in range(start, b + 1, 2):
        cur = ((j - 1) * prev - s ** (j - 1) * c) / j
        prev = cur
    return cur


def i_b_derivative(b: int, phi):
    return np.sin(np.asarray(phi, dtype=float)) ** b


# ----------------------------------------------------------------------------
# signed permutations and permutation sums


@lru_cache(maxsize=None)
def signed_permutations(N: int) -> tuple[tuple[tuple[int, ...], int], ...]:
    out = []
    for perm in itertools.permutations(range(N)):
        inv = sum(1 for i in range(N) for j in range(i + 1, N) if perm[i] > perm[j])
        out.append((perm, -1 if inv % 2 else 1))
    return tuple(out)


@lru_cache(maxsize=None)
def _pair_lift(m: int, D: int) -> np.ndarray:
    """Positions of the 2-combinations of range(m) inside the 2-combinations of range(D)."""
    lookup = {c: i for i, c in enumerate(combinations(D, 2))}
    return np.array([lookup[c] for c in combinations(m, 2)], dtype=np.intp)


@dataclass
class FrameData:
    """Frame coordinate functions ``w``, their covariant differentials ``theta`` and curvature.

    ``theta[i]`` and ``Omega[..., i, j, :]`` live on R^D (the ambient bundle
    coordinates); ``labels`` are the frame indices the rows refer to.
    """

    w: np.ndarray  # (..., N)
    theta: list[FormValue]
    Omega: np.ndarray  # (..., N, N, C(D, 2))
    D: int
    labels: tuple[int, ...]

    def Omega_form(self, i: int, j: int) -> FormValue:
        return FormValue(2, self.D, self.Omega[..., i, j, :])

    def select(self, rows: tuple[int, ...]) -> "FrameData":
        pos = [self.labels.index(r) for r in rows]
        return FrameData(
            self.w[..., pos],
            [self.theta[p] for p in pos],
            self.Omega[..., pos, :, :][..., :, pos, :],
            self.D,
            tuple(rows),
        )


def frame_data(w, dw, omega, Omega, labels=None) -> FrameData:
    """Build theta_i = dw_i + sum_k w_k omega_ki on R^D from base-coordinate forms.

    ``omega``: (..., N, N, m) and ``Omega``: (..., N, N, C(m, 2)) in the first m
    ambient coordinates; ``dw``: (..., N, D).
    """
    w = np.asarray(w, dtype=float)
    dw = np.asarray(dw, dtype=float)
    N, D = dw.shape[-2], dw.shape[-1]
    m = omega.shape[-1]
    conn = np.einsum("...k,...kim->...im", w, omega)  # (..., N, m)
    th = dw.copy() if dw.shape[:-2] == conn.shape[:-2] else np.broadcast_to(dw, conn.shape[:-1] + (D,)).copy()
    th[..., :m] += conn
    theta = [FormValue(1, D, th[..., i, :]) for i in range(N)]
    Om = np.zeros(Omega.shape[:-1] + (math.comb(D, 2),))
    if m >= 2:
        Om[..., _pair_lift(m, D)] = Omega
    return FrameData(w, theta, Om, D, tuple(range(N)) if labels is None else tuple(labels))


def perm_sum(data: FrameData, k: int, lead_u: bool) -> FormValue:
    """Signed permutation sum over the frame rows of ``data``.

    ``lead_u``: sum eps * w_{t1} theta_{t2} ... theta_{t(N-2k)} Omega.. Omega..  (degree N-1);
    otherwise: sum eps * theta_{t1} ... theta_{t(N-2k)} Omega.. Omega..   (degree N).
    """
    N = len(data.labels)
    n_theta = N - 2 * k - (1 if lead_u else 0)
    if k < 0 or n_theta < 0:
        raise KOutOfRange(f"k={k} out of range for {N} frame rows")
    degree = N - 1 if lead_u else N
    batch = np.broadcast_shapes(data.w.shape[:-1], data.Omega.shape[:-3])
    total = FormValue.zero(degree, data.D, batch)
    if degree > data.D:
        return total
    off = 1 if lead_u else 0
    for perm, sign in signed_permutations(N):
        factors = [data.theta[perm[off + j]] for j in range(n_theta)]
        start = off + n_theta
        factors += [data.Omega_form(perm[start + 2 * j], perm[start + 2 * j + 1]) for j in range(k)]
        if factors:
            term = wedge_all(factors)
        else:
            term = FormValue.scalar(np.ones(batch), data.D)
        scale = sign * data.w[..., perm[0]] if lead_u else float(sign)
        total = total + term * scale
    return total


# ----------------------------------------------------------------------------
# bundles


def _identity_jacobian(u: np.ndarray, m: int) -> np.ndarray:
    n = u.shape[-1]
    dw = np.zeros(u.shape[:-1] + (n, m + n))
    dw[..., np.arange(n), m + np.arange(n)] = 1.0
    return dw


class _BaseBundle:
    """Shared plumbing: base geometry over a chart or over one collar."""

    def __init__(self, manifold: ChartManifold, chart_id: str, collar: CollarSpec | str | None = None,
                 outward_sign: int | None = None, step: float | None = None, u_min: float = U_MIN):
        self.manifold = manifold
        self.u_min = u_min
        self.chart_id = chart_id
        self.chart = manifold.chart(chart_id)
        self.n = manifold.dim_n
        self.step = manifold.fd_step if step is None else step
        if isinstance(collar, str):
            collar = manifold.collar(collar)
        self.collar = collar
        if collar is not None:
            if chart_id not in collar.chart_ids:
                raise ValueError(f"chart {chart_id} does not cover boundary component {collar.name}")
            self.axes = tuple(range(1, self.n))
            self.sign = collar.outward_sign
        else:
            self.axes = tuple(range(self.n))
            self.sign = 1 if outward_sign is None else outward_sign
        self.m = len(self.axes)

    def embed(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.collar.embed(y) if self.collar is not None else y

    def base_geometry(self, y) -> ConnectionCurvature:
        x = self.embed(y)
        geometry._check_stencil(self.chart, x, geometry._STENCIL_DEPTH * self.step)
        return geometry._curvature(self.chart, x, self.sign, self.axes, self.step)

    def frame(self, y) -> OrthoFrame:
        x = self.embed(y)
        return OrthoFrame(x, geometry._frame_matrix(self.chart, x, self.sign), self.collar is not None)


class SphereBundle(_BaseBundle):
    """STX over a chart (``collar=None``) or STX|_M over one boundary component.

    Ambient coordinates ``z = (y, u)`` with ``y`` in R^m (m = n or n - 1) and u in R^n.
    """

    @property
    def dim(self) -> int:
        return self.m + self.n

    @property
    def is_boundary(self) -> bool:
        return self.collar is not None

    def split(self, z):
        z = np.asarray(z, dtype=float)
        return z[..., : self.m], z[..., self.m:]

    # -- frame data ---------------------------------------------------------

    def data(self, z, geo: ConnectionCurvature | None = None) -> FrameData:
        y, u = self.split(z)
        geo = self.base_geometry(y) if geo is None else geo
        return frame_data(u, _identity_jacobian(u, self.m), geo.omega, geo.Omega)

    def equator_data(self, z, geo: ConnectionCurvature | None = None) -> FrameData:
        """Frame data of p^*: w = u'/|u'| with u' = (u_2, .., u_n), rows 2..n."""
        self._require_boundary()
        y, u = self.split(z)
        geo = self.base_geometry(y) if geo is None else geo
        up = u[..., 1:]
        s = np.linalg.norm(up, axis=-1)
        if np.any(s < self.u_min * np.linalg.norm(u, axis=-1)):
            raise AtPole("equator projection undefined within u_min of the normal directions")
        w = up / s[..., None]
        n = self.n
        dw = np.zeros(u.shape[:-1] + (n - 1, self.dim))
        dw[..., :, self.m + 1:] = (np.eye(n - 1) - w[..., :, None] * w[..., None, :]) / s[..., None, None]
        return frame_data(w, dw, geo.omega[..., 1:, 1:, :], geo.Omega[..., 1:, 1:, :], labels=range(1, n))

    def angle(self, z):
        """phi = angle to the outward normal and its differential dphi (FormValue)."""
        self._require_boundary()
        _, u = self.split(z)
        c = u[..., 0]
        s = np.linalg.norm(u[..., 1:], axis=-1)
        r2 = c * c + s * s
        phi = np.arctan2(s, c)
        d = np.zeros(u.shape[:-1] + (self.dim,))
        d[..., self.m] = -s / r2
        safe = np.where(s > 0, s, 1.0)
        d[..., self.m + 1:] = (c / (safe * r2))[..., None] * u[..., 1:]
        return phi, FormValue(1, self.dim, d)

    def _require_boundary(self):
        if self.collar is None:
            raise ValueError("this form lives on STX|_M; build the bundle with a collar")

    # -- forms --------------------------------------------------------------

    def theta(self, z) -> list[FormValue]:
        return self.data(z).theta

    def phi_k(self, z, k: int, data: FrameData | None = None) -> FormValue:
        if not 0 <= k <= (self.n - 1) // 2:
            raise KOutOfRange(f"Phi_k needs 0 <= k <= {(self.n - 1) // 2}")
        return perm_sum(self.data(z) if data is None else data, k, lead_u=True)

    def phi(self, z, data: FrameData | None = None) -> FormValue:
        data = self.data(z) if data is None else data
        co = TransgressionCoefficients.for_dim(self.n)
        total = self.phi_k(z, 0, data) * co.phi_coeff[0]
        for k in range(1, len(co.phi_coeff)):
            total = total + self.phi_k(z, k, data) * co.phi_coeff[k]
        return total

    def xi(self, z, k: int, data: FrameData | None = None) -> FormValue:
        """Restricted sum over rows 2..n with theta's only (no leading u)."""
        data = self.data(z) if data is None else data
        return perm_sum(data.select(tuple(range(1, self.n))), k, lead_u=False)

    def upsilon(self, z, k: int, data: FrameData | None = None) -> FormValue:
        data = self.data(z) if data is None else data
        if k == (self.n - 1) // 2 and (self.n - 1) % 2 == 0:
            # no theta slot left: defined as zero
            return FormValue.zero(self.n - 2, self.dim, data.w.shape[:-1])
        return perm_sum(data.select(tuple(range(1, self.n))), k, lead_u=True)

    def p_phi_e(self, z, k: int, edata: FrameData | None = None) -> FormValue:
        if not 0 <= k <= (self.n - 2) // 2:
            raise KOutOfRange(f"Phi^e_k needs 0 <= k <= {(self.n - 2) // 2}")
        return perm_sum(self.equator_data(z) if edata is None else edata, k, lead_u=True)

    def p_psi_e(self, z, k: int, edata: FrameData | None = None) -> FormValue:
        if not 0 <= k <= (self.n - 1) // 2:
            raise KOutOfRange(f"Psi^e_k needs 0 <= k <= {(self.n - 1) // 2}")
        edata = self.equator_data(z) if edata is None else edata
        if k == 0:
            return FormValue.zero(self.n - 1, self.dim, edata.w.shape[:-1])
        return perm_sum(edata, k, lead_u=False)

    def gamma(self, z, edata: FrameData | None = None) -> FormValue:
        self._require_boundary()
        edata = self.equator_data(z) if edata is None else edata
        phi, _ = self.angle(z)
        co = TransgressionCoefficients.for_dim(self.n)
        total = None
        for k, coeff in enumerate(co.gamma_coeff):
            term = self.p_phi_e(z, k, edata) * (coeff * i_b(self.n - 2 * k - 2, phi))
            total = term if total is None else total + term
        return total

    def gamma_derivative_flat(self, z) -> FormValue:
        """Closed-form d(Gamma) when the boundary curvature vanishes (only k = 0 survives)."""
        self._require_boundary()
        phi, dphi = self.angle(z)
        co = TransgressionCoefficients.for_dim(self.n)
        return wedge(dphi, self.p_phi_e(z, 0)) * (co.gamma_coeff[0] * i_b_derivative(self.n - 2, phi))

    def form_field(self, name: str, k: int | None = None) -> FormField:
        """Wrap one of the forms as a FormField on the ambient coordinates."""
        fn = {
            "phi": lambda z: self.phi(z),
            "gamma": lambda z: self.gamma(z),
            "phi_k": lambda z: self.phi_k(z, k),
            "p_phi_e": lambda z: self.p_phi_e(z, k),
        }[name]
        degree = {"phi": self.n - 1, "gamma": self.n - 2, "phi_k": self.n - 1, "p_phi_e": self.n - 2}[name]
        return FormField(degree, self.dim, fn)

    # -- sampling helpers ---------------------------------------------------

    def tangent_basis(self, z) -> np.ndarray:
        """Orthonormal basis (columns) of the bundle tangent space at ``z``: (..., dim, dim - 1)."""
        _, u = self.split(z)
        return _tangent_basis(u, self.m)


def _tangent_basis(u: np.ndarray, m: int) -> np.ndarray:
    n = u.shape[-1]
    M = np.concatenate([u[..., :, None], np.broadcast_to(np.eye(n), u.shape[:-1] + (n, n))], axis=-1)
    Q, _ = np.linalg.qr(M)
    fiber = Q[..., :, 1:n]  # orthonormal complement of u
    B = np.zeros(u.shape[:-1] + (m + n, m + n - 1))
    B[..., np.arange(m), np.arange(m)] = 1.0
    B[..., m:, m:] = fiber
    return B


class EquatorBundle(_BaseBundle):
    """STM over one boundary component, ambient coordinates (y, v) with v in R^(n-1)."""

    def __init__(self, manifold: ChartManifold, chart_id: str, collar: CollarSpec | str, step: float | None = None,
                 u_min: float = U_MIN):
        super().__init__(manifold, chart_id, collar, step=step, u_min=u_min)

    @property
    def dim(self) -> int:
        return self.m + self.n - 1

    def split(self, z):
        z = np.asarray(z, dtype=float)
        return z[..., : self.m], z[..., self.m:]

    def data(self, z, geo: ConnectionCurvature | None = None) -> FrameData:
        y, v = self.split(z)
        geo = self.base_geometry(y) if geo is None else geo
        return frame_data(v, _identity_jacobian(v, self.m), geo.omega[..., 1:, 1:, :], geo.Omega[..., 1:, 1:, :],
                          labels=range(1, self.n))

    def phi_e(self, z, k: int, data: FrameData | None = None) -> FormValue:
        if not 0 <= k <= (self.n - 2) // 2:
            raise KOutOfRange(f"Phi^e_k needs 0 <= k <= {(self.n - 2) // 2}")
        return perm_sum(self.data(z) if data is None else data, k, lead_u=True)

    def psi_e(self, z, k: int, data: FrameData | None = None) -> FormValue:
        if not 0 <= k <= (self.n - 1) // 2:
            raise KOutOfRange(f"Psi^e_k needs 0 <= k <= {(self.n - 1) // 2}")
        data = self.data(z) if data is None else data
        if k == 0:
            return FormValue.zero(self.n - 1, self.dim, data.w.shape[:-1])
        return perm_sum(data, k, lead_u=False)

    def psi_e_raw(self, z, k: int) -> FormValue:
        """The literal permutation sum, including k = 0 (which vanishes on tangent vectors)."""
        return perm_sum(self.data(z), k, lead_u=False)

    def form_field(self, name: str, k: int) -> FormField:
        fn = {"phi_e": lambda z: self.phi_e(z, k), "psi_e": lambda z: self.psi_e(z, k)}[name]
        degree = self.n - 2 if name == "phi_e" else self.n - 1
        return FormField(degree, self.dim, fn)

    def tangent_basis(self, z) -> np.ndarray:
        _, v = self.split(z)
        return _tangent_basis(v, self.m)


# ----------------------------------------------------------------------------
# point-level API


@dataclass(frozen=True)
class SphereBundlePoint:
    base: np.ndarray  # chart point of the base
    frame: OrthoFrame
    u: np.ndarray
    phi: float
    in_cstm: bool
    bundle: SphereBundle | None = None

    @property
    def z(self) -> np.ndarray:
        if self.bundle is None:
            raise ValueError("point is not attached to a bundle")
        y = self.base[..., 1:] if self.bundle.is_boundary else self.base
        return np.concatenate([y, self.u], axis=-1)


@dataclass(frozen=True)
class EquatorPoint:
    base: np.ndarray
    u_e: np.ndarray
    bundle: EquatorBundle | None = None

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.base[..., 1:], self.u_e], axis=-1)


def lift_to_bundle(v, frame: OrthoFrame, bundle: SphereBundle | None = None, u_min: float = U_MIN) -> SphereBundlePoint:
    """Frame coordinates of v/|v| (|v| measured by the metric the frame is orthonormal for)."""
    v = np.asarray(v, dtype=float)
    coords = np.linalg.solve(frame.vectors, v)
    norm = float(np.linalg.norm(coords))
    if norm <= 1e-300:
        raise ZeroVector("cannot lift the zero vector")
    u = coords / norm
    if frame.is_boundary_frame:
        phi = float(np.arctan2(np.linalg.norm(u[1:]), u[0]))
        in_cstm = bool(math.sin(phi) >= u_min)
    else:
        phi, in_cstm = float("nan"), False
    return SphereBundlePoint(np.asarray(frame.base_point, dtype=float), frame, u, phi, in_cstm, bundle)


def theta_forms(bp: SphereBundlePoint, dir_basis=None) -> list[FormValue]:
    """theta_i at ``bp``; with ``dir_basis`` (columns in ambient coordinates) the forms are
    restricted to those directions and expressed in the dual basis."""
    theta = bp.bundle.theta(bp.z)
    if dir_basis is None:
        return theta
    B = np.asarray(dir_basis, dtype=float)
    return [FormValue(1, B.shape[-1], t.coeffs @ B) for t in theta]


def phi_k_form(bp: SphereBundlePoint, k: int) -> FormValue:
    return bp.bundle.phi_k(bp.z, k)


def phi_total(bp: SphereBundlePoint) -> FormValue:
    return bp.bundle.phi(bp.z)


def equator_project(bp: SphereBundlePoint, u_min: float = U_MIN) -> EquatorPoint:
    s = float(np.linalg.norm(bp.u[1:]))
    if s < u_min:
        raise AtPole(f"sin(phi) = {s:.3g} is below u_min = {u_min:g}")
    eq = None
    if bp.bundle is not None and bp.bundle.is_boundary:
        eq = EquatorBundle(bp.bundle.manifold, bp.bundle.chart_id, bp.bundle.collar, bp.bundle.step, u_min)
    return EquatorPoint(bp.base, bp.u[1:] / s, eq)


def equator_forms(ep: EquatorPoint, k: int) -> tuple[FormValue | None, FormValue]:
    """(Phi^e_k, Psi^e_k) at ``ep``; Phi^e_k is None when k exceeds its range."""
    b = ep.bundle
    phi_e = b.phi_e(ep.z, k) if k <= (b.n - 2) // 2 else None
    return phi_e, b.psi_e(ep.z, k)


def gamma_total(bp: SphereBundlePoint, u_min: float = U_MIN) -> FormValue:
    if not bp.in_cstm:
        raise AtPole("Gamma is only defined on CSTM")
    return bp.bundle.gamma(bp.z)
