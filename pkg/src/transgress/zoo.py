"""Built-in manifolds with product collars and their vector-field scenarios.

Every curved entry uses a warped metric ``dr^2 + f(r)^2 g_sphere`` whose profile
``f`` equals ``r`` near the centre (smooth at the origin) and is constant on
``[b, 1]`` so the metric is an exact product in the collar.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

from .geometry import Chart, ChartManifold, CollarSpec
from .fields import VectorFieldScenario

R_MIN = 1e-3
TWO_PI = 2.0 * math.pi


@lru_cache(maxsize=None)
def _smoothstep(order: int) -> tuple[Polynomial, Polynomial]:
    """C^order step S on [0, 1] (S(0)=0, S(1)=1) and its antiderivative P with P(0)=0."""
    coef = np.zeros(2 * order + 2)
    for k in range(order + 1):
        coef[order + 1 + k] = math.comb(order + k, k) * math.comb(2 * order + 1, order - k) * (-1) ** k
    S = Polynomial(coef)
    return S, S.integ()


@dataclass(frozen=True)
class WarpProfile:
    """f(r) = r on [0, a], constant (a + b) / 2 on [b, inf), C^(order+1) in between."""

    a: float = 0.3
    b: float = 0.7
    order: int = 5

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise ValueError("warp profile needs 0 < a < b")

    @property
    def plateau(self) -> float:
        return 0.5 * (self.a + self.b)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        _, P = _smoothstep(self.order)
        w = self.b - self.a
        xi = np.clip((r - self.a) / w, 0.0, 1.0)
        mid = r - w * P(xi)
        return np.where(r <= self.a, r, np.where(r >= self.b, self.plateau, mid))

    def derivative(self, r, nu: int = 1):
        """Analytic derivatives of f (used only by tests as an independent reference)."""
        r = np.asarray(r, dtype=float)
        S, _ = _smoothstep(self.order)
        w = self.b - self.a
        xi = np.clip((r - self.a) / w, 0.0, 1.0)
        inside = (r > self.a) & (r < self.b)
        if nu == 1:
            return np.where(r <= self.a, 1.0, np.where(r >= self.b, 0.0, 1.0 - S(xi)))
        dS = S.deriv(nu - 1)
        return np.where(inside, -dS(xi) / w ** (nu - 1), 0.0)

    def ratio(self, r):
        """f(r) / r, equal to 1 near the origin."""
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r <= self.a, 1.0, self(r) / safe)


# ----------------------------------------------------------------------------
# metric formulas


def _diag(*entries):
    shape = np.broadcast_shapes(*[np.shape(e) for e in entries])
    n = len(entries)
    G = np.zeros(shape + (n, n))
    for i, e in enumerate(entries):
        G[..., i, i] = e
    return G


def _warped_cartesian(profile: WarpProfile, dims: int):
    """Warped metric written in Cartesian coordinates of the first ``dims`` axes; extra axes are flat."""

    def metric_fn(p):
        p = np.asarray(p, dtype=float)
        q = p[..., :dims]
        r = np.linalg.norm(q, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        rhat = q / safe[..., None]
        k2 = profile.ratio(r) ** 2
        outer = rhat[..., :, None] * rhat[..., None, :]
        block = outer + k2[..., None, None] * (np.eye(dims) - outer)
        n = p.shape[-1]
        G = np.zeros(p.shape[:-1] + (n, n))
        G[..., :dims, :dims] = block
        for i in range(dims, n):
            G[..., i, i] = 1.0
        return G

    return metric_fn


def _polar_maps():
    def to_model(p):
        r, th = p[..., 0], p[..., 1]
        return np.stack([r * np.cos(th), r * np.sin(th)] + [p[..., k] for k in range(2, p.shape[-1])], axis=-1)

    def jac(p):
        r, th = p[..., 0], p[..., 1]
        n = p.shape[-1]
        J = np.zeros(p.shape[:-1] + (n, n))
        J[..., 0, 0] = np.cos(th)
        J[..., 0, 1] = -r * np.sin(th)
        J[..., 1, 0] = np.sin(th)
        J[..., 1, 1] = r * np.cos(th)
        for k in range(2, n):
            J[..., k, k] = 1.0
        return J

    def from_model(q):
        r = np.hypot(q[..., 0], q[..., 1])
        th = np.mod(np.arctan2(q[..., 1], q[..., 0]), TWO_PI)
        return np.stack([r, th] + [q[..., k] for k in range(2, q.shape[-1])], axis=-1)

    return to_model, jac, from_model


def _spherical_maps(axis_perm: tuple[int, int, int]):
    """Spherical coordinates (rho, polar, azimuth) about a permuted model axis.

    Standard coordinates give (x, y, z) = rho (sin t cos l, sin t sin l, cos t);
    ``axis_perm`` reorders those three model components (an even permutation keeps orientation).
    """
    perm = list(axis_perm)
    inv = np.argsort(perm)

    def base(p):
        rho, t, l = p[..., 0], p[..., 1], p[..., 2]
        return np.stack([rho * np.sin(t) * np.cos(l), rho * np.sin(t) * np.sin(l), rho * np.cos(t)], axis=-1)

    def to_model(p):
        return base(p)[..., perm]

    def jac(p):
        rho, t, l = p[..., 0], p[..., 1], p[..., 2]
        st, ct, sl, cl = np.sin(t), np.cos(t), np.sin(l), np.cos(l)
        J = np.zeros(p.shape[:-1] + (3, 3))
        J[..., 0, :] = np.stack([st * cl, rho * ct * cl, -rho * st * sl], axis=-1)
        J[..., 1, :] = np.stack([st * sl, rho * ct * sl, rho * st * cl], axis=-1)
        J[..., 2, :] = np.stack([ct, -rho * st, np.zeros_like(rho)], axis=-1)
        return J[..., perm, :]

    def from_model(q):
        b = q[..., inv]
        rho = np.linalg.norm(b, axis=-1)
        t = np.arccos(np.clip(b[..., 2] / np.where(rho > 0, rho, 1.0), -1.0, 1.0))
        l = np.mod(np.arctan2(b[..., 1], b[..., 0]), TWO_PI)
        return np.stack([rho, t, l], axis=-1)

    return to_model, jac, from_model


# ----------------------------------------------------------------------------
# manifolds


def flat_cylinder(width: float = 0.25) -> ChartManifold:
    chart = Chart(
        id="cyl",
        lower=(-0.5, 0.0),
        upper=(1.5, TWO_PI),
        metric_fn=lambda p: _diag(np.ones(p.shape[:-1]), np.ones(p.shape[:-1])),
        periodic=(False, True),
        is_boundary_adapted=True,
        region_lower=(0.0, 0.0),
        region_upper=(1.0, TWO_PI),
    )
    collars = (
        CollarSpec("bottom", "cyl", 0.0, -1, width),
        CollarSpec("top", "cyl", 1.0, +1, width),
    )
    return ChartManifold("flat-cylinder", 2, {"cyl": chart}, collars, euler_X=0, euler_M=0,
                         description="[0,1] x S^1 with the flat product metric")


def _disk_charts(profile: WarpProfile, round_metric: bool = False, split: float = 0.2):
    to_model, jac, from_model = _polar_maps()
    if round_metric:
        polar_metric = lambda p: _diag(np.ones(p.shape[:-1]), p[..., 0] ** 2)  # noqa: E731
        cart_metric = lambda p: _diag(np.ones(p.shape[:-1]), np.ones(p.shape[:-1]))  # noqa: E731
    else:
        polar_metric = lambda p: _diag(np.ones(p.shape[:-1]), profile(p[..., 0]) ** 2)  # noqa: E731
        cart_metric = _warped_cartesian(profile, 2)
    polar = Chart(
        id="polar",
        lower=(R_MIN, 0.0),
        upper=(1.5, TWO_PI),
        metric_fn=polar_metric,
        periodic=(False, True),
        is_boundary_adapted=True,
        region_lower=(R_MIN, 0.0),
        region_upper=(1.0, TWO_PI),
        owns=lambda p: p[..., 0] >= split,
        to_model=to_model,
        model_jacobian=jac,
        from_model=from_model,
        degenerate=((0, 0.0),),
    )
    half = 1.4 * split
    cart = Chart(
        id="cart",
        lower=(-half, -half),
        upper=(half, half),
        metric_fn=cart_metric,
        owns=lambda p: np.hypot(p[..., 0], p[..., 1]) < split,
        to_model=lambda p: p,
        model_jacobian=lambda p: np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)).copy(),
        from_model=lambda q: q,
    )
    return {"polar": polar, "cart": cart}


def warped_collar_disk(a: float = 0.3, b: float = 0.7) -> ChartManifold:
    profile = WarpProfile(a, b)
    collars = (CollarSpec("circle", "polar", 1.0, +1, 1.0 - profile.b),)
    return ChartManifold("warped-collar-disk", 2, _disk_charts(profile), collars, euler_X=1, euler_M=0,
                         description=f"disk dr^2 + f(r)^2 dtheta^2, product for r >= {profile.b}")


def round_disk_no_collar() -> ChartManifold:
    collars = (CollarSpec("circle", "polar", 1.0, +1, 0.3),)
    return ChartManifold("round-disk-no-collar", 2, _disk_charts(WarpProfile(), round_metric=True), collars,
                         euler_X=1, euler_M=0, description="flat unit disk; violates the product-collar condition")


def solid_torus(a: float = 0.3, b: float = 0.7, split: float = 0.2) -> ChartManifold:
    profile = WarpProfile(a, b)
    to_model, jac, from_model = _polar_maps()
    cyl = Chart(
        id="cyl",
        lower=(R_MIN, 0.0, 0.0),
        upper=(1.5, TWO_PI, TWO_PI),
        metric_fn=lambda p: _diag(np.ones(p.shape[:-1]), profile(p[..., 0]) ** 2, np.ones(p.shape[:-1])),
        periodic=(False, True, True),
        is_boundary_adapted=True,
        region_lower=(R_MIN, 0.0, 0.0),
        region_upper=(1.0, TWO_PI, TWO_PI),
        owns=lambda p: p[..., 0] >= split,
        to_model=to_model,
        model_jacobian=jac,
        from_model=from_model,
        degenerate=((0, 0.0),),
    )
    half = 1.4 * split
    cart = Chart(
        id="cart",
        lower=(-half, -half, 0.0),
        upper=(half, half, TWO_PI),
        metric_fn=_warped_cartesian(profile, 2),
        periodic=(False, False, True),
        owns=lambda p: np.hypot(p[..., 0], p[..., 1]) < split,
        to_model=lambda p: p,
        model_jacobian=lambda p: np.broadcast_to(np.eye(3), p.shape[:-1] + (3, 3)).copy(),
        from_model=lambda q: q,
    )
    collars = (CollarSpec("torus", "cyl", 1.0, +1, 1.0 - profile.b),)
    return ChartManifold("solid-torus", 3, {"cyl": cyl, "cart": cart}, collars, euler_X=0, euler_M=0,
                         description="D^2 x S^1 with warped disk factor; flat product collar")


def collared_ball(a: float = 0.3, b: float = 0.7, split: float = 0.2, cap: float = 0.75) -> ChartManifold:
    profile = WarpProfile(a, b)

    def sph_metric(p):
        f2 = profile(p[..., 0]) ** 2
        return _diag(np.ones(p.shape[:-1]), f2, f2 * np.sin(p[..., 1]) ** 2)

    to_z, jac_z, from_z = _spherical_maps((0, 1, 2))
    # polar axis along model x: (x, y, z) = rho (cos t, sin t cos l, sin t sin l)
    to_x, jac_x, from_x = _spherical_maps((2, 0, 1))

    def model_z_fraction(q):
        return np.abs(q[..., 2]) / np.maximum(np.linalg.norm(q, axis=-1), 1e-300)

    sph = Chart(
        id="sph",
        lower=(R_MIN, 0.0, 0.0),
        upper=(1.5, math.pi, TWO_PI),
        metric_fn=sph_metric,
        periodic=(False, False, True),
        is_boundary_adapted=True,
        region_lower=(R_MIN, 0.0, 0.0),
        region_upper=(1.0, math.pi, TWO_PI),
        owns=lambda p: (p[..., 0] >= split) & (np.abs(np.cos(p[..., 1])) <= cap),
        to_model=to_z,
        model_jacobian=jac_z,
        from_model=from_z,
        degenerate=((0, 0.0), (1, 0.0), (1, math.pi)),
    )
    sph_x = Chart(
        id="sph_x",
        lower=(R_MIN, 0.0, 0.0),
        upper=(1.5, math.pi, TWO_PI),
        metric_fn=sph_metric,
        periodic=(False, False, True),
        is_boundary_adapted=True,
        region_lower=(R_MIN, 0.0, 0.0),
        region_upper=(1.0, math.pi, TWO_PI),
        owns=lambda p: (p[..., 0] >= split) & (model_z_fraction(to_x(p)) > cap),
        to_model=to_x,
        model_jacobian=jac_x,
        from_model=from_x,
        degenerate=((0, 0.0), (1, 0.0), (1, math.pi)),
    )
    half = 1.4 * split
    cart = Chart(
        id="cart",
        lower=(-half,) * 3,
        upper=(half,) * 3,
        metric_fn=_warped_cartesian(profile, 3),
        owns=lambda p: np.linalg.norm(p, axis=-1) < split,
        to_model=lambda p: p,
        model_jacobian=lambda p: np.broadcast_to(np.eye(3), p.shape[:-1] + (3, 3)).copy(),
        from_model=lambda q: q,
    )
    collars = (CollarSpec("sphere", "sph", 1.0, +1, 1.0 - profile.b, chart_ids=("sph", "sph_x")),)
    return ChartManifold("collared-ball", 3, {"sph": sph, "sph_x": sph_x, "cart": cart}, collars,
                         euler_X=1, euler_M=2,
                         description="B^3 with d rho^2 + f(rho)^2 g_S2, product for rho >= b")


# ----------------------------------------------------------------------------
# scenarios


def model_field(fn: Callable[[np.ndarray], np.ndarray]):
    """Turn a field written in model coordinates into a per-chart ``field_fn``."""

    def bind(manifold: ChartManifold):
        def field_fn(chart_id, points):
            chart = manifold.chart(chart_id)
            p = np.asarray(points, dtype=float)
            q = chart.to_model(p) if chart.to_model else p
            return chart.vector_from_model(p, fn(q))

        return field_fn

    return bind


def _cylinder_tilt(eps: float):
    def field_fn(chart_id, p):
        p = np.asarray(p, dtype=float)
        return np.stack([np.ones(p.shape[:-1]), eps * np.sin(p[..., 1])], axis=-1)

    return field_fn


def _spiral2(sgn: float, eps: float):
    return lambda q: np.stack([sgn * q[..., 0] - eps * q[..., 1], sgn * q[..., 1] + eps * q[..., 0]], axis=-1)


def _spiral3(sgn: float, eps: float, third: Callable[[np.ndarray], np.ndarray]):
    return lambda q: np.stack(
        [sgn * q[..., 0] - eps * q[..., 1], sgn * q[..., 1] + eps * q[..., 0], third(q)], axis=-1
    )


@dataclass(frozen=True)
class ScenarioTemplate:
    name: str
    build: Callable[..., Callable]  # (manifold, **params) -> field_fn
    defaults: dict = field(default_factory=dict)
    description: str = ""

    def instantiate(self, manifold: ChartManifold, **overrides) -> VectorFieldScenario:
        params = {**self.defaults, **overrides}
        unknown = set(overrides) - set(self.defaults)
        if unknown:
            raise ValueError(f"scenario {self.name} has no parameter(s) {sorted(unknown)}")
        return VectorFieldScenario(self.name, self.build(manifold, **params), params=params)


@dataclass(frozen=True)
class ZooEntry:
    name: str
    build: Callable[..., ChartManifold]
    scenarios: dict[str, ScenarioTemplate]
    default_scenario: str
    defaults: dict = field(default_factory=dict)

    def manifold(self, **overrides) -> ChartManifold:
        unknown = set(overrides) - set(self.defaults)
        if unknown:
            raise ValueError(f"manifold {self.name} has no parameter(s) {sorted(unknown)}")
        return self.build(**{**self.defaults, **overrides})

    def scenario(self, manifold: ChartManifold, name: str | None = None, **overrides) -> VectorFieldScenario:
        name = name or self.default_scenario
        if name not in self.scenarios:
            raise KeyError(f"manifold {self.name} has no scenario {name!r}; known: {sorted(self.scenarios)}")
        return self.scenarios[name].instantiate(manifold, **overrides)


def _tmpl(name, build, description, **defaults):
    return ScenarioTemplate(name, build, defaults, description)


ZOO: dict[str, ZooEntry] = {
    "flat-cylinder": ZooEntry(
        "flat-cylinder",
        flat_cylinder,
        {
            "tilt": _tmpl("tilt", lambda m, eps: _cylinder_tilt(eps), "d/dt + eps sin(theta) d/dtheta", eps=0.5),
        },
        "tilt",
        {"width": 0.25},
    ),
    "warped-collar-disk": ZooEntry(
        "warped-collar-disk",
        warped_collar_disk,
        {
            "spiral": _tmpl("spiral", lambda m, eps: model_field(_spiral2(1.0, eps))(m),
                            "r d/dr + eps d/dtheta (source)", eps=0.5),
            "sink-spiral": _tmpl("sink-spiral", lambda m, eps: model_field(_spiral2(-1.0, eps))(m),
                                 "-r d/dr + eps d/dtheta (sink)", eps=0.5),
            "uniform": _tmpl(
                "uniform",
                lambda m, angle: model_field(
                    lambda q: np.broadcast_to(np.array([math.cos(angle), math.sin(angle)]), q.shape).copy()
                )(m),
                "constant model-space field; one boundary zero of each sign",
                angle=0.3,
            ),
        },
        "spiral",
        {"a": 0.3, "b": 0.7},
    ),
    "solid-torus": ZooEntry(
        "solid-torus",
        solid_torus,
        {
            "spiral": _tmpl("spiral", lambda m, eps: model_field(_spiral3(1.0, eps, lambda q: np.sin(q[..., 2])))(m),
                            "r d/dr + eps d/dtheta + sin(z) d/dz", eps=0.5),
        },
        "spiral",
        {"a": 0.3, "b": 0.7},
    ),
    "collared-ball": ZooEntry(
        "collared-ball",
        collared_ball,
        {
            "rotation": _tmpl("rotation", lambda m, eps: model_field(_spiral3(1.0, eps, lambda q: q[..., 2]))(m),
                              "rho d/drho + eps * rotation about the polar axis", eps=0.5),
            "sink-rotation": _tmpl("sink-rotation",
                                   lambda m, eps: model_field(_spiral3(-1.0, eps, lambda q: -q[..., 2]))(m),
                                   "-rho d/drho + eps * rotation", eps=0.5),
            "uniform": _tmpl(
                "uniform",
                lambda m, tilt: model_field(
                    lambda q: np.broadcast_to(np.array([tilt, 0.0, 1.0]), q.shape).copy()
                )(m),
                "constant model-space field; boundary zeros at the two extreme points",
                tilt=0.0,
            ),
        },
        "rotation",
        {"a": 0.3, "b": 0.7},
    ),
}

CONTROLS: dict[str, ZooEntry] = {
    "round-disk-no-collar": ZooEntry(
        "round-disk-no-collar",
        round_disk_no_collar,
        {"spiral": _tmpl("spiral", lambda m, eps: model_field(_spiral2(1.0, eps))(m), "r d/dr + eps d/dtheta",
                         eps=0.5)},
        "spiral",
    ),
}


def lookup(name: str) -> ZooEntry:
    if name in ZOO:
        return ZOO[name]
    if name in CONTROLS:
        return CONTROLS[name]
    raise KeyError(f"unknown manifold {name!r}; known: {sorted(ZOO) + sorted(CONTROLS)}")
