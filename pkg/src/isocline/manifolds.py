"""Closed-form atlases and test potentials.

Three model surfaces are provided: the unit sphere with its two stereographic
charts, the upper half of the pseudosphere as a graph over polar coordinates,
and the Euclidean plane.  On top of them live the Müller-Brown potential
(planar, and composed with an affine angle map onto the two curved surfaces)
and the cubic potential ``x1 x2 x3`` on the sphere, whose line field is known
in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CapabilityError, DomainError, SingularMetricError
from .geometry import FD_STEP, pullback_metric

# ---------------------------------------------------------------------------
# Müller-Brown
# ---------------------------------------------------------------------------

MB_A = np.array([-200.0, -100.0, -170.0, 15.0])
MB_a = np.array([-1.0, -1.0, -6.5, 0.7])
MB_b = np.array([0.0, 0.0, 11.0, 0.6])
MB_c = np.array([-10.0, -10.0, -6.5, 0.7])
MB_X0 = np.array([1.0, 0.0, -0.5, -1.0])
MB_Y0 = np.array([0.0, 0.5, 1.5, 1.0])

EXPONENT_CLAMP = 500.0


def _mb_terms(x):
    x = np.asarray(x, dtype=float)
    dx = x[0] - MB_X0
    dy = x[1] - MB_Y0
    q = MB_a * dx**2 + MB_b * dx * dy + MB_c * dy**2
    w = MB_A * np.exp(np.clip(q, -EXPONENT_CLAMP, EXPONENT_CLAMP))
    qx = 2 * MB_a * dx + MB_b * dy
    qy = MB_b * dx + 2 * MB_c * dy
    return w, qx, qy


def muller_brown_planar(x):
    """Energy and gradient of the planar Müller-Brown potential.

    Returns
    -------
    energy : float
    gradient : (2,) ndarray
    """
    w, qx, qy = _mb_terms(x)
    return float(w.sum()), np.array([w @ qx, w @ qy])


def muller_brown_hessian(x):
    w, qx, qy = _mb_terms(x)
    hxx = w @ (qx * qx + 2 * MB_a)
    hxy = w @ (qx * qy + MB_b)
    hyy = w @ (qy * qy + 2 * MB_c)
    return np.array([[hxx, hxy], [hxy, hyy]])


@dataclass(frozen=True)
class AffineMap:
    """``kappa(k) = (s1 * k[i1] + o1, s2 * k[i2] + o2)``."""

    scale: tuple[float, float]
    offset: tuple[float, float]
    source: tuple[int, int] = (0, 1)

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        return np.array(
            [self.scale[0] * k[self.source[0]] + self.offset[0],
             self.scale[1] * k[self.source[1]] + self.offset[1]]
        )

    def jacobian(self):
        J = np.zeros((2, 2))
        J[0, self.source[0]] = self.scale[0]
        J[1, self.source[1]] = self.scale[1]
        return J

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        k = np.empty(2)
        k[self.source[0]] = (y[0] - self.offset[0]) / self.scale[0]
        k[self.source[1]] = (y[1] - self.offset[1]) / self.scale[1]
        return k


SPHERE_KAPPA = AffineMap(scale=(1.973521294, 1.750704373), offset=(-1.85, 0.875))
PSEUDOSPHERE_KAPPA = AffineMap(
    scale=(0.9867606472, 4.406507321), offset=(-1.85, -1.715856588), source=(1, 0)
)


def sphere_angles(x):
    """Longitude and latitude with the principal ``arctan`` branch."""
    x = np.asarray(x, dtype=float)
    if x[0] == 0.0:
        raise DomainError("longitude arctan(x2/x1) undefined at x1 = 0")
    rho = np.hypot(x[0], x[1])
    return np.array([np.arctan(x[1] / x[0]), np.arctan(x[2] / rho)])


def sphere_angles_jacobian(x):
    x = np.asarray(x, dtype=float)
    r2 = x[0] ** 2 + x[1] ** 2
    rho = np.sqrt(r2)
    n2 = r2 + x[2] ** 2
    return np.array(
        [
            [-x[1] / r2, x[0] / r2, 0.0],
            [-x[2] * x[0] / (rho * n2), -x[2] * x[1] / (rho * n2), rho / n2],
        ]
    )


def muller_brown_on_sphere(x):
    """Müller-Brown energy pulled onto the sphere through longitude/latitude."""
    return muller_brown_planar(SPHERE_KAPPA(sphere_angles(x)))[0]


def muller_brown_on_sphere_gradient(x):
    """Ambient gradient of :func:`muller_brown_on_sphere` (any extension off S^2)."""
    k = sphere_angles(x)
    energy, dU = muller_brown_planar(SPHERE_KAPPA(k))
    return energy, sphere_angles_jacobian(x).T @ (SPHERE_KAPPA.jacobian().T @ dU)


def pseudosphere_polar(x):
    """Radius and angle of an ambient point; the angle uses ``atan2``."""
    x = np.asarray(x, dtype=float)
    return np.array([np.hypot(x[0], x[1]), np.arctan2(x[1], x[0])])


def muller_brown_on_pseudosphere(x):
    return muller_brown_planar(PSEUDOSPHERE_KAPPA(pseudosphere_polar(x)))[0]


def muller_brown_on_pseudosphere_gradient(x):
    x = np.asarray(x, dtype=float)
    k = pseudosphere_polar(x)
    energy, dU = muller_brown_planar(PSEUDOSPHERE_KAPPA(k))
    r2 = x[0] ** 2 + x[1] ** 2
    r = np.sqrt(r2)
    J = np.array([[x[0] / r, x[1] / r, 0.0], [-x[1] / r2, x[0] / r2, 0.0]])
    return energy, J.T @ (PSEUDOSPHERE_KAPPA.jacobian().T @ dU)


# ---------------------------------------------------------------------------
# Sphere and stereographic charts
# ---------------------------------------------------------------------------


def _check_pole(pole):
    if pole not in (1, -1):
        raise ValueError(f"pole must be +1 or -1, got {pole}")


def stereo_coords(x, pole=1):
    """Stereographic coordinates of ``x`` projected from ``(0, 0, pole)``."""
    _check_pole(pole)
    x = np.asarray(x, dtype=float)
    denom = 1.0 - pole * x[2]
    if denom <= 1e-15:
        raise DomainError("point coincides with the projection pole")
    return x[:2] / denom


def stereo_param(p, pole=1):
    """Inverse stereographic projection onto the unit sphere."""
    _check_pole(pole)
    p = np.asarray(p, dtype=float)
    nu = p @ p
    return np.array([2 * p[0], 2 * p[1], pole * (nu - 1.0)]) / (nu + 1.0)


def stereo_jacobian(p, pole=1):
    _check_pole(pole)
    p = np.asarray(p, dtype=float)
    nu = p @ p
    d = (nu + 1.0) ** 2
    J = np.empty((3, 2))
    J[0, 0] = 2 * (nu + 1 - 2 * p[0] ** 2) / d
    J[1, 1] = 2 * (nu + 1 - 2 * p[1] ** 2) / d
    J[0, 1] = J[1, 0] = -4 * p[0] * p[1] / d
    J[2] = pole * 4 * p / d
    return J


def stereo_metric(p):
    """Conformal factor ``4 / (1 + nu)^2`` times the identity."""
    p = np.asarray(p, dtype=float)
    f = 4.0 / (1.0 + p @ p) ** 2
    return np.array([[f, 0.0], [0.0, f]])


def stereo_christoffel(p):
    """Closed-form Levi-Civita symbols of the stereographic metric."""
    p = np.asarray(p, dtype=float)
    nu = p @ p
    a = -2 * p[0] / (nu + 1)
    b = -2 * p[1] / (nu + 1)
    G = np.zeros((2, 2, 2))
    G[0, 0, 0] = a
    G[1, 0, 1] = G[1, 1, 0] = a
    G[0, 1, 1] = -a
    G[1, 0, 0] = -b
    G[0, 0, 1] = G[0, 1, 0] = b
    G[1, 1, 1] = b
    return G


def chart_transition(p):
    """Change of stereographic chart, ``p -> p / nu`` (an involution)."""
    p = np.asarray(p, dtype=float)
    nu = p @ p
    if nu == 0.0:
        raise DomainError("the chart origin maps to the other chart's pole")
    return p / nu


def chart_transition_jacobian(p):
    p = np.asarray(p, dtype=float)
    nu = p @ p
    if nu == 0.0:
        raise DomainError("the chart origin maps to the other chart's pole")
    return np.eye(2) / nu - 2 * np.outer(p, p) / nu**2


def sphere_exp(x, W):
    """Exponential map of the unit sphere at ``x`` applied to tangent ``W``."""
    x = np.asarray(x, dtype=float)
    W = np.asarray(W, dtype=float)
    t = np.linalg.norm(W)
    if t == 0.0:
        return x.copy()
    return np.cos(t) * x + np.sin(t) * (W / t)


# ---------------------------------------------------------------------------
# Pseudosphere
# ---------------------------------------------------------------------------


def arcsech(r):
    r = np.asarray(r, dtype=float)
    return np.log((1.0 + np.sqrt(1.0 - r * r)) / r)


def pseudosphere_height(r):
    """Height of the upper half of the pseudosphere above radius ``r``."""
    return arcsech(r) - np.sqrt(1.0 - r * r)


def pseudosphere_param(p):
    """Point of the upper pseudosphere with polar coordinates ``(radius, angle)``."""
    p = np.asarray(p, dtype=float)
    r, theta = p
    if not 0.0 < r <= 1.0:
        raise DomainError(f"pseudosphere radius must lie in (0, 1], got {r}")
    return np.array([r * np.cos(theta), r * np.sin(theta), pseudosphere_height(r)])


def pseudosphere_jacobian(p):
    r, theta = np.asarray(p, dtype=float)
    if not 0.0 < r <= 1.0:
        raise DomainError(f"pseudosphere radius must lie in (0, 1], got {r}")
    dz = -np.sqrt(1.0 - r * r) / r
    return np.array(
        [[np.cos(theta), -r * np.sin(theta)], [np.sin(theta), r * np.cos(theta)], [dz, 0.0]]
    )


def pseudosphere_residual(x):
    """Defining equation ``x3^2 - (arcsech rho - sqrt(1 - rho^2))^2``."""
    x = np.asarray(x, dtype=float)
    rho = np.hypot(x[0], x[1])
    return float(x[2] ** 2 - pseudosphere_height(rho) ** 2)


# ---------------------------------------------------------------------------
# Cubic potential x1 x2 x3 on the sphere
# ---------------------------------------------------------------------------


def xyz_energy(x):
    x = np.asarray(x, dtype=float)
    return float(x[0] * x[1] * x[2])


def xyz_gradient(x):
    x = np.asarray(x, dtype=float)
    return float(x[0] * x[1] * x[2]), np.array([x[1] * x[2], x[0] * x[2], x[0] * x[1]])


def xyz_field_closed_form(p):
    """Steepest-descent field of ``x1 x2 x3`` in the north-pole stereographic chart."""
    p1, p2 = np.asarray(p, dtype=float)
    nu = p1 * p1 + p2 * p2
    d = (nu + 1.0) ** 4
    X1 = 4 * p2 / d * (3 * p1**4 + 2 * p1**2 * p2**2 - p2**4 - 8 * p1**2 + 1)
    X2 = -4 * p1 / d * (p1**4 - 2 * p1**2 * p2**2 - 3 * p2**4 + 8 * p2**2 - 1)
    return np.array([X1, X2])


# (coefficient, power of p1, power of p2)
_L1_TERMS = (
    (1, 11, 0), (5, 9, 2), (10, 7, 4), (10, 5, 6), (5, 3, 8), (1, 1, 10),
    (-5, 9, 0), (28, 7, 2), (50, 5, 4), (-4, 3, 6), (-21, 1, 8), (-6, 7, 0),
    (-130, 5, 2), (-130, 3, 4), (-6, 1, 6), (6, 5, 0), (124, 3, 2),
    (6, 1, 4), (5, 3, 0), (-11, 1, 2), (-1, 1, 0),
)
_L2_TERMS = (
    (1, 10, 1), (5, 8, 3), (10, 6, 5), (10, 4, 7), (5, 2, 9),
    (1, 0, 11), (-21, 8, 1), (-4, 6, 3), (50, 4, 5), (28, 2, 7), (-5, 0, 9),
    (-6, 6, 1), (-130, 4, 3), (-130, 2, 5), (-6, 0, 7), (6, 4, 1),
    (124, 2, 3), (6, 0, 5), (-11, 2, 1), (5, 0, 3), (-1, 0, 1),
)


def _poly_coeffs(terms):
    deg = max(i + j for _, i, j in terms)
    C = np.zeros((deg + 1, deg + 1))
    for c, i, j in terms:
        C[i, j] += c
    return C


_L1_COEFFS = _poly_coeffs(_L1_TERMS)
_L2_COEFFS = _poly_coeffs(_L2_TERMS)


def xyz_line_field(p):
    """The two degree-11 polynomials spanning the line field of ``x1 x2 x3``."""
    p1, p2 = np.asarray(p, dtype=float)
    return np.array(
        [np.polynomial.polynomial.polyval2d(p1, p2, _L1_COEFFS),
         np.polynomial.polynomial.polyval2d(p1, p2, _L2_COEFFS)]
    )


# ---------------------------------------------------------------------------
# Gradient fields in a chart
# ---------------------------------------------------------------------------


def central_gradient(f, p, h=FD_STEP):
    p = np.asarray(p, dtype=float)
    grad = np.empty(p.size)
    for i in range(p.size):
        e = np.zeros(p.size)
        e[i] = h
        grad[i] = (f(p + e) - f(p - e)) / (2 * h)
    return grad


def riemannian_gradient_field(potential, p, g_inv, gradient=None, h=FD_STEP):
    """Steepest-descent field ``-g^{-1} dE`` of a chart potential.

    ``gradient`` supplies the coordinate differential analytically; otherwise
    central differences of ``potential`` with step ``h`` are used.
    """
    g_inv = np.asarray(g_inv, dtype=float)
    if not np.all(np.isfinite(g_inv)):
        raise SingularMetricError(0.0)
    dE = gradient(p) if gradient is not None else central_gradient(potential, p, h)
    return -g_inv @ np.asarray(dE, dtype=float)


# ---------------------------------------------------------------------------
# Manifolds and analytic charts
# ---------------------------------------------------------------------------


class Manifold:
    """Embedded surface: projection, tangent spaces, optional exponential map."""

    name = "manifold"
    ambient_dim = 3
    dim = 2

    def project(self, y):
        raise NotImplementedError

    def residual(self, x):
        raise NotImplementedError

    def tangent_projector(self, x):
        raise NotImplementedError

    def exp(self, x, W):
        raise CapabilityError(f"{self.name} has no closed-form exponential map")

    def tangent_basis(self, x):
        P = self.tangent_projector(x)
        w, v = np.linalg.eigh(P)
        return v[:, -self.dim:]


class Sphere(Manifold):
    name = "sphere"

    def project(self, y):
        y = np.asarray(y, dtype=float)
        return y / np.linalg.norm(y)

    def residual(self, x):
        return float(np.linalg.norm(x) - 1.0)

    def tangent_projector(self, x):
        n = np.asarray(x, dtype=float) / np.linalg.norm(x)
        return np.eye(3) - np.outer(n, n)

    def exp(self, x, W):
        return sphere_exp(x, W)

    def distance(self, x, y):
        return float(np.arccos(np.clip(np.dot(x, y), -1.0, 1.0)))


class Pseudosphere(Manifold):
    name = "pseudosphere"
    min_radius = 1e-3

    def project(self, y):
        y = np.asarray(y, dtype=float)
        r = float(np.clip(np.hypot(y[0], y[1]), self.min_radius, 1.0))
        theta = np.arctan2(y[1], y[0])
        return pseudosphere_param((r, theta))

    def residual(self, x):
        return pseudosphere_residual(x)

    def tangent_projector(self, x):
        r, theta = pseudosphere_polar(x)
        J = pseudosphere_jacobian((r, theta))
        Q, _ = np.linalg.qr(J)
        return Q @ Q.T


class Plane(Manifold):
    name = "plane"
    ambient_dim = 2

    def project(self, y):
        return np.asarray(y, dtype=float).copy()

    def residual(self, x):
        return 0.0

    def tangent_projector(self, x):
        return np.eye(2)

    def exp(self, x, W):
        return np.asarray(x, dtype=float) + np.asarray(W, dtype=float)


class AnalyticChart:
    """A chart given by closed-form coordinates and parameterization."""

    dim = 2

    def __init__(self, chart_id, coords, param, jac_param, domain, metric=None, christoffel=None):
        self.chart_id = chart_id
        if christoffel is not None:
            self.christoffel = christoffel
        self._coords = coords
        self._param = param
        self._jac = jac_param
        self._domain = domain
        self._metric = metric

    def coords(self, x):
        return self._coords(x)

    def param(self, p):
        return self._param(p)

    def jac_param(self, p):
        return self._jac(p)

    def metric(self, p):
        if self._metric is not None:
            return self._metric(p)
        return pullback_metric(self._jac(p))

    def contains(self, p):
        return bool(self._domain(np.asarray(p, dtype=float)))

    def pushforward(self, p, V):
        """Chart components of an ambient tangent vector ``V`` at ``param(p)``."""
        J = self._jac(p)
        return np.linalg.lstsq(J, np.asarray(V, dtype=float), rcond=None)[0]

    def __repr__(self):
        return f"AnalyticChart({self.chart_id!r})"


STEREO_RADIUS2 = 4.0


def stereographic_chart(pole=1, max_nu=STEREO_RADIUS2):
    _check_pole(pole)
    return AnalyticChart(
        chart_id=f"stereo{'+' if pole > 0 else '-'}",
        coords=lambda x: stereo_coords(x, pole),
        param=lambda p: stereo_param(p, pole),
        jac_param=lambda p: stereo_jacobian(p, pole),
        domain=lambda p: p @ p < max_nu,
        metric=stereo_metric,
        christoffel=stereo_christoffel,
    )


def pseudosphere_chart(min_radius=0.05, max_radius=0.999):
    return AnalyticChart(
        chart_id="pseudo",
        coords=pseudosphere_polar,
        param=pseudosphere_param,
        jac_param=pseudosphere_jacobian,
        domain=lambda p: min_radius < p[0] < max_radius,
    )


def plane_chart(bounds=(-2.5, 2.0, -1.5, 3.0)):
    x0, x1, y0, y1 = bounds
    return AnalyticChart(
        chart_id="plane",
        coords=lambda x: np.asarray(x, dtype=float).copy(),
        param=lambda p: np.asarray(p, dtype=float).copy(),
        jac_param=lambda p: np.eye(2),
        domain=lambda p: x0 < p[0] < x1 and y0 < p[1] < y1,
        metric=lambda p: np.eye(2),
        christoffel=lambda p: np.zeros((2, 2, 2)),
    )


# ---------------------------------------------------------------------------
# Named systems
# ---------------------------------------------------------------------------


@dataclass
class PotentialSystem:
    """A manifold, an ambient potential with gradient, and an analytic atlas.

    ``energy_gradient(x)`` returns ``(E, dE/dx)`` for an ambient point; the
    gradient may belong to any smooth extension of ``E`` off the manifold.
    """

    name: str
    manifold: Manifold
    energy_gradient: Callable
    charts: tuple
    kappa: AffineMap | None = None
    planar_to_ambient: Callable | None = field(default=None, repr=False)

    def energy(self, x):
        return self.energy_gradient(x)[0]

    def ambient_field(self, x):
        """Steepest-descent field as an ambient tangent vector."""
        _, dE = self.energy_gradient(x)
        return -self.manifold.tangent_projector(x) @ dE


def _sphere_from_angles(k):
    lon, lat = k
    return np.array([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


def sphere_mb_point(y):
    """Sphere point whose Müller-Brown energy equals ``U(y)`` for planar ``y``."""
    return _sphere_from_angles(SPHERE_KAPPA.inverse(y))


def pseudosphere_mb_point(y):
    return pseudosphere_param(PSEUDOSPHERE_KAPPA.inverse(y))


def get_system(name):
    """Look up a named system: ``sphere-mb``, ``pseudosphere-mb``, ``sphere-xyz``, ``plane-mb``."""
    if name == "sphere-mb":
        return PotentialSystem(
            name, Sphere(), muller_brown_on_sphere_gradient,
            (stereographic_chart(1), stereographic_chart(-1)),
            kappa=SPHERE_KAPPA, planar_to_ambient=sphere_mb_point,
        )
    if name == "sphere-xyz":
        return PotentialSystem(
            name, Sphere(), xyz_gradient, (stereographic_chart(1), stereographic_chart(-1))
        )
    if name == "pseudosphere-mb":
        return PotentialSystem(
            name, Pseudosphere(), muller_brown_on_pseudosphere_gradient, (pseudosphere_chart(),),
            kappa=PSEUDOSPHERE_KAPPA, planar_to_ambient=pseudosphere_mb_point,
        )
    if name == "plane-mb":
        return PotentialSystem(
            name, Plane(), muller_brown_planar, (plane_chart(),),
            planar_to_ambient=lambda y: np.asarray(y, dtype=float).copy(),
        )
    raise KeyError(f"unknown system {name!r}; choose from {', '.join(SYSTEM_NAMES)}")


SYSTEM_NAMES = ("sphere-mb", "pseudosphere-mb", "sphere-xyz", "plane-mb")
