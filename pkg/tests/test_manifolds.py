import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import angle_between
from isocline.errors import CapabilityError, DomainError
from isocline.geometry import (
    field_norm,
    line_field_direction,
    metric_inverse,
    pullback_metric,
)
from isocline.manifolds import (
    EXPONENT_CLAMP,
    MB_A,
    MB_X0,
    MB_Y0,
    MB_a,
    MB_b,
    MB_c,
    PSEUDOSPHERE_KAPPA,
    SPHERE_KAPPA,
    Plane,
    Pseudosphere,
    Sphere,
    chart_transition,
    chart_transition_jacobian,
    get_system,
    muller_brown_hessian,
    muller_brown_on_pseudosphere,
    muller_brown_on_sphere,
    muller_brown_on_sphere_gradient,
    muller_brown_planar,
    pseudosphere_jacobian,
    pseudosphere_mb_point,
    pseudosphere_param,
    pseudosphere_residual,
    riemannian_gradient_field,
    sphere_angles,
    sphere_exp,
    sphere_mb_point,
    stereo_coords,
    stereo_jacobian,
    stereo_metric,
    stereo_param,
    xyz_energy,
    xyz_field_closed_form,
    xyz_line_field,
)
from isocline.tracer import AnalyticAtlas, PotentialField, field_jacobian, local_frame, newton_polish

coord = st.floats(-3, 3, allow_nan=False)


def random_sphere_points(rng, n):
    x = rng.normal(size=(n, 3))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# -- stereographic atlas ---------------------------------------------------


def test_stereo_coords_examples():
    np.testing.assert_allclose(stereo_coords([0, 0, -1], 1), [0, 0])
    np.testing.assert_allclose(stereo_coords([1, 0, 0], 1), [1, 0])
    with pytest.raises(DomainError):
        stereo_coords([0, 0, 1], 1)
    with pytest.raises(DomainError):
        stereo_coords([0, 0, -1], -1)


def test_stereo_param_examples():
    np.testing.assert_allclose(stereo_param([0, 0]), [0, 0, -1])
    np.testing.assert_allclose(stereo_param([1, 0]), [1, 0, 0])


def test_charts_related_by_transition_map():
    rng = np.random.default_rng(0)
    for x in random_sphere_points(rng, 200):
        p = stereo_coords(x, 1)
        np.testing.assert_allclose(stereo_coords(x, -1), p / (p @ p), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("pole", [1, -1])
def test_stereographic_round_trips(pole):
    rng = np.random.default_rng(1 + pole)
    P = rng.uniform(-2, 2, size=(1000, 2))
    for p in P:
        x = stereo_param(p, pole)
        assert abs(np.linalg.norm(x) - 1) < 1e-12
        np.testing.assert_allclose(stereo_coords(x, pole), p, atol=1e-12)
    for x in random_sphere_points(rng, 1000):
        if pole * x[2] > 0.99:
            continue
        np.testing.assert_allclose(stereo_param(stereo_coords(x, pole), pole), x, atol=1e-12)


def test_stereographic_pullback_is_squared_conformal_factor():
    rng = np.random.default_rng(3)
    for p in rng.uniform(-2, 2, size=(200, 2)):
        g = pullback_metric(stereo_jacobian(p))
        np.testing.assert_allclose(g, 4 / (1 + p @ p) ** 2 * np.eye(2), atol=1e-10)
        np.testing.assert_allclose(stereo_metric(p), g, atol=1e-10)


def test_stereographic_jacobian_matches_finite_differences():
    p = np.array([0.3, -1.1])
    for pole in (1, -1):
        fd = field_jacobian(lambda q: stereo_param(q, pole), p, 1e-6)
        np.testing.assert_allclose(stereo_jacobian(p, pole), fd, atol=1e-9)


def test_chart_transition_examples():
    np.testing.assert_allclose(chart_transition([1.0, 0.0]), [1.0, 0.0])
    np.testing.assert_allclose(chart_transition([2.0, 0.0]), [0.5, 0.0])
    with pytest.raises(DomainError):
        chart_transition([0.0, 0.0])


@settings(max_examples=200, deadline=None)
@given(coord, coord)
def test_chart_transition_is_involution(a, b):
    p = np.array([a, b])
    if p @ p < 1e-6:
        return
    np.testing.assert_allclose(chart_transition(chart_transition(p)), p, rtol=1e-12, atol=1e-14)
    fd = field_jacobian(chart_transition, p, 1e-7 * max(1.0, np.sqrt(p @ p)))
    np.testing.assert_allclose(chart_transition_jacobian(p), fd, rtol=1e-5, atol=1e-5 / (p @ p))


def test_sphere_exponential_map_distance():
    rng = np.random.default_rng(4)
    S = Sphere()
    for x in random_sphere_points(rng, 100):
        W = S.tangent_projector(x) @ rng.normal(size=3)
        W *= rng.uniform(0, 3) / np.linalg.norm(W)
        y = sphere_exp(x, W)
        assert abs(np.linalg.norm(y) - 1) < 1e-12
        assert S.distance(x, y) == pytest.approx(np.linalg.norm(W), abs=1e-8)
    np.testing.assert_array_equal(sphere_exp(x, np.zeros(3)), x)


def test_manifold_capabilities():
    with pytest.raises(CapabilityError):
        Pseudosphere().exp(pseudosphere_param((0.5, 0.0)), np.zeros(3))
    np.testing.assert_allclose(Plane().exp([1.0, 2.0], [0.5, -1.0]), [1.5, 1.0])


def test_tangent_projectors_annihilate_normals():
    x = stereo_param([0.4, 0.9])
    assert np.linalg.norm(Sphere().tangent_projector(x) @ x) < 1e-14
    p = np.array([0.6, 2.0])
    y = pseudosphere_param(p)
    P = Pseudosphere().tangent_projector(y)
    J = pseudosphere_jacobian(p)
    np.testing.assert_allclose(P @ J, J, atol=1e-12)
    assert np.linalg.norm(P @ np.cross(J[:, 0], J[:, 1])) < 1e-12


# -- Müller-Brown ----------------------------------------------------------


def test_muller_brown_table():
    np.testing.assert_array_equal(MB_A, [-200, -100, -170, 15])
    np.testing.assert_array_equal(MB_a, [-1, -1, -6.5, 0.7])
    np.testing.assert_array_equal(MB_b, [0, 0, 11, 0.6])
    np.testing.assert_array_equal(MB_c, [-10, -10, -6.5, 0.7])
    np.testing.assert_array_equal(MB_X0, [1, 0, -0.5, -1])
    np.testing.assert_array_equal(MB_Y0, [0, 0.5, 1.5, 1])


def naive_muller_brown(x, y):
    total = 0.0
    for i in range(4):
        dx, dy = x - MB_X0[i], y - MB_Y0[i]
        total += MB_A[i] * np.exp(MB_a[i] * dx * dx + MB_b[i] * dx * dy + MB_c[i] * dy * dy)
    return total


def test_muller_brown_energy_is_four_term_sum():
    rng = np.random.default_rng(5)
    for y in rng.uniform([-1.5, -0.5], [1.5, 2.0], size=(50, 2)):
        assert muller_brown_planar(y)[0] == pytest.approx(naive_muller_brown(*y), rel=1e-13)


def test_muller_brown_gradient_and_hessian_match_finite_differences():
    rng = np.random.default_rng(6)
    h = 1e-6
    for y in rng.uniform([-1.5, -0.5], [1.5, 2.0], size=(100, 2)):
        fd = np.array([(naive_muller_brown(*(y + e)) - naive_muller_brown(*(y - e))) / (2 * h)
                       for e in np.eye(2) * h])
        grad = muller_brown_planar(y)[1]
        assert np.linalg.norm(grad - fd) <= 1e-6 * max(np.linalg.norm(fd), 1.0)
        fdH = field_jacobian(lambda q: muller_brown_planar(q)[1], y, 1e-5)
        np.testing.assert_allclose(muller_brown_hessian(y), fdH, rtol=1e-5, atol=1e-4)


def test_muller_brown_fixtures_are_critical(mb_equilibria):
    kinds = sorted(e["kind"] for e in mb_equilibria)
    assert kinds == ["saddle", "saddle", "sink", "sink", "sink"]
    for e in mb_equilibria:
        y = np.array(e["point"])
        assert np.linalg.norm(muller_brown_planar(y)[1]) < 1e-8
        assert muller_brown_planar(y)[0] == pytest.approx(e["energy"], rel=1e-12)
    deepest = min(mb_equilibria, key=lambda e: e["energy"])
    np.testing.assert_allclose(deepest["point"], [-0.558, 1.442], atol=1e-3)


def test_newton_polish_reaches_deepest_minimum():
    y = newton_polish(lambda q: muller_brown_planar(q)[1], (-0.56, 1.44), hess_fn=muller_brown_hessian)
    assert np.linalg.norm(muller_brown_planar(y)[1]) < 1e-8


def test_exponent_clamp_keeps_far_field_finite():
    E, grad = muller_brown_planar([40.0, -40.0])
    assert np.isfinite(E) and np.all(np.isfinite(grad))
    assert EXPONENT_CLAMP == 500.0


def test_kappa_maps():
    np.testing.assert_allclose(SPHERE_KAPPA([0.0, 0.0]), [-1.85, 0.875])
    np.testing.assert_allclose(SPHERE_KAPPA([1.0, 1.0]), [1.973521294 - 1.85, 1.750704373 + 0.875])
    # the pseudosphere correspondence swaps its arguments
    np.testing.assert_allclose(PSEUDOSPHERE_KAPPA([1.0, 0.0]), [-1.85, 4.406507321 - 1.715856588])
    np.testing.assert_allclose(PSEUDOSPHERE_KAPPA([0.0, 1.0]), [0.9867606472 - 1.85, -1.715856588])
    for kappa in (SPHERE_KAPPA, PSEUDOSPHERE_KAPPA):
        k = np.array([0.3, 0.7])
        np.testing.assert_allclose(kappa.inverse(kappa(k)), k, atol=1e-14)


def test_sphere_mb_energy_is_chart_independent():
    rng = np.random.default_rng(7)
    for p in rng.uniform(-1.5, 1.5, size=(100, 2)):
        x = stereo_param(p, 1)
        if abs(x[0]) < 1e-3:
            continue
        q = chart_transition(p)
        assert muller_brown_on_sphere(stereo_param(q, -1)) == pytest.approx(muller_brown_on_sphere(x),
                                                                            rel=1e-10, abs=1e-10)


def test_sphere_mb_angle_branch_is_a_domain_error():
    with pytest.raises(DomainError):
        sphere_angles([0.0, 1.0, 0.0])


def test_sphere_mb_gradient_matches_finite_differences():
    x = sphere_mb_point([0.1, 0.8])
    h = 1e-6
    fd = np.array([(muller_brown_on_sphere(x + e) - muller_brown_on_sphere(x - e)) / (2 * h) for e in np.eye(3) * h])
    np.testing.assert_allclose(muller_brown_on_sphere_gradient(x)[1], fd, rtol=1e-6, atol=1e-5)


@pytest.mark.parametrize("name", ["sphere-mb", "pseudosphere-mb"])
def test_chart_gradient_vanishes_at_mapped_equilibria(name, mb_points):
    system = get_system(name)
    atlas = AnalyticAtlas(system.charts)
    for y in mb_points:
        x = system.planar_to_ambient(y)
        assert system.energy(x) == pytest.approx(muller_brown_planar(y)[0], rel=1e-10)
        chart, p = atlas.initial(x)
        grad = chart.jac_param(p).T @ system.energy_gradient(chart.param(p))[1]
        assert np.linalg.norm(grad) < 1e-6


def test_pseudosphere_mb_energy_uses_full_angle():
    y = np.array([0.5, 0.8])
    x = pseudosphere_mb_point(y)
    assert np.arctan2(x[1], x[0]) > np.pi / 2
    assert muller_brown_on_pseudosphere(x) == pytest.approx(muller_brown_planar(y)[0], rel=1e-12)


# -- pseudosphere ----------------------------------------------------------


def test_pseudosphere_boundary_and_domain():
    assert pseudosphere_param((1.0, 0.3))[2] == 0.0
    for bad in (0.0, -0.2, 1.2):
        with pytest.raises(DomainError):
            pseudosphere_param((bad, 0.0))


def test_pseudosphere_defining_equation():
    rng = np.random.default_rng(8)
    for r, th in zip(rng.uniform(0.01, 1.0, 1000), rng.uniform(-np.pi, np.pi, 1000)):
        x = pseudosphere_param((r, th))
        assert abs(pseudosphere_residual(x)) < 1e-12
        assert x[2] >= 0


def brioschi_orthogonal(metric, p, h):
    """Gaussian curvature of a metric with g_12 = 0 from finite differences."""
    def parts(q):
        g = metric(q)
        return g[0, 0], g[1, 1]

    def sqrtEG(q):
        E, G = parts(q)
        return np.sqrt(E * G)

    e1 = np.array([h, 0.0])
    e2 = np.array([0.0, h])

    def dG_du(q):
        return (parts(q + e1)[1] - parts(q - e1)[1]) / (2 * h)

    def dE_dv(q):
        return (parts(q + e2)[0] - parts(q - e2)[0]) / (2 * h)

    t1 = (dG_du(p + e1) / sqrtEG(p + e1) - dG_du(p - e1) / sqrtEG(p - e1)) / (2 * h)
    t2 = (dE_dv(p + e2) / sqrtEG(p + e2) - dE_dv(p - e2) / sqrtEG(p - e2)) / (2 * h)
    return -(t1 + t2) / (2 * sqrtEG(p))


def test_pseudosphere_has_curvature_minus_one():
    metric = lambda p: pullback_metric(pseudosphere_jacobian(p))
    rng = np.random.default_rng(9)
    for r, th in zip(rng.uniform(0.3, 0.9, 20), rng.uniform(-3, 3, 20)):
        p = np.array([r, th])
        g = metric(p)
        assert abs(g[0, 1]) < 1e-12
        np.testing.assert_allclose(np.diag(g), [1 / r**2, r**2], rtol=1e-12)
        assert brioschi_orthogonal(metric, p, 1e-4) == pytest.approx(-1.0, abs=1e-3)


# -- xyz potential ---------------------------------------------------------


def chart_energy(p):
    return xyz_energy(stereo_param(p, 1))


def test_gradient_field_with_identity_metric():
    p = np.array([0.5, 0.2])
    X = riemannian_gradient_field(chart_energy, p, np.eye(2), h=1e-6)
    np.testing.assert_allclose(X, -field_jacobian(lambda q: np.array([chart_energy(q)]), p, 1e-6)[0], rtol=1e-9)
    assert np.all(riemannian_gradient_field(lambda q: 3.0, p, np.eye(2)) == 0)


def chart_energy_gradient(p):
    return stereo_jacobian(p, 1).T @ np.array(xyz_gradient_ambient(stereo_param(p, 1)))


def xyz_gradient_ambient(x):
    return [x[1] * x[2], x[0] * x[2], x[0] * x[1]]


def test_xyz_closed_form_is_coordinate_steepest_descent():
    rng = np.random.default_rng(10)
    for p in [np.array([0.5, 0.2])] + list(rng.uniform(-1.5, 1.5, size=(50, 2))):
        closed = xyz_field_closed_form(p)
        exact = riemannian_gradient_field(chart_energy, p, np.eye(2), gradient=chart_energy_gradient)
        np.testing.assert_allclose(exact, closed, rtol=1e-10, atol=1e-14)
        fd = riemannian_gradient_field(chart_energy, p, np.eye(2), h=1e-5)
        np.testing.assert_allclose(fd, closed, rtol=1e-8, atol=1e-10)
        riemann = riemannian_gradient_field(chart_energy, p, metric_inverse(stereo_metric(p)),
                                            gradient=chart_energy_gradient)
        np.testing.assert_allclose(riemann, (1 + p @ p) ** 2 / 4 * closed, rtol=1e-10, atol=1e-14)


def component_covariant_matrix(p, h=1e-6):
    """a11..a22 from the closed-form field and its central-difference partials."""
    X1, X2 = xyz_field_closed_form(p)
    D = field_jacobian(xyz_field_closed_form, p, h)
    nu = p @ p
    zeta = X1**2 + X2**2
    den = 2 * zeta**1.5
    a11 = ((nu + 1) * (X2**2 * D[0, 0] - X1 * X2 * D[1, 0]) - 2 * X1**2 * X2 * p[1] - 2 * X2**3 * p[1]) / den
    a12 = ((nu + 1) * (X2**2 * D[0, 1] - X1 * X2 * D[1, 1]) + 2 * X1**2 * X2 * p[0] + 2 * X2**3 * p[0]) / den
    a21 = ((nu + 1) * (X1**2 * D[1, 0] - X1 * X2 * D[0, 0]) + 2 * X1**3 * p[1] + 2 * X1 * X2**2 * p[1]) / den
    a22 = ((nu + 1) * (X1**2 * D[1, 1] - X1 * X2 * D[0, 1]) - 2 * X1**3 * p[0] - 2 * X1 * X2**2 * p[0]) / den
    return np.array([[a11, a12], [a21, a22]])


def component_line_field(p, h=1e-6):
    X1, X2 = xyz_field_closed_form(p)
    D = field_jacobian(xyz_field_closed_form, p, h)
    nu = p @ p
    zeta = X1**2 + X2**2
    return np.array([(nu + 1) * (X1 * D[1, 1] - X2 * D[0, 1]) - 2 * zeta * p[0],
                     (nu + 1) * (X2 * D[0, 0] - X1 * D[1, 0]) - 2 * zeta * p[1]])


def test_xyz_covariant_matrix_matches_component_formulas():
    system = get_system("sphere-xyz")
    chart = system.charts[0]
    p = np.array([0.5, 0.2])
    _, A = local_frame(chart, PotentialField(system), p).covariant()
    np.testing.assert_allclose(A, component_covariant_matrix(p), rtol=1e-7, atol=1e-8)


def test_component_line_field_is_parallel_to_polynomials():
    rng = np.random.default_rng(12)
    for p in rng.uniform(-1.2, 1.2, size=(100, 2)):
        L = xyz_line_field(p)
        if np.linalg.norm(L) < 1e-6:
            continue
        assert angle_between(component_line_field(p), L) < 1e-6


def test_line_field_polynomial_structure():
    np.testing.assert_array_equal(xyz_line_field([0.0, 0.0]), [0.0, 0.0])
    rng = np.random.default_rng(13)
    for p in rng.uniform(-2, 2, size=(50, 2)):
        np.testing.assert_allclose(xyz_line_field(-p), -xyz_line_field(p), rtol=1e-13, atol=1e-12)


def test_line_field_agrees_with_kernel_of_covariant_matrix():
    system = get_system("sphere-xyz")
    chart = system.charts[0]
    field = PotentialField(system)
    rng = np.random.default_rng(14)
    checked = 0
    for p in rng.uniform(-1.5, 1.5, size=(200, 2)):
        L = xyz_line_field(p)
        if p @ p >= 2.25 or np.linalg.norm(L) < 1e-6:
            continue
        _, A = local_frame(chart, field, p).covariant()
        Z, _ = line_field_direction(A)
        assert angle_between(Z, L) < 1e-6
        checked += 1
    assert checked > 50


def test_xyz_equilibria_are_common_zeros():
    system = get_system("sphere-xyz")
    chart = system.charts[0]
    c = 1 / np.sqrt(3)
    ambient = [np.array(v, dtype=float) for v in
               [(0, 0, -1), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)]]
    ambient += [np.array([sx * c, sy * c, sz * c]) for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)]
    grad = lambda q: chart.jac_param(q).T @ system.energy_gradient(chart.param(q))[1]
    found = 0
    for x in ambient:
        p0 = stereo_coords(x, 1)
        if not chart.contains(p0):
            continue
        p = newton_polish(grad, p0 + 1e-3)
        np.testing.assert_allclose(p, p0, atol=1e-9)
        X = -metric_inverse(chart.metric(p)) @ grad(p)
        assert field_norm(X, chart.metric(p)) < 1e-10
        assert np.linalg.norm(xyz_line_field(p)) < 1e-9
        found += 1
    assert found == 13


def test_named_systems():
    for name in ("sphere-mb", "pseudosphere-mb", "sphere-xyz", "plane-mb"):
        assert get_system(name).name == name
    with pytest.raises(KeyError):
        get_system("torus-mb")
