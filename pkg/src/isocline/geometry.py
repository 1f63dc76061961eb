"""Differential-geometric kernels evaluated in a single chart.

Every routine here works on plain numpy arrays in chart coordinates.  Index
conventions:

* ``gamma[k, i, j]`` is the Christoffel symbol with upper index ``k`` and
  lower indices ``i, j``.
* The covariant-derivative matrix ``a[k, i]`` has row index ``k`` (component
  of the result) and column index ``i`` (direction of differentiation), so
  ``a @ v`` is the coordinate vector of the covariant derivative of ``W``
  along ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .errors import AmbiguousKernelError, AtEquilibriumError, SingularMetricError

FD_STEP = 1e-5
RANK_GAP = 1e-8


@dataclass(frozen=True)
class MetricData:
    """Metric tensor, its inverse and the Christoffel symbols at a point."""

    g: np.ndarray
    g_inv: np.ndarray
    gamma: np.ndarray


def pullback_metric(jac_psi):
    """Return ``Dpsi^T Dpsi``, the metric induced by a parameterization.

    Parameters
    ----------
    jac_psi : (n, m) array_like
        Jacobian of the parameterization with ``n >= m``.

    Raises
    ------
    SingularMetricError
        If ``jac_psi`` does not have full column rank.
    """
    jac = np.atleast_2d(np.asarray(jac_psi, dtype=float))
    n, m = jac.shape
    if n < m:
        raise ValueError(f"parameterization Jacobian must be tall, got {n}x{m}")
    sv = np.linalg.svd(jac, compute_uv=False)
    if sv[-1] <= 1e-14 * max(sv[0], 1e-300):
        raise SingularMetricError(float(sv[-1]))
    g = jac.T @ jac
    return 0.5 * (g + g.T)


def metric_inverse(g):
    g = np.asarray(g, dtype=float)
    if g.shape == (2, 2):
        det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
        scale = max(abs(g[0, 0]), abs(g[1, 1]), abs(g[0, 1]), abs(g[1, 0]), 1e-300)
        if abs(det) <= 1e-14 * scale * scale or not np.isfinite(det):
            raise SingularMetricError(float(np.linalg.svd(g, compute_uv=False)[-1]))
        return np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]]) / det
    sv = np.linalg.svd(g, compute_uv=False)
    if sv[-1] <= 1e-14 * max(sv[0], 1e-300):
        raise SingularMetricError(float(sv[-1]))
    return np.linalg.inv(g)


def metric_derivatives(metric_field, p, h=FD_STEP):
    """Central-difference partials ``dg[l, i, j] = d g_ij / d p^l``."""
    p = np.asarray(p, dtype=float)
    m = p.size
    dg = np.empty((m, m, m))
    for l in range(m):
        e = np.zeros(m)
        e[l] = h
        dg[l] = (np.asarray(metric_field(p + e)) - np.asarray(metric_field(p - e))) / (2 * h)
    return dg


def christoffel_from_derivatives(g_inv, dg):
    """Levi-Civita symbols from the inverse metric and metric partials.

    ``dg[l, i, j]`` holds the derivative of ``g_ij`` along coordinate ``l``.
    The result is symmetrized in its lower indices so the torsion-free
    symmetry holds exactly.
    """
    # first kind: c[l, i, j] = 1/2 (d_j g_li + d_i g_lj - d_l g_ij)
    first = 0.5 * (
        np.einsum("jli->lij", dg) + np.einsum("ilj->lij", dg) - dg
    )
    gamma = np.einsum("kl,lij->kij", g_inv, first)
    return 0.5 * (gamma + gamma.transpose(0, 2, 1))


def christoffel_from_metric(metric_field, p, h=FD_STEP):
    """Christoffel symbols of ``metric_field`` at ``p`` by central differences.

    Parameters
    ----------
    metric_field : callable
        Maps a chart point to the ``(m, m)`` metric matrix there.
    p : (m,) array_like
        Chart point.
    h : float
        Finite-difference step.

    Returns
    -------
    (m, m, m) ndarray
        ``gamma[k, i, j]``.
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    p = np.asarray(p, dtype=float)
    g_inv = metric_inverse(metric_field(p))
    return christoffel_from_derivatives(g_inv, metric_derivatives(metric_field, p, h))


def christoffel_from_parameterization(jac_psi, hess_psi):
    """Christoffel symbols of a pullback metric from first and second derivatives.

    For ``g = Dpsi^T Dpsi`` the symbols are ``g^{kl} <d_l psi, d_i d_j psi>``.
    ``hess_psi[a, i, j]`` is the second derivative of ambient component ``a``.
    """
    jac = np.asarray(jac_psi, dtype=float)
    hess = np.asarray(hess_psi, dtype=float)
    g_inv = metric_inverse(pullback_metric(jac))
    first = np.einsum("al,aij->lij", jac, hess)
    gamma = np.einsum("kl,lij->kij", g_inv, first)
    return 0.5 * (gamma + gamma.transpose(0, 2, 1))


def metric_data(metric_field, p, h=FD_STEP):
    g = np.asarray(metric_field(np.asarray(p, dtype=float)), dtype=float)
    g_inv = metric_inverse(g)
    gamma = christoffel_from_derivatives(g_inv, metric_derivatives(metric_field, p, h))
    return MetricData(g=g, g_inv=g_inv, gamma=gamma)


def covariant_matrix(jac_W, gamma, W):
    """Matrix of ``v -> nabla_v W``: ``a[k, i] = dW^k/dp^i + gamma[k, i, j] W^j``."""
    jac_W = np.asarray(jac_W, dtype=float)
    return jac_W + np.einsum("kij,j->ki", np.asarray(gamma, dtype=float), np.asarray(W, dtype=float))


def field_norm(X, g):
    """``sqrt(g(X, X))``."""
    X = np.asarray(X, dtype=float)
    return float(np.sqrt(max(X @ np.asarray(g) @ X, 0.0)))


def normalize_field(X, g, tol=1e-300):
    """Scale ``X`` to unit length in the metric ``g``.

    Raises
    ------
    AtEquilibriumError
        If ``g(X, X) <= tol**2``; the caller is sitting on an equilibrium.
    """
    X = np.asarray(X, dtype=float)
    sq = float(X @ np.asarray(g) @ X)
    if not sq > tol * tol:
        raise AtEquilibriumError(np.sqrt(max(sq, 0.0)))
    return X / np.sqrt(sq)


def normalized_field_jacobian(X, jac_X, g, dg):
    """Coordinate Jacobian of ``Y = X / sqrt(g(X, X))``.

    Uses the product rule instead of differencing ``Y`` directly, which stays
    accurate arbitrarily close to an equilibrium.
    """
    X = np.asarray(X, dtype=float)
    jac_X = np.asarray(jac_X, dtype=float)
    s2 = float(X @ g @ X)
    if not s2 > 0:
        raise AtEquilibriumError(0.0)
    s = np.sqrt(s2)
    # d s^2 / dp^i = 2 X^T g dX[:, i] + X^T dg[i] X
    ds2 = 2.0 * (X @ g) @ jac_X + np.einsum("a,iab,b->i", X, dg, X)
    return jac_X / s - np.outer(X, ds2) / (2.0 * s2 * s)


def line_field_direction(A_Y, rank_gap=RANK_GAP):
    """Unit right-singular vector of the smallest singular value of ``A_Y``.

    Returns
    -------
    Z : (m,) ndarray
        Unit Euclidean vector with ``|A_Y @ Z| = sigma_min``.
    residual : float
        ``sigma_min / sigma_max``.

    Raises
    ------
    AmbiguousKernelError
        When the second-smallest singular value is also negligible, i.e. the
        kernel is not one-dimensional.
    """
    A = np.atleast_2d(np.asarray(A_Y, dtype=float))
    m = A.shape[0]
    if m < 2:
        raise ValueError("line field needs at least two dimensions")
    _, s, vt = np.linalg.svd(A)
    smax = s[0]
    if not smax > 0 or s[-2] / smax < rank_gap:
        raise AmbiguousKernelError(s)
    return vt[-1].copy(), float(s[-1] / smax)


def _perm_sign(perm):
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def determinant_leibniz(M):
    """Determinant by the permutation expansion; exact for small matrices."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n == 0:
        return 1.0
    total = 0.0
    for perm in permutations(range(n)):
        term = float(_perm_sign(perm))
        for i, j in enumerate(perm):
            term *= M[i, j]
        total += term
    return total


def adjugate(M):
    """Transpose of the cofactor matrix, defined for singular ``M`` as well."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        return np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]])
    adj = np.empty_like(M)
    idx = np.arange(n)
    for i in range(n):
        for j in range(n):
            minor = M[np.ix_(idx != i, idx != j)]
            adj[j, i] = (-1) ** (i + j) * determinant_leibniz(minor)
    return adj
