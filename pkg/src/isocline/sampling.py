"""Neighbourhood samplers on embedded manifolds.

All samplers take an explicit ``seed`` and build their own
``numpy.random.Generator``; none of them touch global random state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InstabilityError, SamplerStuckError


@dataclass
class PointCloud:
    """``K`` ambient samples around ``center``, optionally with field values."""

    points: np.ndarray
    center: np.ndarray
    radius: float
    field_values: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.center = np.asarray(self.center, dtype=float)
        if len(self.points) < 1:
            raise ValueError("a point cloud needs at least one point")
        if self.field_values is not None:
            self.field_values = np.asarray(self.field_values, dtype=float)
            if self.field_values.shape != self.points.shape:
                raise ValueError("field values must match the points' shape")

    @property
    def K(self):
        return len(self.points)

    def with_field(self, vector_field):
        values = np.array([vector_field(x) for x in self.points])
        return PointCloud(self.points, self.center, self.radius, values)

    def to_csv(self, path):
        n = self.points.shape[1]
        header = [f"x_{i + 1}" for i in range(n)]
        if self.field_values is not None:
            header += [f"X_{i + 1}" for i in range(n)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i, x in enumerate(self.points):
                row = list(x)
                if self.field_values is not None:
                    row += list(self.field_values[i])
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, center=None, radius=float("nan")):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(v) for v in row] for row in reader])
        n_pts = sum(1 for h in header if h.startswith("x_"))
        points = rows[:, :n_pts]
        values = rows[:, n_pts:] if len(header) > n_pts else None
        if center is None:
            center = points[0]
        return cls(points, center, radius, values)


def _ball_distance(manifold, x, center):
    dist = getattr(manifold, "distance", None)
    if dist is not None:
        return dist(x, center)
    return float(np.linalg.norm(np.asarray(x) - center))


def metropolis_sample(center, r, K, manifold, seed, proposal_scale=None, thin=10,
                      burn_in=200, min_acceptance=0.01):
    """Metropolis chain targeting the uniform measure on a ball of ``manifold``.

    Proposals are isotropic ambient Gaussians of scale ``proposal_scale``
    (default ``r / 4``) projected back onto the manifold; a proposal is
    accepted iff it lies within distance ``r`` of ``center`` (geodesic when
    the manifold provides ``distance``, extrinsic otherwise).  The chain starts
    at ``center``, which is the first returned sample; the remaining ``K - 1``
    samples are taken every ``thin`` steps after ``burn_in`` steps.

    Raises
    ------
    SamplerStuckError
        If fewer than ``min_acceptance`` of the burn-in proposals are accepted.
    """
    if not r > 0:
        raise ValueError("sampling radius must be positive")
    if K < 1:
        raise ValueError("K must be at least 1")
    rng = np.random.default_rng(seed)
    center = manifold.project(np.asarray(center, dtype=float))
    scale = r / 4 if proposal_scale is None else proposal_scale
    samples = [center.copy()]
    if K == 1:
        return PointCloud(np.array(samples), center, r)
    x = center.copy()
    accepted = 0
    for it in range(burn_in + thin * (K - 1)):
        y = manifold.project(x + scale * rng.standard_normal(x.size))
        if _ball_distance(manifold, y, center) <= r:
            x = y
            accepted += 1
        if it + 1 == burn_in and accepted < min_acceptance * burn_in:
            raise SamplerStuckError(
                f"acceptance rate {accepted / burn_in:.3%} during burn-in; reduce the proposal scale"
            )
        if it >= burn_in and (it - burn_in + 1) % thin == 0:
            samples.append(x.copy())
    return PointCloud(np.array(samples[:K]), center, r)


def exp_map_sample(center, r, K, seed, manifold):
    """Points ``exp_center(W)`` with ``W`` uniform in the tangent ball of radius ``r``.

    Raises
    ------
    CapabilityError
        If ``manifold`` has no closed-form exponential map.
    """
    center = np.asarray(center, dtype=float)
    manifold.exp(center, np.zeros_like(center))  # raises CapabilityError when unsupported
    rng = np.random.default_rng(seed)
    basis = manifold.tangent_basis(center)
    d = basis.shape[1]
    dirs = rng.standard_normal((K, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = r * rng.uniform(size=K) ** (1.0 / d)
    W = (dirs * radii[:, None]) @ basis.T
    points = np.array([manifold.exp(center, w) for w in W])
    return PointCloud(points, center, r)


def biased_sde_sample(vector_field, phi, jac_phi, gamma_target, zeta, beta, dt, steps, seed,
                      w0, burn_in_fraction=0.2, bound=1e6):
    """Euler-Maruyama run of the harmonically biased SDE.

    Integrates ``dw = (X(w) - zeta Dphi(w)^T (phi(w) - gamma_target)) dt
    + sqrt(2 / beta) dB`` from ``w0`` and returns the time averages of ``w``
    and ``X(w)`` over the steps after the burn-in fraction.

    Raises
    ------
    InstabilityError
        If ``|w|`` exceeds ``bound``; retry with a smaller ``dt``.
    """
    if not (zeta >= 0 and beta > 0 and dt > 0):
        raise ValueError("zeta must be non-negative and beta, dt positive")
    rng = np.random.default_rng(seed)
    w = np.asarray(w0, dtype=float).copy()
    target = np.asarray(gamma_target, dtype=float)
    noise = np.sqrt(2.0 * dt / beta)
    start = int(burn_in_fraction * steps)
    sum_w = np.zeros_like(w)
    sum_X = np.zeros_like(w)
    count = 0
    for i in range(steps):
        Xw = np.asarray(vector_field(w), dtype=float)
        if i >= start:
            sum_w += w
            sum_X += Xw
            count += 1
        drift = Xw - zeta * np.asarray(jac_phi(w)).T @ (np.asarray(phi(w)) - target)
        w = w + dt * drift + noise * rng.standard_normal(w.size)
        if not np.all(np.isfinite(w)) or np.linalg.norm(w) > bound:
            raise InstabilityError(f"SDE diverged at step {i}; reduce dt (currently {dt})")
    return sum_w / count, sum_X / count
