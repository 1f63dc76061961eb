"""Tracing generalized isoclines until an equilibrium is reached.

The tracer is a small state machine.  At the current chart point it builds
the normalized field ``Y``, its covariant-derivative matrix ``A(Y)`` and the
one-dimensional kernel of that matrix, orients the kernel vector against the
previous direction, and takes an Euler step with a Christoffel correction.
Charts come from a *chart provider* (closed-form atlas or charts learned from
samples); the vector field comes from a *field provider*.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    AmbiguousKernelError,
    AtEquilibriumError,
    DegenerateKernelError,
    DomainError,
    IsoclineError,
    PreconditionError,
)
from .geometry import (
    FD_STEP,
    christoffel_from_derivatives,
    covariant_matrix,
    field_norm,
    line_field_direction,
    metric_derivatives,
    metric_inverse,
    normalize_field,
    normalized_field_jacobian,
)

log = logging.getLogger(__name__)


class ChartExit(IsoclineError):
    """No chart of the provider contains the current point."""


@dataclass
class TracerConfig:
    tau: float = 1e-3
    rho: float = 1e-3
    eta: float = 0.05
    K: int = 500
    Z0: np.ndarray | None = None
    max_steps: int = 100_000
    correction_coeff: float = 1.0
    seed: int = 0
    adaptive: bool = True
    min_step_fraction: float = 1e-6
    approach_fraction: float = 0.5
    energy_ceiling: float | None = None
    fd_step: float = FD_STEP

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        if self.Z0 is not None:
            self.Z0 = np.asarray(self.Z0, dtype=float)
            if not np.linalg.norm(self.Z0) > 0:
                raise ValueError("preferred direction Z0 must be non-zero")


@dataclass
class TraceRecord:
    step: int
    chart_id: str
    point: np.ndarray
    ambient: np.ndarray
    field_norm: float
    kernel_residual: float
    energy: float | None = None
    transport_defect: float = float("nan")


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    converged: bool = False
    status: str = "running"
    message: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def final(self):
        return self.records[-1]

    def chart_points(self):
        return np.array([r.point for r in self.records])

    def ambient_points(self):
        return np.array([r.ambient for r in self.records])

    def extend(self, other, offset):
        for rec in other.records:
            self.records.append(replace(rec, step=rec.step + offset))


@dataclass
class LocalFrame:
    """Everything the tracer needs at one chart point."""

    g: np.ndarray
    g_inv: np.ndarray
    dg: np.ndarray
    gamma: np.ndarray
    X: np.ndarray
    jac_X: np.ndarray
    norm: float

    def covariant(self):
        """``(Y, A(Y))`` for the normalized field."""
        Y = normalize_field(self.X, self.g)
        DY = normalized_field_jacobian(self.X, self.jac_X, self.g, self.dg)
        return Y, covariant_matrix(DY, self.gamma, Y)

    def newton_offset(self):
        """g-length of the linearized distance to the nearest zero of ``X``."""
        try:
            delta = np.linalg.solve(self.jac_X, self.X)
        except np.linalg.LinAlgError:
            return np.inf
        return field_norm(delta, self.g)


def field_jacobian(field_fn, p, h=FD_STEP):
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(p.size):
        e = np.zeros(p.size)
        e[i] = h
        cols.append((field_fn(p + e) - field_fn(p - e)) / (2 * h))
    return np.column_stack(cols)


def local_frame(chart, field_provider, p, h=FD_STEP):
    p = np.asarray(p, dtype=float)
    g = np.asarray(chart.metric(p), dtype=float)
    g_inv = metric_inverse(g)
    if hasattr(chart, "christoffel"):
        gamma = chart.christoffel(p)
        # metric compatibility: d_l g_ij = g_ik G^k_lj + g_jk G^k_li
        low = np.einsum("ik,klj->ilj", g, gamma)
        dg = np.einsum("ilj->lij", low) + np.einsum("jli->lij", low)
    else:
        dg = metric_derivatives(chart.metric, p, h)
        gamma = christoffel_from_derivatives(g_inv, dg)
    X = np.asarray(field_provider.field(chart, p), dtype=float)
    jac_X = field_jacobian(lambda q: field_provider.field(chart, q), p, h)
    return LocalFrame(g, g_inv, dg, gamma, X, jac_X, field_norm(X, g))


def orient_and_normalize(Z_prev, Z_raw, g):
    """Scale ``Z_raw`` to g-unit length, flipping it to agree with ``Z_prev``.

    An orthogonal tie (``g(Z_prev, Z_raw) == 0``) keeps the sign of ``Z_raw``.
    """
    Z_raw = np.asarray(Z_raw, dtype=float)
    g = np.asarray(g, dtype=float)
    sq = float(Z_raw @ g @ Z_raw)
    if not sq > 0:
        raise DegenerateKernelError("kernel vector has zero length")
    sign = -1.0 if float(np.asarray(Z_prev) @ g @ Z_raw) < 0 else 1.0
    return sign * Z_raw / np.sqrt(sq)


def euler_step(gamma_n, Z, gamma_symbols, tau, c=1.0):
    """``gamma + tau Z - c tau^2 Gamma(Z, Z)``."""
    gamma_n = np.asarray(gamma_n, dtype=float)
    Z = np.asarray(Z, dtype=float)
    quad = np.einsum("i,kij,j->k", Z, np.asarray(gamma_symbols, dtype=float), Z)
    return gamma_n + tau * Z - c * tau * tau * quad


def check_convergence(X, g, rho):
    return field_norm(X, g) < rho


class AnalyticAtlas:
    """Chart provider backed by a fixed set of closed-form charts."""

    def __init__(self, charts):
        self.charts = tuple(charts)

    def _candidates(self, x):
        out = []
        for chart in self.charts:
            try:
                p = np.asarray(chart.coords(x), dtype=float)
            except DomainError:
                continue
            if chart.contains(p):
                out.append((float(p @ p), chart, p))
        return out

    def initial(self, x):
        cands = self._candidates(x)
        if not cands:
            raise ChartExit(f"no chart contains the point {np.asarray(x).tolist()}")
        _, chart, p = min(cands, key=lambda c: c[0])
        return chart, p

    def chart_for(self, point, chart_index=0):
        chart = self.charts[chart_index]
        return chart, np.asarray(point, dtype=float)

    def transition(self, chart, p, Z):
        x = chart.param(p)
        V = None if Z is None else chart.jac_param(p) @ Z
        for other in self.charts:
            if other is chart:
                continue
            try:
                q = np.asarray(other.coords(x), dtype=float)
            except DomainError:
                continue
            if other.contains(q):
                return other, q, None if V is None else other.pushforward(q, V)
        raise ChartExit(f"trajectory left every chart at {x.tolist()}")


class PotentialField:
    """Steepest-descent field ``-grad E`` of a :class:`PotentialSystem`.

    With ``pushforward=False`` the field is ``-g^{-1} Dpsi^T dE`` computed in
    the chart; with ``pushforward=True`` the ambient tangent field is mapped
    through the chart's ``pushforward`` (what learned charts use).
    """

    def __init__(self, system, pushforward=False):
        self.system = system
        self.use_pushforward = pushforward

    def field(self, chart, p):
        x = chart.param(p)
        if self.use_pushforward:
            return chart.pushforward(p, self.system.ambient_field(x))
        _, dE = self.system.energy_gradient(x)
        dEp = chart.jac_param(p).T @ dE
        return -metric_inverse(chart.metric(p)) @ dEp

    def energy(self, chart, p):
        return self.system.energy(chart.param(p))


class ChartField:
    """Field provider for a vector field given directly in chart coordinates."""

    def __init__(self, field_fn, energy_fn=None):
        self.field_fn = field_fn
        self.energy_fn = energy_fn

    def field(self, chart, p):
        return np.asarray(self.field_fn(p), dtype=float)

    def energy(self, chart, p):
        return None if self.energy_fn is None else float(self.energy_fn(p))


def _energy(field_provider, chart, p):
    fn = getattr(field_provider, "energy", None)
    if fn is None:
        return None
    try:
        return fn(chart, p)
    except DomainError:
        return None


def trace(config, chart_provider, field_provider, start, chart=None):
    """Follow the isocline through ``start`` until the field vanishes.

    Parameters
    ----------
    config : TracerConfig
    chart_provider : object
        Provides ``initial(x) -> (chart, p)`` and
        ``transition(chart, p, Z) -> (chart, p, Z)``.
    field_provider : object
        Provides ``field(chart, p)`` and optionally ``energy(chart, p)``.
    start : array_like
        Ambient starting point, or a chart point when ``chart`` is given.
    chart : optional
        Chart in which ``start`` is expressed.

    Returns
    -------
    Trajectory
        ``status`` is one of ``converged``, ``max_steps``, ``left_domain``,
        ``numerical_error`` or ``descent_*`` after the steepest-descent
        fallback fired.

    Raises
    ------
    PreconditionError
        If the start point already satisfies the convergence test.
    AmbiguousKernelError
        If the line field is not defined; the partial trajectory is attached.
    """
    if chart is None:
        chart, p = chart_provider.initial(np.asarray(start, dtype=float))
    else:
        p = np.asarray(start, dtype=float)
    traj = Trajectory()
    h = config.fd_step
    Z_prev = None if config.Z0 is None else np.asarray(config.Z0, dtype=float)
    pending_defect = None
    n = 0
    while True:
        if not chart.contains(p):
            try:
                chart, p, Z_prev = chart_provider.transition(chart, p, Z_prev)
            except ChartExit as exc:
                traj.status, traj.message = "left_domain", str(exc)
                return traj
            pending_defect = None
            log.debug("step %d: switched to chart %s", n, chart.chart_id)
            continue
        frame = local_frame(chart, field_provider, p, h)
        energy = _energy(field_provider, chart, p)
        rec = TraceRecord(n, chart.chart_id, p.copy(), np.asarray(chart.param(p)), frame.norm,
                          float("nan"), energy)
        traj.records.append(rec)
        if frame.norm < config.rho:
            if n == 0:
                raise PreconditionError(
                    f"start point is already an equilibrium (|X|_g = {frame.norm:.3e} < rho)"
                )
            traj.converged, traj.status = True, "converged"
            return traj
        try:
            Y, A = frame.covariant()
            if pending_defect is not None:
                rec.transport_defect = field_norm(A @ pending_defect[0], frame.g) * pending_defect[1]
            Z_raw, rec.kernel_residual = line_field_direction(A)
        except AmbiguousKernelError as exc:
            exc.trajectory = traj
            traj.status, traj.message = "numerical_error", str(exc)
            raise
        except AtEquilibriumError as exc:
            traj.status, traj.message = "numerical_error", str(exc)
            return traj
        if config.energy_ceiling is not None and energy is not None and energy > config.energy_ceiling:
            log.info("energy %.3f above ceiling at step %d; switching to steepest descent", energy, n)
            rest = steepest_descent_fallback(p, field_provider, config, chart=chart,
                                             max_steps=max(config.max_steps - n, 0))
            traj.extend(Trajectory(rest.records[1:]), n)
            traj.converged = rest.converged
            traj.status = "descent_" + rest.status
            return traj
        if n >= config.max_steps:
            traj.status = "max_steps"
            return traj
        if Z_prev is None:
            Z_prev = Y
        Z = orient_and_normalize(Z_prev, Z_raw, frame.g)
        step = config.tau
        if config.adaptive:
            cap = config.approach_fraction * frame.newton_offset()
            step = max(min(step, cap), config.min_step_fraction * config.tau)
        p = euler_step(p, Z, frame.gamma, step, config.correction_coeff)
        pending_defect = (Z, step)
        Z_prev = Z
        n += 1


def steepest_descent_fallback(gamma, field_provider, config, chart, max_steps=None):
    """Explicit Euler descent ``p <- p + tau X`` until ``|X|_g < rho``."""
    p = np.asarray(gamma, dtype=float)
    limit = config.max_steps if max_steps is None else max_steps
    traj = Trajectory()
    n = 0
    while True:
        g = chart.metric(p)
        X = np.asarray(field_provider.field(chart, p), dtype=float)
        norm = field_norm(X, g)
        traj.records.append(
            TraceRecord(n, chart.chart_id, p.copy(), np.asarray(chart.param(p)), norm,
                        float("nan"), _energy(field_provider, chart, p))
        )
        if norm < config.rho:
            traj.converged, traj.status = True, "converged"
            return traj
        if n >= limit:
            traj.status = "max_steps"
            return traj
        p = p + config.tau * X
        if not chart.contains(p):
            traj.status = "left_domain"
            return traj
        n += 1


def newton_polish(grad_fn, p0, hess_fn=None, tol=1e-12, max_iter=50, h=1e-6):
    """Newton iteration on ``grad_fn(p) = 0``; Hessian by central differences if absent."""
    p = np.asarray(p0, dtype=float).copy()
    for _ in range(max_iter):
        grad = np.asarray(grad_fn(p), dtype=float)
        H = hess_fn(p) if hess_fn is not None else field_jacobian(grad_fn, p, h)
        H = 0.5 * (H + H.T) if hess_fn is None else H
        step = np.linalg.solve(H, grad)
        p = p - step
        if np.linalg.norm(step) < tol * max(1.0, np.linalg.norm(p)):
            break
    return p
