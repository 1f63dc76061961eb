"""Charts learned from point clouds.

Coordinates come from diffusion maps with density normalization; the
coordinate map and its inverse are extended off the samples by Gaussian
process regression with a squared-exponential kernel, whose derivatives are
available in closed form.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import ConditioningError, ConnectivityError, DegenerateCloudError
from .geometry import christoffel_from_parameterization, pullback_metric
from .sampling import metropolis_sample

log = logging.getLogger(__name__)

CHART_FORMAT_VERSION = 1


def median_bandwidth(points):
    """Median of the pairwise distances between distinct points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) < 2:
        raise DegenerateCloudError("need at least two points")
    d = pdist(points)
    d = d[d > 0]
    if d.size == 0:
        raise DegenerateCloudError("all points coincide")
    return float(np.median(d))


@dataclass
class DiffusionEmbedding:
    epsilon: float
    eigenvalues: np.ndarray
    coordinates: np.ndarray
    eigenvectors: np.ndarray
    trivial_eigenvalue: float
    trivial_eigenvector: np.ndarray
    spectrum: np.ndarray


def _fix_signs(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def diffusion_maps(points, epsilon, m):
    """Diffusion-map coordinates of a point cloud.

    The kernel ``exp(-|x - y|^2 / (2 epsilon^2))`` is density-normalized
    (``alpha = 1``), turned into a Markov matrix and diagonalized through its
    symmetric conjugate.  Right eigenvectors are scaled to unit norm in the
    stationary measure and multiplied by their eigenvalues; the constant
    eigenvector is dropped.

    Raises
    ------
    ConnectivityError
        If some point has numerically no neighbours at this bandwidth.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    K = len(points)
    if not epsilon > 0:
        raise ValueError("bandwidth must be positive")
    if K <= m + 1:
        raise ValueError(f"need more than m + 1 = {m + 1} points, got {K}")
    W = np.exp(-squareform(pdist(points, "sqeuclidean")) / (2 * epsilon**2))
    off = W.sum(axis=1) - 1.0
    if np.any(off < 1e-12):
        raise ConnectivityError(
            f"{int(np.sum(off < 1e-12))} points are isolated at bandwidth {epsilon:.3g}"
        )
    q = W.sum(axis=1)
    Wa = W / np.outer(q, q)
    d = Wa.sum(axis=1)
    sd = np.sqrt(d)
    S = Wa / np.outer(sd, sd)
    S = 0.5 * (S + S.T)
    lam, v = np.linalg.eigh(S)
    order = np.argsort(lam)[::-1]
    lam, v = lam[order], v[:, order]
    psi = v / sd[:, None] * np.sqrt(d.sum())
    psi = _fix_signs(psi)
    eigvals = lam[1:m + 1]
    return DiffusionEmbedding(
        epsilon=float(epsilon),
        eigenvalues=eigvals,
        coordinates=psi[:, 1:m + 1] * eigvals,
        eigenvectors=psi[:, 1:m + 1],
        trivial_eigenvalue=float(lam[0]),
        trivial_eigenvector=psi[:, 0],
        spectrum=lam[: min(K, m + 6)],
    )


class GprModel:
    """Zero-mean Gaussian process regressor with a squared-exponential kernel.

    Attributes
    ----------
    inputs : (K, d) ndarray
    alpha : (K, e) ndarray
        Solution of ``(K_rbf + noise I) alpha = targets``.
    length_scale, noise, prior_variance : float
    """

    def __init__(self, inputs, alpha, length_scale, noise, prior_variance=1.0, factor=None):
        self.inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        self.alpha = np.ascontiguousarray(np.asarray(alpha, dtype=float).reshape(len(self.inputs), -1))
        self.length_scale = float(length_scale)
        self.noise = float(noise)
        self.prior_variance = float(prior_variance)
        self._factor = factor

    @property
    def n_outputs(self):
        return self.alpha.shape[1]

    def kernel(self, A, B):
        return self.prior_variance * np.exp(
            -cdist(np.atleast_2d(A), np.atleast_2d(B), "sqeuclidean") / (2 * self.length_scale**2)
        )

    def _factorization(self):
        if self._factor is None:
            self._factor = _factorize(self.kernel(self.inputs, self.inputs), self.noise)[0]
        return self._factor

    def to_dict(self):
        return {
            "inputs": self.inputs.tolist(),
            "alpha": self.alpha.tolist(),
            "length_scale": self.length_scale,
            "noise": self.noise,
            "prior_variance": self.prior_variance,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["inputs"], data["alpha"], data["length_scale"], data["noise"],
                   data.get("prior_variance", 1.0))


def _factorize(Kmat, noise, max_tries=8):
    jitter = max(noise, 0.0)
    n = len(Kmat)
    for _ in range(max_tries):
        try:
            return cho_factor(Kmat + jitter * np.eye(n), lower=True), jitter
        except LinAlgError:
            jitter = max(10 * jitter, 1e-12)
    raise ConditioningError(f"kernel matrix not positive definite even with jitter {jitter:.1e}")


def gpr_fit(inputs, targets, length_scale, noise=1e-10, prior_variance=1.0):
    """Fit a zero-mean GPR model, one coefficient column per output.

    ``noise`` is escalated tenfold until the Cholesky factorization succeeds.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if not length_scale > 0:
        raise ValueError("length scale must be positive")
    model = GprModel(inputs, np.zeros_like(targets), length_scale, noise, prior_variance)
    factor, jitter = _factorize(model.kernel(inputs, inputs), noise)
    if jitter != noise:
        log.debug("GPR jitter escalated from %.1e to %.1e", noise, jitter)
    model.noise = jitter
    model._factor = factor
    model.alpha = np.ascontiguousarray(cho_solve(factor, targets))
    return model


def _weights(model, x):
    x = np.asarray(x, dtype=float)
    diff = x[None, :] - model.inputs
    k = model.prior_variance * np.exp(-np.einsum("ij,ij->i", diff, diff) / (2 * model.length_scale**2))
    return k, diff


def gpr_predict(model, x):
    k, _ = _weights(model, x)
    return k @ model.alpha


def gpr_jacobian(model, x):
    """``(e, d)`` Jacobian: ``-(1/nu^2) sum_l alpha_l k_l (x - x_l)``."""
    k, diff = _weights(model, x)
    return -(model.alpha * k[:, None]).T @ diff / model.length_scale**2


def gpr_hessian(model, x):
    """``(e, d, d)`` Hessian: ``(1/nu^4) sum_l alpha_l k_l ((x - x_l)(x - x_l)^T - nu^2 I)``."""
    k, diff = _weights(model, x)
    nu2 = model.length_scale**2
    wk = model.alpha * k[:, None]
    outer = np.einsum("le,li,lj->eij", wk, diff, diff)
    trace_part = wk.sum(axis=0)[:, None, None] * nu2 * np.eye(diff.shape[1])
    H = (outer - trace_part) / nu2**2
    return 0.5 * (H + H.transpose(0, 2, 1))


def gpr_covariance(model, x, eta=None, norm="fro"):
    """Predictive covariance at ``x`` (outputs are independent and share a kernel).

    Returns ``Sigma`` or, when ``eta`` is given, ``(Sigma, |Sigma| > eta)``.
    """
    k, _ = _weights(model, x)
    var = model.prior_variance - k @ cho_solve(model._factorization(), k)
    Sigma = max(var, 0.0) * np.eye(model.n_outputs)
    if eta is None:
        return Sigma
    return Sigma, bool(np.linalg.norm(Sigma, 2 if norm == "operator" else "fro") > eta)


def pushforward_field(phi_model, x, X, mode="jacobian", dt=1e-6):
    """Chart components ``Dphi(x) X`` of an ambient vector.

    ``mode="finite-difference"`` uses ``(phi(x + dt X) - phi(x)) / dt``
    instead of the closed-form Jacobian.
    """
    X = np.asarray(X, dtype=float)
    if mode == "jacobian":
        return gpr_jacobian(phi_model, x) @ X
    if mode == "finite-difference":
        if not dt > 0:
            raise ValueError("dt must be positive")
        x = np.asarray(x, dtype=float)
        return (gpr_predict(phi_model, x + dt * X) - gpr_predict(phi_model, x)) / dt
    raise ValueError(f"unknown pushforward mode {mode!r}")


@dataclass
class LearnConfig:
    m: int = 2
    noise: float = 1e-10
    eta: float = 0.05
    norm: str = "fro"
    phi_length_scale: float | None = None
    psi_length_scale: float | None = None


class LearnedChart:
    """Chart whose coordinates and parameterization are GPR fits.

    ``phi`` maps ambient points to diffusion coordinates, ``psi`` maps
    coordinates back to ambient offsets from ``origin``.
    """

    def __init__(self, phi, psi, origin, eta, chart_id="learned", norm="fro", embedding=None):
        self.phi = phi
        self.psi = psi
        self.origin = np.asarray(origin, dtype=float)
        self.eta = eta
        self.norm = norm
        self.chart_id = chart_id
        self.embedding = embedding
        self.dim = psi.inputs.shape[1]

    def coords(self, x):
        return gpr_predict(self.phi, x)

    def param(self, p):
        return self.origin + gpr_predict(self.psi, p)

    def jac_param(self, p):
        return gpr_jacobian(self.psi, p)

    def jac_coords(self, x):
        return gpr_jacobian(self.phi, x)

    def metric(self, p):
        return pullback_metric(self.jac_param(p))

    def christoffel(self, p):
        return christoffel_from_parameterization(self.jac_param(p), gpr_hessian(self.psi, p))

    def covariance(self, p):
        return gpr_covariance(self.phi, self.param(p))

    def valid_at(self, x):
        _, leave = gpr_covariance(self.phi, x, eta=self.eta, norm=self.norm)
        return not leave

    def contains(self, p):
        return self.valid_at(self.param(p))

    def pushforward(self, p, V):
        return self.jac_coords(self.param(p)) @ np.asarray(V, dtype=float)

    def to_json(self):
        return json.dumps({
            "version": CHART_FORMAT_VERSION,
            "chart_id": self.chart_id,
            "origin": self.origin.tolist(),
            "eta": self.eta,
            "norm": self.norm,
            "phi": self.phi.to_dict(),
            "psi": self.psi.to_dict(),
        })

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        if data.get("version") != CHART_FORMAT_VERSION:
            raise ValueError(f"unsupported chart format version {data.get('version')}")
        return cls(GprModel.from_dict(data["phi"]), GprModel.from_dict(data["psi"]),
                   data["origin"], data["eta"], data["chart_id"], data["norm"])


def build_learned_chart(cloud, m=2, config=None, chart_id="learned"):
    """Learn a chart from ``cloud``: bandwidth, diffusion map, two GPR fits."""
    config = config or LearnConfig(m=m)
    pts = cloud.points
    if len(pts) <= 2 * m + 2:
        raise ValueError(f"need more than {2 * m + 2} samples for a {m}-dimensional chart")
    eps = median_bandwidth(pts)
    emb = diffusion_maps(pts, eps, m)
    log.debug("diffusion spectrum %s", np.array2string(emb.spectrum, precision=4))
    coords = emb.coordinates
    phi = gpr_fit(pts, coords, config.phi_length_scale or eps, config.noise)
    origin = np.asarray(cloud.center, dtype=float)
    psi_scale = config.psi_length_scale or eps
    psi = gpr_fit(coords, pts - origin, psi_scale, config.noise)
    return LearnedChart(phi, psi, origin, config.eta, chart_id, config.norm, embedding=emb)


class LearnedAtlas:
    """Chart provider that samples and learns a fresh chart around each exit point."""

    def __init__(self, manifold, K=500, r=0.3, m=2, eta=0.05, seed=0, learn_config=None,
                 sampler=None):
        self.manifold = manifold
        self.K = K
        self.r = r
        self.seed = seed
        self.learn_config = learn_config or LearnConfig(m=m, eta=eta)
        self.sampler = sampler or (
            lambda center, seed: metropolis_sample(center, r, K, manifold, seed)
        )
        self.n_charts = 0

    def _build(self, x):
        center = self.manifold.project(np.asarray(x, dtype=float))
        cloud = self.sampler(center, self.seed + self.n_charts)
        chart = build_learned_chart(cloud, self.learn_config.m, self.learn_config,
                                    chart_id=f"learned-{self.n_charts}")
        self.n_charts += 1
        if not chart.contains(chart.coords(center)):
            raise ConditioningError(
                f"{chart.chart_id} does not cover its own centre; eta={self.learn_config.eta:g} is too strict"
            )
        return chart, center

    def initial(self, x):
        chart, center = self._build(x)
        return chart, chart.coords(center)

    def transition(self, chart, p, Z):
        x = chart.param(p)
        new, center = self._build(x)
        q = new.coords(center)
        if Z is None:
            return new, q, None
        V = chart.jac_param(p) @ Z
        return new, q, new.pushforward(q, self.manifold.tangent_projector(center) @ V)
