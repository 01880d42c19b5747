"""Sampling-based loss evaluation: assignments, empirical risk, the clustering
decomposition identity, Monte-Carlo risk estimates and the closed-form
generalization bound."""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels, model, solver


class LossError(ValueError):
    pass


@dataclass
class GroundTruth:
    theta: np.ndarray
    weights: np.ndarray      # per-observation generating weight


@dataclass
class ObservationSet:
    """Noisy decisions plus optional generating truth and side information.

    ``side_info[i]`` restricts observation i (i < N') to a subset of candidate
    front indices.  Estimators read only ``points`` and ``side_info``; the
    truth block exists for metric computation alone.
    """

    points: np.ndarray
    truth: GroundTruth = None
    side_info: list = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, float))
        if not np.all(np.isfinite(self.points)):
            raise LossError("observations must be finite")
        if self.side_info is not None:
            for s in self.side_info:
                if len(s) == 0:
                    raise LossError("side-information sets must be nonempty")

    @property
    def radius(self):
        return float(np.max(np.linalg.norm(self.points, axis=1), initial=0.0))

    def __len__(self):
        return self.points.shape[0]


@dataclass
class Assignment:
    idx: np.ndarray          # cluster index per observation
    dist2: np.ndarray        # squared distance to the assigned point

    def __len__(self):
        return self.idx.size


@dataclass
class ClusterStats:
    counts: np.ndarray       # (K,)
    centroids: np.ndarray    # (K, n); rows of empty clusters are invalid
    scatter: np.ndarray      # (K,) mean squared deviation from the centroid
    nonempty: np.ndarray     # (K,) bool


@dataclass
class LossReport:
    value: float
    per_cluster: np.ndarray
    bound_inputs: dict = None
    bound_value: float = None


def _points_of(observations):
    if isinstance(observations, ObservationSet):
        return observations.points, observations.side_info
    return np.atleast_2d(np.asarray(observations, float)), None


def assign(observations, front_points, side_info=None):
    """Map each observation to its nearest admissible front point; equidistant
    candidates resolve to the lowest index."""
    Y, si = _points_of(observations)
    if side_info is None:
        side_info = si
    X = np.atleast_2d(np.asarray(front_points, float))
    if X.shape[0] == 0:
        raise LossError("need at least one front point")
    if side_info is None:
        idx, d2 = kernels.nearest_assign(Y, X)
    else:
        allowed = np.ones((Y.shape[0], X.shape[0]), bool)
        for i, s in enumerate(side_info):
            allowed[i, :] = False
            allowed[i, list(s)] = True
        idx, d2 = kernels.nearest_assign_masked(Y, X, allowed)
        if np.any(idx < 0):
            raise LossError("an observation has an empty admissible set")
    return Assignment(np.asarray(idx), np.asarray(d2))


def empirical_risk(observations, front_points, side_info=None, lam=1.0,
                   with_report=False):
    """Mean squared assigned distance; with side information the restricted
    observations' terms are scaled by lam >= 1."""
    Y, si = _points_of(observations)
    if side_info is None:
        side_info = si
    a = assign(Y, front_points, side_info)
    d2 = a.dist2.copy()
    if side_info is not None and lam != 1.0:
        d2[: len(side_info)] *= lam
    value = float(d2.mean())
    if not with_report:
        return value
    X = np.atleast_2d(np.asarray(front_points, float))
    per = np.zeros(X.shape[0])
    np.add.at(per, a.idx, d2 / Y.shape[0])
    return LossReport(value, per), a


def cluster_stats(observations, assignment, n_clusters):
    Y, _ = _points_of(observations)
    counts = np.bincount(assignment.idx, minlength=n_clusters).astype(float)
    centroids = np.zeros((n_clusters, Y.shape[1]))
    scatter = np.zeros(n_clusters)
    nonempty = counts > 0
    for k in np.where(nonempty)[0]:
        members = Y[assignment.idx == k]
        centroids[k] = members.mean(axis=0)
        scatter[k] = float(((members - centroids[k]) ** 2).sum(axis=1).mean())
    return ClusterStats(counts, centroids, scatter, nonempty)


def cluster_decomposition(observations, assignment, front_points):
    """(1/N) sum_k |C_k| (||centroid_k - x_k||^2 + scatter_k); algebraically
    identical to the empirical risk of the same assignment."""
    Y, _ = _points_of(observations)
    X = np.atleast_2d(np.asarray(front_points, float))
    st = cluster_stats(Y, assignment, X.shape[0])
    total = 0.0
    for k in np.where(st.nonempty)[0]:
        total += st.counts[k] * (
            float(((st.centroids[k] - X[k]) ** 2).sum()) + st.scatter[k]
        )
    return total / Y.shape[0]


def reference_weights(p, k_ref=None, seed=0):
    """Dense weight grid used as the 'exact' front surrogate: 10^4 points for
    two objectives, the 461-point lattice for three."""
    if p == 2:
        return solver.grid_weights(2, 10000 if k_ref is None else k_ref)
    if p == 3:
        return solver.grid_weights(3, 461 if k_ref is None else k_ref, seed=seed)
    return solver.grid_weights(p, 2000 if k_ref is None else k_ref, seed=seed)


def monte_carlo_risk(dmp, theta, generator, n_samples, seed, k_ref=None):
    """Risk estimate at theta: mean squared distance of freshly generated
    observations to a dense reference front, with its standard error.

    ``generator(rng, n)`` must return an (n, dim) array drawn from the
    experiment's data law.
    """
    conc, theta = solver._resolve(dmp, theta)
    rng = np.random.default_rng(seed)
    Y = np.atleast_2d(np.asarray(generator(rng, n_samples), float))
    W = reference_weights(conc.p, k_ref)
    X = solver.front_points(conc, theta, W)
    _, d2 = kernels.nearest_assign(Y, X)
    mean = float(d2.mean())
    stderr = float(d2.std(ddof=1) / math.sqrt(d2.size)) if d2.size > 1 else 0.0
    return mean, stderr, {"k_ref": int(W.shape[0]), "n_samples": int(n_samples)}


def generalization_bound(emp_risk, N, K, B, R, delta):
    """High-probability risk bound: empirical value plus a K- and N-dependent
    complexity term and a confidence term."""
    if not (0.0 < delta < 1.0):
        raise LossError("delta must lie in (0, 1)")
    if N < 1 or K < 1 or B <= 0 or R <= 0:
        raise LossError("N, K >= 1 and B, R > 0 are required")
    extra = 2.0 * K * (B * B + 2.0 * B * R) + (B + R) ** 2 * math.sqrt(math.log(1.0 / delta) / 2.0)
    return float(emp_risk) + extra / math.sqrt(N)
