"""Identifiability diagnostics: Hausdorff semi-distance, sampled-front
membership checks, and a search-based non-uniqueness statistic.

The statistic is the largest L1 displacement from a reference parameter such
that every sampled efficient point of the reference remains (approximately)
efficient under the displaced parameter.  A strictly positive value certifies
non-identifiability; because the displacement is found by search, the value is
a lower bound on the true optimum and zero is inconclusive.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import estimators, kernels, model, solver


@dataclass
class SearchConfig:
    n_random_starts: int = 8
    corner_probes: bool = True
    extra_starts: list = field(default_factory=list)
    step_init: float = 0.25
    step_floor: float = 1e-4
    max_sweeps: int = 120
    seed: int = 0


@dataclass
class IdentifiabilityReport:
    z_test: float
    theta_far: np.ndarray
    membership_slack: float          # max_i min_k distance at theta_far
    n_reference_points: int
    n_membership_weights: int
    n_model_weights: int
    tau: float
    non_identifiable: bool
    diagnostics: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(
            {
                "z_test": self.z_test,
                "theta_far": self.theta_far.tolist(),
                "membership_slack": self.membership_slack,
                "sizes": {
                    "reference_points": self.n_reference_points,
                    "membership_weights": self.n_membership_weights,
                    "model_weights": self.n_model_weights,
                },
                "tau": self.tau,
                "non_identifiable": self.non_identifiable,
                "diagnostics": self.diagnostics,
            },
            sort_keys=True,
        )


def hausdorff_semi(X, Y):
    """sup over X of the Euclidean distance to Y; zero iff X is covered by Y
    (finite sets).  Asymmetric by construction."""
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("sets must be nonempty")
    return float(kernels.hausdorff_semi_core(X, Y))


def default_tau(x):
    return 1e-3 * (1.0 + float(np.linalg.norm(x)))


def is_efficient_under(dmp, theta, x, weights, tau=None, cache=None):
    """(flag, slack): slack is the distance from x to the nearest scalarized
    solution over the weight sample; the flag holds iff slack <= tau."""
    x = np.asarray(x, float)
    if cache is None:
        X = solver.front_points(dmp, theta, weights)
    else:
        X = cache.fronts(theta)
    _, d2 = kernels.nearest_assign(x[None, :], X)
    slack = float(np.sqrt(d2[0]))
    t = default_tau(x) if tau is None else tau
    return slack <= t, slack


def _membership_slacks(points, X):
    _, d2 = kernels.nearest_assign(points, X)
    return np.sqrt(d2)


def test_identifiability(dmp, theta_hat, K, n_ref=200, k_member=200, tau=None,
                         search_cfg=None, zeta=1e-3):
    """Search for the farthest (L1) parameter keeping every sampled efficient
    point of theta_hat inside the k_member-sampled front.  Feasibility is
    enforced by rejection; the returned statistic is the best feasible L1
    distance found (a lower bound)."""
    cfg = search_cfg or SearchConfig()
    space = dmp.space
    theta_hat = space.project(np.asarray(theta_hat, float))
    ref_weights = solver.grid_weights(dmp.p, n_ref, seed=cfg.seed)
    ref_points = solver.front_points(dmp, theta_hat, ref_weights)
    member_weights = solver.grid_weights(dmp.p, k_member, seed=cfg.seed + 1)
    cache = solver.FrontCache(dmp, member_weights)

    taus = np.array([default_tau(x) if tau is None else tau for x in ref_points])

    checks = {"count": 0}

    def feasible(theta):
        checks["count"] += 1
        X = cache.fronts(theta)
        return bool(np.all(_membership_slacks(ref_points, X) <= taus))

    # objective for the rejection search: -L1 for feasible, +inf otherwise
    def neg_l1(theta):
        if not feasible(theta):
            return np.inf
        return -float(np.abs(theta - theta_hat).sum())

    blocks = _objective_blocks(dmp)
    dirs = estimators.direction_set(space, radial_blocks=blocks, anchor=theta_hat)
    starts = [theta_hat] + [space.project(np.asarray(t, float)) for t in cfg.extra_starts]
    if cfg.corner_probes:
        starts.extend(_corner_probes(space, limit=32))
    rng = np.random.default_rng(cfg.seed)
    starts.extend(space.sample(rng, cfg.n_random_starts))

    best_theta, best_l1 = theta_hat, 0.0
    tried = 0
    for th0 in starts:
        tried += 1
        if not feasible(th0):
            continue
        th, fv, _ = estimators.pattern_search_min(
            neg_l1, th0, space, step_init=cfg.step_init,
            step_floor=cfg.step_floor, max_sweeps=cfg.max_sweeps, dirs=dirs)
        if np.isinf(fv):
            continue
        if -fv > best_l1:
            best_l1, best_theta = -fv, th

    # independent re-verification of the reported displacement
    X_far = cache.fronts(best_theta)
    slack = float(_membership_slacks(ref_points, X_far).max())
    return IdentifiabilityReport(
        z_test=best_l1,
        theta_far=best_theta,
        membership_slack=slack,
        n_reference_points=int(ref_points.shape[0]),
        n_membership_weights=int(member_weights.shape[0]),
        n_model_weights=int(K),
        tau=float(taus.max()),
        non_identifiable=best_l1 > zeta,
        diagnostics={"starts_tried": tried, "membership_checks": checks["count"],
                     "forward_solves": cache.solves},
    )


def _objective_blocks(dmp):
    """Coordinate blocks of the free slots grouped by objective index, used
    for radial scaling moves in the displacement search."""
    blocks = {}
    for q, s in enumerate(dmp.slots):
        if s.target in ("obj_lin", "obj_quad_diag"):
            blocks.setdefault(s.index[0], []).append(q)
    return [tuple(v) for _, v in sorted(blocks.items())] or None


def _corner_probes(space, limit=32):
    """Deterministic extreme candidates: per-normalization-row one-hot
    extremes, otherwise plain box corners (capped)."""
    A, b = space.norm_rows, space.norm_rhs
    if not A.shape[0]:
        return list(space.corners(limit=limit))
    probes = []
    supports = [np.where(np.abs(A[r]) > 1e-12)[0] for r in range(A.shape[0])]
    counts = [len(s) for s in supports]
    total = int(np.prod(counts))
    base = space.center()
    for combo in range(min(total, limit)):
        t = base.copy()
        c = combo
        ok = True
        for r, sup in enumerate(supports):
            pick = sup[c % len(sup)]
            c //= len(sup)
            # one-hot within the row: chosen coordinate carries the whole rhs
            for j in sup:
                t[j] = 0.0
            t[pick] = b[r] / A[r, pick]
            if t[pick] < space.lower[pick] - 1e-12 or t[pick] > space.upper[pick] + 1e-12:
                ok = False
                break
        if ok:
            probes.append(space.project(t))
    return probes


# ---------------------------------------------------------------------------
# equivalent bi-objective quadratic fixtures (identical efficient sets)
# ---------------------------------------------------------------------------

#: monomial coefficients (q1, q2, c1, c2) per objective, instance one and two
EQUIV_COEFFS_A = np.array([1.0, 2.0, 6.0, 2.0, 2.0, 1.0, -12.0, -10.0])
EQUIV_COEFFS_B = np.array([7.0, 11.0, 19.0, 0.0, 12.0, 6.0, -72.0, -60.0])

_EQUIV_G = np.array([[3.0, -1.0], [0.0, 1.0]])
_EQUIV_H = np.array([6.0, 3.0])


def equivalent_pair_instance(name="equiv-pair"):
    """Bi-objective quadratic template over the shared triangle-like region
    with all eight monomial coefficients free; instances A and B below have
    identical efficient sets despite distinct parameters."""
    lo = np.array([0.5, 0.5, -100.0, -100.0, 0.5, 0.5, -100.0, -100.0])
    hi = np.array([40.0, 40.0, 50.0, 50.0, 40.0, 40.0, 50.0, 50.0])
    space = model.ParamSpace(lo, hi)
    quad_mask = np.ones((2, 2), bool)
    lin_mask = np.ones((2, 2), bool)
    inst = model.build_mqp_quad_slots(
        [np.diag([2.0, 4.0]), np.diag([4.0, 2.0])],
        [[6.0, 2.0], [-12.0, -10.0]],
        _EQUIV_G, _EQUIV_H, quad_mask, lin_mask, space, name=name,
    )
    return inst


def parametric_front_a(w):
    """Closed-form scalarized solution of instance A as a function of the
    first weight."""
    x1 = (6.0 - 9.0 * w) / (2.0 - w) if w <= 2.0 / 3.0 else 0.0
    if w <= 2.0 / 9.0:
        x2 = 3.0
    elif w <= 5.0 / 6.0:
        x2 = (5.0 - 6.0 * w) / (1.0 + w)
    else:
        x2 = 0.0
    return np.array([x1, x2])


def parametric_front_b(w):
    """Closed-form scalarized solution of instance B; coincides with
    instance A under the reparameterization w -> 6w/5."""
    x1 = (36.0 - 45.0 * w) / (12.0 - 5.0 * w) if w <= 4.0 / 5.0 else 0.0
    if w <= 4.0 / 15.0:
        x2 = 3.0
    else:
        x2 = (30.0 - 30.0 * w) / (6.0 + 5.0 * w)
    return np.array([x1, x2])
