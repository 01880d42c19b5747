"""Parameter estimation from noisy efficient-solution observations.

Two outer drivers share one derivative-free inner fit:

* a clustering estimator alternating nearest-point assignment with a
  parametric update on cluster centroids, and
* a consensus ADMM estimator splitting the observations into groups with
  local parameters tied to a global average through scaled duals.

The inner update is a multi-start pattern search over the free parameter
coordinates; every candidate evaluation prices a full weight-sample front
through the forward solver (exact convex solves), so no mixed-integer
machinery is needed in-process.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from . import kernels, loss, model, solver


class EstimatorError(RuntimeError):
    pass


@dataclass
class FitConfig:
    method: str = "pattern-search"   # or "coordinate-descent", "nelder-mead"
    n_starts: int = 5                # previous theta + kkt start + random draws
    max_sweeps: int = 200            # per-start sweep cap for the search
    step_init: float = 0.1           # relative to the box width
    step_floor: float = 1e-4
    theta_tol: float = 1e-9
    seed: int = 0
    use_kkt_start: bool = True
    kkt_rounds: int = 3
    n_scout: int = 0                 # extra seeded box samples ranked before the local stage
    nm_polish: bool = False          # simplex polish of the best local result

    def __post_init__(self):
        if self.n_starts < 1 or self.max_sweeps < 1:
            raise EstimatorError("counts must be at least 1")
        if self.theta_tol <= 0:
            raise EstimatorError("tolerance must be positive")


@dataclass
class EstimateResult:
    theta: model.ParamVector
    front: np.ndarray
    assignment: loss.Assignment
    objective: float
    trace: list                      # (phase, objective) tuples
    assignment_changes: list
    wall_time: float
    seed: int
    outer_iterations: int = 0
    weights: np.ndarray = None
    extra: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(
            {
                "theta": self.theta.values.tolist(),
                "objective": self.objective,
                "assignment": self.assignment.idx.tolist(),
                "trace": [[p, v] for p, v in self.trace],
                "assignment_changes": [int(c) for c in self.assignment_changes],
                "outer_iterations": self.outer_iterations,
                "wall_time": self.wall_time,
                "seed": self.seed,
            },
            sort_keys=True,
        )


@dataclass
class AdmmState:
    theta: np.ndarray
    locals_: np.ndarray              # (T, d)
    duals: np.ndarray                # (T, d) scaled duals
    rho: float
    iterations: int
    r_pri: list
    r_dual: list
    bar_history: list                # per-iteration average of the locals
    locals_history: list             # per-iteration (T, d) snapshots
    converged: bool = False
    diverged: bool = False


# ---------------------------------------------------------------------------
# direction sets and pattern search over a ParamSpace
# ---------------------------------------------------------------------------

def direction_set(space, radial_blocks=None, anchor=None):
    """Signed moves that keep the normalization rows satisfied: plain
    coordinate moves for untouched coordinates, pairwise exchange moves within
    each normalization support, plus optional per-block radial moves around an
    anchor point."""
    d = space.dim
    A = space.norm_rows
    dirs = []
    touched = (np.abs(A) > 1e-12).any(axis=0) if A.shape[0] else np.zeros(d, bool)
    for j in range(d):
        if not touched[j]:
            v = np.zeros(d)
            v[j] = 1.0
            dirs.append(v)
            dirs.append(-v)
    for r in range(A.shape[0]):
        sup = np.where(np.abs(A[r]) > 1e-12)[0]
        for qi in range(len(sup)):
            for qj in range(qi + 1, len(sup)):
                v = np.zeros(d)
                v[sup[qi]] = 1.0 / A[r, sup[qi]]
                v[sup[qj]] = -1.0 / A[r, sup[qj]]
                v /= np.linalg.norm(v)
                dirs.append(v)
                dirs.append(-v)
    if radial_blocks and anchor is not None:
        for block in radial_blocks:
            v = np.zeros(d)
            v[list(block)] = anchor[list(block)]
            nv = np.linalg.norm(v)
            if nv > 1e-12 and not touched[list(block)].any():
                dirs.append(v / nv)
                dirs.append(-v / nv)
    return np.array(dirs) if dirs else np.zeros((0, d))


def pattern_search_min(f, theta0, space, step_init=0.1, step_floor=1e-4,
                       max_sweeps=200, dirs=None):
    """First-improvement compass search with halving steps; moves leaving the
    box are rejected, so normalizations stay exact along the direction set.
    Only strict improvements are accepted: an already optimal start is
    returned unchanged.  Returns (theta, value, evaluations)."""
    if dirs is None:
        dirs = direction_set(space)
    widths = space.upper - space.lower
    scale = np.empty(len(dirs))
    for q, v in enumerate(dirs):
        sup = np.abs(v) > 1e-12
        scale[q] = widths[sup].mean() if sup.any() else 1.0
    th = space.project(np.asarray(theta0, float))
    fv = f(th)
    evals = 1
    step = step_init
    sweeps = 0
    while step >= step_floor and sweeps < max_sweeps:
        sweeps += 1
        improved = False
        for q, v in enumerate(dirs):
            cand = th + step * scale[q] * v
            if np.any(cand < space.lower - 1e-12) or np.any(cand > space.upper + 1e-12):
                continue
            cand = np.clip(cand, space.lower, space.upper)
            fc = f(cand)
            evals += 1
            if fc < fv - 1e-13 * (1.0 + abs(fv)):
                th, fv = cand, fc
                improved = True
                break
        if not improved:
            step *= 0.5
    return th, fv, evals


def _nelder_mead_min(f, theta0, space, max_iter):
    from scipy.optimize import minimize

    def wrapped(t):
        return f(space.project(t))

    res = minimize(wrapped, np.asarray(theta0, float), method="Nelder-Mead",
                   options={"maxiter": max_iter, "xatol": 1e-8, "fatol": 1e-12})
    th = space.project(res.x)
    return th, f(th), int(res.nfev) + 1


# ---------------------------------------------------------------------------
# inner parametric fit shared by both outer drivers
# ---------------------------------------------------------------------------

def inner_fit(dmp, weights, targets, counts, space, theta_init, proximal=None,
              cfg=None, cache=None):
    """Minimize the count-weighted mean squared distance from the targets to
    the sampled front of theta (targets re-assignable to any sampled weight),
    plus an optional proximal term 0.5 * rho * ||theta - anchor||^2.

    ``proximal`` is a (rho, anchor) pair.  Returns (theta, value, info dict).
    """
    cfg = cfg or FitConfig()
    targets = np.atleast_2d(np.asarray(targets, float))
    counts = np.asarray(counts, float)
    denom = counts.sum()
    cache = cache or solver.FrontCache(dmp, weights)
    rho, anchor = (0.0, None) if proximal is None else proximal

    def F(theta):
        X = cache.fronts(theta)
        _, d2 = kernels.nearest_assign(targets, X)
        val = float((counts * d2).sum() / denom)
        if rho:
            val += 0.5 * rho * float(((theta - anchor) ** 2).sum())
        return val

    pool = [space.project(np.asarray(theta_init, float))]
    if cfg.use_kkt_start and cfg.n_starts >= 2:
        try:
            pool.append(kkt_init(dmp, targets, np.atleast_2d(weights),
                                 rounds=cfg.kkt_rounds, seed=cfg.seed))
        except Exception:
            pass
    rng = np.random.default_rng(cfg.seed)
    need = max(cfg.n_starts - len(pool), 0) + cfg.n_scout
    if need:
        pool.extend(space.sample(rng, need))
    total_evals = 0
    scored = []
    for th0 in pool:
        scored.append((F(th0), tuple(th0)))
        total_evals += 1
    scored.sort(key=lambda t: t[0])
    starts = [np.array(t[1]) for t in scored[: cfg.n_starts]]

    best_th, best_f = starts[0], scored[0][0]
    searcher = {
        "pattern-search": pattern_search_min,
        "coordinate-descent": pattern_search_min,
    }.get(cfg.method)
    for th0 in starts:
        if searcher is None:
            th, fv, ev = _nelder_mead_min(F, th0, space, cfg.max_sweeps * 10)
        else:
            th, fv, ev = searcher(F, th0, space, cfg.step_init, cfg.step_floor,
                                  cfg.max_sweeps)
        total_evals += ev
        if fv < best_f - 1e-15:
            best_th, best_f = th, fv
    if cfg.nm_polish and space.dim >= 2:
        th, fv, ev = _nelder_mead_min(F, best_th, space, 80 * space.dim)
        total_evals += ev
        if fv < best_f - 1e-15:
            best_th, best_f = th, fv
    capped = total_evals >= cfg.n_starts * cfg.max_sweeps * max(1, 2 * space.dim)
    return best_th, best_f, {"evaluations": total_evals, "capped": capped}


# ---------------------------------------------------------------------------
# k-means++ initialization
# ---------------------------------------------------------------------------

def _kmeans_once(Y, K, rng, lloyd_iters=60):
    N = Y.shape[0]
    K = min(K, N)
    centers = np.empty((K, Y.shape[1]))
    centers[0] = Y[rng.integers(N)]
    d2 = ((Y - centers[0]) ** 2).sum(axis=1)
    for k in range(1, K):
        tot = d2.sum()
        if tot <= 0:
            centers[k] = Y[rng.integers(N)]
        else:
            centers[k] = Y[rng.choice(N, p=d2 / tot)]
        d2 = np.minimum(d2, ((Y - centers[k]) ** 2).sum(axis=1))
    prev = None
    for _ in range(lloyd_iters):
        idx, d2 = kernels.nearest_assign(Y, centers)
        if prev is not None and np.array_equal(idx, prev):
            break
        prev = idx
        for k in range(K):
            members = Y[idx == k]
            if members.shape[0]:
                centers[k] = members.mean(axis=0)
    counts = np.bincount(idx, minlength=K).astype(float)
    return centers, counts, float(d2.sum())


def kmeans_plus_plus(Y, K, restarts=50, seed=0):
    """Best (by within-cluster sum of squares) of seeded k-means++ runs."""
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        centers, counts, sse = _kmeans_once(Y, K, rng)
        if best is None or sse < best[2]:
            best = (centers, counts, sse)
    return best[0], best[1]


# ---------------------------------------------------------------------------
# clustering-based estimator
# ---------------------------------------------------------------------------

def estimate_clustering(dmp, observations, weights, fitcfg=None, init="kmeans++",
                        theta0=None, seed=0, max_outer=5, side_lambda=1.0,
                        kmeans_restarts=50):
    """Alternate assignment and parametric update until the assignments stop
    changing or the outer-iteration cap is reached.  The recorded objective is
    non-increasing across both step kinds."""
    t_start = time.perf_counter()
    obs = observations if isinstance(observations, loss.ObservationSet) else \
        loss.ObservationSet(np.asarray(observations, float))
    Y = obs.points
    W = np.atleast_2d(np.asarray(weights, float))
    cfg = fitcfg or FitConfig(seed=seed)
    cache = solver.FrontCache(dmp, W)

    def risk_at(theta):
        X = cache.fronts(theta)
        a = loss.assign(Y, X, obs.side_info)
        d2 = a.dist2.copy()
        if obs.side_info is not None and side_lambda != 1.0:
            d2[: len(obs.side_info)] *= side_lambda
        return float(d2.mean()), a, X

    if init == "kmeans++":
        centers, counts = kmeans_plus_plus(Y, W.shape[0], restarts=kmeans_restarts, seed=seed)
        theta, _, _ = inner_fit(dmp, W, centers, counts, dmp.space,
                                dmp.space.center(), cfg=cfg, cache=cache)
    elif init == "kkt":
        theta = kkt_init(dmp, obs, W, seed=seed)
    elif init == "theta0":
        if theta0 is None:
            raise EstimatorError("init='theta0' requires a starting parameter")
        theta = dmp.space.project(np.asarray(theta0, float))
    else:
        raise EstimatorError("unknown init mode %r" % init)

    trace = []
    changes = []
    seen_assignments = set()
    prev_idx = None
    outer = 0
    assignment = None
    objective = np.inf
    while outer < max_outer:
        outer += 1
        objective, assignment, X = risk_at(theta)
        trace.append(("assign", objective))
        changed = len(Y) if prev_idx is None else int((assignment.idx != prev_idx).sum())
        changes.append(changed)
        if prev_idx is not None and changed == 0:
            break
        seen_assignments.add(assignment.idx.tobytes())
        prev_idx = assignment.idx
        stats = loss.cluster_stats(Y, assignment, W.shape[0])
        live = stats.nonempty
        theta, _, _ = inner_fit(dmp, W, stats.centroids[live], stats.counts[live],
                                dmp.space, theta, cfg=cfg, cache=cache)
        objective, assignment, X = risk_at(theta)
        trace.append(("update", objective))

    front = cache.fronts(theta)
    return EstimateResult(
        theta=model.ParamVector(theta, dmp.slots),
        front=front,
        assignment=assignment,
        objective=objective,
        trace=trace,
        assignment_changes=changes,
        wall_time=time.perf_counter() - t_start,
        seed=seed,
        outer_iterations=outer,
        weights=W,
        extra={"forward_solves": cache.solves,
               "distinct_assignments": len(seen_assignments)},
    )


# ---------------------------------------------------------------------------
# consensus ADMM estimator
# ---------------------------------------------------------------------------

def _admm_fit_cfg(seed):
    return FitConfig(n_starts=1, max_sweeps=150, step_init=0.1, step_floor=2e-5,
                     seed=seed, use_kkt_start=False)


def estimate_admm(dmp, observations, weights, rho=0.5, n_groups=None,
                  eps_pri=1e-3, eps_dual=1e-3, theta0=None, max_iter=100,
                  fitcfg=None, seed=0):
    """Consensus splitting over contiguous equal observation groups: local
    updates minimize their group loss plus a proximal pull toward the global
    average; scaled duals accumulate the disagreement.  Stops when both
    residual norms fall below their tolerances."""
    t_start = time.perf_counter()
    obs = observations if isinstance(observations, loss.ObservationSet) else \
        loss.ObservationSet(np.asarray(observations, float))
    Y = obs.points
    N = Y.shape[0]
    W = np.atleast_2d(np.asarray(weights, float))
    T = n_groups or max(1, N // 2)
    T = min(T, N)
    size = N // T
    blocks = [Y[t * size:(t + 1) * size] if t < T - 1 else Y[(T - 1) * size:]
              for t in range(T)]
    d = dmp.space.dim
    theta = dmp.space.project(np.zeros(d) if theta0 is None else np.asarray(theta0, float))
    locals_ = np.tile(theta, (T, 1))
    duals = np.zeros((T, d))
    cache = solver.FrontCache(dmp, W)
    cfg = fitcfg or _admm_fit_cfg(seed)

    r_pri_hist, r_dual_hist, bar_hist, locals_hist = [], [], [], []
    bar_prev = theta.copy()
    converged = diverged = False
    it = 0
    while it < max_iter:
        it += 1
        step0 = cfg.step_init if it == 1 else max(cfg.step_floor * 4, 0.02)
        for t in range(T):
            anchor = theta - duals[t]
            local_cfg = FitConfig(n_starts=1, max_sweeps=cfg.max_sweeps,
                                  step_init=step0, step_floor=cfg.step_floor,
                                  seed=cfg.seed, use_kkt_start=False)
            locals_[t], _, _ = inner_fit(
                dmp, W, blocks[t], np.ones(blocks[t].shape[0]), dmp.space,
                locals_[t], proximal=(rho / blocks[t].shape[0], anchor),
                cfg=local_cfg, cache=cache,
            )
        bar = locals_.mean(axis=0)
        theta = bar + duals.mean(axis=0)
        duals += locals_ - theta
        r_pri = float(np.sqrt(((locals_ - bar) ** 2).sum()))
        r_dual = float(np.sqrt(T) * rho * np.linalg.norm(bar - bar_prev))
        r_pri_hist.append(r_pri)
        r_dual_hist.append(r_dual)
        bar_hist.append(bar.copy())
        locals_hist.append(locals_.copy())
        bar_prev = bar
        if r_pri < eps_pri and r_dual < eps_dual:
            converged = True
            break
        if it > 20 and r_pri > 10.0 * r_pri_hist[-21] and r_pri > eps_pri:
            diverged = True
            break

    X = cache.fronts(theta)
    assignment = loss.assign(Y, X, obs.side_info)
    objective = float(assignment.dist2.mean())
    state = AdmmState(theta=theta, locals_=locals_, duals=duals, rho=rho,
                      iterations=it, r_pri=r_pri_hist, r_dual=r_dual_hist,
                      bar_history=bar_hist, locals_history=locals_hist,
                      converged=converged, diverged=diverged)
    result = EstimateResult(
        theta=model.ParamVector(theta, dmp.slots),
        front=X,
        assignment=assignment,
        objective=objective,
        trace=[("admm", objective)],
        assignment_changes=[],
        wall_time=time.perf_counter() - t_start,
        seed=seed,
        outer_iterations=it,
        weights=W,
        extra={"forward_solves": cache.solves, "converged": converged,
               "diverged": diverged},
    )
    return result, state


# ---------------------------------------------------------------------------
# KKT-residual initializer
# ---------------------------------------------------------------------------

def _stationarity_pick(conc, y, W, act_tol):
    """Best (weight index, multipliers) per observation: nonnegative least
    squares of the weighted objective gradient on the active constraint
    gradients, plus the complementarity magnitude."""
    G, h = conc.G_all, conc.h_all
    slack = G @ y - h if G.shape[0] else np.zeros(0)
    active = np.where(slack >= -act_tol)[0]
    me = conc.E.shape[0]
    cols = [G[i] for i in active] + [s * conc.E[r] for r in range(me) for s in (1.0, -1.0)]
    M = np.array(cols).T if cols else np.zeros((y.size, 0))
    grads = conc.grads(y)
    best = None
    for k in range(W.shape[0]):
        target = -(grads.T @ W[k])
        if M.shape[1]:
            sol, resid = nnls(M, target)
        else:
            sol, resid = np.zeros(0), float(np.linalg.norm(target))
        comp = abs(float(np.dot(sol[: active.size], slack[active])))
        score = resid + comp
        if best is None or score < best[0]:
            best = (score, k, active, sol[: active.size])
    return best


def kkt_init(dmp, observations, weights, rounds=10, seed=0, act_tol_rel=1e-3):
    """Best-effort initializer: alternately pick per-observation weight and
    multipliers minimizing the stationarity+complementarity residual, then
    descend on theta by pattern search with the picks held fixed."""
    obs_pts, _ = loss._points_of(observations)
    W = np.atleast_2d(np.asarray(weights, float))
    space = dmp.space
    theta = space.center()
    for r in range(rounds):
        conc = model.apply_params(dmp, theta)
        picks = []
        for i in range(obs_pts.shape[0]):
            y = obs_pts[i]
            act_tol = act_tol_rel * (1.0 + float(np.abs(y).max(initial=0.0)))
            picks.append(_stationarity_pick(conc, y, W, act_tol))

        def total(th):
            c = model.apply_params(dmp, th)
            s = 0.0
            for i in range(obs_pts.shape[0]):
                _, k, active, u = picks[i]
                y = obs_pts[i]
                grad = c.grads(y).T @ W[k]
                stat = grad.copy()
                for q, row in enumerate(active):
                    stat += u[q] * c.G_all[row]
                slack = c.G_all[active] @ y - c.h_all[active] if active.size else np.zeros(0)
                comp = abs(float(np.dot(u, slack))) if active.size else 0.0
                s += float(np.linalg.norm(stat)) + comp
            return s

        theta, _, _ = pattern_search_min(total, theta, space,
                                         step_init=0.1 / (1 + r), step_floor=1e-4,
                                         max_sweeps=60)
    return theta


# ---------------------------------------------------------------------------
# exhaustive grid oracle
# ---------------------------------------------------------------------------

def brute_force_oracle(dmp, observations, weights, grid_spec, budget=int(1e6)):
    """Exhaustive evaluation of the empirical risk on a parameter grid.

    ``grid_spec`` is either a scalar resolution or a per-coordinate array.
    Normalization rows are honored by gridding a maximal free subset of the
    coordinates and solving the rows for the remaining ones; candidates
    leaving the box are discarded.  No pruning: the argmin over the full grid
    is returned with its value.
    """
    obs_pts, side = loss._points_of(observations)
    space = dmp.space
    d = space.dim
    if d > 3:
        raise EstimatorError("oracle supports at most 3 free coordinates")
    res = np.broadcast_to(np.asarray(grid_spec, float), (d,)).astype(float)
    A, b = space.norm_rows, space.norm_rhs
    q = A.shape[0]
    if q:
        # pivot the last q linearly independent columns
        piv = []
        for j in range(d - 1, -1, -1):
            if len(piv) < q and np.linalg.matrix_rank(A[:, piv + [j]]) > len(piv):
                piv.append(j)
        piv = sorted(piv)
        free = [j for j in range(d) if j not in piv]
    else:
        piv, free = [], list(range(d))
    axes = [np.arange(space.lower[j], space.upper[j] + res[j] * 0.5, res[j]) for j in free]
    total = int(np.prod([a.size for a in axes])) if axes else 1
    if total > budget:
        raise EstimatorError("grid would need %d > %d candidates" % (total, budget))
    cache = solver.FrontCache(dmp, weights)
    best_theta, best_val = None, np.inf
    evals = 0
    mesh = np.meshgrid(*axes, indexing="ij") if axes else []
    flat = np.column_stack([m.ravel() for m in mesh]) if axes else np.zeros((1, 0))
    for row in flat:
        theta = np.empty(d)
        theta[free] = row
        if q:
            rhs = b - A[:, free] @ row
            sol = np.linalg.solve(A[:, piv], rhs)
            theta[piv] = sol
            if np.any(sol < space.lower[piv] - 1e-12) or np.any(sol > space.upper[piv] + 1e-12):
                continue
        X = cache.fronts(theta)
        val = loss.empirical_risk(obs_pts, X, side)
        evals += 1
        if val < best_val - 1e-15:
            best_theta, best_val = theta, val
    if best_theta is None:
        raise EstimatorError("no grid candidate satisfied the normalizations")
    return best_theta, best_val, evals
