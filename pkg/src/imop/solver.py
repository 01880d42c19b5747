"""Forward solving: weight sampling, scalarized solves, KKT certificates and
sampled efficient fronts.

Backends per family: dense two-phase simplex for linear objectives (with a
lexicographic-minimum tie-break on optimal faces), a primal active-set method
for convex quadratic objectives, and projected gradient descent with QP-based
polyhedron projection for the smooth polynomial family.
"""

import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from . import kernels, model

FEAS_TOL = 1e-8
STAT_TOL = 1e-8
WEIGHT_SUM_TOL = 1e-12
ARMIJO_C = 1e-4


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# weight simplex sampling
# ---------------------------------------------------------------------------

def check_weight(w):
    w = np.asarray(w, float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise ValueError("weights must be nonnegative and sum to one")
    return w


def _simplex_lattice(p, denom):
    """All compositions of denom into p parts, scaled; lexicographic order."""
    out = []

    def rec(prefix, rest, parts):
        if parts == 1:
            out.append(prefix + [rest])
            return
        for v in range(rest + 1):
            rec(prefix + [v], rest - v, parts - 1)

    rec([], denom, p)
    return np.array(sorted(out)) / float(denom)


def _uniform_simplex(rng, p, n):
    g = rng.exponential(1.0, size=(n, p))
    return g / g.sum(axis=1, keepdims=True)


def grid_weights(p, K, seed=0):
    """Evenly spread weight vectors.

    p=2: K equally spaced points including both endpoints (ascending first
    coordinate).  p=3: the largest simplex lattice with at most K points,
    padded with seeded uniform simplex draws.  Other p: seeded uniform draws.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if p == 2:
        if K == 1:
            return np.array([[0.5, 0.5]])
        t = np.linspace(0.0, 1.0, K)
        return np.column_stack([t, 1.0 - t])
    rng = np.random.default_rng(seed)
    if p == 3:
        denom = 1
        while _lattice_size(3, denom + 1) <= K:
            denom += 1
        W = _simplex_lattice(3, denom)
        if W.shape[0] < K:
            W = np.vstack([W, _uniform_simplex(rng, 3, K - W.shape[0])])
        return W
    return _uniform_simplex(rng, p, K)


def _lattice_size(p, denom):
    from math import comb

    return comb(denom + p - 1, p - 1)


def random_weights(p, N, dist="uniform", seed=0, mean=0.5, sd=0.1, lo=0.3, hi=0.7):
    """Random weight vectors: 'uniform' on the simplex, 'truncnorm' for the
    first coordinate of a 2-weight vector (rejection on [0,1]), or
    'uniform-box' for the first coordinate on [lo, hi] (p=2)."""
    rng = np.random.default_rng(seed)
    if dist == "uniform":
        return _uniform_simplex(rng, p, N)
    if p != 2:
        raise ValueError("distribution %r requires p = 2" % dist)
    if dist == "truncnorm":
        out = np.empty(N)
        got = 0
        while got < N:
            cand = rng.normal(mean, sd, size=2 * (N - got))
            cand = cand[(cand >= 0.0) & (cand <= 1.0)]
            take = min(cand.size, N - got)
            out[got:got + take] = cand[:take]
            got += take
        return np.column_stack([out, 1.0 - out])
    if dist == "uniform-box":
        t = rng.uniform(lo, hi, size=N)
        return np.column_stack([t, 1.0 - t])
    raise ValueError("unknown weight distribution %r" % dist)


# ---------------------------------------------------------------------------
# LP layer (shared by the linear family, phase-1 feasibility and certificates)
# ---------------------------------------------------------------------------

def _lp_raw(c, G, h, E, e, max_pivots=20000):
    """min c'x s.t. G x <= h, E x = e, x free.  Split variables + slacks into
    standard form; returns (status, x)."""
    n = c.size
    mG, mE = G.shape[0], E.shape[0]
    A = np.zeros((mG + mE, 2 * n + mG))
    b = np.concatenate([h, e]).astype(float)
    A[:mG, :n] = G
    A[:mG, n:2 * n] = -G
    A[:mG, 2 * n:] = np.eye(mG)
    A[mG:, :n] = E
    A[mG:, n:2 * n] = -E
    flip = b < 0
    A[flip] *= -1.0
    b = np.abs(b)
    cs = np.concatenate([c, -c, np.zeros(mG)])
    st, z, _, _ = kernels.simplex_standard(A, b, cs, 1e-11, max_pivots)
    if st != kernels.OPTIMAL:
        return st, np.zeros(n)
    return st, z[:n] - z[n:2 * n]


def lp_minimize(concrete, cobj):
    """min cobj'x over the concrete feasible set; returns (status, x, value)."""
    st, x = _lp_raw(np.asarray(cobj, float), concrete.G_all, concrete.h_all,
                    concrete.E, concrete.e)
    return st, x, float(np.dot(cobj, x)) if st == kernels.OPTIMAL else np.nan


def feasible_point(concrete):
    """A feasible point of the concrete problem (phase-1 vertex), cached."""
    if concrete._feasible is None:
        st, x = _lp_raw(np.zeros(concrete.n), concrete.G_all, concrete.h_all,
                        concrete.E, concrete.e)
        if st != kernels.OPTIMAL:
            raise SolverError("feasible set is empty")
        concrete._feasible = x
    return concrete._feasible


def _lp_lexicographic(concrete, cobj):
    """Lexicographically smallest optimal vertex of min cobj'x."""
    st, x = _lp_raw(cobj, concrete.G_all, concrete.h_all, concrete.E, concrete.e)
    if st != kernels.OPTIMAL:
        raise SolverError("scalarized linear program failed with status %d" % st)
    zstar = float(np.dot(cobj, x))
    G = concrete.G_all
    h = concrete.h_all
    cushion = 1e-9
    extraG = [np.vstack([G, cobj[None, :]])]
    extrah = [np.concatenate([h, [zstar + cushion * (1.0 + abs(zstar))]])]
    for j in range(concrete.n):
        ej = np.zeros(concrete.n)
        ej[j] = 1.0
        st, xj = _lp_raw(ej, extraG[-1], extrah[-1], concrete.E, concrete.e)
        if st != kernels.OPTIMAL:
            break
        x = xj
        pin = xj[j]
        extraG.append(np.vstack([extraG[-1], ej[None, :]]))
        extrah.append(np.concatenate([extrah[-1], [pin + cushion * (1.0 + abs(pin))]]))
    return x


def _multipliers_at(concrete, grad, x, act_tol=1e-6):
    """Stationarity multipliers by nonnegative least squares on the active rows
    (equality rows enter with free sign via a +- split)."""
    G, h = concrete.G_all, concrete.h_all
    scale = 1.0 + float(np.abs(x).max(initial=0.0))
    active = np.where(G @ x - h >= -act_tol * scale)[0] if G.shape[0] else np.array([], int)
    cols = []
    for i in active:
        cols.append(G[i])
    me = concrete.E.shape[0]
    for r in range(me):
        cols.append(concrete.E[r])
        cols.append(-concrete.E[r])
    u = np.zeros(G.shape[0])
    nu = np.zeros(me)
    if cols:
        M = np.array(cols).T
        sol, _ = nnls(M, -grad)
        for q, i in enumerate(active):
            u[i] = sol[q]
        for r in range(me):
            nu[r] = sol[len(active) + 2 * r] - sol[len(active) + 2 * r + 1]
    return u, nu


# ---------------------------------------------------------------------------
# forward solution of the scalarized problem
# ---------------------------------------------------------------------------

@dataclass
class ForwardSolution:
    x: np.ndarray
    u: np.ndarray            # multipliers on the folded inequality rows
    nu: np.ndarray           # multipliers on the equality rows
    w: np.ndarray
    theta: np.ndarray
    value: float
    residuals: tuple         # (stationarity, complementarity, primal feasibility)
    status: str
    iterations: int = 0


def _status_name(code):
    return {0: "optimal", 1: "iteration-limit", 2: "infeasible", 3: "unbounded"}[code]


def _resolve(dmp, theta):
    if isinstance(dmp, model.ConcreteDmp):
        return dmp, np.asarray(theta, float) if theta is not None else np.zeros(0)
    theta = np.zeros(0) if theta is None else np.asarray(theta, float)
    return model.apply_params(dmp, theta), theta


def solve_wp(dmp, theta, w, tol=STAT_TOL, max_iter=4000):
    """Optimal solution of min w'f(x, theta) over the feasible set."""
    conc, theta = _resolve(dmp, theta)
    w = check_weight(w)
    if conc.family == model.LINEAR:
        sol = _solve_linear(conc, w)
    elif conc.family == model.QUADRATIC:
        sol = _solve_quadratic(conc, w, tol, max_iter)
    else:
        sol = _solve_smooth(conc, w, tol, max_iter)
    sol.theta = theta
    sol.residuals = _residuals_of(conc, w, sol.x, sol.u, sol.nu)
    return sol


def _solve_linear(conc, w):
    cobj = conc.C.T @ w
    x = _lp_lexicographic(conc, cobj)
    u, nu = _multipliers_at(conc, cobj, x)
    return ForwardSolution(x, u, nu, w, None, float(cobj @ x), None, "optimal")


def _solve_quadratic(conc, w, tol, max_iter):
    Qbar, cbar = conc.combined_qp(w)
    if np.max(np.abs(Qbar), initial=0.0) <= 1e-14:
        return _solve_linear(conc, w)
    x0 = feasible_point(conc)
    Gq, hq, me = _qp_rows(conc)
    st, x, uu, it = kernels.qp_active_set(Qbar, cbar, Gq, hq, me, x0, tol, max_iter)
    if st not in (kernels.OPTIMAL,):
        raise SolverError("active-set solve failed with status %s" % _status_name(st))
    nu = uu[:me]
    u = uu[me:]
    val = 0.5 * x @ (Qbar @ x) + cbar @ x
    return ForwardSolution(x, u, nu, w, None, float(val), None, "optimal", it)


def _solve_smooth(conc, w, tol, max_iter):
    """Smooth-family solve in internally scaled units (x/x_scale, objective
    over x_scale^2): curvature-aware steps through the active-set backend with
    projected-gradient fallback, run to a unit-step gradient-map norm within
    tol.  Multipliers come from the local quadratic model at the solution."""
    s = conc.x_scale
    fscale = s * s
    net = conc.instance.network
    nr = conc.n - len(net.links)
    Gq, hq, me = _scaled_rows_cached(conc)
    x0 = feasible_point(conc) / s
    X, status = kernels.traffic_front_batch(
        net.free_flow, net.capacity, net.emission_factor, nr,
        Gq, hq, me, np.asarray(w, float)[None, :], x0, s, tol, max_iter)
    xs = X[0]
    # multipliers of the scaled problem from the quadratic model at xs
    g = (s / fscale) * conc.grad_w(w, xs * s)
    H = np.zeros((conc.n, conc.n))
    v = xs[nr:] * s
    H[np.arange(nr, conc.n), np.arange(nr, conc.n)] = (
        3.0 * w[0] * net.free_flow * v ** 3 / net.capacity ** 4
        + 2.0 * w[1] * net.emission_factor
    )
    qst, _, mu, _ = kernels.qp_active_set(H, g, Gq, hq - Gq @ xs, me,
                                          np.zeros(conc.n), 1e-11, 300)
    uu = mu * fscale if qst == kernels.OPTIMAL else np.zeros(Gq.shape[0])
    x = xs * s
    stat = "optimal" if status[0] == kernels.OPTIMAL else _status_name(int(status[0]))
    return ForwardSolution(x, uu[me:], uu[:me], w, None, conc.fval_w(w, x), None, stat)


# ---------------------------------------------------------------------------
# KKT residuals, non-domination filtering, front sampling
# ---------------------------------------------------------------------------

def _residuals_of(conc, w, x, u, nu):
    grad = conc.grad_w(w, x)
    stat = grad + conc.G_all.T @ np.maximum(u, 0.0)
    if conc.E.shape[0]:
        stat = stat + conc.E.T @ nu
    slack = conc.G_all @ x - conc.h_all if conc.G_all.shape[0] else np.zeros(0)
    comp = abs(float(np.dot(np.maximum(u, 0.0), slack))) if slack.size else 0.0
    feas = float(np.max(np.maximum(slack, 0.0), initial=0.0))
    if conc.E.shape[0]:
        feas = max(feas, float(np.max(np.abs(conc.E @ x - conc.e), initial=0.0)))
    return (float(np.linalg.norm(stat)), comp, feas)


def kkt_residuals(dmp, theta, w, x, u, nu=None):
    """(stationarity, complementarity, primal feasibility) at (x, u); u is
    clipped to be nonnegative for the report."""
    conc, _ = _resolve(dmp, theta)
    w = check_weight(w)
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    if u.size != conc.G_all.shape[0]:
        full = np.zeros(conc.G_all.shape[0])
        full[:u.size] = u
        u = full
    nu = np.zeros(conc.E.shape[0]) if nu is None else np.asarray(nu, float)
    return _residuals_of(conc, w, x, u, nu)


def pareto_filter(fvalues, tol=1e-9):
    """Indices of points whose objective rows are not dominated by any other
    row (componentwise <= with one strictly smaller beyond tol)."""
    F = np.atleast_2d(np.asarray(fvalues, float))
    keep = kernels.pareto_mask(F, tol)
    return np.where(keep)[0]


@dataclass
class EfficientFront:
    weights: np.ndarray       # (K, p) surviving weights, input order
    points: np.ndarray        # (K, n)
    fvalues: np.ndarray       # (K, p)
    boundary: np.ndarray      # True where the producing weight had a zero component
    tol: float
    solutions: list = None

    def __len__(self):
        return self.points.shape[0]


def sample_efficient_front(dmp, theta, weights, tol=1e-9, keep_solutions=False):
    """Solve the scalarized problem per weight and drop dominated points."""
    conc, theta = _resolve(dmp, theta)
    weights = np.atleast_2d(np.asarray(weights, float))
    if weights.shape[0] == 0:
        raise ValueError("need at least one weight vector")
    sols = []
    for k in range(weights.shape[0]):
        try:
            sols.append(solve_wp(conc, theta, weights[k]))
        except SolverError as err:
            raise SolverError("forward solve failed at weight index %d: %s" % (k, err))
    X = np.array([s.x for s in sols])
    F = conc.fvals_many(X)
    keep = pareto_filter(F, tol)
    boundary = (weights[keep] <= tol).any(axis=1)
    return EfficientFront(weights[keep], X[keep], F[keep], boundary, tol,
                          [sols[k] for k in keep] if keep_solutions else None)


def _qp_rows(conc):
    cached = getattr(conc, "_qp_rows", None)
    if cached is None:
        me = conc.E.shape[0]
        Gq = np.vstack([conc.E, conc.G_all])
        hq = np.concatenate([conc.e, conc.h_all])
        cached = (np.ascontiguousarray(Gq), np.ascontiguousarray(hq), me)
        conc._qp_rows = cached
    return cached


def front_points(dmp, theta, weights, tol=STAT_TOL):
    """Scalarized solutions per weight with no filtering; (K, n) array.

    Batch path: whole-front compiled solves with warm starts between
    neighboring weights; weights whose combined quadratic part vanishes fall
    back to the simplex path.
    """
    conc, theta = _resolve(dmp, theta)
    W = np.ascontiguousarray(np.atleast_2d(np.asarray(weights, float)))
    if conc.family == model.QUADRATIC:
        Gq, hq, me = _qp_rows(conc)
        x0 = feasible_point(conc)
        X, status = kernels.qp_front_batch(
            np.ascontiguousarray(conc.Qs), np.ascontiguousarray(conc.C),
            W, Gq, hq, me, x0, tol, 4000)
        for k in np.where(status != kernels.OPTIMAL)[0]:
            X[k] = _solve_linear(conc, W[k]).x if status[k] == -1 else solve_wp(conc, theta, W[k]).x
        return X
    if conc.family == model.SMOOTH_POLY:
        net = conc.instance.network
        nr = conc.n - len(net.links)
        s = conc.x_scale
        Gq, hq, me = _scaled_rows_cached(conc)
        x0 = feasible_point(conc) / s
        X, status = kernels.traffic_front_batch(
            net.free_flow, net.capacity, net.emission_factor, nr,
            Gq, hq, me, W, x0, s, tol, 4000)
        if np.any(status != kernels.OPTIMAL):
            raise SolverError("projected gradient failed on %d weights"
                              % int((status != kernels.OPTIMAL).sum()))
        return X * s
    return np.array([solve_wp(conc, theta, W[k]).x for k in range(W.shape[0])])


def _scaled_rows_cached(conc):
    cached = getattr(conc, "_scaled_qp_rows", None)
    if cached is None:
        Gq, hq, me = _qp_rows(conc)
        cached = (np.ascontiguousarray(Gq * conc.x_scale), hq, me)
        conc._scaled_qp_rows = cached
    return cached


class FrontCache:
    """Memoized front_points per (instance, weights) over changing theta."""

    def __init__(self, dmp, weights, max_entries=20000):
        self.dmp = dmp
        self.weights = np.atleast_2d(np.asarray(weights, float))
        self.max_entries = max_entries
        self._store = {}
        self.solves = 0

    def fronts(self, theta):
        theta = np.asarray(theta, float)
        key = np.round(theta, 12).tobytes()
        hit = self._store.get(key)
        if hit is not None:
            return hit
        X = front_points(self.dmp, theta, self.weights)
        self.solves += self.weights.shape[0]
        if len(self._store) > self.max_entries:
            self._store.clear()
        self._store[key] = X
        return X
