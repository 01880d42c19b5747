"""Hot numeric kernels: dense simplex, active-set QP, assignment and domination loops.

Every kernel exists in two forms: a numba ``@njit`` build and a pure-numpy build.
The active backend is selected once at import time from the ``IMOP_BACKEND``
environment variable: ``auto`` (default; numba when importable), ``numba`` or
``numpy``.  ``benchmarks/bench_kernels.py`` compares the two paths.
"""

import os

import numpy as np

_BACKEND_ENV = os.environ.get("IMOP_BACKEND", "auto").strip().lower()
if _BACKEND_ENV not in ("auto", "numba", "numpy"):
    raise ValueError("IMOP_BACKEND must be one of auto|numba|numpy, got %r" % _BACKEND_ENV)

_HAVE_NUMBA = False
if _BACKEND_ENV in ("auto", "numba"):
    try:
        from numba import njit as _njit

        _HAVE_NUMBA = True
    except ImportError:
        if _BACKEND_ENV == "numba":
            raise

USING_NUMBA = _HAVE_NUMBA and _BACKEND_ENV in ("auto", "numba")

# status codes shared by the solver kernels
OPTIMAL = 0
ITER_LIMIT = 1
INFEASIBLE = 2
UNBOUNDED = 3


# ---------------------------------------------------------------------------
# dense two-phase simplex, standard form: min c'x  s.t.  A x = b, x >= 0
# (b >= 0 is the caller's responsibility).  Bland's rule throughout, so the
# pivot sequence is deterministic and cycling-free.
# ---------------------------------------------------------------------------

def _simplex_standard_impl(A, b, c, tol, max_pivots):
    m, n = A.shape
    total = n + m  # real columns + one artificial per row
    T = np.zeros((m + 1, total + 1))
    for i in range(m):
        for j in range(n):
            T[i, j] = A[i, j]
        T[i, n + i] = 1.0
        T[i, total] = b[i]
    basis = np.empty(m, np.int64)
    for i in range(m):
        basis[i] = n + i

    # phase-1 reduced costs: artificial unit costs priced out of the identity basis
    for j in range(total + 1):
        s = 0.0
        for i in range(m):
            s += T[i, j]
        if j < n or j == total:
            T[m, j] = -s
        else:
            T[m, j] = 0.0

    n_enterable = n  # phase 1 may enter any real column
    pivots = 0
    for phase in range(2):
        while True:
            enter = -1
            for j in range(n_enterable):
                if T[m, j] < -tol:
                    enter = j
                    break
            if enter < 0:
                break
            leave = -1
            best_ratio = 0.0
            for i in range(m):
                a = T[i, enter]
                if a > tol:
                    ratio = T[i, total] / a
                    if leave < 0 or ratio < best_ratio - tol or (
                        abs(ratio - best_ratio) <= tol and basis[i] < basis[leave]
                    ):
                        leave = i
                        best_ratio = ratio
            if leave < 0:
                return UNBOUNDED, np.zeros(n), 0.0, basis
            piv = T[leave, enter]
            T[leave, :] /= piv
            for i in range(m + 1):
                if i != leave:
                    f = T[i, enter]
                    if f != 0.0:
                        T[i, :] -= f * T[leave, :]
            basis[leave] = enter
            pivots += 1
            if pivots > max_pivots:
                return ITER_LIMIT, np.zeros(n), 0.0, basis

        if phase == 1:
            break

        # end of phase 1
        if -T[m, total] > 1e-7 * (1.0 + np.abs(b).max()):
            return INFEASIBLE, np.zeros(n), 0.0, basis
        # drive artificials out of the basis (degenerate pivots allowed)
        for i in range(m):
            if basis[i] >= n:
                enter = -1
                for j in range(n):
                    if abs(T[i, j]) > tol:
                        enter = j
                        break
                if enter >= 0:
                    piv = T[i, enter]
                    T[i, :] /= piv
                    for r in range(m + 1):
                        if r != i:
                            f = T[r, enter]
                            if f != 0.0:
                                T[r, :] -= f * T[i, :]
                    basis[i] = enter
                else:
                    # redundant row: zero it, the artificial stays basic at 0
                    for j in range(total + 1):
                        T[i, j] = 0.0
        # install phase-2 reduced costs
        for j in range(total + 1):
            T[m, j] = 0.0
        for j in range(n):
            T[m, j] = c[j]
        T[m, total] = 0.0
        for i in range(m):
            if basis[i] < n:
                cb = c[basis[i]]
                if cb != 0.0:
                    T[m, :] -= cb * T[i, :]

    x = np.zeros(n)
    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = T[i, total]
    return OPTIMAL, x, -T[m, total], basis


# ---------------------------------------------------------------------------
# primal active-set method for convex QP:
#   min 0.5 x'Qx + c'x  s.t.  G x <= h (rows < neq are equalities, kept active)
# x0 must be feasible.  Returns (status, x, multipliers, iterations).
# Multiplier sign convention: Qx + c + G'u = 0 with u >= 0 on inequality rows.
# ---------------------------------------------------------------------------

def _qp_active_set_impl(Q, c, G, h, neq, x0, tol, max_iter):
    n = Q.shape[0]
    m = G.shape[0]
    x = x0.copy()
    active = np.zeros(m, np.bool_)
    for i in range(neq):
        active[i] = True
    u = np.zeros(m)
    it = 0
    while it < max_iter:
        it += 1
        idx = np.where(active)[0]
        na = idx.shape[0]
        K = np.zeros((n + na, n + na))
        rhs = np.zeros(n + na)
        g = Q @ x + c
        for a in range(n):
            rhs[a] = -g[a]
            for bcol in range(n):
                K[a, bcol] = Q[a, bcol]
        for a in range(na):
            row = idx[a]
            for j in range(n):
                K[n + a, j] = G[row, j]
                K[j, n + a] = G[row, j]
        sol, _, _, _ = np.linalg.lstsq(K, rhs, -1.0)
        res = 0.0
        for r in range(n + na):
            acc = 0.0
            for cc in range(n + na):
                acc += K[r, cc] * sol[cc]
            d = acc - rhs[r]
            res += d * d
        scale = 1.0 + np.abs(rhs).max() if n + na > 0 else 1.0
        p = sol[:n]
        ray = False
        if np.sqrt(res) > 1e-7 * scale:
            # singular reduced Hessian with unbounded subproblem: take the
            # steepest-descent direction inside the active null space instead
            if na > 0:
                At = np.zeros((n, na))
                for a in range(na):
                    for j in range(n):
                        At[j, a] = G[idx[a], j]
                lam, _, _, _ = np.linalg.lstsq(At, -g, -1.0)
                r0 = -g - At @ lam
            else:
                r0 = -g
            p = r0
            ray = True

        pnorm = 0.0
        for j in range(n):
            pnorm += p[j] * p[j]
        pnorm = np.sqrt(pnorm)

        if pnorm <= tol * (1.0 + np.abs(x).max()) and not ray:
            # candidate optimum: check inequality multipliers
            u[:] = 0.0
            worst = -1
            worst_val = -tol
            for a in range(na):
                row = idx[a]
                u[row] = sol[n + a]
                if row >= neq and sol[n + a] < worst_val:
                    worst_val = sol[n + a]
                    worst = row
            if worst < 0:
                return OPTIMAL, x, u, it
            active[worst] = False
            continue

        if pnorm <= tol * (1.0 + np.abs(x).max()) and ray:
            # no descent left in the active null space: accept stationarity,
            # recover multipliers by least squares on active gradients
            u[:] = 0.0
            if na > 0:
                At = np.zeros((n, na))
                for a in range(na):
                    for j in range(n):
                        At[j, a] = G[idx[a], j]
                lam, _, _, _ = np.linalg.lstsq(At, -g, -1.0)
                worst = -1
                worst_val = -tol
                for a in range(na):
                    row = idx[a]
                    u[row] = lam[a]
                    if row >= neq and lam[a] < worst_val:
                        worst_val = lam[a]
                        worst = row
                if worst < 0:
                    return OPTIMAL, x, u, it
                active[worst] = False
                continue
            return OPTIMAL, x, u, it

        # step length: full step unless an inactive row blocks first
        alpha = 1.0e30 if ray else 1.0
        block = -1
        for i in range(m):
            if not active[i]:
                gp = 0.0
                gx = 0.0
                for j in range(n):
                    gp += G[i, j] * p[j]
                    gx += G[i, j] * x[j]
                if gp > tol:
                    a_i = (h[i] - gx) / gp
                    if a_i < alpha - 1e-12:
                        alpha = a_i
                        block = i
        if ray and block < 0:
            return UNBOUNDED, x, u, it
        if alpha < 0.0:
            alpha = 0.0
        for j in range(n):
            x[j] += alpha * p[j]
        if block >= 0 and (ray or alpha < 1.0 - 1e-12):
            active[block] = True
    return ITER_LIMIT, x, u, it


# ---------------------------------------------------------------------------
# nearest-point assignment, non-domination filter, Hausdorff semi-distance
# ---------------------------------------------------------------------------

def _qp_front_batch_impl(Qs, C, W, G, h, neq, x0, tol, max_iter):
    """Scalarized solves for a whole weight sample, warm-started in order.
    status -1 marks weights whose combined quadratic part vanishes (caller
    falls back to the linear path)."""
    K = W.shape[0]
    p, n = C.shape
    out = np.zeros((K, n))
    status = np.zeros(K, np.int64)
    xs = x0.copy()
    for k in range(K):
        Qbar = np.zeros((n, n))
        cbar = np.zeros(n)
        for l in range(p):
            wl = W[k, l]
            cbar += wl * C[l]
            if wl != 0.0:
                Qbar += wl * Qs[l]
        if np.abs(Qbar).max() <= 1e-14:
            status[k] = -1
            continue
        st, x, _, _ = qp_active_set(Qbar, cbar, G, h, neq, xs, tol, max_iter)
        out[k] = x
        status[k] = st
        if st == OPTIMAL:
            xs = x.copy()
    return out, status


def _traffic_objective(t0, cap, emis, nr, xs, scale, fscale, w1, w2):
    nl = xs.size - nr
    fx = 0.0
    for a in range(nl):
        v = xs[nr + a] * scale
        fx += w1 * t0[a] * (v + 0.15 * v ** 5 / cap[a] ** 4) + w2 * emis[a] * v * v
    return fx / fscale


def _traffic_front_batch_impl(t0, cap, emis, nr, G, h, neq, W, x0, scale,
                              tol, max_iter):
    """Solves of the congestion/emission flow problem for a weight sample,
    warm-started in order.  Variables are [route flows, link flows] in
    x/scale units with the objective divided by scale^2.

    Each step minimizes the local quadratic model over the polyhedron through
    the active-set backend (curvature-aware), falling back to a projected
    gradient step when the model solve fails; convergence is declared on the
    unit-step gradient-map norm.
    """
    K = W.shape[0]
    n = x0.size
    nl = n - nr
    fscale = scale * scale
    out = np.zeros((K, n))
    status = np.zeros(K, np.int64)
    eye = np.eye(n)
    xs = x0.copy()
    for k in range(K):
        w1 = W[k, 0]
        w2 = W[k, 1]
        fx = _traffic_objective(t0, cap, emis, nr, xs, scale, fscale, w1, w2)
        gamma = 1.0
        st = ITER_LIMIT
        for _ in range(max_iter):
            g = np.zeros(n)
            H = np.zeros((n, n))
            for a in range(nl):
                v = xs[nr + a] * scale
                g[nr + a] = (scale / fscale) * (
                    w1 * t0[a] * (1.0 + 0.75 * v ** 4 / cap[a] ** 4)
                    + 2.0 * w2 * emis[a] * v
                )
                H[nr + a, nr + a] = 3.0 * w1 * t0[a] * v ** 3 / cap[a] ** 4 + 2.0 * w2 * emis[a]
            resid = h - G @ xs
            qst, d, _, _ = qp_active_set(H, g, G, resid, neq, np.zeros(n), 1e-11, 300)
            stepped = False
            step_norm = 0.0
            if qst == OPTIMAL:
                gd = 0.0
                for j in range(n):
                    gd += g[j] * d[j]
                alpha = 1.0
                for _bt in range(40):
                    xn = xs + alpha * d
                    fn = _traffic_objective(t0, cap, emis, nr, xn, scale, fscale, w1, w2)
                    if fn <= fx + 1e-4 * alpha * gd + 1e-15 * (1.0 + abs(fx)):
                        step_norm = alpha * np.sqrt((d * d).sum())
                        xs = xn
                        fx = fn
                        stepped = True
                        break
                    alpha *= 0.5
            if not stepped:
                # projected-gradient fallback with backtracking
                for _bt in range(60):
                    z = xs - gamma * g
                    pst, xp, _, _ = qp_active_set(eye, -z, G, h, neq, xs.copy(), 1e-11, 200)
                    if pst != OPTIMAL:
                        gamma *= 0.5
                        continue
                    fn = _traffic_objective(t0, cap, emis, nr, xp, scale, fscale, w1, w2)
                    gd = 0.0
                    for j in range(n):
                        gd += g[j] * (xp[j] - xs[j])
                    if fn <= fx + 1e-4 * gd + 1e-15 * (1.0 + abs(fx)):
                        step_norm = np.sqrt(((xp - xs) ** 2).sum())
                        xs = xp
                        fx = fn
                        stepped = True
                        break
                    gamma *= 0.5
                gamma = min(gamma * 2.0, 1e6)
            if not stepped or step_norm <= 10.0 * tol:
                # stationarity check: unit-step gradient map
                pst, xp, _, _ = qp_active_set(eye, -(xs - g), G, h, neq, xs.copy(), 1e-11, 200)
                gmap = np.sqrt(((xs - xp) ** 2).sum())
                if gmap <= tol:
                    st = OPTIMAL
                    break
                if not stepped:
                    break
        out[k] = xs
        status[k] = st
    return out, status


def _nearest_assign_nb(Y, X):
    N = Y.shape[0]
    K = X.shape[0]
    n = Y.shape[1]
    idx = np.empty(N, np.int64)
    dist2 = np.empty(N)
    for i in range(N):
        best = 1.0e300
        bk = 0
        for k in range(K):
            d = 0.0
            for j in range(n):
                t = Y[i, j] - X[k, j]
                d += t * t
            if d < best:
                best = d
                bk = k
        idx[i] = bk
        dist2[i] = best
    return idx, dist2


def _nearest_assign_np(Y, X):
    N = Y.shape[0]
    idx = np.empty(N, np.int64)
    dist2 = np.empty(N)
    chunk = max(1, int(4.0e6 // max(1, X.shape[0])))
    for s in range(0, N, chunk):
        e = min(N, s + chunk)
        d = ((Y[s:e, None, :] - X[None, :, :]) ** 2).sum(axis=2)
        idx[s:e] = np.argmin(d, axis=1)
        dist2[s:e] = d[np.arange(e - s), idx[s:e]]
    return idx, dist2


def _nearest_assign_masked_nb(Y, X, allowed):
    N = Y.shape[0]
    K = X.shape[0]
    n = Y.shape[1]
    idx = np.full(N, -1, np.int64)
    dist2 = np.full(N, np.inf)
    for i in range(N):
        best = 1.0e300
        bk = -1
        for k in range(K):
            if allowed[i, k]:
                d = 0.0
                for j in range(n):
                    t = Y[i, j] - X[k, j]
                    d += t * t
                if d < best:
                    best = d
                    bk = k
        idx[i] = bk
        if bk >= 0:
            dist2[i] = best
    return idx, dist2


def _nearest_assign_masked_np(Y, X, allowed):
    d = ((Y[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    d = np.where(allowed, d, np.inf)
    idx = np.argmin(d, axis=1)
    dist2 = d[np.arange(Y.shape[0]), idx]
    idx = np.where(np.isfinite(dist2), idx, -1)
    return idx.astype(np.int64), dist2


def _pareto_mask_nb(F, tol):
    m = F.shape[0]
    p = F.shape[1]
    keep = np.ones(m, np.bool_)
    for i in range(m):
        for j in range(m):
            if i == j or not keep[i]:
                continue
            le_all = True
            lt_any = False
            for q in range(p):
                if F[j, q] > F[i, q] + tol:
                    le_all = False
                    break
                if F[j, q] < F[i, q] - tol:
                    lt_any = True
            if le_all and lt_any:
                keep[i] = False
    return keep


def _pareto_mask_np(F, tol):
    m = F.shape[0]
    keep = np.ones(m, bool)
    for i in range(m):
        le_all = (F <= F[i] + tol).all(axis=1)
        lt_any = (F < F[i] - tol).any(axis=1)
        dominated = le_all & lt_any
        dominated[i] = False
        if dominated.any():
            keep[i] = False
    return keep


def _hausdorff_semi_nb(X, Y):
    a = X.shape[0]
    b = Y.shape[0]
    n = X.shape[1]
    worst = 0.0
    for i in range(a):
        best = 1.0e300
        for j in range(b):
            d = 0.0
            for q in range(n):
                t = X[i, q] - Y[j, q]
                d += t * t
            if d < best:
                best = d
        if best > worst:
            worst = best
    return np.sqrt(worst)


def _hausdorff_semi_np(X, Y):
    _, d2 = _nearest_assign_np(X, Y)
    return float(np.sqrt(d2.max()))


if USING_NUMBA:
    _jit = _njit(cache=True)
    simplex_standard = _jit(_simplex_standard_impl)
    qp_active_set = _jit(_qp_active_set_impl)
    # the batch kernels call qp_active_set / _traffic_objective through module
    # globals, so the decorated dispatchers must exist before they compile
    _traffic_objective = _jit(_traffic_objective)
    qp_front_batch = _jit(_qp_front_batch_impl)
    traffic_front_batch = _jit(_traffic_front_batch_impl)
    nearest_assign = _jit(_nearest_assign_nb)
    nearest_assign_masked = _jit(_nearest_assign_masked_nb)
    pareto_mask = _jit(_pareto_mask_nb)
    hausdorff_semi_core = _jit(_hausdorff_semi_nb)
else:
    simplex_standard = _simplex_standard_impl
    qp_active_set = _qp_active_set_impl
    qp_front_batch = _qp_front_batch_impl
    traffic_front_batch = _traffic_front_batch_impl
    nearest_assign = _nearest_assign_np
    nearest_assign_masked = _nearest_assign_masked_np
    pareto_mask = _pareto_mask_np
    hausdorff_semi_core = _hausdorff_semi_np

# both paths, for parity tests and the benchmark
NUMPY_IMPLS = {
    "simplex_standard": _simplex_standard_impl,
    "qp_active_set": _qp_active_set_impl,
    "nearest_assign": _nearest_assign_np,
    "nearest_assign_masked": _nearest_assign_masked_np,
    "pareto_mask": _pareto_mask_np,
    "hausdorff_semi_core": _hausdorff_semi_np,
}
ACTIVE_IMPLS = {
    "simplex_standard": simplex_standard,
    "qp_active_set": qp_active_set,
    "nearest_assign": nearest_assign,
    "nearest_assign_masked": nearest_assign_masked,
    "pareto_mask": pareto_mask,
    "hausdorff_semi_core": hausdorff_semi_core,
}
