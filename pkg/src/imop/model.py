"""Parameterized convex multiobjective decision problems and their parameter spaces.

A problem template (:class:`DmpInstance`) declares objectives, constraints and a
slot table marking which numeric entries are free parameters.  Binding a
parameter vector through :func:`apply_params` yields a fully numeric
:class:`ConcreteDmp` that the forward solver consumes.  Three families are
supported: linear objectives, quadratic objectives, and the smooth convex
polynomial family used for congestion/emission flow problems.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels

PSD_FLOOR = -1e-10
STRONG_CONVEXITY_FLOOR = 1e-8
BINDING_TOL = 1e-9


class ModelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameter space and slot binding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamSpace:
    """Box bounds plus optional linear equality normalizations on the free
    parameter coordinates.  ``fixed_mask`` records which candidate coordinates
    of the originating template were held fixed (metadata only; the arrays
    here cover free coordinates exclusively)."""

    lower: np.ndarray
    upper: np.ndarray
    norm_rows: np.ndarray = None
    norm_rhs: np.ndarray = None
    fixed_mask: np.ndarray = None

    def __post_init__(self):
        lo = np.asarray(self.lower, float)
        up = np.asarray(self.upper, float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        if lo.shape != up.shape or lo.ndim != 1:
            raise ModelError("box bounds must be 1-d arrays of equal length")
        if np.any(lo > up):
            raise ModelError("lower bound exceeds upper bound")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
            raise ModelError("parameter box must be bounded")
        if self.norm_rows is None:
            object.__setattr__(self, "norm_rows", np.zeros((0, lo.size)))
            object.__setattr__(self, "norm_rhs", np.zeros(0))
        else:
            object.__setattr__(self, "norm_rows", np.atleast_2d(np.asarray(self.norm_rows, float)))
            object.__setattr__(self, "norm_rhs", np.atleast_1d(np.asarray(self.norm_rhs, float)))
            if self.norm_rows.shape[1] != lo.size:
                raise ModelError("normalization rows must match the free-coordinate count")

    @property
    def dim(self):
        return self.lower.size

    def contains(self, theta, tol=BINDING_TOL):
        theta = np.asarray(theta, float)
        if theta.shape != (self.dim,):
            return False
        if np.any(theta < self.lower - tol) or np.any(theta > self.upper + tol):
            return False
        if self.norm_rows.shape[0]:
            if np.max(np.abs(self.norm_rows @ theta - self.norm_rhs), initial=0.0) > tol:
                return False
        return True

    def validate(self, theta, tol=BINDING_TOL):
        if not self.contains(theta, tol):
            raise ModelError("parameter vector violates its box or normalization")

    def center(self):
        c = 0.5 * (self.lower + self.upper)
        return self.project(c)

    def project(self, theta):
        """Clip to the box, then restore normalizations; alternated a few times."""
        theta = np.asarray(theta, float).copy()
        A, b = self.norm_rows, self.norm_rhs
        for _ in range(50):
            theta = np.clip(theta, self.lower, self.upper)
            if not A.shape[0]:
                break
            resid = A @ theta - b
            if np.max(np.abs(resid), initial=0.0) <= BINDING_TOL:
                break
            theta = theta - A.T @ np.linalg.lstsq(A @ A.T, resid, rcond=None)[0]
        return np.clip(theta, self.lower, self.upper)

    def sample(self, rng, n):
        """Seeded uniform box draws, projected onto the normalization manifold."""
        out = np.empty((n, self.dim))
        for i in range(n):
            out[i] = self.project(rng.uniform(self.lower, self.upper))
        return out

    def corners(self, coords=None, limit=64):
        """Box corners restricted to the given coordinates (all when None)."""
        coords = list(range(self.dim)) if coords is None else list(coords)
        if not coords:
            return self.center()[None, :]
        if 2 ** len(coords) > limit:
            coords = coords[: int(np.log2(limit))]
        base = self.center()
        out = []
        for bits in range(2 ** len(coords)):
            t = base.copy()
            for q, j in enumerate(coords):
                t[j] = self.upper[j] if (bits >> q) & 1 else self.lower[j]
            out.append(self.project(t) if self.norm_rows.shape[0] else t)
        return np.array(out)

    def to_dict(self):
        d = {"lower": self.lower.tolist(), "upper": self.upper.tolist()}
        if self.norm_rows.shape[0]:
            d["norm_rows"] = self.norm_rows.tolist()
            d["norm_rhs"] = self.norm_rhs.tolist()
        return d

    @staticmethod
    def from_dict(d):
        return ParamSpace(
            np.asarray(d["lower"], float),
            np.asarray(d["upper"], float),
            np.asarray(d["norm_rows"], float) if "norm_rows" in d else None,
            np.asarray(d["norm_rhs"], float) if "norm_rhs" in d else None,
        )


@dataclass(frozen=True)
class SlotRef:
    """Binding of one free parameter coordinate into a template entry.

    target: 'obj_lin' (l, j) | 'obj_quad_diag' (l, j) | 'ineq_rhs' (i,) | 'eq_rhs' (i,)
    The stored value is ``coef * theta_coordinate``.
    """

    target: str
    index: tuple
    coef: float = 1.0


@dataclass(frozen=True)
class ParamVector:
    values: np.ndarray
    slots: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, float))
        if self.values.shape != (len(self.slots),):
            raise ModelError("parameter vector length must equal the free slot count")


# ---------------------------------------------------------------------------
# traffic network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrafficNetwork:
    """Directed road network with volume-delay data per link.

    free_flow is in minutes, capacity in vehicles/hour, emission_factor
    dimensionless per squared flow.  Route sets are enumerated as all simple
    paths between each origin/destination pair.
    """

    links: tuple            # ((tail, head), ...)
    free_flow: np.ndarray
    capacity: np.ndarray
    emission_factor: np.ndarray
    od_pairs: tuple         # ((origin, dest), ...)
    demands: np.ndarray     # vehicles/hour

    def __post_init__(self):
        object.__setattr__(self, "free_flow", np.asarray(self.free_flow, float))
        object.__setattr__(self, "capacity", np.asarray(self.capacity, float))
        object.__setattr__(self, "emission_factor", np.asarray(self.emission_factor, float))
        object.__setattr__(self, "demands", np.asarray(self.demands, float))
        if np.any(self.demands <= 0):
            raise ModelError("demands must be positive")

    def enumerate_routes(self):
        """All simple paths per O-D pair, as tuples of link indices, sorted by
        (length, link indices) for a deterministic ordering."""
        out_links = {}
        for a, (u, v) in enumerate(self.links):
            out_links.setdefault(u, []).append((v, a))
        routes = []
        for (orig, dest) in self.od_pairs:
            found = []

            def dfs(node, visited, path):
                if node == dest:
                    found.append(tuple(path))
                    return
                for (nxt, a) in sorted(out_links.get(node, [])):
                    if nxt not in visited:
                        visited.add(nxt)
                        path.append(a)
                        dfs(nxt, visited, path)
                        path.pop()
                        visited.discard(nxt)

            dfs(orig, {orig}, [])
            if not found:
                raise ModelError("o-d pair (%s, %s) has no route" % (orig, dest))
            found.sort(key=lambda r: (len(r), r))
            routes.append(tuple(found))
        return tuple(routes)

    def to_dict(self):
        return {
            "links": [list(l) for l in self.links],
            "free_flow": self.free_flow.tolist(),
            "capacity": self.capacity.tolist(),
            "emission_factor": self.emission_factor.tolist(),
            "od_pairs": [list(w) for w in self.od_pairs],
            "demands": self.demands.tolist(),
        }

    @staticmethod
    def from_dict(d):
        return TrafficNetwork(
            tuple(tuple(l) for l in d["links"]),
            np.asarray(d["free_flow"], float),
            np.asarray(d["capacity"], float),
            np.asarray(d["emission_factor"], float),
            tuple(tuple(w) for w in d["od_pairs"]),
            np.asarray(d["demands"], float),
        )


# ---------------------------------------------------------------------------
# problem template and concrete problem
# ---------------------------------------------------------------------------

LINEAR = "linear"
QUADRATIC = "quadratic"
SMOOTH_POLY = "smooth_poly"


@dataclass
class DmpInstance:
    """Parameterized convex multiobjective program.

    Constraints are stored as ``G x <= h`` general rows, ``E x = e`` equality
    rows and box bounds; the concrete view folds the bounds into rows for the
    solvers.  ``slots`` lists the free entries in deterministic
    objective-major, coordinate-minor order.
    """

    family: str
    p: int
    n: int
    C: np.ndarray                  # (p, n) linear objective coefficients
    Qs: np.ndarray                 # (p, n, n) or None
    G: np.ndarray                  # (m, n)
    h: np.ndarray
    E: np.ndarray                  # (me, n)
    e: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    slots: tuple
    space: ParamSpace
    network: TrafficNetwork = None
    route_lists: tuple = None
    x_scale: float = 1.0
    name: str = "dmp"
    strongly_convex: bool = False
    radius_bound: float = field(default=0.0)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_free(self):
        return len(self.slots)

    def theta_true_readback(self, concrete):
        """Inverse of apply_params on the slot table (binding is a bijection)."""
        vals = np.empty(len(self.slots))
        for q, s in enumerate(self.slots):
            if s.target == "obj_lin":
                vals[q] = concrete.C[s.index] / s.coef
            elif s.target == "obj_quad_diag":
                l, j = s.index
                vals[q] = concrete.Qs[l, j, j] / s.coef
            elif s.target == "ineq_rhs":
                vals[q] = concrete.h_raw[s.index[0]] / s.coef
            elif s.target == "eq_rhs":
                vals[q] = concrete.e[s.index[0]] / s.coef
            else:
                raise ModelError("unknown slot target %r" % s.target)
        return vals

    def to_json(self):
        d = {
            "family": self.family,
            "p": self.p,
            "name": self.name,
            "objectives": [
                {"c": self.C[l].tolist()}
                if self.Qs is None
                else {"c": self.C[l].tolist(), "Q": self.Qs[l].tolist()}
                for l in range(self.p)
            ],
            "constraints": {
                "G": self.G.tolist(),
                "h": self.h.tolist(),
                "E": self.E.tolist(),
                "e": self.e.tolist(),
                "lb": [None if not np.isfinite(v) else v for v in self.lb],
                "ub": [None if not np.isfinite(v) else v for v in self.ub],
            },
            "mask": [[s.target, list(s.index), s.coef] for s in self.slots],
            "space": self.space.to_dict(),
        }
        if self.network is not None:
            d["network"] = self.network.to_dict()
        return json.dumps(d, indent=1, sort_keys=True)


def _check_conformable(C, G, h):
    n = C.shape[1]
    if G.shape[1] != n or G.shape[0] != h.shape[0]:
        raise ModelError("constraint arrays are not conformable with the objectives")


def _slot_order_key(slot):
    kind_rank = {"obj_lin": 0, "obj_quad_diag": 1, "ineq_rhs": 2, "eq_rhs": 3}
    return (kind_rank[slot.target],) + tuple(slot.index)


def _certify(instance):
    """Nonemptiness and boundedness of the feasible set over the parameter box
    (checked at the box corners of the constraint-bound slots), plus the
    feasible-set radius bound used downstream."""
    from . import solver  # local import; solver depends on model

    cons_coords = [
        q for q, s in enumerate(instance.slots) if s.target in ("ineq_rhs", "eq_rhs")
    ]
    thetas = instance.space.corners(cons_coords) if instance.num_free else np.zeros((1, 0))
    worst = 0.0
    for theta in thetas:
        conc = apply_params(instance, theta)
        for j in range(instance.n):
            for sign in (1.0, -1.0):
                cobj = np.zeros(instance.n)
                cobj[j] = sign
                st, x, val = solver.lp_minimize(conc, cobj)
                if st == kernels.UNBOUNDED:
                    raise ModelError(
                        "feasible set unbounded in coordinate %d of %s" % (j, instance.name)
                    )
                if st == kernels.INFEASIBLE:
                    raise ModelError("feasible set empty for a corner parameter of %s" % instance.name)
                worst = max(worst, abs(val))
    instance.radius_bound = float(np.sqrt(instance.n) * worst)
    return instance


def build_mlp(c_list, A, b, mask, space, name="mlp", lb=None, ub=None, certify=True):
    """Linear-objective family.  ``mask`` is a (p, n) boolean array marking the
    free entries of the stacked objective coefficients; free entries are bound
    to parameter coordinates objective-major, coordinate-minor."""
    C = np.array([np.asarray(c, float) for c in c_list])
    if C.ndim != 2 or C.shape[0] < 2:
        raise ModelError("need at least two objective vectors of common dimension")
    p, n = C.shape
    G = np.atleast_2d(np.asarray(A, float))
    h = np.atleast_1d(np.asarray(b, float))
    _check_conformable(C, G, h)
    mask = np.asarray(mask, bool)
    if mask.shape != (p, n):
        raise ModelError("mask must have shape (p, n)")
    slots = tuple(
        SlotRef("obj_lin", (l, j))
        for l in range(p)
        for j in range(n)
        if mask[l, j]
    )
    if len(slots) != space.dim:
        raise ModelError("parameter space dimension %d != free slot count %d" % (space.dim, len(slots)))
    inst = DmpInstance(
        family=LINEAR, p=p, n=n, C=C, Qs=None, G=G, h=h,
        E=np.zeros((0, n)), e=np.zeros(0),
        lb=np.zeros(n) if lb is None else np.asarray(lb, float),
        ub=np.full(n, np.inf) if ub is None else np.asarray(ub, float),
        slots=slots, space=space, name=name,
    )
    return _certify(inst) if certify else inst


def build_mqp(Q_list, c_list, A, b, mask, space, name="mqp", lb=None, ub=None,
              rhs_mask=None, rhs_slot_coef=1.0, E=None, e=None, certify=True):
    """Quadratic-objective family.  ``mask`` marks free linear-coefficient
    entries; ``rhs_mask`` marks free right-hand-side entries of ``A x <= b``,
    bound as h_i = rhs_slot_coef * theta (a coefficient of -1 lets theta carry
    the right-hand side of the same rows written in >= orientation).  Each Q
    must be symmetric PSD."""
    C = np.array([np.asarray(c, float) for c in c_list])
    p, n = C.shape
    Qs = np.array([np.asarray(Q, float) for Q in Q_list])
    if Qs.shape != (p, n, n):
        raise ModelError("need one (n, n) quadratic matrix per objective")
    strongly = True
    for l in range(p):
        if np.max(np.abs(Qs[l] - Qs[l].T)) > 1e-10:
            raise ModelError("objective matrix %d is not symmetric" % l)
        ev = np.linalg.eigvalsh(Qs[l])
        if ev.min() < PSD_FLOOR:
            raise ModelError("objective matrix %d is not positive semidefinite" % l)
        if ev.min() < STRONG_CONVEXITY_FLOOR:
            strongly = False
    G = np.atleast_2d(np.asarray(A, float))
    h = np.atleast_1d(np.asarray(b, float))
    _check_conformable(C, G, h)
    mask = np.zeros((p, n), bool) if mask is None else np.asarray(mask, bool)
    slots = [
        SlotRef("obj_lin", (l, j))
        for l in range(p)
        for j in range(n)
        if mask[l, j]
    ]
    if rhs_mask is not None:
        rhs_mask = np.asarray(rhs_mask, bool)
        slots += [SlotRef("ineq_rhs", (i,), rhs_slot_coef) for i in range(h.size) if rhs_mask[i]]
    slots = tuple(sorted(slots, key=_slot_order_key))
    if len(slots) != space.dim:
        raise ModelError("parameter space dimension %d != free slot count %d" % (space.dim, len(slots)))
    inst = DmpInstance(
        family=QUADRATIC, p=p, n=n, C=C, Qs=Qs, G=G, h=h,
        E=np.zeros((0, n)) if E is None else np.atleast_2d(np.asarray(E, float)),
        e=np.zeros(0) if e is None else np.atleast_1d(np.asarray(e, float)),
        lb=np.zeros(n) if lb is None else np.asarray(lb, float),
        ub=np.full(n, np.inf) if ub is None else np.asarray(ub, float),
        slots=slots, space=space, name=name, strongly_convex=strongly,
    )
    return _certify(inst) if certify else inst


def build_mqp_quad_slots(Q_list, c_list, A, b, quad_mask, lin_mask, space,
                         name="mqp", lb=None, ub=None, monomial=True, certify=True):
    """Quadratic family with free diagonal curvature entries in addition to
    free linear coefficients.  With ``monomial`` the bound value is the
    coefficient of x_j^2 as written (Q_jj = 2 * theta)."""
    C = np.array([np.asarray(c, float) for c in c_list])
    p, n = C.shape
    Qs = np.array([np.asarray(Q, float) for Q in Q_list])
    quad_mask = np.asarray(quad_mask, bool)
    lin_mask = np.asarray(lin_mask, bool)
    slots = []
    for l in range(p):
        for j in range(n):
            if quad_mask[l, j]:
                slots.append(SlotRef("obj_quad_diag", (l, j), 2.0 if monomial else 1.0))
            if lin_mask[l, j]:
                slots.append(SlotRef("obj_lin", (l, j)))
    slots = tuple(sorted(slots, key=_slot_order_key))
    if len(slots) != space.dim:
        raise ModelError("parameter space dimension %d != free slot count %d" % (space.dim, len(slots)))
    G = np.atleast_2d(np.asarray(A, float))
    h = np.atleast_1d(np.asarray(b, float))
    inst = DmpInstance(
        family=QUADRATIC, p=p, n=n, C=C, Qs=Qs, G=G, h=h,
        E=np.zeros((0, n)), e=np.zeros(0),
        lb=np.zeros(n) if lb is None else np.asarray(lb, float),
        ub=np.full(n, np.inf) if ub is None else np.asarray(ub, float),
        slots=slots, space=space, name=name, strongly_convex=True,
    )
    return _certify(inst) if certify else inst


def build_traffic(network, mask, space, name="traffic", certify=True):
    """Flow problem over route flows f and link flows v with congestion
    (volume-delay times flow, a degree-5 convex polynomial) and quadratic
    emission objectives.  ``mask`` marks which O-D demands are free; free
    demands bind to the equality right-hand sides in vehicles/hour."""
    routes = network.enumerate_routes()
    nl = len(network.links)
    nr = sum(len(r) for r in routes)
    n = nr + nl
    # equality rows: one demand row per O-D pair, then one definition row per link
    E = np.zeros((len(network.od_pairs) + nl, n))
    e = np.zeros(len(network.od_pairs) + nl)
    col = 0
    route_cols = []
    for wi, rlist in enumerate(routes):
        cols = []
        for r in rlist:
            E[wi, col] = 1.0
            for a in r:
                E[len(network.od_pairs) + a, nr + a] = 1.0
                E[len(network.od_pairs) + a, col] -= 1.0
            cols.append(col)
            col += 1
        route_cols.append(tuple(cols))
        e[wi] = network.demands[wi]
    for a in range(nl):
        E[len(network.od_pairs) + a, nr + a] = 1.0
    mask = np.asarray(mask, bool)
    slots = tuple(SlotRef("eq_rhs", (wi,)) for wi in range(len(network.od_pairs)) if mask[wi])
    if len(slots) != space.dim:
        raise ModelError("parameter space dimension %d != free slot count %d" % (space.dim, len(slots)))
    inst = DmpInstance(
        family=SMOOTH_POLY, p=2, n=n,
        C=np.zeros((2, n)), Qs=None,
        G=np.zeros((0, n)), h=np.zeros(0), E=E, e=e,
        lb=np.zeros(n), ub=np.full(n, np.inf),
        slots=slots, space=space, network=network, route_lists=tuple(routes),
        x_scale=1000.0, name=name, strongly_convex=False,
    )
    return _certify(inst) if certify else inst


class ConcreteDmp:
    """Fully numeric problem: the pure result of binding a parameter vector."""

    def __init__(self, instance, C, Qs, h, e):
        self.instance = instance
        self.family = instance.family
        self.p = instance.p
        self.n = instance.n
        self.C = C
        self.Qs = Qs
        self.h_raw = h
        self.e = e
        self.E = instance.E
        self.x_scale = instance.x_scale
        # fold bounds into inequality rows: G_all x <= h_all
        rows = [instance.G]
        rhs = [h]
        nb = []
        for j in range(self.n):
            if np.isfinite(instance.lb[j]):
                r = np.zeros(self.n)
                r[j] = -1.0
                nb.append((r, -instance.lb[j]))
            if np.isfinite(instance.ub[j]):
                r = np.zeros(self.n)
                r[j] = 1.0
                nb.append((r, instance.ub[j]))
        if nb:
            rows.append(np.array([r for r, _ in nb]))
            rhs.append(np.array([v for _, v in nb]))
        self.G_all = np.vstack(rows) if rows else np.zeros((0, self.n))
        self.h_all = np.concatenate(rhs) if rhs else np.zeros(0)
        self.m_general = instance.G.shape[0]
        self._feasible = None

    # -- objective evaluation ------------------------------------------------

    def fvals(self, x):
        x = np.asarray(x, float)
        if self.family == SMOOTH_POLY:
            return self._traffic_fvals(x)
        vals = self.C @ x
        if self.Qs is not None:
            for l in range(self.p):
                vals[l] += 0.5 * x @ (self.Qs[l] @ x)
        return vals

    def fvals_many(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        if self.family == SMOOTH_POLY:
            return np.array([self._traffic_fvals(x) for x in X])
        vals = X @ self.C.T
        if self.Qs is not None:
            for l in range(self.p):
                vals[:, l] += 0.5 * np.einsum("ij,jk,ik->i", X, self.Qs[l], X)
        return vals

    def fval_w(self, w, x):
        return float(np.dot(w, self.fvals(x)))

    def grad_w(self, w, x):
        x = np.asarray(x, float)
        if self.family == SMOOTH_POLY:
            return self._traffic_grad(w, x)
        g = self.C.T @ w
        if self.Qs is not None:
            for l in range(self.p):
                g = g + w[l] * (self.Qs[l] @ x)
        return g

    def grads(self, x):
        """Per-objective gradients, stacked (p, n)."""
        x = np.asarray(x, float)
        if self.family == SMOOTH_POLY:
            return np.array([self._traffic_grad_one(l, x) for l in range(self.p)])
        out = self.C.copy()
        if self.Qs is not None:
            for l in range(self.p):
                out[l] += self.Qs[l] @ x
        return out

    def combined_qp(self, w):
        """(Qbar, cbar) of the scalarized objective; linear family gives Qbar=0."""
        cbar = self.C.T @ np.asarray(w, float)
        if self.Qs is None:
            return np.zeros((self.n, self.n)), cbar
        Qbar = np.tensordot(np.asarray(w, float), self.Qs, axes=1)
        return Qbar, cbar

    # -- traffic objectives: sum t0*(v + 0.15 v^5 / C^4) and sum emis * v^2 --

    def _link_slice(self):
        nl = len(self.instance.network.links)
        return slice(self.n - nl, self.n)

    def _traffic_fvals(self, x):
        net = self.instance.network
        v = x[self._link_slice()]
        cong = float(np.sum(net.free_flow * (v + 0.15 * v ** 5 / net.capacity ** 4)))
        emis = float(np.sum(net.emission_factor * v ** 2))
        return np.array([cong, emis])

    def _traffic_grad_one(self, l, x):
        net = self.instance.network
        g = np.zeros(self.n)
        v = x[self._link_slice()]
        if l == 0:
            g[self._link_slice()] = net.free_flow * (1.0 + 0.75 * v ** 4 / net.capacity ** 4)
        else:
            g[self._link_slice()] = 2.0 * net.emission_factor * v
        return g

    def _traffic_grad(self, w, x):
        return w[0] * self._traffic_grad_one(0, x) + w[1] * self._traffic_grad_one(1, x)


def apply_params(instance, theta):
    """Bind a parameter vector: pure function of (instance, theta), memoized."""
    theta = np.asarray(theta, float).reshape(-1)
    if theta.size != instance.num_free:
        raise ModelError("expected %d parameter values, got %d" % (instance.num_free, theta.size))
    instance.space.validate(theta)
    key = theta.tobytes()
    cached = instance._cache.get(key)
    if cached is not None:
        return cached
    C = instance.C.copy()
    Qs = None if instance.Qs is None else instance.Qs.copy()
    h = instance.h.copy()
    e = instance.e.copy()
    for q, s in enumerate(instance.slots):
        v = s.coef * theta[q]
        if s.target == "obj_lin":
            C[s.index] = v
        elif s.target == "obj_quad_diag":
            l, j = s.index
            Qs[l, j, j] = v
        elif s.target == "ineq_rhs":
            h[s.index[0]] = v
        elif s.target == "eq_rhs":
            e[s.index[0]] = v
        else:
            raise ModelError("unknown slot target %r" % s.target)
    conc = ConcreteDmp(instance, C, Qs, h, e)
    if len(instance._cache) > 4096:
        instance._cache.clear()
    instance._cache[key] = conc
    return conc


def from_json(text):
    d = json.loads(text)
    space = ParamSpace.from_dict(d["space"])
    mask_slots = [SlotRef(t, tuple(i), c) for t, i, c in d["mask"]]
    fam = d["family"]
    if fam == SMOOTH_POLY:
        net = TrafficNetwork.from_dict(d["network"])
        od_mask = np.zeros(len(net.od_pairs), bool)
        for s in mask_slots:
            od_mask[s.index[0]] = True
        return build_traffic(net, od_mask, space, name=d.get("name", "traffic"))
    objs = d["objectives"]
    C = [np.asarray(o["c"], float) for o in objs]
    cons = d["constraints"]
    p, n = len(C), len(C[0])
    lin_mask = np.zeros((p, n), bool)
    rhs_mask = np.zeros(len(cons["h"]), bool)
    quad_mask = np.zeros((p, n), bool)
    for s in mask_slots:
        if s.target == "obj_lin":
            lin_mask[s.index] = True
        elif s.target == "ineq_rhs":
            rhs_mask[s.index[0]] = True
        elif s.target == "obj_quad_diag":
            quad_mask[s.index[0], s.index[1]] = True
    lb = np.array([-np.inf if v is None else v for v in cons["lb"]], float)
    ub = np.array([np.inf if v is None else v for v in cons["ub"]], float)
    if fam == LINEAR:
        return build_mlp(C, cons["G"], cons["h"], lin_mask, space,
                         name=d.get("name", "mlp"), lb=lb, ub=ub)
    Qs = [np.asarray(o["Q"], float) for o in objs]
    if quad_mask.any():
        return build_mqp_quad_slots(Qs, C, cons["G"], cons["h"], quad_mask, lin_mask,
                                    space, name=d.get("name", "mqp"), lb=lb, ub=ub)
    return build_mqp(Qs, C, cons["G"], cons["h"], lin_mask, space,
                     name=d.get("name", "mqp"), lb=lb, ub=ub,
                     rhs_mask=rhs_mask if rhs_mask.any() else None,
                     E=np.asarray(cons["E"], float) if len(cons["E"]) else None,
                     e=np.asarray(cons["e"], float) if len(cons["e"]) else None)
