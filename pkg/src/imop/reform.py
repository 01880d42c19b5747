"""Solver-agnostic single-level KKT reformulations with big-M linearization.

Three builders produce :class:`MipModel` structures: objective inference for
the linear family, right-hand-side inference for the quadratic family, and the
farthest-equivalent-parameter displacement model used by the identifiability
test.  Models exist for export and certificate checking only; no mixed-integer
solve happens in-process.

Export format (one file per model, byte-deterministic):

    Minimize | Maximize
     obj: + coef name [+ coef name^2 ...] [+ const]
    Subject To
     rowname: + coef name - coef name <= rhs
    Bounds
     lb <= name <= ub        (or "name free")
    Binaries
     name name ...
    End

Conventions: primal blocks are written in the "A x >= b, x >= 0" orientation;
stationarity rows are enforced at the per-weight point x_k.  Complementarity
uses indicator binaries t (primal/dual pairing) and the product z * x is
linearized through eta variables.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from . import model as model_mod


class ReformError(ValueError):
    pass


def _fmt(v):
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return "%d" % int(v)
    return repr(v)


@dataclass
class Variable:
    name: str
    kind: str = "continuous"         # or "binary"
    lb: float = 0.0
    ub: float = np.inf


@dataclass
class Row:
    name: str
    terms: list                      # [(var_name, coef), ...]
    sense: str                       # "<=", ">=", "="
    rhs: float


@dataclass
class MipModel:
    name: str
    sense: str = "min"
    variables: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    quad_obj: list = field(default_factory=list)    # [(var, coef)] for coef*var^2
    lin_obj: list = field(default_factory=list)
    const_obj: float = 0.0
    big_m: dict = field(default_factory=dict)       # value + provenance note
    warnings: list = field(default_factory=list)
    _names: set = field(default_factory=set, repr=False)

    def add_var(self, name, kind="continuous", lb=0.0, ub=np.inf):
        if name in self._names:
            raise ReformError("duplicate variable name %r" % name)
        self._names.add(name)
        self.variables.append(Variable(name, kind, lb, ub))
        return name

    def add_row(self, name, terms, sense, rhs):
        terms = [(v, float(c)) for v, c in terms if abs(c) > 0.0]
        self.rows.append(Row(name, terms, sense, float(rhs)))

    def binaries(self):
        return [v.name for v in self.variables if v.kind == "binary"]

    def validate(self):
        known = {v.name for v in self.variables}
        for r in self.rows:
            for v, _ in r.terms:
                if v not in known:
                    raise ReformError("row %r references unknown variable %r" % (r.name, v))
        for v, _ in self.quad_obj + self.lin_obj:
            if v not in known:
                raise ReformError("objective references unknown variable %r" % v)
        return True

    def objective_value(self, point):
        val = self.const_obj
        for v, c in self.lin_obj:
            val += c * point[v]
        for v, c in self.quad_obj:
            val += c * point[v] ** 2
        return float(val)


@dataclass
class BigMConfig:
    m1: float = None
    m2: float = None
    m_ik: float = None
    m_sign: float = None


def _derived_ms(dmp):
    """Big-M defaults from the certified feasible-set radius and coefficient
    magnitudes (factor-2 headroom)."""
    B = max(dmp.radius_bound, 1.0)
    cof = 1.0
    if dmp.num_free:
        cof = max(cof, float(np.abs(dmp.space.lower).max()),
                  float(np.abs(dmp.space.upper).max()))
    cof = max(cof, float(np.abs(dmp.C).max(initial=0.0)))
    if dmp.Qs is not None:
        cof = max(cof, float(np.abs(dmp.Qs).max()))
    A = -dmp.G
    anorm = float(np.abs(A).sum(axis=1).max(initial=1.0)) if A.size else 1.0
    bnorm = float(np.abs(dmp.h).max(initial=1.0))
    grad_bound = dmp.p * cof * (1.0 + B)
    m1 = 2.0 * max(B, grad_bound + anorm * grad_bound)
    m2 = 2.0 * max(grad_bound, bnorm + anorm * B)
    m_ik = 2.0 * B
    return m1, m2, m_ik


def _resolve_ms(dmp, cfg):
    d1, d2, dik = _derived_ms(dmp)
    cfg = cfg or BigMConfig()
    m1 = d1 if cfg.m1 is None else cfg.m1
    m2 = d2 if cfg.m2 is None else cfg.m2
    mik = dik if cfg.m_ik is None else cfg.m_ik
    warnings = []
    if m1 < d1:
        warnings.append("m1=%g below derived bound %g; plug-ins may be cut off" % (m1, d1))
    if m2 < d2:
        warnings.append("m2=%g below derived bound %g; plug-ins may be cut off" % (m2, d2))
    if mik < dik:
        warnings.append("m_ik=%g below derived bound %g; plug-ins may be cut off" % (mik, dik))
    return m1, m2, mik, warnings


def _obs_array(observations, n):
    if observations is None:
        return np.zeros((0, n))
    Y = np.asarray(observations, float)
    if Y.size == 0:
        return np.zeros((0, n))
    return np.atleast_2d(Y)


def _theta_expr_tables(dmp):
    """Per-entry linear-coefficient expressions: maps (l, j) -> ('theta_q', coef)
    or a fixed constant, for both linear coefficients and quadratic diagonals."""
    lin = {}
    quad = {}
    rhs = {}
    for q, s in enumerate(dmp.slots):
        if s.target == "obj_lin":
            lin[s.index] = (q, s.coef)
        elif s.target == "obj_quad_diag":
            quad[s.index] = (q, s.coef)
        elif s.target == "ineq_rhs":
            rhs[s.index[0]] = (q, s.coef)
    return lin, quad, rhs


def _add_theta_vars(m, dmp):
    for q in range(dmp.num_free):
        m.add_var("theta_%d" % q, "continuous", dmp.space.lower[q], dmp.space.upper[q])
    A, b = dmp.space.norm_rows, dmp.space.norm_rhs
    for r in range(A.shape[0]):
        terms = [("theta_%d" % j, A[r, j]) for j in range(dmp.num_free) if abs(A[r, j]) > 1e-14]
        m.add_row("norm_%d" % r, terms, "=", b[r])


def _objective_from_residuals(m, observations, K, m_ik):
    """Residual variables tie the squared-distance objective to the eta blocks:
    resid_i_j = y_i_j - sum_k eta_i_k_j, objective (1/N) sum resid^2."""
    Y = np.atleast_2d(np.asarray(observations, float))
    N, n = Y.shape
    for i in range(N):
        for j in range(n):
            m.add_var("resid_%d_%d" % (i, j), "continuous", -np.inf, np.inf)
    for i in range(N):
        for j in range(n):
            terms = [("resid_%d_%d" % (i, j), 1.0)]
            terms += [("eta_%d_%d_%d" % (i, k, j), 1.0) for k in range(K)]
            m.add_row("def_resid_%d_%d" % (i, j), terms, "=", Y[i, j])
            m.quad_obj.append(("resid_%d_%d" % (i, j), 1.0 / N))
    return Y


def _eta_block(m, Y, K, n, m_ik, nonneg_x):
    """Linearize eta_i_k = z_i_k * x_k and the one-hot assignment rows."""
    N = Y.shape[0]
    for i in range(N):
        for k in range(K):
            m.add_var("z_%d_%d" % (i, k), "binary")
            for j in range(n):
                m.add_var("eta_%d_%d_%d" % (i, k, j), "continuous", 0.0, np.inf)
    for i in range(N):
        m.add_row("assign_%d" % i, [("z_%d_%d" % (i, k), 1.0) for k in range(K)], "=", 1.0)
        for k in range(K):
            for j in range(n):
                eta = "eta_%d_%d_%d" % (i, k, j)
                m.add_row("%s_cap" % eta, [(eta, 1.0), ("z_%d_%d" % (i, k), -m_ik)], "<=", 0.0)
                m.add_row("%s_lo" % eta,
                          [("x_%d_%d" % (k, j), 1.0), (eta, -1.0), ("z_%d_%d" % (i, k), m_ik)],
                          "<=", m_ik)
                if nonneg_x:
                    m.add_row("%s_hi" % eta, [(eta, 1.0), ("x_%d_%d" % (k, j), -1.0)], "<=", 0.0)
                else:
                    m.add_row("%s_hi" % eta,
                              [(eta, 1.0), ("x_%d_%d" % (k, j), -1.0), ("z_%d_%d" % (i, k), m_ik)],
                              "<=", m_ik)


def build_single_level_mlp(dmp, observations, weights, bigM_cfg=None):
    """Objective-coefficient inference for the linear family as one MIP.

    Primal feasibility, dual feasibility, the two complementarity pairings
    (via t1/t2 binaries) and the assignment/eta blocks; the free objective
    coefficients appear as theta variables under their normalization rows.
    """
    if dmp.family != model_mod.LINEAR:
        raise ReformError("builder requires the linear-objective family")
    if not dmp.space.norm_rows.shape[0]:
        raise ReformError("normalization rows are required; without them the "
                          "all-zero objective is admissible")
    if np.any(dmp.lb != 0.0) or np.any(np.isfinite(dmp.ub)):
        raise ReformError("builder expects plain nonnegativity bounds")
    W = np.atleast_2d(np.asarray(weights, float))
    K = W.shape[0]
    A = -dmp.G
    b = -dmp.h
    mrow, n = A.shape
    lin, _, _ = _theta_expr_tables(dmp)
    m1, m2, mik, warn = _resolve_ms(dmp, bigM_cfg)
    m = MipModel(name=dmp.name + "-single-level", sense="min",
                 big_m={"m1": m1, "m2": m2, "m_ik": mik,
                        "note": "derived from radius bound %g" % dmp.radius_bound})
    m.warnings.extend(warn)
    _add_theta_vars(m, dmp)

    def c_entry(l, j):
        """(terms, const) of the objective coefficient entry."""
        if (l, j) in lin:
            q, coef = lin[(l, j)]
            return [("theta_%d" % q, coef)], 0.0
        return [], dmp.C[l, j]

    for k in range(K):
        for j in range(n):
            m.add_var("x_%d_%d" % (k, j), "continuous", 0.0, np.inf)
        for i in range(mrow):
            m.add_var("u_%d_%d" % (k, i), "continuous", 0.0, np.inf)
        for j in range(n):
            m.add_var("t1_%d_%d" % (k, j), "binary")
        for i in range(mrow):
            m.add_var("t2_%d_%d" % (k, i), "binary")
    for k in range(K):
        for i in range(mrow):
            m.add_row("primal_%d_%d" % (k, i),
                      [("x_%d_%d" % (k, j), A[i, j]) for j in range(n)], ">=", b[i])
        for j in range(n):
            # dual feasibility: A' u <= sum_l w_l c_l (theta terms moved left)
            terms = [("u_%d_%d" % (k, i), A[i, j]) for i in range(mrow)]
            const = 0.0
            for l in range(dmp.p):
                tt, cc = c_entry(l, j)
                terms += [(v, -W[k, l] * c) for v, c in tt]
                const += W[k, l] * cc
            m.add_row("dual_%d_%d" % (k, j), terms, "<=", const)
            m.add_row("comp_x_%d_%d" % (k, j),
                      [("x_%d_%d" % (k, j), 1.0), ("t1_%d_%d" % (k, j), -m1)], "<=", 0.0)
            # dual slack <= M1 (1 - t1)
            terms = []
            const = m1
            for l in range(dmp.p):
                tt, cc = c_entry(l, j)
                terms += [(v, W[k, l] * c) for v, c in tt]
                const -= W[k, l] * cc
            terms += [("u_%d_%d" % (k, i), -A[i, j]) for i in range(mrow)]
            terms.append(("t1_%d_%d" % (k, j), m1))
            m.add_row("comp_slack_%d_%d" % (k, j), terms, "<=", const)
        for i in range(mrow):
            m.add_row("comp_u_%d_%d" % (k, i),
                      [("u_%d_%d" % (k, i), 1.0), ("t2_%d_%d" % (k, i), -m2)], "<=", 0.0)
            terms = [("x_%d_%d" % (k, j), A[i, j]) for j in range(n)]
            terms.append(("t2_%d_%d" % (k, i), m2))
            m.add_row("comp_pslack_%d_%d" % (k, i), terms, "<=", b[i] + m2)
    Y = _obs_array(observations, n)
    if Y.shape[0]:
        _eta_block(m, Y, K, n, mik, nonneg_x=True)
        _objective_from_residuals(m, Y, K, mik)
    m.validate()
    return m


def build_single_level_mqp_rhs(dmp, observations, weights, bigM_cfg=None,
                               include_bound_rows=False):
    """Right-hand-side inference for the quadratic family as one MIP:
    stationarity equalities replace dual feasibility rows; the free RHS
    entries appear as theta variables.

    The KKT block carries multipliers for the general rows only (matching the
    template layout); with ``include_bound_rows`` the nonnegativity bounds are
    folded into the row block so boundary optima also certify.
    """
    if dmp.family != model_mod.QUADRATIC:
        raise ReformError("builder requires the quadratic family")
    for s in dmp.slots:
        if s.target != "ineq_rhs":
            raise ReformError("free slots outside the constraint right-hand side")
    W = np.atleast_2d(np.asarray(weights, float))
    K = W.shape[0]
    A = -dmp.G
    b = -dmp.h
    _, _, rhs_tab = _theta_expr_tables(dmp)
    if include_bound_rows:
        A = np.vstack([A, np.eye(dmp.n)])
        b = np.concatenate([b, np.zeros(dmp.n)])
    mrow, n = A.shape
    m1, m2, mik, warn = _resolve_ms(dmp, bigM_cfg)
    m = MipModel(name=dmp.name + "-single-level", sense="min",
                 big_m={"m1": m1, "m_ik": mik,
                        "note": "derived from radius bound %g" % dmp.radius_bound})
    m.warnings.extend(warn)
    _add_theta_vars(m, dmp)

    def b_entry(i):
        # instance stores h = coef * theta on ">=" rows flipped to "<=": b = -h
        if i in rhs_tab:
            q, coef = rhs_tab[i]
            return [("theta_%d" % q, -coef)], 0.0
        return [], b[i]

    for k in range(K):
        for j in range(n):
            m.add_var("x_%d_%d" % (k, j), "continuous", -np.inf, np.inf)
        for i in range(mrow):
            m.add_var("u_%d_%d" % (k, i), "continuous", 0.0, np.inf)
        for i in range(mrow):
            m.add_var("t_%d_%d" % (k, i), "binary")
    for k in range(K):
        Qbar = np.tensordot(W[k], dmp.Qs, axes=1)
        cbar = dmp.C.T @ W[k]
        for i in range(mrow):
            terms = [("x_%d_%d" % (k, j), A[i, j]) for j in range(n)]
            bt, bc = b_entry(i) if i < dmp.G.shape[0] else ([], b[i])
            terms += [(v, -c) for v, c in bt]
            m.add_row("primal_%d_%d" % (k, i), terms, ">=", bc)
            m.add_row("comp_u_%d_%d" % (k, i),
                      [("u_%d_%d" % (k, i), 1.0), ("t_%d_%d" % (k, i), -m1)], "<=", 0.0)
            terms = [("x_%d_%d" % (k, j), A[i, j]) for j in range(n)]
            terms += [(v, -c) for v, c in bt]
            terms.append(("t_%d_%d" % (k, i), m1))
            m.add_row("comp_pslack_%d_%d" % (k, i), terms, "<=", bc + m1)
        for j in range(n):
            terms = [("x_%d_%d" % (k, jj), Qbar[j, jj]) for jj in range(n)]
            terms += [("u_%d_%d" % (k, i), -A[i, j]) for i in range(mrow)]
            m.add_row("stat_%d_%d" % (k, j), terms, "=", -cbar[j])
    Y = _obs_array(observations, n)
    if Y.shape[0]:
        _eta_block(m, Y, K, n, mik, nonneg_x=False)
        _objective_from_residuals(m, Y, K, mik)
    m.validate()
    return m


def build_test_problem(dmp, theta_hat, efficient_points, weights, bigM_cfg=None,
                       tau=0.0):
    """Farthest-parameter displacement model: maximize the L1 distance to the
    reference parameter subject to every given efficient point satisfying the
    KKT conditions of some sampled weight (big-M disjunction over z binaries).
    Only objective-side parameter slots are supported.  ``tau`` relaxes the
    stationarity rows symmetrically."""
    if dmp.family not in (model_mod.LINEAR, model_mod.QUADRATIC):
        raise ReformError("builder requires a smooth objective family")
    for s in dmp.slots:
        if s.target not in ("obj_lin", "obj_quad_diag"):
            raise ReformError("only objective-side parameter slots are supported")
    X = np.atleast_2d(np.asarray(efficient_points, float))
    W = np.atleast_2d(np.asarray(weights, float))
    Np, n = X.shape
    K = W.shape[0]
    theta_hat = np.asarray(theta_hat, float)
    lin, quad, _ = _theta_expr_tables(dmp)
    m1, _, _, warn = _resolve_ms(dmp, bigM_cfg)
    m_sign = (bigM_cfg.m_sign if bigM_cfg and bigM_cfg.m_sign is not None
              else float((dmp.space.upper - dmp.space.lower).max(initial=1.0)))
    m = MipModel(name=dmp.name + "-displacement", sense="max",
                 big_m={"m_stat": m1, "m_sign": m_sign,
                        "note": "derived from radius bound %g" % dmp.radius_bound})
    m.warnings.extend(warn)
    _add_theta_vars(m, dmp)
    G = dmp.G
    hh = dmp.h
    mrow = G.shape[0]
    # bound rows enter the multiplier set (feasible points may sit on them)
    Gall = np.vstack([G, -np.eye(n)]) if np.all(dmp.lb == 0.0) else G
    hall = np.concatenate([hh, np.zeros(n)]) if np.all(dmp.lb == 0.0) else hh
    mall = Gall.shape[0]
    for q in range(dmp.num_free):
        m.add_var("dp_%d" % q, "continuous", 0.0, np.inf)
        m.add_var("dm_%d" % q, "continuous", 0.0, np.inf)
        m.add_var("sgn_%d" % q, "binary")
        m.add_row("split_%d" % q,
                  [("theta_%d" % q, 1.0), ("dp_%d" % q, -1.0), ("dm_%d" % q, 1.0)],
                  "=", theta_hat[q])
        m.add_row("split_p_%d" % q, [("dp_%d" % q, 1.0), ("sgn_%d" % q, -m_sign)], "<=", 0.0)
        m.add_row("split_m_%d" % q, [("dm_%d" % q, 1.0), ("sgn_%d" % q, m_sign)], "<=", m_sign)
        m.lin_obj.append(("dp_%d" % q, 1.0))
        m.lin_obj.append(("dm_%d" % q, 1.0))
    for i in range(Np):
        for r in range(mall):
            m.add_var("u_%d_%d" % (i, r), "continuous", 0.0, np.inf)
        for k in range(K):
            m.add_var("z_%d_%d" % (i, k), "binary")
    for i in range(Np):
        x = X[i]
        slack = Gall @ x - hall
        m.add_row("comp_%d" % i,
                  [("u_%d_%d" % (i, r), slack[r]) for r in range(mall)], "=", 0.0)
        m.add_row("assign_%d" % i, [("z_%d_%d" % (i, k), 1.0) for k in range(K)], "=", 1.0)
        for k in range(K):
            for j in range(n):
                # gradient entry of the weighted objective at x, linear in theta
                terms = [("u_%d_%d" % (i, r), Gall[r, j]) for r in range(mall)]
                const = 0.0
                for l in range(dmp.p):
                    if (l, j) in lin:
                        ql, coef = lin[(l, j)]
                        terms.append(("theta_%d" % ql, W[k, l] * coef))
                    else:
                        const -= W[k, l] * dmp.C[l, j]
                    if dmp.Qs is not None:
                        row_dot = float(dmp.Qs[l, j] @ x)
                        if (l, j) in quad:
                            qq, coef = quad[(l, j)]
                            terms.append(("theta_%d" % qq, W[k, l] * coef * x[j]))
                            row_dot -= dmp.Qs[l, j, j] * x[j]
                        const -= W[k, l] * row_dot
                zt = ("z_%d_%d" % (i, k), m1)
                m.add_row("stat_hi_%d_%d_%d" % (i, k, j), terms + [zt], "<=",
                          const + m1 + tau)
                m.add_row("stat_lo_%d_%d_%d" % (i, k, j),
                          [(v, -c) for v, c in terms] + [zt], "<=", -const + m1 + tau)
    m.validate()
    return m


# ---------------------------------------------------------------------------
# export / parse / feasibility checking
# ---------------------------------------------------------------------------

def _write_terms(buf, terms):
    for v, c in terms:
        if c >= 0:
            buf.write(" + %s %s" % (_fmt(c), v))
        else:
            buf.write(" - %s %s" % (_fmt(-c), v))


def export_model(m, path):
    """Write the model in the textual format above; identical inputs yield
    byte-identical files."""
    m.validate()
    buf = io.StringIO()
    buf.write("Minimize\n" if m.sense == "min" else "Maximize\n")
    buf.write(" obj:")
    _write_terms(buf, [("%s^2" % v, c) for v, c in m.quad_obj])
    _write_terms(buf, m.lin_obj)
    if m.const_obj:
        buf.write(" + %s" % _fmt(m.const_obj))
    if not (m.quad_obj or m.lin_obj or m.const_obj):
        buf.write(" 0")
    buf.write("\nSubject To\n")
    for r in m.rows:
        buf.write(" %s:" % r.name)
        _write_terms(buf, r.terms)
        if not r.terms:
            buf.write(" 0")
        buf.write(" %s %s\n" % (r.sense, _fmt(r.rhs)))
    buf.write("Bounds\n")
    for v in m.variables:
        if v.kind == "binary":
            continue
        if not np.isfinite(v.lb) and not np.isfinite(v.ub):
            buf.write(" %s free\n" % v.name)
        else:
            lo = "-inf" if not np.isfinite(v.lb) else _fmt(v.lb)
            hi = "inf" if not np.isfinite(v.ub) else _fmt(v.ub)
            buf.write(" %s <= %s <= %s\n" % (lo, v.name, hi))
    bins = m.binaries()
    if bins:
        buf.write("Binaries\n")
        for i in range(0, len(bins), 8):
            buf.write(" " + " ".join(bins[i:i + 8]) + "\n")
    buf.write("End\n")
    text = buf.getvalue()
    with open(path, "w") as fh:
        fh.write(text)
    return text


def _parse_terms(tokens):
    terms = []
    sign = 1.0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok == "+":
            sign = 1.0
            i += 1
            continue
        if tok == "-":
            sign = -1.0
            i += 1
            continue
        coef = sign * float(tok)
        if i + 1 < len(tokens) and not _is_number(tokens[i + 1]) and tokens[i + 1] not in ("+", "-"):
            terms.append((tokens[i + 1], coef))
            i += 2
        else:
            terms.append((None, coef))
            i += 1
        sign = 1.0
    return terms


def _is_number(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


def parse_model(text):
    """Reader for the export format; used for round-trip checks."""
    m = MipModel(name="parsed")
    lines = [ln.rstrip("\n") for ln in text.splitlines() if ln.strip()]
    section = None
    names_seen = {}
    bounds = {}
    binaries = set()
    rows = []
    obj_terms = []
    i = 0
    while i < len(lines):
        ln = lines[i].strip()
        if ln in ("Minimize", "Maximize"):
            m.sense = "min" if ln == "Minimize" else "max"
            section = "obj"
        elif ln == "Subject To":
            section = "rows"
        elif ln == "Bounds":
            section = "bounds"
        elif ln == "Binaries":
            section = "bins"
        elif ln == "End":
            break
        elif section == "obj":
            body = ln.split(":", 1)[1]
            obj_terms = _parse_terms(body.split())
        elif section == "rows":
            name, body = ln.split(":", 1)
            toks = body.split()
            sense_pos = max(toks.index(s) if s in toks else -1 for s in ("<=", ">=", "="))
            sense = toks[sense_pos]
            rhs = float(toks[sense_pos + 1])
            rows.append(Row(name.strip(), [(v, c) for v, c in _parse_terms(toks[:sense_pos]) if v],
                            sense, rhs))
        elif section == "bounds":
            toks = ln.split()
            if toks[-1] == "free":
                bounds[toks[0]] = (-np.inf, np.inf)
            else:
                lo = -np.inf if toks[0] == "-inf" else float(toks[0])
                hi = np.inf if toks[4] == "inf" else float(toks[4])
                bounds[toks[2]] = (lo, hi)
        elif section == "bins":
            binaries.update(ln.split())
        i += 1
    for v, c in obj_terms:
        if v is None:
            m.const_obj += c
        elif v.endswith("^2"):
            m.quad_obj.append((v[:-2], c))
            names_seen[v[:-2]] = True
        else:
            m.lin_obj.append((v, c))
            names_seen[v] = True
    for r in rows:
        for v, _ in r.terms:
            names_seen[v] = True
    m.rows = rows
    order = list(bounds.keys()) + [v for v in binaries] + [v for v in names_seen if v not in bounds and v not in binaries]
    seen = set()
    for v in order:
        if v in seen:
            continue
        seen.add(v)
        if v in binaries:
            m.add_var(v, "binary")
        else:
            lo, hi = bounds.get(v, (0.0, np.inf))
            m.add_var(v, "continuous", lo, hi)
    m.validate()
    return m


@dataclass
class ViolationReport:
    max_violation: float
    worst_row: str
    per_row: dict
    objective: float

    @property
    def feasible(self):
        return self.max_violation <= 1e-6


def check_feasible(m, point, tol=1e-6):
    """Signed violation per row plus bound/integrality violations for a full
    variable assignment; raises on unmapped variables."""
    for v in m.variables:
        if v.name not in point:
            raise ReformError("unmapped variable %r" % v.name)
    per = {}
    worst, worst_row = 0.0, ""
    for r in m.rows:
        lhs = sum(c * point[v] for v, c in r.terms)
        if r.sense == "<=":
            viol = lhs - r.rhs
        elif r.sense == ">=":
            viol = r.rhs - lhs
        else:
            viol = abs(lhs - r.rhs)
        per[r.name] = viol
        if viol > worst:
            worst, worst_row = viol, r.name
    for v in m.variables:
        val = point[v.name]
        if v.kind == "binary":
            viol = max(abs(val - round(val)), -min(val, 0.0), val - 1.0)
        else:
            viol = max(v.lb - val if np.isfinite(v.lb) else -np.inf,
                       val - v.ub if np.isfinite(v.ub) else -np.inf, 0.0)
        if viol > worst:
            worst, worst_row = viol, "bound:" + v.name
    return ViolationReport(worst, worst_row, per, m.objective_value(point))
