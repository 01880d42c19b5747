"""Synthetic data generation, estimation campaigns and metric computation.

Campaigns are driven by :class:`ExperimentConfig`; repetitions run with
per-repetition seeds (base seed + index), emit one CSV row each and aggregate
at the end.  All output is reproducible byte-for-byte for a fixed config.
"""

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import estimators, fixtures, kernels, loss, model, solver


class HarnessError(ValueError):
    pass


@dataclass
class NoiseModel:
    """Additive or quantization noise applied elementwise to the generated
    efficient solutions."""

    kind: str                  # gaussian | truncated-gaussian | uniform | rounding
    sigma: float = 0.1
    lo: float = -1.0
    hi: float = 1.0
    half_width: float = 0.25
    granularity: float = 0.001

    def __post_init__(self):
        if self.kind in ("gaussian", "truncated-gaussian") and self.sigma <= 0:
            raise HarnessError("sigma must be positive")
        if self.kind == "uniform" and self.half_width <= 0:
            raise HarnessError("half_width must be positive")
        if self.kind == "rounding" and self.granularity <= 0:
            raise HarnessError("granularity must be positive")
        if self.kind == "truncated-gaussian" and not (self.lo <= 0.0 <= self.hi):
            raise HarnessError("truncation interval must contain zero")

    def apply(self, rng, X):
        X = np.asarray(X, float)
        if self.kind == "gaussian":
            return X + rng.normal(0.0, self.sigma, X.shape)
        if self.kind == "truncated-gaussian":
            eps = np.empty(X.shape)
            flat = eps.reshape(-1)
            got = 0
            while got < flat.size:
                cand = rng.normal(0.0, self.sigma, 2 * (flat.size - got))
                cand = cand[(cand >= self.lo) & (cand <= self.hi)]
                take = min(cand.size, flat.size - got)
                flat[got:got + take] = cand[:take]
                got += take
            return X + eps
        if self.kind == "uniform":
            return X + rng.uniform(-self.half_width, self.half_width, X.shape)
        if self.kind == "rounding":
            return np.round(X / self.granularity) * self.granularity
        raise HarnessError("unknown noise kind %r" % self.kind)

    @staticmethod
    def from_dict(d):
        return NoiseModel(**d)


#: per-fixture data law: (weight distribution kwargs, noise model)
DATA_LAWS = {
    "intro-biobj": ({"dist": "uniform"}, NoiseModel("gaussian", sigma=0.05)),
    "mlp-triobj": ({"dist": "uniform"}, NoiseModel("gaussian", sigma=0.5)),
    "mqp-rhs": ({"dist": "uniform"}, NoiseModel("truncated-gaussian", sigma=0.1, lo=-1.0, hi=1.0)),
    "mqp-obj": ({"dist": "uniform"}, NoiseModel("uniform", half_width=0.25)),
    "portfolio": ({"dist": "truncnorm", "mean": 0.5, "sd": 0.1}, NoiseModel("rounding", granularity=0.001)),
    "traffic": ({"dist": "uniform-box", "lo": 0.3, "hi": 0.7}, NoiseModel("rounding", granularity=10.0)),
}


def _solve_ordered(dmp, theta, W):
    """Batch forward solves sorted by the first weight coordinate: neighboring
    weights have neighboring solutions, which keeps warm starts effective."""
    order = np.argsort(W[:, 0], kind="stable")
    X_sorted = solver.front_points(dmp, theta, W[order])
    X = np.empty_like(X_sorted)
    X[order] = X_sorted
    return X


def generate_observations(dmp, theta_true, weight_law, noise, n_obs, seed):
    """Draw weights from the law, solve the scalarized problem per weight and
    corrupt with noise.  The generating truth is retained for metrics only."""
    W = random_weights_from_law(dmp.p, n_obs, weight_law, seed)
    X = _solve_ordered(dmp, theta_true, W)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 977]))
    Y = noise.apply(rng, X)
    return loss.ObservationSet(Y, truth=loss.GroundTruth(np.asarray(theta_true, float), W))


def random_weights_from_law(p, n, weight_law, seed):
    law = dict(weight_law)
    dist = law.pop("dist", "uniform")
    return solver.random_weights(p, n, dist=dist, seed=seed, **law)


def make_generator(dmp, theta_true, weight_law, noise):
    """Data-law closure for Monte-Carlo risk estimation."""
    conc = model.apply_params(dmp, np.asarray(theta_true, float))

    def gen(rng, n):
        seed = int(rng.integers(2 ** 31 - 1))
        W = random_weights_from_law(dmp.p, n, weight_law, seed)
        X = _solve_ordered(conc, np.asarray(theta_true, float), W)
        return noise.apply(np.random.default_rng(seed + 1), X)

    return gen


def estimation_error(theta_hat, theta_true, relative=False):
    """Euclidean distance on the free coordinates; the relative mode divides
    by the true norm."""
    a = theta_hat.values if isinstance(theta_hat, model.ParamVector) else np.asarray(theta_hat, float)
    b = np.asarray(theta_true, float)
    if a.shape != b.shape:
        raise HarnessError("parameter vectors use different bindings")
    err = float(np.linalg.norm(a - b))
    if relative:
        return err / float(np.linalg.norm(b))
    return err


def weight_histogram(result, bins=None):
    """Counts of observations per assigned weight's first coordinate plus the
    count-weighted mean and standard deviation of the assigned weights."""
    if result.weights is None:
        raise HarnessError("estimate carries no weight sample")
    W = np.atleast_2d(result.weights)
    first = W[result.assignment.idx, 0]
    counts_per_k = np.bincount(result.assignment.idx, minlength=W.shape[0])
    mean = float(first.mean())
    sd = float(first.std(ddof=0))
    if bins is None:
        centers = W[:, 0]
        return {"centers": centers.tolist(), "counts": counts_per_k.tolist(),
                "mean": mean, "sd": sd}
    hist, edges = np.histogram(first, bins=bins, range=(0.0, 1.0))
    return {"edges": edges.tolist(), "counts": hist.tolist(), "mean": mean, "sd": sd}


# ---------------------------------------------------------------------------
# introductory bi-objective demonstration
# ---------------------------------------------------------------------------

def intro_segment_samples(a, b, c, samples):
    """Evenly spaced points on the two efficient mid-segments."""
    v = np.linspace(b * c / (2.0 * (a - b)), b * c / (a - b), max(2, samples // 2))
    seg1 = np.column_stack([-v, (a / b) * v])
    seg2 = np.column_stack([(a / b) * v, -v])
    return np.vstack([seg1, seg2])


def value_slack_membership(dmp, theta, points, weights, tau):
    """Weighted-sum value slack per point: min_k [w_k'f(y) - WP value at w_k];
    a point is rendered efficient when some sampled weight certifies it to
    within tau (scale-free in the objective values)."""
    conc = model.apply_params(dmp, np.asarray(theta, float))
    W = np.atleast_2d(weights)
    vals = np.array([solver.solve_wp(conc, theta, W[k]).value for k in range(W.shape[0])])
    F = conc.fvals_many(np.atleast_2d(points))
    slacks = (F @ W.T) - vals[None, :]
    best = slacks.min(axis=1)
    scale = 1.0 + np.abs(F).max(axis=1)
    return best <= tau * scale, best


def intro_demo(a=6.0, b=1.0, c=1.0, samples=2000, k_weights=21, tau=1e-2, seed=0):
    """Mean of even samples on the two efficient mid-segments, plus an
    inverse fit of the two linear objectives from the same (noise-free) data
    and the share of samples the fit renders efficient."""
    Y = intro_segment_samples(a, b, c, samples)
    mean = Y.mean(axis=0)
    inst = fixtures.intro_biobjective(a, b, c, free=True)
    W = solver.grid_weights(2, k_weights)
    result = estimators.estimate_clustering(
        inst, Y, W, init="kkt", seed=seed,
        fitcfg=estimators.FitConfig(n_starts=2, max_sweeps=80, seed=seed),
    )
    member_w = solver.grid_weights(2, 201)
    flags, slacks = value_slack_membership(inst, result.theta.values, Y, member_w, tau)
    return {
        "mean": mean.tolist(),
        "theta_hat": result.theta.values.tolist(),
        "efficient_share": float(flags.mean()),
        "max_value_slack": float(slacks.max()),
        "objective": result.objective,
    }


# ---------------------------------------------------------------------------
# experiment campaigns
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    fixture: str
    n_obs: object = 50                 # int or list of ints
    k_weights: object = 11             # int or list of ints
    estimator: str = "clustering"      # clustering | admm | oracle
    repetitions: int = 1
    seed: int = 0
    weight_law: dict = None
    noise: dict = None
    estimator_params: dict = field(default_factory=dict)
    predict: bool = False
    predict_samples: int = 100000
    predict_k_ref: int = None
    relative_error: bool = False
    out_dir: str = None
    name: str = None

    def resolved_name(self):
        return self.name or ("%s-%s" % (self.fixture, self.estimator))

    @staticmethod
    def from_dict(d):
        return ExperimentConfig(**d)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list
    aggregates: dict
    files: dict = field(default_factory=dict)


CSV_HEADER = ["fixture", "estimator", "n_obs", "k_weights", "rep", "seed",
              "estimation_error", "relative_error", "objective",
              "prediction_error", "outer_iterations", "wall_time", "status",
              "theta_hat"]


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _fmtf(v):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    return repr(float(v))


def run_experiment(config):
    """Execute a campaign over the (n_obs x k_weights) grid; emits CSV rows
    incrementally, a JSON summary and plot-data files."""
    inst, theta_true = fixtures.fixture(config.fixture)
    law, noise = DATA_LAWS[config.fixture]
    if config.weight_law:
        law = config.weight_law
    if config.noise:
        noise = NoiseModel.from_dict(config.noise)
    out_dir = config.out_dir or os.environ.get("IMOP_OUT_DIR", ".")
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, config.resolved_name())
    rows = []
    csv_buf = io.StringIO()
    writer = csv.writer(csv_buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    plot_files = {}

    for n_obs in _as_list(config.n_obs):
        for K in _as_list(config.k_weights):
            W = solver.grid_weights(inst.p, K)
            for rep in range(config.repetitions):
                seed = config.seed + rep
                obs = generate_observations(inst, theta_true, law, noise, n_obs, seed)
                t0 = time.perf_counter()
                status = "ok"
                pred = None
                try:
                    result, extra_state = _run_estimator(config, inst, obs, W, seed)
                    theta_hat = result.theta.values
                    err = estimation_error(theta_hat, theta_true)
                    rel = estimation_error(theta_hat, theta_true, relative=True)
                    if config.predict:
                        gen = make_generator(inst, theta_true, law, noise)
                        pred, _, _ = loss.monte_carlo_risk(
                            inst, theta_hat, gen, config.predict_samples,
                            seed=config.seed + 104729, k_ref=config.predict_k_ref)
                except (solver.SolverError, estimators.EstimatorError, model.ModelError) as exc:
                    status = "failed: %s" % exc
                    result, extra_state, theta_hat = None, None, None
                    err = rel = None
                wall = time.perf_counter() - t0
                row = {
                    "fixture": config.fixture, "estimator": config.estimator,
                    "n_obs": n_obs, "k_weights": K, "rep": rep, "seed": seed,
                    "estimation_error": err, "relative_error": rel,
                    "objective": result.objective if result else None,
                    "prediction_error": pred,
                    "outer_iterations": result.outer_iterations if result else None,
                    "wall_time": wall, "status": status,
                    "theta_hat": ";".join(repr(float(t)) for t in theta_hat) if theta_hat is not None else "",
                }
                rows.append(row)
                writer.writerow([
                    row["fixture"], row["estimator"], row["n_obs"], row["k_weights"],
                    row["rep"], row["seed"], _fmtf(row["estimation_error"]),
                    _fmtf(row["relative_error"]), _fmtf(row["objective"]),
                    _fmtf(row["prediction_error"]), row["outer_iterations"] or "",
                    "", row["status"], row["theta_hat"],
                ])
                if result is not None and config.estimator == "admm" and extra_state is not None:
                    key = "residuals_%d_%d_%d" % (n_obs, K, rep)
                    plot_files[key] = _residual_plot_data(extra_state)
                if result is not None and config.estimator == "clustering":
                    key = "assignment_trace_%d_%d_%d" % (n_obs, K, rep)
                    plot_files[key] = _trace_plot_data(result)

    aggregates = _aggregate(rows)
    files = {}
    csv_path = base + ".csv"
    with open(csv_path, "w") as fh:
        fh.write(csv_buf.getvalue())
    files["csv"] = csv_path
    summary_path = base + ".json"
    with open(summary_path, "w") as fh:
        json.dump({"config": _config_dict(config), "aggregates": aggregates},
                  fh, indent=1, sort_keys=True)
    files["summary"] = summary_path
    for key, text in plot_files.items():
        p = "%s_%s.dat" % (base, key)
        with open(p, "w") as fh:
            fh.write(text)
        files[key] = p
    return ExperimentReport(config, rows, aggregates, files)


def _config_dict(config):
    d = asdict(config)
    return d


def _run_estimator(config, inst, obs, W, seed):
    params = dict(config.estimator_params)
    if config.estimator == "clustering":
        result = estimators.estimate_clustering(inst, obs, W, seed=seed, **params)
        return result, None
    if config.estimator == "admm":
        result, state = estimators.estimate_admm(inst, obs, W, seed=seed, **params)
        return result, state
    if config.estimator == "oracle":
        res = params.pop("resolution", 0.05)
        theta, val, _ = estimators.brute_force_oracle(inst, obs, W, res, **params)
        X = solver.front_points(inst, theta, W)
        a = loss.assign(obs.points, X)
        result = estimators.EstimateResult(
            theta=model.ParamVector(theta, inst.slots), front=X, assignment=a,
            objective=val, trace=[("oracle", val)], assignment_changes=[],
            wall_time=0.0, seed=seed, weights=W)
        return result, None
    raise HarnessError("unknown estimator %r" % config.estimator)


def _aggregate(rows):
    out = {}
    for row in rows:
        key = "N%s_K%s" % (row["n_obs"], row["k_weights"])
        out.setdefault(key, []).append(row)
    agg = {}
    for key, group in sorted(out.items()):
        errs = [r["estimation_error"] for r in group if r["estimation_error"] is not None]
        preds = [r["prediction_error"] for r in group if r["prediction_error"] is not None]
        rels = [r["relative_error"] for r in group if r["relative_error"] is not None]
        agg[key] = {
            "repetitions": len(group),
            "mean_estimation_error": float(np.mean(errs)) if errs else None,
            "sd_estimation_error": float(np.std(errs, ddof=1)) if len(errs) > 1 else 0.0,
            "mean_relative_error": float(np.mean(rels)) if rels else None,
            "mean_prediction_error": float(np.mean(preds)) if preds else None,
            "failures": sum(1 for r in group if r["status"] != "ok"),
        }
    return agg


def _residual_plot_data(state):
    buf = io.StringIO()
    buf.write("# iteration r_pri r_dual\n")
    for i, (rp, rd) in enumerate(zip(state.r_pri, state.r_dual), start=1):
        buf.write("%d %s %s\n" % (i, repr(rp), repr(rd)))
    return buf.getvalue()


def _trace_plot_data(result):
    buf = io.StringIO()
    buf.write("# iteration assignment_changes\n")
    for i, cnt in enumerate(result.assignment_changes, start=1):
        buf.write("%d %d\n" % (i, cnt))
    return buf.getvalue()


def histogram_plot_data(hist):
    buf = io.StringIO()
    buf.write("# center count\n")
    for cval, cnt in zip(hist["centers"], hist["counts"]):
        buf.write("%s %d\n" % (repr(float(cval)), cnt))
    return buf.getvalue()
