"""Command-line entry point.

Subcommands: forward, estimate, test-ident, replicate, export-model,
intro-demo.  Configs are JSON documents; results land in --out (default
IMOP_OUT_DIR or the working directory).  Exit codes: 0 success, 1 validation
error, 2 numerical failure.  stdout carries a one-line JSON result pointer,
stderr the diagnostics.
"""

import argparse
import json
import os
import sys

import numpy as np


def _out_dir(args):
    out = args.out or os.environ.get("IMOP_OUT_DIR", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(path):
    if not path or not os.path.exists(path):
        raise FileNotFoundError("config file %r does not exist" % path)
    with open(path) as fh:
        return json.load(fh)


def _emit(pointer):
    sys.stdout.write(json.dumps(pointer, sort_keys=True) + "\n")


def _instance_from_config(cfg):
    from . import fixtures, model

    if "fixture" in cfg:
        inst, theta_true = fixtures.fixture(cfg["fixture"])
    else:
        with open(cfg["instance"]) as fh:
            inst = model.from_json(fh.read())
        theta_true = None
    return inst, theta_true


def cmd_forward(args):
    from . import solver

    cfg = _load_config(args.config)
    inst, theta_true = _instance_from_config(cfg)
    theta = np.asarray(cfg.get("theta", theta_true), float)
    K = int(cfg.get("k_weights", 21))
    W = solver.grid_weights(inst.p, K, seed=args.seed)
    front = solver.sample_efficient_front(inst, theta, W)
    out = os.path.join(_out_dir(args), "%s_front_%d.json" % (inst.name, K))
    with open(out, "w") as fh:
        json.dump({
            "weights": front.weights.tolist(),
            "points": front.points.tolist(),
            "fvalues": front.fvalues.tolist(),
            "boundary": front.boundary.tolist(),
        }, fh, indent=1, sort_keys=True)
    _emit({"result": out, "points": len(front)})
    return 0


def cmd_estimate(args):
    from . import harness

    cfg = _load_config(args.config)
    cfg.setdefault("repetitions", 1)
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg["out_dir"] = _out_dir(args)
    config = harness.ExperimentConfig.from_dict(cfg)
    report = harness.run_experiment(config)
    _emit({"result": report.files["summary"], "csv": report.files["csv"]})
    return 0


def cmd_replicate(args):
    return cmd_estimate(args)


def cmd_test_ident(args):
    from . import fixtures, identifiability

    cfg = _load_config(args.config)
    inst, theta_true = _instance_from_config(cfg)
    theta_hat = np.asarray(cfg.get("theta_hat", theta_true), float)
    scfg = identifiability.SearchConfig(seed=args.seed or 0,
                                        **cfg.get("search", {}))
    report = identifiability.test_identifiability(
        inst, theta_hat, K=int(cfg.get("k_weights", 21)),
        n_ref=int(cfg.get("n_ref", 200)), k_member=int(cfg.get("k_member", 200)),
        tau=cfg.get("tau"), search_cfg=scfg)
    out = os.path.join(_out_dir(args), "%s_identifiability.json" % inst.name)
    with open(out, "w") as fh:
        fh.write(report.to_json())
    _emit({"result": out, "z_test": report.z_test,
           "non_identifiable": report.non_identifiable})
    return 0


def cmd_export_model(args):
    from . import harness, reform, solver

    cfg = _load_config(args.config)
    inst, theta_true = _instance_from_config(cfg)
    builder = cfg.get("builder", "auto")
    N = int(cfg.get("n_obs", 2))
    K = int(cfg.get("k_weights", 2))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    law, noise = harness.DATA_LAWS.get(cfg.get("fixture"), ({"dist": "uniform"}, harness.NoiseModel("gaussian", sigma=0.1)))
    W = np.asarray(cfg["weights"], float) if "weights" in cfg else solver.grid_weights(inst.p, K)
    obs = harness.generate_observations(inst, theta_true, law, noise, N, seed) if N else None
    Y = obs.points if obs is not None else None
    if builder == "auto":
        builder = "mlp" if inst.family == "linear" else "mqp-rhs"
    if builder == "mlp":
        m = reform.build_single_level_mlp(inst, Y, W)
    elif builder == "mqp-rhs":
        m = reform.build_single_level_mqp_rhs(inst, Y, W)
    elif builder == "test-problem":
        theta_hat = np.asarray(cfg.get("theta_hat", theta_true), float)
        pts = solver.front_points(inst, theta_hat, solver.grid_weights(inst.p, int(cfg.get("n_ref", 10))))
        m = reform.build_test_problem(inst, theta_hat, pts, W)
    else:
        raise ValueError("unknown builder %r" % builder)
    out = os.path.join(_out_dir(args), "%s_%d_%d.lp" % (cfg.get("fixture", inst.name), N, W.shape[0]))
    reform.export_model(m, out)
    _emit({"result": out, "rows": len(m.rows), "variables": len(m.variables)})
    return 0


def cmd_intro_demo(args):
    from . import harness

    res = harness.intro_demo(samples=args.samples, seed=args.seed or 0)
    out = os.path.join(_out_dir(args), "intro_demo.json")
    with open(out, "w") as fh:
        json.dump(res, fh, indent=1, sort_keys=True)
    _emit({"result": out, "mean": res["mean"],
           "efficient_share": res["efficient_share"]})
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="imop",
        description="inverse multiobjective optimization toolkit")
    ap.add_argument("--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command")
    for name, fn, needs_config in [
        ("forward", cmd_forward, True),
        ("estimate", cmd_estimate, True),
        ("replicate", cmd_replicate, True),
        ("test-ident", cmd_test_ident, True),
        ("export-model", cmd_export_model, True),
        ("intro-demo", cmd_intro_demo, False),
    ]:
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=0,
                       help="worker threads (0 = auto); affects runtime only")
        p.add_argument("--verbose", action="store_true")
        if name == "intro-demo":
            p.add_argument("--samples", type=int, default=2000)
        p.set_defaults(func=fn)
    return ap


def dispatch(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if not getattr(args, "command", None):
        ap.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        sys.stderr.write("validation error: %s\n" % exc)
        return 1
    except (ArithmeticError, RuntimeError) as exc:
        sys.stderr.write("numerical failure: %s\n" % exc)
        return 2


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
