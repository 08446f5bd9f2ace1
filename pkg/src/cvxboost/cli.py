"""Command line entry point: ``cvxboost {fit,check,lab,assumptions,predict}``.

Exit codes: 0 success, 1 certificate or assumption failure, 2 bad
configuration or input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .dataset import Schema, load_csv
from .diagnostics import verify_trace
from .engine import AdditiveModel, BoostTrace, RunConfig, run_algorithm1, run_algorithm2
from .exceptions import AssumptionError, BoostError, CertificateError
from .lab import ConsistencyConfig, check_schedule, run_consistency
from .learners import FREE, SIGN, parse_class
from .losses import Grid, check_assumptions, parse_loss

EXIT_OK, EXIT_CERT, EXIT_CONFIG = 0, 1, 2
log = logging.getLogger("cvxboost")


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _load(args, loss):
    task = "classification" if loss.task == "classification" else "regression"
    return load_csv(args.data, Schema(target=args.target, task=task))


def cmd_fit(args):
    loss = parse_loss(args.loss, gamma=args.gamma)
    data = _load(args, loss)
    m = data.measure(halfwidth=args.smooth)
    cfg = parse_class(args.weak_class, leaf=SIGN if args.algo == 1 else FREE)
    if args.algo == 1:
        model, trace = run_algorithm1(loss, m, cfg, RunConfig(max_iters=args.iters, w0=args.w0))
    else:
        model, trace = run_algorithm2(loss, m, cfg, RunConfig(max_iters=args.iters, nu=args.nu))
    out = _out_dir(args)
    model.save(out / "model.json")
    trace.save(out / "trace.csv")
    _emit({
        "model": str(out / "model.json"),
        "trace": str(out / "trace.csv"),
        "terms": len(model),
        "final_risk": trace.rows["risk"][-1],
        "stop_reason": trace.meta["stop_reason"],
    })
    return EXIT_OK


def cmd_check(args):
    loss = parse_loss(args.loss, gamma=args.gamma)
    trace = BoostTrace.load(args.trace)
    report = verify_trace(trace, loss, L=args.L)
    _emit(report)
    if args.out:
        (_out_dir(args) / "check.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if report["pass"] else EXIT_CERT


def cmd_lab(args):
    cfg = ConsistencyConfig.from_json(Path(args.config).read_text())
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.force = cfg.force or args.force
    schedule = check_schedule(cfg)
    curve = run_consistency(cfg)
    out = _out_dir(args)
    curve.save(out / "gapcurve.csv")
    (out / "schedule.json").write_text(json.dumps(schedule, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(curve.to_csv())
    return EXIT_OK


def cmd_assumptions(args):
    loss = parse_loss(args.loss, gamma=args.gamma)
    m = None
    if args.data:
        m = _load(args, loss).measure(halfwidth=args.smooth)
    report = check_assumptions(loss, m, Grid())
    _emit(report)
    return EXIT_OK if report["pass"] else EXIT_CERT


def cmd_predict(args):
    model = AdditiveModel.load(args.model)
    data = load_csv(args.data, Schema(target=args.target))
    X = data.X
    if X.shape[1] != model.n_features and X.shape[1] + 1 == model.n_features:
        X = np.column_stack([X, data.y])  # file has no target column
    values = model.classify(X) if args.classify else model.predict(X)
    lines = [repr(float(v)) for v in values]
    if args.out:
        (_out_dir(args) / "predictions.csv").write_text("prediction\n" + "\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="cvxboost", description="Convex functional gradient boosting with certificates.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common_loss(sp):
        sp.add_argument("--loss", default="squared", help="loss as name[:k=v,...], e.g. logit:gamma=0.1")
        sp.add_argument("--gamma", type=float, default=None, help="penalty gamma (overrides the loss string)")

    f = sub.add_parser("fit", help="boost on a CSV file; writes model.json and trace.csv")
    common_loss(f)
    f.add_argument("--algo", type=int, choices=(1, 2), default=1)
    f.add_argument("--class", dest="weak_class", default="stump", help="stump, tree:k, depth:D or grid:k")
    f.add_argument("--nu", type=float, default=None)
    f.add_argument("--w0", type=float, default=1.0)
    f.add_argument("--iters", type=int, default=10000)
    f.add_argument("--data", required=True)
    f.add_argument("--target", default=None, help="target column (name or index); default last")
    f.add_argument("--smooth", type=float, default=None, help="half-width of response smoothing")
    f.add_argument("--seed", type=int, default=None, help="accepted for symmetry; fitting is deterministic")
    f.add_argument("--out", default=".")
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("check", help="re-verify the certificates of a trace")
    common_loss(c)
    c.add_argument("--trace", required=True)
    c.add_argument("--L", type=float, default=None, help="Lipschitz constant (default: trace header)")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_check)

    lab = sub.add_parser("lab", help="run a consistency experiment from a JSON config")
    lab.add_argument("--config", required=True)
    lab.add_argument("--seed", type=int, default=None)
    lab.add_argument("--force", action="store_true", help="run even if the schedule fails its checks")
    lab.add_argument("--out", default=".")
    lab.set_defaults(func=cmd_lab)

    a = sub.add_parser("assumptions", help="check a loss against the convexity and smoothness assumptions")
    common_loss(a)
    a.add_argument("--data", default=None)
    a.add_argument("--target", default=None)
    a.add_argument("--smooth", type=float, default=None)
    a.set_defaults(func=cmd_assumptions)

    pr = sub.add_parser("predict", help="evaluate a saved model on a CSV file")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--target", default=None)
    pr.add_argument("--classify", action="store_true")
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_predict)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CertificateError as exc:
        log.error("%s", exc)
        return EXIT_CERT
    except AssumptionError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (BoostError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
