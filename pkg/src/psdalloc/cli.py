"""Command line front end: design / run / bench / audit / curve."""

import argparse
import json
import sys

import numpy as np

from .bench import (ExperimentConfig, emit_csv, emit_curve, emit_gs_curve,
                    gen_adversarial, gen_random, run_experiment)
from .budget import BudgetSmoother, b_prime
from .designer import DesignSpec, cr_bound, design_hs, design_to_dict, design_from_dict
from .lowner import SmoothedObjective, exact_measure
from .objectives import make_objective, trace_lift
from .online import run_stream
from .oracle import audit_run, instance_from_dict, instance_to_dict, offline_continuous_opt


def _write_json(obj, path):
    if path is None or path == "-":
        json.dump(obj, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")


def _gammas(text):
    return tuple(float(g) for g in str(text).split(","))


def cmd_design(args):
    obj = make_objective(args.objective, args.p)
    spec = DesignSpec(obj, args.gamma, args.umax, args.q, args.d,
                      args.variant, args.rho2)
    result = design_hs(spec)
    _write_json(design_to_dict(result), args.out)
    print("beta = %.9g  bound = %.9g  residual = %.3g  flagged = %s"
          % (result.beta, cr_bound(args.gamma, result.beta),
             result.residual, result.flagged), file=sys.stderr)
    return 0


def _load_instance(args):
    if args.instance:
        with open(args.instance) as fh:
            return instance_from_dict(json.load(fh))
    b = args.b if args.b is not None else args.m / 5
    if args.generator == "adversarial":
        return gen_adversarial(args.n, args.m, args.seed, b)
    return gen_random(args.n, args.m, args.density, args.seed, b)


def cmd_run(args):
    inst = _load_instance(args)
    if args.measure:
        with open(args.measure) as fh:
            dres = design_from_dict(json.load(fh))
        obj = dres.spec.objective
        surrogate = dres.smoothed()
        beta = dres.beta
    else:
        obj = make_objective(args.objective, args.p)
        em = exact_measure(obj)
        if em is None:
            raise SystemExit("objective %s needs a designed measure (--measure)" % obj.label)
        surrogate = SmoothedObjective(em, obj)
        beta = args.gamma if obj.kind == "linear" else args.gamma + 1.0
    smoother = BudgetSmoother(obj, args.gamma, inst.b, inst.theta, inst.Theta,
                              inst.rho1, args.variant)
    trace = run_stream(surrogate, smoother, inst.arrivals, args.variant, inst.n)
    p_star = offline_continuous_opt(inst, obj).value
    report = audit_run(trace.decisions, inst, surrogate, smoother,
                       args.variant, p_star=p_star)
    primal = trace_lift(obj, trace.U)
    payload = {
        "objective": {"kind": obj.kind, "p": obj.p},
        "gamma": args.gamma,
        "variant": args.variant,
        "b": inst.b,
        "measure": {"nodes": [float(x) for x in surrogate.measure.nodes],
                    "weights": [float(x) for x in surrogate.measure.weights]},
        "instance": instance_to_dict(inst),
        "decisions": [float(x) for x in trace.decisions],
        "report": {
            "budget_used": trace.u,
            "b_prime": report.b_prime,
            "primal_H": primal,
            "p_star": p_star,
            "ratio": primal / p_star if p_star > 0 else float("nan"),
            "bound": cr_bound(args.gamma, beta),
            "audit_pass": report.passed,
        },
    }
    _write_json(payload, args.out)
    if args.gs_out:
        us = np.linspace(0.0, 1.2 * max(report.b_prime, inst.b), 400)
        emit_gs_curve(smoother, us, args.gs_out)
    print("primal = %.6g  P* = %.6g  ratio = %.4g  budget = %.4g/%.4g  audit = %s"
          % (primal, p_star, payload["report"]["ratio"], trace.u,
             report.b_prime, report.passed), file=sys.stderr)
    return 0 if report.passed else 1


def cmd_bench(args):
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    overrides = {
        "objective": args.objective, "n": args.n, "m": args.m, "b": args.b,
        "gammas": _gammas(args.gamma) if args.gamma else None,
        "repeats": args.repeats, "seed": args.seed,
        "variants": tuple(args.variant.split(",")) if args.variant else None,
        "generator": args.generator, "density": args.density,
        "q": args.q, "d": args.d, "umax_override": args.umax, "out": args.out,
    }
    for k, v in overrides.items():
        if v is not None:
            base[k] = v
    cfg = ExperimentConfig.from_dict(base)
    reports = run_experiment(cfg)
    npass = sum(1 for r in reports if r.audit_pass)
    print("%d runs, %d audits passed, csv: %s" % (len(reports), npass, cfg.out),
          file=sys.stderr)
    return 0 if npass == len(reports) else 1


def cmd_audit(args):
    with open(args.trace) as fh:
        payload = json.load(fh)
    obj = make_objective(payload["objective"]["kind"], payload["objective"].get("p", 1.0))
    inst = instance_from_dict(payload["instance"])
    from .lowner import AtomicMeasure
    surrogate = SmoothedObjective(
        AtomicMeasure(np.asarray(payload["measure"]["nodes"], dtype=float),
                      np.asarray(payload["measure"]["weights"], dtype=float)), obj)
    smoother = BudgetSmoother(obj, float(payload["gamma"]), inst.b, inst.theta,
                              inst.Theta, inst.rho1, payload["variant"])
    report = audit_run(np.asarray(payload["decisions"], dtype=float), inst,
                       surrogate, smoother, payload["variant"])
    _write_json(report.to_dict(), args.out)
    print("audit %s" % ("PASS" if report.passed else "FAIL"), file=sys.stderr)
    return 0 if report.passed else 1


def cmd_curve(args):
    rows = emit_curve(args.objective, _gammas(args.gamma), args.umax, args.out,
                      args.q, args.d, args.variant, args.rho2, args.p)
    for row in rows:
        print("gamma=%g beta=%.6g bound=%.6g" %
              (row["gamma"], row["beta"], row["bound_smoothed"]), file=sys.stderr)
    return 0


def _add_design_flags(p):
    p.add_argument("--objective", default="dopt")
    p.add_argument("--p", type=float, default=1.0, help="exponent for pmean")
    p.add_argument("--q", type=int, default=100)
    p.add_argument("--d", type=int, default=200)
    p.add_argument("--variant", default="sim", choices=["sim", "seq"])
    p.add_argument("--rho2", type=float, default=0.0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="psdalloc",
        description="Budgeted online PSD allocation: design smoothings, run "
                    "engines, benchmark, audit, and trace ratio bounds.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="design a smoothed gain measure")
    _add_design_flags(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--umax", type=float, required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("run", help="run one engine over one instance")
    p.add_argument("--objective", default="dopt")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--measure", help="design JSON from the design subcommand")
    p.add_argument("--instance", help="instance JSON (overrides generator flags)")
    p.add_argument("--generator", default="adversarial", choices=["adversarial", "random"])
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--b", type=float)
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--variant", default="sim", choices=["sim", "seq"])
    p.add_argument("--out", default="-")
    p.add_argument("--gs-out", dest="gs_out", help="CSV trace of gs_prime")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="run the full experiment pipeline")
    p.add_argument("--config", help="JSON config; flags override its keys")
    p.add_argument("--objective")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--b", type=float)
    p.add_argument("--gamma", help="comma-separated gamma grid")
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", help="comma-separated: sim,seq")
    p.add_argument("--generator")
    p.add_argument("--density", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--umax", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("audit", help="re-verify a recorded run")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("curve", help="bound-vs-gamma curve CSV")
    _add_design_flags(p)
    p.add_argument("--gamma", required=True, help="comma-separated gamma grid")
    p.add_argument("--umax", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curve)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
