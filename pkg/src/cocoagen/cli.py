"""Command-line front end.

Exit status: 0 success, 1 a validation check failed, 2 usage error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness, theory
from .numerics import NumericalFailure, RngStream, stream_id_for
from .problem import generate_instance, instance_from_json, instance_to_json, make_partition
from .solver import SolverConfig, centralized_ls, cocoa_run

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


def _e(v):
    if v is None:
        return "-"
    if isinstance(v, theory.ExtendedReal):
        return "inf" if v.is_inf else f"{v.value:.5e}"
    return f"{v:.5e}"


def _d(value, default):
    return default if value is None else value


def _int_list(text):
    try:
        vals = [int(s) for s in text.replace("|", ",").split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty size list")
    return vals


def _float_list(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_problem(p, sizes_multi=False):
    p.add_argument("--n", type=int, default=None, help="observations (default 50)")
    p.add_argument("--p", type=int, default=None, help="unknowns (default 150)")
    p.add_argument("--k", type=int, default=None, help="nodes (default 2)")
    if sizes_multi:
        p.add_argument("--sizes", type=_int_list, action="append", default=None,
                       help="block sizes a,b,...; repeat for several grid cells "
                            "(default for K=2: p1 = 2..p-2)")
    else:
        p.add_argument("--sizes", type=_int_list, default=None,
                       help="block sizes a,b,... (default balanced)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cocoagen",
        description="CoCoA partitioned least squares: solver, error theory and Monte Carlo sweeps. "
                    "Defaults: n=50, p=150, K=2, N=100 trials, T=200 iterations, test rows=10n.")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run CoCoA on one random instance")
    _add_problem(s)
    s.add_argument("--lambda", dest="lam", type=float, default=0.0, help="regularization (default 0)")
    s.add_argument("--iters", type=int, default=200, help="iterations T (default 200)")
    s.add_argument("--test-rows", type=int, default=None, help="test rows (default 10n)")
    s.add_argument("--noise-std", type=float, default=0.0, help="observation noise (default 0)")
    s.add_argument("--instance", default=None, help="replay an instance JSON written by --save-instance")
    s.add_argument("--save-instance", default=None, help="write the instance as JSON")
    s.add_argument("--out", default=None, help="write results as JSON")

    pr = sub.add_parser("predict", help="first-iteration error prediction")
    _add_problem(pr)
    pr.add_argument("--block-norms", type=_float_list, default=None,
                    help="||x_k||^2 per block (default: drawn x with --seed, or p_k with --proxy)")
    pr.add_argument("--proxy", action="store_true", help="use E||x_k||^2 = p_k")
    pr.add_argument("--out", default=None, help="write the prediction as JSON")
    pr.add_argument("--from-file", default=None, help="print a saved prediction JSON")

    ad = sub.add_parser("advise", help="recommend a partition")
    _add_problem(ad)
    ad.add_argument("--margin", type=int, default=2, help="required |p_k - n| > margin (default 2)")
    ad.add_argument("--out", default=None, help="write the advice as JSON")

    for name, helptext in (("sweep-first-iter", "first-iteration error per partition"),
                           ("sweep-converged", "errors after T iterations per partition and lambda")):
        sw = sub.add_parser(name, help=helptext)
        _add_problem(sw, sizes_multi=True)
        sw.add_argument("--lambda", dest="lam", type=_float_list, default=None,
                        help="comma-separated lambdas (default 0)")
        sw.add_argument("--trials", type=int, default=None, help="trials N per cell (default 100)")
        sw.add_argument("--iters", type=int, default=None, help="iterations T (default 200)")
        sw.add_argument("--test-rows", type=int, default=None, help="test rows (default 10n)")
        sw.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
        sw.add_argument("--config", default=None, help="JSON sweep config; flags override it")
        sw.add_argument("--out", default=None, help="write results to this path")
        sw.add_argument("--format", choices=("csv", "json"), default="csv")
        sw.add_argument("--no-timing", action="store_true", help="leave wall_time_ms empty")
        sw.add_argument("--from-file", default=None, help="print a saved results file")

    va = sub.add_parser("validate", help="Monte Carlo checks of the theory")
    va.add_argument("check", choices=("lemma1", "lemma2", "lemma3", "wishart"))
    _add_problem(va)
    va.add_argument("--trials", type=int, default=None, help="Monte Carlo trials")
    va.add_argument("--iters", type=int, default=20, help="lemma1: iterations compared (default 20)")
    va.add_argument("--warmup", type=int, default=5, help="lemma2: warm-up iterations (default 5)")
    va.add_argument("--demo", action="store_true", help="wishart: allow the critical band")
    va.add_argument("--out", default=None, help="write the report as JSON")
    va.add_argument("--from-file", default=None, help="re-read a saved report; exit by its pass flag")
    return parser


def _require(parser, cond, flag, rng):
    if not cond:
        parser.error(f"{flag} out of range: must be {rng}")


def _spec(parser, n, p, k, sizes):
    _require(parser, n >= 1, "--n", ">= 1")
    _require(parser, p >= 1, "--p", ">= 1")
    try:
        if sizes is not None:
            return make_partition(p, k, sizes)
        return make_partition(p, k if k is not None else 2)
    except ValueError as exc:
        parser.error(f"--sizes/--k: {exc}")


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def _print_prediction(pred):
    print(f"n={pred.n} p={pred.spec.p} K={pred.spec.K} sizes={','.join(map(str, pred.spec.sizes))}")
    print("gamma   = (" + ", ".join(_e(g) for g in pred.gamma) + ")")
    print("alpha   = (" + ", ".join(_e(a) for a in pred.alpha) + ")")
    print("||x_k||^2 = (" + ", ".join(_e(b) for b in pred.block_norms_sq) + ")")
    print(f"epsilon_G = {_e(pred.epsilon_G)}")
    crit = pred.critical_blocks
    if crit:
        print("critical blocks (p_k in {n-1, n, n+1}): "
              + ", ".join(f"k={k + 1} (p_k={pred.spec.sizes[k]})" for k in crit))


def cmd_solve(args, parser):
    if args.instance:
        with open(args.instance) as fh:
            inst = instance_from_json(fh.read())
        n, p = inst.n, inst.p
        seed = inst.seed if inst.seed is not None else _d(args.seed, 0)
    else:
        n, p = _d(args.n, 50), _d(args.p, 150)
        seed = args.seed if args.seed is not None else 0
        _require(parser, args.noise_std >= 0, "--noise-std", ">= 0")
        x = harness.draw_x_true(p, seed)
        inst = generate_instance(n, p, x, args.noise_std, RngStream(seed, stream_id_for("solve")))
    spec = _spec(parser, n, p, args.k, args.sizes)
    _require(parser, args.lam >= 0, "--lambda", ">= 0")
    _require(parser, args.iters >= 1, "--iters", ">= 1")
    test_rows = _d(args.test_rows, 10 * n)
    _require(parser, test_rows >= 1, "--test-rows", ">= 1")
    if args.save_instance:
        with open(args.save_instance, "w") as fh:
            fh.write(instance_to_json(inst))
    trace = cocoa_run(inst, spec, SolverConfig(lam=args.lam, T=args.iters, K=spec.K))
    test = RngStream(seed, stream_id_for("solve-test")).generator().standard_normal((test_rows, p))
    gen = harness.generalization_error(inst.x_true, trace.x_hat, test)
    x_ls = centralized_ls(inst.A, inst.y)
    gen_ls = harness.generalization_error(inst.x_true, x_ls, test)
    res = {
        "n": n, "p": p, "sizes": list(spec.sizes), "lambda": args.lam, "T": args.iters,
        "train_error": harness.training_error(inst, trace.x_hat),
        "gen_error": gen.empirical, "population_gen_error": gen.population,
        "ls_train_error": harness.training_error(inst, x_ls),
        "ls_gen_error": gen_ls.empirical, "ls_population_gen_error": gen_ls.population,
    }
    print(f"CoCoA  sizes={spec.label()} lambda={args.lam:g} T={args.iters}")
    print(f"  train error       {_e(res['train_error'])}")
    print(f"  gen error (test)  {_e(res['gen_error'])}")
    print(f"  ||x - x_hat||^2   {_e(res['population_gen_error'])}")
    print("centralized LS")
    print(f"  train error       {_e(res['ls_train_error'])}")
    print(f"  gen error (test)  {_e(res['ls_gen_error'])}")
    print(f"  ||x - x_hat||^2   {_e(res['ls_population_gen_error'])}")
    if args.out:
        _write_json(args.out, res)
    return EXIT_OK


def cmd_predict(args, parser):
    if args.from_file:
        with open(args.from_file) as fh:
            pred = theory.TheoryPrediction.from_dict(json.load(fh))
        _print_prediction(pred)
        return EXIT_OK
    n, p = _d(args.n, 50), _d(args.p, 150)
    spec = _spec(parser, n, p, args.k, args.sizes)
    if args.block_norms is not None:
        _require(parser, len(args.block_norms) == spec.K, "--block-norms", f"{spec.K} values")
        _require(parser, all(b >= 0 for b in args.block_norms), "--block-norms", ">= 0")
        pred = theory.predict_first_iteration_error(None, spec, n, block_norms_sq=args.block_norms)
    elif args.proxy:
        pred = theory.predict_first_iteration_error(None, spec, n, block_norms_sq=list(spec.sizes))
    else:
        x = harness.draw_x_true(p, args.seed if args.seed is not None else 0)
        pred = theory.predict_first_iteration_error(x, spec, n)
    _print_prediction(pred)
    if args.out:
        _write_json(args.out, pred.to_dict())
    return EXIT_OK


def cmd_advise(args, parser):
    n, p = _d(args.n, 50), _d(args.p, 150)
    k = args.k if args.k is not None else (len(args.sizes) if args.sizes else 2)
    _require(parser, 1 <= k <= p, "--k", f"1..{p}")
    _require(parser, args.margin >= 0, "--margin", ">= 0")
    try:
        adv = theory.advise_partition(n, p, k, args.margin, sizes=args.sizes)
    except ValueError as exc:
        parser.error(f"--sizes: {exc}")
    status = "feasible" if adv.feasible else "INFEASIBLE (best violating spec shown)"
    print(f"n={n} p={p} K={k} margin={args.margin}: {status}")
    print(f"  sizes = {','.join(map(str, adv.spec.sizes))}  proxy epsilon_G = {_e(adv.score)}")
    if adv.violating_blocks:
        print("  blocks within margin of n: " + ", ".join(str(b + 1) for b in adv.violating_blocks))
    print("  candidates:")
    for sizes, score in adv.candidates:
        print(f"    {','.join(map(str, sizes)):>20}  {_e(score)}")
    if adv.neighbors:
        print("  neighbors (sizes, alpha, proxy epsilon_G):")
        for sizes, alpha, score in adv.neighbors:
            print(f"    {','.join(map(str, sizes)):>20}  ({', '.join(_e(a) for a in alpha)})  {_e(score)}")
    if args.out:
        _write_json(args.out, adv.to_dict())
    return EXIT_OK if adv.feasible else EXIT_INVALID


def _row_dict(r):
    return {"n": r.n, "p": r.p, "K": r.K, "sizes": list(r.sizes), "lambda": r.lam, "N": r.N,
            "T": r.T, "seed": r.seed, "empirical_first_iter": r.empirical_first_iter,
            "theory_first_iter": None if r.theory_first_iter is None else r.theory_first_iter.to_json(),
            "gen_error": r.gen_error, "train_error": r.train_error, "failures": r.failures,
            "wall_time_ms": r.wall_time_ms}


def _rows_from_json(doc):
    rows = []
    for d in doc:
        th = d["theory_first_iter"]
        rows.append(harness.SweepRow(d["n"], d["p"], d["K"], tuple(d["sizes"]), d["lambda"], d["N"],
                                     d["T"], d["seed"], d["empirical_first_iter"],
                                     None if th is None else theory.ExtendedReal.from_json(th),
                                     d["gen_error"], d["train_error"], d["failures"],
                                     d["wall_time_ms"]))
    return rows


def _print_rows(rows):
    print(f"{'sizes':>12} {'lambda':>11} {'first_iter':>12} {'theory':>12} "
          f"{'gen_error':>12} {'train_error':>12} {'fail':>4}")
    for r in rows:
        flag = " !" if r.flagged else ""
        print(f"{'|'.join(map(str, r.sizes)):>12} {r.lam:>11.3e} {_e(r.empirical_first_iter):>12} "
              f"{_e(r.theory_first_iter):>12} {_e(r.gen_error):>12} {_e(r.train_error):>12} "
              f"{r.failures:>4}{flag}")


def cmd_sweep(args, parser, converged):
    if args.from_file:
        with open(args.from_file) as fh:
            text = fh.read()
        rows = _rows_from_json(json.loads(text)) if text.lstrip().startswith("[") else harness.rows_from_csv(text)
        _print_rows(rows)
        return EXIT_OK
    overrides = {"n": args.n, "p": args.p, "K": args.k, "N": args.trials, "T": args.iters,
                 "test_rows": args.test_rows, "seed": args.seed, "lambdas": args.lam,
                 "partition_grid": args.sizes}
    if args.sizes is not None and args.k is None:
        overrides["K"] = len(args.sizes[0])
    for flag, key, lo in (("--n", "n", 1), ("--p", "p", 1), ("--k", "K", 1), ("--trials", "N", 1),
                          ("--iters", "T", 1), ("--test-rows", "test_rows", 1)):
        if overrides[key] is not None:
            _require(parser, overrides[key] >= lo, flag, f">= {lo}")
    _require(parser, args.jobs >= 1, "--jobs", ">= 1")
    try:
        if args.config:
            config = harness.load_config(args.config, **overrides)
        else:
            config = harness.SweepConfig(**{k: v for k, v in overrides.items() if v is not None})
    except (ValueError, TypeError) as exc:
        parser.error(f"invalid sweep configuration: {exc}")
    if converged:
        rows = harness.run_convergence_sweep(config, jobs=args.jobs)
    else:
        rows = harness.run_first_iteration_experiment(config, jobs=args.jobs)
    _print_rows(rows)
    if converged:
        base = harness.run_centralized_baseline(config)
        print(f"centralized LS: train {_e(base.train_error)}  gen {_e(base.gen_error)}  "
              f"(1-n/p)||x||^2 = {_e(base.reference)}")
    if args.out:
        if args.format == "csv":
            harness.rows_to_csv(rows, args.out, timing=not args.no_timing)
        else:
            docs = [_row_dict(r) for r in rows]
            if args.no_timing:
                for d in docs:
                    d["wall_time_ms"] = None
            _write_json(args.out, docs)
    return EXIT_OK


def cmd_validate(args, parser):
    if args.from_file:
        with open(args.from_file) as fh:
            rep = harness.ValidationReport.from_dict(json.load(fh))
    else:
        n = _d(args.n, 50)
        seed = args.seed if args.seed is not None else 0
        if args.trials is not None:
            _require(parser, args.trials >= 1, "--trials", ">= 1")
        if args.check == "lemma1":
            p = _d(args.p, 150)
            spec = _spec(parser, n, p, args.k, args.sizes)
            _require(parser, args.iters >= 1, "--iters", ">= 1")
            rep = harness.validate_closed_form(n, p, spec, T=args.iters, trials=_d(args.trials, 10), seed=seed)
        elif args.check == "lemma2":
            p = _d(args.p, 150)
            spec = _spec(parser, n, p, args.k, args.sizes)
            _require(parser, args.warmup >= 1, "--warmup", ">= 1")
            rep = harness.validate_error_recursion(n, spec, warmup=args.warmup, trials=_d(args.trials, 500), seed=seed)
        elif args.check == "lemma3":
            p_c = _d(args.p, 75)
            _require(parser, (_d(args.trials, 2000)) >= 100, "--trials", ">= 100")
            rep = harness.validate_projection_expectation(n, p_c, trials=_d(args.trials, 2000), seed=seed)
        else:
            p_k = _d(args.p, 75)
            if theory.is_critical(p_k, n) and not args.demo:
                parser.error(f"--p {p_k} is in the critical band for n={n}; pass --demo")
            rep = harness.validate_wishart_moment(n, p_k, trials=_d(args.trials, 2000), seed=seed,
                                                  demo=args.demo)
        if args.out:
            _write_json(args.out, rep.to_dict())
    a = rep.analytic if isinstance(rep.analytic, str) else _e(rep.analytic)
    verdict = {True: "PASS", False: "FAIL", None: "reported"}[rep.passed]
    print(f"{args.check}: analytic {a}  empirical {_e(rep.empirical_mean)}  "
          f"SE {_e(rep.std_error)}  trials {rep.trials}  -> {verdict}")
    for key, val in rep.details.items():
        print(f"  {key}: {val}")
    return EXIT_INVALID if rep.passed is False else EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args, parser)
        if args.command == "predict":
            return cmd_predict(args, parser)
        if args.command == "advise":
            return cmd_advise(args, parser)
        if args.command == "sweep-first-iter":
            return cmd_sweep(args, parser, converged=False)
        if args.command == "sweep-converged":
            return cmd_sweep(args, parser, converged=True)
        return cmd_validate(args, parser)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
