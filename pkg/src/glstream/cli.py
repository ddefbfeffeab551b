"""Command-line entry point: ``glstream {ingest,gen,ddorder,estimate,oracle}``."""

import argparse
import json
import math
import os
import sys

from . import oracle
from .ddorder import DDConfig, VertexOrder, evaluate_order
from .edgestream import HEADER, MAGIC, GraphSource, MemoryMeter, generate_er, ingest
from .errors import (BudgetError, CapacityError, ClassificationError, GuardError, InconsistencyError,
                     NoGraphletError, ParseError, ScanError)
from .estimator import registry, required_samples
from .initdist import InitialDistribution
from .pipeline import (DEFAULT_BATCH, ESTIMATORS, ORDERERS, compute_order, estimate_distribution,
                       read_estimate_csv, write_estimate_csv)

EXIT_OK, EXIT_VALIDATION, EXIT_BUDGET, EXIT_INCONSISTENT, EXIT_GUARD, EXIT_IO = 0, 2, 3, 4, 5, 1


class ValidationError(Exception):
    pass


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _outdir(args, default):
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


def _resolve_seed(args):
    if args.seed is None:
        args.seed = int.from_bytes(os.urandom(8), "little") >> 1
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _input_path(args):
    path = args.input or getattr(args, "path", None)
    if not path:
        raise ValidationError("an input graph is required (--input)")
    return path


def load_graph(path, fmt=None):
    """Cleaned binary files open directly; anything else is ingested in memory."""
    with open(path, "rb") as f:
        head = f.read(HEADER.size)
    if head[:8] == MAGIC and fmt in (None, "cleaned"):
        return GraphSource.open(path)
    return ingest(path, fmt or "text")


def _check_unit(name, x):
    if not 0 < x < 1:
        raise ValidationError(f"--{name} must lie in (0, 1), got {x}")


def _dd_config(args):
    _check_unit("epsilon", args.epsilon)
    _check_unit("delta", args.delta)
    if not args.c > 0:
        raise ValidationError(f"--c must be positive, got {args.c}")
    if args.budget_words is not None and args.budget_words < 1:
        raise ValidationError("--budget-words must be positive")
    if args.workers < 1:
        raise ValidationError("--workers must be at least 1")
    return DDConfig(args.epsilon, args.delta, args.c, args.seed,
                    exact_init=args.exact_init, budget_words=args.budget_words)


# -- commands -----------------------------------------------------------------

def cmd_ingest(args):
    path = _input_path(args)
    out = args.out or path + ".glstrm"
    src = ingest(path, args.format or "text", out_path=out)
    _emit({"n": src.n, "m": src.m, "out": out})


def cmd_gen(args):
    if args.model != "er":
        raise ValidationError(f"unknown generator {args.model!r}")
    if args.n < 0 or args.m < 0:
        raise ValidationError("--n and --m must be non-negative")
    if args.m > args.n * (args.n - 1) // 2:
        raise ValidationError(f"--m {args.m} exceeds the number of vertex pairs")
    _resolve_seed(args)
    out = args.out or f"er_{args.n}_{args.m}_{args.seed}.glstrm"
    src = generate_er(args.n, args.m, args.seed, path=out)
    _emit({"n": src.n, "m": src.m, "out": out, "seed": args.seed})


def cmd_ddorder(args):
    _resolve_seed(args)
    cfg = _dd_config(args)
    source = load_graph(_input_path(args), args.format)
    out = _outdir(args, "ddorder_out")
    meter = MemoryMeter()
    start = source.passes
    order, stats = compute_order(source, args.orderer, cfg, meter, heuristic_words=args.heuristic_words)
    passes = source.passes - start
    order.save(os.path.join(out, "order.txt"))
    summary = {"orderer": args.orderer, "n": source.n, "m": source.m, "passes": passes,
               "peak_words": meter.peak_words, "seed": args.seed, "epsilon": cfg.epsilon,
               "delta": cfg.delta, "c": cfg.c, "workers": args.workers}
    if args.orderer in ("es", "warmup"):
        summary.update(q=cfg.q(source.n) if args.orderer == "es" else 1,
                       t_iter=cfg.t_iter(source.n), pass_bound=cfg.pass_bound(source.n))
    if args.orderer == "baseline":
        summary["rounds"] = stats.iterations
    if not args.no_eval:
        report = evaluate_order(source, order, scratch_dir=args.scratch)
        report.write_csv(os.path.join(out, "quality.csv"))
        _write_json(os.path.join(out, "quality.json"), report.summary())
        summary["max_eps"] = report.max_eps
    _write_json(os.path.join(out, "summary.json"), summary)
    _emit(summary)


def cmd_estimate(args):
    _resolve_seed(args)
    cfg = _dd_config(args)
    _check_unit("alpha", args.alpha)
    k = args.k
    if not 3 <= k <= 8:
        raise ValidationError(f"--k must lie in [3, 8], got {k}")
    reg = registry(k)
    if args.samples is not None and args.samples < 1:
        raise ValidationError("--samples must be positive")
    if args.batches is not None and args.batches < 1:
        raise ValidationError("--batches must be positive")
    batch_size = args.batch_size or DEFAULT_BATCH
    if args.samples is not None:
        total = args.samples
        if args.batches is not None:
            batch_size = math.ceil(total / args.batches)
    elif args.batches is not None:
        total = args.batches * batch_size
    else:
        total = required_samples(k, cfg.epsilon, args.alpha, cfg.delta, reg.m_k)
    source = load_graph(_input_path(args), args.format)
    out = _outdir(args, "estimate_out")
    truth = read_estimate_csv(args.truth) if args.truth else None

    order = VertexOrder.load(args.order) if args.order else None
    init = InitialDistribution.load(args.init) if args.init else None
    if order is not None and order.n != source.n:
        raise ValidationError("order file does not match the graph")

    trace_f = open(os.path.join(out, "trace.csv"), "w") if args.trace else None
    if trace_f:
        trace_f.write("batch,samples,passes_sampling,C_hat" + (",linf" if truth is not None else "") + "\n")

    def on_batch(row):
        if trace_f:
            trace_f.write(",".join(repr(row[key]) if isinstance(row[key], float) else str(row[key])
                                   for key in row) + "\n")

    try:
        with open(os.path.join(out, "samples.bin"), "wb") as log:
            run = estimate_distribution(source, k, cfg, total, batch_size, args.estimator, args.orderer,
                                        order, init, args.budget_words, truth, log, on_batch=on_batch)
    finally:
        if trace_f:
            trace_f.close()
    run.order.save(os.path.join(out, "order.txt"))
    run.init.save(os.path.join(out, "init.bin"))
    est = run.estimate
    write_estimate_csv(os.path.join(out, "estimate.csv"), reg, est.counts, est.mu)
    summary = {"k": k, "m_k": reg.m_k, "T": est.samples, "C_hat": est.C_hat,
               "passes_preprocess": run.passes_preprocess, "passes_sampling": run.passes_sampling,
               "peak_words": run.peak_words, "exact": False, "seed": args.seed,
               "estimator": args.estimator, "orderer": args.orderer if order is None else "file",
               "batches": run.batches, "batch_size": batch_size, "workers": args.workers,
               "L_hat": est.L_hat, "Z": str(run.init.Z)}
    if args.estimator == "rejection":
        summary.update(trials=est.trials, accepted=est.accepted)
    if truth is not None:
        summary["linf"] = run.trace[-1]["linf"]
    _write_json(os.path.join(out, "summary.json"), summary)
    _emit(summary)


def cmd_oracle(args):
    k = args.k
    source = load_graph(_input_path(args), args.format)
    if source.n > oracle.DIST_MAX_N:
        raise GuardError(f"exact distribution refuses n={source.n} > {oracle.DIST_MAX_N}")
    graph = oracle.InMemoryGraph.from_source(source)
    ex = oracle.exact_distribution(graph, k)
    reg = registry(k)
    out = _outdir(args, "oracle_out")
    write_estimate_csv(os.path.join(out, "exact.csv"), reg, ex.counts, ex.mu)
    summary = {"k": k, "m_k": reg.m_k, "L": ex.L, "n": source.n, "m": source.m, "exact": True}
    if args.dump_order or args.dump_positivity:
        order = oracle.exact_dd_order(graph)
        order.save(os.path.join(out, "exact_order.txt"))
        if args.dump_positivity:
            pos, nv = oracle.exact_positivity_and_Nv(graph, order, k)
            with open(os.path.join(out, "positivity.csv"), "w") as f:
                f.write("vertex,positive,N_v\n")
                for v in range(graph.n):
                    f.write(f"{v},{int(pos[v])},{int(nv[v])}\n")
    _write_json(os.path.join(out, "summary.json"), summary)
    _emit(summary)


# -- parser ---------------------------------------------------------------------

def _common(p, dd=False):
    p.add_argument("path", nargs="?", help="input file (same as --input)")
    p.add_argument("--input")
    p.add_argument("--format", choices=["text", "binary", "cleaned"])
    p.add_argument("--out")
    if dd:
        p.add_argument("--epsilon", type=float, default=0.1)
        p.add_argument("--delta", type=float, default=0.02)
        p.add_argument("--c", type=float, default=0.1)
        p.add_argument("--seed", type=int)
        p.add_argument("--orderer", choices=ORDERERS, default="es")
        p.add_argument("--budget-words", type=int)
        p.add_argument("--exact-init", action="store_true", help="spend one pass on the true max degree")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--scratch", default=os.environ.get("GLSTRM_SCRATCH"))


def build_parser():
    ap = argparse.ArgumentParser(prog="glstream", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="clean a raw edge list")
    _common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gen", help="generate a synthetic graph")
    p.add_argument("model", choices=["er"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("ddorder", help="compute and evaluate a degree-dominating order")
    _common(p, dd=True)
    p.add_argument("--heuristic-words", type=int, help="enable the prefix heuristic (baseline only)")
    p.add_argument("--no-eval", action="store_true")
    p.set_defaults(func=cmd_ddorder)

    p = sub.add_parser("estimate", help="estimate the k-graphlet distribution")
    _common(p, dd=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--samples", type=int)
    p.add_argument("--batches", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--estimator", choices=ESTIMATORS, default="counter")
    p.add_argument("--order", help="reuse an order file instead of recomputing")
    p.add_argument("--init", help="reuse an initial-distribution table")
    p.add_argument("--truth", help="reference CSV for the per-batch L-infinity trace")
    p.add_argument("--trace", action="store_true", help="write trace.csv with one row per batch")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("oracle", help="exact distribution by enumeration")
    _common(p)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--dump-order", action="store_true")
    p.add_argument("--dump-positivity", action="store_true")
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except BudgetError as exc:
        print(f"error: {exc}; try --budget-words {2 * exc.needed_words}", file=sys.stderr)
        return EXIT_BUDGET
    except (InconsistencyError, ClassificationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCONSISTENT
    except GuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ValidationError, ValueError, ParseError, CapacityError, NoGraphletError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ScanError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
