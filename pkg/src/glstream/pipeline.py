"""Two-phase driver: order + root distribution, then batched sampling."""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .ddorder import DDStats, approx_dd_es, approx_dd_warmup, baseline_dd
from .edgestream import MemoryMeter
from .errors import NoGraphletError
from .estimator import counter_estimate, gamma, linf_distance, registry, rejection_coins, rejection_estimate
from .initdist import init_distribution
from .sampler import BatchConfig, grow_batch, write_sample_log

ORDERERS = ("es", "warmup", "baseline", "exact")
ESTIMATORS = ("counter", "rejection")
DEFAULT_BATCH = 8192


def compute_order(source, orderer, cfg, meter=None, heuristic_words=None):
    """Returns (order, DDStats)."""
    meter = meter or MemoryMeter()
    stats = DDStats()
    if orderer == "es":
        order = approx_dd_es(source, cfg, meter, stats)
    elif orderer == "warmup":
        order = approx_dd_warmup(source, cfg, meter, stats)
    elif orderer == "baseline":
        order = baseline_dd(source, cfg.epsilon, meter, stats, heuristic_words=heuristic_words)
    elif orderer == "exact":
        start = source.passes
        graph = oracle.InMemoryGraph.from_source(source)
        with meter.hold(2 * graph.m + 2 * graph.n):
            order = oracle.exact_dd_order(graph)
        stats.passes = source.passes - start
        stats.peak_words = meter.peak_words
    else:
        raise ValueError(f"unknown orderer {orderer!r}")
    return order, stats


def batch_sizes(total, B):
    full, rest = divmod(total, B)
    return [B] * full + ([rest] if rest else [])


@dataclass
class EstimateRun:
    k: int
    estimate: object
    order: object
    init: object
    passes_preprocess: int
    passes_sampling: int
    peak_words: int
    seed: int
    batches: int
    trace: list = field(default_factory=list)


def estimate_distribution(source, k, cfg, samples, batch_size=DEFAULT_BATCH, estimator="counter",
                          orderer="es", order=None, init=None, budget_words=None, truth=None,
                          sample_log=None, meter=None, on_batch=None):
    """Full pipeline on one source.

    ``order`` / ``init`` skip preprocessing when supplied.  ``truth`` is an
    optional reference distribution for the per-batch trace.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    if samples < 1:
        raise ValueError("need at least one sample")
    meter = meter or MemoryMeter()
    reg = registry(k)
    start = source.passes
    if order is None:
        order, _ = compute_order(source, orderer, cfg, meter)
    if init is None:
        init = init_distribution(source, order, k, meter)
    passes_pre = source.passes - start
    if init.Z == 0:
        raise NoGraphletError(k)

    if budget_words is not None:
        batch_size = min(batch_size, BatchConfig.max_instances(k, budget_words))
        if batch_size < 1:
            BatchConfig(1, k, budget_words, cfg.seed)  # raises the budget error
    g = gamma(k, cfg.epsilon, init.Z)
    total = None
    trace = []
    sampling_start = source.passes
    for b, size in enumerate(batch_sizes(samples, batch_size)):
        bc = BatchConfig(size, k, budget_words, cfg.seed)
        batch = grow_batch(source, order, init, bc, batch=b, registry=reg,
                           epsilon=cfg.epsilon, meter=meter)
        if estimator == "counter":
            part = counter_estimate(batch, reg)
        else:
            part = rejection_estimate(batch, reg, g, rejection_coins(cfg.seed, b, len(batch)))
        total = part if total is None else total.merge(part)
        if sample_log is not None:
            write_sample_log(sample_log, batch)
        row = {"batch": b, "samples": total.samples, "passes_sampling": source.passes - sampling_start,
               "C_hat": total.C_hat}
        if truth is not None:
            row["linf"] = linf_distance(total.mu, truth)
        trace.append(row)
        if on_batch is not None:
            on_batch(row)
    return EstimateRun(k, total, order, init, passes_pre, source.passes - sampling_start,
                       meter.peak_words, cfg.seed, len(trace), trace)


def write_estimate_csv(path, reg, counts, probs):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["class_index", "canonical_code_hex", "count", "probability"])
        for i in range(reg.m_k):
            c = counts[i]
            c = int(c) if float(c).is_integer() else repr(float(c))
            w.writerow([i, reg.hex(i), c, repr(float(probs[i]))])


def read_estimate_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    rows.sort(key=lambda r: int(r["class_index"]))
    return np.array([float(r["probability"]) for r in rows])

