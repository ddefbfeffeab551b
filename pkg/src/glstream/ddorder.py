"""Approximate degree-dominating vertex orders in the multi-pass edge model.

Three orderers share one output type, :class:`VertexOrder`:

* ``approx_dd_warmup``: one sampled digraph per pass.
* ``approx_dd_es``: ``q`` sampled digraphs per pass, consumed in sequence.
* ``baseline_dd``: exact-degree threshold peeling, two passes per round.

``evaluate_order`` measures how close an order is to exact peeling, using an
external sort of the edge list keyed by ranks.
"""

import heapq
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import keyed
from .edgestream import MemoryMeter
from .errors import BudgetError


@dataclass
class DDConfig:
    epsilon: float = 0.1
    delta: float = 0.1
    c: float = 0.1
    seed: int = 0
    exact_init: bool = False
    budget_words: int = None
    # multiplies the sampling probability before clamping; 1.0 is the textbook value
    p_scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not self.p_scale > 0:
            raise ValueError(f"p_scale must be positive, got {self.p_scale}")

    @property
    def eps_hat(self):
        return self.epsilon / (4 + 3 * self.epsilon)

    @property
    def K(self):
        return 1 + self.epsilon

    @property
    def alpha_sel(self):
        return 3 * self.epsilon / 4

    @property
    def shrink(self):
        return 1 + self.epsilon / 2

    def t_iter(self, n):
        return math.log(n) / math.log(self.shrink) if n > 1 else 0.0

    def q(self, n):
        if n <= 1:
            return 1
        return max(1, math.floor(self.c * math.log(n) / math.log(self.shrink)))

    def sample_prob(self, n, big_delta):
        t = self.t_iter(n)
        p = 3 * self.K / (self.eps_hat ** 2 * big_delta) * math.log(2 * n * t / self.delta)
        return min(self.p_scale * p, 1.0)

    def pass_bound(self, n):
        """Upper bound on passes taken by approx_dd_es (sampling passes plus the optional init pass)."""
        return math.ceil(self.t_iter(n) / self.q(n)) + 2


class VertexOrder:
    """A total order on ``0..n-1``: ``inverse[i]`` is the vertex at position i, ``rank[v]`` its position."""

    def __init__(self, inverse):
        inv = np.asarray(inverse, dtype=np.int64)
        n = len(inv)
        rank = np.full(n, -1, dtype=np.int64)
        if n:
            if inv.min() < 0 or inv.max() >= n:
                raise ValueError("order mentions a vertex outside 0..n-1")
            rank[inv] = np.arange(n)
            if (rank < 0).any():
                raise ValueError("order is not a permutation")
        self.inverse = inv
        self.rank = rank

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n))

    @property
    def n(self):
        return len(self.inverse)

    def __len__(self):
        return len(self.inverse)

    def __eq__(self, other):
        return isinstance(other, VertexOrder) and np.array_equal(self.inverse, other.inverse)

    def __repr__(self):
        head = " < ".join(map(str, self.inverse[:8].tolist()))
        return f"VertexOrder(n={self.n}: {head}{' ...' if self.n > 8 else ''})"

    def save(self, path):
        with open(path, "w") as f:
            f.writelines(f"{v}\n" for v in self.inverse.tolist())

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls([int(line) for line in f if line.strip()])


@dataclass
class SampledDigraph:
    """Out-adjacency in CSR form: arcs of vertex v are ``dst[indptr[v]:indptr[v+1]]``."""

    indptr: np.ndarray
    dst: np.ndarray
    p: float
    delta_est: float

    @property
    def edge_count(self):
        return len(self.dst)

    @property
    def n(self):
        return len(self.indptr) - 1

    def out_neighbors(self, v):
        return self.dst[self.indptr[v]:self.indptr[v + 1]]

    def words(self):
        return len(self.dst) + len(self.indptr)

    @classmethod
    def from_arcs(cls, n, src, dst, p, delta_est):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        perm = np.lexsort((dst, src))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        return cls(indptr, dst[perm], p, delta_est)


@dataclass
class DDStats:
    passes: int = 0
    iterations: int = 0
    peak_words: int = 0
    arcs_per_pass: list = field(default_factory=list)
    arc_bound_per_pass: list = field(default_factory=list)
    probabilities: list = field(default_factory=list)


@dataclass
class DDQualityReport:
    d_up: np.ndarray
    delta_suffix: np.ndarray
    eps: np.ndarray  # NaN where d_up == 0
    max_eps: float
    histogram: list

    HIST_EDGES = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, math.inf)

    def write_csv(self, path):
        with open(path, "w") as f:
            f.write("vertex,d_up,delta_suffix,eps_v\n")
            for v in np.flatnonzero(self.d_up > 0).tolist():
                f.write(f"{v},{int(self.d_up[v])},{int(self.delta_suffix[v])},{float(self.eps[v])!r}\n")

    def summary(self):
        return {"max_eps": self.max_eps, "histogram": self.histogram}


def _iteration_key(seed, iteration):
    return keyed.make_key(seed, keyed.DIGRAPH, iteration)


def _arc_draws(key, ordinals, p):
    """Keep-masks for the forward (u->v) and backward (v->u) arc of each edge."""
    fwd = keyed.uniforms(key, ordinals, 0) < p
    bwd = keyed.uniforms(key, ordinals, 1) < p
    return fwd, bwd


def sample_digraph(source, alive, p, iteration, seed, meter=None, budget_words=None, delta_est=None):
    """One pass: a single sampled digraph on the alive vertices (see ``sample_block``)."""
    return sample_block(source, alive, [p], [iteration], seed, meter, budget_words,
                        [delta_est])[0]


def sample_block(source, alive, ps, iterations, seed, meter=None, budget_words=None, deltas=None):
    """Build one sampled digraph per entry of ``ps`` in a single pass over G[alive].

    Arc (u->w) of graph j is kept iff the keyed uniform for
    (seed, iterations[j], edge ordinal, direction) falls below ``ps[j]``.
    """
    for p in ps:
        if not 0 < p <= 1:
            raise ValueError(f"sampling probability must lie in (0, 1], got {p}")
    meter = meter or MemoryMeter()
    deltas = deltas or [None] * len(ps)
    keys = [_iteration_key(seed, t) for t in iterations]
    parts = [([], []) for _ in ps]
    full = ([], [])
    any_full = any(p >= 1 for p in ps)
    held = 0
    try:
        for ch in source.chunks():
            live = alive[ch.u] & alive[ch.v]
            if not live.any():
                continue
            eu, ev, ords = ch.u[live], ch.v[live], ch.ordinals[live]
            added = 0
            if any_full:
                full[0].append(np.concatenate([eu, ev]))
                full[1].append(np.concatenate([ev, eu]))
            for j, p in enumerate(ps):
                if p >= 1:
                    added += 2 * len(eu)
                    continue
                fwd, bwd = _arc_draws(keys[j], ords, p)
                parts[j][0].append(np.concatenate([eu[fwd], ev[bwd]]))
                parts[j][1].append(np.concatenate([ev[fwd], eu[bwd]]))
                added += int(fwd.sum() + bwd.sum())
            meter.alloc(added)
            held += added
            if budget_words is not None and meter.current_words > budget_words:
                raise BudgetError(iterations[0], meter.current_words, budget_words)
    finally:
        meter.free(held)

    n = len(alive)
    graphs = []
    shared = None
    for j, p in enumerate(ps):
        if p >= 1:
            if shared is None:
                src = np.concatenate(full[0]) if full[0] else np.empty(0, np.int64)
                dst = np.concatenate(full[1]) if full[1] else np.empty(0, np.int64)
                shared = SampledDigraph.from_arcs(n, src, dst, 1.0, deltas[j])
            g = SampledDigraph(shared.indptr, shared.dst, 1.0, deltas[j])
        else:
            src = np.concatenate(parts[j][0]) if parts[j][0] else np.empty(0, np.int64)
            dst = np.concatenate(parts[j][1]) if parts[j][1] else np.empty(0, np.int64)
            g = SampledDigraph.from_arcs(n, src, dst, p, deltas[j])
        graphs.append(g)
    # every graph is charged in full, shared storage or not
    meter.alloc(sum(g.words() for g in graphs))
    if budget_words is not None and meter.current_words > budget_words:
        needed = meter.current_words
        meter.free(sum(g.words() for g in graphs))
        raise BudgetError(iterations[0], needed, budget_words)
    return graphs


def select_large(alive, graph, big_delta, alpha, order_out):
    """Scan alive vertices by ascending id and peel those whose estimated degree clears the threshold.

    ``alive`` is updated in place; removed vertices are appended to ``order_out``.
    Returns the number removed.
    """
    if big_delta <= 0:
        raise ValueError("threshold scale must be positive")
    threshold = big_delta / (1 + alpha)
    inv_p = 1.0 / graph.p
    indptr, dst = graph.indptr, graph.dst
    if len(dst) == 0:
        return 0
    # counts only shrink during the scan, so this is a superset of the vertices that will pass
    src = np.repeat(np.arange(graph.n), np.diff(indptr))
    live_arcs = np.bincount(src[alive[dst]], minlength=graph.n)
    cand = np.flatnonzero(alive & (live_arcs * inv_p >= threshold))
    removed = 0
    for v in cand.tolist():
        cnt = int(alive[dst[indptr[v]:indptr[v + 1]]].sum())
        if cnt * inv_p >= threshold:
            alive[v] = False
            order_out.append(v)
            removed += 1
    return removed


def _flush(alive, order_out):
    rest = np.flatnonzero(alive)
    order_out.extend(rest.tolist())
    alive[:] = False


def _max_degree(source, alive):
    deg = np.zeros(source.n, dtype=np.int64)
    for ch in source.chunks():
        live = alive[ch.u] & alive[ch.v]
        deg += np.bincount(ch.u[live], minlength=source.n)
        deg += np.bincount(ch.v[live], minlength=source.n)
    return deg


def _approx_dd(source, cfg, block, meter, stats):
    n = source.n
    alive = np.ones(n, dtype=bool)
    order = []
    if n <= 1:
        _flush(alive, order)
        return VertexOrder(order)
    meter.alloc(n)  # alive flags
    start_passes = source.passes
    big_delta = float(n - 1)
    if cfg.exact_init:
        big_delta = float(_max_degree(source, alive).max())
    iteration = 0
    while alive.any():
        if big_delta < 1:
            break
        deltas, ps, iters = [], [], []
        d = big_delta
        for j in range(block):
            if d < 1:
                break
            deltas.append(d)
            ps.append(cfg.sample_prob(n, d))
            iters.append(iteration + j)
            d /= cfg.shrink
        graphs = sample_block(source, alive, ps, iters, cfg.seed, meter, cfg.budget_words, deltas)
        words = sum(g.words() for g in graphs)
        stats.arcs_per_pass.append(sum(g.edge_count for g in graphs))
        stats.arc_bound_per_pass.append((1 + cfg.eps_hat) * sum(n * deltas[0] * p for p in ps))
        stats.probabilities.extend(ps)
        if graphs[0].p >= 1 and graphs[0].edge_count == 0:
            # G[U] has no edges left: nothing will ever clear a positive threshold
            meter.free(words)
            break
        for g, dj in zip(graphs, deltas):
            select_large(alive, g, dj, cfg.alpha_sel, order)
            iteration += 1
        meter.free(words)
        big_delta = d
    _flush(alive, order)
    meter.free(n)
    stats.iterations = iteration
    stats.passes = source.passes - start_passes
    return VertexOrder(order)


def approx_dd_warmup(source, cfg, meter=None, stats=None):
    """One sampled digraph per pass; returns a VertexOrder (``stats`` is filled if given)."""
    meter = meter or MemoryMeter()
    stats = stats if stats is not None else DDStats()
    order = _approx_dd(source, cfg, 1, meter, stats)
    stats.peak_words = meter.peak_words
    return order


def approx_dd_es(source, cfg, meter=None, stats=None, q=None):
    """``q`` sampled digraphs per pass (default from ``cfg.c``)."""
    meter = meter or MemoryMeter()
    stats = stats if stats is not None else DDStats()
    q = cfg.q(source.n) if q is None else max(1, int(q))
    order = _approx_dd(source, cfg, q, meter, stats)
    stats.peak_words = meter.peak_words
    return order


def prefix_heuristic(source, alive, deg, budget_words, order_out, meter=None):
    """Exact peeling inside the largest high-degree prefix whose induced graph fits in memory.

    The prefix is the alive vertices sorted by (degree desc, id asc), cut where
    sum(1 + deg) would exceed ``budget_words``.  One pass loads G[prefix];
    peeling then proceeds exactly (max current degree, smallest id on ties)
    while the best remaining prefix vertex still dominates every vertex
    outside the prefix.  Returns the number of vertices removed (0 = no-op).
    """
    meter = meter or MemoryMeter()
    cand = np.flatnonzero(alive)
    if len(cand) == 0 or budget_words is None or budget_words <= 0:
        return 0
    cand = cand[np.lexsort((cand, -deg[cand]))]
    cost = np.cumsum(1 + deg[cand])
    size = int(np.searchsorted(cost, budget_words, side="right"))
    if size == 0:
        return 0
    prefix = cand[:size]
    outside_max = int(deg[cand[size]]) if size < len(cand) else -1
    in_prefix = np.zeros(len(alive), dtype=bool)
    in_prefix[prefix] = True
    adj = {int(v): [] for v in prefix}
    with meter.hold(int(cost[size - 1])):
        for ch in source.chunks():
            both = in_prefix[ch.u] & in_prefix[ch.v]
            for a, b in zip(ch.u[both].tolist(), ch.v[both].tolist()):
                adj[a].append(b)
                adj[b].append(a)
        cur = {v: int(deg[v]) for v in adj}
        heap = [(-d, v) for v, d in cur.items()]
        heapq.heapify(heap)
        removed = 0
        while heap:
            negd, v = heapq.heappop(heap)
            if not alive[v] or -negd != cur[v]:
                continue
            if cur[v] < outside_max:
                break
            alive[v] = False
            order_out.append(v)
            removed += 1
            for w in adj[v]:
                if alive[w]:
                    cur[w] -= 1
                    heapq.heappush(heap, (-cur[w], w))
    return removed


def baseline_dd(source, epsilon, meter=None, stats=None, heuristic_words=None):
    """Deterministic threshold peeling with exact degrees.

    Each round takes one pass for the degrees of G[U], picks
    S = {v : d(v) >= maxdeg / (1 + epsilon)} and, when |S| > 1, a second pass
    loads G[S] so that S can be peeled in ascending id while re-checking each
    vertex against the degrees left after its S-neighbours were removed.
    """
    if not 0 < epsilon:
        raise ValueError("epsilon must be positive")
    meter = meter or MemoryMeter()
    stats = stats if stats is not None else DDStats()
    n = source.n
    start = source.passes
    alive = np.ones(n, dtype=bool)
    order = []
    meter.alloc(2 * n)
    rounds = 0
    while alive.any():
        deg = _max_degree(source, alive)
        top = int(deg.max())
        if top == 0:
            break
        rounds += 1
        if heuristic_words and prefix_heuristic(source, alive, deg, heuristic_words, order, meter):
            continue
        threshold = top / (1 + epsilon)
        chosen = np.flatnonzero(alive & (deg >= threshold))
        if len(chosen) == 1:
            v = int(chosen[0])
            alive[v] = False
            order.append(v)
            continue
        in_s = np.zeros(n, dtype=bool)
        in_s[chosen] = True
        src, dst = [], []
        for ch in source.chunks():
            both = in_s[ch.u] & in_s[ch.v]
            src.append(np.concatenate([ch.u[both], ch.v[both]]))
            dst.append(np.concatenate([ch.v[both], ch.u[both]]))
        g = SampledDigraph.from_arcs(n, np.concatenate(src) if src else [],
                                     np.concatenate(dst) if dst else [], 1.0, top)
        with meter.hold(g.words()):
            gone = np.zeros(n, dtype=np.int64)
            for v in chosen.tolist():
                if deg[v] - gone[v] >= threshold:
                    alive[v] = False
                    order.append(v)
                    np.add.at(gone, g.out_neighbors(v), 1)
    _flush(alive, order)
    meter.free(2 * n)
    stats.iterations = rounds
    stats.passes = source.passes - start
    stats.peak_words = meter.peak_words
    return VertexOrder(order)


# -- evaluation -----------------------------------------------------------

def _sorted_runs(source, rank, workdir, run_edges):
    n = source.n
    runs = []
    buf = []
    size = 0

    def spill():
        nonlocal buf, size
        keys = np.sort(np.concatenate(buf))
        path = os.path.join(workdir, f"run{len(runs):05d}.u64")
        keys.tofile(path)
        runs.append((path, len(keys)))
        buf, size = [], 0

    for ch in source.chunks():
        ru, rv = rank[ch.u], rank[ch.v]
        lo = np.minimum(ru, rv).astype(np.uint64)
        hi = np.maximum(ru, rv).astype(np.uint64)
        top = np.uint64(n - 1)
        buf.append((top - lo) * np.uint64(n) + (top - hi))
        size += len(lo)
        if size >= run_edges:
            spill()
    if size:
        spill()
    return runs


def _merged_blocks(runs, block):
    """Yield sorted uint64 key blocks from the spilled runs."""
    if len(runs) == 1:
        keys = np.memmap(runs[0][0], dtype=np.uint64, mode="r") if runs[0][1] else []
        for i in range(0, runs[0][1], block):
            yield np.array(keys[i:i + block])
        return

    def stream(path, count):
        mm = np.memmap(path, dtype=np.uint64, mode="r")
        for i in range(0, count, block):
            yield from np.array(mm[i:i + block]).tolist()

    out = []
    for key in heapq.merge(*(stream(p, c) for p, c in runs if c)):
        out.append(key)
        if len(out) == block:
            yield np.array(out, dtype=np.uint64)
            out = []
    if out:
        yield np.array(out, dtype=np.uint64)


def evaluate_order(source, order, scratch_dir=None, run_edges=1 << 22, meter=None):
    """Per-vertex order quality: up-degree, max degree of the suffix graph, and eps_v.

    Edges are keyed by (descending lower rank, descending higher rank), sorted
    externally in ``scratch_dir`` and swept from the last vertex backwards.
    """
    n = source.n
    if order.n != n:
        raise ValueError(f"order covers {order.n} vertices, graph has {n}")
    meter = meter or MemoryMeter()
    scratch_dir = scratch_dir or os.environ.get("GLSTRM_SCRATCH") or None
    workdir = tempfile.mkdtemp(prefix="glstrm-eval-", dir=scratch_dir)
    deg = np.zeros(n, dtype=np.int64)  # by rank
    d_up = np.zeros(n, dtype=np.int64)
    delta_suffix = np.zeros(n, dtype=np.int64)
    meter.alloc(3 * n)
    try:
        runs = _sorted_runs(source, order.rank, workdir, run_edges)
        running = 0
        carry_lo = np.empty(0, dtype=np.int64)
        carry_hi = np.empty(0, dtype=np.int64)
        top = n - 1

        def settle(lo, hi, running):
            # lo is non-increasing, groups of equal lo are complete
            starts = np.flatnonzero(np.r_[True, lo[1:] != lo[:-1]])
            counts = np.diff(np.r_[starts, len(lo)])
            los = lo[starts]
            # a vertex's own group always precedes its appearances as the higher endpoint
            deg[los] += counts
            # degree of hi right after each increment: prior value + occurrence count so far
            perm = np.argsort(hi, kind="stable")
            sh = hi[perm]
            first = np.r_[True, sh[1:] != sh[:-1]]
            grp = np.cumsum(first) - 1
            occ = np.arange(len(sh)) - np.flatnonzero(first)[grp] + 1
            after = np.empty(len(hi), dtype=np.int64)
            after[perm] = deg[sh] + occ
            np.add.at(deg, hi, 1)
            gmax = np.maximum(np.maximum.reduceat(after, starts), counts)
            cum = np.maximum.accumulate(np.r_[running, gmax])[1:]
            d_up[los] = counts
            delta_suffix[los] = cum
            return int(cum[-1])

        for keys in _merged_blocks(runs, 1 << 20):
            keys = keys.astype(np.uint64)
            lo = top - (keys // np.uint64(n)).astype(np.int64)
            hi = top - (keys % np.uint64(n)).astype(np.int64)
            lo = np.r_[carry_lo, lo]
            hi = np.r_[carry_hi, hi]
            cut = int(np.searchsorted(-lo, -lo[-1], side="left"))
            if cut > 0:
                running = settle(lo[:cut], hi[:cut], running)
            carry_lo, carry_hi = lo[cut:], hi[cut:]
        if len(carry_lo):
            running = settle(carry_lo, carry_hi, running)
    finally:
        shutil.rmtree(workdir, ignore_errors=True)
        meter.free(3 * n)

    # vertices without up-edges still see the suffix max from later groups
    d_up_v = d_up[order.rank] if n else d_up
    delta_v = np.maximum.accumulate(delta_suffix[::-1])[::-1][order.rank] if n else delta_suffix
    eps = np.full(n, np.nan)
    pos = d_up_v > 0
    eps[pos] = (delta_v[pos] - d_up_v[pos]) / d_up_v[pos]
    max_eps = float(eps[pos].max()) if pos.any() else 0.0
    hist_counts, _ = np.histogram(eps[pos], bins=np.array(DDQualityReport.HIST_EDGES))
    edges = DDQualityReport.HIST_EDGES
    histogram = [{"lo": edges[i], "hi": edges[i + 1] if math.isfinite(edges[i + 1]) else None,
                  "count": int(hist_counts[i])} for i in range(len(hist_counts))]
    return DDQualityReport(d_up_v, delta_v, eps, max_eps, histogram)
