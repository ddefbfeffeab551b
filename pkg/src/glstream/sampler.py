"""Batched k-graphlet growth with per-pass reservoir sampling.

All instances of a batch share the same passes: roots are drawn without
touching the graph, each of the k-1 growth passes extends every instance by
one vertex chosen uniformly among its cut edges, and a final pass collects
the induced adjacency and suffix-graph degrees needed to evaluate p(S).
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import keyed
from .edgestream import MemoryMeter
from .errors import BudgetError, InconsistencyError, NoGraphletError, ParseError

LOG_MAGIC = b"GLSAMP1\0"
_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)
MAX_K = 8


def instance_words(k):
    return k * k + (k + 1) * k


@dataclass
class BatchConfig:
    B: int
    k: int
    budget_words: int = None
    seed: int = 0

    def __post_init__(self):
        if not 3 <= self.k <= MAX_K:
            raise ValueError(f"k must lie in [3, {MAX_K}], got {self.k}")
        if self.B < 1:
            raise ValueError("a batch needs at least one instance")
        if self.budget_words is not None and self.B > self.max_instances(self.k, self.budget_words):
            raise BudgetError(0, self.B * instance_words(self.k), self.budget_words)

    @staticmethod
    def max_instances(k, budget_words):
        return budget_words // instance_words(k)


@dataclass
class GraphletSample:
    v: int
    S: tuple
    adjacency_in_Gv: np.ndarray
    degrees_in_Gv: np.ndarray
    pS: float
    class_index: int = -1


@dataclass
class SampleBatch:
    """Column-oriented samples; member 0 of each row is the root."""

    k: int
    roots: np.ndarray
    members: np.ndarray   # (B, k)
    adjacency: np.ndarray  # (B, k, k) bool
    degrees: np.ndarray   # (B, k)
    pS: np.ndarray
    classes: np.ndarray
    cut_counts: np.ndarray  # (B, k-1), qualifying edges seen in each growth pass
    passes: int = 0
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.roots)

    def sample(self, i):
        return GraphletSample(int(self.roots[i]), tuple(self.members[i].tolist()),
                              self.adjacency[i].copy(), self.degrees[i].copy(),
                              float(self.pS[i]), int(self.classes[i]))

    @property
    def samples(self):
        return [self.sample(i) for i in range(len(self))]


# -- subset dynamic program -------------------------------------------------

def _row_bits(adjacency):
    adjacency = np.asarray(adjacency, dtype=bool)
    k = adjacency.shape[-1]
    weights = (1 << np.arange(k)).astype(np.int64)
    return (adjacency.astype(np.int64) * weights).sum(axis=-1)


def conditional_probability(adjacency, degrees):
    """P(S | root) for each row, with the root at slot 0.

    ``adjacency`` is (B, k, k) over the members, ``degrees`` (B, k) their
    degrees in the root's suffix graph.  Forward DP over subsets containing
    the root: a set T moves to T+u with probability a(u, T) / cut(T).
    """
    adjacency = np.asarray(adjacency, dtype=bool)
    if adjacency.ndim == 2:
        adjacency = adjacency[None]
        degrees = np.asarray(degrees)[None]
    B, k, _ = adjacency.shape
    rows = _row_bits(adjacency)  # (B, k)
    deg = np.asarray(degrees, dtype=np.int64)
    full = (1 << k) - 1
    P = np.zeros((B, 1 << k))
    P[:, 1] = 1.0
    for T in range(1, full, 2):
        pt = P[:, T]
        live = pt > 0
        if not live.any():
            continue
        inside = [w for w in range(k) if T >> w & 1]
        a = _POPCOUNT[rows & T]  # (B, k): neighbours of each member inside T
        internal = a[:, inside].sum(axis=1) // 2
        cut = deg[:, inside].sum(axis=1) - 2 * internal
        bad = live & (cut <= 0)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise InconsistencyError(
                f"cut of a reachable subset is {int(cut[i])} (row {i}, subset mask {T:#x})")
        safe = np.where(live, cut, 1)
        for u in range(k):
            if T >> u & 1:
                continue
            P[:, T | 1 << u] += pt * a[:, u] / safe
    return P[:, full]


def probability_of(sample, init):
    """p(S) = p(root) * P(S | root) for one GraphletSample."""
    cond = conditional_probability(sample.adjacency_in_Gv, sample.degrees_in_Gv)[0]
    return init.weight(sample.v) / init.Z * float(cond)


def inverse_probability_bound(k, epsilon, Z):
    return math.factorial(k - 1) * (1 + epsilon) ** (k - 1) * Z


# -- growth -----------------------------------------------------------------

def draw_roots(init, B, seed, batch):
    if init.Z == 0:
        raise NoGraphletError(init.k)
    cum = np.cumsum(init.prob)
    u = keyed.uniforms(keyed.make_key(seed, keyed.ROOTS, batch), np.arange(B))
    roots = np.searchsorted(cum, u * cum[-1], side="right")
    roots = np.minimum(roots, len(cum) - 1)
    # guard against landing on a zero-weight tail vertex through rounding
    stray = ~init.positive[roots]
    if stray.any():
        last = int(np.flatnonzero(init.positive)[-1])
        roots[stray] = last
    return roots


class _MemberIndex:
    """Lookup from a vertex to the (instance, slot) pairs holding it."""

    def __init__(self, members, filled, n):
        B = members.shape[0]
        inst = np.repeat(np.arange(B), filled)
        slot = np.tile(np.arange(filled), B)
        vert = members[:, :filled].ravel()
        perm = np.argsort(vert, kind="stable")
        self.inst = inst[perm]
        self.slot = slot[perm]
        self.vert = vert[perm]
        self.start = np.searchsorted(self.vert, np.arange(n + 1))
        self.members = members[:, :filled]

    def words(self):
        return 3 * len(self.inst) + len(self.start)

    def expand(self, frm):
        """Indices into ``frm`` repeated once per holding instance, plus positions in the index."""
        lo = self.start[frm]
        cnt = self.start[frm + 1] - lo
        total = int(cnt.sum())
        if total == 0:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        edge_idx = np.repeat(np.arange(len(frm)), cnt)
        offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        return edge_idx, np.repeat(lo, cnt) + offs

    def slot_of(self, inst, vert):
        """Slot of ``vert`` in instance ``inst`` or -1."""
        eq = self.members[inst] == vert[:, None]
        return np.where(eq.any(axis=1), eq.argmax(axis=1), -1)


def _directed(ch):
    frm = np.concatenate([ch.u, ch.v])
    to = np.concatenate([ch.v, ch.u])
    ords = np.concatenate([ch.ordinals, ch.ordinals])
    return frm, to, ords


def _growth_pass(source, rank, root_rank, members, filled, key):
    B = members.shape[0]
    idx = _MemberIndex(members, filled, source.n)
    seen = np.zeros(B, dtype=np.int64)
    pick = np.full(B, -1, dtype=np.int64)
    for ch in source.chunks():
        frm, to, ords = _directed(ch)
        e, pos = idx.expand(frm)
        if len(e) == 0:
            continue
        inst = idx.inst[pos]
        other = to[e]
        ok = rank[other] >= root_rank[inst]
        inst, other, o = inst[ok], other[ok], ords[e[ok]]
        ok = idx.slot_of(inst, other) < 0
        inst, other, o = inst[ok], other[ok], o[ok]
        if len(inst) == 0:
            continue
        order = np.lexsort((o, inst))
        inst, other, o = inst[order], other[order], o[order]
        start = np.r_[True, inst[1:] != inst[:-1]]
        run = np.arange(len(inst)) - np.maximum.accumulate(np.where(start, np.arange(len(inst)), 0))
        c = seen[inst] + run + 1
        take = keyed.uniforms(key, inst, o) * c < 1.0
        ti, tv = inst[take], other[take]
        last = np.r_[ti[1:] != ti[:-1], True] if len(ti) else np.empty(0, dtype=bool)
        pick[ti[last]] = tv[last]
        seen += np.bincount(inst, minlength=B)
    return pick, seen, idx.words()


def _collect_pass(source, rank, root_rank, members, k):
    B = members.shape[0]
    idx = _MemberIndex(members, k, source.n)
    deg = np.zeros(B * k, dtype=np.int64)
    adj = np.zeros((B, k, k), dtype=bool)
    for ch in source.chunks():
        frm, to, _ = _directed(ch)
        e, pos = idx.expand(frm)
        if len(e) == 0:
            continue
        inst, slot, other = idx.inst[pos], idx.slot[pos], to[e]
        ok = rank[other] >= root_rank[inst]
        inst, slot, other = inst[ok], slot[ok], other[ok]
        deg += np.bincount(inst * k + slot, minlength=B * k)
        s2 = idx.slot_of(inst, other)
        m = s2 >= 0
        adj[inst[m], slot[m], s2[m]] = True
    return adj, deg.reshape(B, k), idx.words()


def grow_batch(source, order, init, cfg, batch=0, registry=None, epsilon=None, meter=None):
    """Run one batch of ``cfg.B`` growth instances; exactly ``k`` passes over ``source``.

    With ``epsilon`` given, every sample is checked against the lower bound on
    p(S) that a (1/(1+epsilon))-DD order guarantees.
    """
    k = cfg.k
    if init.k != k:
        raise ValueError(f"initial distribution was built for k={init.k}, batch asks for k={k}")
    meter = meter or MemoryMeter()
    B = cfg.B
    rank = order.rank
    start = source.passes
    roots = draw_roots(init, B, cfg.seed, batch)
    root_rank = rank[roots]
    members = np.full((B, k), -1, dtype=np.int64)
    members[:, 0] = roots
    cuts = np.zeros((B, k - 1), dtype=np.int64)

    state = B * instance_words(k)
    meter.alloc(state)
    try:
        for t in range(1, k):
            key = keyed.make_key(cfg.seed, keyed.GROWTH, batch, t)
            pick, seen, idx_words = _growth_pass(source, rank, root_rank, members, t, key)
            meter.alloc(idx_words)
            meter.free(idx_words)
            stuck = np.flatnonzero(seen == 0)
            if len(stuck):
                v = int(roots[stuck[0]])
                raise InconsistencyError(
                    f"instance rooted at vertex {v} found no cut edge in growth pass {t} "
                    f"(set so far {members[stuck[0], :t].tolist()}); order and positivity disagree")
            members[:, t] = pick
            cuts[:, t - 1] = seen
        adj, deg, idx_words = _collect_pass(source, rank, root_rank, members, k)
        meter.alloc(idx_words)
        meter.free(idx_words)
    finally:
        meter.free(state)

    cond = conditional_probability(adj, deg)
    weights = init.d_up[roots].astype(np.float64) ** (k - 1)
    pS = weights / float(init.Z) * cond
    if (pS <= 0).any():
        i = int(np.flatnonzero(pS <= 0)[0])
        raise InconsistencyError(f"sample rooted at {int(roots[i])} has p(S) = {pS[i]}")
    if epsilon is not None:
        bound = inverse_probability_bound(k, epsilon, init.Z) * (1 + 1e-9)
        over = 1.0 / pS > bound
        if over.any():
            i = int(np.flatnonzero(over)[0])
            raise InconsistencyError(
                f"1/p(S) = {1 / pS[i]:.6g} exceeds the DD bound {bound:.6g} for root {int(roots[i])}")
    classes = np.full(B, -1, dtype=np.int64)
    if registry is not None:
        classes = registry.classify_batch(adj)
    return SampleBatch(k, roots, members, adj, deg, pS, classes, cuts, source.passes - start)


# -- sample log -------------------------------------------------------------

def _log_dtype(k):
    return np.dtype([("root", "<u4"), ("S", "<u4", (k,)), ("pS", "<f8"), ("cls", "<u4")])


def write_sample_log(f, batch):
    """Append a batch to an open binary file; writes the header when the file is empty."""
    if f.tell() == 0:
        f.write(LOG_MAGIC + struct.pack("<I", batch.k))
    rec = np.empty(len(batch), dtype=_log_dtype(batch.k))
    rec["root"] = batch.roots
    rec["S"] = batch.members
    rec["pS"] = batch.pS
    rec["cls"] = np.where(batch.classes >= 0, batch.classes, 0xFFFFFFFF)
    f.write(rec.tobytes())


def read_sample_log(path):
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) < 12 or head[:8] != LOG_MAGIC:
            raise ParseError("not a sample log", 0)
        k = struct.unpack("<I", head[8:])[0]
        body = f.read()
    dt = _log_dtype(k)
    if len(body) % dt.itemsize:
        raise ParseError("truncated sample record", 12 + len(body) - len(body) % dt.itemsize)
    return k, np.frombuffer(body, dtype=dt)
