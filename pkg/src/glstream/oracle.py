"""Exact in-memory ground truth for small graphs."""

import heapq
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .ddorder import VertexOrder
from .errors import GuardError
from .estimator import labeled_code, registry

DIST_MAX_N = 1000
DIST_MAX_K = 6
NV_MAX_N = 200
SEQ_MAX_K = 5


class InMemoryGraph:
    def __init__(self, n, edges=()):
        self.n = int(n)
        self.adj = [set() for _ in range(self.n)]
        for u, v in edges:
            u, v = int(u), int(v)
            if u != v:
                self.adj[u].add(v)
                self.adj[v].add(u)

    @classmethod
    def from_source(cls, source):
        return cls(source.n, source.read_all().tolist())

    @property
    def m(self):
        return sum(len(a) for a in self.adj) // 2

    def edges(self):
        return [(u, v) for u in range(self.n) for v in sorted(self.adj[u]) if u < v]

    def degree(self, v):
        return len(self.adj[v])

    def submatrix(self, verts):
        verts = list(verts)
        k = len(verts)
        a = np.zeros((k, k), dtype=bool)
        for i in range(k):
            for j in range(i + 1, k):
                if verts[j] in self.adj[verts[i]]:
                    a[i, j] = a[j, i] = True
        return a


@dataclass
class ExactDistribution:
    k: int
    counts: np.ndarray  # per class index of registry(k)
    L: int

    @property
    def mu(self):
        return self.counts / self.L if self.L else np.zeros(len(self.counts))

    @property
    def m_k(self):
        return len(self.counts)


def connected_subsets(graph, k, key=None, allowed=None):
    """Every connected vertex set of size k exactly once (extension with exclusive neighbourhoods).

    ``key`` ranks vertices (default: the id); each set is produced from its
    lowest-key member.  ``allowed`` restricts to a vertex subset.
    """
    key = key if key is not None else list(range(graph.n))
    adj = graph.adj

    def extend(sub, ext, root, border):
        if len(sub) == k:
            yield tuple(sub)
            return
        ext = list(ext)
        while ext:
            w = ext.pop()
            fresh = [u for u in adj[w]
                     if key[u] > key[root] and u not in border
                     and (allowed is None or u in allowed)]
            yield from extend(sub + [w], ext + fresh, root, border | set(fresh))

    seeds = range(graph.n) if allowed is None else sorted(allowed)
    for v in seeds:
        start = [u for u in adj[v] if key[u] > key[v] and (allowed is None or u in allowed)]
        yield from extend([v], start, v, set(start) | {v})


def exact_distribution(graph, k):
    if graph.n > DIST_MAX_N:
        raise GuardError(f"exact distribution refuses n={graph.n} > {DIST_MAX_N}")
    if not 1 <= k <= DIST_MAX_K:
        raise GuardError(f"exact distribution refuses k={k} outside [1, {DIST_MAX_K}]")
    reg = registry(k)
    counts = np.zeros(reg.m_k, dtype=np.int64)
    for sub in connected_subsets(graph, k):
        counts[reg.classify_labeled(labeled_code(graph.submatrix(sub)))] += 1
    return ExactDistribution(k, counts, int(counts.sum()))


def exact_dd_order(graph):
    """Repeatedly remove a vertex of maximum remaining degree, smallest id first."""
    deg = [len(a) for a in graph.adj]
    heap = [(-d, v) for v, d in enumerate(deg)]
    heapq.heapify(heap)
    gone = [False] * graph.n
    out = []
    while heap:
        negd, v = heapq.heappop(heap)
        if gone[v] or -negd != deg[v]:
            continue
        gone[v] = True
        out.append(v)
        for w in graph.adj[v]:
            if not gone[w]:
                deg[w] -= 1
                heapq.heappush(heap, (-deg[w], w))
    return VertexOrder(out)


def up_degrees(graph, order):
    rank = order.rank
    return np.array([sum(1 for w in graph.adj[v] if rank[w] > rank[v]) for v in range(graph.n)],
                    dtype=np.int64)


def is_dd_order(graph, order, theta):
    """Direct check: each vertex with a later neighbour has at least theta times the max suffix degree."""
    rank = order.rank
    for v in range(graph.n):
        r = rank[v]
        dv = sum(1 for w in graph.adj[v] if rank[w] > r)
        if dv == 0:
            continue
        top = max(sum(1 for w in graph.adj[u] if rank[w] >= r)
                  for u in range(graph.n) if rank[u] >= r)
        if dv < theta * top - 1e-12:
            return False
    return True


def suffix_components(graph, order):
    """Size of v's connected component inside its suffix graph, for every v."""
    rank = order.rank
    out = np.zeros(graph.n, dtype=np.int64)
    for v in range(graph.n):
        r = rank[v]
        seen = {v}
        stack = [v]
        while stack:
            x = stack.pop()
            for y in graph.adj[x]:
                if rank[y] >= r and y not in seen:
                    seen.add(y)
                    stack.append(y)
        out[v] = len(seen)
    return out


def exact_positivity_and_Nv(graph, order, k):
    """(positive, N_v) per vertex, by enumerating the k-sets each vertex roots."""
    if graph.n > NV_MAX_N:
        raise GuardError(f"exact N_v refuses n={graph.n} > {NV_MAX_N}")
    key = order.rank.tolist()
    nv = np.zeros(graph.n, dtype=np.int64)
    for sub in connected_subsets(graph, k, key=key):
        nv[min(sub, key=lambda x: key[x])] += 1
    return nv > 0, nv


def growth_sequence_probability(graph, order, v, S):
    """Sum over addition orders of S (starting from v) of the product of step probabilities.

    Each step from set T picks a uniform edge of the suffix graph of v with
    exactly one endpoint in T, counted directly on the graph.
    """
    S = [int(x) for x in S]
    k = len(S)
    if k > SEQ_MAX_K:
        raise GuardError(f"sequence enumeration refuses k={k} > {SEQ_MAX_K}")
    if v not in S:
        raise ValueError("root must belong to the set")
    rank = order.rank
    r = rank[v]
    if any(rank[x] < r for x in S):
        return 0.0

    def cut(T):
        return sum(1 for w in T for x in graph.adj[w] if rank[x] >= r and x not in T)

    rest = [x for x in S if x != v]
    total = 0.0
    for seq in permutations(rest):
        T = {v}
        prob = 1.0
        for u in seq:
            a = sum(1 for w in graph.adj[u] if w in T)
            if a == 0:
                prob = 0.0
                break
            prob *= a / cut(T)
            T.add(u)
        total += prob
    return total
