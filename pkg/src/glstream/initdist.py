"""Root distribution for graphlet growth: up-degrees, positivity, normalizer."""

import struct
from collections import deque
from dataclasses import dataclass

import numpy as np

from .edgestream import MemoryMeter
from .errors import ParseError

SIDE_MAGIC = b"GLINIT1\0"
SIDE_HEADER = struct.Struct("<8sQI")
SIDE_RECORD = np.dtype([("d_up", "<u4"), ("positive", "u1")])


@dataclass
class InitialDistribution:
    k: int
    d_up: np.ndarray  # by vertex id
    positive: np.ndarray
    Z: int

    def __post_init__(self):
        self.d_up = np.asarray(self.d_up, dtype=np.int64)
        self.positive = np.asarray(self.positive, dtype=bool)
        self.Z = int(self.Z)

    @property
    def n(self):
        return len(self.d_up)

    @property
    def prob(self):
        if self.Z == 0:
            return np.zeros(self.n)
        w = np.where(self.positive, self.d_up.astype(np.float64) ** (self.k - 1), 0.0)
        return w / float(self.Z)

    def weight(self, v):
        """Exact numerator of p(v)."""
        return int(self.d_up[v]) ** (self.k - 1) if self.positive[v] else 0

    @property
    def empty(self):
        return self.Z == 0

    def save(self, path):
        rec = np.empty(self.n, dtype=SIDE_RECORD)
        rec["d_up"] = self.d_up
        rec["positive"] = self.positive
        with open(path, "wb") as f:
            f.write(SIDE_HEADER.pack(SIDE_MAGIC, self.n, self.k))
            f.write(rec.tobytes())
        with open(str(path) + ".z", "w") as f:
            f.write(f"{self.Z}\n")

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            head = f.read(SIDE_HEADER.size)
            if len(head) < SIDE_HEADER.size or head[:8] != SIDE_MAGIC:
                raise ParseError("not an initial-distribution table", 0)
            _, n, k = SIDE_HEADER.unpack(head)
            body = f.read()
        if len(body) != n * SIDE_RECORD.itemsize:
            raise ParseError("truncated initial-distribution table", SIDE_HEADER.size + len(body))
        rec = np.frombuffer(body, dtype=SIDE_RECORD)
        with open(str(path) + ".z") as f:
            z = int(f.read().strip())
        return cls(k, rec["d_up"].astype(np.int64), rec["positive"].astype(bool), z)


def normalizer(d_up, positive, k):
    vals, counts = np.unique(d_up[positive], return_counts=True)
    return sum(int(c) * int(d) ** (k - 1) for d, c in zip(vals.tolist(), counts.tolist()))


def up_degrees(source, order):
    """Number of neighbours ranked after each vertex; one pass."""
    rank = order.rank
    d = np.zeros(source.n, dtype=np.int64)
    for ch in source.chunks():
        low = np.where(rank[ch.u] < rank[ch.v], ch.u, ch.v)
        d += np.bincount(low, minlength=source.n)
    return d


class _NeighbourTables:
    """Per-vertex bounded neighbour lists in rank space, filled in a single pass.

    ``up[r]`` holds the first ``cap`` later-ranked neighbours seen;
    ``down[r]`` holds the ``cap`` highest-ranked earlier neighbours.
    """

    def __init__(self, n, cap):
        self.cap = cap
        self.up = np.full((n, cap), -1, dtype=np.int64)
        self.up_fill = np.zeros(n, dtype=np.int64)
        self.down = np.full((n, cap), -1, dtype=np.int64)
        self.d_up = np.zeros(n, dtype=np.int64)

    def words(self):
        return self.up.size + self.down.size + 2 * len(self.d_up)

    def add(self, lo, hi):
        cap = self.cap
        if len(lo) == 0 or cap == 0:
            self.d_up += np.bincount(lo, minlength=len(self.d_up))
            return
        self.d_up += np.bincount(lo, minlength=len(self.d_up))

        perm = np.argsort(lo, kind="stable")
        a, b = lo[perm], hi[perm]
        slot = self.up_fill[a] + _occurrence(a)
        ok = slot < cap
        self.up[a[ok], slot[ok]] = b[ok]
        np.minimum(self.up_fill + np.bincount(a, minlength=len(self.up_fill)), cap, out=self.up_fill)

        touched = np.unique(hi)
        old = self.down[touched]
        ov = np.repeat(touched, cap)
        orr = old.ravel()
        keep = orr >= 0
        verts = np.r_[ov[keep], hi]
        ranks = np.r_[orr[keep], lo]
        perm = np.lexsort((-ranks, verts))
        verts, ranks = verts[perm], ranks[perm]
        # one edge never appears twice, but a rank already stored must not be re-added
        dup = np.r_[False, (verts[1:] == verts[:-1]) & (ranks[1:] == ranks[:-1])]
        verts, ranks = verts[~dup], ranks[~dup]
        slot = _occurrence(verts)
        ok = slot < cap
        self.down[touched] = -1
        self.down[verts[ok], slot[ok]] = ranks[ok]


def _occurrence(sorted_keys):
    """0-based position of each element within its run of equal keys."""
    if len(sorted_keys) == 0:
        return np.empty(0, dtype=np.int64)
    start = np.r_[True, sorted_keys[1:] != sorted_keys[:-1]]
    idx = np.arange(len(sorted_keys))
    return idx - np.maximum.accumulate(np.where(start, idx, 0))


def _positive_from_tables(t, k):
    n = len(t.d_up)
    need = k - 1
    pos = np.zeros(n, dtype=bool)
    big = t.d_up >= need
    pos[big] = True
    up = t.up.tolist()
    down = t.down.tolist()
    big_l = big.tolist()
    for r in np.flatnonzero(~big & (t.d_up > 0)).tolist():
        seen = {r}
        queue = deque([r])
        hit = False
        while queue and not hit:
            x = queue.popleft()
            for y in up[x]:
                if y < 0:
                    break
                if y not in seen:
                    if big_l[y]:
                        hit = True
                        break
                    seen.add(y)
                    queue.append(y)
            if hit or len(seen) >= k:
                hit = True
                break
            for y in down[x]:
                if y < r:  # sorted by descending rank, -1 pads the tail
                    break
                if y not in seen:
                    if big_l[y]:
                        hit = True
                        break
                    seen.add(y)
                    queue.append(y)
            if len(seen) >= k:
                hit = True
        pos[r] = hit
    return pos


def _scan_tables(source, order, k, meter):
    rank = order.rank
    t = _NeighbourTables(source.n, k - 1)
    meter.alloc(t.words())
    for ch in source.chunks():
        ru, rv = rank[ch.u], rank[ch.v]
        t.add(np.minimum(ru, rv), np.maximum(ru, rv))
    return t


def positivity(source, order, k, meter=None):
    """Whether each vertex's component inside its suffix graph has at least k vertices.

    One pass.  Memory is 2(k-1) rank entries plus two counters per vertex.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    meter = meter or MemoryMeter()
    t = _scan_tables(source, order, k, meter)
    try:
        return _positive_from_tables(t, k)[order.rank]
    finally:
        meter.free(t.words())


def init_distribution(source, order, k, meter=None):
    """Up-degrees, positivity flags and the exact normalizer from a single pass."""
    if k < 3:
        raise ValueError("k must be at least 3")
    meter = meter or MemoryMeter()
    t = _scan_tables(source, order, k, meter)
    try:
        pos = _positive_from_tables(t, k)[order.rank]
        d_up = t.d_up[order.rank]
    finally:
        meter.free(t.words())
    return InitialDistribution(k, d_up, pos, normalizer(d_up, pos, k))
