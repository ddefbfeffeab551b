"""Isomorphism classes of small connected graphs and distribution estimates."""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import keyed
from .errors import ClassificationError, DimensionError, InconsistencyError

MAX_K = 8


# -- canonical codes ----------------------------------------------------------
#
# A code is the upper triangle of the adjacency matrix read row-major, first
# bit most significant.  The canonical code of a graph is the smallest code
# over all relabellings.  The search below fixes positions left to right:
# the vertex placed at position i determines row i completely once every
# later cell is split into (non-neighbours, neighbours), so only candidates
# giving the smallest row need to be explored, and twins are interchangeable.

def _rows_from_matrix(adj):
    adj = np.asarray(adj, dtype=bool)
    k = adj.shape[0]
    if adj.shape != (k, k):
        raise ClassificationError(f"adjacency must be square, got shape {adj.shape}")
    if (adj != adj.T).any() or adj.diagonal().any():
        raise ClassificationError("adjacency must be symmetric with an empty diagonal")
    return [sum(1 << j for j in range(k) if adj[i, j]) for i in range(k)]


def _connected(rows):
    k = len(rows)
    if k == 0:
        return False
    seen = 1
    frontier = 1
    while frontier:
        nxt = 0
        for v in range(k):
            if frontier >> v & 1:
                nxt |= rows[v]
        frontier = nxt & ~seen
        seen |= frontier
    return seen == (1 << k) - 1


def _canonical_from_rows(rows):
    k = len(rows)
    best = [None]

    def split(cells, x):
        nbrs = rows[x]
        out = []
        row = 0
        for cell in cells:
            non = [y for y in cell if not nbrs >> y & 1]
            yes = [y for y in cell if nbrs >> y & 1]
            row = (row << len(cell)) | ((1 << len(yes)) - 1)
            if non:
                out.append(non)
            if yes:
                out.append(yes)
        return row, out

    def search(cells, code, depth):
        if not cells:
            if best[0] is None or code < best[0]:
                best[0] = code
            return
        first, rest = cells[0], cells[1:]
        options = []
        used = []
        for x in first:
            # twins (same neighbourhood outside each other) give identical subtrees
            if any((rows[x] & ~(1 << y)) == (rows[y] & ~(1 << x)) for y in used):
                continue
            used.append(x)
            remaining = [y for y in first if y != x]
            row, new_cells = split(([remaining] if remaining else []) + rest, x)
            options.append((row, new_cells))
        low = min(r for r, _ in options)
        width = k - 1 - depth
        for row, new_cells in options:
            if row != low:
                continue
            new_code = (code << width) | row
            if best[0] is not None:
                tail = (k - 1 - depth) * (k - 2 - depth) // 2
                if new_code > best[0] >> tail:
                    continue
            search(new_cells, new_code, depth + 1)

    search([list(range(k))], 0, 0)
    return best[0]


def canonicalize(adj):
    """Canonical code (an int) of a connected graph given by its adjacency matrix."""
    rows = _rows_from_matrix(adj)
    if not _connected(rows):
        raise ClassificationError("graph is not connected, so it is not a graphlet")
    return _canonical_from_rows(rows)


def brute_canonical(adj):
    """Minimum code over all k! relabellings; slow reference used in tests."""
    from itertools import permutations

    adj = np.asarray(adj, dtype=bool)
    k = adj.shape[0]
    return min(labeled_code(adj[np.ix_(p, p)]) for p in map(list, permutations(range(k))))


def labeled_code(adj):
    adj = np.asarray(adj, dtype=bool)
    k = adj.shape[0]
    code = 0
    for i in range(k):
        for j in range(i + 1, k):
            code = (code << 1) | int(adj[i, j])
    return code


def code_to_matrix(code, k):
    adj = np.zeros((k, k), dtype=bool)
    pos = k * (k - 1) // 2 - 1
    for i in range(k):
        for j in range(i + 1, k):
            if code >> pos & 1:
                adj[i, j] = adj[j, i] = True
            pos -= 1
    return adj


def code_hex(code, k):
    width = max(1, -(-(k * (k - 1) // 2) // 4))
    return f"{code:0{width}x}"


@lru_cache(maxsize=None)
def _class_codes(k):
    if k == 1:
        return (0,)
    out = set()
    for code in _class_codes(k - 1):
        base = code_to_matrix(code, k - 1)
        for mask in range(1, 1 << (k - 1)):
            adj = np.zeros((k, k), dtype=bool)
            adj[:k - 1, :k - 1] = base
            for j in range(k - 1):
                if mask >> j & 1:
                    adj[k - 1, j] = adj[j, k - 1] = True
            out.add(_canonical_from_rows(_rows_from_matrix(adj)))
    return tuple(sorted(out))


class ClassRegistry:
    """Connected k-vertex graphs up to isomorphism, indexed by ascending canonical code."""

    def __init__(self, k):
        if not 1 <= k <= MAX_K:
            raise ValueError(f"k must lie in [1, {MAX_K}]")
        self.k = k
        self.codes = list(_class_codes(k))
        self.index = {c: i for i, c in enumerate(self.codes)}
        self._labeled = {}

    @property
    def m_k(self):
        return len(self.codes)

    def __len__(self):
        return len(self.codes)

    def classify(self, adj):
        return self.index[canonicalize(adj)]

    def classify_labeled(self, code):
        hit = self._labeled.get(code)
        if hit is None:
            hit = self._labeled[code] = self.classify(code_to_matrix(code, self.k))
        return hit

    def classify_batch(self, adjacency):
        """Class index per (k, k) matrix in a (B, k, k) stack, memoised on the labelled code."""
        adjacency = np.asarray(adjacency, dtype=bool)
        k = self.k
        iu, ju = np.triu_indices(k, 1)
        bits = adjacency[:, iu, ju].astype(np.int64)
        weights = (1 << np.arange(len(iu) - 1, -1, -1)).astype(np.int64)
        codes = bits @ weights
        uniq, inv = np.unique(codes, return_inverse=True)
        cls = np.array([self.classify_labeled(int(c)) for c in uniq], dtype=np.int64)
        return cls[inv.ravel()]

    def hex(self, i):
        return code_hex(self.codes[i], self.k)

    def matrix(self, i):
        return code_to_matrix(self.codes[i], self.k)


@lru_cache(maxsize=None)
def registry(k):
    return ClassRegistry(k)


# -- estimates ------------------------------------------------------------------

@dataclass
class DistributionEstimate:
    counts: np.ndarray
    samples: int
    trials: int = None
    accepted: int = None

    @property
    def m_k(self):
        return len(self.counts)

    @property
    def C_hat(self):
        return float(math.fsum(self.counts.tolist()))

    @property
    def defined(self):
        return self.C_hat > 0

    @property
    def mu(self):
        c = self.C_hat
        if c <= 0:
            return np.zeros(self.m_k)
        return self.counts / c

    @property
    def L_hat(self):
        """Estimated number of graphlets; meaningful for counter estimates."""
        return self.C_hat / self.samples if self.samples else 0.0

    def merge(self, other):
        if other.m_k != self.m_k:
            raise DimensionError(f"cannot merge {self.m_k} classes with {other.m_k}")
        add = lambda a, b: None if a is None and b is None else (a or 0) + (b or 0)
        return DistributionEstimate(self.counts + other.counts, self.samples + other.samples,
                                    add(self.trials, other.trials), add(self.accepted, other.accepted))


def _columns(samples):
    if hasattr(samples, "pS") and hasattr(samples, "classes"):
        return np.asarray(samples.classes, dtype=np.int64), np.asarray(samples.pS, dtype=np.float64)
    samples = list(samples)
    return (np.array([s.class_index for s in samples], dtype=np.int64),
            np.array([s.pS for s in samples], dtype=np.float64))


def counter_estimate(samples, m_k):
    """Add 1/p(S) to the class of each sample.

    ``samples`` is a SampleBatch or an iterable of GraphletSample; ``m_k`` may
    also be a ClassRegistry.
    """
    m_k = len(m_k) if isinstance(m_k, ClassRegistry) else int(m_k)
    cls, pS = _columns(samples)
    if len(cls) == 0:
        return DistributionEstimate(np.zeros(m_k), 0)
    if (pS <= 0).any():
        raise InconsistencyError("sample with non-positive p(S)")
    if cls.min() < 0 or cls.max() >= m_k:
        raise DimensionError(f"class index outside 0..{m_k - 1}")
    counts = np.bincount(cls, weights=1.0 / pS, minlength=m_k)
    return DistributionEstimate(counts, len(cls))


def gamma(k, epsilon, Z):
    return 1.0 / (math.factorial(k - 1) * (1 + epsilon) ** (k - 1) * float(Z))


def rejection_coins(seed, batch, B):
    return keyed.uniforms(keyed.make_key(seed, keyed.REJECT, batch), np.arange(B))


def rejection_estimate(samples, m_k, g, coins):
    """Keep each sample with probability g / p(S), using the supplied uniforms; count kept ones."""
    m_k = len(m_k) if isinstance(m_k, ClassRegistry) else int(m_k)
    cls, pS = _columns(samples)
    coins = np.asarray(coins, dtype=np.float64)
    if len(coins) != len(cls):
        raise DimensionError("one coin per sample is required")
    if len(cls) == 0:
        return DistributionEstimate(np.zeros(m_k), 0, 0, 0)
    ratio = g / pS
    if (ratio > 1 + 1e-9).any():
        i = int(np.argmax(ratio))
        raise InconsistencyError(f"rejection floor {g:.6g} exceeds p(S) = {pS[i]:.6g}")
    keep = coins < ratio
    counts = np.bincount(cls[keep], minlength=m_k).astype(np.float64)
    return DistributionEstimate(counts, len(cls), len(cls), int(keep.sum()))


def required_samples(k, epsilon, alpha, delta, m_k):
    if not 0 < alpha < 1 or not 0 < delta < 1:
        raise ValueError("alpha and delta must lie in (0, 1)")
    f = math.factorial(k - 1)
    top = 12 * f * f * (k - 1) ** (2 * k - 2) * (1 + epsilon) ** (2 * k - 2)
    return math.ceil(top / (alpha ** 2 * (1 - alpha) ** 2) * math.log(4 * m_k / delta))


def linf_distance(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"distributions have {a.shape} and {b.shape} classes")
    return float(np.abs(a - b).max()) if a.size else 0.0
