"""Replayable edge-list sources with pass and memory accounting.

Cleaned binary layout::

    b"GLSTRM1\\0" | u64le n | u64le m | m x (u32le u, u32le v), u < v

The original vertex ids live in a sidecar text file ``<path>.ids`` holding one
original id per line, line number = dense id.
"""

import io
import os
import struct
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ParseError, ScanError

MAGIC = b"GLSTRM1\0"
HEADER = struct.Struct("<8sQQ")
RECORD = np.dtype([("u", "<u4"), ("v", "<u4")])
MAX_VERTICES = 1 << 32
DEFAULT_CHUNK = 1 << 20


@dataclass
class EdgeRecord:
    u: int
    v: int


@dataclass
class EdgeChunk:
    """A contiguous run of cleaned edges; ``offset`` is the ordinal of the first one."""

    offset: int
    u: np.ndarray
    v: np.ndarray

    def __len__(self):
        return len(self.u)

    @property
    def ordinals(self):
        return np.arange(self.offset, self.offset + len(self.u), dtype=np.int64)


class MemoryMeter:
    """Words of algorithmic state (1 word = 8 bytes), with a high-water mark."""

    def __init__(self):
        self.current_words = 0
        self.peak_words = 0

    def alloc(self, words):
        self.current_words += int(words)
        if self.current_words > self.peak_words:
            self.peak_words = self.current_words

    def free(self, words):
        self.current_words -= int(words)
        if self.current_words < 0:
            raise ValueError("MemoryMeter freed more words than were allocated")

    @contextmanager
    def hold(self, words):
        self.alloc(words)
        try:
            yield
        finally:
            self.free(words)

    def __repr__(self):
        return f"MemoryMeter(current={self.current_words}, peak={self.peak_words})"


class GraphSource:
    """The only access path to a graph: full sequential scans of its cleaned edges.

    Backed either by a cleaned binary file or by in-memory arrays.  Every
    completed scan bumps ``passes``; a scan that dies on an I/O error raises
    :class:`ScanError` and is not counted.
    """

    def __init__(self, n, m, path=None, edges=None, chunk_edges=DEFAULT_CHUNK):
        if (path is None) == (edges is None):
            raise ValueError("exactly one of path / edges must be given")
        self.n = int(n)
        self.m = int(m)
        self.path = None if path is None else os.fspath(path)
        self._edges = edges
        self.chunk_edges = int(chunk_edges)
        self.passes = 0
        self.bytes_read = 0
        self._scanning = False

    # -- construction ---------------------------------------------------

    @classmethod
    def open(cls, path, chunk_edges=DEFAULT_CHUNK):
        with open(path, "rb") as f:
            head = f.read(HEADER.size)
        if len(head) < HEADER.size:
            raise ParseError("truncated header", len(head))
        magic, n, m = HEADER.unpack(head)
        if magic != MAGIC:
            raise ParseError("bad magic, not a cleaned graph file", 0)
        size = os.path.getsize(path)
        if size != HEADER.size + 8 * m:
            raise ParseError(f"file holds {size - HEADER.size} record bytes, header says {8 * m}",
                             min(size, HEADER.size + 8 * m))
        return cls(n, m, path=path, chunk_edges=chunk_edges)

    @classmethod
    def from_edges(cls, edges, n=None, chunk_edges=DEFAULT_CHUNK):
        """In-memory source over already-dense ids; loops and duplicates are dropped."""
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                         dtype=np.int64).reshape(-1, 2)
        if arr.size and arr.min() < 0:
            raise ValueError("vertex ids must be non-negative")
        u, v = _clean(arr[:, 0], arr[:, 1])
        if n is None:
            n = int(arr.max()) + 1 if arr.size else 0
        elif arr.size and arr.max() >= n:
            raise ValueError(f"vertex id {int(arr.max())} out of range for n={n}")
        if n > MAX_VERTICES:
            raise CapacityError(f"{n} vertices exceed the 2^32 id space")
        rec = np.empty(len(u), dtype=RECORD)
        rec["u"], rec["v"] = u, v
        return cls(n, len(rec), edges=rec, chunk_edges=chunk_edges)

    def save(self, path):
        """Write this source in cleaned binary form (costs one pass)."""
        with open(path, "wb") as f:
            f.write(HEADER.pack(MAGIC, self.n, self.m))
            for ch in self.chunks():
                rec = np.empty(len(ch), dtype=RECORD)
                rec["u"], rec["v"] = ch.u, ch.v
                f.write(rec.tobytes())
        return GraphSource.open(path, self.chunk_edges)

    # -- scanning -------------------------------------------------------

    def chunks(self):
        """Generator over :class:`EdgeChunk` covering the whole edge list once."""
        if self._scanning:
            raise RuntimeError("GraphSource is already being scanned")
        self._scanning = True
        completed = False
        try:
            if self._edges is not None:
                for off in range(0, self.m, self.chunk_edges):
                    rec = self._edges[off:off + self.chunk_edges]
                    self.bytes_read += rec.nbytes
                    yield EdgeChunk(off, rec["u"].astype(np.int64), rec["v"].astype(np.int64))
            else:
                yield from self._file_chunks()
            completed = True
        except GeneratorExit:
            # the consumer walked away mid-scan: it still started a pass
            completed = True
            raise
        finally:
            self._scanning = False
            if completed:
                self.passes += 1

    def _file_chunks(self):
        try:
            f = open(self.path, "rb")
        except OSError as exc:
            raise ScanError(f"cannot open {self.path}: {exc}") from exc
        with f:
            f.seek(HEADER.size)
            off = 0
            while off < self.m:
                want = min(self.chunk_edges, self.m - off)
                try:
                    buf = f.read(8 * want)
                except OSError as exc:
                    raise ScanError(f"read failed at edge {off}: {exc}") from exc
                if len(buf) != 8 * want:
                    raise ScanError(f"{self.path} truncated at edge {off + len(buf) // 8}")
                self.bytes_read += len(buf)
                rec = np.frombuffer(buf, dtype=RECORD)
                yield EdgeChunk(off, rec["u"].astype(np.int64), rec["v"].astype(np.int64))
                off += want

    def scan(self, visitor):
        """Call ``visitor(u, v)`` once per edge, in stored order."""
        for ch in self.chunks():
            for a, b in zip(ch.u.tolist(), ch.v.tolist()):
                visitor(a, b)

    def read_all(self):
        """All edges as an (m, 2) int64 array; one pass."""
        parts = [np.column_stack([ch.u, ch.v]) for ch in self.chunks()]
        return np.concatenate(parts) if parts else np.empty((0, 2), dtype=np.int64)

    def degrees(self):
        deg = np.zeros(self.n, dtype=np.int64)
        for ch in self.chunks():
            deg += np.bincount(ch.u, minlength=self.n)
            deg += np.bincount(ch.v, minlength=self.n)
        return deg

    def __repr__(self):
        where = self.path or "memory"
        return f"GraphSource(n={self.n}, m={self.m}, {where}, passes={self.passes})"


def _clean(u, v):
    """Drop self-loops and repeated pairs (either orientation), keep first appearances, store u < v."""
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    keep = u != v
    lo = np.minimum(u, v)[keep]
    hi = np.maximum(u, v)[keep]
    if len(lo) == 0:
        return lo, hi
    _, first = np.unique(np.stack([lo, hi], axis=1), axis=0, return_index=True)
    first.sort()
    return lo[first], hi[first]


# -- ingestion ------------------------------------------------------------

def _read_bytes(raw):
    if isinstance(raw, (bytes, bytearray, memoryview)):
        return bytes(raw)
    if isinstance(raw, (str, os.PathLike)):
        with open(raw, "rb") as f:
            return f.read()
    return raw.read()


def _parse_text(data):
    us, vs = [], []
    offset = 0
    for line in io.BytesIO(data):
        tokens = line.split()
        if tokens and not tokens[0].startswith((b"#", b"%")):
            if len(tokens) != 2:
                raise ParseError(f"expected 2 integers, got {len(tokens)} tokens", offset)
            try:
                a, b = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise ParseError(f"non-integer vertex id in {line.strip()!r}", offset) from None
            if a < 0 or b < 0 or a >= 1 << 64 or b >= 1 << 64:
                raise ParseError(f"vertex id out of range in {line.strip()!r}", offset)
            us.append(a)
            vs.append(b)
        offset += len(line)
    return np.array(us, dtype=np.uint64), np.array(vs, dtype=np.uint64)


def _parse_binary(data):
    if len(data) % 8:
        raise ParseError("truncated 8-byte edge record", len(data) - len(data) % 8)
    rec = np.frombuffer(data, dtype=RECORD)
    return rec["u"].astype(np.uint64), rec["v"].astype(np.uint64)


def ingest(raw, fmt="text", out_path=None, chunk_edges=DEFAULT_CHUNK):
    """Clean a raw edge list into a :class:`GraphSource`.

    Self-loops, repeated edges (in either orientation) and directions are
    removed; vertices are relabelled densely in order of first appearance
    among the retained edges.  With ``out_path`` the result is written as a
    cleaned binary file plus the ``.ids`` sidecar; otherwise it stays in memory
    and the id map is available as ``source.original_ids``.
    """
    data = _read_bytes(raw)
    if fmt == "text":
        u, v = _parse_text(data)
    elif fmt == "binary":
        u, v = _parse_binary(data)
    else:
        raise ValueError(f"unknown format {fmt!r}")

    keep = u != v
    u, v = u[keep], v[keep]
    if len(u):
        flat = np.stack([u, v], axis=1).ravel()
        uniq, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
        if len(uniq) > MAX_VERTICES:
            raise CapacityError(f"{len(uniq)} distinct vertices exceed the 2^32 id space")
        by_first = np.argsort(first, kind="stable")
        dense_of = np.empty(len(uniq), dtype=np.int64)
        dense_of[by_first] = np.arange(len(uniq))
        dense = dense_of[inverse.ravel()].reshape(-1, 2)
        orig = uniq[by_first]
        du, dv = _clean(dense[:, 0], dense[:, 1])
    else:
        orig = np.empty(0, dtype=np.uint64)
        du = dv = np.empty(0, dtype=np.int64)

    n = len(orig)
    rec = np.empty(len(du), dtype=RECORD)
    rec["u"], rec["v"] = du, dv
    if out_path is None:
        src = GraphSource(n, len(rec), edges=rec, chunk_edges=chunk_edges)
    else:
        with open(out_path, "wb") as f:
            f.write(HEADER.pack(MAGIC, n, len(rec)))
            f.write(rec.tobytes())
        write_id_map(os.fspath(out_path) + ".ids", orig)
        src = GraphSource.open(out_path, chunk_edges)
    src.original_ids = orig
    return src


def write_id_map(path, orig):
    with open(path, "w") as f:
        for x in orig.tolist():
            f.write(f"{x}\n")


def read_id_map(path):
    with open(path) as f:
        return np.array([int(line) for line in f if line.strip()], dtype=np.uint64)


# -- synthetic graphs -----------------------------------------------------

def pair_from_index(t, n):
    """Map linear indices over the upper triangle (row-major) back to (u, v), u < v."""
    t = np.asarray(t, dtype=np.int64)
    b = 2 * n - 1
    u = np.floor((b - np.sqrt(np.maximum(b * b - 8.0 * t, 0.0))) / 2).astype(np.int64)
    start = u * (2 * n - u - 1) // 2
    # float rounding can land one row off in either direction
    low = start > t
    u[low] -= 1
    start = u * (2 * n - u - 1) // 2
    nxt = (u + 1) * (2 * n - u - 2) // 2
    high = t >= nxt
    u[high] += 1
    start = u * (2 * n - u - 1) // 2
    return u, t - start + u + 1


def generate_er(n, m_target, seed, path=None, chunk_edges=DEFAULT_CHUNK):
    """Erdos-Renyi graph: each pair kept independently with probability m_target / C(n, 2).

    Edges are emitted in row-major pair order.  Deterministic given ``seed``.
    """
    n = int(n)
    if n > MAX_VERTICES:
        raise CapacityError(f"{n} vertices exceed the 2^32 id space")
    pairs = n * (n - 1) // 2
    if not 0 <= m_target <= pairs:
        raise ValueError(f"m_target={m_target} outside [0, {pairs}] for n={n}")
    p = m_target / pairs if pairs else 0.0
    rng = np.random.default_rng(seed)
    picks = []
    if p >= 1.0:
        picks.append(np.arange(pairs, dtype=np.int64))
    elif p > 0.0:
        pos = -1
        block = max(1024, int(1.2 * m_target) + 64)
        while True:
            gaps = rng.geometric(p, size=block)
            idx = pos + np.cumsum(gaps, dtype=np.int64)
            inside = idx[idx < pairs]
            picks.append(inside)
            if len(inside) < block:
                break
            pos = int(idx[-1])
    idx = np.concatenate(picks) if picks else np.empty(0, dtype=np.int64)
    u, v = pair_from_index(idx, n)
    rec = np.empty(len(idx), dtype=RECORD)
    rec["u"], rec["v"] = u, v
    if path is None:
        return GraphSource(n, len(rec), edges=rec, chunk_edges=chunk_edges)
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, n, len(rec)))
        f.write(rec.tobytes())
    return GraphSource.open(path, chunk_edges)
