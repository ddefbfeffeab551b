import itertools
import math
import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import TOY_TEXT, toy
from glstream.edgestream import (HEADER, MAGIC, GraphSource, MemoryMeter, generate_er, ingest,
                                 pair_from_index, read_id_map)
from glstream.errors import CapacityError, ParseError, ScanError


class TestIngest:
    def test_dedup_and_self_loops(self):
        src = ingest(b"1 3\n3 1\n1 1\n1 4\n")
        assert (src.n, src.m) == (3, 2)
        assert src.read_all().tolist() == [[0, 1], [0, 2]]

    def test_toy_graph(self):
        src = toy()
        assert (src.n, src.m) == (6, 8)

    def test_binary_orientation_dedup(self):
        raw = struct.pack("<IIII", 7, 9, 9, 7)
        assert len(raw) == 16
        src = ingest(raw, "binary")
        assert src.m == 1 and src.n == 2
        assert src.original_ids.tolist() == [7, 9]

    def test_first_appearance_relabel(self):
        src = ingest(b"50 10\n10 30\n30 50\n")
        assert src.original_ids.tolist() == [50, 10, 30]
        assert src.read_all().tolist() == [[0, 1], [1, 2], [0, 2]]

    def test_comments_and_blanks(self):
        src = ingest(b"# header\n\n% other\n1 2\n  \n2 3\n")
        assert (src.n, src.m) == (3, 2)

    def test_malformed_line_offset(self):
        with pytest.raises(ParseError) as err:
            ingest(b"1 2\n3 x\n")
        assert err.value.offset == 4

    def test_three_tokens_rejected(self):
        with pytest.raises(ParseError) as err:
            ingest(b"1 2\n2 3\n1 2 3\n")
        assert err.value.offset == 8

    def test_negative_id_rejected(self):
        with pytest.raises(ParseError):
            ingest(b"-1 2\n")

    def test_truncated_binary(self):
        raw = struct.pack("<III", 1, 2, 3)
        with pytest.raises(ParseError) as err:
            ingest(raw, "binary")
        assert err.value.offset == 8

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            ingest(b"", "csv")

    def test_empty(self):
        src = ingest(b"")
        assert (src.n, src.m) == (0, 0)

    def test_cleaned_file_and_sidecar(self, tmp_path):
        out = tmp_path / "g.glstrm"
        src = ingest(TOY_TEXT, out_path=out)
        assert src.path == str(out)
        with open(out, "rb") as f:
            magic, n, m = HEADER.unpack(f.read(HEADER.size))
        assert (magic, n, m) == (MAGIC, 6, 8)
        assert os.path.getsize(out) == HEADER.size + 8 * 8
        assert read_id_map(str(out) + ".ids").tolist() == [1, 3, 4, 5, 2, 6]
        again = GraphSource.open(out)
        assert again.read_all().tolist() == src.read_all().tolist()
        rec = again.read_all()
        assert (rec[:, 0] < rec[:, 1]).all()

    def test_ingest_from_path(self, tmp_path):
        p = tmp_path / "raw.txt"
        p.write_bytes(TOY_TEXT)
        assert ingest(str(p)).m == 8

    def test_open_rejects_bad_magic(self, tmp_path):
        p = tmp_path / "bad"
        p.write_bytes(b"NOTMAGIC" + bytes(16))
        with pytest.raises(ParseError):
            GraphSource.open(p)

    def test_open_rejects_size_mismatch(self, tmp_path):
        p = tmp_path / "short"
        p.write_bytes(HEADER.pack(MAGIC, 3, 2) + bytes(8))
        with pytest.raises(ParseError):
            GraphSource.open(p)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30)), max_size=60))
    def test_idempotent(self, pairs):
        raw = "".join(f"{a} {b}\n" for a, b in pairs).encode()
        once = ingest(raw)
        text = "".join(f"{a} {b}\n" for a, b in once.read_all().tolist()).encode()
        twice = ingest(text)
        assert twice.n == once.n
        assert twice.read_all().tolist() == once.read_all().tolist()

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), max_size=60))
    def test_clean_invariants(self, pairs):
        src = ingest("".join(f"{a} {b}\n" for a, b in pairs).encode())
        e = src.read_all()
        expected = {frozenset(p) for p in pairs if p[0] != p[1]}
        assert len(e) == len(expected)
        ids = src.original_ids
        assert {frozenset((int(ids[a]), int(ids[b]))) for a, b in e.tolist()} == expected
        assert (e[:, 0] < e[:, 1]).all() if len(e) else True


class TestScan:
    def test_empty_graph_scan(self):
        src = GraphSource.from_edges([], n=0)
        calls = []
        src.scan(lambda u, v: calls.append((u, v)))
        assert calls == [] and src.passes == 1

    def test_toy_graph_visits(self):
        src = toy()
        calls = []
        src.scan(lambda u, v: calls.append((u, v)))
        assert len(calls) == 8 and src.passes == 1

    def test_replay_identical(self, tmp_path):
        src = generate_er(300, 2000, 4, path=tmp_path / "er.glstrm", chunk_edges=97)
        a = src.read_all()
        b = src.read_all()
        assert np.array_equal(a, b)
        assert src.passes == 2
        assert src.bytes_read == 2 * 8 * src.m

    def test_chunks_carry_ordinals(self):
        src = GraphSource.from_edges([(0, 1), (1, 2), (2, 3), (0, 3)], chunk_edges=3)
        seen = []
        for ch in src.chunks():
            seen.extend(ch.ordinals.tolist())
        assert seen == [0, 1, 2, 3]

    def test_early_close_counts(self):
        src = GraphSource.from_edges([(0, 1), (1, 2), (2, 3)], chunk_edges=1)
        for _ in src.chunks():
            break
        assert src.passes == 1
        src.read_all()
        assert src.passes == 2

    def test_nested_scan_refused(self):
        src = GraphSource.from_edges([(0, 1), (1, 2)], chunk_edges=1)
        with pytest.raises(RuntimeError):
            for _ in src.chunks():
                for _ in src.chunks():
                    pass

    def test_io_failure_not_counted(self, tmp_path):
        p = tmp_path / "g.glstrm"
        src = generate_er(100, 500, 1, path=p, chunk_edges=50)
        with open(p, "r+b") as f:
            f.truncate(HEADER.size + 8 * 120)
        with pytest.raises(ScanError) as err:
            src.read_all()
        assert err.value.partial
        assert src.passes == 0

    def test_missing_file(self, tmp_path):
        p = tmp_path / "g.glstrm"
        src = generate_er(10, 5, 1, path=p)
        os.remove(p)
        with pytest.raises(ScanError):
            src.read_all()
        assert src.passes == 0

    def test_save_roundtrip(self, tmp_path):
        src = GraphSource.from_edges([(3, 1), (1, 2), (2, 3), (3, 1)], n=4)
        disk = src.save(tmp_path / "x.glstrm")
        assert disk.read_all().tolist() == [[1, 3], [1, 2], [2, 3]]
        assert disk.n == 4


class TestGenerate:
    def test_complete(self):
        src = generate_er(5, 10, 123)
        assert src.m == 10
        assert sorted(map(tuple, src.read_all().tolist())) == list(itertools.combinations(range(5), 2))

    def test_empty(self):
        assert generate_er(5, 0, 3).m == 0

    def test_deterministic_file(self, tmp_path):
        a = generate_er(200, 900, 7, path=tmp_path / "a")
        b = generate_er(200, 900, 7, path=tmp_path / "b")
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
        assert a.m == b.m

    def test_pair_order(self):
        e = generate_er(400, 3000, 9).read_all()
        idx = e[:, 0] * 400 + e[:, 1]
        assert (np.diff(idx) > 0).all()
        assert (e[:, 0] < e[:, 1]).all()

    def test_mean_edge_count(self):
        n, target = 1000, 5000
        pairs = n * (n - 1) // 2
        p = target / pairs
        sd = math.sqrt(pairs * p * (1 - p))
        assert abs(sd - 70.5) < 0.5
        counts = [generate_er(n, target, s).m for s in range(100)]
        assert abs(np.mean(counts) - target) <= 3 * sd
        # the mean of 100 draws is far tighter than one draw
        assert abs(np.mean(counts) - target) <= 3 * sd / 10 + 1
        assert 0.5 * sd < np.std(counts) < 1.5 * sd

    def test_bad_target(self):
        with pytest.raises(ValueError):
            generate_er(4, 7, 0)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            generate_er(2 ** 32 + 1, 0, 0)
        with pytest.raises(CapacityError):
            GraphSource.from_edges([(0, 1)], n=2 ** 32 + 1)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 60))
    def test_pair_from_index_matches_combinations(self, n):
        expect = list(itertools.combinations(range(n), 2))
        u, v = pair_from_index(np.arange(len(expect)), n)
        assert list(zip(u.tolist(), v.tolist())) == expect

    def test_pair_from_index_large(self):
        n = 100_000
        t = np.array([0, 1, n - 2, n - 1, n * (n - 1) // 2 - 1, 4_999_950_000 - 7])
        u, v = pair_from_index(t, n)
        start = u * (2 * n - u - 1) // 2
        assert np.array_equal(start + v - u - 1, t)
        assert ((0 <= u) & (u < v) & (v < n)).all()


class TestMemoryMeter:
    def test_peak(self):
        m = MemoryMeter()
        m.alloc(10)
        m.alloc(5)
        m.free(12)
        m.alloc(2)
        assert (m.current_words, m.peak_words) == (5, 15)

    def test_hold(self):
        m = MemoryMeter()
        with m.hold(7):
            assert m.current_words == 7
        assert m.current_words == 0 and m.peak_words == 7

    def test_over_free(self):
        with pytest.raises(ValueError):
            MemoryMeter().free(1)
