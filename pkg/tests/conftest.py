import itertools

import numpy as np
import pytest

from glstream.ddorder import VertexOrder
from glstream.edgestream import GraphSource, ingest
from glstream.oracle import InMemoryGraph

# small example graph, original ids 1..6
TOY_TEXT = b"1 3\n1 4\n1 5\n2 3\n2 4\n2 6\n3 5\n3 6\n"
TOY_ORDER = [1, 3, 2, 5, 6, 4]  # original ids, earliest first

ACCEPTANCE = []


def toy():
    return ingest(TOY_TEXT)


def dense_ids(source, originals):
    ids = source.original_ids.tolist()
    return [ids.index(x) for x in originals]


@pytest.fixture
def toy_source():
    return toy()


@pytest.fixture
def toy_order(toy_source):
    return VertexOrder(dense_ids(toy_source, TOY_ORDER))


def random_edges(n, m, seed):
    rng = np.random.default_rng(seed)
    pairs = list(itertools.combinations(range(n), 2))
    m = min(m, len(pairs))
    pick = rng.choice(len(pairs), size=m, replace=False)
    return [pairs[i] for i in sorted(pick)]


def random_source(n, m, seed):
    return GraphSource.from_edges(random_edges(n, m, seed), n=n)


def memory_graph(source):
    return InMemoryGraph.from_source(source)


def path_edges(n):
    return [(i, i + 1) for i in range(n - 1)]


def star_edges(leaves):
    return [(0, i) for i in range(1, leaves + 1)]


def grid_edges(w, h):
    out = []
    for r in range(h):
        for c in range(w):
            v = r * w + c
            if c + 1 < w:
                out.append((v, v + 1))
            if r + 1 < h:
                out.append((v, v + w))
    return out


def record_acceptance(number, ok, detail):
    ACCEPTANCE.append((number, "PASS" if ok else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, verdict, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {detail}")
