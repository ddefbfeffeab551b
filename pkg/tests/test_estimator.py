import itertools
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glstream.errors import ClassificationError, DimensionError, InconsistencyError
from glstream.estimator import (ClassRegistry, DistributionEstimate, brute_canonical, canonicalize,
                                code_hex, code_to_matrix, counter_estimate, gamma, labeled_code,
                                linf_distance, registry, rejection_coins, rejection_estimate,
                                required_samples)
from glstream.sampler import GraphletSample, SampleBatch


def connected_matrix(k, draw_bits):
    a = np.zeros((k, k), dtype=bool)
    for i, (x, y) in enumerate(itertools.combinations(range(k), 2)):
        a[x, y] = a[y, x] = draw_bits >> i & 1
    # chain the vertices so the graph is always connected
    for i in range(k - 1):
        a[i, i + 1] = a[i + 1, i] = True
    return a


@st.composite
def graphs(draw, lo=2, hi=6):
    k = draw(st.integers(lo, hi))
    bits = draw(st.integers(0, (1 << (k * (k - 1) // 2)) - 1))
    perm = draw(st.permutations(range(k)))
    a = connected_matrix(k, bits)
    return a[np.ix_(perm, perm)]


class TestCanonical:
    @settings(max_examples=200, deadline=None)
    @given(graphs(), st.data())
    def test_relabel_invariant(self, a, data):
        k = a.shape[0]
        p = data.draw(st.permutations(range(k)))
        assert canonicalize(a) == canonicalize(a[np.ix_(p, p)])

    @settings(max_examples=150, deadline=None)
    @given(graphs(hi=6))
    def test_matches_brute_force(self, a):
        assert canonicalize(a) == brute_canonical(a)

    @settings(max_examples=60, deadline=None)
    @given(graphs())
    def test_code_roundtrip(self, a):
        code = canonicalize(a)
        b = code_to_matrix(code, a.shape[0])
        assert labeled_code(b) == code
        assert nx.is_isomorphic(nx.from_numpy_array(a.astype(int)), nx.from_numpy_array(b.astype(int)))

    def test_disconnected(self):
        a = np.zeros((4, 4), bool)
        a[0, 1] = a[1, 0] = a[2, 3] = a[3, 2] = True
        with pytest.raises(ClassificationError):
            canonicalize(a)

    def test_asymmetric(self):
        a = np.zeros((3, 3), bool)
        a[0, 1] = a[1, 2] = a[2, 1] = True
        with pytest.raises(ClassificationError):
            canonicalize(a)

    def test_self_loop(self):
        a = np.ones((3, 3), bool)
        with pytest.raises(ClassificationError):
            canonicalize(a)

    def test_hex(self):
        assert code_hex(0x0F, 4) == "0f"
        assert code_hex(1, 3) == "1"


def brute_classes(k):
    """Distinct connected graphs on k labelled vertices, up to isomorphism, by networkx."""
    pairs = list(itertools.combinations(range(k), 2))
    reps = []
    for bits in range(1 << len(pairs)):
        g = nx.Graph()
        g.add_nodes_from(range(k))
        g.add_edges_from(p for i, p in enumerate(pairs) if bits >> i & 1)
        if not nx.is_connected(g):
            continue
        if not any(nx.is_isomorphic(g, h) for h in reps if h.number_of_edges() == g.number_of_edges()):
            reps.append(g)
    return reps


class TestRegistry:
    @pytest.mark.parametrize("k,size", [(3, 2), (4, 6), (5, 21)])
    def test_sizes_against_brute(self, k, size):
        reps = brute_classes(k)
        assert len(reps) == size == registry(k).m_k
        got = {registry(k).classify(nx.to_numpy_array(g, dtype=bool)) for g in reps}
        assert got == set(range(size))

    def test_six_against_atlas(self):
        atlas = [g for g in nx.graph_atlas_g() if g.number_of_nodes() == 6 and nx.is_connected(g)]
        assert len(atlas) == 112 == registry(6).m_k
        got = {registry(6).classify(nx.to_numpy_array(g, dtype=bool)) for g in atlas}
        assert got == set(range(112))

    def test_sorted_codes(self):
        r = registry(4)
        assert r.codes == sorted(r.codes)
        assert [r.hex(i) for i in (1, 2, 3)] == ["0d", "0f", "1e"]

    def test_classify_batch_matches(self):
        r = registry(5)
        rng = np.random.default_rng(0)
        mats = np.array([connected_matrix(5, int(b))[np.ix_(p, p)]
                         for b, p in zip(rng.integers(0, 1 << 10, 300),
                                         (rng.permutation(5) for _ in range(300)))])
        assert r.classify_batch(mats).tolist() == [r.classify(m) for m in mats]

    def test_bad_k(self):
        with pytest.raises(ValueError):
            ClassRegistry(9)


def fake(classes, pS):
    return [GraphletSample(0, (0,), None, None, p, c) for c, p in zip(classes, pS)]


class TestCounter:
    def test_indicator_sum(self):
        est = counter_estimate(fake([0, 1, 1, 2], [0.5, 0.25, 0.25, 0.1]), 3)
        assert est.counts.tolist() == [2.0, 8.0, 10.0]
        assert est.C_hat == 20.0
        assert est.L_hat == 5.0
        assert est.mu.sum() == pytest.approx(1.0)

    def test_empty(self):
        est = counter_estimate([], 6)
        assert not est.defined and est.mu.tolist() == [0.0] * 6

    def test_registry_argument(self):
        assert counter_estimate(fake([1], [1.0]), registry(3)).m_k == 2

    def test_out_of_range(self):
        with pytest.raises(DimensionError):
            counter_estimate(fake([3], [1.0]), 3)

    def test_batch_input(self):
        b = SampleBatch(3, np.array([0, 1]), None, None, None, np.array([0.5, 0.5]), np.array([0, 1]), None)
        assert counter_estimate(b, 2).counts.tolist() == [2.0, 2.0]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.floats(1e-6, 1.0)), min_size=1, max_size=50))
    def test_normalised(self, rows):
        est = counter_estimate(fake(*zip(*rows)), 6)
        assert est.mu.sum() == pytest.approx(1.0)
        assert (est.mu >= 0).all()

    def test_merge(self):
        a = counter_estimate(fake([0, 1], [0.5, 0.5]), 2)
        b = counter_estimate(fake([1], [0.25]), 2)
        c = a.merge(b)
        assert c.counts.tolist() == [2.0, 6.0] and c.samples == 3
        with pytest.raises(DimensionError):
            a.merge(counter_estimate([], 3))


class TestRejection:
    def test_equal_probabilities_accept_all(self):
        s = fake([0, 1, 1], [0.2, 0.2, 0.2])
        est = rejection_estimate(s, 2, 0.2, [0.999, 0.5, 0.0])
        assert est.accepted == 3 and est.counts.tolist() == [1.0, 2.0]

    def test_coins_decide(self):
        s = fake([0, 0], [0.5, 0.5])
        est = rejection_estimate(s, 1, 0.1, [0.1, 0.25])
        assert est.accepted == 1 and est.trials == 2

    def test_floor_above_probability(self):
        with pytest.raises(InconsistencyError):
            rejection_estimate(fake([0], [0.1]), 1, 0.2, [0.5])

    def test_coin_count(self):
        with pytest.raises(DimensionError):
            rejection_estimate(fake([0], [0.1]), 1, 0.05, [])

    def test_gamma(self):
        assert gamma(4, 0.1, 10) == pytest.approx(1 / (6 * 1.1 ** 3 * 10))

    def test_coins_keyed(self):
        a = rejection_coins(5, 2, 100)
        assert np.array_equal(a, rejection_coins(5, 2, 100))
        assert not np.array_equal(a, rejection_coins(5, 3, 100))
        assert ((0 <= a) & (a < 1)).all()


class TestRequiredSamples:
    def test_value(self):
        expected = 12 * 36 * 3 ** 6 * 1.1 ** 6 / (0.01 * 0.81) * math.log(4 * 6 / 0.05)
        assert required_samples(4, 0.1, 0.1, 0.05, 6) == math.ceil(expected)
        assert 4.2e8 < expected < 4.3e8

    def test_blows_up_at_ends(self):
        mid = required_samples(3, 0.1, 0.5, 0.1, 2)
        assert required_samples(3, 0.1, 0.01, 0.1, 2) > 100 * mid
        assert required_samples(3, 0.1, 0.99, 0.1, 2) > 100 * mid

    def test_log_linear(self):
        a = required_samples(5, 0.1, 0.2, 0.1, 21) / math.log(4 * 21 / 0.1)
        b = required_samples(5, 0.1, 0.2, 0.001, 21) / math.log(4 * 21 / 0.001)
        assert a == pytest.approx(b, rel=1e-6)

    @pytest.mark.parametrize("alpha,delta", [(0, 0.1), (1, 0.1), (0.1, 0), (0.1, 1.5)])
    def test_domain(self, alpha, delta):
        with pytest.raises(ValueError):
            required_samples(4, 0.1, alpha, delta, 6)


class TestLinf:
    def test_example(self):
        assert linf_distance([4 / 11, 6 / 11, 1 / 11], [0.6, 0.3, 0.1]) == pytest.approx(6 / 11 - 0.3)

    def test_identical(self):
        assert linf_distance([0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_dimension(self):
        with pytest.raises(DimensionError):
            linf_distance([1.0], [0.5, 0.5])

    def test_estimate_defined_flag(self):
        assert DistributionEstimate(np.array([0.0, 1.0]), 1).defined
