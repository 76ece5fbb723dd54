"""
Unit tests for graph accuracy metrics
Run: pytest test_metrics.py -v
"""

import itertools

import networkx as nx
import numpy as np
import pytest

from errors import CyclicGraphError, DimensionMismatchError
from metrics import (
    MetricsReport,
    d_separated,
    evaluate,
    evaluate_graphs,
    sid,
    sid_oracle,
    sign_consistency,
    structural_metrics,
)
from sem_core import CausalGraph

CHAIN = CausalGraph.from_edges(3, [(0, 1), (1, 2)])

# ten variables: a complete DAG over 0..5 plus 6 -> 7 and 8 -> 9, seventeen edges
TRUE_EDGES = [(i, j) for i in range(6) for j in range(i + 1, 6)] + [(6, 7), (8, 9)]
# drops 0->5, 1->5 and 0->3, reverses 8->9 and adds 6->9
EST_EDGES = [e for e in TRUE_EDGES if e not in {(0, 5), (1, 5), (0, 3), (8, 9)}] + [(9, 8), (6, 9)]


def random_dag(rng, d, p):
    order = rng.permutation(d)
    edges = [(int(order[a]), int(order[b]))
             for a in range(d) for b in range(a + 1, d) if rng.random() < p]
    return CausalGraph.from_edges(d, edges)


def path_blocked(g, path, Z):
    for a, b, c in zip(path, path[1:], path[2:]):
        if g.has_edge(a, b) and g.has_edge(c, b):
            if b not in Z and not nx.descendants(g, b) & Z:
                return True
        elif b in Z:
            return True
    return False


def d_separated_by_paths(G, x, y, Z):
    """Every simple path of the skeleton between x and y is blocked by Z."""
    g = G.to_networkx()
    return all(path_blocked(g, p, Z) for p in nx.all_simple_paths(g.to_undirected(), x, y))


class TestStructuralMetrics:
    """Test FDR, TPR, FPR and SHD"""

    def test_identical_graphs(self):
        """A perfect estimate"""
        assert structural_metrics(CHAIN, CHAIN) == (0.0, 1.0, 0.0, 0, 2)

    def test_reversed_and_extra_edge(self):
        """Reversals count as false discoveries and cost one in SHD"""
        est = CausalGraph.from_edges(3, [(1, 0), (1, 2), (0, 2)])
        fdr, tpr, fpr, shd, nnz = structural_metrics(CHAIN, est)
        assert fdr == pytest.approx(2 / 3)
        assert tpr == pytest.approx(0.5)
        assert fpr == pytest.approx(1.0)
        assert shd == 2
        assert nnz == 3

    def test_empty_estimate(self):
        """Every true edge is missing"""
        fdr, tpr, fpr, shd, nnz = structural_metrics(CHAIN, CausalGraph(np.zeros((3, 3))))
        assert (fdr, tpr, fpr, shd, nnz) == (0.0, 0.0, 0.0, 2, 0)

    def test_ten_variable_example(self):
        """13 correct, 1 reversed, 1 extra and 3 missing edges; SID 7"""
        truth = CausalGraph.from_edges(10, TRUE_EDGES)
        est = CausalGraph.from_edges(10, EST_EDGES)
        fdr, tpr, fpr, shd, nnz = structural_metrics(truth, est)
        assert nnz == 15
        assert fdr == pytest.approx(2 / 15)
        assert tpr == pytest.approx(13 / 17)
        assert fpr == pytest.approx(2 / 28)
        assert shd == 5
        assert sid(truth, est) == 7

    def test_ten_variable_example_one_more_miss(self):
        """Also dropping 2->4 costs TPR, one unit of SHD and two of SID"""
        truth = CausalGraph.from_edges(10, TRUE_EDGES)
        est = CausalGraph.from_edges(10, [e for e in EST_EDGES if e != (2, 4)])
        fdr, tpr, fpr, shd, nnz = structural_metrics(truth, est)
        assert nnz == 14
        assert round(fdr, 3) == 0.143
        assert round(tpr, 3) == 0.706
        assert round(fpr, 3) == 0.071
        assert shd == 6
        assert sid(truth, est) == 9

    def test_dimension_mismatch(self):
        """Graphs must share their variables"""
        with pytest.raises(DimensionMismatchError):
            structural_metrics(CHAIN, CausalGraph(np.zeros((2, 2))))


class TestSignConsistency:
    """Test SCS"""

    def test_counts_matching_signs(self):
        """Zeros match zeros; a flipped sign does not match"""
        W_true = np.array([[0.0, 1.0], [0.0, 0.0]])
        W_est = np.array([[0.0, -0.5], [0.0, 0.0]])
        assert sign_consistency(W_true, W_est) == 3
        assert sign_consistency(W_true, W_true) == 4

    @pytest.mark.parametrize("scale", [1e-3, 0.5, 7.0])
    def test_positive_scaling_keeps_every_sign(self, scale):
        """sgn(cW) = sgn(W) for c > 0, so SCS is d^2"""
        rng = np.random.default_rng(4)
        W = rng.normal(size=(5, 5)) * (rng.random((5, 5)) < 0.4)
        assert sign_consistency(W, scale * W) == 25

    def test_shape_checked(self):
        """Matrices must have the same shape"""
        with pytest.raises(DimensionMismatchError):
            sign_consistency(np.zeros((2, 2)), np.zeros((3, 3)))


class TestDSeparation:
    """Test d-separation"""

    def test_collider(self):
        """Conditioning on a collider opens the path"""
        G = CausalGraph.from_edges(3, [(0, 2), (1, 2)])
        assert d_separated(G, 0, 1)
        assert not d_separated(G, 0, 1, {2})

    def test_chain(self):
        """Conditioning on the middle of a chain blocks it"""
        assert not d_separated(CHAIN, 0, 2)
        assert d_separated(CHAIN, 0, 2, {1})

    def test_cyclic_graph_rejected(self):
        """d-separation needs a DAG"""
        with pytest.raises(CyclicGraphError):
            d_separated(CausalGraph.from_edges(2, [(0, 1), (1, 0)]), 0, 1)

    def test_endpoint_in_conditioning_set(self):
        """x and y may not be conditioned on"""
        with pytest.raises(ValueError):
            d_separated(CHAIN, 0, 2, {0})

    @pytest.mark.parametrize("d", [3, 4, 5])
    def test_matches_path_enumeration(self, d):
        """Agrees with blocking every path explicitly, over all pairs and conditioning sets"""
        rng = np.random.default_rng(d)
        for _ in range(6):
            G = random_dag(rng, d, 0.5)
            for x, y in itertools.combinations(range(d), 2):
                others = [v for v in range(d) if v not in (x, y)]
                for k in range(len(others) + 1):
                    for Z in itertools.combinations(others, k):
                        assert d_separated(G, x, y, set(Z)) == d_separated_by_paths(G, x, y, set(Z))


class TestSid:
    """Test the structural intervention distance"""

    def test_identical_graphs(self):
        """SID of the truth is zero"""
        assert sid(CHAIN, CHAIN) == 0

    def test_empty_estimate_of_chain(self):
        """Only pairs running against the chain are wrong"""
        empty = CausalGraph(np.zeros((3, 3)))
        assert sid(CHAIN, empty) == 3
        assert sid_oracle(CHAIN, empty) == 3

    def test_reversed_chain(self):
        """Reversing every edge misjudges each ordered pair with a path"""
        reversed_chain = CausalGraph.from_edges(3, [(1, 0), (2, 1)])
        assert sid(CHAIN, reversed_chain) == sid_oracle(CHAIN, reversed_chain)
        assert sid(CHAIN, reversed_chain) > 0

    def test_cyclic_estimate_rejected(self):
        """SID needs both graphs to be DAGs"""
        with pytest.raises(CyclicGraphError):
            sid(CHAIN, CausalGraph.from_edges(3, [(0, 1), (1, 0)]))

    @pytest.mark.parametrize("seed", range(8))
    def test_agrees_with_regression_oracle(self, seed):
        """Adjustment criterion matches regression in a random linear model"""
        rng = np.random.default_rng(seed)
        truth = random_dag(rng, 6, 0.4)
        est = random_dag(rng, 6, 0.4)
        assert sid(truth, est) == sid_oracle(truth, est, seed=seed)

    def test_oracle_on_many_small_pairs(self):
        """200 random pairs of DAGs over at most four variables"""
        rng = np.random.default_rng(11)
        for k in range(200):
            d = int(rng.integers(2, 5))
            truth = random_dag(rng, d, 0.5)
            est = random_dag(rng, d, 0.5)
            assert sid(truth, est) == sid_oracle(truth, est, seed=k), (truth.edges(), est.edges())


class TestEvaluate:
    """Test the combined metrics"""

    def test_perfect_weights(self):
        """Evaluating the truth against itself"""
        W = np.zeros((3, 3))
        W[0, 1] = 1.0
        W[1, 2] = -0.7
        report = evaluate(W, W, timing=1.5)
        assert isinstance(report, MetricsReport)
        assert (report.fdr, report.tpr, report.shd, report.sid, report.nnz) == (0.0, 1.0, 0, 0, 2)
        assert report.scs == 9
        assert report.timing == 1.5

    def test_threshold_applied_to_estimate(self):
        """Small estimated weights do not count as edges"""
        W = np.zeros((3, 3))
        W[0, 1] = 1.0
        W_est = W.copy()
        W_est[1, 2] = 0.2
        assert evaluate(W, W_est).nnz == 1

    def test_graph_metrics_without_weights(self):
        """SCS is only computed when weights are given"""
        report = evaluate_graphs(CHAIN, CHAIN)
        assert report.scs is None
        assert report.to_dict()["shd"] == 0
