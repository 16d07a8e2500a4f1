"""Closed-form gradient formulas and similarity bounds."""

import itertools
import math

import numpy as np
import pytest

from gradflow.errors import DepthCapError, ShapeError
from gradflow.graphio import normalized_adjacency
from gradflow.linalg import frobenius_norm
from gradflow.model import Model, ModelConfig, backward, forward
from gradflow.oracles import (
    RESIDUAL_DEPTH_CAP,
    BoundReport,
    PathStats,
    bound_reports_to_csv,
    expansion_bound,
    linear_input_gradient,
    linear_weight_gradient,
    residual_input_gradient,
    smoothing_bound,
)
from gradflow.similarity import node_similarity


def _triangle_plus_tail():
    """Connected, non-bipartite 5-node graph (triangle with a 2-edge tail)."""
    return normalized_adjacency(5, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4)])


def _instance(seed, num_layers=3, dim=4):
    rng = np.random.default_rng(seed)
    adj = _triangle_plus_tail()
    weights = [rng.normal(0.0, 0.6, size=(dim, dim))
               for _ in range(num_layers)]
    grad_last = rng.normal(size=(5, dim))
    return adj, weights, grad_last


def _dense_plain(layer, weights, adj_dense, grad_last):
    out = grad_last.copy()
    for i in range(len(weights) - 1, layer - 1, -1):
        out = out @ weights[i].T
    return np.linalg.matrix_power(adj_dense.T, len(weights) - layer) @ out


def _dense_residual(layer, weights, adj_dense, grad_last):
    num_layers = len(weights)
    total = np.zeros_like(grad_last)
    count = 0
    for p in range(num_layers - layer + 1):
        pre = np.linalg.matrix_power(adj_dense.T, p) @ grad_last
        for combo in itertools.combinations(range(layer, num_layers), p):
            term = pre
            for idx in reversed(combo):
                term = term @ weights[idx].T
            total = total + term
            count += 1
    return total, count


class TestLinearInputGradient:
    def test_matches_dense_oracle(self):
        for seed in range(5):
            adj, weights, g = _instance(seed)
            dense = adj.to_dense()
            for layer in range(len(weights) + 1):
                got = linear_input_gradient(layer, weights, adj, g)
                want = _dense_plain(layer, weights, dense, g)
                np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_trivial_layer_equals_grad_last(self):
        adj, weights, g = _instance(0)
        np.testing.assert_array_equal(
            linear_input_gradient(len(weights), weights, adj, g), g)

    def test_matches_model_backward_with_identity_activation(self):
        rng = np.random.default_rng(21)
        from gradflow.graphio import sbm_generate
        graph = sbm_generate(2, 5, 0.8, 0.3, 4, seed=2)
        config = ModelConfig(num_layers=3, hidden_dim=4,
                             activation="identity", seed=9)
        model = Model.init(config, 4, graph.num_classes)
        tape = forward(model, graph)
        grad_logits = rng.normal(size=tape.logits.shape)
        backward(model, graph, tape, grad_logits)
        g_last = tape.x_grads[-1]
        for layer in range(4):
            want = tape.x_grads[layer]
            got = linear_input_gradient(layer, model.layers,
                                        graph.norm_adj, g_last)
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_layer_out_of_range(self):
        adj, weights, g = _instance(0)
        with pytest.raises(ShapeError, match="layer"):
            linear_input_gradient(4, weights, adj, g)
        with pytest.raises(ShapeError, match="layer"):
            linear_input_gradient(-1, weights, adj, g)

    def test_non_square_weight_rejected(self):
        adj, weights, g = _instance(0)
        weights[1] = np.zeros((4, 3))
        with pytest.raises(ShapeError, match="weight 1"):
            linear_input_gradient(0, weights, adj, g)

    def test_adj_shape_mismatch(self):
        _, weights, g = _instance(0)
        small = normalized_adjacency(3, [(0, 1), (1, 2), (0, 2)])
        with pytest.raises(ShapeError, match="adj"):
            linear_input_gradient(0, weights, small, g)


class TestLinearWeightGradient:
    def test_matches_dense_oracle(self):
        for seed in range(5):
            adj, weights, g = _instance(seed)
            dense = adj.to_dense()
            rng = np.random.default_rng(100 + seed)
            for layer in range(len(weights)):
                x_layer = rng.normal(size=(5, 4))
                got = linear_weight_gradient(layer, weights, adj, x_layer, g)
                grad_in = _dense_plain(layer + 1, weights, dense, g)
                want = (dense @ x_layer).T @ grad_in
                np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_matches_model_backward_with_identity_activation(self):
        from gradflow.graphio import sbm_generate
        graph = sbm_generate(2, 5, 0.8, 0.3, 4, seed=2)
        config = ModelConfig(num_layers=3, hidden_dim=4,
                             activation="identity", seed=9)
        model = Model.init(config, 4, graph.num_classes)
        tape = forward(model, graph)
        grad_logits = np.random.default_rng(22).normal(
            size=tape.logits.shape)
        backward(model, graph, tape, grad_logits)
        for layer in range(3):
            got = linear_weight_gradient(layer, model.layers, graph.norm_adj,
                                         tape.xs[layer], tape.x_grads[-1])
            np.testing.assert_allclose(got, tape.w_grads[layer],
                                       rtol=0, atol=1e-12)

    def test_layer_upper_bound_excludes_num_layers(self):
        adj, weights, g = _instance(0)
        with pytest.raises(ShapeError, match="layer"):
            linear_weight_gradient(3, weights, adj, np.zeros((5, 4)), g)


class TestResidualInputGradient:
    def test_matches_dense_subset_sum(self):
        for seed in range(5):
            adj, weights, g = _instance(seed)
            dense = adj.to_dense()
            for layer in range(len(weights) + 1):
                got, stats = residual_input_gradient(
                    layer, weights, adj, g, return_stats=True)
                want, count = _dense_residual(layer, weights, dense, g)
                np.testing.assert_allclose(got, want, rtol=0, atol=1e-11)
                assert stats.monomials == count

    def test_monomial_count_is_two_to_the_k(self):
        adj, weights, g = _instance(7, num_layers=5)
        for layer in range(6):
            _, stats = residual_input_gradient(layer, weights, adj, g,
                                               return_stats=True)
            assert isinstance(stats, PathStats)
            assert stats.monomials == 2 ** (5 - layer)

    def test_matches_model_backward_with_identity_activation(self):
        from gradflow.graphio import sbm_generate
        graph = sbm_generate(2, 5, 0.8, 0.3, 4, seed=2)
        config = ModelConfig(num_layers=4, hidden_dim=4,
                             activation="identity", residual=True, seed=9)
        model = Model.init(config, 4, graph.num_classes)
        tape = forward(model, graph)
        grad_logits = np.random.default_rng(23).normal(
            size=tape.logits.shape)
        backward(model, graph, tape, grad_logits)
        for layer in range(5):
            got = residual_input_gradient(layer, model.layers,
                                          graph.norm_adj, tape.x_grads[-1])
            np.testing.assert_allclose(got, tape.x_grads[layer],
                                       rtol=0, atol=1e-11)

    def test_depth_cap_refused(self):
        dim = 2
        adj = _triangle_plus_tail()
        weights = [np.eye(dim)] * (RESIDUAL_DEPTH_CAP + 1)
        g = np.ones((5, dim))
        with pytest.raises(DepthCapError, match=r"2\^13"):
            residual_input_gradient(0, weights, adj, g)
        # At exactly the cap the expansion is allowed.
        _, stats = residual_input_gradient(1, weights, adj, g,
                                           return_stats=True)
        assert stats.monomials == 2 ** RESIDUAL_DEPTH_CAP

    def test_custom_cap_honored(self):
        adj, weights, g = _instance(0)
        with pytest.raises(DepthCapError):
            residual_input_gradient(0, weights, adj, g, depth_cap=2)


class TestSmoothingBound:
    def test_satisfied_on_random_instances(self):
        for seed in range(8):
            adj, weights, g = _instance(seed)
            for layer in range(len(weights) + 1):
                report = smoothing_bound(layer, weights, adj, g)
                assert report.satisfied, (seed, layer)
                assert report.lhs <= report.rhs * (1 + 1e-9)

    def test_zero_hop_reduces_to_centering_inequality(self):
        adj, weights, g = _instance(3)
        report = smoothing_bound(len(weights), weights, adj, g)
        # k = 0: rhs = ||G||_F, lhs = mu(G) <= ||G||_F always.
        assert report.rhs == pytest.approx(frobenius_norm(g), rel=1e-12)
        assert report.lhs == pytest.approx(node_similarity(g), rel=1e-12)

    def test_zero_hop_equality_for_centered_gradient(self):
        adj, weights, _ = _instance(4)
        rng = np.random.default_rng(5)
        g = rng.normal(size=(5, 4))
        g = g - g.mean(axis=0, keepdims=True)
        report = smoothing_bound(len(weights), weights, adj, g)
        assert report.lhs == pytest.approx(report.rhs, rel=1e-12)
        assert report.satisfied

    def test_no_envelope_fields(self):
        adj, weights, g = _instance(0)
        report = smoothing_bound(1, weights, adj, g)
        assert report.terms == ()
        assert report.envelope_rhs is None
        assert report.envelope_q is None

    def test_warns_on_bipartite_graph(self):
        adj = normalized_adjacency(4, [(0, 1), (1, 2), (2, 3)])
        weights = [np.eye(3)]
        g = np.ones((4, 3))
        with pytest.warns(UserWarning, match="bipartite"):
            smoothing_bound(0, weights, adj, g)

    def test_warns_on_disconnected_graph(self):
        adj = normalized_adjacency(5, [(0, 1), (1, 2), (0, 2)])
        weights = [np.eye(3)]
        g = np.ones((5, 3))
        with pytest.warns(UserWarning, match="disconnected"):
            smoothing_bound(0, weights, adj, g)


class TestExpansionBound:
    def test_satisfied_on_random_instances(self):
        for seed in range(8):
            adj, weights, g = _instance(seed)
            for layer in range(len(weights) + 1):
                report = expansion_bound(layer, weights, adj, g)
                assert report.satisfied, (seed, layer)

    def test_terms_structure(self):
        adj, weights, g = _instance(1)
        report = expansion_bound(0, weights, adj, g)
        k = len(weights)
        assert len(report.terms) == k
        # rhs = mu(G) + sum of the per-hop terms.
        assert report.rhs == pytest.approx(
            node_similarity(g) + math.fsum(report.terms), rel=1e-12)

    def test_envelope_is_diagnostic_only(self):
        adj, weights, g = _instance(2)
        report = expansion_bound(0, weights, adj, g)
        assert report.envelope_rhs is not None
        assert report.envelope_q is not None
        assert report.envelope_coeff is not None
        # satisfied is decided by the exact rhs, not the envelope.
        assert report.satisfied == (
            report.lhs <= report.rhs * (1 + 1e-9))

    def test_zero_hop_lhs_equals_mu_g(self):
        adj, weights, g = _instance(6)
        report = expansion_bound(len(weights), weights, adj, g)
        assert report.lhs == pytest.approx(node_similarity(g), rel=1e-12)
        assert report.rhs == pytest.approx(node_similarity(g), rel=1e-12)
        assert report.satisfied


class TestBoundReportsCsv:
    def test_layout_with_ragged_terms(self, tmp_path):
        reports = [
            BoundReport(layer=0, lhs=1.0, rhs=2.0, max_w_spectral=0.5,
                        satisfied=True, terms=(0.25, 0.125)),
            BoundReport(layer=1, lhs=0.5, rhs=1.0, max_w_spectral=0.5,
                        satisfied=False),
        ]
        path = tmp_path / "bounds.csv"
        bound_reports_to_csv(reports, path)
        lines = path.read_text().splitlines()
        assert lines[0] == \
            "layer,lhs,rhs,max_w_spectral,satisfied,term_p1,term_p2"
        assert lines[1] == "0,1.0,2.0,0.5,true,0.25,0.125"
        assert lines[2] == "1,0.5,1.0,0.5,false,,"
