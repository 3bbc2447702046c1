"""Unit tests for the dense-network building block.

Covers forward/backward closed forms, the finite-difference gradient
contract, optimizer behavior, determinism, and the text serialization
round trip.
"""

import numpy as np
import pytest

from latentevents.errors import ConfigError, TrainingDiverged
from latentevents.nn import (
    PROB_EPS,
    AdamState,
    DenseLayer,
    Network,
    init_network,
    load_network,
    optimizer_step,
    save_network,
    sigmoid,
)
from latentevents.verify import check_network_gradients


class TestSigmoid:
    def test_closed_form_values(self):
        np.testing.assert_allclose(sigmoid(np.array([0.0])), [0.5])
        np.testing.assert_allclose(
            sigmoid(np.array([2.0])), [0.8807970779778823], rtol=1e-12
        )

    def test_symmetry(self):
        z = np.linspace(-8, 8, 33)
        np.testing.assert_allclose(sigmoid(z) + sigmoid(-z), np.ones_like(z), rtol=1e-12)

    def test_extreme_inputs_stay_finite(self):
        out = sigmoid(np.array([-1e4, -50.0, 50.0, 1e4]))
        assert np.all(np.isfinite(out))
        assert np.all((out >= 0.0) & (out <= 1.0))


class TestInitNetwork:
    def test_shapes_and_zero_biases(self):
        net = init_network([4, 3, 1], seed=7)
        assert net.layers[0].weights.shape == (3, 4)
        assert net.layers[1].weights.shape == (1, 3)
        np.testing.assert_array_equal(net.layers[0].biases, np.zeros(3))
        np.testing.assert_array_equal(net.layers[1].biases, np.zeros(1))

    def test_same_seed_bit_identical(self):
        a = init_network([4, 3, 1], seed=7)
        b = init_network([4, 3, 1], seed=7)
        for la, lb in zip(a.layers, b.layers):
            np.testing.assert_array_equal(la.weights, lb.weights)
            np.testing.assert_array_equal(la.biases, lb.biases)

    def test_different_seed_differs(self):
        a = init_network([4, 3, 1], seed=7)
        b = init_network([4, 3, 1], seed=8)
        assert not np.array_equal(a.layers[0].weights, b.layers[0].weights)

    def test_fan_in_scaling(self):
        net = init_network([100, 2, 1], seed=0)
        limit = 1.0 / np.sqrt(100)
        assert np.all(np.abs(net.layers[0].weights) <= limit)

    def test_too_short_dims_rejected(self):
        with pytest.raises(ConfigError):
            init_network([4], seed=0)

    def test_output_dim_must_be_one(self):
        with pytest.raises(ConfigError):
            init_network([4, 3, 2], seed=0)

    def test_default_activations(self):
        net = init_network([4, 3, 3, 1], seed=0)
        assert [l.activation for l in net.layers] == ["relu", "relu", "sigmoid"]


class TestForward:
    def test_zero_network_outputs_half(self):
        net = Network([DenseLayer(np.zeros((1, 4)), np.zeros(1), "sigmoid")])
        probs, _ = net.forward(np.ones((5, 4)))
        np.testing.assert_allclose(probs, np.full(5, 0.5))

    def test_single_linear_layer_closed_form(self):
        net = Network([DenseLayer(np.array([[1.0, 0.0, 0.0, 0.0]]), np.zeros(1), "sigmoid")])
        probs, _ = net.forward(np.array([[2.0, 9.0, -3.0, 4.0]]))
        np.testing.assert_allclose(probs, [0.8807970779778823], rtol=1e-9)

    def test_outputs_in_open_interval(self):
        rng = np.random.default_rng(42)
        net = init_network([6, 5, 1], seed=3)
        probs, _ = net.forward(rng.normal(size=(64, 6)))
        assert np.all(probs >= PROB_EPS)
        assert np.all(probs <= 1.0 - PROB_EPS)

    def test_clamp_binds_at_huge_scores(self):
        net = Network([DenseLayer(np.array([[1000.0]]), np.zeros(1), "sigmoid")])
        hi, _ = net.forward(np.array([[1.0]]))
        lo, _ = net.forward(np.array([[-1.0]]))
        np.testing.assert_allclose(hi, [1.0 - PROB_EPS])
        np.testing.assert_allclose(lo, [PROB_EPS])

    def test_dimension_mismatch_raises(self):
        net = init_network([4, 3, 1], seed=0)
        with pytest.raises(ValueError):
            net.forward(np.ones((5, 3)))

    def test_final_layer_contract_enforced(self):
        with pytest.raises(ConfigError):
            Network([DenseLayer(np.zeros((1, 4)), np.zeros(1), "relu")])
        with pytest.raises(ConfigError):
            Network([DenseLayer(np.zeros((2, 4)), np.zeros(2), "sigmoid")])

    def test_incompatible_adjacent_layers(self):
        with pytest.raises(ConfigError):
            Network(
                [
                    DenseLayer(np.zeros((3, 4)), np.zeros(3), "relu"),
                    DenseLayer(np.zeros((1, 2)), np.zeros(1), "sigmoid"),
                ]
            )


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        net = init_network([4, 3, 1], seed=1)
        probs, cache = net.forward(np.random.default_rng(42).normal(size=(6, 4)))
        grads = net.backward(cache, np.zeros_like(probs))
        for dw, db in grads:
            np.testing.assert_array_equal(dw, np.zeros_like(dw))
            np.testing.assert_array_equal(db, np.zeros_like(db))

    def test_one_layer_closed_form(self):
        # d sigmoid(w.x)/dw = sigmoid'(w.x) * x
        w = np.array([[0.3, -0.7, 0.2]])
        x = np.array([[1.0, 2.0, -1.5]])
        net = Network([DenseLayer(w, np.zeros(1), "sigmoid")])
        probs, cache = net.forward(x)
        (dw, db), = net.backward(cache, np.ones(1))
        p = probs[0]
        np.testing.assert_allclose(dw, p * (1 - p) * x, rtol=1e-12)
        np.testing.assert_allclose(db, [p * (1 - p)], rtol=1e-12)

    def test_batch_grads_sum_over_rows(self):
        rng = np.random.default_rng(42)
        net = init_network([3, 2, 1], seed=5)
        x = rng.normal(size=(4, 3))
        upstream = rng.normal(size=4)
        _, cache = net.forward(x)
        grads_all = net.backward(cache, upstream)
        acc = [
            (np.zeros_like(dw), np.zeros_like(db)) for dw, db in grads_all
        ]
        for i in range(4):
            _, cache_i = net.forward(x[i : i + 1])
            grads_i = net.backward(cache_i, upstream[i : i + 1])
            for (aw, ab), (dw, db) in zip(acc, grads_i):
                aw += dw
                ab += db
        for (aw, ab), (dw, db) in zip(acc, grads_all):
            np.testing.assert_allclose(aw, dw, rtol=1e-10)
            np.testing.assert_allclose(ab, db, rtol=1e-10)

    def test_mismatched_cache_rejected(self):
        net = init_network([3, 2, 1], seed=0)
        with pytest.raises(RuntimeError):
            net.backward([None], np.ones(2))

    def test_finite_difference_sweep(self):
        # 100 random small instances, relative error < 1e-4 on every parameter.
        result = check_network_gradients(instances=100, seed=0)
        assert result.ok, result.line()


class TestOptimizerStep:
    def test_zero_gradients_fixed_point(self):
        net = init_network([4, 3, 1], seed=2)
        before = net.get_parameters()
        state = AdamState(net)
        grads = [(np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in net.layers]
        optimizer_step(net, grads, state)
        for (w0, b0), layer in zip(before, net.layers):
            np.testing.assert_array_equal(w0, layer.weights)
            np.testing.assert_array_equal(b0, layer.biases)
        assert state.step_count == 1

    def test_first_step_magnitude_is_learning_rate(self):
        # At t=1 with unit gradient the adaptive-moment update is
        # lr * g/|g| up to the eps term.
        net = Network([DenseLayer(np.array([[0.25]]), np.zeros(1), "sigmoid")])
        state = AdamState(net, learning_rate=1e-3)
        optimizer_step(net, [(np.array([[1.0]]), np.zeros(1))], state)
        np.testing.assert_allclose(net.layers[0].weights, [[0.25 - 1e-3]], atol=1e-8)

    def test_convex_scalar_convergence(self):
        # Minimize (p - 3)^2 over a single unconstrained parameter.
        net = Network([DenseLayer(np.array([[0.0]]), np.zeros(1), "sigmoid")])
        state = AdamState(net, learning_rate=0.01)
        for _ in range(5000):
            p = net.layers[0].weights[0, 0]
            grad = 2.0 * (p - 3.0)
            optimizer_step(net, [(np.array([[grad]]), np.zeros(1))], state)
            if abs(net.layers[0].weights[0, 0] - 3.0) < 1e-3:
                break
        assert abs(net.layers[0].weights[0, 0] - 3.0) < 1e-3

    def test_nonfinite_gradient_aborts(self):
        net = init_network([2, 1], seed=0)
        state = AdamState(net)
        bad = [(np.array([[np.nan, 0.0]]), np.zeros(1))]
        with pytest.raises(TrainingDiverged):
            optimizer_step(net, bad, state)

    def test_determinism_across_runs(self):
        def run():
            rng = np.random.default_rng(42)
            net = init_network([3, 2, 1], seed=9)
            state = AdamState(net)
            for _ in range(10):
                x = rng.normal(size=(8, 3))
                probs, cache = net.forward(x)
                grads = net.backward(cache, probs - 0.5)
                optimizer_step(net, grads, state)
            return net.get_parameters()

        for (w1, b1), (w2, b2) in zip(run(), run()):
            np.testing.assert_array_equal(w1, w2)
            np.testing.assert_array_equal(b1, b2)

    def test_invalid_config_rejected(self):
        net = init_network([2, 1], seed=0)
        with pytest.raises(ConfigError):
            AdamState(net, learning_rate=0.0)
        with pytest.raises(ConfigError):
            AdamState(net, beta1=1.0)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        net = init_network([5, 4, 3, 1], seed=11)
        # Make the parameters non-trivial before saving.
        state = AdamState(net)
        rng = np.random.default_rng(42)
        x = rng.normal(size=(16, 5))
        probs, cache = net.forward(x)
        optimizer_step(net, net.backward(cache, probs - 0.3), state)

        path = tmp_path / "net.txt"
        save_network(net, path)
        loaded = load_network(path)
        assert [l.activation for l in loaded.layers] == [
            l.activation for l in net.layers
        ]
        for la, lb in zip(net.layers, loaded.layers):
            np.testing.assert_array_equal(la.weights, lb.weights)
            np.testing.assert_array_equal(la.biases, lb.biases)

    def test_saved_file_is_stable(self, tmp_path):
        net = init_network([3, 2, 1], seed=4)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        save_network(net, p1)
        save_network(net, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not a network\n")
        with pytest.raises(ValueError):
            load_network(path)

    def test_parameter_snapshot_restore(self):
        net = init_network([3, 2, 1], seed=6)
        snap = net.get_parameters()
        net.layers[0].weights += 1.0
        net.set_parameters(snap)
        np.testing.assert_array_equal(net.layers[0].weights, snap[0][0])
        with pytest.raises(ValueError):
            net.set_parameters(snap[:1])
