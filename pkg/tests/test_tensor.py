import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vids.errors import GraphError, VidsError
from vids.tensor import (Conv1d, GraphSpec, Linear, Lstm, OptimizerConfig,
                         ParamStore, ReLU, Softmax, Tensor, backward, forward,
                         grad, init_params, no_grad, optimizer_step)
from vids.tensor import core, nn

from conftest import finite_difference, relative_error


class TestKernels:
    def test_identity_convolution(self):
        x = Tensor(np.array([[[1.0, 2.0, 3.0, 4.0]]]))
        w = Tensor(np.ones((1, 1, 1)))
        b = Tensor(np.zeros(1))
        out = nn.conv1d(x, w, b, stride=1, padding=0)
        np.testing.assert_array_equal(out.data, [[[1, 2, 3, 4]]])

    def test_relu_definition(self):
        out = nn.relu(Tensor(np.array([-1.0, 0.0, 2.0])))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_softmax_symmetry(self):
        out = nn.softmax(Tensor(np.array([[0.0, 0.0]])))
        np.testing.assert_allclose(out.data, [[0.5, 0.5]])

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_softmax_rows_sum_to_one(self, seed):
        x = np.random.default_rng(seed).normal(scale=5.0, size=(4, 9))
        out = nn.softmax(Tensor(x), axis=1)
        assert (out.data >= 0).all()
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)

    def test_lstm_length_one_equals_cell(self, rng):
        c_in, hidden = 3, 5
        x = Tensor(rng.normal(size=(2, c_in, 1)))
        params = [Tensor(rng.normal(size=s)) for s in
                  ((4 * hidden, c_in), (4 * hidden, hidden),
                   (4 * hidden,), (4 * hidden,))]
        seq = nn.lstm(x, *params)
        h0 = Tensor(np.zeros((2, hidden)))
        c0 = Tensor(np.zeros((2, hidden)))
        cell_h, _ = nn.lstm_cell(x[:, :, 0], h0, c0, *params)
        np.testing.assert_array_equal(seq.data, cell_h.data)

    def test_conv_stride_padding_shapes(self, rng):
        x = Tensor(rng.normal(size=(2, 3, 10)))
        w = Tensor(rng.normal(size=(4, 3, 3)))
        b = Tensor(np.zeros(4))
        assert nn.conv1d(x, w, b, stride=2, padding=1).shape == (2, 4, 5)
        assert nn.conv1d(x, w, b, stride=1, padding=0).shape == (2, 4, 8)


class TestAutodiff:
    def test_linear_loss_gradient_is_input(self, rng):
        x = rng.normal(size=(1, 6))
        w = Tensor(rng.normal(size=(1, 6)), requires_grad=True)
        loss = core.tsum(core.mul(w, Tensor(x)))
        g = grad(loss, w)
        np.testing.assert_allclose(g.data, x)

    def test_constant_loss_zero_gradient(self, rng):
        w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        loss = core.tsum(core.mul(w, 0.0))
        g = grad(loss, w)
        np.testing.assert_array_equal(g.data, np.zeros((3, 3)))

    def test_micro_net_matches_finite_differences(self, rng):
        """conv + relu + linear micro-net, float64, rel err <= 1e-4."""
        x = Tensor(rng.normal(size=(2, 3, 6)))
        w1 = Tensor(rng.normal(size=(4, 3, 3)), requires_grad=True)
        b1 = Tensor(rng.normal(size=(4,)), requires_grad=True)
        w2 = Tensor(rng.normal(size=(2, 4 * 6)), requires_grad=True)
        b2 = Tensor(rng.normal(size=(2,)), requires_grad=True)
        params = [w1, b1, w2, b2]

        def value():
            h = nn.relu(nn.conv1d(x, w1, b1, 1, 1))
            h = core.reshape(h, (2, 4 * 6))
            out = nn.linear(h, w2, b2)
            return core.tsum(core.mul(out, out)).item()

        def graph_value():
            h = nn.relu(nn.conv1d(x, w1, b1, 1, 1))
            h = core.reshape(h, (2, 4 * 6))
            out = nn.linear(h, w2, b2)
            return core.tsum(core.mul(out, out))

        analytic = grad(graph_value(), params)
        numeric = finite_difference(value, params)
        for a, n in zip(analytic, numeric):
            assert relative_error(a.data, n) <= 1e-4

    def test_lstm_gradients_match_finite_differences(self, rng):
        c_in, hidden = 2, 3
        x = Tensor(rng.normal(size=(2, c_in, 4)))
        params = [Tensor(rng.normal(size=s) * 0.5, requires_grad=True)
                  for s in ((4 * hidden, c_in), (4 * hidden, hidden),
                            (4 * hidden,), (4 * hidden,))]

        def graph_value():
            h = nn.lstm(x, *params)
            return core.tsum(core.mul(h, h))

        analytic = grad(graph_value(), params)
        numeric = finite_difference(lambda: graph_value().item(), params)
        for a, n in zip(analytic, numeric):
            assert relative_error(a.data, n) <= 1e-4

    def test_double_backward_through_input_gradient(self, rng):
        """Parameter gradient of an input-gradient norm matches FD."""
        x = Tensor(rng.normal(size=(2, 2, 4)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3,)), requires_grad=True)

        def penalty_graph():
            out = nn.conv1d(x, w, b, 1, 1)
            s = core.tsum(core.mul(out, out))
            g = grad(s, x, create_graph=True)
            norm = core.sqrt(core.tsum(core.mul(g, g)))
            dev = core.sub(norm, 1.0)
            return core.mul(dev, dev)

        analytic = grad(penalty_graph(), [w, b])
        numeric = finite_difference(lambda: penalty_graph().item(), [w, b])
        for a, n in zip(analytic, numeric):
            assert relative_error(a.data, n) <= 1e-4

    def test_unused_input_gets_zero_gradient(self, rng):
        a = Tensor(rng.normal(size=(2,)), requires_grad=True)
        b = Tensor(rng.normal(size=(2,)), requires_grad=True)
        g = grad(core.tsum(core.mul(a, a)), b)
        np.testing.assert_array_equal(g.data, np.zeros(2))

    def test_grad_of_unrecorded_output_fails(self):
        with pytest.raises(ValueError):
            grad(Tensor(np.ones(2)), Tensor(np.ones(2), requires_grad=True))

    def test_no_grad_suppresses_recording(self, rng):
        w = Tensor(rng.normal(size=(2,)), requires_grad=True)
        with no_grad():
            out = core.mul(w, 2.0)
        assert not out.requires_grad


class TestGraph:
    def _graph(self):
        return GraphSpec((
            Conv1d("c0", 2, 4, 3, 1, 1), ReLU(),
            Lstm("l0", 4, 5), Linear("fc", 5, 3), Softmax(),
        ), (2, 6))

    def test_validate_and_output_shape(self):
        assert self._graph().validate() == (3,)

    def test_forward_shapes_and_sites(self, rng):
        g = self._graph()
        params = init_params(g, seed=0)
        collect = []
        out = forward(g, params, rng.normal(size=(3, 2, 6)).astype(np.float32),
                      collect=collect)
        assert out.shape == (3, 3)
        assert [s for s, _ in collect] == ["in", "0:conv1d", "1:relu",
                                           "2:lstm", "3:linear", "4:softmax"]

    def test_shape_mismatch_names_layer(self, rng):
        g = self._graph()
        params = init_params(g, seed=0)
        with pytest.raises(GraphError, match="conv1d 'c0'"):
            forward(g, params, rng.normal(size=(3, 5, 6)))

    def test_degenerate_conv_rejected(self):
        g = GraphSpec((Conv1d("c", 2, 2, 9, 1, 0),), (2, 6))
        with pytest.raises(GraphError, match="degenerate"):
            g.validate()

    def test_forward_deterministic(self, rng):
        g = self._graph()
        params = init_params(g, seed=3)
        x = rng.normal(size=(2, 2, 6)).astype(np.float32)
        out1 = forward(g, params, x).data
        out2 = forward(g, params, x).data
        np.testing.assert_array_equal(out1, out2)

    def test_init_deterministic_per_seed(self):
        g = self._graph()
        p1 = init_params(g, seed=9)
        p2 = init_params(g, seed=9)
        p3 = init_params(g, seed=10)
        for name in p1.tensors:
            np.testing.assert_array_equal(p1[name].data, p2[name].data)
        assert any(not np.array_equal(p1[n].data, p3[n].data)
                   for n in p1.tensors)

    def test_roundtrip_serialization(self):
        g = self._graph()
        g2 = GraphSpec.from_dict(g.to_dict())
        assert g2 == g

    def test_backward_returns_all_parameter_grads(self, rng):
        g = self._graph()
        params = init_params(g, seed=0, dtype=np.float64)
        out = forward(g, params, rng.normal(size=(2, 2, 6)))
        loss = core.tsum(core.mul(out, out))
        grads = backward(loss, params)
        assert set(grads) == set(params.tensors)


class TestOptimizers:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        for kind in ("rmsprop", "adam"):
            store = ParamStore({"w": Tensor(np.array([1.0, -2.0]),
                                            requires_grad=True)})
            cfg = OptimizerConfig(kind=kind, learning_rate=0.1)
            optimizer_step(store, {"w": np.zeros(2)}, cfg)
            np.testing.assert_array_equal(store["w"].data, [1.0, -2.0])

    def test_sgd_definition(self):
        store = ParamStore({"w": Tensor(np.array([1.0]), requires_grad=True)})
        cfg = OptimizerConfig(kind="sgd", learning_rate=0.1)
        optimizer_step(store, {"w": np.array([1.0])}, cfg)
        np.testing.assert_allclose(store["w"].data, [0.9])

    def test_adam_converges_on_quadratic(self):
        # minimize 0.5 * (w - 3)^2, minimizer w = 3
        store = ParamStore({"w": Tensor(np.array([0.0]), requires_grad=True)})
        cfg = OptimizerConfig(kind="adam", learning_rate=0.1)
        for _ in range(200):
            g = store["w"].data - 3.0
            optimizer_step(store, {"w": g}, cfg)
        assert abs(store["w"].data[0] - 3.0) < 1e-3

    def test_missing_gradient_fails(self):
        store = ParamStore({"w": Tensor(np.array([1.0]), requires_grad=True)})
        with pytest.raises(VidsError, match="missing gradients"):
            optimizer_step(store, {}, OptimizerConfig(kind="sgd",
                                                      learning_rate=0.1))

    def test_invalid_learning_rate(self):
        with pytest.raises(VidsError):
            OptimizerConfig(kind="sgd", learning_rate=0.0)
