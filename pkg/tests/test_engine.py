import numpy as np
import pytest

from cnnscope import (Conv, ConvWeights, EngineError, Fc, FcWeights, MaxPool,
                      NetSpec, Relu, Softmax, preprocess, run_forward,
                      shape_trace, softmax, top_k_predictions, validate_weights)
from cnnscope.fixtures import FIXTURE_NAMES, fixture_netspec, fixture_weights
from reference import naive_conv_forward, naive_maxpool, rel_err


class TestPreprocess:
    def test_image_equals_mean_gives_zero(self, rng):
        img = rng.integers(0, 256, (3, 4, 4), dtype=np.uint8)
        out = preprocess(img, img.astype(np.float32))
        assert not out.any()

    def test_per_channel_mean_broadcast(self):
        img = np.full((3, 2, 2), 150, np.uint8)
        out = preprocess(img, np.array([104.0, 117.0, 124.0], np.float32))
        assert np.allclose(out[0], 46.0)
        assert np.allclose(out[1], 33.0)
        assert np.allclose(out[2], 26.0)

    def test_full_mean_elementwise(self, rng):
        img = rng.integers(0, 256, (3, 5, 5), dtype=np.uint8)
        mean = rng.normal(100, 20, (3, 5, 5)).astype(np.float32)
        out = preprocess(img, mean)
        want = img.astype(np.float64) - mean.astype(np.float64)
        assert rel_err(out, want) < 1e-6

    def test_no_mean_is_cast_only(self, rng):
        img = rng.integers(0, 256, (3, 3, 3), dtype=np.uint8)
        out = preprocess(img)
        assert out.dtype == np.float32
        assert np.array_equal(out, img.astype(np.float32))

    def test_shape_mismatch(self):
        with pytest.raises(EngineError):
            preprocess(np.zeros((3, 4, 4), np.uint8),
                       np.zeros((3, 5, 5), np.float32))


class TestRunForward:
    def test_single_relu_net(self):
        net = NetSpec((1, 1, 2), (Relu("r"),))
        trace = run_forward(net, {}, np.array([[[-1.0, 2.0]]], np.float32))
        assert np.array_equal(trace.activations["r"], [[[0.0, 2.0]]])

    def test_identity_conv_then_pool(self):
        net = NetSpec((1, 2, 2), (Conv("c", 1, (1, 1)),
                                  MaxPool("p", (2, 2), stride=2)))
        weights = {"c": ConvWeights(np.ones((1, 1, 1, 1), np.float32),
                                    np.zeros(1, np.float32))}
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]], np.float32)
        trace = run_forward(net, weights, x)
        assert trace.final.reshape(-1).tolist() == [4.0]
        sw = trace.switches["p"]
        assert (sw.rows[0, 0, 0], sw.cols[0, 0, 0]) == (1, 1)

    @pytest.mark.parametrize("name", FIXTURE_NAMES)
    def test_composition_oracle(self, name):
        """The trace must equal folding the naive reference ops over the
        layer list, one layer at a time."""
        net = fixture_netspec(name)
        weights = fixture_weights(net)
        rng = np.random.default_rng(5150)
        x = rng.normal(0, 1, net.input_shape).astype(np.float32)
        trace = run_forward(net, weights, x)

        cur = x.astype(np.float64)
        for layer in net.layers:
            if isinstance(layer, Conv):
                w = weights[layer.name]
                cur = naive_conv_forward(cur, w.kernels, w.bias,
                                         layer.stride, layer.pad)
            elif isinstance(layer, Relu):
                cur = np.maximum(cur, 0.0)
            elif isinstance(layer, MaxPool):
                cur, _, _ = naive_maxpool(cur, layer.window, layer.stride)
            elif isinstance(layer, Fc):
                w = weights[layer.name]
                cur = w.weights.astype(np.float64) @ cur.reshape(-1) \
                    + w.bias.astype(np.float64)
            elif isinstance(layer, Softmax):
                e = np.exp(cur - cur.max())
                cur = e / e.sum()
            assert rel_err(trace.activations[layer.name], cur) < 1e-4, layer.name

    @pytest.mark.parametrize("name", FIXTURE_NAMES)
    def test_trace_shapes_match_shape_trace(self, name):
        net = fixture_netspec(name)
        weights = fixture_weights(net)
        x = np.zeros(net.input_shape, np.float32)
        trace = run_forward(net, weights, x)
        for layer_name, shape in shape_trace(net):
            assert trace.activations[layer_name].shape == shape

    def test_post_relu_nonnegative(self):
        net = fixture_netspec("strided_pair")
        weights = fixture_weights(net)
        rng = np.random.default_rng(77)
        x = rng.normal(0, 5, net.input_shape).astype(np.float32)
        trace = run_forward(net, weights, x)
        for layer in net.layers:
            if isinstance(layer, Relu):
                assert trace.activations[layer.name].min() >= 0

    def test_bitwise_deterministic(self):
        net = fixture_netspec("classifier")
        weights = fixture_weights(net)
        rng = np.random.default_rng(3)
        x = rng.normal(0, 1, net.input_shape).astype(np.float32)
        a = run_forward(net, weights, x)
        b = run_forward(net, weights, x)
        for name in a.activations:
            assert np.array_equal(a.activations[name], b.activations[name])

    def test_keep_restricts_retention(self):
        net = fixture_netspec("tiny_conv_pool")
        weights = fixture_weights(net)
        x = np.zeros(net.input_shape, np.float32)
        trace = run_forward(net, weights, x, keep={"r1"})
        assert set(trace.activations) == {"r1"}
        assert "p1" in trace.switches  # switches always recorded

    def test_input_shape_mismatch_names_problem(self):
        net = fixture_netspec("tiny_conv_pool")
        weights = fixture_weights(net)
        with pytest.raises(EngineError):
            run_forward(net, weights, np.zeros((1, 5, 5), np.float32))


class TestValidateWeights:
    def test_missing_layer_named(self):
        net = fixture_netspec("classifier")
        weights = fixture_weights(net)
        del weights["fc1"]
        with pytest.raises(EngineError, match="fc1"):
            validate_weights(net, weights)

    def test_wrong_kernel_shape_named(self):
        net = fixture_netspec("tiny_conv_pool")
        weights = fixture_weights(net)
        weights["c1"] = ConvWeights(np.zeros((4, 1, 5, 5), np.float32),
                                    np.zeros(4, np.float32))
        with pytest.raises(EngineError, match="c1"):
            validate_weights(net, weights)

    def test_extra_entry_rejected(self):
        net = fixture_netspec("tiny_conv_pool")
        weights = fixture_weights(net)
        weights["ghost"] = weights["c1"]
        with pytest.raises(EngineError, match="ghost"):
            validate_weights(net, weights)


class TestSoftmaxAndTopK:
    def test_uniform_logits(self):
        probs = softmax(np.zeros(3, np.float32))
        assert np.allclose(probs, 1.0 / 3.0, atol=1e-7)

    def test_dominant_logit(self):
        probs = softmax(np.array([10.0, 0.0, 0.0], np.float32))
        assert probs[0] > 0.99

    def test_sum_and_shift_invariance(self, rng):
        z = rng.normal(0, 5, 50).astype(np.float32)
        p = softmax(z)
        assert abs(float(p.sum()) - 1.0) < 1e-6
        q = softmax(z + 123.0)
        assert np.abs(p - q).max() < 1e-6

    def _trace_with_final(self, probs):
        net = NetSpec((1, 1, len(probs)), (Relu("r"),))
        trace = run_forward(net, {}, np.asarray(probs, np.float32)[None, None])
        return trace

    def test_top_k_order_and_values(self):
        trace = self._trace_with_final([0.1, 0.5, 0.4])
        got = top_k_predictions(trace, 2, ["a", "b", "c"])
        assert got == [("b", pytest.approx(0.5)), ("c", pytest.approx(0.4))]

    def test_full_distribution_sums_to_one(self, rng):
        net = fixture_netspec("classifier")
        weights = fixture_weights(net)
        x = rng.normal(0, 1, net.input_shape).astype(np.float32)
        trace = run_forward(net, weights, x)
        got = top_k_predictions(trace, 4, ["w", "x", "y", "z"])
        assert abs(sum(p for _, p in got) - 1.0) < 1e-6

    def test_k_out_of_range(self):
        trace = self._trace_with_final([0.5, 0.5])
        with pytest.raises(EngineError):
            top_k_predictions(trace, 3, ["a", "b"])

    def test_label_count_mismatch(self):
        trace = self._trace_with_final([0.5, 0.5])
        with pytest.raises(EngineError):
            top_k_predictions(trace, 1, ["only"])
