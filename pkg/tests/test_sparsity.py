import numpy as np
import pytest

from cnnscope import (Conv, ConvWeights, Fc, FcWeights, MaxPool, NetSpec,
                      PreconditionError, Relu, SparsityReport, compare_sparsity,
                      layer_sparsity, preprocess, run_forward)
from cnnscope.fixtures import fixture_netspec, fixture_weights
from cnnscope.sparsity import LayerSparsity


def images_for(net, count, seed):
    rng = np.random.default_rng(seed)
    return [(f"i{k}", rng.integers(0, 256, net.input_shape, dtype=np.uint8))
            for k in range(count)]


class TestExtremes:
    def test_all_negative_conv_is_fully_sparse(self, rng):
        net = NetSpec((1, 5, 5), (Conv("c", 2, (3, 3)), Relu("r")))
        w = {"c": ConvWeights(rng.normal(0, 0.01, (2, 1, 3, 3)).astype(np.float32),
                              np.full(2, -1e4, np.float32))}
        report = layer_sparsity(net, w, images_for(net, 3, 0))
        assert report.sparsity("c") == 1.0

    def test_identity_conv_on_positive_image_is_dense(self):
        net = NetSpec((1, 4, 4), (Conv("c", 1, (1, 1)), Relu("r")))
        w = {"c": ConvWeights(np.ones((1, 1, 1, 1), np.float32),
                              np.zeros(1, np.float32))}
        imgs = [("a", np.full((1, 4, 4), 9, np.uint8))]
        report = layer_sparsity(net, w, imgs)
        assert report.sparsity("c") == 0.0


class TestRecountOracle:
    def test_counts_match_stored_traces(self):
        """Recount zeros by hand from full forward traces on every
        fixture net that starts with a conv."""
        for name in ("tiny_conv_pool", "strided_pair", "padded_conv",
                     "classifier", "rgb_small"):
            net = fixture_netspec(name)
            weights = fixture_weights(net)
            imgs = images_for(net, 4, seed=77)
            report = layer_sparsity(net, weights, imgs)
            plan = {}
            for layer in report.layers():
                idx = net.index_of(layer)
                source = layer
                if isinstance(net.layers[idx], (Conv, Fc)) and \
                        idx + 1 < len(net.layers) and \
                        isinstance(net.layers[idx + 1], Relu):
                    source = net.layers[idx + 1].name
                plan[layer] = source
            zeros = {l: 0 for l in report.layers()}
            totals = {l: 0 for l in report.layers()}
            for _, img in imgs:
                trace = run_forward(net, weights, preprocess(img, None))
                for layer, source in plan.items():
                    act = trace.activations[source]
                    zeros[layer] += int(np.count_nonzero(act == 0.0))
                    totals[layer] += act.size
            for row in report.rows:
                assert row.zeros == zeros[row.layer]
                assert row.total == totals[row.layer]

    def test_post_relu_equals_nonpositive_preactivation(self, rng):
        """Zeros after rectification == entries <= 0 before it."""
        net = fixture_netspec("strided_pair")
        weights = fixture_weights(net)
        imgs = images_for(net, 6, seed=13)
        report = layer_sparsity(net, weights, imgs, layers=["c1", "c2"])
        nonpos = {"c1": 0, "c2": 0}
        for _, img in imgs:
            trace = run_forward(net, weights, preprocess(img, None))
            for name in nonpos:
                nonpos[name] += int(np.count_nonzero(trace.activations[name] <= 0.0))
        for row in report.rows:
            assert row.zeros == nonpos[row.layer]


class TestPoolingBound:
    def test_pool_no_sparser_than_input_50_images(self):
        """With nonnegative inputs and non-overlapping windows a max pool
        can only report a zero when its whole window was zero, so its
        zero fraction never exceeds the layer below."""
        net = NetSpec((1, 8, 8), (
            Conv("c", 3, (3, 3), pad=1),
            Relu("r"),
            MaxPool("p", (2, 2), stride=2),
        ))
        weights = fixture_weights(net, seed=4)
        imgs = images_for(net, 50, seed=2025)
        report = layer_sparsity(net, weights, imgs, layers=["r", "p"],
                                post_relu=False)
        assert report.sparsity("p") <= report.sparsity("r")

    def test_pool_bound_per_image(self):
        net = NetSpec((1, 6, 6), (
            Conv("c", 2, (3, 3), pad=1),
            Relu("r"),
            MaxPool("p", (3, 3), stride=3),
        ))
        weights = fixture_weights(net, seed=8)
        for k, (_, img) in enumerate(images_for(net, 50, seed=31)):
            rep = layer_sparsity(net, weights, [("x", img)],
                                 layers=["r", "p"], post_relu=False)
            assert rep.sparsity("p") <= rep.sparsity("r"), f"image {k}"


class TestAggregation:
    def test_counts_add_exactly_across_splits(self):
        net = fixture_netspec("tiny_conv_pool")
        weights = fixture_weights(net)
        imgs = images_for(net, 8, seed=5)
        whole = layer_sparsity(net, weights, imgs)
        first = layer_sparsity(net, weights, imgs[:3])
        rest = layer_sparsity(net, weights, imgs[3:])
        for w, f, r in zip(whole.rows, first.rows, rest.rows):
            assert w.layer == f.layer == r.layer
            assert w.zeros == f.zeros + r.zeros
            assert w.total == f.total + r.total
        assert whole.n_images == first.n_images + rest.n_images

    def test_streaming_iterator_input(self):
        net = fixture_netspec("padded_conv")
        weights = fixture_weights(net)
        imgs = images_for(net, 4, seed=6)
        lazy = layer_sparsity(net, weights, iter(imgs))
        eager = layer_sparsity(net, weights, imgs)
        assert lazy == eager

    def test_threads_match_single(self):
        net = fixture_netspec("strided_pair")
        weights = fixture_weights(net)
        imgs = images_for(net, 10, seed=44)
        assert layer_sparsity(net, weights, imgs, threads=4) == \
               layer_sparsity(net, weights, imgs)

    def test_bare_arrays_accepted(self):
        net = fixture_netspec("tiny_conv_pool")
        weights = fixture_weights(net)
        arrays = [img for _, img in images_for(net, 3, seed=9)]
        report = layer_sparsity(net, weights, arrays)
        assert report.n_images == 3


class TestOptions:
    def test_default_plan_is_convs_and_pools(self):
        net = fixture_netspec("classifier")
        weights = fixture_weights(net)
        report = layer_sparsity(net, weights, images_for(net, 2, seed=1))
        assert report.layers() == ["c1", "p1"]

    def test_explicit_layer_list_and_order(self):
        net = fixture_netspec("tiny_conv_pool")
        weights = fixture_weights(net)
        report = layer_sparsity(net, weights, images_for(net, 2, seed=1),
                                layers=["p1", "c1"])
        assert report.layers() == ["p1", "c1"]

    def test_unknown_layer_rejected(self):
        net = fixture_netspec("tiny_conv_pool")
        weights = fixture_weights(net)
        with pytest.raises(Exception):
            layer_sparsity(net, weights, images_for(net, 1, seed=1),
                           layers=["nope"])

    def test_threshold_widens_count(self, rng):
        net = NetSpec((1, 6, 6), (Conv("c", 2, (3, 3)),))
        weights = fixture_weights(net, seed=3)
        imgs = images_for(net, 3, seed=3)
        tight = layer_sparsity(net, weights, imgs, post_relu=False)
        loose = layer_sparsity(net, weights, imgs, post_relu=False,
                               threshold=50.0)
        assert loose.sparsity("c") >= tight.sparsity("c")
        # recount the thresholded version by hand
        z = t = 0
        for _, img in imgs:
            act = run_forward(net, weights, preprocess(img, None)).activations["c"]
            z += int(np.count_nonzero(np.abs(act) <= 50.0))
            t += act.size
        assert loose.rows[0].zeros == z and loose.rows[0].total == t

    def test_pre_relu_differs_from_post(self):
        net = fixture_netspec("tiny_conv_pool")
        weights = fixture_weights(net)
        imgs = images_for(net, 3, seed=10)
        post = layer_sparsity(net, weights, imgs, layers=["c1"])
        pre = layer_sparsity(net, weights, imgs, layers=["c1"], post_relu=False)
        assert post.sparsity("c1") > 0
        assert pre.sparsity("c1") == 0.0  # float conv output almost never exactly 0

    def test_empty_image_set(self):
        net = fixture_netspec("tiny_conv_pool")
        weights = fixture_weights(net)
        with pytest.raises(PreconditionError, match="empty"):
            layer_sparsity(net, weights, [])


class TestReportType:
    def test_tsv_rows_shape(self):
        report = SparsityReport(
            rows=(LayerSparsity("c1", 5, 10), LayerSparsity("p1", 1, 4)),
            n_images=2)
        rows = report.to_tsv_rows()
        assert rows == [["c1", 5, 10, "0.500000"], ["p1", 1, 4, "0.250000"]]

    def test_sparsity_lookup(self):
        report = SparsityReport(rows=(LayerSparsity("a", 1, 2),), n_images=1)
        assert report.sparsity("a") == 0.5
        with pytest.raises(KeyError):
            report.sparsity("b")


class TestCompare:
    def test_identical_reports_have_no_gaps(self):
        r = SparsityReport(rows=(LayerSparsity("a", 1, 4),
                                 LayerSparsity("b", 2, 4)), n_images=1)
        rows = compare_sparsity(r, r)
        assert rows == [("a", 0.25, 0.25), ("b", 0.5, 0.5)]

    def test_disjoint_names_union_with_gaps(self):
        a = SparsityReport(rows=(LayerSparsity("a", 1, 4),), n_images=1)
        b = SparsityReport(rows=(LayerSparsity("b", 3, 4),), n_images=1)
        rows = compare_sparsity(a, b)
        assert rows == [("a", 0.25, None), ("b", None, 0.75)]

    def test_a_order_wins(self):
        a = SparsityReport(rows=(LayerSparsity("x", 0, 1),
                                 LayerSparsity("y", 1, 1)), n_images=1)
        b = SparsityReport(rows=(LayerSparsity("y", 1, 2),
                                 LayerSparsity("z", 1, 2)), n_images=1)
        names = [n for n, _, _ in compare_sparsity(a, b)]
        assert names == ["x", "y", "z"]
