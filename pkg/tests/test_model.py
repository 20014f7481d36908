from __future__ import annotations

import numpy as np
import pytest

from stgcn_sl import autograd as ag
from stgcn_sl.autograd import ShapeError, Tensor
from stgcn_sl.graph import (
    AdjacencyBuilder,
    GraphLayout,
    PartitionKind,
    PartitionStrategy,
    partition_adjacency,
    spatial_partition,
)
from stgcn_sl.model import STGCN, ModelConfig, global_pool, predict_topk, spatial_graph_conv, stgcn_block

from conftest import connected_graphs, random_layout
from oracles import graph_conv_loops


class TestSpatialGraphConv:
    def test_identity(self, rng):
        x = rng.normal(size=(4, 3, 5))
        out = spatial_graph_conv(Tensor(x), np.eye(3)[None], Tensor(np.eye(5)[None]))
        np.testing.assert_allclose(out.data, x, rtol=0, atol=1e-15)

    def test_two_node_loop_oracle(self):
        x = np.array([[[1.0, 2.0], [3.0, -1.0]], [[0.5, 0.0], [-2.0, 4.0]]])  # T=2, V=2, C=2
        adj = np.array([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [0.5, 0.0]]])
        w = np.array([[[1.0, 0.0, 2.0], [0.0, 1.0, -1.0]], [[0.5, 0.5, 0.0], [1.0, -1.0, 3.0]]])
        b = np.array([0.1, -0.2, 0.3])
        got = spatial_graph_conv(Tensor(x), adj, Tensor(w), Tensor(b)).data
        np.testing.assert_allclose(got, graph_conv_loops(x, adj, w, b), rtol=0, atol=1e-10)
        # one entry by hand: t=0, i=1, o=0
        hand = 0.1 + (3.0 * 1.0 + -1.0 * 0.0) + 0.5 * (1.0 * 0.5 + 2.0 * 1.0)
        assert got[0, 1, 0] == pytest.approx(hand, abs=1e-12)

    @pytest.mark.parametrize("kind", list(PartitionKind))
    def test_small_graphs_loop_oracle(self, rng, kind):
        strategy = PartitionStrategy(kind)
        for lay in connected_graphs(4):
            v = lay.num_nodes
            frame = rng.normal(size=(v, 2))
            assignment = spatial_partition(lay, frame) if kind is PartitionKind.SPATIAL else None
            adj = partition_adjacency(lay, strategy, assignment)
            x = rng.normal(size=(3, v, 2))
            w = rng.normal(size=(adj.shape[0], 2, 3))
            got = spatial_graph_conv(Tensor(x), adj, Tensor(w)).data
            np.testing.assert_allclose(got, graph_conv_loops(x, adj, w), rtol=0, atol=1e-10)

    def test_per_sample_adjacency(self, rng):
        x = rng.normal(size=(2, 3, 4, 2))
        adj = rng.uniform(size=(2, 3, 4, 4))
        w = rng.normal(size=(3, 2, 5))
        got = spatial_graph_conv(Tensor(x), adj, Tensor(w)).data
        for n in range(2):
            np.testing.assert_allclose(got[n], graph_conv_loops(x[n], adj[n], w), rtol=0, atol=1e-10)

    def test_partition_mismatch(self, rng):
        with pytest.raises(ShapeError):
            spatial_graph_conv(Tensor(rng.normal(size=(1, 2, 3, 2))), np.ones((3, 3, 3)), Tensor(np.ones((1, 2, 2))))


class TestBlock:
    def test_zero_weights_identity_residual(self, rng):
        x = rng.normal(size=(2, 5, 3, 4))
        params = {
            "gcn.weight": Tensor(np.zeros((1, 4, 4))),
            "gcn.bias": Tensor(np.zeros(4)),
            "tcn.weight": Tensor(np.zeros((3, 4, 4))),
            "tcn.bias": Tensor(np.zeros(4)),
        }
        out = stgcn_block(Tensor(x), np.eye(3)[None], params)
        np.testing.assert_array_equal(out.data, np.maximum(x, 0))

    def test_block_shape(self, rng):
        cfg = ModelConfig(num_classes=4, channels=[64], strides=[1])
        model = STGCN(cfg)
        x = Tensor(rng.normal(size=(1, 63, 27, 3)))
        adj = model.adjacency(rng.normal(size=(1, 3, 63, 27)))
        assert stgcn_block(x, adj, model.block_params(0)).shape == (1, 63, 27, 64)

    @pytest.mark.parametrize("kernel", [3, 9])
    @pytest.mark.parametrize("stride", [1, 2])
    def test_shape_algebra(self, rng, kernel, stride):
        cfg = ModelConfig(num_classes=3, channels=[4, 6], strides=[stride, stride], temporal_kernel=kernel)
        model = STGCN(cfg)
        t = 19
        data = rng.normal(size=(1, 3, t, 27))
        x = Tensor(data.transpose(0, 2, 3, 1))
        adj = model.adjacency(data)
        for i in range(2):
            x = stgcn_block(x, adj, model.block_params(i), stride)
        assert x.shape[1] == -(-t // stride**2)


class TestModel:
    def test_logit_shape(self, rng):
        model = STGCN(ModelConfig(num_classes=4, channels=[8], strides=[1]))
        assert model.forward(rng.normal(size=(1, 3, 12, 27))).shape == (1, 4)

    def test_default_forward_finite_and_deterministic(self, rng):
        data = rng.normal(size=(2, 3, 20, 27))
        cfg = ModelConfig(num_classes=5)
        a = STGCN(cfg, seed=3).forward(data).data
        b = STGCN(cfg, seed=3).forward(data).data
        assert np.isfinite(a).all()
        assert a.tobytes() == b.tobytes()

    def test_pool_constant(self):
        x = Tensor(np.full((2, 4, 3, 5), 1.75))
        np.testing.assert_array_equal(global_pool(x).data, np.full((2, 5), 1.75))

    def test_permutation_invariance(self, rng):
        layout = random_layout(rng, 9, extra=4)
        cfg = ModelConfig(num_classes=3, channels=[6, 8], strides=[1, 2], temporal_kernel=3)
        model = STGCN(cfg, seed=1, layout=layout)
        data = rng.normal(size=(2, 3, 10, 9))
        model.fit_input_stats(data)
        perm = rng.permutation(9)
        moved = STGCN(cfg, seed=7, layout=layout.permuted(perm))
        state = model.state_dict()
        state["input.mean"] = state["input.mean"][:, perm]
        moved.load_state_dict(state)
        a = model.forward(data).data
        b = moved.forward(data[..., perm]).data
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-8)
        # the per-sample adjacency relabels consistently
        np.testing.assert_array_equal(model.adjacency(data)[:, :, perm][:, :, :, perm], moved.adjacency(data[..., perm]))

    def test_state_dict_round_trip(self, rng):
        cfg = ModelConfig(num_classes=3, channels=[4], strides=[1], temporal_kernel=3)
        a, b = STGCN(cfg, seed=1), STGCN(cfg, seed=2)
        a.fit_input_stats(rng.normal(size=(3, 3, 5, 27)))
        b.load_state_dict(a.state_dict())
        data = rng.normal(size=(1, 3, 5, 27))
        np.testing.assert_array_equal(a.forward(data).data, b.forward(data).data)

    def test_load_state_dict_rejects_mismatch(self):
        cfg = ModelConfig(num_classes=3, channels=[4], strides=[1], temporal_kernel=3)
        state = STGCN(cfg).state_dict()
        state["fc.bias"] = np.zeros(5)
        with pytest.raises(ShapeError):
            STGCN(cfg).load_state_dict(state)
        del state["fc.bias"]
        with pytest.raises(ShapeError):
            STGCN(cfg).load_state_dict(state)

    def test_batch_checks(self, rng):
        model = STGCN(ModelConfig(num_classes=2, channels=[4], strides=[1]))
        with pytest.raises(ShapeError):
            model.forward(rng.normal(size=(1, 3, 12, 26)))
        with pytest.raises(ShapeError):
            model.forward(rng.normal(size=(1, 3, 5, 27)))

    def test_model_gradient(self, rng):
        cfg = ModelConfig(num_classes=3, channels=[3, 4], strides=[1, 2], temporal_kernel=3)
        lay = random_layout(rng, 5)
        model = STGCN(cfg, seed=2, layout=lay)
        data = rng.normal(size=(2, 3, 6, 5))
        labels = [0, 2]
        loss = ag.cross_entropy(model.forward(data), labels)
        ag.backward(loss)
        for name in ("block0.gcn.weight", "block1.res.weight", "fc.weight"):
            p = model.params[name]
            idx = tuple(rng.integers(0, s) for s in p.shape)
            orig = p.data[idx]
            p.data[idx] = orig + 1e-6
            hi = ag.cross_entropy(model.forward(data), labels).item()
            p.data[idx] = orig - 1e-6
            lo = ag.cross_entropy(model.forward(data), labels).item()
            p.data[idx] = orig
            assert p.grad[idx] == pytest.approx((hi - lo) / 2e-6, rel=1e-4, abs=1e-9)

    def test_zero_confidence_ignores_channel(self, rng):
        cfg = ModelConfig(num_classes=2, channels=[4], strides=[1], temporal_kernel=3, zero_confidence=True)
        model = STGCN(cfg)
        data = rng.normal(size=(1, 3, 5, 27))
        other = data.copy()
        other[:, 2] = rng.normal(size=(1, 5, 27))
        np.testing.assert_array_equal(model.forward(data).data, model.forward(other).data)

    def test_config_json_round_trip(self, tmp_path):
        cfg = ModelConfig(num_classes=7, channels=[8, 16], strides=[1, 2], dropout=0.1)
        path = tmp_path / "m.json"
        path.write_text(cfg.dumps())
        assert ModelConfig.load(path) == cfg
        with pytest.raises(ValueError):
            ModelConfig.from_dict({**cfg.to_dict(), "bogus": 1})


class TestTopK:
    def test_argmax(self):
        np.testing.assert_array_equal(predict_topk(np.array([[0.1, 0.9, 0.5]]), 1), [[1]])

    def test_full_ranking(self, rng):
        z = rng.normal(size=(3, 6))
        top = predict_topk(z, 6)
        for row, order in zip(z, top):
            assert sorted(order) == list(range(6))
            assert all(row[a] >= row[b] for a, b in zip(order, order[1:]))

    def test_sort_oracle(self, rng):
        z = rng.normal(size=(10, 20))
        for k in (1, 5, 20):
            expected = [sorted(range(20), key=lambda c: (-row[c], c))[:k] for row in z]
            np.testing.assert_array_equal(predict_topk(z, k), expected)

    def test_ties_lower_index(self):
        np.testing.assert_array_equal(predict_topk(np.array([[1.0, 3.0, 3.0, 1.0]]), 3), [[1, 2, 0]])

    def test_top5_contains_top1(self, rng):
        z = rng.normal(size=(50, 8))
        assert (predict_topk(z, 5) == predict_topk(z, 1)).any(axis=1).all()

    @pytest.mark.parametrize("k", [0, 4])
    def test_bad_k(self, k):
        with pytest.raises(ValueError):
            predict_topk(np.zeros((1, 3)), k)


def test_adjacency_builder_uses_mean_pose(rng):
    cfg = ModelConfig(num_classes=2, channels=[4], strides=[1])
    model = STGCN(cfg)
    data = rng.normal(size=(2, 3, 7, 27))
    expected = AdjacencyBuilder(model.layout, model.strategy)(data[:, :2].mean(axis=2).transpose(0, 2, 1))
    np.testing.assert_array_equal(model.adjacency(data), expected)
