"""Central finite-difference gradient checks shared by unit and acceptance tests."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from stgcn_sl import autograd as ag
from stgcn_sl.model import global_pool, spatial_graph_conv, stgcn_block

EPS = 1e-5
POINTS = 20
TOLERANCE = 1e-4


def numeric_grad(f: Callable[[list[np.ndarray]], float], inputs: list[np.ndarray], idx: int) -> np.ndarray:
    x = inputs[idx]
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        pos = it.multi_index
        orig = x[pos]
        x[pos] = orig + EPS
        hi = f(inputs)
        x[pos] = orig - EPS
        lo = f(inputs)
        x[pos] = orig
        grad[pos] = (hi - lo) / (2 * EPS)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / denom)


def check_op(
    op: Callable[..., ag.Tensor],
    shapes: Sequence[tuple[int, ...]],
    rng: np.random.Generator,
    points: int = POINTS,
    scalar: bool = False,
) -> float:
    """Worst relative error of ``op`` over ``points`` random draws in [-2, 2].

    Non-scalar outputs are projected onto a fixed random tensor so the
    checked loss is ``sum(op(*x) * R)``.
    """
    worst = 0.0
    for _ in range(points):
        inputs = [rng.uniform(-2, 2, size=s) for s in shapes]
        probe = None

        def loss_of(arrays, track=False):
            nonlocal probe
            ts = [ag.Tensor(a.copy(), requires_grad=track) for a in arrays]
            out = op(*ts)
            if scalar:
                return out, ts
            if probe is None:
                probe = np.random.default_rng(99).uniform(-1, 1, size=out.shape)
            return ag.sum_(ag.mul(out, ag.Tensor(probe))), ts

        loss, tensors = loss_of(inputs, track=True)
        ag.backward(loss)
        for i, t in enumerate(tensors):
            num = numeric_grad(lambda arrs: loss_of(arrs)[0].item(), inputs, i)
            worst = max(worst, relative_error(t.grad, num))
    return worst


def _block_op(x, gw, gb, tw, tb, rw):
    adj = _ADJ
    params = {"gcn.weight": gw, "gcn.bias": gb, "tcn.weight": tw, "tcn.bias": tb, "res.weight": rw}
    return stgcn_block(x, adj, params, stride=2)


def _dropout_op(x):
    return ag.dropout(x, 0.3, np.random.default_rng(5), training=True)


_labels = np.array([2, 0, 4])
_ADJ = np.random.default_rng(3).uniform(0, 1, size=(3, 4, 4))

# name -> (op, input shapes, scalar output)
OPS: dict[str, tuple[Callable[..., ag.Tensor], list[tuple[int, ...]], bool]] = {
    "add": (ag.add, [(3, 4), (4,)], False),
    "sub": (ag.sub, [(2, 3, 4), (3, 1)], False),
    "mul": (ag.mul, [(3, 4), (3, 4)], False),
    "neg": (lambda x: -x, [(5,)], False),
    "relu": (ag.relu, [(4, 5)], False),
    "dropout": (_dropout_op, [(4, 5)], False),
    "matmul": (ag.matmul, [(2, 3, 4), (4, 5)], False),
    "einsum": (lambda a, b: ag.einsum("nkvw,nwc->nkvc", a, b), [(2, 3, 4, 4), (2, 4, 3)], False),
    "reshape": (lambda x: ag.reshape(x, (6, 2)), [(3, 4)], False),
    "transpose": (lambda x: ag.transpose(x, (2, 0, 1)), [(2, 3, 4)], False),
    "sum": (lambda x: ag.sum_(x, axis=(0, 2), keepdims=True), [(2, 3, 4)], False),
    "mean": (lambda x: ag.mean(x, axis=1), [(2, 3, 4)], False),
    "softmax": (ag.softmax, [(3, 5)], False),
    "log_softmax": (ag.log_softmax, [(3, 5)], False),
    "cross_entropy": (lambda z: ag.cross_entropy(z, _labels), [(3, 5)], True),
    "temporal_conv": (lambda x, w, b: ag.temporal_conv(x, w, b, stride=1), [(2, 7, 3, 2), (3, 2, 4), (4,)], False),
    "temporal_conv_stride2": (lambda x, w: ag.temporal_conv(x, w, stride=2), [(1, 8, 2, 3), (5, 3, 2)], False),
    "spatial_graph_conv": (lambda x, w, b: spatial_graph_conv(x, _ADJ, w, b), [(2, 5, 4, 3), (3, 3, 2), (2,)], False),
    "spatial_graph_conv_per_sample": (
        lambda x, w: spatial_graph_conv(x, np.stack([_ADJ, _ADJ[::-1]]), w), [(2, 3, 4, 2), (3, 2, 2)], False
    ),
    "global_pool": (global_pool, [(2, 3, 4, 5)], False),
    "stgcn_block": (_block_op, [(1, 6, 4, 2), (3, 2, 3), (3,), (3, 3, 3), (3,), (1, 2, 3)], False),
}


def run_suite(seed: int = 0, points: int = POINTS) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    return {name: check_op(op, shapes, rng, points, scalar) for name, (op, shapes, scalar) in OPS.items()}
