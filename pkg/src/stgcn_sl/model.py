"""ST-GCN blocks and the sign classifier built from them."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import autograd as ag
from .autograd import ShapeError, Tensor
from .graph import AdjacencyBuilder, GraphLayout, PartitionKind, PartitionStrategy, build_layout


@dataclass
class ModelConfig:
    num_classes: int
    layout: str | dict = "sign-27"
    partition: str = PartitionKind.SPATIAL.value
    channels: list[int] = field(default_factory=lambda: [64, 64, 128])
    strides: list[int] = field(default_factory=lambda: [1, 1, 2])
    temporal_kernel: int = 9
    in_channels: int = 3
    dropout: float = 0.0
    zero_confidence: bool = False
    normalize_input: bool = True
    scaled_weights: bool = True

    def __post_init__(self) -> None:
        if not self.channels:
            raise ValueError("channel plan must not be empty")
        if len(self.strides) != len(self.channels):
            raise ValueError("need one temporal stride per block")
        if any(s < 1 for s in self.strides):
            raise ValueError("strides must be positive")
        if self.temporal_kernel < 1 or self.temporal_kernel % 2 == 0:
            raise ValueError(f"temporal kernel must be odd and positive, got {self.temporal_kernel}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        PartitionKind(self.partition)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**{k: (list(v) if isinstance(v, tuple) else v) for k, v in doc.items()})

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ModelConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "ModelConfig":
        return cls.loads(Path(path).read_text())


def spatial_graph_conv(x: Tensor, adj: np.ndarray | Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Per-partition graph convolution ``sum_k (A_k X_t) W_k`` for every frame.

    ``x`` is ``(N, T, V, C_in)`` (or ``(T, V, C_in)``), ``adj`` is ``(K, V, V)``
    or per-sample ``(N, K, V, V)``, ``weight`` is ``(K, C_in, C_out)``.
    """
    x = ag.as_tensor(x)
    adj = ag.as_tensor(adj, dtype=x.dtype)
    weight = ag.as_tensor(weight)
    squeeze = x.ndim == 3
    if squeeze:
        x = x.reshape((1,) + x.shape)
    if x.ndim != 4:
        raise ShapeError(f"x must be (N, T, V, C), got {x.shape}")
    n, t, v, c_in = x.shape
    if adj.ndim == 3:
        adj = adj.reshape((1,) + adj.shape)
    if adj.ndim != 4 or adj.shape[-2:] != (v, v) or adj.shape[0] not in (1, n):
        raise ShapeError(f"adjacency shape {adj.shape} does not fit {v} joints and batch {n}")
    k = adj.shape[1]
    if weight.ndim != 3 or weight.shape[0] != k:
        raise ShapeError(f"adjacency has {k} partitions but weight has shape {weight.shape}")
    if weight.shape[1] != c_in:
        raise ShapeError(f"weight expects {weight.shape[1]} input channels, x has {c_in}")
    c_out = weight.shape[2]
    # aggregate neighbors once per sample across all frames: (N,K,V,V) @ (N,1,V,T*C)
    xv = x.transpose(0, 2, 1, 3).reshape(n, 1, v, t * c_in)
    agg = ag.matmul(adj, xv).reshape(n, k, v, t, c_in)
    agg = agg.transpose(0, 3, 2, 1, 4).reshape(n, t, v, k * c_in)
    out = agg @ weight.reshape(k * c_in, c_out)
    if bias is not None:
        out = out + bias
    return out.reshape(out.shape[1:]) if squeeze else out


def global_pool(x: Tensor) -> Tensor:
    """Average over frames and joints: ``(N, T, V, C) -> (N, C)``."""
    return ag.mean(x, axis=(1, 2))


def stgcn_block(
    x: Tensor,
    adj: np.ndarray | Tensor,
    params: Mapping[str, Tensor],
    stride: int = 1,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Tensor:
    """Spatial graph conv, temporal conv, residual add, ReLU.

    ``params`` holds ``gcn.weight``, ``gcn.bias``, ``tcn.weight``, ``tcn.bias``
    and, when the residual needs a projection, ``res.weight``/``res.bias``.
    """
    h = spatial_graph_conv(x, adj, params["gcn.weight"], params.get("gcn.bias"))
    h = ag.dropout(h, dropout, rng, training)
    h = ag.temporal_conv(h, params["tcn.weight"], params.get("tcn.bias"), stride)
    if "res.weight" in params:
        res = ag.temporal_conv(x, params["res.weight"], params.get("res.bias"), stride)
    else:
        if x.shape[-1] != h.shape[-1] or stride != 1:
            raise ShapeError("identity residual needs equal channels and stride 1")
        res = x
    return ag.relu(h + res)


def predict_topk(logits: np.ndarray | Tensor, k: int) -> np.ndarray:
    """Indices of the ``k`` largest logits per row, descending; ties go to the lower index."""
    scores = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    if scores.ndim != 2:
        raise ShapeError(f"logits must be (N, C), got {scores.shape}")
    if not 1 <= k <= scores.shape[1]:
        raise ValueError(f"k must be in 1..{scores.shape[1]}, got {k}")
    return np.argsort(-scores, axis=1, kind="stable")[:, :k]


class STGCN:
    """ST-GCN classifier: stacked blocks, global average pooling, linear head."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float64, layout: GraphLayout | None = None):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.layout = layout if layout is not None else build_layout(config.layout)
        self.strategy = PartitionStrategy(PartitionKind(config.partition))
        self.adjacency_builder = AdjacencyBuilder(self.layout, self.strategy)
        self.params: dict[str, Tensor] = {}
        self.scales: dict[str, float] = {}
        self.buffers: dict[str, np.ndarray] = {
            "input.mean": np.zeros((config.in_channels, self.layout.num_nodes), dtype=self.dtype),
            "input.scale": np.ones(config.in_channels, dtype=self.dtype),
        }
        self._init_params(np.random.default_rng(seed))

    @property
    def num_nodes(self) -> int:
        return self.layout.num_nodes

    def _param(self, name: str, shape: tuple[int, ...], std: float, rng: np.random.Generator) -> None:
        if not std:
            value = np.zeros(shape)
        elif self.config.scaled_weights:
            # stored at unit scale, multiplied by std in forward
            value = rng.standard_normal(shape)
            self.scales[name] = std
        else:
            value = rng.standard_normal(shape) * std
        self.params[name] = Tensor(value.astype(self.dtype), requires_grad=True, name=name)

    def weight(self, name: str) -> Tensor:
        """Effective value of parameter ``name`` (runtime scale applied)."""
        p = self.params[name]
        scale = self.scales.get(name)
        return p if scale is None else p * scale

    def _init_params(self, rng: np.random.Generator) -> None:
        cfg = self.config
        k = self.strategy.num_partitions
        gamma = cfg.temporal_kernel
        c_in = cfg.in_channels
        for i, (c_out, stride) in enumerate(zip(cfg.channels, cfg.strides)):
            p = f"block{i}."
            self._param(p + "gcn.weight", (k, c_in, c_out), np.sqrt(2.0 / (k * c_in)), rng)
            self._param(p + "gcn.bias", (c_out,), 0.0, rng)
            self._param(p + "tcn.weight", (gamma, c_out, c_out), np.sqrt(2.0 / (gamma * c_out)), rng)
            self._param(p + "tcn.bias", (c_out,), 0.0, rng)
            if c_in != c_out or stride != 1:
                self._param(p + "res.weight", (1, c_in, c_out), np.sqrt(2.0 / c_in), rng)
                self._param(p + "res.bias", (c_out,), 0.0, rng)
            c_in = c_out
        self._param("fc.weight", (c_in, cfg.num_classes), np.sqrt(1.0 / c_in), rng)
        self._param("fc.bias", (cfg.num_classes,), 0.0, rng)

    def block_params(self, i: int) -> dict[str, Tensor]:
        prefix = f"block{i}."
        return {n[len(prefix):]: self.weight(n) for n in self.params if n.startswith(prefix)}

    def fit_input_stats(self, data: np.ndarray) -> None:
        """Set the frozen input normalization from training data ``(N, C, T, V)``.

        Each (channel, joint) is centered on its mean over samples and frames,
        and each channel is divided by its standard deviation pooled over joints.
        """
        data = np.asarray(data, dtype=np.float64)
        self.check_batch(data)
        mean = data.mean(axis=(0, 2))
        scale = (data - mean[None, :, None, :]).std(axis=(0, 2, 3))
        scale[scale < 1e-6] = 1.0
        self.buffers["input.mean"] = mean.astype(self.dtype)
        self.buffers["input.scale"] = scale.astype(self.dtype)

    def adjacency(self, data: np.ndarray) -> np.ndarray:
        """Per-sample partitioned adjacency from the mean pose over time.

        ``data`` is ``(N, C, T, V)``; returns ``(N, K, V, V)``.
        """
        mean_pose = np.asarray(data, dtype=np.float64)[:, :2].mean(axis=2).transpose(0, 2, 1)
        return self.adjacency_builder(mean_pose).astype(self.dtype)

    def check_batch(self, data: np.ndarray) -> None:
        if data.ndim != 4:
            raise ShapeError(f"batch must be (N, C, T, V), got {data.shape}")
        n, c, t, v = data.shape
        if c != self.config.in_channels:
            raise ShapeError(f"batch has {c} channels, model expects {self.config.in_channels}")
        if v != self.num_nodes:
            raise ShapeError(f"batch has {v} joints, layout {self.layout.name!r} has {self.num_nodes}")
        if t < self.config.temporal_kernel:
            raise ShapeError(f"batch has {t} frames, shorter than the temporal kernel")

    def forward(
        self,
        data: np.ndarray,
        adj: np.ndarray | None = None,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Logits ``(N, num_classes)`` for a batch ``(N, C_in, T, V)``."""
        data = np.asarray(data)
        self.check_batch(data)
        if adj is None:
            adj = self.adjacency(data)
        x = data.astype(self.dtype)
        if self.config.normalize_input:
            x = (x - self.buffers["input.mean"][None, :, None, :]) / self.buffers["input.scale"][None, :, None, None]
        if self.config.zero_confidence and x.shape[1] > 2:
            x = x.copy()
            x[:, 2:] = 0.0
        h = Tensor(np.ascontiguousarray(x.transpose(0, 2, 3, 1)))
        for i, stride in enumerate(self.config.strides):
            h = stgcn_block(h, adj, self.block_params(i), stride, self.config.dropout, rng, training)
        pooled = global_pool(h)
        return pooled @ self.weight("fc.weight") + self.params["fc.bias"]

    __call__ = forward

    def state_dict(self) -> dict[str, np.ndarray]:
        """Trainable parameters followed by the frozen input statistics."""
        state = {name: p.data.copy() for name, p in self.params.items()}
        state.update((name, b.copy()) for name, b in self.buffers.items())
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        current = {name: p.data for name, p in self.params.items()}
        current.update(self.buffers)
        missing = set(current) - set(state)
        extra = set(state) - set(current)
        if missing or extra:
            raise ShapeError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, old in current.items():
            value = np.asarray(state[name])
            if value.shape != old.shape:
                raise ShapeError(f"parameter {name!r}: checkpoint shape {value.shape}, model {old.shape}")
            if name in self.buffers:
                self.buffers[name] = value.astype(self.dtype)
            else:
                self.params[name].data = value.astype(self.dtype)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
