"""Skeleton graph layouts and neighborhood partitioning.

A layout is the static joint topology. Partitioning turns a layout (plus a
reference pose, for the spatial-configuration strategy) into ``K`` stacked,
row-normalized adjacency matrices consumed by the spatial graph convolution.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

ROOT, CENTRIPETAL, CENTRIFUGAL = 0, 1, 2

_BUILTINS = {"sign-27": "sign27.json"}


class LayoutError(ValueError):
    """Raised for malformed graph layouts."""


class EdgeOutOfRangeError(LayoutError):
    pass


class DuplicateEdgeError(LayoutError):
    pass


class SelfLoopError(LayoutError):
    pass


class CenterOutOfRangeError(LayoutError):
    pass


class PartitionError(ValueError):
    """Raised when a partition assignment does not fit its layout."""


@dataclass(frozen=True)
class GraphLayout:
    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    center_node: int
    name: str = "custom"

    def __post_init__(self) -> None:
        if not isinstance(self.num_nodes, (int, np.integer)) or self.num_nodes < 1:
            raise LayoutError(f"num_nodes must be a positive integer, got {self.num_nodes!r}")
        seen: set[tuple[int, int]] = set()
        for a, b in self.edges:
            if not (0 <= a < self.num_nodes and 0 <= b < self.num_nodes):
                raise EdgeOutOfRangeError(
                    f"edge ({a}, {b}) has an endpoint outside 0..{self.num_nodes - 1}"
                )
            if a == b:
                raise SelfLoopError(f"edge ({a}, {b}) is a self-loop; self-connections are implicit")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise DuplicateEdgeError(f"duplicate edge {key}")
            seen.add(key)
        if not 0 <= self.center_node < self.num_nodes:
            raise CenterOutOfRangeError(
                f"center node {self.center_node} outside 0..{self.num_nodes - 1}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "num_nodes": int(self.num_nodes),
            "center": int(self.center_node),
            "edges": [[int(a), int(b)] for a, b in self.edges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def adjacency(self) -> np.ndarray:
        """Binary symmetric adjacency ``A`` without self-loops."""
        A = np.zeros((self.num_nodes, self.num_nodes))
        for a, b in self.edges:
            A[a, b] = A[b, a] = 1.0
        return A

    def permuted(self, perm: Sequence[int]) -> "GraphLayout":
        """Relabel nodes so that old node ``perm[new]`` becomes ``new``."""
        perm = list(perm)
        if sorted(perm) != list(range(self.num_nodes)):
            raise LayoutError("perm must be a permutation of the node indices")
        inverse = {old: new for new, old in enumerate(perm)}
        edges = tuple((inverse[a], inverse[b]) for a, b in self.edges)
        return GraphLayout(self.num_nodes, edges, inverse[self.center_node], self.name)


def build_layout(spec: str | Mapping[str, Any] | GraphLayout) -> GraphLayout:
    """Validate a layout description, or load a builtin by name.

    ``spec`` is either a builtin name (``"sign-27"``), a path to a layout JSON
    file, or a mapping with ``num_nodes``, ``edges``, ``center`` and an optional
    ``name``.
    """
    if isinstance(spec, GraphLayout):
        return spec
    if isinstance(spec, (str, Path)):
        if str(spec) in _BUILTINS:
            text = resources.files("stgcn_sl.data").joinpath(_BUILTINS[str(spec)]).read_text()
        else:
            path = Path(spec)
            if not path.is_file():
                raise LayoutError(f"unknown layout {spec!r}: not a builtin name or a file")
            text = path.read_text()
        spec = json.loads(text)
    try:
        num_nodes = spec["num_nodes"]
        raw_edges = spec["edges"]
        center = spec["center"]
    except KeyError as exc:
        raise LayoutError(f"layout description is missing field {exc.args[0]!r}") from None
    edges = []
    for edge in raw_edges:
        if len(edge) != 2:
            raise LayoutError(f"edge {edge!r} must have exactly two endpoints")
        edges.append((int(edge[0]), int(edge[1])))
    return GraphLayout(int(num_nodes), tuple(edges), int(center), str(spec.get("name", "custom")))


def builtin_filter(name: str = "sign-27") -> list[int]:
    """Default keypoint filter shipped with a builtin layout."""
    if name != "sign-27":
        raise KeyError(f"no builtin filter for layout {name!r}")
    doc = json.loads(resources.files("stgcn_sl.data").joinpath("sign27_filter.json").read_text())
    return list(doc["indices"])


def neighbors(layout: GraphLayout, node: int) -> list[int]:
    """Distance-1 neighbors of ``node`` in ascending order, excluding itself."""
    if not 0 <= node < layout.num_nodes:
        raise IndexError(f"node {node} outside 0..{layout.num_nodes - 1}")
    out = set()
    for a, b in layout.edges:
        if a == node:
            out.add(b)
        elif b == node:
            out.add(a)
    return sorted(out)


def center_of_gravity(frame: np.ndarray) -> np.ndarray:
    """Mean 2-D coordinate of all joints in one frame (shape ``(V, 2)``)."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2 or frame.shape[0] == 0:
        raise ValueError(f"expected a non-empty (V, 2) frame, got shape {frame.shape}")
    if not np.isfinite(frame).all():
        raise ValueError("frame contains non-finite coordinates")
    return frame[:, :2].mean(axis=0)


class PartitionKind(str, enum.Enum):
    UNIFORM = "uniform"
    SPATIAL = "spatial-configuration"


@dataclass(frozen=True)
class PartitionStrategy:
    kind: PartitionKind = PartitionKind.SPATIAL
    neighbor_distance: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PartitionKind(self.kind))
        if self.neighbor_distance != 1:
            raise ValueError("only neighbor_distance = 1 is defined")

    @property
    def num_partitions(self) -> int:
        return 1 if self.kind is PartitionKind.UNIFORM else 3


@dataclass(frozen=True)
class PartitionAssignment:
    """Label of every ordered (root, neighbor) pair, self pairs included."""

    labels: Mapping[tuple[int, int], int] = field(default_factory=dict)


def spatial_partition(layout: GraphLayout, reference_frame: np.ndarray) -> PartitionAssignment:
    """Label each neighbor as root, centripetal or centrifugal.

    A neighbor closer to the center of gravity than its root is centripetal,
    a farther one centrifugal; an exact tie counts as root.
    """
    frame = np.asarray(reference_frame, dtype=np.float64)
    if frame.ndim != 2 or frame.shape[0] != layout.num_nodes:
        raise PartitionError(
            f"reference frame has {frame.shape[0] if frame.ndim else 0} joints, "
            f"layout has {layout.num_nodes}"
        )
    cog = center_of_gravity(frame)
    dist = np.linalg.norm(frame[:, :2] - cog, axis=1)
    labels: dict[tuple[int, int], int] = {}
    for i in range(layout.num_nodes):
        labels[(i, i)] = ROOT
        for j in neighbors(layout, i):
            if dist[j] < dist[i]:
                labels[(i, j)] = CENTRIPETAL
            elif dist[j] > dist[i]:
                labels[(i, j)] = CENTRIFUGAL
            else:
                labels[(i, j)] = ROOT
    return PartitionAssignment(labels)


def normalize_rows(A: np.ndarray) -> np.ndarray:
    """``D^-1 A`` per matrix over the last two axes; all-zero rows stay zero."""
    deg = A.sum(axis=-1, keepdims=True)
    return np.divide(A, deg, out=np.zeros_like(A), where=deg > 0)


def partition_adjacency(
    layout: GraphLayout,
    strategy: PartitionStrategy,
    assignment: PartitionAssignment | None = None,
) -> np.ndarray:
    """Stack of ``K`` row-normalized adjacency matrices, shape ``(K, V, V)``."""
    V = layout.num_nodes
    support = layout.adjacency() + np.eye(V)
    if strategy.kind is PartitionKind.UNIFORM:
        if assignment is not None:
            raise PartitionError("the uniform strategy takes no assignment")
        return normalize_rows(support)[None]
    if assignment is None:
        raise PartitionError("spatial-configuration partitioning needs an assignment")
    labels = assignment.labels
    expected = {(int(i), int(j)) for i, j in zip(*np.nonzero(support))}
    if set(labels) != expected:
        raise PartitionError("assignment pairs do not match the layout's neighborhoods")
    A = np.zeros((3, V, V))
    for (i, j), k in labels.items():
        if k not in (ROOT, CENTRIPETAL, CENTRIFUGAL):
            raise PartitionError(f"invalid label {k} for pair ({i}, {j})")
        A[k, i, j] = 1.0
    return normalize_rows(A)


class AdjacencyBuilder:
    """Vectorized adjacency construction for a batch of reference poses.

    Equivalent to ``partition_adjacency(layout, strategy, spatial_partition(...))``
    applied per pose, without the per-pair Python loop.
    """

    def __init__(self, layout: GraphLayout, strategy: PartitionStrategy):
        self.layout = layout
        self.strategy = strategy
        V = layout.num_nodes
        self._uniform = normalize_rows(layout.adjacency() + np.eye(V))
        pairs = [(a, b) for a, b in layout.edges] + [(b, a) for a, b in layout.edges]
        self._roots = np.array([p[0] for p in pairs], dtype=np.intp)
        self._nbrs = np.array([p[1] for p in pairs], dtype=np.intp)

    @property
    def num_partitions(self) -> int:
        return self.strategy.num_partitions

    def __call__(self, poses: np.ndarray) -> np.ndarray:
        """``poses`` is ``(N, V, 2)``; returns ``(N, K, V, V)``."""
        poses = np.asarray(poses, dtype=np.float64)
        N, V = poses.shape[0], self.layout.num_nodes
        if poses.ndim != 3 or poses.shape[1] != V:
            raise PartitionError(f"poses must be (N, {V}, 2), got {poses.shape}")
        if self.strategy.kind is PartitionKind.UNIFORM:
            return np.broadcast_to(self._uniform, (N, 1, V, V)).copy()
        if not np.isfinite(poses).all():
            raise ValueError("reference poses contain non-finite coordinates")
        cog = poses[:, :, :2].mean(axis=1, keepdims=True)
        dist = np.linalg.norm(poses[:, :, :2] - cog, axis=2)
        A = np.zeros((N, 3, V, V))
        A[:, ROOT, np.arange(V), np.arange(V)] = 1.0
        if len(self._roots):
            d_root = dist[:, self._roots]
            d_nbr = dist[:, self._nbrs]
            label = np.where(d_nbr < d_root, CENTRIPETAL, np.where(d_nbr > d_root, CENTRIFUGAL, ROOT))
            n_idx = np.repeat(np.arange(N), len(self._roots))
            A[n_idx, label.ravel(), np.tile(self._roots, N), np.tile(self._nbrs, N)] = 1.0
        return normalize_rows(A)
