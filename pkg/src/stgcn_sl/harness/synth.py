"""Synthetic class-conditioned skeleton trajectories for desk-scale checks."""
from __future__ import annotations

import numpy as np

from ..graph import GraphLayout, build_layout
from ..pipeline.bundle import DatasetBundle, SkeletonSequence

MOTION_MODELS = ("oscillation",)


def _template(layout: GraphLayout, rng: np.random.Generator) -> np.ndarray:
    """Rest pose: breadth-first placement outward from the center node."""
    num_nodes = layout.num_nodes
    pos = np.full((num_nodes, 2), np.nan)
    pos[layout.center_node] = (0.5, 0.3)
    adjacency = {i: [] for i in range(num_nodes)}
    for a, b in layout.edges:
        adjacency[a].append(b)
        adjacency[b].append(a)
    frontier = [layout.center_node]
    while frontier:
        node = frontier.pop(0)
        for nb in sorted(adjacency[node]):
            if np.isnan(pos[nb, 0]):
                angle = rng.uniform(0, 2 * np.pi)
                pos[nb] = pos[node] + 0.06 * np.array([np.cos(angle), np.sin(angle)])
                frontier.append(nb)
    missing = np.isnan(pos[:, 0])
    pos[missing] = rng.uniform(0.2, 0.8, size=(int(missing.sum()), 2))
    return pos


def generate_synthetic(
    classes: int,
    samples_per_class: int,
    frames: int = 63,
    num_nodes: int = 27,
    seed: int = 0,
    motion_model: str = "oscillation",
    test_per_class: int = 0,
    layout: str | dict | GraphLayout | None = "sign-27",
    noise: float = 0.01,
) -> tuple[DatasetBundle, DatasetBundle]:
    """Build a (train, test) pair of fixed-length bundles.

    Each class moves its own subset of joints with its own oscillation
    frequency, direction and phase on top of a shared rest pose; every sample
    adds amplitude/phase jitter and Gaussian coordinate noise. The third
    channel is a confidence value near 1.
    """
    for name, value in (("classes", classes), ("samples_per_class", samples_per_class), ("frames", frames), ("num_nodes", num_nodes)):
        if int(value) < 1:
            raise ValueError(f"{name} must be positive, got {value}")
    if classes < 2:
        raise ValueError("need at least two classes")
    if test_per_class < 0:
        raise ValueError("test_per_class must be non-negative")
    if motion_model not in MOTION_MODELS:
        raise ValueError(f"unknown motion model {motion_model!r}; choose from {MOTION_MODELS}")
    graph = build_layout(layout) if layout is not None else None
    if graph is None or graph.num_nodes != num_nodes:
        chain = tuple((i, i + 1) for i in range(num_nodes - 1))
        graph = GraphLayout(num_nodes, chain, 0, f"chain-{num_nodes}")
    rng = np.random.default_rng(seed)
    rest = _template(graph, rng)
    moving = max(2, num_nodes // 4)
    class_joints = [rng.choice(num_nodes, size=moving, replace=False) for _ in range(classes)]
    # cycles per sequence, kept below a quarter of the frame rate
    class_freq = 2.0 + (3.0 * np.arange(classes)) % max(frames / 4.0 - 2.0, 1.0)
    class_phase = rng.uniform(0, 2 * np.pi, size=classes)
    angle = np.pi * np.arange(classes) / classes
    class_dir = np.stack([np.cos(angle), np.sin(angle)], axis=1)
    t = np.arange(frames) / frames

    def sample(c: int) -> np.ndarray:
        xy = np.broadcast_to(rest, (frames, num_nodes, 2)).copy()
        amp = 0.25 * rng.uniform(0.8, 1.2)
        phase = class_phase[c] + rng.normal(scale=0.3)
        wave = amp * np.sin(2 * np.pi * class_freq[c] * t + phase)
        xy[:, class_joints[c]] += wave[:, None, None] * class_dir[c]
        xy += rng.normal(scale=noise, size=xy.shape)
        conf = np.clip(rng.normal(0.95, 0.02, size=(frames, num_nodes, 1)), 0.0, 1.0)
        return np.concatenate([xy, conf], axis=2)

    def build(per_class: int, split: str) -> DatasetBundle:
        samples = []
        for c in range(classes):
            for i in range(per_class):
                samples.append(SkeletonSequence(sample(c), c, f"synth/{split}/c{c:03d}/{i:04d}"))
        return DatasetBundle(
            samples,
            [f"class{c:03d}" for c in range(classes)],
            layout=graph.to_dict(),
            split=split,
            provenance={"generator": motion_model, "seed": seed, "frames": frames, "noise": noise},
        )

    train = build(samples_per_class, "train")
    test = build(test_per_class, "test")
    return train, test
