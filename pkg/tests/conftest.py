from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np
import pytest

from stgcn_sl.graph import GraphLayout
from stgcn_sl.pipeline.bundle import DatasetBundle, SkeletonSequence


def connected_graphs(max_nodes: int):
    """Every connected simple graph on 1..max_nodes labelled nodes (brute force)."""
    for v in range(1, max_nodes + 1):
        pairs = list(itertools.combinations(range(v), 2))
        for mask in range(1 << len(pairs)):
            edges = tuple(p for b, p in enumerate(pairs) if mask >> b & 1)
            seen, stack = {0}, [0]
            while stack:
                a = stack.pop()
                for x, y in edges:
                    for u, w in ((x, y), (y, x)):
                        if u == a and w not in seen:
                            seen.add(w)
                            stack.append(w)
            if len(seen) == v:
                yield GraphLayout(v, edges, 0)


def random_tree(rng: np.random.Generator, v: int) -> GraphLayout:
    edges = tuple((int(rng.integers(0, i)), i) for i in range(1, v))
    return GraphLayout(v, edges, int(rng.integers(0, v)))


def random_layout(rng: np.random.Generator, v: int, extra: int = 3) -> GraphLayout:
    """Random spanning tree plus a few extra edges."""
    edges = {tuple(sorted(e)) for e in random_tree(rng, v).edges}
    for _ in range(extra):
        a, b = (int(x) for x in rng.choice(v, size=2, replace=False)) if v > 1 else (0, 0)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return GraphLayout(v, tuple(sorted(edges)), int(rng.integers(0, v)))


def random_bundle(rng: np.random.Generator, n: int | None = None, fixed_shape: bool = False) -> DatasetBundle:
    n = int(rng.integers(0, 12)) if n is None else n
    classes = int(rng.integers(1, 6))
    v, c = int(rng.integers(1, 8)), int(rng.integers(1, 4))
    t_fixed = int(rng.integers(1, 20))
    samples = []
    for i in range(n):
        t = t_fixed if fixed_shape else int(rng.integers(1, 20))
        frames = rng.normal(size=(t, v, c)).astype(np.float32)
        signer = None if rng.random() < 0.3 else f"s{int(rng.integers(0, 5))}"
        art = None if rng.random() < 0.3 else str(int(rng.integers(1, 4)))
        samples.append(SkeletonSequence(frames, int(rng.integers(0, classes)), f"vid{i % 3}/{i:06d}", signer, art))
    layout = None
    if rng.random() < 0.5:
        layout = random_tree(rng, v).to_dict()
    split = [None, "train", "test"][int(rng.integers(0, 3))]
    provenance = {"seed": int(rng.integers(0, 100)), "note": "résumé"} if rng.random() < 0.5 else {}
    glosses = [f"GLOSS-{k}" for k in range(classes)]
    return DatasetBundle(samples, glosses, layout=layout, split=split, provenance=provenance)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


@pytest.fixture
def fixture_corpus():
    return FIXTURES / "mini_corpus"


def pytest_terminal_summary(terminalreporter):
    results = getattr(__import__("sys").modules.get("test_acceptance"), "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
