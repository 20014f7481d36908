"""Manifest-driven execution of the whole preparation pipeline."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..graph import build_layout, builtin_filter
from . import bundle as bundle_io
from .bundle import DatasetBundle
from .poses import PoseFrame, load_video_frames, read_annotations
from .steps import (
    DEFAULT_FRAMES,
    PipelineError,
    filter_keypoints,
    normalize_length,
    restrict_glosses,
    segment_samples,
    select_dominant_articulation,
    split_dataset,
)

log = logging.getLogger(__name__)


@dataclass
class Manifest:
    """Corpus description; relative paths resolve against ``root``."""

    root: Path
    poses_dir: str = "poses"
    annotations: str = "annotations.csv"
    keypoint_counts: list[int] = field(default_factory=lambda: [130])
    layout: str | dict = "sign-27"
    filter: str | list[int] = "sign-27"
    glosses: list[str] | None = None
    dominant_articulation: bool = False
    train_ratio: float = 0.8
    seed: int = 0
    target_frames: int = DEFAULT_FRAMES
    output_dir: str = "out"
    workers: int = 1

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        unknown = set(doc) - set(cls.__dataclass_fields__) - {"root"}
        if unknown:
            raise PipelineError(f"unknown manifest fields: {sorted(unknown)}")
        root = path.parent / doc.pop("root", ".")
        return cls(root=root, **doc)

    def resolve(self, rel: str) -> Path:
        return (self.root / rel).resolve()

    def filter_indices(self) -> list[int]:
        if isinstance(self.filter, str):
            return builtin_filter(self.filter)
        return [int(i) for i in self.filter]


def load_videos(poses_dir: Path, video_ids: list[str], keypoint_counts: list[int], workers: int = 1) -> dict[str, list[PoseFrame]]:
    """Parse each video's pose directory; results are keyed in sorted id order."""
    ids = sorted(set(video_ids))

    def one(vid: str) -> list[PoseFrame]:
        directory = poses_dir / vid
        if not directory.is_dir():
            raise PipelineError(f"no pose directory for video {vid!r}")
        return load_video_frames(directory, keypoint_counts)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parsed = list(pool.map(one, ids))
    else:
        parsed = [one(v) for v in ids]
    return dict(zip(ids, parsed))


def segment_corpus(manifest: Manifest) -> DatasetBundle:
    annotations = read_annotations(manifest.resolve(manifest.annotations))
    videos = load_videos(
        manifest.resolve(manifest.poses_dir), [a.video_id for a in annotations], manifest.keypoint_counts, manifest.workers
    )
    raw = segment_samples(annotations, videos)
    log.info("segment: %d annotations -> %d samples", len(annotations), len(raw))
    if manifest.glosses:
        raw = restrict_glosses(raw, manifest.glosses)
        log.info("subset: %d glosses -> %d samples", len(manifest.glosses), len(raw))
    if manifest.dominant_articulation:
        kept = select_dominant_articulation(raw.samples)
        log.info("dominant articulation: %d -> %d samples", len(raw), len(kept))
        raw = raw.with_samples(kept)
    return raw


def filter_bundle(bundle: DatasetBundle, indices: list[int], layout: str | dict | None = None) -> DatasetBundle:
    graph = build_layout(layout) if layout is not None else None
    num_nodes = graph.num_nodes if graph is not None else None
    samples = [filter_keypoints(s, indices, num_nodes) for s in bundle.samples]
    provenance = dict(bundle.provenance, filter=list(indices))
    return bundle.with_samples(
        samples, layout=graph.to_dict() if graph is not None else bundle.layout, provenance=provenance
    )


def split_bundle(bundle: DatasetBundle, train_ratio: float, seed: int) -> tuple[DatasetBundle, DatasetBundle]:
    train, test = split_dataset(bundle.samples, train_ratio, seed)
    provenance = dict(bundle.provenance, seed=seed, train_ratio=train_ratio)
    return (
        bundle.with_samples(train, split="train", provenance=provenance),
        bundle.with_samples(test, split="test", provenance=provenance),
    )


def normalize_bundle(bundle: DatasetBundle, target_frames: int = DEFAULT_FRAMES) -> DatasetBundle:
    samples = [normalize_length(s, target_frames) for s in bundle.samples]
    return bundle.with_samples(samples, provenance=dict(bundle.provenance, target_frames=target_frames))


def pack_bundle(bundle: DatasetBundle) -> DatasetBundle:
    """Validate a bundle as final training input: one shape, layout present and matching."""
    if not bundle.samples:
        raise PipelineError("refusing to pack an empty bundle")
    shape = bundle.shape()
    if shape is None:
        raise PipelineError("samples differ in shape; run normalize first")
    if bundle.layout is None:
        raise PipelineError("bundle has no layout descriptor; run filter with a layout first")
    graph = build_layout(bundle.layout)
    if shape[1] != graph.num_nodes:
        raise PipelineError(f"samples have {shape[1]} joints, layout has {graph.num_nodes}")
    return bundle


def run_all(manifest: Manifest, write: bool = True) -> tuple[DatasetBundle, DatasetBundle]:
    """Segment, filter, split, normalize and pack; write ``train.stgs`` / ``test.stgs``."""
    raw = segment_corpus(manifest)
    raw.provenance["source"] = Path(manifest.annotations).name
    filtered = filter_bundle(raw, manifest.filter_indices(), manifest.layout)
    log.info("filter: %d samples, %d joints", len(filtered), filtered.samples[0].frames.shape[1])
    train, test = split_bundle(filtered, manifest.train_ratio, manifest.seed)
    log.info("split: %d train / %d test", len(train), len(test))
    train = pack_bundle(normalize_bundle(train, manifest.target_frames))
    test = pack_bundle(normalize_bundle(test, manifest.target_frames))
    log.info("normalize: T=%d", manifest.target_frames)
    if write:
        out = manifest.resolve(manifest.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        bundle_io.save(out / "train.stgs", train)
        bundle_io.save(out / "test.stgs", test)
        log.info("pack: wrote %s", out)
    return train, test

