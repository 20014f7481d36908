"""Dataset preparation steps: segment, filter, select, split, normalize."""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bundle import DatasetBundle, SkeletonSequence
from .poses import PoseFrame, SignAnnotation

DEFAULT_FRAMES = 63


class PipelineError(ValueError):
    pass


def frames_to_array(frames: Sequence[PoseFrame]) -> tuple[np.ndarray, np.ndarray]:
    """Stack parsed frames into ``(F, P, 3)`` plus their frame indices."""
    if not frames:
        return np.zeros((0, 0, 3)), np.zeros(0, dtype=np.int64)
    return np.stack([f.keypoints for f in frames]), np.array([f.frame_index for f in frames])


def segment_samples(
    annotations: Iterable[SignAnnotation],
    videos: Mapping[str, Sequence[PoseFrame]],
) -> DatasetBundle:
    """Cut one sample per annotation out of its video's keypoint frames.

    Ranges are inclusive on both ends. Labels are ids into the sorted list of
    glosses present in the annotations.
    """
    annotations = list(annotations)
    if not annotations:
        raise PipelineError("no annotations to segment")
    label_map = sorted({a.label for a in annotations})
    ids = {g: i for i, g in enumerate(label_map)}
    stacked = {vid: frames_to_array(frames) for vid, frames in videos.items()}
    samples = []
    seen: Counter[str] = Counter()
    for a in annotations:
        if a.video_id not in stacked:
            raise PipelineError(f"annotation {a.label!r} refers to unknown video {a.video_id!r}")
        data, index = stacked[a.video_id]
        pos = np.searchsorted(index, [a.start_frame, a.end_frame])
        lo, hi = int(pos[0]), int(pos[1])
        expected = a.end_frame - a.start_frame + 1
        if hi >= len(index) or index[lo] != a.start_frame or index[hi] != a.end_frame or hi - lo + 1 != expected:
            span = f"{index[0]}..{index[-1]}" if len(index) else "no frames"
            raise PipelineError(
                f"annotation {a.label!r} frames {a.start_frame}..{a.end_frame} outside the frames "
                f"available for video {a.video_id!r} ({span})"
            )
        base = f"{a.video_id}/{a.start_frame:06d}-{a.end_frame:06d}"
        seen[base] += 1
        sid = base if seen[base] == 1 else f"{base}#{seen[base]}"
        samples.append(
            SkeletonSequence(data[lo:hi + 1], ids[a.label], sid, a.signer_id or None, a.articulation_id or None)
        )
    return DatasetBundle(samples, label_map)


def validate_filter(indices: Sequence[int], source_points: int, expected_len: int | None = None) -> list[int]:
    indices = [int(i) for i in indices]
    if len(set(indices)) != len(indices):
        dupes = sorted(i for i, n in Counter(indices).items() if n > 1)
        raise PipelineError(f"duplicate keypoint indices in filter: {dupes}")
    bad = [i for i in indices if not 0 <= i < source_points]
    if bad:
        raise PipelineError(f"keypoint indices {bad} outside 0..{source_points - 1}")
    if expected_len is not None and len(indices) != expected_len:
        raise PipelineError(f"filter selects {len(indices)} keypoints but the layout has {expected_len} nodes")
    return indices


def filter_keypoints(sample: SkeletonSequence, indices: Sequence[int], num_nodes: int | None = None) -> SkeletonSequence:
    """Keep the listed keypoints, in the listed order, in every frame."""
    indices = validate_filter(indices, sample.frames.shape[1], num_nodes)
    return sample.replace_frames(sample.frames[:, indices])


def select_dominant_articulation(samples: Iterable[SkeletonSequence]) -> list[SkeletonSequence]:
    """Per gloss, keep only samples of its most frequent articulation.

    Count ties go to the smallest articulation id. Input order is preserved.
    """
    samples = list(samples)
    counts: dict[int, Counter] = defaultdict(Counter)
    for s in samples:
        counts[s.label][s.articulation_id or ""] += 1
    keep = {}
    for label, c in counts.items():
        keep[label] = min(c, key=lambda art: (-c[art], art))
    return [s for s in samples if (s.articulation_id or "") == keep[s.label]]


def restrict_glosses(bundle: DatasetBundle, glosses: Sequence[str]) -> DatasetBundle:
    """Keep samples of the listed glosses and renumber labels densely in that order."""
    missing = [g for g in glosses if g not in bundle.label_map]
    if missing:
        raise PipelineError(f"glosses not present in the data: {missing}")
    remap = {bundle.label_id(g): i for i, g in enumerate(glosses)}
    samples = [
        SkeletonSequence(s.frames, remap[s.label], s.sample_id, s.signer_id, s.articulation_id)
        for s in bundle.samples
        if s.label in remap
    ]
    return bundle.with_samples(samples, label_map=list(glosses))


def train_size(n: int, ratio: float) -> int:
    """``round(n * ratio)`` with halves rounded up."""
    return int(math.floor(n * ratio + 0.5))


def split_dataset(
    samples: Sequence[SkeletonSequence], train_ratio: float, seed: int
) -> tuple[list[SkeletonSequence], list[SkeletonSequence]]:
    """Seeded shuffle, then the first ``round(N * ratio)`` samples train."""
    if not 0.0 < train_ratio < 1.0:
        raise PipelineError(f"train_ratio must be in (0, 1), got {train_ratio}")
    n = len(samples)
    if n == 0:
        raise PipelineError("cannot split an empty sample list")
    n_train = train_size(n, train_ratio)
    if n_train == 0 or n_train == n:
        raise PipelineError(f"ratio {train_ratio} leaves one side empty for {n} samples")
    order = np.random.default_rng(seed).permutation(n)
    return [samples[i] for i in order[:n_train]], [samples[i] for i in order[n_train:]]


def normalize_length(sample: SkeletonSequence, target_frames: int = DEFAULT_FRAMES) -> SkeletonSequence:
    """Loop short samples cyclically up to ``target_frames``; truncate long ones."""
    if target_frames < 1:
        raise PipelineError("target frame count must be positive")
    t = sample.frames.shape[0]
    if t == 0:
        raise PipelineError(f"sample {sample.sample_id!r} is empty")
    if t == target_frames:
        return sample
    index = np.arange(target_frames) % t
    return sample.replace_frames(sample.frames[index])
