"""Dataset preparation: pose parsing, segmentation, filtering, splitting,
length normalization and serialization."""
from .bundle import (
    ChecksumError,
    DatasetBundle,
    FormatError,
    SkeletonSequence,
    deserialize,
    load,
    save,
    serialize,
)
from .poses import PoseFrame, SignAnnotation, load_video_frames, parse_pose_frames, read_annotations
from .runner import Manifest, run_all
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

__all__ = [
    "ChecksumError",
    "DEFAULT_FRAMES",
    "DatasetBundle",
    "FormatError",
    "Manifest",
    "PipelineError",
    "PoseFrame",
    "SignAnnotation",
    "SkeletonSequence",
    "deserialize",
    "filter_keypoints",
    "load",
    "load_video_frames",
    "normalize_length",
    "parse_pose_frames",
    "read_annotations",
    "restrict_glosses",
    "run_all",
    "save",
    "segment_samples",
    "select_dominant_articulation",
    "serialize",
    "split_dataset",
]
