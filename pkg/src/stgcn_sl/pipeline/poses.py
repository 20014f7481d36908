"""Per-frame pose documents and sign annotation tables."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .bundle import FormatError

log = logging.getLogger(__name__)

ANNOTATION_FIELDS = ("label", "video_id", "start_frame", "end_frame", "signer_id", "articulation_id")


@dataclass(frozen=True)
class PoseFrame:
    frame_index: int
    keypoints: np.ndarray  # (P, 3): x, y, confidence; missing points are (0, 0, 0)
    person_id: int | None = 0

    @property
    def num_points(self) -> int:
        return self.keypoints.shape[0]


@dataclass(frozen=True)
class SignAnnotation:
    label: str
    video_id: str
    start_frame: int
    end_frame: int
    signer_id: str = ""
    articulation_id: str = ""

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("annotation label must not be empty")
        if self.start_frame > self.end_frame:
            raise ValueError(
                f"annotation {self.label!r} in {self.video_id!r}: start {self.start_frame} > end {self.end_frame}"
            )


def _parse_document(doc: Mapping[str, Any], keypoint_counts: Sequence[int]) -> PoseFrame:
    try:
        frame_index = doc["frame"]
        people = doc["people"]
    except (KeyError, TypeError):
        raise FormatError("pose document needs 'frame' and 'people' fields") from None
    if not isinstance(frame_index, int) or isinstance(frame_index, bool) or not isinstance(people, list):
        raise FormatError("pose document has a non-integer frame or a non-list people field")
    if not people:
        return PoseFrame(frame_index, np.zeros((keypoint_counts[0], 3)), None)
    if len(people) > 1:
        log.warning("frame %d: %d people detected, keeping the first", frame_index, len(people))
    try:
        flat = np.asarray(people[0]["keypoints"], dtype=np.float64)
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"frame {frame_index}: person has no numeric 'keypoints' array") from None
    if flat.ndim != 1 or flat.size % 3:
        raise FormatError(f"frame {frame_index}: keypoints must be a flat list of (x, y, c) triples")
    count = flat.size // 3
    if count not in keypoint_counts:
        raise FormatError(f"frame {frame_index}: {count} keypoints, expected one of {list(keypoint_counts)}")
    points = flat.reshape(count, 3)
    if not np.isfinite(points).all():
        raise FormatError(f"frame {frame_index}: non-finite keypoint value")
    if (points[:, 2] < 0).any() or (points[:, 2] > 1).any():
        raise FormatError(f"frame {frame_index}: confidence outside [0, 1]")
    return PoseFrame(frame_index, points, 0)


def parse_pose_frames(documents: Iterable[Mapping[str, Any]], keypoint_counts: Sequence[int] = (130,)) -> list[PoseFrame]:
    """Parse pose documents of one video into frames sorted by frame index.

    Only the first detected person is kept; a frame without people becomes an
    all-zero frame of ``keypoint_counts[0]`` points.
    """
    if not keypoint_counts:
        raise ValueError("at least one keypoint count must be declared")
    frames = [_parse_document(doc, keypoint_counts) for doc in documents]
    frames.sort(key=lambda f: f.frame_index)
    for a, b in zip(frames, frames[1:]):
        if a.frame_index == b.frame_index:
            raise FormatError(f"duplicate frame index {a.frame_index}")
    sizes = {f.num_points for f in frames}
    if len(sizes) > 1:
        raise FormatError(f"frames of one video disagree on keypoint count: {sorted(sizes)}")
    return frames


def load_video_frames(directory: str | Path, keypoint_counts: Sequence[int] = (130,)) -> list[PoseFrame]:
    """Read every ``*.json`` pose document in ``directory``."""
    docs = []
    for path in sorted(Path(directory).glob("*.json")):
        try:
            docs.append(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path.name}: {exc}") from None
    return parse_pose_frames(docs, keypoint_counts)


def read_annotations(source: str | Path | io.TextIOBase) -> list[SignAnnotation]:
    """Read a delimiter-separated annotation table (delimiter sniffed from the header)."""
    text = Path(source).read_text() if isinstance(source, (str, Path)) else source.read()
    header_line = text.splitlines()[0] if text.strip() else ""
    try:
        dialect = csv.Sniffer().sniff(header_line, delimiters=",\t;|")
    except csv.Error:
        dialect = csv.excel
    reader = csv.DictReader(io.StringIO(text), dialect=dialect)
    missing = set(ANNOTATION_FIELDS) - set(reader.fieldnames or ())
    if missing:
        raise FormatError(f"annotation table is missing columns {sorted(missing)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        try:
            rows.append(
                SignAnnotation(
                    label=row["label"].strip(),
                    video_id=row["video_id"].strip(),
                    start_frame=int(row["start_frame"]),
                    end_frame=int(row["end_frame"]),
                    signer_id=row["signer_id"].strip(),
                    articulation_id=row["articulation_id"].strip(),
                )
            )
        except (TypeError, ValueError) as exc:
            raise FormatError(f"annotation line {lineno}: {exc}") from None
    return rows
