"""Skeleton samples, dataset bundles and the ``STGS`` binary format.

Byte layout (little-endian)::

    magic        4 bytes   b"STGS"
    version      u16       1
    flags        u16       bits 0-1: split tag (0 none, 1 train, 2 test)
    layout       u32 length + UTF-8 JSON layout descriptor (may be empty)
    label map    u32 length + UTF-8 JSON text:
                 {"labels": [...], "provenance": {...}, "samples": {...}}
    count        u32
    per sample:
        label    u32
        id       u32 length + UTF-8 bytes
        T, V, C  3 x u16
        frames   T*V*C float32, row-major (frame, joint, channel)
    crc32        u32 over every preceding byte
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

MAGIC = b"STGS"
VERSION = 1
SPLIT_TAGS = {None: 0, "train": 1, "test": 2}
_TAG_NAMES = {v: k for k, v in SPLIT_TAGS.items()}


class FormatError(ValueError):
    """Raised for unreadable or corrupted dataset files."""


class ChecksumError(FormatError):
    pass


@dataclass
class SkeletonSequence:
    """One sample: ``frames`` is ``T x V x C`` (x, y, confidence)."""

    frames: np.ndarray
    label: int
    sample_id: str
    signer_id: str | None = None
    articulation_id: str | None = None

    def __post_init__(self) -> None:
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise ValueError(f"sample {self.sample_id!r}: frames must be T x V x C with T >= 1")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def replace_frames(self, frames: np.ndarray) -> "SkeletonSequence":
        return SkeletonSequence(frames, self.label, self.sample_id, self.signer_id, self.articulation_id)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SkeletonSequence):
            return NotImplemented
        return (
            self.label == other.label
            and self.sample_id == other.sample_id
            and self.signer_id == other.signer_id
            and self.articulation_id == other.articulation_id
            and self.frames.shape == other.frames.shape
            and self.frames.tobytes() == other.frames.tobytes()
        )


@dataclass
class DatasetBundle:
    samples: list[SkeletonSequence]
    label_map: list[str]
    layout: dict[str, Any] | None = None
    split: str | None = None
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.split not in SPLIT_TAGS:
            raise ValueError(f"split must be one of {list(SPLIT_TAGS)}, got {self.split!r}")
        if len(set(self.label_map)) != len(self.label_map):
            raise ValueError("label map contains duplicate glosses")
        for s in self.samples:
            if not 0 <= s.label < len(self.label_map):
                raise ValueError(f"sample {s.sample_id!r} has label {s.label} outside the label map")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def num_classes(self) -> int:
        return len(self.label_map)

    def label_id(self, gloss: str) -> int:
        return self.label_map.index(gloss)

    def shape(self) -> tuple[int, int, int] | None:
        """Common ``(T, V, C)`` of all samples, or None if they differ."""
        shapes = {s.frames.shape for s in self.samples}
        return shapes.pop() if len(shapes) == 1 else None

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked ``(N, C, T, V)`` data and ``(N,)`` labels for a fixed-length bundle."""
        if self.shape() is None:
            raise ValueError("samples do not share one (T, V, C) shape")
        data = np.stack([s.frames for s in self.samples]).transpose(0, 3, 1, 2)
        labels = np.array([s.label for s in self.samples], dtype=np.int64)
        return np.ascontiguousarray(data), labels

    def histogram(self) -> list[int]:
        counts = [0] * self.num_classes
        for s in self.samples:
            counts[s.label] += 1
        return counts

    def with_samples(self, samples: list[SkeletonSequence], **changes: Any) -> "DatasetBundle":
        fields = dict(label_map=self.label_map, layout=self.layout, split=self.split, provenance=dict(self.provenance))
        fields.update(changes)
        return DatasetBundle(samples, **fields)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DatasetBundle):
            return NotImplemented
        return (
            self.label_map == other.label_map
            and self.layout == other.layout
            and self.split == other.split
            and self.provenance == other.provenance
            and self.samples == other.samples
        )


def _dump_json(doc: Any) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _sample_meta(samples: list[SkeletonSequence]) -> dict[str, dict[str, str]]:
    meta = {}
    for s in samples:
        entry = {}
        if s.signer_id is not None:
            entry["signer"] = s.signer_id
        if s.articulation_id is not None:
            entry["articulation"] = s.articulation_id
        if entry:
            meta[s.sample_id] = entry
    return meta


def serialize(bundle: DatasetBundle) -> bytes:
    ids = [s.sample_id for s in bundle.samples]
    if len(set(ids)) != len(ids):
        raise ValueError("sample ids must be unique")
    layout = _dump_json(bundle.layout) if bundle.layout is not None else b""
    header = {"labels": list(bundle.label_map), "provenance": bundle.provenance}
    meta = _sample_meta(bundle.samples)
    if meta:
        header["samples"] = meta
    labels = _dump_json(header)
    parts = [
        MAGIC,
        struct.pack("<HH", VERSION, SPLIT_TAGS[bundle.split]),
        struct.pack("<I", len(layout)), layout,
        struct.pack("<I", len(labels)), labels,
        struct.pack("<I", len(bundle.samples)),
    ]
    for s in bundle.samples:
        sid = s.sample_id.encode("utf-8")
        t, v, c = s.frames.shape
        if max(t, v, c) > 0xFFFF:
            raise ValueError(f"sample {s.sample_id!r} dimensions exceed u16")
        parts.append(struct.pack("<II", s.label, len(sid)) + sid)
        parts.append(struct.pack("<HHH", t, v, c))
        parts.append(s.frames.astype("<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize(buf: bytes) -> DatasetBundle:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FormatError("bad magic: not an STGS dataset")
    if len(buf) < 8:
        raise FormatError("truncated header")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    if len(buf) < 12:
        raise FormatError("truncated payload")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError("CRC32 mismatch: the file is corrupted or truncated")
    view = memoryview(body)
    pos = 8

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise FormatError("truncated payload")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    (flags,) = struct.unpack_from("<H", buf, 6)
    if flags & 0x3 not in _TAG_NAMES:
        raise FormatError(f"unknown split tag {flags & 0x3}")
    (n,) = struct.unpack("<I", take(4))
    layout_raw = bytes(take(n))
    (n,) = struct.unpack("<I", take(4))
    try:
        layout = json.loads(layout_raw) if layout_raw else None
        header = json.loads(bytes(take(n)))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed text section: {exc}") from None
    meta = header.get("samples", {})
    (count,) = struct.unpack("<I", take(4))
    samples = []
    for _ in range(count):
        label, id_len = struct.unpack("<II", take(8))
        sid = bytes(take(id_len)).decode("utf-8")
        t, v, c = struct.unpack("<HHH", take(6))
        frames = np.frombuffer(take(4 * t * v * c), dtype="<f4").reshape(t, v, c)
        entry = meta.get(sid, {})
        samples.append(SkeletonSequence(frames.copy(), label, sid, entry.get("signer"), entry.get("articulation")))
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} unexpected bytes before the checksum")
    try:
        return DatasetBundle(
            samples, list(header["labels"]), layout, _TAG_NAMES[flags & 0x3], header.get("provenance", {})
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"inconsistent dataset: {exc}") from None


def save(path: str | Path, bundle: DatasetBundle) -> None:
    Path(path).write_bytes(serialize(bundle))


def load(path: str | Path) -> DatasetBundle:
    return deserialize(Path(path).read_bytes())

