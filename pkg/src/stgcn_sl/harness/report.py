"""Human-readable summaries of dataset bundles and checkpoints."""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .. import checkpoint as ckpt
from ..pipeline import bundle as bundle_io


def describe_bundle(bundle: bundle_io.DatasetBundle, name: str) -> str:
    lines = [f"file: {name}", f"format: STGS v{bundle_io.VERSION}", f"split: {bundle.split or 'none'}"]
    if bundle.layout is not None:
        lay = bundle.layout
        lines.append(
            f"layout: {lay.get('name', 'custom')} (V={lay['num_nodes']}, center={lay['center']}, "
            f"edges={len(lay['edges'])})"
        )
    else:
        lines.append("layout: none")
    lines.append(f"samples: {len(bundle)}")
    shape = bundle.shape()
    if shape is not None:
        lines.append(f"shape: T={shape[0]} V={shape[1]} C={shape[2]}")
    elif bundle.samples:
        lengths = [s.num_frames for s in bundle.samples]
        lines.append(f"shape: variable T={min(lengths)}..{max(lengths)} V={bundle.samples[0].frames.shape[1]}")
    lines.append(f"classes: {bundle.num_classes}")
    lines.append("label histogram:")
    for i, (gloss, count) in enumerate(zip(bundle.label_map, bundle.histogram())):
        lines.append(f"  {i:4d} {gloss}: {count}")
    if bundle.provenance:
        lines.append("provenance:")
        for key in sorted(bundle.provenance):
            lines.append(f"  {key}: {bundle.provenance[key]}")
    return "\n".join(lines) + "\n"


def describe_checkpoint(params: dict[str, np.ndarray], name: str) -> str:
    lines = [f"file: {name}", f"format: STGW v{ckpt.VERSION}", f"parameters: {len(params)}"]
    total = 0
    for pname, value in params.items():
        total += value.size
        lines.append(f"  {pname}: {'x'.join(map(str, value.shape)) or 'scalar'}")
    lines.append(f"values: {total}")
    return "\n".join(lines) + "\n"


def inspect_file(path: str | Path) -> str:
    """Summary of an ``STGS`` bundle or ``STGW`` checkpoint, chosen by magic."""
    path = Path(path)
    buf = path.read_bytes()
    digest = f"size: {len(buf)} bytes\nsha256: {hashlib.sha256(buf).hexdigest()}\n"
    if buf[:4] == ckpt.MAGIC:
        text = describe_checkpoint(ckpt.loads(buf), path.name) + digest
        config = path.parent / "model.json"
        if config.is_file():
            text += "model config:\n" + "".join(f"  {line}\n" for line in config.read_text().splitlines())
        return text
    return describe_bundle(bundle_io.deserialize(buf), path.name) + digest
